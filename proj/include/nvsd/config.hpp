#ifndef NVSD_CONFIG_HPP
#define NVSD_CONFIG_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nvsd/error.hpp"
#include "nvsd/hierarchy.hpp"
#include "nvsd/report.hpp"
#include "nvsd/trace.hpp"

namespace nvsd {

enum class RunMode { Single, Paired, Sweep };

struct TraceFileSource {
    std::string path;
    TraceFormat format = TraceFormat::Text;
};

struct SweepParam {
    std::string path;  // dotted, e.g. "prefetch.l1.stride.depth"
    std::vector<Json> values;
};

struct ExperimentConfig {
    RunMode mode = RunMode::Single;
    std::uint64_t seed = 1;
    std::variant<TraceGenSpec, TraceFileSource> trace = TraceGenSpec{};
    std::string output_path;  // empty: standard output
    ReportFormat output_format = ReportFormat::Json;
    HierarchyConfig hierarchy;
    std::vector<SweepParam> sweep;  // sorted by path
};

namespace detail {

template <typename E>
struct EnumName {
    E value;
    std::string_view name;
};

inline constexpr EnumName<RunMode> kModes[] = {
    {RunMode::Single, "single"}, {RunMode::Paired, "paired"}, {RunMode::Sweep, "sweep"}};
inline constexpr EnumName<TraceFormat> kTraceFormats[] = {{TraceFormat::Text, "text"}, {TraceFormat::Binary, "binary"}};
inline constexpr EnumName<ReportFormat> kReportFormats[] = {
    {ReportFormat::Csv, "csv"}, {ReportFormat::Json, "json"}, {ReportFormat::Human, "human"}};
inline constexpr EnumName<TracePattern> kPatterns[] = {
    {TracePattern::Sequential, "sequential"}, {TracePattern::Strided, "strided"},
    {TracePattern::RandomUniform, "random_uniform"}, {TracePattern::Zipfian, "zipfian"},
    {TracePattern::PointerChase, "pointer_chase"}, {TracePattern::KvMix, "kv_mix"}};
inline constexpr EnumName<PrefetchSystem> kSystems[] = {{PrefetchSystem::NoPrefetch, "no_prefetch"},
                                                        {PrefetchSystem::Hmc, "hmc"},
                                                        {PrefetchSystem::HmcPlusL1, "hmc_plus_l1"}};
inline constexpr EnumName<NextLineTrigger> kTriggers[] = {{NextLineTrigger::OnMiss, "on_miss"},
                                                          {NextLineTrigger::Always, "always"},
                                                          {NextLineTrigger::OnPrefetchHit, "on_prefetch_hit"}};
inline constexpr EnumName<PrefetchDirection> kDirections[] = {{PrefetchDirection::Ascending, "ascending"},
                                                              {PrefetchDirection::Both, "both"}};

template <typename E, std::size_t N>
std::string_view name_of(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table) {
        if (e.value == v) return e.name;
    }
    return "?";
}

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers (typos) can be rejected by finish().
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError("configuration key '" + label() + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void uint(const std::string& key, T& out) {
        if (const auto* v = raw(key)) {
            // Values built in code are signed even when non-negative.
            const bool ok = v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0);
            if (!ok) fail(key, "must be a non-negative integer");
            const auto x = v->get<std::uint64_t>();
            if (x > std::numeric_limits<T>::max()) fail(key, "is out of range");
            out = static_cast<T>(x);
        }
    }

    void int64(const std::string& key, std::int64_t& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_number_integer()) fail(key, "must be an integer");
            out = v->get<std::int64_t>();
        }
    }

    void real(const std::string& key, double& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_number()) fail(key, "must be a number");
            out = v->get<double>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_boolean()) fail(key, "must be true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_string()) fail(key, "must be a string");
            out = v->get<std::string>();
        }
    }

    template <typename E, std::size_t N>
    void enumeration(const std::string& key, const EnumName<E> (&table)[N], E& out) {
        if (const auto* v = raw(key)) {
            if (v->is_string()) {
                const auto s = v->get<std::string>();
                for (const auto& e : table) {
                    if (e.name == s) {
                        out = e.value;
                        return;
                    }
                }
            }
            std::string allowed;
            for (const auto& e : table) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
            fail(key, "must be one of: " + allowed);
        }
    }

    template <typename Fn>
    void object(const std::string& key, Fn&& fn) {
        if (const auto* v = raw(key)) {
            ObjectReader sub(*v, key_path(key));
            fn(sub);
            sub.finish();
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ValidationError("unknown configuration key '" + key_path(it.key()) + "'");
            }
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ValidationError("configuration key '" + key_path(key) + "' " + msg);
    }

private:
    std::string label() const { return path_.empty() ? "<root>" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Json geometry_json(const CacheGeometry& g) {
    Json j;
    j["size"] = g.total_size;
    j["block_size"] = g.block_size;
    j["blocks_per_line"] = g.blocks_per_line;
    j["ways"] = g.ways;
    j["tag_latency"] = g.tag_latency;
    j["data_latency"] = g.data_latency;
    j["write_back"] = g.write_back;
    return j;
}

inline void read_geometry(ObjectReader& r, CacheGeometry& g) {
    r.uint("size", g.total_size);
    r.uint("block_size", g.block_size);
    r.uint("blocks_per_line", g.blocks_per_line);
    r.uint("ways", g.ways);
    r.uint("tag_latency", g.tag_latency);
    r.uint("data_latency", g.data_latency);
    r.boolean("write_back", g.write_back);
}

inline Json next_line_json(const NextLineConfig& c) {
    Json j;
    j["trigger"] = name_of(kTriggers, c.trigger);
    j["depth"] = c.depth;
    j["direction"] = name_of(kDirections, c.direction);
    return j;
}

inline void read_next_line(ObjectReader& r, NextLineConfig& c) {
    r.enumeration("trigger", kTriggers, c.trigger);
    r.uint("depth", c.depth);
    r.enumeration("direction", kDirections, c.direction);
}

inline Json gen_json(const TraceGenSpec& s) {
    Json j;
    j["pattern"] = name_of(kPatterns, s.pattern);
    j["base_addr"] = s.base_addr;
    j["footprint"] = s.footprint;
    j["count"] = s.count;
    j["stride"] = s.stride;
    j["zipf_exponent"] = s.zipf_exponent;
    j["read_ratio"] = s.read_ratio;
    j["value_size"] = s.value_size;
    j["instrs_per_access"] = s.instrs_per_access;
    return j;
}

inline void read_gen(ObjectReader& r, TraceGenSpec& s) {
    r.enumeration("pattern", kPatterns, s.pattern);
    r.uint("base_addr", s.base_addr);
    r.uint("footprint", s.footprint);
    r.uint("count", s.count);
    r.int64("stride", s.stride);
    r.real("zipf_exponent", s.zipf_exponent);
    r.real("read_ratio", s.read_ratio);
    r.uint("value_size", s.value_size);
    r.real("instrs_per_access", s.instrs_per_access);
}

inline std::string dotted_to_pointer(const std::string& dotted) {
    std::string p;
    std::size_t start = 0;
    while (start <= dotted.size()) {
        const auto dot = dotted.find('.', start);
        const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ValidationError("malformed sweep parameter '" + dotted + "'");
        p += "/" + part;
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return p;
}

}  // namespace detail

/// Fully resolved configuration; every default is explicit.
inline Json config_to_json(const ExperimentConfig& c) {
    using namespace detail;
    Json j;
    j["mode"] = name_of(kModes, c.mode);
    j["seed"] = c.seed;
    Json trace;
    if (const auto* gen = std::get_if<TraceGenSpec>(&c.trace)) {
        trace["generate"] = gen_json(*gen);
    } else {
        const auto& f = std::get<TraceFileSource>(c.trace);
        trace["file"] = Json{{"path", f.path}, {"format", name_of(kTraceFormats, f.format)}};
    }
    j["trace"] = trace;
    j["output"] = Json{{"path", c.output_path}, {"format", name_of(kReportFormats, c.output_format)}};

    const auto& h = c.hierarchy;
    Json hier;
    hier["address_space"] = h.address_space;
    hier["l1d"] = geometry_json(h.l1d);
    hier["l1i"] = geometry_json(h.l1i);
    hier["l2"] = geometry_json(h.l2);
    Json hmc;
    hmc["cache"] = geometry_json(h.hmc.cache);
    hmc["directory_latency"] = h.hmc.directory_latency;
    hmc["dram"] = Json{{"size", h.hmc.dram.size},
                       {"ways", h.hmc.dram.ways},
                       {"channels", h.hmc.dram.channels},
                       {"read_latency", h.hmc.dram.read_latency},
                       {"write_latency", h.hmc.dram.write_latency}};
    hmc["nvram"] = Json{{"read_latency", h.hmc.nvram.read_latency}, {"write_latency", h.hmc.nvram.write_latency}};
    hmc["dram_allocate_on_demand_fill"] = h.hmc.dram_allocate_on_demand_fill;
    hier["hmc"] = hmc;
    j["hierarchy"] = hier;

    Json pf;
    pf["system"] = name_of(kSystems, h.prefetch_system);
    Json l1;
    l1["next_line"] = next_line_json(h.l1_prefetch.next_line);
    l1["stride"] = Json{{"depth", h.l1_prefetch.stride.depth}, {"table_size", h.l1_prefetch.stride.table_size}};
    l1["stream_buffers"] = Json{{"count", h.l1_prefetch.stream_buffers.count},
                                {"entries", h.l1_prefetch.stream_buffers.entries}};
    pf["l1"] = l1;
    Json hp;
    hp["next_line"] = next_line_json(h.hmc_prefetch.next_line);
    hp["stride"] = Json{{"enabled", h.hmc_prefetch.stride_enabled},
                        {"depth", h.hmc_prefetch.stride.depth},
                        {"table_size", h.hmc_prefetch.stride.table_size}};
    pf["hmc"] = hp;
    j["prefetch"] = pf;

    Json sweep = Json::object();
    for (const auto& p : c.sweep) sweep[p.path] = p.values;
    j["sweep"] = sweep;
    return j;
}

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ValidationError naming the offending key. Missing keys take defaults.
inline ExperimentConfig config_from_json(const Json& j) {
    using namespace detail;
    ExperimentConfig c;
    ObjectReader root(j, "");
    root.enumeration("mode", kModes, c.mode);
    root.uint("seed", c.seed);

    root.object("trace", [&](ObjectReader& t) {
        const bool has_file = t.has("file");
        const bool has_gen = t.has("generate");
        if (has_file == has_gen) {
            throw ValidationError("configuration key 'trace' must hold exactly one of 'file' or 'generate'");
        }
        if (has_gen) {
            TraceGenSpec gen;
            t.object("generate", [&](ObjectReader& g) { read_gen(g, gen); });
            c.trace = gen;
        } else {
            TraceFileSource f;
            t.object("file", [&](ObjectReader& r) {
                r.string("path", f.path);
                r.enumeration("format", kTraceFormats, f.format);
            });
            if (f.path.empty()) throw ValidationError("configuration key 'trace.file.path' must not be empty");
            c.trace = f;
        }
    });
    root.object("output", [&](ObjectReader& o) {
        o.string("path", c.output_path);
        o.enumeration("format", kReportFormats, c.output_format);
    });

    auto& h = c.hierarchy;
    root.object("hierarchy", [&](ObjectReader& r) {
        r.uint("address_space", h.address_space);
        r.object("l1d", [&](ObjectReader& g) { read_geometry(g, h.l1d); });
        r.object("l1i", [&](ObjectReader& g) { read_geometry(g, h.l1i); });
        r.object("l2", [&](ObjectReader& g) { read_geometry(g, h.l2); });
        r.object("hmc", [&](ObjectReader& m) {
            m.object("cache", [&](ObjectReader& g) { read_geometry(g, h.hmc.cache); });
            m.uint("directory_latency", h.hmc.directory_latency);
            m.object("dram", [&](ObjectReader& d) {
                d.uint("size", h.hmc.dram.size);
                d.uint("ways", h.hmc.dram.ways);
                d.uint("channels", h.hmc.dram.channels);
                d.uint("read_latency", h.hmc.dram.read_latency);
                d.uint("write_latency", h.hmc.dram.write_latency);
            });
            m.object("nvram", [&](ObjectReader& n) {
                n.uint("read_latency", h.hmc.nvram.read_latency);
                n.uint("write_latency", h.hmc.nvram.write_latency);
            });
            m.boolean("dram_allocate_on_demand_fill", h.hmc.dram_allocate_on_demand_fill);
        });
    });
    root.object("prefetch", [&](ObjectReader& p) {
        p.enumeration("system", kSystems, h.prefetch_system);
        p.object("l1", [&](ObjectReader& l1) {
            l1.object("next_line", [&](ObjectReader& n) { read_next_line(n, h.l1_prefetch.next_line); });
            l1.object("stride", [&](ObjectReader& s) {
                s.uint("depth", h.l1_prefetch.stride.depth);
                s.uint("table_size", h.l1_prefetch.stride.table_size);
            });
            l1.object("stream_buffers", [&](ObjectReader& b) {
                b.uint("count", h.l1_prefetch.stream_buffers.count);
                b.uint("entries", h.l1_prefetch.stream_buffers.entries);
            });
        });
        p.object("hmc", [&](ObjectReader& m) {
            m.object("next_line", [&](ObjectReader& n) { read_next_line(n, h.hmc_prefetch.next_line); });
            m.object("stride", [&](ObjectReader& s) {
                s.boolean("enabled", h.hmc_prefetch.stride_enabled);
                s.uint("depth", h.hmc_prefetch.stride.depth);
                s.uint("table_size", h.hmc_prefetch.stride.table_size);
            });
        });
    });
    if (const auto* sw = root.raw("sweep")) {
        if (!sw->is_object()) throw ValidationError("configuration key 'sweep' must be an object");
        for (auto it = sw->begin(); it != sw->end(); ++it) {
            if (!it.value().is_array() || it.value().empty()) {
                throw ValidationError("sweep parameter '" + it.key() + "' needs a non-empty list of values");
            }
            c.sweep.push_back({it.key(), std::vector<Json>(it.value().begin(), it.value().end())});
        }
        std::sort(c.sweep.begin(), c.sweep.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    }
    root.finish();

    // Prefetch granularity follows the cache line sizes.
    h.l1_prefetch.next_line.granularity = h.l1d.line_bytes();
    h.l1_prefetch.stride.granularity = h.l1d.line_bytes();
    h.hmc_prefetch.next_line.granularity = h.hmc.sector_bytes();
    h.hmc_prefetch.stride.granularity = h.hmc.sector_bytes();
    h.validate();
    if (auto* gen = std::get_if<TraceGenSpec>(&c.trace)) {
        gen->seed = c.seed;
        validate(*gen);
    }
    if (c.mode == RunMode::Sweep && c.sweep.empty()) {
        throw ValidationError("sweep mode needs at least one sweep parameter");
    }
    return c;
}

inline ExperimentConfig config_from_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("configuration is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_text(ss.str());
}

/// Copy of c with a different seed (generated traces follow it).
inline ExperimentConfig with_seed(ExperimentConfig c, std::uint64_t seed) {
    c.seed = seed;
    if (auto* gen = std::get_if<TraceGenSpec>(&c.trace)) gen->seed = seed;
    return c;
}

// ---------------------------------------------------------------------------
// Experiment execution.

inline Trace load_trace(const ExperimentConfig& c) {
    if (const auto* gen = std::get_if<TraceGenSpec>(&c.trace)) return generate(*gen);
    const auto& f = std::get<TraceFileSource>(c.trace);
    return read_trace_file(f.path, f.format);
}

/// The configuration embedded in a single-run report.
inline std::string embedded_config(ExperimentConfig c) {
    c.mode = RunMode::Single;
    c.sweep.clear();
    return config_to_json(c).dump();
}

inline RunReport run_on(const Trace& trace, const ExperimentConfig& c) {
    auto r = run(trace, c.hierarchy, std::string(prefetch_system_name(c.hierarchy.prefetch_system)));
    r.config = embedded_config(c);
    return r;
}

inline RunReport run_single(const ExperimentConfig& c) { return run_on(load_trace(c), c); }

/// NoPrefetch baseline and the configured system over one trace.
inline PairedReport run_paired(const ExperimentConfig& c) {
    const auto trace = load_trace(c);
    ExperimentConfig base = c;
    base.hierarchy.prefetch_system = PrefetchSystem::NoPrefetch;
    auto baseline = std::async(std::launch::async, [&] { return run_on(trace, base); });
    auto with_pref = run_on(trace, c);
    return make_paired(baseline.get(), std::move(with_pref));
}

struct SweepRow {
    std::vector<Json> values;
    RunReport report;
};

struct SweepResult {
    std::vector<std::string> params;
    std::vector<SweepRow> rows;
};

inline std::string describe_tuple(const std::vector<std::string>& params, const std::vector<Json>& values) {
    std::string s = "{";
    for (std::size_t i = 0; i < params.size(); ++i) {
        s += (i ? ", " : "") + params[i] + "=" + values[i].dump();
    }
    return s + "}";
}

/// Cartesian product of the sweep lists, first parameter (lexicographically)
/// varying slowest. Runs execute on `threads` workers; row order is fixed.
inline SweepResult run_sweep(const ExperimentConfig& c, unsigned threads = 0) {
    if (c.sweep.empty()) throw ValidationError("sweep needs at least one sweep parameter");
    ExperimentConfig base_cfg = c;
    base_cfg.mode = RunMode::Single;
    base_cfg.sweep.clear();
    const Json base = config_to_json(base_cfg);

    SweepResult result;
    std::vector<Json::json_pointer> pointers;
    for (const auto& p : c.sweep) {
        if (p.path == "mode" || p.path == "sweep" || p.path.rfind("sweep.", 0) == 0) {
            throw ValidationError("sweep parameter '" + p.path + "' cannot be swept");
        }
        Json::json_pointer ptr(detail::dotted_to_pointer(p.path));
        if (!base.contains(ptr) || base.at(ptr).is_object()) {
            throw ValidationError("unknown sweep parameter '" + p.path + "'");
        }
        result.params.push_back(p.path);
        pointers.push_back(ptr);
    }

    std::vector<std::vector<Json>> tuples{{}};
    for (const auto& p : c.sweep) {
        std::vector<std::vector<Json>> next;
        for (const auto& t : tuples) {
            for (const auto& v : p.values) {
                auto u = t;
                u.push_back(v);
                next.push_back(std::move(u));
            }
        }
        tuples = std::move(next);
    }

    std::vector<std::optional<RunReport>> reports(tuples.size());
    std::vector<std::exception_ptr> errors(tuples.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < tuples.size();) {
            try {
                Json j = base;
                for (std::size_t k = 0; k < pointers.size(); ++k) j[pointers[k]] = tuples[i][k];
                reports[i] = run_single(config_from_json(j));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, tuples.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < tuples.size(); ++i) {
        if (!errors[i]) continue;
        const std::string where = "sweep run " + describe_tuple(result.params, tuples[i]) + ": ";
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::Validation: throw ValidationError(where + e.what());
                case ErrorKind::Io: throw IoError(where + e.what());
                case ErrorKind::Integrity: throw IntegrityError(where + e.what());
            }
            throw;
        } catch (const std::exception& e) {
            throw IntegrityError(where + e.what());
        }
    }
    for (std::size_t i = 0; i < tuples.size(); ++i) result.rows.push_back({tuples[i], std::move(*reports[i])});
    return result;
}

inline std::string emit_sweep_csv(const SweepResult& s) {
    std::ostringstream os;
    os << "schema_version";
    for (const auto& p : s.params) os << ',' << p;
    os << ",system,records,instructions,amat";
    for (auto l : kAllLevels) {
        const auto n = level_name(l);
        os << ',' << n << "_accesses," << n << "_misses," << n << "_mpki," << n << "_prefetch_issued";
    }
    os << ",l1d_stream_buffer_hits,dram_reads,dram_writes,nvram_reads,nvram_writes\n";
    for (const auto& row : s.rows) {
        const auto& r = row.report;
        check_consistency(r);
        os << kReportSchemaVersion;
        for (const auto& v : row.values) os << ',' << (v.is_string() ? v.get<std::string>() : v.dump());
        os << ',' << r.label << ',' << r.records << ',' << r.total_instructions << ','
           << detail::opt_csv(r.derived.amat);
        for (auto l : kAllLevels) {
            const auto& st = r.at(l);
            os << ',' << st.demand_accesses << ',' << st.demand_misses << ','
               << detail::opt_csv(r.derived.levels[static_cast<std::size_t>(l)].mpki) << ','
               << st.prefetch_issued;
        }
        os << ',' << r.at(Level::L1D).stream_buffer_hits << ',' << r.media.dram_reads << ',' << r.media.dram_writes
           << ',' << r.media.nvram_reads << ',' << r.media.nvram_writes << '\n';
    }
    return os.str();
}

}  // namespace nvsd

#endif
