#ifndef NVSD_REPORT_HPP
#define NVSD_REPORT_HPP

#include <array>
#include <charconv>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nvsd/error.hpp"
#include "nvsd/metrics.hpp"

namespace nvsd {

using Json = nlohmann::ordered_json;

enum class ReportFormat { Csv, Json, Human };

inline std::optional<ReportFormat> report_format_from(std::string_view s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    if (s == "human") return ReportFormat::Human;
    return std::nullopt;
}

/// A baseline run and a prefetching run over the same trace.
struct PairedReport {
    RunReport baseline;
    RunReport with_prefetch;
    std::array<PrefetchEffect, 4> effects{};

    const PrefetchEffect& effect(Level l) const { return effects[static_cast<std::size_t>(l)]; }
};

inline PairedReport make_paired(RunReport baseline, RunReport with_prefetch) {
    PairedReport p{std::move(baseline), std::move(with_prefetch), {}};
    for (auto l : kAllLevels) {
        p.effects[static_cast<std::size_t>(l)] = coverage_accuracy(p.baseline, p.with_prefetch, l);
    }
    return p;
}

inline constexpr std::string_view kPairedLegend =
    "coverage = 1 - misses_with/misses_without; accuracy = (misses_without - misses_with)/issued; "
    "an L1D demand access served by a stream buffer counts as an avoided L1 miss; null = not applicable";

namespace detail {

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

inline Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::optional<double> opt_from(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline Json stats_json(const LevelStats& s) {
    Json j;
    j["demand_accesses"] = s.demand_accesses;
    j["demand_hits"] = s.demand_hits;
    j["demand_misses"] = s.demand_misses;
    j["stream_buffer_hits"] = s.stream_buffer_hits;
    j["prefetch_issued"] = s.prefetch_issued;
    j["prefetch_filled"] = s.prefetch_filled;
    j["useful_prefetch_hits"] = s.useful_prefetch_hits;
    j["writebacks"] = s.writebacks;
    j["summed_demand_hit_latency"] = s.summed_demand_hit_latency;
    j["summed_demand_miss_latency"] = s.summed_demand_miss_latency;
    return j;
}

inline LevelStats stats_from(const Json& j) {
    LevelStats s;
    s.demand_accesses = j.at("demand_accesses").get<std::uint64_t>();
    s.demand_hits = j.at("demand_hits").get<std::uint64_t>();
    s.demand_misses = j.at("demand_misses").get<std::uint64_t>();
    s.stream_buffer_hits = j.at("stream_buffer_hits").get<std::uint64_t>();
    s.prefetch_issued = j.at("prefetch_issued").get<std::uint64_t>();
    s.prefetch_filled = j.at("prefetch_filled").get<std::uint64_t>();
    s.useful_prefetch_hits = j.at("useful_prefetch_hits").get<std::uint64_t>();
    s.writebacks = j.at("writebacks").get<std::uint64_t>();
    s.summed_demand_hit_latency = j.at("summed_demand_hit_latency").get<std::uint64_t>();
    s.summed_demand_miss_latency = j.at("summed_demand_miss_latency").get<std::uint64_t>();
    return s;
}

inline Json effect_json(const PrefetchEffect& e) {
    Json j;
    j["coverage"] = opt_json(e.coverage);
    j["accuracy"] = opt_json(e.accuracy);
    j["misses_without"] = e.misses_without;
    j["misses_with"] = e.misses_with;
    j["issued"] = e.issued;
    j["pollution"] = e.pollution();
    return j;
}

}  // namespace detail

inline Json report_to_json(const RunReport& r) {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["label"] = r.label;
    j["records"] = r.records;
    j["total_instructions"] = r.total_instructions;
    Json levels = Json::object();
    for (auto l : kAllLevels) levels[std::string(level_name(l))] = detail::stats_json(r.at(l));
    j["levels"] = levels;
    Json media;
    media["dram_reads"] = r.media.dram_reads;
    media["dram_writes"] = r.media.dram_writes;
    media["nvram_reads"] = r.media.nvram_reads;
    media["nvram_writes"] = r.media.nvram_writes;
    j["media"] = media;
    Json derived;
    derived["amat"] = detail::opt_json(r.derived.amat);
    Json dl = Json::object();
    for (auto l : kAllLevels) {
        const auto& d = r.derived.levels[static_cast<std::size_t>(l)];
        Json e;
        e["miss_ratio"] = detail::opt_json(d.miss_ratio);
        e["mpki"] = detail::opt_json(d.mpki);
        e["avg_miss_latency"] = detail::opt_json(d.avg_miss_latency);
        dl[std::string(level_name(l))] = e;
    }
    derived["levels"] = dl;
    j["derived"] = derived;
    j["config"] = r.config.empty() ? Json(nullptr) : Json::parse(r.config);
    return j;
}

inline RunReport report_from_json(const Json& j) {
    try {
        if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
            throw ValidationError("unsupported report schema_version");
        }
        RunReport r;
        r.label = j.at("label").get<std::string>();
        r.records = j.at("records").get<std::uint64_t>();
        r.total_instructions = j.at("total_instructions").get<std::uint64_t>();
        for (auto l : kAllLevels) r.at(l) = detail::stats_from(j.at("levels").at(std::string(level_name(l))));
        const auto& m = j.at("media");
        r.media = {m.at("dram_reads").get<std::uint64_t>(), m.at("dram_writes").get<std::uint64_t>(),
                   m.at("nvram_reads").get<std::uint64_t>(), m.at("nvram_writes").get<std::uint64_t>()};
        const auto& d = j.at("derived");
        r.derived.amat = detail::opt_from(d.at("amat"));
        for (auto l : kAllLevels) {
            const auto& e = d.at("levels").at(std::string(level_name(l)));
            auto& out = r.derived.levels[static_cast<std::size_t>(l)];
            out.miss_ratio = detail::opt_from(e.at("miss_ratio"));
            out.mpki = detail::opt_from(e.at("mpki"));
            out.avg_miss_latency = detail::opt_from(e.at("avg_miss_latency"));
        }
        r.config = j.at("config").is_null() ? std::string() : j.at("config").dump();
        return r;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV: one row per (run, level) plus one summary row per run.

inline constexpr std::string_view kCsvHeader =
    "schema_version,run,level,accesses,hits,misses,stream_buffer_hits,prefetch_issued,prefetch_filled,"
    "useful_prefetch_hits,writebacks,hit_latency_sum,miss_latency_sum,miss_ratio,avg_miss_latency,mpki,"
    "coverage,accuracy,instructions,records,amat,dram_reads,dram_writes,nvram_reads,nvram_writes";

namespace detail {

inline void csv_rows(std::ostream& os, const RunReport& r, const PairedReport* paired) {
    for (auto l : kAllLevels) {
        const auto& s = r.at(l);
        const auto& d = r.derived.levels[static_cast<std::size_t>(l)];
        std::string coverage, accuracy;
        if (paired) {
            const auto& e = paired->effect(l);
            coverage = opt_csv(e.coverage);
            accuracy = opt_csv(e.accuracy);
        }
        os << kReportSchemaVersion << ',' << r.label << ',' << level_name(l) << ',' << s.demand_accesses << ','
           << s.demand_hits << ',' << s.demand_misses << ',' << s.stream_buffer_hits << ',' << s.prefetch_issued
           << ',' << s.prefetch_filled << ',' << s.useful_prefetch_hits << ',' << s.writebacks << ','
           << s.summed_demand_hit_latency << ',' << s.summed_demand_miss_latency << ',' << opt_csv(d.miss_ratio)
           << ',' << opt_csv(d.avg_miss_latency) << ',' << opt_csv(d.mpki) << ',' << coverage << ',' << accuracy
           << ",,,,,,,\n";
    }
    os << kReportSchemaVersion << ',' << r.label << ",summary" << std::string(15, ',') << ',' << r.total_instructions
       << ',' << r.records << ',' << opt_csv(r.derived.amat) << ',' << r.media.dram_reads << ','
       << r.media.dram_writes << ',' << r.media.nvram_reads << ',' << r.media.nvram_writes << '\n';
}

// Human output only; the machine formats keep the shortest round-trip form.
inline std::string rounded(const std::optional<double>& v) {
    if (!v) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << *v;
    return os.str();
}

inline void human(std::ostream& os, const RunReport& r) {
    os << "run " << r.label << ": " << r.records << " records, " << r.total_instructions << " instructions\n";
    os << "  AMAT: " << rounded(r.derived.amat) << " cycles\n";
    os << "  level  accesses      misses        mpki          avg-miss-lat  pf-issued\n";
    for (auto l : kAllLevels) {
        const auto& s = r.at(l);
        const auto& d = r.derived.levels[static_cast<std::size_t>(l)];
        os << "  " << std::left << std::setw(7) << level_name(l) << std::setw(14) << s.demand_accesses
           << std::setw(14) << s.demand_misses << std::setw(14) << rounded(d.mpki)
           << std::setw(14) << rounded(d.avg_miss_latency)
           << s.prefetch_issued << '\n';
    }
    os << "  media: dram r/w " << r.media.dram_reads << '/' << r.media.dram_writes << ", nvram r/w "
       << r.media.nvram_reads << '/' << r.media.nvram_writes << '\n';
}

}  // namespace detail

/// Renders a report after re-deriving its metrics; an inconsistent report
/// raises IntegrityError instead of being emitted.
inline std::string emit_report(const RunReport& r, ReportFormat format) {
    check_consistency(r);
    std::ostringstream os;
    switch (format) {
        case ReportFormat::Json: os << report_to_json(r).dump(2) << '\n'; break;
        case ReportFormat::Csv:
            os << kCsvHeader << '\n';
            detail::csv_rows(os, r, nullptr);
            break;
        case ReportFormat::Human: detail::human(os, r); break;
    }
    return os.str();
}

inline Json paired_to_json(const PairedReport& p) {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["baseline"] = report_to_json(p.baseline);
    j["with_prefetch"] = report_to_json(p.with_prefetch);
    Json eff = Json::object();
    for (auto l : kAllLevels) eff[std::string(level_name(l))] = detail::effect_json(p.effect(l));
    j["prefetch_effect"] = eff;
    j["legend"] = kPairedLegend;
    return j;
}

inline std::string emit_paired(const PairedReport& p, ReportFormat format) {
    check_consistency(p.baseline);
    check_consistency(p.with_prefetch);
    std::ostringstream os;
    switch (format) {
        case ReportFormat::Json: os << paired_to_json(p).dump(2) << '\n'; break;
        case ReportFormat::Csv:
            os << kCsvHeader << '\n';
            detail::csv_rows(os, p.baseline, nullptr);
            detail::csv_rows(os, p.with_prefetch, &p);
            break;
        case ReportFormat::Human:
            detail::human(os, p.baseline);
            detail::human(os, p.with_prefetch);
            os << "prefetch effect (" << kPairedLegend << ")\n";
            for (auto l : kAllLevels) {
                const auto& e = p.effect(l);
                os << "  " << std::left << std::setw(7) << level_name(l) << "coverage "
                   << detail::rounded(e.coverage) << ", accuracy " << detail::rounded(e.accuracy)
                   << (e.pollution() ? " (pollution)" : "") << '\n';
            }
            break;
    }
    return os.str();
}

/// One-line console summary.
inline std::string summary_line(const RunReport& r) {
    std::ostringstream os;
    os << r.label << ": AMAT=" << (r.derived.amat ? detail::format_double(*r.derived.amat) : "n/a");
    for (auto l : kAllLevels) {
        const auto& m = r.derived.levels[static_cast<std::size_t>(l)].mpki;
        os << " MPKI_" << level_name(l) << '=' << (m ? detail::format_double(*m) : "n/a");
    }
    return os.str();
}

}  // namespace nvsd

#endif
