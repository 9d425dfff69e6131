#ifndef NVSD_METRICS_HPP
#define NVSD_METRICS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "nvsd/error.hpp"

namespace nvsd {

inline constexpr int kReportSchemaVersion = 1;

enum class Level { L1D = 0, L1I = 1, L2 = 2, HMC = 3 };
inline constexpr std::array<Level, 4> kAllLevels{Level::L1D, Level::L1I, Level::L2, Level::HMC};

inline std::string_view level_name(Level l) {
    switch (l) {
        case Level::L1D: return "l1d";
        case Level::L1I: return "l1i";
        case Level::L2: return "l2";
        case Level::HMC: return "hmc";
    }
    return "?";
}

/// Demand and prefetch counters for one cache level. Prefetch traffic never
/// touches the demand_* fields. At L1D, a demand access served by a stream
/// buffer is a hit (counted in stream_buffer_hits as well).
struct LevelStats {
    std::uint64_t demand_accesses = 0;
    std::uint64_t demand_hits = 0;
    std::uint64_t demand_misses = 0;
    std::uint64_t stream_buffer_hits = 0;
    std::uint64_t prefetch_issued = 0;
    std::uint64_t prefetch_filled = 0;
    std::uint64_t useful_prefetch_hits = 0;
    std::uint64_t writebacks = 0;
    std::uint64_t summed_demand_hit_latency = 0;
    std::uint64_t summed_demand_miss_latency = 0;

    friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

struct MediaStats {
    std::uint64_t dram_reads = 0;
    std::uint64_t dram_writes = 0;
    std::uint64_t nvram_reads = 0;
    std::uint64_t nvram_writes = 0;

    friend bool operator==(const MediaStats&, const MediaStats&) = default;
};

struct DerivedLevel {
    std::optional<double> miss_ratio;
    std::optional<double> mpki;
    std::optional<double> avg_miss_latency;

    friend bool operator==(const DerivedLevel&, const DerivedLevel&) = default;
};

struct DerivedMetrics {
    std::array<DerivedLevel, 4> levels{};
    /// Mean latency over all L1 (data + instruction) demand accesses.
    std::optional<double> amat;

    friend bool operator==(const DerivedMetrics&, const DerivedMetrics&) = default;
};

struct RunReport {
    std::string label = "run";
    std::array<LevelStats, 4> levels{};
    MediaStats media;
    std::uint64_t records = 0;
    std::uint64_t total_instructions = 0;
    DerivedMetrics derived;
    /// Fully resolved configuration that produced this report (canonical JSON).
    std::string config;

    LevelStats& at(Level l) { return levels[static_cast<std::size_t>(l)]; }
    const LevelStats& at(Level l) const { return levels[static_cast<std::size_t>(l)]; }

    friend bool operator==(const RunReport&, const RunReport&) = default;
};

// ---------------------------------------------------------------------------

inline double mpki(std::uint64_t misses, std::uint64_t instructions) {
    if (instructions == 0) throw ValidationError("mpki: instruction count is zero");
    return static_cast<double>(misses) * 1000.0 / static_cast<double>(instructions);
}

inline double amat(double access_time, double miss_ratio, double miss_latency) {
    if (!(miss_ratio >= 0.0 && miss_ratio <= 1.0)) {
        throw ContractViolation("amat: miss ratio outside [0, 1]");
    }
    if (miss_ratio == 0.0) return access_time;
    return access_time + miss_ratio * miss_latency;
}

struct AmatTerm {
    double access_time = 0.0;
    double miss_ratio = 0.0;  // ignored on the last level
};

/// AMAT expanded level by level: t0 + m0 * (t1 + m1 * (... + t_last)).
inline double amat_recursive(std::span<const AmatTerm> levels) {
    if (levels.empty()) throw ContractViolation("amat_recursive: no levels");
    double latency = levels.back().access_time;
    for (std::size_t i = levels.size() - 1; i-- > 0;) {
        latency = amat(levels[i].access_time, levels[i].miss_ratio, latency);
    }
    return latency;
}

/// Prefetch effectiveness from a pair of runs. Empty optionals mean "not
/// applicable" (zero denominator), which is distinct from a value of 0.
struct PrefetchEffect {
    std::optional<double> coverage;
    std::optional<double> accuracy;
    std::uint64_t misses_without = 0;
    std::uint64_t misses_with = 0;
    std::uint64_t issued = 0;

    /// Prefetching increased demand misses.
    bool pollution() const { return misses_with > misses_without; }
};

namespace detail {

// num/den, moved by at most two ulps so that q*den rounds to num, or failing
// that to the double just above num. Two such ratios over the same numerator
// therefore reproduce it within one ulp of each other.
inline double round_trip_ratio(double num, double den) {
    const double q = num / den;
    if (q * den == num) return q;
    const double above = std::nextafter(num, num < 0 ? -INFINITY : INFINITY);
    double c = q;
    for (int step = 0; step < 2; ++step) c = std::nextafter(c, -INFINITY);
    double fallback = q;
    for (int step = 0; step < 5; ++step, c = std::nextafter(c, INFINITY)) {
        const double p = c * den;
        if (p == num) return c;
        if (p == above) fallback = c;
    }
    return fallback;
}

}  // namespace detail

inline PrefetchEffect coverage_accuracy(std::uint64_t misses_without, std::uint64_t misses_with,
                                        std::uint64_t issued) {
    PrefetchEffect e{std::nullopt, std::nullopt, misses_without, misses_with, issued};
    // 1 - with/without, evaluated as avoided/without.
    const auto avoided = static_cast<double>(static_cast<std::int64_t>(misses_without) -
                                             static_cast<std::int64_t>(misses_with));
    if (misses_without != 0) e.coverage = detail::round_trip_ratio(avoided, static_cast<double>(misses_without));
    if (issued != 0) e.accuracy = detail::round_trip_ratio(avoided, static_cast<double>(issued));
    return e;
}

inline PrefetchEffect coverage_accuracy(const RunReport& baseline, const RunReport& with_pref, Level level) {
    return coverage_accuracy(baseline.at(level).demand_misses, with_pref.at(level).demand_misses,
                             with_pref.at(level).prefetch_issued);
}

// ---------------------------------------------------------------------------

inline DerivedMetrics compute_derived(const RunReport& r) {
    DerivedMetrics d;
    for (auto l : kAllLevels) {
        const auto& s = r.at(l);
        auto& out = d.levels[static_cast<std::size_t>(l)];
        if (s.demand_accesses != 0) {
            out.miss_ratio = static_cast<double>(s.demand_misses) / static_cast<double>(s.demand_accesses);
        }
        if (r.total_instructions != 0) out.mpki = mpki(s.demand_misses, r.total_instructions);
        if (s.demand_misses != 0) {
            out.avg_miss_latency =
                static_cast<double>(s.summed_demand_miss_latency) / static_cast<double>(s.demand_misses);
        }
    }
    const auto& d1 = r.at(Level::L1D);
    const auto& i1 = r.at(Level::L1I);
    const std::uint64_t accesses = d1.demand_accesses + i1.demand_accesses;
    if (accesses != 0) {
        const std::uint64_t total = d1.summed_demand_hit_latency + d1.summed_demand_miss_latency +
                                    i1.summed_demand_hit_latency + i1.summed_demand_miss_latency;
        d.amat = static_cast<double>(total) / static_cast<double>(accesses);
    }
    return d;
}

inline void finalize(RunReport& r) { r.derived = compute_derived(r); }

/// Throws IntegrityError unless the counters obey their identities and the
/// stored derived block matches a fresh recomputation.
inline void check_consistency(const RunReport& r) {
    for (auto l : kAllLevels) {
        const auto& s = r.at(l);
        const std::string name(level_name(l));
        if (s.demand_hits + s.demand_misses != s.demand_accesses) {
            throw IntegrityError(name + ": hits + misses != accesses");
        }
        if (s.useful_prefetch_hits > s.prefetch_filled) {
            throw IntegrityError(name + ": more useful prefetch hits than prefetched blocks");
        }
        if (s.stream_buffer_hits > s.demand_hits) {
            throw IntegrityError(name + ": stream-buffer hits exceed demand hits");
        }
    }
    if (!(compute_derived(r) == r.derived)) {
        throw IntegrityError("derived metrics do not match the raw counters");
    }
}

}  // namespace nvsd

#endif
