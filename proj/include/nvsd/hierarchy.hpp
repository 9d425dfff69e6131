#ifndef NVSD_HIERARCHY_HPP
#define NVSD_HIERARCHY_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvsd/cache.hpp"
#include "nvsd/error.hpp"
#include "nvsd/hmc.hpp"
#include "nvsd/metrics.hpp"
#include "nvsd/prefetch.hpp"
#include "nvsd/trace.hpp"

namespace nvsd {

enum class PrefetchSystem { NoPrefetch, Hmc, HmcPlusL1 };

inline std::string_view prefetch_system_name(PrefetchSystem s) {
    switch (s) {
        case PrefetchSystem::NoPrefetch: return "no_prefetch";
        case PrefetchSystem::Hmc: return "hmc";
        case PrefetchSystem::HmcPlusL1: return "hmc_plus_l1";
    }
    return "?";
}

struct L1PrefetchConfig {
    NextLineConfig next_line{NextLineTrigger::OnPrefetchHit, 2, PrefetchDirection::Both, 64};
    StrideConfig stride{4, 64, 64};
    StreamBufferConfig stream_buffers{8, 32};

    friend bool operator==(const L1PrefetchConfig&, const L1PrefetchConfig&) = default;
};

struct HmcPrefetchConfig {
    NextLineConfig next_line{NextLineTrigger::OnPrefetchHit, 2, PrefetchDirection::Ascending, 256};
    /// The HMC stride engine is off unless explicitly enabled.
    bool stride_enabled = false;
    StrideConfig stride{4, 64, 256};

    friend bool operator==(const HmcPrefetchConfig&, const HmcPrefetchConfig&) = default;
};

/// Defaults reproduce the evaluated NV-S-D machine.
struct HierarchyConfig {
    CacheGeometry l1d{32 * 1024, 64, 1, 8, 3, 3, true};
    CacheGeometry l1i{32 * 1024, 64, 1, 8, 3, 3, true};
    CacheGeometry l2{2 * 1024 * 1024, 64, 1, 16, 11, 11, true};
    HmcConfig hmc;
    PrefetchSystem prefetch_system = PrefetchSystem::HmcPlusL1;
    L1PrefetchConfig l1_prefetch;
    HmcPrefetchConfig hmc_prefetch;
    std::uint64_t address_space = 1ULL << 40;

    void validate() const {
        l1d.validate("l1d");
        l1i.validate("l1i");
        l2.validate("l2");
        hmc.validate();
        for (const auto* g : {&l1d, &l1i, &l2}) {
            if (g->block_size != 64 || g->blocks_per_line != 1) {
                throw ValidationError("l1/l2 caches must use 64 B blocks without sectoring");
            }
        }
        if (address_space == 0 || address_space % hmc.sector_bytes() != 0) {
            throw ValidationError("address_space must be a positive multiple of the HMC sector size");
        }
        if (l1_prefetch.next_line.granularity != l1d.line_bytes() ||
            l1_prefetch.stride.granularity != l1d.line_bytes()) {
            throw ValidationError("l1 prefetch granularity must equal the L1 line size");
        }
        if (hmc_prefetch.next_line.granularity != hmc.sector_bytes() ||
            hmc_prefetch.stride.granularity != hmc.sector_bytes()) {
            throw ValidationError("hmc prefetch granularity must equal the HMC sector size");
        }
    }

    friend bool operator==(const HierarchyConfig&, const HierarchyConfig&) = default;
};

enum class ServedLevel { L1, L1StreamBuffer, L2, HMC, DramCache, Nvram };

inline std::string_view served_level_name(ServedLevel s) {
    switch (s) {
        case ServedLevel::L1: return "l1";
        case ServedLevel::L1StreamBuffer: return "l1_stream_buffer";
        case ServedLevel::L2: return "l2";
        case ServedLevel::HMC: return "hmc";
        case ServedLevel::DramCache: return "dram_cache";
        case ServedLevel::Nvram: return "nvram";
    }
    return "?";
}

struct AccessOutcome {
    ServedLevel served_level = ServedLevel::L1;
    std::uint32_t total_latency = 0;
    bool l1_hit = false;
    bool stream_buffer_hit = false;
    bool l2_accessed = false;
    bool l2_hit = false;
    bool hmc_accessed = false;
    bool hmc_hit = false;
    /// Version stamp of the block after the access.
    std::uint64_t data = 0;
};

/// L1I/L1D, L2 and the HMC walked in order for one demand access at a time.
/// L1/L2 are non-inclusive and write-back; fills allocate on the way up.
class Hierarchy {
public:
    explicit Hierarchy(HierarchyConfig cfg)
        : cfg_((cfg.validate(), cfg)),
          l1d_(cfg_.l1d, "l1d"),
          l1i_(cfg_.l1i, "l1i"),
          l2_(cfg_.l2, "l2"),
          hmc_(cfg_.hmc),
          l1_next_line_(cfg_.l1_prefetch.next_line, cfg_.address_space),
          l1_next_line_buffers_(cfg_.l1_prefetch.stream_buffers),
          l1_stride_(cfg_.l1_prefetch.stride, cfg_.address_space, cfg_.l1_prefetch.stream_buffers),
          hmc_next_line_(cfg_.hmc_prefetch.next_line, cfg_.address_space),
          hmc_stride_(cfg_.hmc_prefetch.stride, cfg_.address_space) {}

    const HierarchyConfig& config() const { return cfg_; }
    const SetAssocCache& l1d() const { return l1d_; }
    const SetAssocCache& l1i() const { return l1i_; }
    const SetAssocCache& l2() const { return l2_; }
    const HybridMemoryController& hmc() const { return hmc_; }
    const StridePrefetcher& l1_stride() const { return l1_stride_; }
    const StreamBufferSet& l1_next_line_buffers() const { return l1_next_line_buffers_; }

    bool l1_prefetching() const { return cfg_.prefetch_system == PrefetchSystem::HmcPlusL1; }
    bool hmc_prefetching() const { return cfg_.prefetch_system != PrefetchSystem::NoPrefetch; }

    AccessOutcome access(const MemoryAccess& rec) {
        if (rec.addr >= cfg_.address_space) {
            throw ValidationError("address 0x" + hex(rec.addr) + " outside the physical address space");
        }
        const std::uint64_t block = rec.addr & ~(kBlockBytes - 1);
        const bool ifetch = rec.kind == AccessKind::IFetch;
        const bool write = rec.kind == AccessKind::Write;
        auto& l1 = ifetch ? l1i_ : l1d_;
        auto& st = ifetch ? stat(Level::L1I) : stat(Level::L1D);
        const bool l1_engines = l1_prefetching() && !ifetch;

        AccessOutcome out;
        ++st.demand_accesses;
        const auto res = l1.lookup(block, rec.kind, true);
        LookupOutcome l1_event = res.outcome;
        std::uint32_t lat = res.latency;
        std::vector<PrefetchRequest> l1_requests;

        if (is_hit(res.outcome)) {
            out.l1_hit = true;
            out.served_level = ServedLevel::L1;
            ++st.demand_hits;
            st.summed_demand_hit_latency += lat;
        } else {
            std::optional<std::uint64_t> sb_data;
            if (l1_engines) sb_data = probe_stream_buffers(block, rec.pc, l1_requests);
            if (sb_data) {
                lat += cfg_.l2.tag_latency;
                out.stream_buffer_hit = true;
                out.served_level = ServedLevel::L1StreamBuffer;
                l1_event = LookupOutcome::HitOnPrefetchedBlock;
                ++st.demand_hits;
                ++st.stream_buffer_hits;
                ++st.useful_prefetch_hits;
                st.summed_demand_hit_latency += lat;
                fill_l1(l1, st, block, *sb_data, write);
            } else {
                ++st.demand_misses;
                const std::uint64_t data = demand_from_l2(block, rec.pc, lat, out);
                fill_l1(l1, st, block, data, write);
                st.summed_demand_miss_latency += lat;
            }
        }
        if (write) l1.write_data(block, ++version_, true);
        out.data = l1.read_data(block);
        out.total_latency = lat;

        // Prefetches run after the demand access: HMC-level requests first
        // (they were triggered deeper in the demand path), then L1 requests.
        issue_hmc_prefetches();
        if (l1_engines) {
            auto stride_reqs = l1_stride_.observe(rec.pc, rec.addr);
            l1_requests.insert(l1_requests.end(), stride_reqs.begin(), stride_reqs.end());
            if (l1_event != LookupOutcome::HitDemand) {
                auto nl = l1_next_line_.observe(block, l1_event, rec.pc);
                l1_next_line_.attach_buffers(nl, l1_next_line_buffers_, block);
                l1_requests.insert(l1_requests.end(), nl.begin(), nl.end());
            }
            issue_l1_prefetches(l1_requests);
        }
        return out;
    }

    /// Counters so far; derived metrics are filled in.
    RunReport report(std::string label = "run") const {
        RunReport r;
        r.label = std::move(label);
        r.levels = stats_;
        r.at(Level::HMC) = hmc_.stats();
        r.media = hmc_.media();
        r.records = records_;
        r.total_instructions = instructions_;
        finalize(r);
        return r;
    }

    void note_instructions(std::uint64_t icount) {
        ++records_;
        instructions_ = icount;
    }

    /// Pushes all dirty data down to NVRAM (audit helper; no timing).
    void flush() {
        for (auto* l1 : {&l1d_, &l1i_}) {
            std::vector<std::uint64_t> dirty;
            l1->for_each_valid_line([&](std::uint64_t a, const CacheLine& l) {
                if (l.dirty) dirty.push_back(a);
            });
            for (auto a : dirty) {
                auto v = l1->invalidate_line(a);
                l2_writeback(a, v->data[0]);
            }
        }
        std::vector<std::uint64_t> dirty;
        l2_.for_each_valid_line([&](std::uint64_t a, const CacheLine& l) {
            if (l.dirty) dirty.push_back(a);
        });
        for (auto a : dirty) {
            auto v = l2_.invalidate_line(a);
            hmc_.writeback(a, v->data[0]);
        }
        hmc_.flush();
    }

private:
    static std::string hex(std::uint64_t v) {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s;
        do {
            s.insert(s.begin(), digits[v & 0xF]);
            v >>= 4;
        } while (v != 0);
        return s;
    }

    LevelStats& stat(Level l) { return stats_[static_cast<std::size_t>(l)]; }

    std::optional<std::uint64_t> probe_stream_buffers(std::uint64_t block, std::uint64_t pc,
                                                      std::vector<PrefetchRequest>& requests) {
        if (auto hit = l1_stride_.buffers().probe(block)) {
            if (auto r = l1_stride_.replenish(hit->handle, pc)) requests.push_back(*r);
            return hit->data;
        }
        if (auto hit = l1_next_line_buffers_.probe(block)) {
            if (cfg_.l1_prefetch.next_line.depth > 0 && l1_next_line_buffers_.alive(hit->handle)) {
                const std::uint64_t a = l1_next_line_buffers_.buffer(hit->handle).next_addr;
                if (a < cfg_.address_space) {
                    l1_next_line_buffers_.advance(hit->handle);
                    requests.push_back({a, PrefetchOrigin::NextLine, pc, hit->handle});
                }
            }
            return hit->data;
        }
        return std::nullopt;
    }

    std::uint64_t demand_from_l2(std::uint64_t block, std::uint64_t pc, std::uint32_t& lat, AccessOutcome& out) {
        auto& st = stat(Level::L2);
        out.l2_accessed = true;
        ++st.demand_accesses;
        const auto res = l2_.lookup(block, AccessKind::Read, true);
        if (is_hit(res.outcome)) {
            lat += res.latency;
            out.l2_hit = true;
            out.served_level = ServedLevel::L2;
            ++st.demand_hits;
            st.summed_demand_hit_latency += res.latency;
            return l2_.read_data(block);
        }
        ++st.demand_misses;
        out.hmc_accessed = true;
        auto h = hmc_.demand_access(block, AccessKind::Read);
        lat += res.latency + h.latency;
        st.summed_demand_miss_latency += res.latency + h.latency;
        out.hmc_hit = h.served_by == ServedBy::HmcCache;
        out.served_level = h.served_by == ServedBy::HmcCache    ? ServedLevel::HMC
                           : h.served_by == ServedBy::DramCache ? ServedLevel::DramCache
                                                                : ServedLevel::Nvram;
        if (hmc_prefetching()) observe_hmc(block, h.cache_outcome, pc);

        auto fill = l2_.fill(block, FillScope::Block, false, false);
        l2_.write_data(block, h.data, false);
        if (fill.victim && fill.victim->has_dirty()) {
            ++st.writebacks;
            hmc_.writeback(fill.victim->line_addr, fill.victim->data[0]);
        }
        return h.data;
    }

    void fill_l1(SetAssocCache& l1, LevelStats& st, std::uint64_t block, std::uint64_t data, bool write) {
        auto fill = l1.fill(block, FillScope::Block, false, write);
        l1.write_data(block, data, false);
        if (fill.victim && fill.victim->has_dirty()) {
            ++st.writebacks;
            l2_writeback(fill.victim->line_addr, fill.victim->data[0]);
        }
    }

    void l2_writeback(std::uint64_t block, std::uint64_t data) {
        if (l2_.contains(block)) {
            l2_.lookup(block, AccessKind::Write, true);
        } else {
            auto fill = l2_.fill(block, FillScope::Block, false, true);
            if (fill.victim && fill.victim->has_dirty()) {
                ++stat(Level::L2).writebacks;
                hmc_.writeback(fill.victim->line_addr, fill.victim->data[0]);
            }
        }
        l2_.write_data(block, data, true);
    }

    void observe_hmc(std::uint64_t block, LookupOutcome outcome, std::uint64_t pc) {
        auto reqs = hmc_next_line_.observe(block, outcome, pc);
        if (cfg_.hmc_prefetch.stride_enabled) {
            auto s = hmc_stride_.observe(pc, block);
            reqs.insert(reqs.end(), s.begin(), s.end());
        }
        pending_hmc_.insert(pending_hmc_.end(), reqs.begin(), reqs.end());
    }

    void issue_hmc_prefetches() {
        if (pending_hmc_.empty()) return;
        auto admitted = hmc_filter_.admit(pending_hmc_, [this](std::uint64_t a) { return hmc_.cache().contains_line(a); });
        pending_hmc_.clear();
        for (const auto& r : admitted) {
            hmc_.prefetch(r.addr);
            hmc_filter_.complete(r.addr);
        }
    }

    void issue_l1_prefetches(const std::vector<PrefetchRequest>& requests) {
        if (requests.empty()) return;
        auto admitted = l1_filter_.admit(requests, [this](std::uint64_t a) {
            return l1d_.contains(a) || l1_stride_.buffers().contains(a) || l1_next_line_buffers_.contains(a);
        });
        auto& st = stat(Level::L1D);
        for (const auto& r : admitted) {
            ++st.prefetch_issued;
            const std::uint64_t data = l2_.contains(r.addr) ? l2_.read_data(r.addr) : hmc_.prefetch_read(r.addr);
            auto& buffers = r.origin == PrefetchOrigin::Stride ? l1_stride_.buffers() : l1_next_line_buffers_;
            if (r.stream && buffers.alive(*r.stream)) {
                buffers.fill(*r.stream, r.addr, data);
                ++st.prefetch_filled;
            } else if (!r.stream) {
                // No stream buffers configured: prefetch straight into L1D.
                auto fill = l1d_.fill(r.addr, FillScope::Block, true, false);
                l1d_.write_data(r.addr, data, false);
                ++st.prefetch_filled;
                if (fill.victim && fill.victim->has_dirty()) {
                    ++st.writebacks;
                    l2_writeback(fill.victim->line_addr, fill.victim->data[0]);
                }
            }
            l1_filter_.complete(r.addr);
        }
    }

    HierarchyConfig cfg_;
    SetAssocCache l1d_;
    SetAssocCache l1i_;
    SetAssocCache l2_;
    HybridMemoryController hmc_;

    NextLinePrefetcher l1_next_line_;
    StreamBufferSet l1_next_line_buffers_;
    StridePrefetcher l1_stride_;
    PrefetchFilter l1_filter_;

    NextLinePrefetcher hmc_next_line_;
    StridePrefetcher hmc_stride_;
    PrefetchFilter hmc_filter_;
    std::vector<PrefetchRequest> pending_hmc_;

    std::array<LevelStats, 4> stats_{};
    std::uint64_t records_ = 0;
    std::uint64_t instructions_ = 0;
    std::uint64_t version_ = 0;
};

/// Replays a whole trace. Errors name the offending record (0-based).
inline RunReport run(std::span<const MemoryAccess> trace, const HierarchyConfig& cfg, std::string label = "run") {
    Hierarchy h(cfg);
    std::uint64_t last_icount = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& rec = trace[i];
        if (rec.icount < last_icount) {
            throw ValidationError("record " + std::to_string(i) + ": instruction count regressed");
        }
        try {
            h.access(rec);
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(i) + ": " + e.what());
        }
        last_icount = rec.icount;
        h.note_instructions(rec.icount);
    }
    return h.report(std::move(label));
}

}  // namespace nvsd

#endif
