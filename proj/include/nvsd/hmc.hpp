#ifndef NVSD_HMC_HPP
#define NVSD_HMC_HPP

#include <bit>
#include <cstdint>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nvsd/cache.hpp"
#include "nvsd/error.hpp"
#include "nvsd/metrics.hpp"

namespace nvsd {

struct DramCacheConfig {
    std::uint64_t size = 64ULL << 20;
    unsigned ways = 16;
    unsigned channels = 2;
    std::uint32_t read_latency = 33;
    std::uint32_t write_latency = 11;

    friend bool operator==(const DramCacheConfig&, const DramCacheConfig&) = default;
};

struct NvramConfig {
    std::uint32_t read_latency = 353;
    std::uint32_t write_latency = 86;

    friend bool operator==(const NvramConfig&, const NvramConfig&) = default;
};

struct HmcConfig {
    /// 8 MB of 256 B sectors (4 x 64 B blocks), 16-way, 17/17 cycles.
    CacheGeometry cache{8ULL << 20, 64, 4, 16, 17, 17, true};
    std::uint32_t directory_latency = 4;
    DramCacheConfig dram;
    NvramConfig nvram;
    /// Also stage NVRAM demand fills in the DRAM cache.
    bool dram_allocate_on_demand_fill = false;

    std::uint64_t sector_bytes() const { return cache.line_bytes(); }

    void validate() const {
        cache.validate("hmc.cache");
        dram_geometry().validate("hmc.dram");
        if (cache.block_size != 64) throw ValidationError("hmc.cache: block_size must be 64");
        if (dram.channels == 0) throw ValidationError("hmc.dram: channels must be positive");
    }

    /// The DRAM cache stores whole sectors of the HMC cache's shape.
    CacheGeometry dram_geometry() const {
        return {dram.size, cache.block_size, cache.blocks_per_line, dram.ways, 0, dram.read_latency, true};
    }

    friend bool operator==(const HmcConfig&, const HmcConfig&) = default;
};

enum class ServedBy { HmcCache, DramCache, Nvram };

inline std::string_view served_by_name(ServedBy s) {
    switch (s) {
        case ServedBy::HmcCache: return "hmc_cache";
        case ServedBy::DramCache: return "dram_cache";
        case ServedBy::Nvram: return "nvram";
    }
    return "?";
}

enum class HmcEventKind {
    HmcTagLookup,
    HmcDataRead,
    DirectoryLookup,
    DramRead,
    NvramRead,
    HmcFill,
    HmcEviction,
    DramWrite,
    DramEviction,
    NvramWrite,
    PrefetchIssue,
    PrefetchFill,
};

/// `cycles` is the component cost; only `critical` events add to the
/// latency seen by the demand request.
struct HmcEvent {
    HmcEventKind kind;
    std::uint64_t addr = 0;
    std::uint32_t cycles = 0;
    bool critical = false;
};

struct HmcAccessOutcome {
    ServedBy served_by = ServedBy::HmcCache;
    LookupOutcome cache_outcome = LookupOutcome::Miss;
    std::uint32_t latency = 0;
    std::uint64_t data = 0;
    std::vector<HmcEvent> events;
};

/// SRAM tag array for the DRAM cache: sector address -> (set, way).
class TagDirectory {
public:
    struct Slot {
        std::uint64_t set = 0;
        unsigned way = 0;
    };

    explicit TagDirectory(std::uint32_t lookup_latency) : latency_(lookup_latency) {}

    std::uint32_t lookup_latency() const { return latency_; }
    std::optional<Slot> find(std::uint64_t sector) const {
        auto it = map_.find(sector);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }
    bool present(std::uint64_t sector) const { return map_.contains(sector); }
    void insert(std::uint64_t sector, Slot slot) { map_[sector] = slot; }
    void erase(std::uint64_t sector) { map_.erase(sector); }
    std::size_t size() const { return map_.size(); }
    const std::unordered_map<std::uint64_t, Slot>& entries() const { return map_; }

private:
    std::uint32_t latency_;
    std::unordered_map<std::uint64_t, Slot> map_;
};

/// Hybrid memory controller: SRAM sector cache, tag directory, DRAM cache
/// and NVRAM backing store. Data is modeled as per-block version stamps so
/// that end-to-end write-back correctness can be audited.
class HybridMemoryController {
public:
    explicit HybridMemoryController(HmcConfig cfg)
        : cfg_((cfg.validate(), cfg)),
          cache_(cfg_.cache, "hmc.cache"),
          dram_(cfg_.dram_geometry(), "hmc.dram"),
          directory_(cfg_.directory_latency) {}

    const HmcConfig& config() const { return cfg_; }
    const SetAssocCache& cache() const { return cache_; }
    const SetAssocCache& dram() const { return dram_; }
    const TagDirectory& directory() const { return directory_; }
    const LevelStats& stats() const { return stats_; }
    const MediaStats& media() const { return media_; }

    std::uint64_t sector_of(std::uint64_t addr) const { return addr & ~(cfg_.sector_bytes() - 1); }

    /// DRAM channel a sector maps to (interleaved at sector granularity).
    unsigned channel_of(std::uint64_t addr) const {
        return static_cast<unsigned>((addr / cfg_.sector_bytes()) % cfg_.dram.channels);
    }

    HmcAccessOutcome demand_access(std::uint64_t block_addr, AccessKind kind) {
        if (block_addr % cfg_.cache.block_size != 0) {
            throw ContractViolation("hmc demand access to an unaligned address");
        }
        HmcAccessOutcome out;
        ++stats_.demand_accesses;

        const auto res = cache_.lookup(block_addr, kind, true);
        out.cache_outcome = res.outcome;
        out.events.push_back({HmcEventKind::HmcTagLookup, block_addr, cfg_.cache.tag_latency, true});
        if (is_hit(res.outcome)) {
            out.events.push_back({HmcEventKind::HmcDataRead, block_addr, cfg_.cache.data_latency, true});
            out.served_by = ServedBy::HmcCache;
            out.latency = cfg_.cache.hit_latency();
            out.data = cache_.read_data(block_addr);
            ++stats_.demand_hits;
            stats_.summed_demand_hit_latency += out.latency;
            if (res.outcome == LookupOutcome::HitOnPrefetchedBlock) ++stats_.useful_prefetch_hits;
            return out;
        }

        const std::uint64_t sector = sector_of(block_addr);
        std::uint32_t latency = cfg_.cache.tag_latency;
        out.served_by = fetch_sector(sector, true, out.events, latency);
        install_sector(sector, false, kind == AccessKind::Write, block_addr, out.events);
        if (cfg_.dram_allocate_on_demand_fill && out.served_by == ServedBy::Nvram) {
            dram_install(sector, fetched_, 0, cfg_.dram.write_latency, out.events);
        }
        out.latency = latency;
        out.data = cache_.read_data(block_addr);
        ++stats_.demand_misses;
        stats_.summed_demand_miss_latency += out.latency;
        return out;
    }

    /// Brings a sector into the HMC cache with prefetch bits set. Never
    /// allocates in the DRAM cache and never adds demand latency.
    std::vector<HmcEvent> prefetch(std::uint64_t sector_addr) {
        std::vector<HmcEvent> events;
        if (sector_addr % cfg_.sector_bytes() != 0) {
            throw ContractViolation("hmc prefetch of an unaligned sector");
        }
        if (cache_.contains_line(sector_addr)) return events;
        ++stats_.prefetch_issued;
        events.push_back({HmcEventKind::PrefetchIssue, sector_addr, 0, false});
        std::uint32_t unused = 0;
        fetch_sector(sector_addr, false, events, unused);
        const auto filled = install_sector(sector_addr, true, false, sector_addr, events);
        stats_.prefetch_filled += static_cast<std::uint64_t>(std::popcount(filled));
        events.push_back({HmcEventKind::PrefetchFill, sector_addr, 0, false});
        return events;
    }

    /// Read on behalf of an upper-level prefetcher: stateful, but neither a
    /// demand access nor an HMC-engine prefetch.
    std::uint64_t prefetch_read(std::uint64_t block_addr) {
        if (cache_.contains(block_addr)) return cache_.read_data(block_addr);
        std::vector<HmcEvent> events;
        std::uint32_t unused = 0;
        const std::uint64_t sector = sector_of(block_addr);
        fetch_sector(sector, false, events, unused);
        install_sector(sector, false, false, block_addr, events);
        return cache_.read_data(block_addr);
    }

    /// Dirty block arriving from L2. Write-allocates a single block on miss.
    std::vector<HmcEvent> writeback(std::uint64_t block_addr, std::uint64_t data) {
        std::vector<HmcEvent> events;
        if (!cache_.contains(block_addr)) {
            auto fill = cache_.fill(block_addr, FillScope::Block, false, true);
            if (fill.victim) evict(*fill.victim, events);
        } else {
            cache_.lookup(block_addr, AccessKind::Write, true);
        }
        cache_.write_data(block_addr, data, true);
        return events;
    }

    /// Allocates a sector in the DRAM cache (or refreshes it). `sector_data`
    /// supplies every block; `dirty` marks which of them are newer than NVRAM.
    std::vector<HmcEvent> dram_install(std::uint64_t sector_addr,
                                       const std::array<std::uint64_t, kMaxBlocksPerLine>& sector_data,
                                       std::uint8_t dirty) {
        std::vector<HmcEvent> events;
        dram_install(sector_addr, sector_data, dirty, cfg_.dram.write_latency, events);
        return events;
    }

    /// Writes every dirty byte down to NVRAM and empties both caches' dirty
    /// state. Used for audits; not part of the timing model.
    void flush() {
        std::vector<HmcEvent> events;
        std::vector<std::uint64_t> sectors;
        cache_.for_each_valid_line([&](std::uint64_t addr, const CacheLine& l) {
            if (l.dirty) sectors.push_back(addr);
        });
        for (auto s : sectors) {
            if (auto v = cache_.invalidate_line(s)) evict(*v, events);
        }
        sectors.clear();
        dram_.for_each_valid_line([&](std::uint64_t addr, const CacheLine& l) {
            if (l.dirty) sectors.push_back(addr);
        });
        for (auto s : sectors) {
            if (auto v = dram_.invalidate_line(s)) {
                directory_.erase(s);
                write_nvram(*v, events);
            }
        }
    }

    std::uint64_t nvram_data(std::uint64_t block_addr) const {
        auto it = nvram_.find(block_addr);
        return it == nvram_.end() ? 0 : it->second;
    }

    /// Latency implied by an event list under this configuration's constants.
    std::uint32_t latency_from_events(const std::vector<HmcEvent>& events) const {
        std::uint32_t sum = 0;
        for (const auto& e : events) {
            if (!e.critical) continue;
            switch (e.kind) {
                case HmcEventKind::HmcTagLookup: sum += cfg_.cache.tag_latency; break;
                case HmcEventKind::HmcDataRead: sum += cfg_.cache.data_latency; break;
                case HmcEventKind::DirectoryLookup: sum += cfg_.directory_latency; break;
                case HmcEventKind::DramRead: sum += cfg_.dram.read_latency; break;
                case HmcEventKind::NvramRead: sum += cfg_.nvram.read_latency; break;
                default: break;
            }
        }
        return sum;
    }

private:
    /// Reads a sector's data into fetched_ from the DRAM cache (on a
    /// directory hit) or NVRAM.
    ServedBy fetch_sector(std::uint64_t sector, bool critical, std::vector<HmcEvent>& events,
                          std::uint32_t& latency) {
        events.push_back({HmcEventKind::DirectoryLookup, sector, cfg_.directory_latency, critical});
        if (critical) latency += cfg_.directory_latency;
        const unsigned blocks = cfg_.cache.blocks_per_line;
        if (directory_.present(sector)) {
            ++media_.dram_reads;
            events.push_back({HmcEventKind::DramRead, sector, cfg_.dram.read_latency, critical});
            if (critical) latency += cfg_.dram.read_latency;
            for (unsigned b = 0; b < blocks; ++b) fetched_[b] = dram_.read_data(sector + b * cfg_.cache.block_size);
            return ServedBy::DramCache;
        }
        ++media_.nvram_reads;
        events.push_back({HmcEventKind::NvramRead, sector, cfg_.nvram.read_latency, critical});
        if (critical) latency += cfg_.nvram.read_latency;
        for (unsigned b = 0; b < blocks; ++b) fetched_[b] = nvram_data(sector + b * cfg_.cache.block_size);
        return ServedBy::Nvram;
    }

    /// Installs fetched_ as a whole sector; blocks already valid keep their
    /// (possibly newer) data. Returns the newly validated block mask.
    std::uint8_t install_sector(std::uint64_t sector, bool is_prefetch, bool write, std::uint64_t addr,
                                std::vector<HmcEvent>& events) {
        auto fill = cache_.fill(write ? addr : sector, FillScope::WholeLine, is_prefetch, write);
        events.push_back({HmcEventKind::HmcFill, sector, 0, false});
        for (unsigned b = 0; b < cfg_.cache.blocks_per_line; ++b) {
            if (fill.newly_valid & (1u << b)) {
                cache_.write_data(sector + b * cfg_.cache.block_size, fetched_[b], false);
            }
        }
        if (fill.victim) evict(*fill.victim, events);
        return fill.newly_valid;
    }

    void evict(const Victim& v, std::vector<HmcEvent>& events) {
        events.push_back({HmcEventKind::HmcEviction, v.line_addr, 0, false});
        if (!v.has_dirty()) return;
        ++stats_.writebacks;
        // Blocks the sector never held are merged from the current copy below.
        std::array<std::uint64_t, kMaxBlocksPerLine> merged{};
        const bool in_dram = directory_.present(v.line_addr);
        for (unsigned b = 0; b < cfg_.cache.blocks_per_line; ++b) {
            const std::uint64_t a = v.line_addr + b * cfg_.cache.block_size;
            if (v.valid & (1u << b)) merged[b] = v.data[b];
            else merged[b] = in_dram ? dram_.read_data(a) : nvram_data(a);
        }
        dram_install(v.line_addr, merged, v.dirty, cfg_.dram.write_latency, events);
    }

    void dram_install(std::uint64_t sector, const std::array<std::uint64_t, kMaxBlocksPerLine>& data,
                      std::uint8_t dirty, std::uint32_t write_cycles, std::vector<HmcEvent>& events) {
        ++media_.dram_writes;
        events.push_back({HmcEventKind::DramWrite, sector, write_cycles, false});
        if (directory_.present(sector)) {
            dram_.lookup(sector, AccessKind::Read, true);
            for (unsigned b = 0; b < cfg_.cache.blocks_per_line; ++b) {
                if (dirty & (1u << b)) dram_.write_data(sector + b * cfg_.cache.block_size, data[b], true);
            }
            return;
        }
        auto fill = dram_.fill(sector, FillScope::WholeLine, false, false);
        for (unsigned b = 0; b < cfg_.cache.blocks_per_line; ++b) {
            dram_.write_data(sector + b * cfg_.cache.block_size, data[b], (dirty & (1u << b)) != 0);
        }
        if (fill.victim) {
            directory_.erase(fill.victim->line_addr);
            events.push_back({HmcEventKind::DramEviction, fill.victim->line_addr, 0, false});
            if (fill.victim->has_dirty()) write_nvram(*fill.victim, events);
        }
        directory_.insert(sector, {dram_.map(sector).set, *dram_.way_of(sector)});
    }

    void write_nvram(const Victim& v, std::vector<HmcEvent>& events) {
        ++media_.nvram_writes;
        events.push_back({HmcEventKind::NvramWrite, v.line_addr, cfg_.nvram.write_latency, false});
        for (const auto& [addr, data] : v.dirty_blocks()) nvram_[addr] = data;
    }

    HmcConfig cfg_;
    SetAssocCache cache_;
    SetAssocCache dram_;
    TagDirectory directory_;
    std::unordered_map<std::uint64_t, std::uint64_t> nvram_;
    LevelStats stats_;
    MediaStats media_;
    std::array<std::uint64_t, kMaxBlocksPerLine> fetched_{};
};

}  // namespace nvsd

#endif
