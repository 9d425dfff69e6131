#ifndef NVSD_CACHE_HPP
#define NVSD_CACHE_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nvsd/error.hpp"
#include "nvsd/trace.hpp"

namespace nvsd {

inline constexpr unsigned kMaxBlocksPerLine = 8;

/// Geometry and timing of one set-associative cache. With blocks_per_line > 1
/// the cache is sectored: one tag covers several independently valid blocks.
struct CacheGeometry {
    std::uint64_t total_size = 32 * 1024;
    std::uint64_t block_size = 64;
    unsigned blocks_per_line = 1;
    unsigned ways = 8;
    std::uint32_t tag_latency = 3;
    std::uint32_t data_latency = 3;
    bool write_back = true;

    std::uint64_t line_bytes() const { return block_size * blocks_per_line; }
    std::uint64_t sets() const { return total_size / (line_bytes() * ways); }
    std::uint32_t hit_latency() const { return tag_latency + data_latency; }

    void validate(const std::string& name) const {
        auto fail = [&name](const std::string& msg) { throw ValidationError(name + ": " + msg); };
        if (!std::has_single_bit(total_size)) fail("total_size must be a power of two");
        if (!std::has_single_bit(block_size)) fail("block_size must be a power of two");
        if (blocks_per_line == 0 || blocks_per_line > kMaxBlocksPerLine || !std::has_single_bit(blocks_per_line)) {
            fail("blocks_per_line must be one of 1, 2, 4, 8");
        }
        if (ways == 0) fail("ways must be positive");
        if (total_size % (line_bytes() * ways) != 0 || sets() == 0) {
            fail("total_size must be a positive multiple of line size times ways");
        }
        if (!write_back) fail("only write-back caches are modeled");
    }

    friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

struct CacheLocation {
    std::uint64_t set = 0;
    std::uint64_t tag = 0;
    unsigned block = 0;

    friend bool operator==(const CacheLocation&, const CacheLocation&) = default;
};

/// Per-block state is held as bitmasks indexed by block-in-line. `data` holds
/// an opaque version stamp per block, used for end-to-end data audits.
struct CacheLine {
    std::uint64_t tag = 0;
    std::uint8_t valid = 0;
    std::uint8_t dirty = 0;
    std::uint8_t prefetched = 0;
    unsigned lru_rank = 0;
    std::array<std::uint64_t, kMaxBlocksPerLine> data{};

    bool any_valid() const { return valid != 0; }
};

enum class LookupOutcome { HitDemand, HitOnPrefetchedBlock, Miss };

inline bool is_hit(LookupOutcome o) { return o != LookupOutcome::Miss; }

struct LookupResult {
    LookupOutcome outcome = LookupOutcome::Miss;
    std::uint32_t latency = 0;
};

/// A line pushed out of the cache by a fill.
struct Victim {
    std::uint64_t line_addr = 0;
    std::uint64_t block_size = 0;
    std::uint8_t valid = 0;
    std::uint8_t dirty = 0;
    std::uint8_t unused_prefetch = 0;
    std::array<std::uint64_t, kMaxBlocksPerLine> data{};

    bool has_dirty() const { return dirty != 0; }

    /// (block address, data) for every dirty block, in address order.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> dirty_blocks() const {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
        for (unsigned b = 0; b < kMaxBlocksPerLine; ++b) {
            if (dirty & (1u << b)) out.emplace_back(line_addr + b * block_size, data[b]);
        }
        return out;
    }
};

enum class FillScope { Block, WholeLine };

struct FillResult {
    std::optional<Victim> victim;
    std::uint8_t newly_valid = 0;
};

/// Set-associative, write-back cache with true LRU replacement.
class SetAssocCache {
public:
    explicit SetAssocCache(CacheGeometry geometry, const std::string& name = "cache")
        : geom_(geometry), name_(name) {
        geom_.validate(name_);
        sets_ = geom_.sets();
        line_shift_ = static_cast<unsigned>(std::countr_zero(geom_.line_bytes()));
        block_shift_ = static_cast<unsigned>(std::countr_zero(geom_.block_size));
        lines_.resize(sets_ * geom_.ways);
        for (std::uint64_t s = 0; s < sets_; ++s) {
            for (unsigned w = 0; w < geom_.ways; ++w) line(s, w).lru_rank = w;
        }
    }

    const CacheGeometry& geometry() const { return geom_; }
    const std::string& name() const { return name_; }
    std::uint64_t sets() const { return sets_; }

    CacheLocation map(std::uint64_t addr) const {
        const std::uint64_t line_no = addr >> line_shift_;
        return {line_no % sets_, line_no / sets_,
                static_cast<unsigned>((addr & (geom_.line_bytes() - 1)) >> block_shift_)};
    }

    std::uint64_t line_address(std::uint64_t set, std::uint64_t tag) const {
        return (tag * sets_ + set) << line_shift_;
    }
    std::uint64_t line_base(std::uint64_t addr) const { return addr & ~(geom_.line_bytes() - 1); }
    std::uint64_t block_base(std::uint64_t addr) const { return addr & ~(geom_.block_size - 1); }

    LookupResult lookup(std::uint64_t addr, AccessKind kind, bool touch_lru) {
        const auto loc = map(addr);
        const auto way = find_way(loc);
        const std::uint8_t bit = static_cast<std::uint8_t>(1u << loc.block);
        if (!way || !(line(loc.set, *way).valid & bit)) {
            return {LookupOutcome::Miss, geom_.tag_latency};
        }
        auto& l = line(loc.set, *way);
        LookupOutcome outcome = LookupOutcome::HitDemand;
        if (l.prefetched & bit) {
            l.prefetched &= static_cast<std::uint8_t>(~bit);
            outcome = LookupOutcome::HitOnPrefetchedBlock;
        }
        if (kind == AccessKind::Write) l.dirty |= bit;
        if (touch_lru) touch(loc.set, *way);
        return {outcome, geom_.hit_latency()};
    }

    /// Installs addr's block (or its whole line). Blocks that are already
    /// valid keep their dirty state and data.
    FillResult fill(std::uint64_t addr, FillScope scope, bool is_prefetch, bool is_write_allocate) {
        const auto loc = map(addr);
        const std::uint8_t bit = static_cast<std::uint8_t>(1u << loc.block);
        const std::uint8_t scope_mask = scope == FillScope::WholeLine ? full_mask() : bit;

        FillResult result;
        auto way = find_way(loc);
        if (!way) {
            way = choose_victim(loc.set);
            auto& old = line(loc.set, *way);
            if (old.any_valid()) {
                Victim v;
                v.line_addr = line_address(loc.set, old.tag);
                v.block_size = geom_.block_size;
                v.valid = old.valid;
                v.dirty = old.dirty;
                v.unused_prefetch = old.prefetched;
                v.data = old.data;
                result.victim = v;
            }
            const unsigned rank = old.lru_rank;
            old = CacheLine{};
            old.tag = loc.tag;
            old.lru_rank = rank;
        }
        auto& l = line(loc.set, *way);
        result.newly_valid = static_cast<std::uint8_t>(scope_mask & ~l.valid);
        l.valid |= scope_mask;
        if (is_prefetch) l.prefetched |= result.newly_valid;
        if (is_write_allocate) {
            l.dirty |= bit;
            l.prefetched &= static_cast<std::uint8_t>(~bit);
        }
        touch(loc.set, *way);
        return result;
    }

    bool contains(std::uint64_t addr) const {
        const auto loc = map(addr);
        const auto way = find_way(loc);
        return way && (line(loc.set, *way).valid & (1u << loc.block));
    }

    /// True when every block of addr's line is valid.
    bool contains_line(std::uint64_t addr) const {
        const auto loc = map(addr);
        const auto way = find_way(loc);
        return way && line(loc.set, *way).valid == full_mask();
    }

    /// Way holding addr's tag, whatever its per-block state.
    std::optional<unsigned> way_of(std::uint64_t addr) const { return find_way(map(addr)); }

    /// Line holding addr's tag, whatever its per-block state.
    const CacheLine* find_line(std::uint64_t addr) const {
        const auto loc = map(addr);
        const auto way = find_way(loc);
        return way ? &line(loc.set, *way) : nullptr;
    }

    std::uint64_t read_data(std::uint64_t addr) const {
        const auto loc = map(addr);
        return line(loc.set, require_block(loc)).data[loc.block];
    }

    void write_data(std::uint64_t addr, std::uint64_t value, bool mark_dirty) {
        const auto loc = map(addr);
        auto& l = line(loc.set, require_block(loc));
        l.data[loc.block] = value;
        if (mark_dirty) l.dirty |= static_cast<std::uint8_t>(1u << loc.block);
    }

    /// Drops a line without writing it back; returns what was there.
    std::optional<Victim> invalidate_line(std::uint64_t addr) {
        const auto loc = map(addr);
        const auto way = find_way(loc);
        if (!way) return std::nullopt;
        auto& l = line(loc.set, *way);
        Victim v;
        v.line_addr = line_address(loc.set, l.tag);
        v.block_size = geom_.block_size;
        v.valid = l.valid;
        v.dirty = l.dirty;
        v.unused_prefetch = l.prefetched;
        v.data = l.data;
        const unsigned rank = l.lru_rank;
        l = CacheLine{};
        l.lru_rank = rank;
        return v;
    }

    const CacheLine& line(std::uint64_t set, unsigned way) const { return lines_[set * geom_.ways + way]; }

    std::uint8_t full_mask() const { return static_cast<std::uint8_t>((1u << geom_.blocks_per_line) - 1); }

    template <typename Fn>
    void for_each_valid_line(Fn&& fn) const {
        for (std::uint64_t s = 0; s < sets_; ++s) {
            for (unsigned w = 0; w < geom_.ways; ++w) {
                const auto& l = line(s, w);
                if (l.any_valid()) fn(line_address(s, l.tag), l);
            }
        }
    }

private:
    CacheLine& line(std::uint64_t set, unsigned way) { return lines_[set * geom_.ways + way]; }

    std::optional<unsigned> find_way(const CacheLocation& loc) const {
        for (unsigned w = 0; w < geom_.ways; ++w) {
            const auto& l = line(loc.set, w);
            if (l.any_valid() && l.tag == loc.tag) return w;
        }
        return std::nullopt;
    }

    unsigned require_block(const CacheLocation& loc) const {
        const auto way = find_way(loc);
        if (!way || !(line(loc.set, *way).valid & (1u << loc.block))) {
            throw ContractViolation(name_ + ": data access to a non-resident block");
        }
        return *way;
    }

    unsigned choose_victim(std::uint64_t set) const {
        unsigned lru_way = 0;
        for (unsigned w = 0; w < geom_.ways; ++w) {
            const auto& l = line(set, w);
            if (!l.any_valid()) return w;
            if (l.lru_rank == geom_.ways - 1) lru_way = w;
        }
        return lru_way;
    }

    void touch(std::uint64_t set, unsigned way) {
        const unsigned rank = line(set, way).lru_rank;
        for (unsigned w = 0; w < geom_.ways; ++w) {
            auto& l = line(set, w);
            if (l.lru_rank < rank) ++l.lru_rank;
        }
        line(set, way).lru_rank = 0;
    }

    CacheGeometry geom_;
    std::string name_;
    std::uint64_t sets_ = 0;
    unsigned line_shift_ = 0;
    unsigned block_shift_ = 0;
    std::vector<CacheLine> lines_;
};

}  // namespace nvsd

#endif
