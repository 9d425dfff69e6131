#ifndef NVSD_PREFETCH_HPP
#define NVSD_PREFETCH_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_set>
#include <vector>

#include "nvsd/cache.hpp"
#include "nvsd/error.hpp"

namespace nvsd {

enum class NextLineTrigger { OnMiss, Always, OnPrefetchHit };
enum class PrefetchDirection { Ascending, Both };
enum class PrefetchOrigin { NextLine, Stride };

struct NextLineConfig {
    NextLineTrigger trigger = NextLineTrigger::OnPrefetchHit;
    unsigned depth = 2;
    PrefetchDirection direction = PrefetchDirection::Ascending;
    std::uint64_t granularity = 64;

    friend bool operator==(const NextLineConfig&, const NextLineConfig&) = default;
};

struct StrideConfig {
    unsigned depth = 4;
    unsigned table_size = 64;
    std::uint64_t granularity = 64;

    friend bool operator==(const StrideConfig&, const StrideConfig&) = default;
};

struct StreamBufferConfig {
    unsigned count = 8;
    unsigned entries = 32;

    friend bool operator==(const StreamBufferConfig&, const StreamBufferConfig&) = default;
};

/// Identifies one allocation of a stream buffer; stale once the buffer is
/// reallocated.
struct StreamHandle {
    unsigned index = 0;
    std::uint64_t generation = 0;

    friend bool operator==(const StreamHandle&, const StreamHandle&) = default;
};

struct PrefetchRequest {
    std::uint64_t addr = 0;
    PrefetchOrigin origin = PrefetchOrigin::NextLine;
    std::uint64_t trigger_pc = 0;
    std::optional<StreamHandle> stream;

    friend bool operator==(const PrefetchRequest&, const PrefetchRequest&) = default;
};

namespace detail {

inline std::optional<std::uint64_t> offset_addr(std::uint64_t base, std::int64_t delta, std::uint64_t limit) {
    if (delta < 0 && base < static_cast<std::uint64_t>(-delta)) return std::nullopt;
    if (delta > 0 && UINT64_MAX - base < static_cast<std::uint64_t>(delta)) return std::nullopt;
    const std::uint64_t out = base + static_cast<std::uint64_t>(delta);
    if (out >= limit) return std::nullopt;
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct StreamEntry {
    std::uint64_t addr = 0;
    std::uint64_t data = 0;
};

struct StreamBuffer {
    bool valid = false;
    std::uint64_t generation = 0;
    std::uint64_t next_addr = 0;
    std::int64_t stride = 0;
    std::deque<StreamEntry> entries;
};

struct StreamProbe {
    StreamHandle handle;
    std::uint64_t data = 0;
};

/// A fixed pool of FIFO stream buffers with round-robin allocation.
class StreamBufferSet {
public:
    explicit StreamBufferSet(StreamBufferConfig cfg = {}) : cfg_(cfg), buffers_(cfg.count) {}

    const StreamBufferConfig& config() const { return cfg_; }
    bool enabled() const { return cfg_.count > 0 && cfg_.entries > 0; }
    const std::vector<StreamBuffer>& buffers() const { return buffers_; }

    StreamHandle allocate(std::uint64_t start, std::int64_t stride) {
        const unsigned idx = next_victim_;
        next_victim_ = (next_victim_ + 1) % cfg_.count;
        auto& b = buffers_[idx];
        b.valid = true;
        ++b.generation;
        b.next_addr = start;
        b.stride = stride;
        b.entries.clear();
        return {idx, b.generation};
    }

    bool alive(const StreamHandle& h) const {
        return h.index < buffers_.size() && buffers_[h.index].valid && buffers_[h.index].generation == h.generation;
    }

    const StreamBuffer& buffer(const StreamHandle& h) const { return buffers_[h.index]; }

    /// Returns the buffer's next address and advances it one stride.
    std::uint64_t advance(const StreamHandle& h) {
        auto& b = buffers_[h.index];
        const std::uint64_t addr = b.next_addr;
        b.next_addr += static_cast<std::uint64_t>(b.stride);
        return addr;
    }

    /// Finds a live buffer whose stream continues at addr.
    std::optional<StreamHandle> continuing(std::uint64_t addr, std::int64_t stride) const {
        for (unsigned i = 0; i < buffers_.size(); ++i) {
            const auto& b = buffers_[i];
            if (b.valid && b.stride == stride && b.next_addr == addr) return StreamHandle{i, b.generation};
        }
        return std::nullopt;
    }

    /// Appends a completed prefetch; the oldest entry falls out when full.
    void fill(const StreamHandle& h, std::uint64_t addr, std::uint64_t data) {
        if (!alive(h)) return;
        auto& b = buffers_[h.index];
        if (b.entries.size() >= cfg_.entries) b.entries.pop_front();
        b.entries.push_back({addr, data});
    }

    bool contains(std::uint64_t addr) const {
        for (const auto& b : buffers_) {
            if (!b.valid) continue;
            for (const auto& e : b.entries) {
                if (e.addr == addr) return true;
            }
        }
        return false;
    }

    /// On hit, retires every entry up to and including addr.
    std::optional<StreamProbe> probe(std::uint64_t addr) {
        for (unsigned i = 0; i < buffers_.size(); ++i) {
            auto& b = buffers_[i];
            if (!b.valid) continue;
            auto it = std::find_if(b.entries.begin(), b.entries.end(),
                                   [addr](const StreamEntry& e) { return e.addr == addr; });
            if (it == b.entries.end()) continue;
            StreamProbe hit{{i, b.generation}, it->data};
            b.entries.erase(b.entries.begin(), std::next(it));
            return hit;
        }
        return std::nullopt;
    }

    std::size_t live_buffers() const {
        return static_cast<std::size_t>(std::count_if(buffers_.begin(), buffers_.end(),
                                                      [](const StreamBuffer& b) { return b.valid; }));
    }

private:
    StreamBufferConfig cfg_;
    std::vector<StreamBuffer> buffers_;
    unsigned next_victim_ = 0;
};

// ---------------------------------------------------------------------------

/// Next-line prefetcher. Observes (address, lookup outcome) events at its
/// level and proposes the following `depth` lines.
class NextLinePrefetcher {
public:
    NextLinePrefetcher(NextLineConfig cfg, std::uint64_t address_limit) : cfg_(cfg), limit_(address_limit) {
        if (!std::has_single_bit(cfg_.granularity)) {
            throw ValidationError("next-line prefetcher: granularity must be a power of two");
        }
    }

    const NextLineConfig& config() const { return cfg_; }

    bool triggers(LookupOutcome outcome) const {
        switch (cfg_.trigger) {
            case NextLineTrigger::OnMiss: return outcome == LookupOutcome::Miss;
            case NextLineTrigger::Always: return true;
            case NextLineTrigger::OnPrefetchHit: return outcome != LookupOutcome::HitDemand;
        }
        return false;
    }

    std::vector<PrefetchRequest> observe(std::uint64_t addr, LookupOutcome outcome, std::uint64_t pc = 0) {
        const std::uint64_t line = addr & ~(cfg_.granularity - 1);
        const bool descending = track_direction(line);

        std::vector<PrefetchRequest> out;
        if (cfg_.depth == 0 || !triggers(outcome)) return out;
        const auto g = static_cast<std::int64_t>(cfg_.granularity);
        for (unsigned k = 1; k <= cfg_.depth; ++k) {
            if (auto a = detail::offset_addr(line, g * k, limit_)) out.push_back({*a, PrefetchOrigin::NextLine, pc, {}});
        }
        if (descending && cfg_.direction == PrefetchDirection::Both) {
            for (unsigned k = 1; k <= cfg_.depth; ++k) {
                if (auto a = detail::offset_addr(line, -g * k, limit_)) {
                    out.push_back({*a, PrefetchOrigin::NextLine, pc, {}});
                }
            }
        }
        return out;
    }

    /// Binds each request to a stream buffer: an existing stream that continues
    /// at the request's address, or a freshly allocated one.
    void attach_buffers(std::vector<PrefetchRequest>& reqs, StreamBufferSet& buffers, std::uint64_t trigger_line) {
        if (!buffers.enabled()) return;
        const auto g = static_cast<std::int64_t>(cfg_.granularity);
        for (auto& r : reqs) {
            if (buffers.contains(r.addr)) continue;
            const std::int64_t stride = r.addr > trigger_line ? g : -g;
            auto h = buffers.continuing(r.addr, stride);
            if (!h) h = buffers.allocate(r.addr, stride);
            buffers.advance(*h);
            r.stream = *h;
        }
    }

    /// True while the last two observed line deltas were both negative.
    bool descending_run() const { return prev_delta_ < 0 && last_delta_ < 0; }

private:
    bool track_direction(std::uint64_t line) {
        if (last_line_) {
            const auto delta = static_cast<std::int64_t>(line - *last_line_);
            if (delta != 0) {
                prev_delta_ = last_delta_;
                last_delta_ = delta;
            }
        }
        last_line_ = line;
        return descending_run();
    }

    NextLineConfig cfg_;
    std::uint64_t limit_;
    std::optional<std::uint64_t> last_line_;
    std::int64_t last_delta_ = 0;
    std::int64_t prev_delta_ = 0;
};

// ---------------------------------------------------------------------------

enum class StrideState { Initial, Transient, Steady };

struct StrideEntry {
    bool valid = false;
    std::uint16_t pc_tag = 0;
    std::uint64_t last_addr = 0;
    std::int64_t stride = 0;
    StrideState state = StrideState::Initial;
    std::optional<StreamHandle> stream;
};

inline std::uint16_t hash_pc(std::uint64_t pc) {
    return static_cast<std::uint16_t>(pc ^ (pc >> 16) ^ (pc >> 32) ^ (pc >> 48));
}

/// IP-indexed stride detector. An entry turns Steady once two consecutive
/// deltas agree; it then streams `depth` lines ahead, into a stream buffer
/// when one is attached, otherwise straight to the owning cache.
class StridePrefetcher {
public:
    StridePrefetcher(StrideConfig cfg, std::uint64_t address_limit, StreamBufferConfig buffers = {0, 0})
        : cfg_(cfg), limit_(address_limit), table_(cfg.table_size), buffers_(buffers) {
        if (cfg_.table_size == 0 || !std::has_single_bit(cfg_.table_size) || cfg_.table_size > 65536) {
            throw ValidationError("stride prefetcher: table_size must be a power of two <= 65536");
        }
        if (!std::has_single_bit(cfg_.granularity)) {
            throw ValidationError("stride prefetcher: granularity must be a power of two");
        }
    }

    const StrideConfig& config() const { return cfg_; }
    StreamBufferSet& buffers() { return buffers_; }
    const StreamBufferSet& buffers() const { return buffers_; }

    const StrideEntry& entry_for(std::uint64_t pc) const { return table_[hash_pc(pc) & (cfg_.table_size - 1)]; }

    std::vector<PrefetchRequest> observe(std::uint64_t pc, std::uint64_t addr) {
        const std::uint16_t tag = hash_pc(pc);
        auto& e = table_[tag & (cfg_.table_size - 1)];
        std::vector<PrefetchRequest> out;
        if (!e.valid || e.pc_tag != tag) {
            e = StrideEntry{true, tag, addr, 0, StrideState::Initial, std::nullopt};
            return out;
        }
        const auto delta = static_cast<std::int64_t>(addr - e.last_addr);
        e.last_addr = addr;
        if (delta == 0) return out;

        if (delta != e.stride) {
            e.stride = delta;
            e.state = e.state == StrideState::Transient ? StrideState::Initial : StrideState::Transient;
            e.stream.reset();
            return out;
        }
        const bool first_steady = e.state != StrideState::Steady;
        e.state = StrideState::Steady;
        if (cfg_.depth == 0) return out;

        const std::int64_t step = effective_step(e.stride);
        const std::uint64_t line = addr & ~(cfg_.granularity - 1);

        if (!buffers_.enabled()) {
            if (first_steady) {
                for (unsigned k = 1; k <= cfg_.depth; ++k) push(out, line, step * k, pc, std::nullopt);
            } else {
                push(out, line, step * cfg_.depth, pc, std::nullopt);
            }
            return out;
        }

        // Keep the stream `depth` lines ahead of the demand stream; a stream
        // that fell behind is restarted from the current access.
        std::int64_t ahead = 0;
        if (e.stream && buffers_.alive(*e.stream)) {
            ahead = static_cast<std::int64_t>(buffers_.buffer(*e.stream).next_addr - line) / step;
        }
        if (first_steady || ahead <= 0) {
            if (auto start = detail::offset_addr(line, step, limit_)) {
                e.stream = buffers_.allocate(*start, step);
                for (unsigned k = 1; k <= cfg_.depth; ++k) issue_from_buffer(out, *e.stream, pc);
            }
            return out;
        }
        if (ahead <= static_cast<std::int64_t>(cfg_.depth)) issue_from_buffer(out, *e.stream, pc);
        return out;
    }

    /// Request continuing the stream after a stream-buffer hit.
    std::optional<PrefetchRequest> replenish(const StreamHandle& h, std::uint64_t pc) {
        std::vector<PrefetchRequest> out;
        if (cfg_.depth == 0 || !buffers_.alive(h)) return std::nullopt;
        issue_from_buffer(out, h, pc);
        if (out.empty()) return std::nullopt;
        return out.front();
    }

private:
    std::int64_t effective_step(std::int64_t stride) const {
        const auto g = static_cast<std::int64_t>(cfg_.granularity);
        if (stride > -g && stride < g) return stride > 0 ? g : -g;
        return stride;
    }

    void push(std::vector<PrefetchRequest>& out, std::uint64_t line, std::int64_t delta, std::uint64_t pc,
              std::optional<StreamHandle> h) {
        if (auto a = detail::offset_addr(line, delta, limit_)) {
            out.push_back({*a & ~(cfg_.granularity - 1), PrefetchOrigin::Stride, pc, h});
        }
    }

    void issue_from_buffer(std::vector<PrefetchRequest>& out, const StreamHandle& h, std::uint64_t pc) {
        const std::uint64_t a = buffers_.buffer(h).next_addr;
        if (a >= limit_) return;
        buffers_.advance(h);
        out.push_back({a & ~(cfg_.granularity - 1), PrefetchOrigin::Stride, pc, h});
    }

    StrideConfig cfg_;
    std::uint64_t limit_;
    std::vector<StrideEntry> table_;
    StreamBufferSet buffers_;
};

// ---------------------------------------------------------------------------

/// Drops requests whose block is already resident or already in flight.
class PrefetchFilter {
public:
    template <typename IsResident>
    std::vector<PrefetchRequest> admit(const std::vector<PrefetchRequest>& reqs, IsResident&& is_resident) {
        std::vector<PrefetchRequest> out;
        for (const auto& r : reqs) {
            if (is_resident(r.addr) || in_flight_.contains(r.addr)) continue;
            in_flight_.insert(r.addr);
            out.push_back(r);
        }
        return out;
    }

    void complete(std::uint64_t addr) { in_flight_.erase(addr); }
    bool in_flight(std::uint64_t addr) const { return in_flight_.contains(addr); }
    std::size_t size() const { return in_flight_.size(); }

private:
    std::unordered_set<std::uint64_t> in_flight_;
};

}  // namespace nvsd

#endif
