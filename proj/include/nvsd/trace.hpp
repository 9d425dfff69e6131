#ifndef NVSD_TRACE_HPP
#define NVSD_TRACE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nvsd/error.hpp"

namespace nvsd {

inline constexpr std::uint64_t kBlockBytes = 64;

enum class AccessKind : std::uint8_t { Read = 0, Write = 1, IFetch = 2 };

inline char kind_code(AccessKind k) {
    switch (k) {
        case AccessKind::Read: return 'R';
        case AccessKind::Write: return 'W';
        case AccessKind::IFetch: return 'I';
    }
    return '?';
}

inline std::optional<AccessKind> kind_from_code(char c) {
    switch (c) {
        case 'R': return AccessKind::Read;
        case 'W': return AccessKind::Write;
        case 'I': return AccessKind::IFetch;
        default: return std::nullopt;
    }
}

/// One trace record. `icount` is cumulative, so the last record carries the
/// total committed-instruction count of the trace.
struct MemoryAccess {
    std::uint64_t icount = 0;
    AccessKind kind = AccessKind::Read;
    std::uint64_t addr = 0;
    std::uint64_t pc = 0;

    friend bool operator==(const MemoryAccess&, const MemoryAccess&) = default;
};

using Trace = std::vector<MemoryAccess>;

// ---------------------------------------------------------------------------
// Text format: `<icount> <R|W|I> <hex addr> <hex pc>`, `#` comments.

namespace detail {

inline std::optional<std::uint64_t> parse_u64(std::string_view tok, int base) {
    if (base == 16 && tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
        tok.remove_prefix(2);
    }
    if (tok.empty()) return std::nullopt;
    std::uint64_t value = 0;
    for (char c : tok) {
        int digit;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (base == 16 && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (base == 16 && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        else return std::nullopt;
        if (value > (UINT64_MAX - static_cast<std::uint64_t>(digit)) / static_cast<std::uint64_t>(base)) {
            return std::nullopt;
        }
        value = value * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(digit);
    }
    return value;
}

}  // namespace detail

inline Trace parse_text_trace(std::istream& in) {
    Trace out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;

        std::istringstream fields(line);
        std::string icount_tok, kind_tok, addr_tok, pc_tok, extra;
        if (!(fields >> icount_tok >> kind_tok >> addr_tok >> pc_tok) || (fields >> extra)) {
            throw ParseError(lineno, "expected `<icount> <R|W|I> <hex addr> <hex pc>`");
        }
        auto icount = detail::parse_u64(icount_tok, 10);
        if (!icount) throw ParseError(lineno, "bad instruction count '" + icount_tok + "'");
        auto kind = kind_tok.size() == 1 ? kind_from_code(kind_tok[0]) : std::nullopt;
        if (!kind) throw ParseError(lineno, "bad access kind '" + kind_tok + "'");
        auto addr = detail::parse_u64(addr_tok, 16);
        if (!addr) throw ParseError(lineno, "bad address '" + addr_tok + "'");
        auto pc = detail::parse_u64(pc_tok, 16);
        if (!pc) throw ParseError(lineno, "bad pc '" + pc_tok + "'");

        if (!out.empty() && *icount < out.back().icount) {
            throw ParseError(lineno, "instruction count regressed from " +
                                         std::to_string(out.back().icount) + " to " + std::to_string(*icount));
        }
        out.push_back({*icount, *kind, *addr, *pc});
    }
    return out;
}

inline Trace parse_text_trace(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_text_trace(in);
}

inline void write_text_trace(std::ostream& os, std::span<const MemoryAccess> trace) {
    for (const auto& r : trace) {
        os << r.icount << ' ' << kind_code(r.kind) << " 0x" << std::hex << r.addr << " 0x" << r.pc << std::dec
           << '\n';
    }
}

// ---------------------------------------------------------------------------
// Binary format: 25-byte little-endian records (icount, kind, addr, pc).

inline constexpr std::size_t kBinaryRecordBytes = 25;

inline std::vector<std::uint8_t> encode_binary(std::span<const MemoryAccess> trace) {
    std::vector<std::uint8_t> out;
    out.reserve(trace.size() * kBinaryRecordBytes);
    auto put64 = [&out](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    for (const auto& r : trace) {
        put64(r.icount);
        out.push_back(static_cast<std::uint8_t>(r.kind));
        put64(r.addr);
        put64(r.pc);
    }
    return out;
}

inline Trace decode_binary(std::span<const std::uint8_t> bytes) {
    Trace out;
    out.reserve(bytes.size() / kBinaryRecordBytes);
    auto get64 = [&bytes](std::size_t at) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
        return v;
    };
    std::size_t at = 0;
    for (; at + kBinaryRecordBytes <= bytes.size(); at += kBinaryRecordBytes) {
        if (bytes[at + 8] > static_cast<std::uint8_t>(AccessKind::IFetch)) {
            throw DecodeError(at + 8, "invalid access kind byte " + std::to_string(bytes[at + 8]));
        }
        out.push_back({get64(at), static_cast<AccessKind>(bytes[at + 8]), get64(at + 9), get64(at + 17)});
    }
    if (at != bytes.size()) {
        throw DecodeError(at, "truncated record (" + std::to_string(bytes.size() - at) + " trailing bytes)");
    }
    return out;
}

enum class TraceFormat { Text, Binary };

inline Trace read_trace_file(const std::string& path, TraceFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace file '" + path + "'");
    if (format == TraceFormat::Text) return parse_text_trace(in);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_binary(bytes);
}

inline void write_trace_file(const std::string& path, std::span<const MemoryAccess> trace, TraceFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    if (format == TraceFormat::Text) {
        write_text_trace(out, trace);
    } else {
        auto bytes = encode_binary(trace);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Synthetic workloads.

enum class TracePattern { Sequential, Strided, RandomUniform, Zipfian, PointerChase, KvMix };

struct TraceGenSpec {
    TracePattern pattern = TracePattern::Sequential;
    std::uint64_t base_addr = 0;
    std::uint64_t footprint = 1 << 20;
    std::uint64_t count = 1000;
    std::int64_t stride = 64;
    double zipf_exponent = 1.0;
    double read_ratio = 1.0;
    std::uint64_t value_size = 1024;
    double instrs_per_access = 4.0;
    std::uint64_t seed = 1;
};

inline void validate(const TraceGenSpec& s) {
    if (s.footprint == 0) throw ValidationError("trace generator: footprint must be > 0");
    if (s.count == 0) throw ValidationError("trace generator: count must be > 0");
    if (!(s.read_ratio >= 0.0 && s.read_ratio <= 1.0)) {
        throw ValidationError("trace generator: read_ratio must lie in [0, 1]");
    }
    if (!(s.instrs_per_access >= 1.0) || !std::isfinite(s.instrs_per_access)) {
        throw ValidationError("trace generator: instrs_per_access must be >= 1");
    }
    if (UINT64_MAX - s.base_addr < s.footprint) {
        throw ValidationError("trace generator: base_addr + footprint overflows");
    }
    switch (s.pattern) {
        case TracePattern::Strided:
            if (s.stride == 0) throw ValidationError("trace generator: stride must be non-zero");
            break;
        case TracePattern::KvMix:
            if (s.value_size == 0 || s.value_size % kBlockBytes != 0) {
                throw ValidationError("trace generator: value_size must be a positive multiple of 64");
            }
            if (s.value_size > s.footprint) {
                throw ValidationError("trace generator: value_size exceeds footprint");
            }
            [[fallthrough]];
        case TracePattern::Zipfian:
            if (!(s.zipf_exponent > 0.0) || !std::isfinite(s.zipf_exponent)) {
                throw ValidationError("trace generator: zipf_exponent must be > 0");
            }
            [[fallthrough]];
        default:
            if (s.pattern != TracePattern::Strided && s.footprint < kBlockBytes) {
                throw ValidationError("trace generator: footprint must hold at least one 64 B block");
            }
            if (s.pattern != TracePattern::Strided && s.base_addr % kBlockBytes != 0) {
                throw ValidationError("trace generator: base_addr must be 64 B aligned");
            }
    }
}

namespace detail {

/// Platform-stable variates on top of mt19937_64 (whose output sequence is
/// fixed by the standard, unlike the std distributions).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection keeps the result exactly uniform.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Geometric on {1, 2, ...} with the given mean.
    std::uint64_t geometric(double mean) {
        if (mean <= 1.0) return 1;
        const double p = 1.0 / mean;
        const double u = 1.0 - uniform();  // (0, 1]
        return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
    }

private:
    std::mt19937_64 engine_;
};

/// Inverse-CDF sampler over ranks 0..n-1 with P(k) proportional to (k+1)^-s.
class ZipfSampler {
public:
    ZipfSampler(std::uint64_t n, double exponent) : cdf_(n) {
        double acc = 0.0;
        for (std::uint64_t k = 0; k < n; ++k) {
            acc += std::pow(static_cast<double>(k + 1), -exponent);
            cdf_[k] = acc;
        }
        for (auto& c : cdf_) c /= acc;
    }

    std::uint64_t operator()(Rng& rng) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), rng.uniform());
        return std::min<std::uint64_t>(static_cast<std::uint64_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

/// Bijection on [0, n) spreading popular ranks across the footprint.
class Scatter {
public:
    explicit Scatter(std::uint64_t n) : n_(n) {
        mult_ = 0x9E3779B97F4A7C15ULL % n_;
        if (mult_ == 0) mult_ = 1;
        while (std::gcd(mult_, n_) != 1) ++mult_;
    }
    std::uint64_t operator()(std::uint64_t rank) const {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rank) * mult_) % n_);
    }

private:
    std::uint64_t n_;
    std::uint64_t mult_;
};

inline constexpr std::uint64_t kLoopPc = 0x400100;
inline constexpr std::uint64_t kGetPc = 0x401040;
inline constexpr std::uint64_t kSetPc = 0x402080;

}  // namespace detail

/// Deterministic synthetic trace; a pure function of `spec`.
inline Trace generate(const TraceGenSpec& spec) {
    validate(spec);
    detail::Rng rng(spec.seed);
    Trace out;
    out.reserve(spec.count);

    std::uint64_t icount = 0;
    auto emit = [&](std::uint64_t addr, AccessKind kind, std::uint64_t pc) {
        icount += rng.geometric(spec.instrs_per_access);
        out.push_back({icount, kind, addr, pc});
    };
    auto pick_kind = [&] { return rng.uniform() < spec.read_ratio ? AccessKind::Read : AccessKind::Write; };

    const std::uint64_t blocks = spec.footprint / kBlockBytes;

    switch (spec.pattern) {
        case TracePattern::Sequential:
            for (std::uint64_t k = 0; k < spec.count; ++k) {
                auto kind = pick_kind();
                emit(spec.base_addr + (k % blocks) * kBlockBytes, kind, detail::kLoopPc);
            }
            break;
        case TracePattern::Strided: {
            const auto fp = static_cast<__int128>(spec.footprint);
            for (std::uint64_t k = 0; k < spec.count; ++k) {
                __int128 off = (static_cast<__int128>(k) * spec.stride) % fp;
                if (off < 0) off += fp;
                auto kind = pick_kind();
                emit(spec.base_addr + static_cast<std::uint64_t>(off), kind, detail::kLoopPc);
            }
            break;
        }
        case TracePattern::RandomUniform:
            for (std::uint64_t k = 0; k < spec.count; ++k) {
                auto block = rng.below(blocks);
                auto kind = pick_kind();
                emit(spec.base_addr + block * kBlockBytes, kind, detail::kLoopPc);
            }
            break;
        case TracePattern::Zipfian: {
            detail::ZipfSampler zipf(blocks, spec.zipf_exponent);
            detail::Scatter scatter(blocks);
            for (std::uint64_t k = 0; k < spec.count; ++k) {
                auto block = scatter(zipf(rng));
                auto kind = pick_kind();
                emit(spec.base_addr + block * kBlockBytes, kind, detail::kLoopPc);
            }
            break;
        }
        case TracePattern::PointerChase: {
            // Sattolo's shuffle: a single cycle through every block.
            std::vector<std::uint64_t> next(blocks);
            std::iota(next.begin(), next.end(), 0);
            for (std::uint64_t i = blocks - 1; i > 0; --i) std::swap(next[i], next[rng.below(i)]);
            std::uint64_t cur = 0;
            for (std::uint64_t k = 0; k < spec.count; ++k) {
                auto kind = pick_kind();
                emit(spec.base_addr + cur * kBlockBytes, kind, detail::kLoopPc);
                cur = next[cur];
            }
            break;
        }
        case TracePattern::KvMix: {
            const std::uint64_t objects = spec.footprint / spec.value_size;
            const std::uint64_t blocks_per_value = spec.value_size / kBlockBytes;
            detail::ZipfSampler zipf(objects, spec.zipf_exponent);
            detail::Scatter scatter(objects);
            while (out.size() < spec.count) {
                const std::uint64_t obj = scatter(zipf(rng));
                const bool get = rng.uniform() < spec.read_ratio;
                const std::uint64_t base = spec.base_addr + obj * spec.value_size;
                for (std::uint64_t b = 0; b < blocks_per_value && out.size() < spec.count; ++b) {
                    emit(base + b * kBlockBytes, get ? AccessKind::Read : AccessKind::Write,
                         get ? detail::kGetPc : detail::kSetPc);
                }
            }
            break;
        }
    }
    return out;
}

}  // namespace nvsd

#endif
