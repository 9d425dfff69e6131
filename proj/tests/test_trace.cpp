#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "nvsd/trace.hpp"

using namespace nvsd;

TEST(TextTrace, ParsesOneRecord) {
    auto t = parse_text_trace("100 R 0x1000 0x400");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], (MemoryAccess{100, AccessKind::Read, 0x1000, 0x400}));
}

TEST(TextTrace, EmptyStreamGivesEmptyTrace) {
    EXPECT_TRUE(parse_text_trace("").empty());
    EXPECT_TRUE(parse_text_trace("\n# only a comment\n\n").empty());
}

TEST(TextTrace, SkipsCommentsAndBlankLines) {
    auto t = parse_text_trace("# header\n\n1 I 0x40 0x40\n  \n2 W 0x80 0x44\n");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].kind, AccessKind::IFetch);
    EXPECT_EQ(t[1].kind, AccessKind::Write);
}

TEST(TextTrace, IcountRegressionReportsLine) {
    try {
        parse_text_trace("100 R 0x1000 0x400\n90 W 0x2000 0x404");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(TextTrace, MalformedLinesReportLine) {
    for (const char* bad : {"1 X 0x10 0x4", "1 R zz 0x4", "1 R 0x10", "1 R 0x10 0x4 extra", "-1 R 0x10 0x4"}) {
        try {
            parse_text_trace(std::string("# c\n") + bad);
            FAIL() << "accepted: " << bad;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), 2u) << bad;
        }
    }
}

TEST(TextTrace, WriteThenParseRoundTrips) {
    TraceGenSpec s;
    s.pattern = TracePattern::KvMix;
    s.footprint = 1 << 16;
    s.read_ratio = 0.7;
    s.count = 500;
    const auto t = generate(s);
    std::ostringstream os;
    write_text_trace(os, t);
    EXPECT_EQ(parse_text_trace(os.str()), t);
}

TEST(BinaryTrace, EmptyInputGivesNoBytes) {
    EXPECT_TRUE(encode_binary({}).empty());
    EXPECT_TRUE(decode_binary({}).empty());
}

TEST(BinaryTrace, RecordIsLittleEndianAndTwentyFiveBytes) {
    const Trace t{{0x0102030405060708ULL, AccessKind::Write, 0x1122, 0x33}};
    const auto b = encode_binary(t);
    ASSERT_EQ(b.size(), kBinaryRecordBytes);
    EXPECT_EQ(b[0], 0x08);
    EXPECT_EQ(b[7], 0x01);
    EXPECT_EQ(b[8], 1);
    EXPECT_EQ(b[9], 0x22);
    EXPECT_EQ(b[10], 0x11);
    EXPECT_EQ(b[17], 0x33);
}

TEST(BinaryTrace, TruncationReportsOffset) {
    const Trace t{{1, AccessKind::Read, 0x40, 0x4}, {2, AccessKind::Read, 0x80, 0x4}};
    auto b = encode_binary(t);
    b.resize(26);
    try {
        decode_binary(b);
        FAIL() << "expected a decode error";
    } catch (const DecodeError& e) {
        EXPECT_EQ(e.offset(), 25u);
    }
}

TEST(BinaryTrace, RoundTripOverRandomSpecs) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        TraceGenSpec s;
        s.pattern = static_cast<TracePattern>(seed % 6);
        s.seed = seed;
        s.count = 200 + seed * 7;
        s.footprint = 1 << 14;
        s.stride = static_cast<std::int64_t>(seed * 64) - 640;
        if (s.stride == 0) s.stride = 64;
        s.read_ratio = 0.5;
        const auto t = generate(s);
        EXPECT_EQ(decode_binary(encode_binary(t)), t) << "seed " << seed;
    }
}

TEST(TraceFile, MissingFileNamesPath) {
    try {
        read_trace_file("/nonexistent/dir/t.trace", TraceFormat::Text);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/t.trace"), std::string::npos);
    }
}

TEST(TraceFile, BinaryFileRoundTrips) {
    TraceGenSpec s;
    s.pattern = TracePattern::RandomUniform;
    s.count = 100;
    const auto t = generate(s);
    const auto path = std::filesystem::temp_directory_path() / "nvsd_trace_roundtrip.bin";
    write_trace_file(path.string(), t, TraceFormat::Binary);
    EXPECT_EQ(std::filesystem::file_size(path), 100 * kBinaryRecordBytes);
    EXPECT_EQ(read_trace_file(path.string(), TraceFormat::Binary), t);
    std::filesystem::remove(path);
}

TEST(Generate, SequentialAddresses) {
    TraceGenSpec s;
    s.count = 3;
    const auto t = generate(s);
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[0].addr, 0u);
    EXPECT_EQ(t[1].addr, 64u);
    EXPECT_EQ(t[2].addr, 128u);
}

TEST(Generate, StridedAddresses) {
    TraceGenSpec s;
    s.pattern = TracePattern::Strided;
    s.base_addr = 0x1000;
    s.stride = 0x100;
    s.count = 3;
    const auto t = generate(s);
    EXPECT_EQ(t[0].addr, 0x1000u);
    EXPECT_EQ(t[1].addr, 0x1100u);
    EXPECT_EQ(t[2].addr, 0x1200u);
}

TEST(Generate, RejectsInvalidSpecs) {
    TraceGenSpec s;
    s.count = 0;
    EXPECT_THROW(generate(s), ValidationError);
    s = {};
    s.footprint = 0;
    EXPECT_THROW(generate(s), ValidationError);
    s = {};
    s.pattern = TracePattern::Strided;
    s.stride = 0;
    EXPECT_THROW(generate(s), ValidationError);
    s = {};
    s.read_ratio = 1.5;
    EXPECT_THROW(generate(s), ValidationError);
    s = {};
    s.pattern = TracePattern::Zipfian;
    s.zipf_exponent = 0.0;
    EXPECT_THROW(generate(s), ValidationError);
}

TEST(Generate, PureFunctionOfSpec) {
    for (int p = 0; p < 6; ++p) {
        TraceGenSpec s;
        s.pattern = static_cast<TracePattern>(p);
        s.count = 2000;
        s.read_ratio = 0.8;
        s.seed = 99;
        EXPECT_EQ(encode_binary(generate(s)), encode_binary(generate(s))) << p;
        auto other = s;
        other.seed = 100;
        if (s.pattern != TracePattern::Sequential && s.pattern != TracePattern::Strided) {
            EXPECT_NE(generate(s), generate(other)) << p;
        }
    }
}

TEST(Generate, AddressesStayInFootprintAndIcountIsMonotone) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        TraceGenSpec s;
        s.pattern = static_cast<TracePattern>(seed % 6);
        s.seed = seed;
        s.base_addr = 0x100000;
        s.footprint = 1 << 15;
        s.stride = -192;
        s.value_size = 512;
        s.count = 3000;
        const auto t = generate(s);
        std::uint64_t last = 0;
        for (const auto& r : t) {
            ASSERT_GE(r.addr, s.base_addr);
            ASSERT_LT(r.addr, s.base_addr + s.footprint);
            ASSERT_GE(r.icount, last);
            last = r.icount;
        }
    }
}

TEST(Generate, IcountMeanTracksInstructionsPerAccess) {
    TraceGenSpec s;
    s.count = 100000;
    s.instrs_per_access = 5.0;
    const auto t = generate(s);
    const double mean = static_cast<double>(t.back().icount) / static_cast<double>(t.size());
    EXPECT_NEAR(mean, 5.0, 0.1);
}

TEST(Generate, ReadRatioIsRespected) {
    TraceGenSpec s;
    s.pattern = TracePattern::RandomUniform;
    s.count = 50000;
    s.read_ratio = 0.25;
    const auto t = generate(s);
    const auto reads = std::count_if(t.begin(), t.end(), [](const auto& r) { return r.kind == AccessKind::Read; });
    EXPECT_NEAR(static_cast<double>(reads) / 50000.0, 0.25, 0.01);
}

// Top-10 block frequencies against the analytic mass p_k = k^-s / H(n, s).
TEST(Generate, ZipfRankCurveMatchesAnalyticMass) {
    TraceGenSpec s;
    s.pattern = TracePattern::Zipfian;
    s.seed = 7;
    s.count = 100000;
    s.zipf_exponent = 1.0;
    s.footprint = 64 * kBlockBytes;
    const auto t = generate(s);

    std::map<std::uint64_t, double> hist;
    for (const auto& r : t) hist[r.addr] += 1.0;
    std::vector<double> counts;
    for (const auto& [a, c] : hist) counts.push_back(c);
    std::sort(counts.rbegin(), counts.rend());

    double harmonic = 0.0;
    for (int k = 1; k <= 64; ++k) harmonic += 1.0 / k;
    for (int k = 1; k <= 10; ++k) {
        const double expected = 100000.0 / (k * harmonic);
        EXPECT_NEAR(counts[k - 1] / expected, 1.0, 0.05) << "rank " << k;
    }
}

TEST(Generate, KvMixTouchesWholeValues) {
    TraceGenSpec s;
    s.pattern = TracePattern::KvMix;
    s.footprint = 1 << 20;
    s.value_size = 256;
    s.count = 400;
    s.read_ratio = 0.5;
    const auto t = generate(s);
    ASSERT_EQ(t.size(), 400u);
    for (std::size_t i = 0; i < t.size(); i += 4) {
        EXPECT_EQ(t[i].addr % 256, 0u);
        for (std::size_t j = 1; j < 4; ++j) {
            EXPECT_EQ(t[i + j].addr, t[i].addr + 64 * j);
            EXPECT_EQ(t[i + j].kind, t[i].kind);
            EXPECT_EQ(t[i + j].pc, t[i].pc);
        }
    }
}
