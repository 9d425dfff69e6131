#include <string>

#include <gtest/gtest.h>

#include "nvsd/config.hpp"

using namespace nvsd;

namespace {

std::string validation_message(const std::string& text) {
    try {
        config_from_text(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

ExperimentConfig small_experiment(PrefetchSystem s) {
    ExperimentConfig c;
    auto& g = std::get<TraceGenSpec>(c.trace);
    g.pattern = TracePattern::Strided;
    g.stride = 256;
    g.footprint = 8 << 20;
    g.count = 5000;
    c.hierarchy.prefetch_system = s;
    return c;
}

}  // namespace

TEST(Defaults, MatchTableOne) {
    const auto c = config_from_text("{}");
    const auto& h = c.hierarchy;
    EXPECT_EQ(h.l1d, (CacheGeometry{32 * 1024, 64, 1, 8, 3, 3, true}));
    EXPECT_EQ(h.l1i, (CacheGeometry{32 * 1024, 64, 1, 8, 3, 3, true}));
    EXPECT_EQ(h.l2, (CacheGeometry{2 * 1024 * 1024, 64, 1, 16, 11, 11, true}));
    EXPECT_EQ(h.hmc.cache, (CacheGeometry{8 << 20, 64, 4, 16, 17, 17, true}));
    EXPECT_EQ(h.hmc.dram.size, 64u << 20);
    EXPECT_EQ(h.hmc.dram.channels, 2u);
    EXPECT_EQ(h.hmc.dram.read_latency, 33u);
    EXPECT_EQ(h.hmc.dram.write_latency, 11u);
    EXPECT_EQ(h.hmc.nvram.read_latency, 353u);
    EXPECT_EQ(h.hmc.nvram.write_latency, 86u);
    EXPECT_EQ(h.l1_prefetch.next_line.depth, 2u);
    EXPECT_EQ(h.l1_prefetch.stride.depth, 4u);
    EXPECT_EQ(h.l1_prefetch.stream_buffers.count, 8u);
    EXPECT_EQ(h.l1_prefetch.stream_buffers.entries, 32u);
    EXPECT_EQ(h.hmc_prefetch.next_line.granularity, 256u);
    EXPECT_FALSE(h.hmc_prefetch.stride_enabled);
    EXPECT_EQ(h, HierarchyConfig{});
}

TEST(Schema, PrintedConfigListsEveryDefault) {
    const auto j = config_to_json(ExperimentConfig{});
    EXPECT_EQ(j.at("hierarchy").at("l2").at("tag_latency"), 11);
    EXPECT_EQ(j.at("hierarchy").at("hmc").at("directory_latency"), 4);
    EXPECT_EQ(j.at("prefetch").at("system"), "hmc_plus_l1");
    EXPECT_EQ(j.at("prefetch").at("l1").at("next_line").at("direction"), "both");
    EXPECT_EQ(j.at("prefetch").at("hmc").at("next_line").at("direction"), "ascending");
    EXPECT_EQ(j.at("trace").at("generate").at("pattern"), "sequential");
    EXPECT_EQ(j.at("output").at("format"), "json");
}

TEST(Schema, ResolvedConfigRoundTrips) {
    auto c = small_experiment(PrefetchSystem::Hmc);
    c.hierarchy.hmc.dram_allocate_on_demand_fill = true;
    c.hierarchy.l1_prefetch.next_line.trigger = NextLineTrigger::OnMiss;
    c.output_format = ReportFormat::Csv;
    const auto j = config_to_json(c);
    const auto back = config_from_json(j);
    EXPECT_EQ(config_to_json(back), j);
    EXPECT_EQ(back.hierarchy, c.hierarchy);
}

TEST(Schema, UnknownKeysAreRejectedByName) {
    EXPECT_NE(validation_message(R"({"prefetc_depth": 3})").find("'prefetc_depth'"), std::string::npos);
    EXPECT_NE(validation_message(R"({"hierarchy": {"l2": {"wayz": 4}}})").find("'hierarchy.l2.wayz'"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"prefetch": {"l1": {"stride": {"degree": 4}}}})")
                  .find("'prefetch.l1.stride.degree'"),
              std::string::npos);
}

TEST(Schema, TypeAndRangeErrorsNameTheKey) {
    EXPECT_NE(validation_message(R"({"seed": -1})").find("'seed'"), std::string::npos);
    EXPECT_NE(validation_message(R"({"hierarchy": {"l1d": {"ways": "8"}}})").find("'hierarchy.l1d.ways'"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"prefetch": {"system": "magic"}})").find("one of"), std::string::npos);
    EXPECT_NE(validation_message(R"({"hierarchy": {"l1d": {"ways": 99999999999}}})").find("out of range"),
              std::string::npos);
    EXPECT_FALSE(validation_message(R"({"hierarchy": {"l1d": {"size": 3000}}})").empty());
    EXPECT_FALSE(validation_message("{not json").empty());
    EXPECT_FALSE(validation_message("[]").empty());
}

TEST(Schema, ExactlyOneTraceSource) {
    EXPECT_FALSE(validation_message(R"({"trace": {}})").empty());
    EXPECT_FALSE(
        validation_message(R"({"trace": {"file": {"path": "a"}, "generate": {"pattern": "sequential"}}})").empty());
    EXPECT_FALSE(validation_message(R"({"trace": {"file": {"path": ""}}})").empty());
    const auto c = config_from_text(R"({"trace": {"file": {"path": "t.bin", "format": "binary"}}})");
    const auto& f = std::get<TraceFileSource>(c.trace);
    EXPECT_EQ(f.path, "t.bin");
    EXPECT_EQ(f.format, TraceFormat::Binary);
}

TEST(Schema, SweepListsMustBeNonEmpty) {
    EXPECT_FALSE(validation_message(R"({"sweep": {"seed": []}})").empty());
    EXPECT_FALSE(validation_message(R"({"sweep": {"seed": 3}})").empty());
    EXPECT_FALSE(validation_message(R"({"mode": "sweep"})").empty());
    const auto c = config_from_text(R"({"mode": "sweep", "sweep": {"seed": [1, 2], "prefetch.system": ["hmc"]}})");
    ASSERT_EQ(c.sweep.size(), 2u);
    EXPECT_EQ(c.sweep[0].path, "prefetch.system");
    EXPECT_EQ(c.sweep[1].path, "seed");
}

TEST(Schema, GeneratorSeedFollowsTopLevelSeed) {
    const auto c = config_from_text(R"({"seed": 42})");
    EXPECT_EQ(std::get<TraceGenSpec>(c.trace).seed, 42u);
    EXPECT_EQ(std::get<TraceGenSpec>(with_seed(c, 9).trace).seed, 9u);
}

TEST(Run, EmbeddedConfigReproducesReport) {
    const auto r = run_single(small_experiment(PrefetchSystem::HmcPlusL1));
    ASSERT_FALSE(r.config.empty());
    const auto again = run_single(config_from_text(r.config));
    EXPECT_EQ(again, r);
    EXPECT_EQ(emit_report(again, ReportFormat::Json), emit_report(r, ReportFormat::Json));
}

TEST(Run, MissingTraceFileIsIoError) {
    ExperimentConfig c;
    c.trace = TraceFileSource{"/no/such/trace.txt", TraceFormat::Text};
    EXPECT_THROW(run_single(c), IoError);
}

TEST(Paired, StridedHmcPlusL1ReportsL1AndHmcEffects) {
    const auto p = run_paired(small_experiment(PrefetchSystem::HmcPlusL1));
    EXPECT_EQ(p.baseline.label, "no_prefetch");
    EXPECT_EQ(p.with_prefetch.label, "hmc_plus_l1");
    EXPECT_TRUE(p.effect(Level::L1D).coverage);
    EXPECT_TRUE(p.effect(Level::L1D).accuracy);
    EXPECT_TRUE(p.effect(Level::HMC).coverage);
    EXPECT_GT(*p.effect(Level::L1D).coverage, 0.9);
}

TEST(Paired, NoPrefetchAgainstItself) {
    const auto p = run_paired(small_experiment(PrefetchSystem::NoPrefetch));
    for (auto l : kAllLevels) {
        if (p.baseline.at(l).demand_misses == 0) continue;
        EXPECT_EQ(*p.effect(l).coverage, 0.0) << level_name(l);
        EXPECT_FALSE(p.effect(l).accuracy) << level_name(l);
    }
}

TEST(Sweep, DepthZeroRowEqualsNoPrefetch) {
    auto c = small_experiment(PrefetchSystem::Hmc);
    c.mode = RunMode::Sweep;
    c.sweep = {{"prefetch.hmc.next_line.depth", {Json(0), Json(2)}}};
    const auto s = run_sweep(c);
    ASSERT_EQ(s.rows.size(), 2u);
    EXPECT_EQ(s.rows[0].values[0], 0);
    const auto base = run_single(small_experiment(PrefetchSystem::NoPrefetch));
    for (auto l : kAllLevels) EXPECT_EQ(s.rows[0].report.at(l), base.at(l)) << level_name(l);
    EXPECT_EQ(s.rows[0].report.derived, base.derived);
    EXPECT_NE(s.rows[1].report.at(Level::HMC), base.at(Level::HMC));
}

TEST(Sweep, TwoByTwoInLexicographicOrderAndDeterministic) {
    auto c = small_experiment(PrefetchSystem::HmcPlusL1);
    c.sweep = {{"prefetch.l1.stride.depth", {Json(4), Json(1)}}, {"prefetch.hmc.next_line.depth", {Json(1), Json(2)}}};
    std::sort(c.sweep.begin(), c.sweep.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    const auto s = run_sweep(c, 3);
    ASSERT_EQ(s.rows.size(), 4u);
    EXPECT_EQ(s.params, (std::vector<std::string>{"prefetch.hmc.next_line.depth", "prefetch.l1.stride.depth"}));
    const int expected[4][2] = {{1, 4}, {1, 1}, {2, 4}, {2, 1}};
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(s.rows[i].values[0], expected[i][0]);
        EXPECT_EQ(s.rows[i].values[1], expected[i][1]);
    }
    const auto csv = emit_sweep_csv(s);
    EXPECT_EQ(csv, emit_sweep_csv(run_sweep(c, 1)));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.rfind("schema_version,prefetch.hmc.next_line.depth,prefetch.l1.stride.depth,", 0), 0u);
}

TEST(Sweep, FailingRunNamesTheTuple) {
    auto c = small_experiment(PrefetchSystem::Hmc);
    c.sweep = {{"hierarchy.l2.ways", {Json(16), Json(3)}}};
    try {
        run_sweep(c);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("hierarchy.l2.ways=3"), std::string::npos) << e.what();
    }
}

TEST(Sweep, UnknownParameterRejected) {
    auto c = small_experiment(PrefetchSystem::Hmc);
    c.sweep = {{"prefetch.hmc.nextline.depth", {Json(1)}}};
    EXPECT_THROW(run_sweep(c), ValidationError);
    c.sweep = {{"sweep", {Json(1)}}};
    EXPECT_THROW(run_sweep(c), ValidationError);
}
