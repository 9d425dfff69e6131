#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "nvsd/hierarchy.hpp"

using namespace nvsd;

namespace {

HierarchyConfig with_system(PrefetchSystem s) {
    HierarchyConfig c;
    c.prefetch_system = s;
    return c;
}

/// Small enough that every level evicts constantly.
HierarchyConfig tiny(PrefetchSystem s) {
    HierarchyConfig c;
    c.prefetch_system = s;
    c.l1d = {1024, 64, 1, 2, 3, 3, true};
    c.l1i = {1024, 64, 1, 2, 3, 3, true};
    c.l2 = {4096, 64, 1, 4, 11, 11, true};
    c.hmc.cache = {8192, 64, 4, 4, 17, 17, true};
    c.hmc.dram.size = 32768;
    c.hmc.dram.ways = 4;
    c.address_space = 1 << 20;
    return c;
}

HierarchyConfig depths_zero() {
    auto c = with_system(PrefetchSystem::HmcPlusL1);
    c.l1_prefetch.next_line.depth = 0;
    c.l1_prefetch.stride.depth = 0;
    c.hmc_prefetch.next_line.depth = 0;
    c.hmc_prefetch.stride.depth = 0;
    return c;
}

constexpr std::array<PrefetchSystem, 3> kSystems{PrefetchSystem::NoPrefetch, PrefetchSystem::Hmc,
                                                 PrefetchSystem::HmcPlusL1};

TraceGenSpec mixed_spec(std::uint64_t seed) {
    TraceGenSpec s;
    s.pattern = static_cast<TracePattern>(seed % 6);
    s.seed = seed;
    s.count = 20000;
    s.footprint = 64 << 10;
    s.stride = 192;
    s.value_size = 512;
    s.read_ratio = 0.6;
    return s;
}

}  // namespace

TEST(Latency, ColdReadL1HitAndSectorReuse) {
    Hierarchy h(with_system(PrefetchSystem::NoPrefetch));
    auto cold = h.access({1, AccessKind::Read, 0x10000, 0x400});
    EXPECT_EQ(cold.served_level, ServedLevel::Nvram);
    EXPECT_EQ(cold.total_latency, 3u + 11u + 17u + 4u + 353u);
    auto again = h.access({2, AccessKind::Read, 0x10000, 0x400});
    EXPECT_EQ(again.served_level, ServedLevel::L1);
    EXPECT_EQ(again.total_latency, 6u);
    auto sibling = h.access({3, AccessKind::Read, 0x10040, 0x400});
    EXPECT_EQ(sibling.served_level, ServedLevel::HMC);
    EXPECT_EQ(sibling.total_latency, 48u);
}

TEST(Latency, ColdReadIsTheSameUnderEverySystem) {
    for (auto s : kSystems) {
        Hierarchy h(with_system(s));
        EXPECT_EQ(h.access({1, AccessKind::Read, 0x7000, 0x400}).total_latency, 388u);
        EXPECT_EQ(h.access({2, AccessKind::Read, 0x7000, 0x400}).total_latency, 6u);
    }
}

TEST(Latency, L2AndDramServedPaths) {
    auto cfg = tiny(PrefetchSystem::NoPrefetch);
    cfg.hmc.dram_allocate_on_demand_fill = true;
    Hierarchy h(cfg);
    h.access({1, AccessKind::Read, 0x0, 0});
    // L1D set 0 (8 sets, 2 ways) is thrashed; L2 (16 sets, 4 ways) keeps 0x0.
    h.access({2, AccessKind::Read, 0x200, 0});
    h.access({3, AccessKind::Read, 0x600, 0});
    auto l2 = h.access({4, AccessKind::Read, 0x0, 0});
    EXPECT_EQ(l2.served_level, ServedLevel::L2);
    EXPECT_EQ(l2.total_latency, 3u + 22u);

    // Evict sector 0x40000 from the 8-set HMC cache; DRAM still holds it.
    h.access({5, AccessKind::Read, 0x40000, 0});
    for (std::uint64_t k = 1; k <= 4; ++k) h.access({5 + k, AccessKind::Read, 0x40000 + k * 0x800, 0});
    auto dram = h.access({20, AccessKind::Read, 0x40040, 0});
    EXPECT_EQ(dram.served_level, ServedLevel::DramCache);
    EXPECT_EQ(dram.total_latency, 3u + 11u + 17u + 4u + 33u);
}

TEST(Latency, StreamBufferHitCostsL2Tag) {
    Hierarchy h(with_system(PrefetchSystem::HmcPlusL1));
    h.access({1, AccessKind::Read, 0x10000, 0x400});
    h.access({2, AccessKind::Read, 0x10000, 0x400});
    auto sb = h.access({3, AccessKind::Read, 0x10040, 0x400});
    EXPECT_EQ(sb.served_level, ServedLevel::L1StreamBuffer);
    EXPECT_EQ(sb.total_latency, 14u);
    EXPECT_TRUE(sb.stream_buffer_hit);
    EXPECT_FALSE(sb.l2_accessed);
    // Promoted into L1.
    EXPECT_EQ(h.access({4, AccessKind::Read, 0x10040, 0x400}).total_latency, 6u);
}

TEST(Latency, ServedLevelOrdering) {
    auto cfg = tiny(PrefetchSystem::HmcPlusL1);
    Hierarchy h(cfg);
    std::map<ServedLevel, std::set<std::uint32_t>> seen;
    for (const auto& r : generate(mixed_spec(5))) {
        auto o = h.access(r);
        seen[o.served_level].insert(o.total_latency);
    }
    const ServedLevel order[] = {ServedLevel::L1, ServedLevel::L1StreamBuffer, ServedLevel::L2,
                                 ServedLevel::HMC, ServedLevel::DramCache, ServedLevel::Nvram};
    std::uint32_t prev_max = 0;
    for (auto l : order) {
        if (!seen.contains(l)) continue;
        EXPECT_GT(*seen[l].begin(), prev_max) << served_level_name(l);
        prev_max = *seen[l].rbegin();
    }
}

TEST(Routing, InstructionFetchesUseL1I) {
    Hierarchy h(with_system(PrefetchSystem::HmcPlusL1));
    h.access({1, AccessKind::IFetch, 0x400000, 0x400000});
    h.access({2, AccessKind::IFetch, 0x400000, 0x400000});
    h.access({3, AccessKind::Read, 0x400000, 0x400000});
    const auto r = h.report();
    EXPECT_EQ(r.at(Level::L1I).demand_accesses, 2u);
    EXPECT_EQ(r.at(Level::L1I).demand_hits, 1u);
    EXPECT_EQ(r.at(Level::L1D).demand_accesses, 1u);
    EXPECT_EQ(r.at(Level::L1D).demand_misses, 1u);
    EXPECT_EQ(r.at(Level::L1I).prefetch_issued, 0u);
    // Next-line fires on the first miss; the stride entry is still training.
    EXPECT_EQ(r.at(Level::L1D).prefetch_issued, h.config().l1_prefetch.next_line.depth);
}

TEST(Routing, L2EvictionKeepsL1Copy) {
    HierarchyConfig c = tiny(PrefetchSystem::NoPrefetch);
    c.l1d = {2048, 64, 1, 1, 3, 3, true};  // 32 sets, direct mapped
    c.l2 = {2048, 64, 1, 2, 11, 11, true};  // 16 sets, 2 ways
    Hierarchy h(c);
    h.access({1, AccessKind::Read, 0x0, 0});
    h.access({2, AccessKind::Read, 0x400, 0});
    h.access({3, AccessKind::Read, 0xC00, 0});
    EXPECT_FALSE(h.l2().contains(0x0));
    EXPECT_EQ(h.access({4, AccessKind::Read, 0x0, 0}).total_latency, 6u);
}

TEST(Run, EmptyTraceGivesZeroReport) {
    const auto r = run({}, HierarchyConfig{});
    for (auto l : kAllLevels) EXPECT_EQ(r.at(l), LevelStats{});
    EXPECT_EQ(r.media, MediaStats{});
    EXPECT_EQ(r.total_instructions, 0u);
    EXPECT_FALSE(r.derived.amat);
}

TEST(Run, ErrorsNameTheRecord) {
    auto cfg = tiny(PrefetchSystem::NoPrefetch);
    Trace t{{1, AccessKind::Read, 0x0, 0}, {2, AccessKind::Read, 1 << 20, 0}};
    try {
        run(t, cfg);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
    }
    Trace regress{{5, AccessKind::Read, 0x0, 0}, {4, AccessKind::Read, 0x40, 0}};
    EXPECT_THROW(run(regress, cfg), ValidationError);
}

TEST(Run, InstructionsFromLastRecord) {
    Trace t{{10, AccessKind::Read, 0x0, 0}, {25, AccessKind::Write, 0x40, 0}};
    EXPECT_EQ(run(t, HierarchyConfig{}).total_instructions, 25u);
}

TEST(Run, SequentialColdMissesEqualDistinctSectors) {
    TraceGenSpec s;
    s.count = 100000;
    s.footprint = 256ULL << 20;
    const auto t = generate(s);
    std::set<std::uint64_t> sectors;
    for (const auto& r : t) sectors.insert(r.addr & ~std::uint64_t{255});
    const auto rep = run(t, with_system(PrefetchSystem::NoPrefetch));
    EXPECT_EQ(rep.at(Level::HMC).demand_misses, sectors.size());
    EXPECT_EQ(rep.media.nvram_reads, sectors.size());
}

TEST(Run, DisabledEnginesMatchNoPrefetch) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto t = generate(mixed_spec(seed));
        auto a = run(t, with_system(PrefetchSystem::NoPrefetch));
        auto b = run(t, depths_zero());
        for (auto l : kAllLevels) {
            EXPECT_EQ(a.at(l), b.at(l)) << "seed " << seed << " level " << level_name(l);
        }
        EXPECT_EQ(a.media, b.media);
    }
}

TEST(Run, Deterministic) {
    const auto t = generate(mixed_spec(3));
    for (auto s : kSystems) EXPECT_EQ(run(t, with_system(s)), run(t, with_system(s)));
}

TEST(Run, PathIdentitiesAndExactAmat) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto t = generate(mixed_spec(seed));
        for (auto s : kSystems) {
            Hierarchy h(tiny(s));
            std::uint64_t latency = 0;
            for (const auto& r : t) {
                latency += h.access(r).total_latency;
                h.note_instructions(r.icount);
            }
            const auto rep = h.report();
            const auto& d = rep.at(Level::L1D);
            const auto& i = rep.at(Level::L1I);
            const auto& l2 = rep.at(Level::L2);
            const auto& hmc = rep.at(Level::HMC);
            EXPECT_EQ(l2.demand_accesses, d.demand_misses + i.demand_misses);
            EXPECT_EQ(hmc.demand_accesses, l2.demand_misses);
            ASSERT_TRUE(rep.derived.amat);
            EXPECT_EQ(*rep.derived.amat, static_cast<double>(latency) / static_cast<double>(t.size()));
            EXPECT_NO_THROW(check_consistency(rep));
            if (s != PrefetchSystem::HmcPlusL1) {
                EXPECT_EQ(d.stream_buffer_hits, 0u);
                EXPECT_EQ(d.prefetch_issued, 0u);
            }
            if (s == PrefetchSystem::NoPrefetch) {
                EXPECT_EQ(hmc.prefetch_issued, 0u);
                EXPECT_EQ(rep.media.nvram_reads, hmc.demand_misses - rep.media.dram_reads);
            }
        }
    }
}

// Every read returns the latest write; after a flush NVRAM holds it too.
TEST(DataAudit, MatchesFlatReferenceMemory) {
    for (auto s : kSystems) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            auto cfg = tiny(s);
            cfg.hmc.dram_allocate_on_demand_fill = seed % 2 == 0;
            Hierarchy h(cfg);
            std::map<std::uint64_t, std::uint64_t> memory;
            std::mt19937_64 rng(seed);
            for (int k = 0; k < 30000; ++k) {
                const std::uint64_t block =
                    rng() % 3 == 0 ? (rng() % 2048) * 64 : ((k / 4) * 64 + (rng() % 4) * 4096) % (1 << 17);
                const auto kind = rng() % 3 == 0 ? AccessKind::Write : rng() % 8 == 0 ? AccessKind::IFetch
                                                                                       : AccessKind::Read;
                const auto o = h.access({static_cast<std::uint64_t>(k), kind, block, 0x400 + (rng() % 3) * 4});
                if (kind == AccessKind::Write) {
                    memory[block] = o.data;
                } else if (kind == AccessKind::Read) {
                    const auto it = memory.find(block);
                    ASSERT_EQ(o.data, it == memory.end() ? 0 : it->second)
                        << prefetch_system_name(s) << " seed " << seed << " access " << k;
                }
            }
            h.flush();
            for (const auto& [block, v] : memory) {
                ASSERT_EQ(h.hmc().nvram_data(block), v) << prefetch_system_name(s) << " block " << block;
            }
        }
    }
}
