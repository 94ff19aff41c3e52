#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "avpr/world.hpp"
#include "avpr/world_io.hpp"
#include "oracles.hpp"

using namespace avpr;

namespace {

TrajectoryWorld small_world(std::size_t n, std::size_t place_len, std::vector<std::vector<double>> confusion) {
    TrajectoryWorld w;
    w.n_viewpoints = n;
    w.place_len_m = place_len;
    w.max_action_m = 3;
    w.confusion = std::move(confusion);
    w.featureless.assign(n, 0.0);
    w.domains = {{"train", 11, 0.0, 0.0}, {"shifted", 12, 0.5, 0.0}};
    w.validate();
    return w;
}

std::vector<std::vector<double>> identity(std::size_t c) {
    std::vector<std::vector<double>> m(c, std::vector<double>(c, 0.0));
    for (std::size_t i = 0; i < c; ++i) m[i][i] = 1.0;
    return m;
}

}  // namespace

TEST(World, DefaultPartitionHasSixteenPlaces) {
    const auto w = generate_world(WorldConfig{}, 7);
    EXPECT_EQ(w.place_count(), 16u);
    EXPECT_EQ(w.place_of(0), 0u);
    EXPECT_EQ(w.place_of(399), 15u);
    EXPECT_THROW(w.place_of(400), IndexError);
}

TEST(World, SinglePlaceWhenPlaceCoversRoute) {
    WorldConfig c;
    c.n_viewpoints = 100;
    c.place_len_m = 100;
    c.featureless_fraction = 0.0;
    const auto w = generate_world(c, 1);
    EXPECT_EQ(w.place_count(), 1u);
    EXPECT_EQ(w.confusion[0], std::vector<double>{1.0});
}

TEST(World, PlaceBlocksAreContiguousAndNonEmpty) {
    WorldConfig c;
    c.n_viewpoints = 103;
    c.place_len_m = 10;
    c.featureless_fraction = 0.0;
    const auto w = generate_world(c, 3);
    EXPECT_EQ(w.place_count(), 11u);
    std::vector<std::size_t> count(w.place_count(), 0);
    for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
        ++count[w.place_of(v)];
        if (v > 0) {
            const auto step = w.place_of(v) - w.place_of(v - 1);
            EXPECT_TRUE(step == 0 || step == 1);
        }
    }
    for (std::size_t c2 = 0; c2 < count.size(); ++c2) {
        EXPECT_GT(count[c2], 0u);
        EXPECT_EQ(count[c2], w.place_size(c2));
    }
    EXPECT_EQ(w.place_size(10), 3u);
}

TEST(World, GenerationIsDeterministic) {
    const auto a = generate_world(WorldConfig{}, 42);
    const auto b = generate_world(WorldConfig{}, 42);
    const auto c = generate_world(WorldConfig{}, 43);
    EXPECT_EQ(a, b);
    EXPECT_EQ(world_to_string(a), world_to_string(b));
    EXPECT_NE(a.featureless, c.featureless);
}

TEST(World, InvalidConfigsAreRejected) {
    WorldConfig c;
    c.n_viewpoints = 0;
    EXPECT_THROW(generate_world(c, 1), ConfigError);
    c = WorldConfig{};
    c.place_len_m = 0;
    EXPECT_THROW(generate_world(c, 1), ConfigError);
    c = WorldConfig{};
    c.n_viewpoints = 50;  // < 2 * 30
    EXPECT_THROW(generate_world(c, 1), ConfigError);
    c = WorldConfig{};
    c.featureless_fraction = 1.5;
    EXPECT_THROW(generate_world(c, 1), ConfigError);
}

TEST(World, ConfusionRowsAreStochastic) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = generate_world(WorldConfig{}, seed);
        for (const auto& row : w.confusion) {
            double s = 0.0;
            for (double x : row) {
                EXPECT_GE(x, 0.0);
                s += x;
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(World, FeaturelessRunsMatchConfig) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = generate_world(WorldConfig{}, seed);
        std::size_t total = 0, run = 0;
        std::vector<std::size_t> runs;
        for (std::size_t v = 0; v <= w.n_viewpoints; ++v) {
            const bool on = v < w.n_viewpoints && w.featureless[v] > 0.0;
            if (v < w.n_viewpoints) EXPECT_TRUE(w.featureless[v] == 0.0 || w.featureless[v] == 1.0);
            if (on) {
                ++run;
                ++total;
            } else if (run > 0) {
                runs.push_back(run);
                run = 0;
            }
        }
        EXPECT_EQ(total, 120u) << "seed " << seed;
        for (std::size_t r : runs) EXPECT_LE(r, 80u);
        // At most one run (the last placed) may be shorter than the minimum.
        std::size_t short_runs = 0;
        for (std::size_t r : runs) short_runs += r < 40 ? 1 : 0;
        EXPECT_LE(short_runs, 1u);
    }
}

TEST(Observe, NoiselessDomainReturnsConfusionRowExactly) {
    const auto w = generate_world(WorldConfig{}, 5);
    const Domain& train = w.domain("train");
    Rng rng(1);
    for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
        if (w.featureless[v] != 0.0) continue;
        EXPECT_EQ(observe(w, v, train, rng).vector(), w.confusion[w.place_of(v)]);
    }
}

TEST(Observe, IdentityConfusionGivesOneHot) {
    const auto w = small_world(40, 5, identity(8));
    Rng rng(1);
    const auto p = observe(w, 17, w.domain("train"), rng);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(p[j], j == 3 ? 1.0 : 0.0);
}

TEST(Observe, FullyFeaturelessIsUniform) {
    auto w = small_world(40, 5, identity(8));
    w.featureless[12] = 1.0;
    Rng rng(1);
    const auto p = observe(w, 12, w.domain("train"), rng);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(p[j], 1.0 / 8.0, 1e-15);
}

TEST(Observe, MatchesNoiselessOracleWithPartialFeatureless) {
    auto w = generate_world(WorldConfig{}, 9);
    for (std::size_t v = 0; v < w.n_viewpoints; v += 7) w.featureless[v] = 0.37;
    for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
        const auto got = expected_observation(w, v, w.domain("train")).vector();
        const auto want = oracle::noiseless_observation(w, v);
        for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-15);
    }
}

TEST(Observe, ShiftedDrawsKeepTrueClassOnAverage) {
    std::vector<std::vector<double>> conf(5, std::vector<double>(5, 0.05));
    for (std::size_t i = 0; i < 5; ++i) conf[i][i] = 0.8;
    auto w = small_world(25, 5, conf);
    const Domain d{"half", 99, 0.5, 0.0};
    Rng rng(3);
    std::vector<double> mean(5, 0.0);
    std::size_t hits = 0;
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto p = observe(w, 12, d, rng);
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            mean[j] += p[j] / draws;
            s += p[j];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
        hits += p.argmax() == 2 ? 1 : 0;
    }
    EXPECT_EQ(std::max_element(mean.begin(), mean.end()) - mean.begin(), 2);
    EXPECT_GT(hits, draws / 2);
}

TEST(Descriptor, FeaturelessNoiseFreeEqualsPrototype) {
    auto w = small_world(40, 5, identity(8));
    w.descriptor.base_noise = 0.0;
    w.featureless[20] = 1.0;
    Rng rng(1);
    EXPECT_EQ(descriptor(w, 20, w.domain("train"), rng), featureless_prototype(w));
}

TEST(Descriptor, SamePlaceNoiseFreeIdentical) {
    auto w = small_world(40, 5, identity(8));
    w.descriptor.base_noise = 0.0;
    Rng rng(1);
    EXPECT_EQ(descriptor(w, 10, w.domain("train"), rng), descriptor(w, 14, w.domain("train"), rng));
    EXPECT_NE(descriptor(w, 10, w.domain("train"), rng), descriptor(w, 15, w.domain("train"), rng));
}

TEST(Descriptor, NoiseIsCentered) {
    auto w = small_world(40, 5, identity(8));
    w.descriptor.base_noise = 0.1;
    w.descriptor.shift_noise_gain = 0.0;
    Rng rng(8);
    std::vector<double> mean(w.descriptor_dim(), 0.0);
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto d = descriptor(w, 22, w.domain("train"), rng);
        for (std::size_t k = 0; k < d.size(); ++k) mean[k] += d[k] / draws;
    }
    for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_NEAR(mean[k], k == 4 ? 1.0 : 0.0, 3 * 0.1 / 100);
}

TEST(WorldFile, RoundTripIsExact) {
    const auto w = generate_world(WorldConfig{}, 21);
    const auto back = parse_world(world_to_string(w));
    EXPECT_EQ(back, w);
    EXPECT_EQ(world_to_string(back), world_to_string(w));
}

TEST(WorldFile, RowNotSummingToOneIsRejected) {
    nlohmann::json j{{"n_viewpoints", 4},
                     {"place_len_m", 2},
                     {"confusion", {{0.5, 0.4}, {0.0, 1.0}}},
                     {"featureless", {0, 0, 0, 0}}};
    EXPECT_THROW(parse_world(j.dump()), ValidationError);
    j["confusion"] = {{0.5, 0.5}, {0.0, 1.0}};
    EXPECT_NO_THROW(parse_world(j.dump()));
}

TEST(WorldFile, MalformedJsonReportsPosition) {
    try {
        parse_world("{\n  \"n_viewpoints\": 4,\n  \"place_len_m\": ]\n}");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(WorldFile, WrongFieldTypeNamesTheField) {
    nlohmann::json j{{"n_viewpoints", 4},
                     {"place_len_m", 2},
                     {"confusion", {{0.5, "x"}, {0.0, 1.0}}},
                     {"featureless", {0, 0, 0, 0}}};
    try {
        parse_world(j.dump());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("confusion[0][1]"), std::string::npos) << e.what();
    }
}

TEST(WorldFile, InconsistentPlaceLabelsAreRejected) {
    nlohmann::json j{{"n_viewpoints", 4},
                     {"place_len_m", 2},
                     {"confusion", {{1.0, 0.0}, {0.0, 1.0}}},
                     {"featureless", {0, 0, 0, 0}},
                     {"place_of", {0, 1, 1, 1}}};
    EXPECT_THROW(parse_world(j.dump()), ValidationError);
    j["place_of"] = {0, 0, 1, 1};
    EXPECT_NO_THROW(parse_world(j.dump()));
}

TEST(WorldFile, DuplicateViewpointRecordsKeepLatest) {
    nlohmann::json j{{"n_viewpoints", 2},
                     {"place_len_m", 1},
                     {"confusion", {{1.0, 0.0}, {0.0, 1.0}}},
                     {"viewpoints",
                      {{{"viewpoint", 0}, {"featureless", 0.2}, {"timestamp", 5}},
                       {{"viewpoint", 1}, {"featureless", 0.0}},
                       {{"viewpoint", 0}, {"featureless", 0.9}, {"timestamp", 3}}}}};
    const auto w = parse_world(j.dump());
    EXPECT_EQ(w.featureless[0], 0.2);
    EXPECT_EQ(w.featureless[1], 0.0);
}

TEST(WorldFile, MissingFileIsMissingArtifact) {
    EXPECT_THROW(load_world("/nonexistent/world.json"), MissingArtifactError);
}

TEST(PdvTableTest, RowsAreRenormalizedAndLatestWins) {
    const std::string csv =
        "viewpoint,domain,timestamp,p_0,p_1\n"
        "0,s1,1,2,2\n"
        "0,s1,4,1,3\n"
        "0,s1,2,3,1\n"
        "1,s1,0,0,5\n";
    const auto t = PdvTable::parse(csv, "p_");
    EXPECT_EQ(t.width(), 2u);
    EXPECT_EQ(t.size(), 2u);
    EXPECT_DOUBLE_EQ(t.at("s1", 0)[0], 0.25);
    EXPECT_DOUBLE_EQ(t.at("s1", 1)[1], 1.0);
    EXPECT_THROW(t.at("s2", 0), IndexError);
}

TEST(PdvTableTest, BadNumberReportsLine) {
    const std::string csv = "viewpoint,domain,p_0,p_1\n0,s1,0.5,0.5\n1,s1,abc,0.5\n";
    try {
        PdvTable::parse(csv, "p_");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
    }
}
