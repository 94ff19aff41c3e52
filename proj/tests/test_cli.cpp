#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "avpr/io.hpp"
#include "avpr/world_io.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;
using namespace avpr;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("avpr_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, GenWorldIsByteIdenticalForSameSeed) {
    TempDir d("gen");
    ASSERT_EQ(invoke({"gen-world", "--seed", "3", "-o", d / "a.json"}).code, 0);
    ASSERT_EQ(invoke({"gen-world", "--seed", "3", "-o", d / "b.json"}).code, 0);
    ASSERT_EQ(invoke({"gen-world", "--seed", "4", "-o", d / "c.json"}).code, 0);
    EXPECT_EQ(io::read_text(d / "a.json"), io::read_text(d / "b.json"));
    EXPECT_NE(io::read_text(d / "a.json"), io::read_text(d / "c.json"));
    EXPECT_TRUE(fs::exists(d / "a.manifest.json"));
    const auto m = nlohmann::json::parse(io::read_text(d / "a.manifest.json"));
    EXPECT_EQ(m["command"], "gen-world");
    EXPECT_EQ(m["seeds"]["world"], 3);
}

TEST(Cli, MissingOutputIsConfigError) {
    const auto r = invoke({"gen-world", "--seed", "3"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("-o"), std::string::npos);
}

TEST(Cli, UnknownCommandAndOptionExitTwo) {
    EXPECT_EQ(invoke({"fly"}).code, 2);
    EXPECT_EQ(invoke({"gen-world", "--bogus", "1"}).code, 2);
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"--help"}).code, 0);
    const auto v = invoke({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find(cli::kVersion), std::string::npos);
}

TEST(Cli, UnknownPlannerListsValidSet) {
    TempDir d("planner");
    ASSERT_EQ(invoke({"gen-world", "-o", d / "w.json"}).code, 0);
    const auto r = invoke({"eval", "--world", d / "w.json", "--planners", "single_view,greedy", "-o", d / "out"});
    EXPECT_EQ(r.code, 2);
    for (const char* name : {"single_view", "random", "olc_only", "ilc_only", "proposed"})
        EXPECT_NE(r.err.find(name), std::string::npos) << r.err;
}

TEST(Cli, ConfigFileKeysAreValidated) {
    TempDir d("keys");
    io::write_text(d / "cfg.json", R"({"world": {"viewpoints": 120, "colour": "red"}})");
    const auto r = invoke({"gen-world", "--config", d / "cfg.json", "-o", d / "w.json"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
    io::write_text(d / "bad.json", "{\n  \"seed\": 3,\n  oops\n}");
    const auto p = invoke({"gen-world", "--config", d / "bad.json", "-o", d / "w.json"});
    EXPECT_EQ(p.code, 2);
    EXPECT_NE(p.err.find("line 3"), std::string::npos) << p.err;
}

TEST(Cli, FlagsOverrideConfigFileOverrideDefaults) {
    TempDir d("precedence");
    io::write_text(d / "cfg.json", R"({"seed": 11, "world": {"viewpoints": 200, "place_len_m": 20}})");
    ASSERT_EQ(invoke({"gen-world", "--config", d / "cfg.json", "-o", d / "file.json"}).code, 0);
    ASSERT_EQ(invoke({"gen-world", "--config", d / "cfg.json", "--viewpoints", "160", "-o", d / "flag.json"}).code, 0);
    ASSERT_EQ(invoke({"gen-world", "-o", d / "default.json"}).code, 0);
    EXPECT_EQ(load_world(d / "file.json").n_viewpoints, 200u);
    EXPECT_EQ(load_world(d / "flag.json").n_viewpoints, 160u);
    EXPECT_EQ(load_world(d / "flag.json").place_len_m, 20u);
    EXPECT_EQ(load_world(d / "default.json").n_viewpoints, 400u);
    const auto m = nlohmann::json::parse(io::read_text(d / "flag.manifest.json"));
    EXPECT_EQ(m["config"]["seed"], 11);
    EXPECT_EQ(m["config"]["world"]["viewpoints"], 160);
}

TEST(Cli, InspectRejectsBadIndex) {
    TempDir d("inspect");
    io::write_text(d / "raw.jsonl", "");
    EXPECT_EQ(invoke({"inspect", "--episode", d / "raw.jsonl:0"}).code, 2);
    EXPECT_EQ(invoke({"inspect", "--episode", d / "missing.jsonl:0"}).code, 2);
    EXPECT_EQ(invoke({"inspect", "--episode", d / "raw.jsonl:x"}).code, 2);
}

TEST(Cli, TinyPipelineRunsEndToEnd) {
    TempDir d("pipeline");
    const std::string w = d / "world.json";
    ASSERT_EQ(invoke({"gen-world", "--viewpoints", "120", "--place-len", "10", "--max-action", "10", "-o", w}).code, 0);
    auto r = invoke({"train", "proxy", "--world", w, "--samples", "300", "--epochs", "2", "--hidden", "8", "-o",
                  d / "classifier.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* variant : {"olc_only", "ilc_only", "proposed"}) {
        r = invoke({"train", "dqn", "--variant", variant, "--world", w, "--classifier", d / "classifier.json", "--episodes",
                 "60", "--hidden", "8", "--batch", "8", "-o", d / (std::string(variant) + ".json")});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_TRUE(fs::exists(d / "proposed_log.csv"));
    r = invoke({"eval", "--artifacts", d.path.string(), "--domains", "shift0.2,shift0.6", "--episodes", "15", "--bootstrap",
             "200", "--traces", "-o", d / "eval"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"table.csv", "long.csv", "raw.jsonl", "manifest.json"})
        EXPECT_TRUE(fs::exists(fs::path(d / "eval") / f)) << f;
    EXPECT_NE(r.out.find("proposed"), std::string::npos);

    const auto raw = (fs::path(d / "eval") / "raw.jsonl").string();
    r = invoke({"inspect", "--episode", raw + ":3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_FALSE(r.out.empty());
    r = invoke({"inspect", "--episode", raw + ":3", "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("step", 0), 0u) << r.out;
    EXPECT_EQ(invoke({"inspect", "--episode", raw + ":150"}).code, 2);
}

TEST(Cli, EvalWithoutWeightsIsMissingArtifact) {
    TempDir d("noweights");
    ASSERT_EQ(invoke({"gen-world", "-o", d / "w.json"}).code, 0);
    const auto r = invoke({"eval", "--world", d / "w.json", "--planners", "olc_only", "--episodes", "5", "-o", d / "o"});
    EXPECT_EQ(r.code, 2);
    const auto ok = invoke({"eval", "--world", d / "w.json", "--planners", "random,single_view", "--episodes", "5",
                         "--bootstrap", "100", "-o", d / "o"});
    EXPECT_EQ(ok.code, 0) << ok.err;
}
