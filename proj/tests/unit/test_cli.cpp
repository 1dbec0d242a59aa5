#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / ("gicaps_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override {
        if (!HasFailure()) fs::remove_all(dir);
    }

    fs::path write_config(const std::string& name, const std::string& text) const {
        const auto p = dir / name;
        std::ofstream(p) << text;
        return p;
    }
    fs::path write_config(const std::string& name, const json& j) const { return write_config(name, j.dump(2)); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(GICAPS_TOOL) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                                (dir / "stderr.txt").string();
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json two_class(int dims = 3) { return {{"name", "two_class"}, {"preset", "two_class"}, {"dims", dims}}; }

json benchmark_config() {
    return {{"schema", 1},
            {"seed", 1},
            {"dataset", two_class()},
            {"methods", {"gicaps", "smote"}},
            {"undersample", json::object()},
            {"oversample", json::object()},
            {"baselines", json::object()},
            {"gmr", {{"K", 3}}},
            {"cv", {{"folds", 5}, {"threads", 1}}}};
}

std::vector<json> jsonl(const fs::path& p) {
    std::vector<json> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

}  // namespace

TEST_F(Cli, HelpAndUsage) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("generate"), 2);  // --config is required
    EXPECT_EQ(run("generate --config x.json --seed notanumber"), 2);
}

TEST_F(Cli, GenerateWritesHeaderAndIsDeterministic) {
    const auto cfg = write_config("g.json", json{{"schema", 1}, {"seed", 5}, {"dataset", {{"preset", "blob3d"}}}});
    ASSERT_EQ(run("generate --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run("generate --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
    const auto a = slurp(dir / "a" / "data.csv");
    EXPECT_EQ(a, slurp(dir / "b" / "data.csv"));
    EXPECT_EQ(a.rfind("# gicaps generate\n# schema: 1\n# seed: 5\n# config: ", 0), 0u);

    ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 6 --out " + (dir / "c").string()), 0);
    const auto c = slurp(dir / "c" / "data.csv");
    EXPECT_NE(c, a);
    EXPECT_NE(c.find("# seed: 6\n"), std::string::npos);
    EXPECT_NE(c.find("\"seed\":6"), std::string::npos);
}

TEST_F(Cli, OutFlagOverridesFile) {
    json j{{"schema", 1}, {"seed", 1}, {"out", (dir / "from_file").string()}, {"dataset", {{"preset", "blob3d"}}}};
    const auto cfg = write_config("g.json", j);
    ASSERT_EQ(run("generate --config " + cfg.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "from_file" / "data.csv"));
    ASSERT_EQ(run("generate --config " + cfg.string() + " --out " + (dir / "from_flag").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "from_flag" / "data.csv"));
    // The output directory is not part of the echo, so both files match.
    EXPECT_EQ(slurp(dir / "from_file" / "data.csv"), slurp(dir / "from_flag" / "data.csv"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
    const auto gen = " --out " + (dir / "o").string();
    auto expect2 = [&](const std::string& text, const char* what) {
        const auto cfg = write_config("bad.json", text);
        EXPECT_EQ(run("generate --config " + cfg.string() + gen), 2) << what;
    };
    expect2("{\"schema\": 1, \"seed\": 1, \"dataset\": {\"preset\": \"blob3d\"}", "malformed json");
    expect2(R"({"schema": 2, "seed": 1, "dataset": {"preset": "blob3d"}})", "wrong schema");
    expect2(R"({"seed": 1, "dataset": {"preset": "blob3d"}})", "missing schema");
    expect2(R"({"schema": 1, "dataset": {"preset": "blob3d"}})", "missing seed");
    expect2(R"({"schema": 1, "seed": 1, "dataset": {"preset": "blob3d"}, "colour": 3})", "unknown key");
    expect2(R"({"schema": 1, "seed": 1, "dataset": {"preset": "nope"}})", "unknown preset");
    expect2(R"({"schema": 1, "seed": 1, "dataset": {"blobs": []}})", "empty blobs");
    expect2(R"({"schema": 1, "seed": 1})", "no dataset");
    EXPECT_EQ(run("generate --config " + (dir / "missing.json").string() + gen), 2);

    const auto noover = write_config(
        "r.json", json{{"schema", 1}, {"seed", 1}, {"dataset", two_class()}, {"method", "gicaps-o"}});
    EXPECT_EQ(run("resample --config " + noover.string() + gen), 2);
    const auto nosub = write_config(
        "r2.json", json{{"schema", 1}, {"seed", 1}, {"dataset", two_class()}, {"method", "gicaps"}, {"oversample", json::object()}});
    EXPECT_EQ(run("resample --config " + nosub.string() + gen), 2);
    EXPECT_NE(slurp(dir / "stderr.txt").find("undersample"), std::string::npos);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
    const auto cfg = write_config(
        "r.json", json{{"schema", 1}, {"seed", 1}, {"dataset", {{"csv", (dir / "nope.csv").string()}}}, {"method", "none"}});
    EXPECT_EQ(run("resample --config " + cfg.string() + " --out " + (dir / "o").string()), 1);
    EXPECT_FALSE(slurp(dir / "stderr.txt").empty());
}

TEST_F(Cli, ResampleNoneIsByteIdentical) {
    const auto cfg =
        write_config("r.json", json{{"schema", 1}, {"seed", 3}, {"dataset", two_class()}, {"method", "none"}});
    ASSERT_EQ(run("resample --config " + cfg.string() + " --out " + (dir / "o").string()), 0);
    const auto norm = slurp(dir / "o" / "normalized.csv");
    EXPECT_FALSE(norm.empty());
    EXPECT_EQ(norm, slurp(dir / "o" / "resampled.csv"));
    EXPECT_FALSE(fs::exists(dir / "o" / "audit.csv"));
}

TEST_F(Cli, ResampleCsvInputAndOutputs) {
    const auto gen = write_config("g.json", json{{"schema", 1}, {"seed", 2}, {"dataset", two_class()}});
    ASSERT_EQ(run("generate --config " + gen.string() + " --out " + (dir / "g").string()), 0);
    json r{{"schema", 1},
           {"seed", 2},
           {"dataset", {{"csv", (dir / "g" / "data.csv").string()}, {"label_column", "label"}}},
           {"method", "gicaps"},
           {"undersample", json::object()},
           {"oversample", json::object()}};
    const auto cfg = write_config("r.json", r);
    ASSERT_EQ(run("resample --config " + cfg.string() + " --out " + (dir / "a").string()), 0)
        << slurp(dir / "stderr.txt");
    ASSERT_EQ(run("resample --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
    for (const char* f : {"normalized.csv", "resampled.csv", "counts.csv", "provenance.csv", "audit.csv"}) {
        const auto a = slurp(dir / "a" / f);
        EXPECT_EQ(a.rfind("# gicaps resample\n# schema: 1\n# seed: 2\n# config: ", 0), 0u) << f;
        EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
    }
    // counts.csv: both classes end at the same size.
    std::istringstream counts(slurp(dir / "a" / "counts.csv"));
    std::vector<std::string> after;
    for (std::string line; std::getline(counts, line);) {
        if (line.empty() || line[0] == '#' || line.rfind("class,", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 6u);
        after.push_back(cells[4]);
    }
    ASSERT_EQ(after.size(), 2u);
    EXPECT_EQ(after[0], after[1]);
}

TEST_F(Cli, MarginAndDumpPoints) {
    json m{{"schema", 1},
           {"seed", 1},
           {"dataset", two_class(4)},
           {"methods", {"none", "smote"}},
           {"baselines", json::object()},
           {"margin", {{"classes", {0, 1}}, {"n_pca", 2}}}};
    const auto mc = write_config("m.json", m);
    ASSERT_EQ(run("margin --config " + mc.string() + " --out " + (dir / "m1").string()), 0) << slurp(dir / "stderr.txt");
    ASSERT_EQ(run("margin --config " + mc.string() + " --out " + (dir / "m2").string()), 0);
    const auto margin = slurp(dir / "m1" / "margin.csv");
    EXPECT_EQ(margin, slurp(dir / "m2" / "margin.csv"));
    EXPECT_EQ(margin.rfind("# gicaps margin\n", 0), 0u);
    EXPECT_NE(margin.find("\nnone,0,1,2,"), std::string::npos);
    EXPECT_NE(margin.find("\nsmote,0,1,2,"), std::string::npos);

    json d{{"schema", 1}, {"seed", 1}, {"dataset", two_class()}, {"method", "gicaps"},
           {"undersample", json::object()}, {"oversample", json::object()}};
    const auto dc = write_config("d.json", d);
    ASSERT_EQ(run("dump-points --config " + dc.string() + " --out " + (dir / "d1").string()), 0);
    ASSERT_EQ(run("dump-points --config " + dc.string() + " --out " + (dir / "d2").string()), 0);
    const auto pts = slurp(dir / "d1" / "points.csv");
    EXPECT_EQ(pts, slurp(dir / "d2" / "points.csv"));
    EXPECT_EQ(pts.rfind("# gicaps dump-points\n", 0), 0u);
    for (const char* kind : {",original,", ",synthetic,", ",rejected,"}) EXPECT_NE(pts.find(kind), std::string::npos) << kind;
}

TEST_F(Cli, BenchmarkDeterministicAcrossThreads) {
    const auto cfg = write_config("b.json", benchmark_config());
    ASSERT_EQ(run("benchmark --config " + cfg.string() + " --out " + (dir / "t1").string()), 0) << slurp(dir / "stderr.txt");
    ASSERT_EQ(run("benchmark --config " + cfg.string() + " --out " + (dir / "t1b").string()), 0);
    ASSERT_EQ(run("benchmark --config " + cfg.string() + " --threads 3 --out " + (dir / "t3").string()), 0);
    for (const char* f : {"report.jsonl", "report.txt"}) {
        const auto a = slurp(dir / "t1" / f);
        EXPECT_EQ(a, slurp(dir / "t1b" / f)) << f;
        EXPECT_EQ(a, slurp(dir / "t3" / f)) << f;
    }

    const auto r1 = jsonl(dir / "t1" / "report.jsonl");
    EXPECT_FALSE(r1[0]["config"]["cv"].contains("threads"));

    std::size_t summaries = 0;
    for (const auto& rec : r1) summaries += rec["record"] == "summary";
    EXPECT_EQ(summaries, 2u);
    EXPECT_EQ(r1[0]["record"], "header");
    EXPECT_EQ(r1[0]["seed"], 1);
}

TEST_F(Cli, BenchmarkGoldenRun) {
    const fs::path golden = fs::path(GICAPS_SOURCE_DIR) / "tests" / "golden";
    ASSERT_EQ(run("benchmark --config " + (golden / "benchmark_two_class.json").string() + " --out " + (dir / "o").string()), 0);
    EXPECT_EQ(slurp(dir / "o" / "report.jsonl"), slurp(golden / "benchmark_two_class.jsonl"));
}

// The reference expectation for the committed golden run. It does not hold
// for this implementation; see the decisions ledger.
TEST(CliGolden, GicapsGmeanNotBelowSmote) {
    const fs::path golden = fs::path(GICAPS_SOURCE_DIR) / "tests" / "golden" / "benchmark_two_class.jsonl";
    double gicaps = -1, smote = -1;
    for (const auto& rec : jsonl(golden)) {
        if (rec["record"] != "summary") continue;
        if (rec["method"] == "gicaps") gicaps = rec["g_mean"];
        if (rec["method"] == "smote") smote = rec["g_mean"];
    }
    ASSERT_GE(gicaps, 0);
    ASSERT_GE(smote, 0);
    EXPECT_GE(gicaps, smote);
}
