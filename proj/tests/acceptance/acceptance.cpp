#include "gicaps/cli/config.hpp"
#include "gicaps/evaluate.hpp"
#include "gicaps/geometry.hpp"
#include "gicaps/gmr.hpp"
#include "gicaps/resample.hpp"
#include "gicaps/simulate.hpp"
#include "gicaps/undersample.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace gicaps;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Dataset preset(const std::string& name, int dims, std::uint64_t seed, bool normalize = false) {
    cli::DatasetSpec d;
    d.name = name;
    d.preset = name;
    d.dims = dims;
    Dataset ds = cli::load_dataset(d, seed);
    return normalize ? normalize_minmax(ds).first : ds;
}

ResampleSpec spec_for(Method m, int smote_percent = 300) {
    ResampleSpec s;
    s.method = m;
    s.base.smote_percent = smote_percent;
    return s;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void expect_monotone(const gmr::GmrModel& m, const std::string& what) {
    for (std::size_t i = 1; i < m.objective_history.size(); ++i) {
        if (std::find(m.reseeded.begin(), m.reseeded.end(), static_cast<int>(i)) != m.reseeded.end()) continue;
        EXPECT_GE(m.objective_history[i], m.objective_history[i - 1] - 1e-9 * std::abs(m.objective_history[i - 1]))
            << what << " step " << i;
    }
}

}  // namespace

// 1. Crossing distance against a brute-force line search; coplanar
// straddling pairs cross the segment exactly.
TEST(Criterion, c1) {
    const auto t0 = Clock::now();
    auto rng = make_rng(1, "acceptance-crossing");
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const int d = 3 + t % 8;
        Vector a(d), b(d), t1(d), t2(d);
        for (int j = 0; j < d; ++j) {
            a(j) = standard_normal(rng);
            b(j) = standard_normal(rng);
            t1(j) = standard_normal(rng);
            t2(j) = standard_normal(rng);
        }
        const auto c = geometry::crossing(geometry::SegmentFrame::make(a, b), t1, t2);
        const auto ao = oracle::crossing_point(a, b, t1, t2);
        Vector o(d);
        for (int j = 0; j < d; ++j) o(j) = static_cast<double>(ao[static_cast<std::size_t>(j)]) + a(j);
        worst = std::max(worst, std::abs(c.c_dist - oracle::point_line_distance_search(o, t1, t2)));
    }
    EXPECT_LE(worst, 1e-9);

    double worst2 = 0.0;
    for (int t = 0; t < 1000; ++t) {
        Vector a(2), b(2);
        a << standard_normal(rng), standard_normal(rng);
        b << standard_normal(rng), standard_normal(rng);
        const Vector ab = b - a;
        const Vector n{{-ab(1), ab(0)}};
        auto side = [&](double sign) {
            return Vector(a + uniform01(rng) * ab + sign * (0.05 + uniform01(rng)) * n);
        };
        const auto c = geometry::crossing(geometry::SegmentFrame::make(a, b), side(1.0), side(-1.0));
        worst2 = std::max(worst2, c.c_dist);
    }
    EXPECT_LE(worst2, 1e-9);
    const double secs = seconds_since(t0);
    std::cout << "  criterion 1: max |c_dist - oracle| = " << worst << ", max 2-D c_dist = " << worst2 << ", " << secs
              << " s\n";
    EXPECT_LT(secs, 5.0);
}

// 2. Undersampling contract on the 3-D blob, checked from the written audit.
TEST(Criterion, c2) {
    const auto t0 = Clock::now();
    const auto ds = generate_gmm_data(simulate::blob3d(), 1);
    ASSERT_EQ(ds.rows(), 2000u);
    undersample::UndersampleConfig cfg;
    cfg.n_target = 600;
    const auto r = undersample::gicaps_undersample(ds.features(), cfg, 1);

    const fs::path audit = fs::temp_directory_path() / ("gicaps_accept_audit_" + std::to_string(::getpid()) + ".csv");
    {
        std::ofstream out(audit);
        undersample::write_audit_csv(r.audit, out);
    }
    std::ifstream in(audit);
    std::string line;
    std::getline(in, line);
    ASSERT_EQ(line, "cluster,row,status,reason,theta,gap,orthant_prev,orthant,alpha_eff");
    std::size_t kept = 0, records = 0, violations = 0;
    std::set<int> clusters, kept_clusters;
    std::map<int, double> last_theta;
    std::map<int, std::string> last_orthant;
    while (std::getline(in, line)) {
        const auto f = split(line);
        ASSERT_EQ(f.size(), 9u) << line;
        ++records;
        const int cl = std::stoi(f[0]);
        clusters.insert(cl);
        if (f[2] != "kept") continue;
        ++kept;
        kept_clusters.insert(cl);
        const double theta = std::stod(f[4]), alpha = std::stod(f[8]);
        if (last_theta.count(cl)) {
            const bool gap = theta - last_theta[cl] > alpha;
            const bool orth = f[7] != last_orthant[cl];
            if (!(gap || orth)) ++violations;
        }
        last_theta[cl] = theta;
        last_orthant[cl] = f[7];
    }
    fs::remove(audit);
    EXPECT_EQ(records, 2000u);
    EXPECT_EQ(kept, 600u);
    EXPECT_EQ(r.retained.size(), 600u);
    EXPECT_EQ(kept_clusters, clusters);
    EXPECT_EQ(violations, 0u);
    const double secs = seconds_since(t0);
    std::cout << "  criterion 2: kept " << kept << " of " << records << " in " << clusters.size() << " clusters, "
              << violations << " walk violations, " << secs << " s\n";
    EXPECT_LT(secs, 30.0);
}

// 3. GICaPS-O never lands inside a no man's land interval; ADASYN places
// points nearer the majority than any original minority point.
TEST(Criterion, c3) {
    int intruding_seeds = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ds = preset("two_class", 3, seed);
        const auto g = resample(ds, spec_for(Method::gicaps_o), seed);
        std::size_t inside = 0;
        for (const auto& s : g.synthetic)
            for (const auto& iv : s.nml) inside += iv.contains(s.param);
        EXPECT_EQ(inside, 0u) << "seed " << seed;
        EXPECT_FALSE(g.synthetic.empty());

        const auto a = resample(ds, spec_for(Method::adasyn), seed);
        const auto& major = ds.class_rows(0);
        const auto& minor = ds.class_rows(1);
        std::size_t intruders = 0;
        for (const auto& s : a.synthetic) {
            double dmaj = std::numeric_limits<double>::infinity(), dmin = dmaj;
            for (auto r : major) dmaj = std::min(dmaj, (ds.row(r).transpose() - s.point).norm());
            for (auto r : minor) dmin = std::min(dmin, (ds.row(r).transpose() - s.point).norm());
            intruders += dmaj < dmin;
        }
        intruding_seeds += intruders > 0;
        std::cout << "  criterion 3: seed " << seed << ": gicaps-o " << g.synthetic.size() << " synthetic, " << inside
                  << " inside NML; adasyn " << a.synthetic.size() << " synthetic, " << intruders << " intruders\n";
    }
    EXPECT_GE(intruding_seeds, 4);
}

// 4. Balance on the 16-class pain-shaped distribution.
TEST(Criterion, c4) {
    const auto ds = preset("pain_like", 4, 1);
    const auto before = ds.class_sizes();
    ASSERT_EQ(before.size(), 16u);
    const auto target = default_n_target(ds);
    const auto g = resample(ds, spec_for(Method::gicaps), 1);
    const auto after = g.data.class_sizes();
    std::cout << "  criterion 4: common target " << target << "; class sizes before -> gicaps -> smote300:\n";
    const auto s = resample(ds, spec_for(Method::smote, 300), 1);
    const auto smoted = s.data.class_sizes();
    for (std::size_t c = 0; c < before.size(); ++c) {
        std::cout << "    class " << std::setw(2) << c << ": " << before[c] << " -> " << after[c] << " -> " << smoted[c]
                  << (before[c] == 1 ? "  (singleton, skipped)" : "") << '\n';
        if (before[c] == 1) {
            EXPECT_EQ(after[c], 1u);
            continue;
        }
        EXPECT_EQ(after[c], target) << "class " << c;
        if (c == 0)
            EXPECT_EQ(smoted[c], before[c]);
        else
            EXPECT_EQ(smoted[c], 4 * before[c]) << "class " << c;
    }
}

// 5. PCA(4) 1-NN margin ordering on 4-D two-class data.
TEST(Criterion, c5) {
    const auto t0 = Clock::now();
    int wins_smote = 0, wins_adasyn = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ds = preset("two_class", 4, seed, true);
        auto margin = [&](const ResampleSpec& spec) {
            return evaluate::margin_ablation(resample(ds, spec, seed).data, 0, 1, 4);
        };
        const double go = margin(spec_for(Method::gicaps_o));
        const double sm = margin(spec_for(Method::smote, 1400));
        const double ad = margin(spec_for(Method::adasyn));
        wins_smote += go > sm;
        wins_adasyn += go > ad;
        std::cout << "  criterion 5: seed " << seed << ": gicaps-o " << go << ", smote " << sm << ", adasyn " << ad << '\n';
    }
    EXPECT_GE(wins_smote, 4);
    EXPECT_GE(wins_adasyn, 4);
    const double secs = seconds_since(t0);
    std::cout << "  criterion 5: gicaps-o above smote in " << wins_smote << "/5, above adasyn in " << wins_adasyn << "/5, "
              << secs << " s\n";
    EXPECT_LT(secs, 60.0);
}

// 6. G-mean from macro precision and recall.
TEST(Criterion, c6) {
    EXPECT_NEAR(evaluate::g_mean(96.80, 95.99), 96.39, 0.01);
    evaluate::Confusion cm(2, 2);
    cm << 90, 10, 5, 45;
    const auto m = evaluate::compute_metrics(cm);
    EXPECT_NEAR(m.g_mean, std::sqrt(m.precision * m.recall), 1e-12);
    std::cout << "  criterion 6: sqrt(96.80 * 95.99) = " << std::setprecision(6) << evaluate::g_mean(96.80, 95.99) << '\n';
}

// 7. GMR: monotone EM, separable accuracy, single-component closed form.
TEST(Criterion, c7) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (const auto& [name, dims] : std::vector<std::pair<std::string, int>>{
                 {"two_class", 3}, {"two_class", 4}, {"imbalanced3", 3}, {"pain_like", 4}}) {
            gmr::GmrConfig cfg;
            cfg.K = 3;
            expect_monotone(gmr::fit(preset(name, dims, seed, true), cfg, seed), name);
        }
    }

    const auto sep = generate_gmm_data({{Vector{{0.0, 0.0, 0.0}}, simulate::iso(3, 0.3), 200, 0},
                                        {Vector{{4.0, 0.0, 0.0}}, simulate::iso(3, 0.3), 200, 1},
                                        {Vector{{8.0, 4.0, 0.0}}, simulate::iso(3, 0.3), 200, 2}},
                                       1);
    gmr::GmrConfig g3;
    g3.K = 3;
    expect_monotone(gmr::fit(sep, g3, 1), "separated");
    const auto rep = evaluate::run_cv(sep, ResampleSpec{}, g3, evaluate::CvOptions{10, 1}, 1, "separated");
    EXPECT_GE(rep.mean.oa, 95.0);

    auto rng = make_rng(7, "acceptance-k1");
    Matrix X(400, 3);
    std::vector<double> y(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = standard_normal(rng) * (1 + j);
        y[static_cast<std::size_t>(i)] = X(i, 0) - 0.5 * X(i, 1) + 0.2 * standard_normal(rng);
    }
    gmr::GmrConfig g1;
    g1.K = 1;
    const auto m = gmr::fit(X, y, g1, 1);
    Matrix Z(400, 4);
    Z.leftCols(3) = X;
    for (Eigen::Index i = 0; i < 400; ++i) Z(i, 3) = y[static_cast<std::size_t>(i)];
    const Vector mu = Z.colwise().mean().transpose();
    const Eigen::MatrixXd c = Z.rowwise() - mu.transpose();
    const Eigen::MatrixXd S = c.transpose() * c / 400.0 + m.reg * Eigen::MatrixXd::Identity(4, 4);
    const double dmu = (m.means[0] - mu).cwiseAbs().maxCoeff(), dcov = (m.covs[0] - S).cwiseAbs().maxCoeff();
    EXPECT_LE(dmu, 1e-10);
    EXPECT_LE(dcov, 1e-10);
    std::cout << "  criterion 7: separated 10-fold OA " << rep.mean.oa << "; K=1 max deviation mean " << dmu << ", cov "
              << dcov << '\n';
}

// 8. Every CLI subcommand is bitwise reproducible, also with worker threads.
TEST(Criterion, c8) {
    const fs::path dir = fs::temp_directory_path() / ("gicaps_accept_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(GICAPS_TOOL) + " " + args + " >/dev/null 2>" + (dir / "stderr.txt").string();
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    };
    const json two{{"name", "two_class"}, {"preset", "two_class"}, {"dims", 3}};
    const std::vector<std::tuple<std::string, json, std::vector<std::string>>> cases{
        {"generate", {{"schema", 1}, {"seed", 4}, {"dataset", {{"preset", "blob3d"}}}}, {"data.csv"}},
        {"resample",
         {{"schema", 1}, {"seed", 4}, {"dataset", two}, {"method", "gicaps"}, {"undersample", json::object()},
          {"oversample", json::object()}},
         {"normalized.csv", "resampled.csv", "counts.csv", "provenance.csv", "audit.csv"}},
        {"benchmark",
         {{"schema", 1}, {"seed", 4}, {"dataset", two}, {"methods", {"gicaps", "smote", "adasyn"}},
          {"undersample", json::object()}, {"oversample", json::object()}, {"baselines", json::object()},
          {"cv", {{"folds", 5}}}},
         {"report.jsonl", "report.txt"}},
        {"margin",
         {{"schema", 1}, {"seed", 4}, {"dataset", two}, {"methods", {"none", "gicaps-o", "smote", "adasyn"}},
          {"oversample", json::object()}, {"baselines", json::object()}},
         {"margin.csv"}},
        {"dump-points",
         {{"schema", 1}, {"seed", 4}, {"dataset", two}, {"method", "gicaps"}, {"undersample", json::object()},
          {"oversample", json::object()}},
         {"points.csv"}},
    };
    std::size_t compared = 0;
    for (const auto& [cmd, cfg, files] : cases) {
        const auto path = dir / (cmd + ".json");
        std::ofstream(path) << cfg.dump(2);
        const std::vector<std::string> variants{"--threads 1", "--threads 1", "--threads 4"};
        for (std::size_t v = 0; v < variants.size(); ++v) {
            const auto out = dir / (cmd + "_" + std::to_string(v));
            ASSERT_EQ(run(cmd + " --config " + path.string() + " " + variants[v] + " --out " + out.string()), 0)
                << cmd << ": " << slurp(dir / "stderr.txt");
        }
        for (const auto& f : files) {
            const auto ref = slurp(dir / (cmd + "_0") / f);
            EXPECT_FALSE(ref.empty()) << cmd << " " << f;
            for (int v = 1; v < 3; ++v) {
                EXPECT_EQ(ref, slurp(dir / (cmd + "_" + std::to_string(v)) / f)) << cmd << " " << f << " run " << v;
                ++compared;
            }
        }
    }
    std::cout << "  criterion 8: " << compared << " output comparisons across 5 subcommands\n";
    if (!::testing::Test::HasFailure()) fs::remove_all(dir);
}

// 9. Cross-validated G-mean ordering on the 100:10:1 benchmark.
TEST(Criterion, c9) {
    const auto t0 = Clock::now();
    gmr::GmrConfig g;
    g.K = 3;
    const std::vector<Method> methods{Method::gicaps, Method::smote, Method::adasyn};
    std::vector<double> sum(methods.size(), 0.0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ds = preset("imbalanced3", 3, seed);
        std::cout << "  criterion 9: seed " << seed << ":";
        for (std::size_t k = 0; k < methods.size(); ++k) {
            const auto rep = evaluate::run_cv(ds, spec_for(methods[k]), g, evaluate::CvOptions{10, 1}, seed, "imbalanced3");
            sum[k] += rep.mean.g_mean;
            std::cout << ' ' << method_name(methods[k]) << ' ' << rep.mean.g_mean;
        }
        std::cout << '\n';
    }
    const double gi = sum[0] / 5, sm = sum[1] / 5, ad = sum[2] / 5;
    const double secs = seconds_since(t0);
    std::cout << "  criterion 9: mean G-mean gicaps " << gi << ", smote " << sm << ", adasyn " << ad << ", " << secs << " s\n";
    EXPECT_GE(gi, sm);
    EXPECT_GE(sm, ad);
    EXPECT_LT(secs, 300.0);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    const int rc = RUN_ALL_TESTS();
    const auto* unit = ::testing::UnitTest::GetInstance();
    std::cout << "\nAcceptance summary\n";
    for (int i = 0; i < unit->total_test_suite_count(); ++i) {
        const auto* suite = unit->GetTestSuite(i);
        for (int j = 0; j < suite->total_test_count(); ++j) {
            const auto* t = suite->GetTestInfo(j);
            if (!t->should_run()) continue;
            std::cout << (t->result()->Passed() ? "PASS" : "FAIL") << " criterion " << (t->name() + 1) << '\n';
        }
    }
    return rc;
}
