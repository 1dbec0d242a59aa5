#pragma once

#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/gmr.hpp"
#include "gicaps/resample.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace gicaps::evaluate {

using Confusion = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

/// Metrics on a 0-100 scale.
struct Metrics {
    double oa = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    double g_mean = 0.0;
};

inline double g_mean(double precision, double recall) { return std::sqrt(precision * recall); }

/// Rows are true classes, columns predictions. Precision, recall and F are
/// macro averages over the classes present in the test set (non-zero row);
/// an undefined ratio counts as 0 and is warned about.
inline Metrics compute_metrics(const Confusion& cm) {
    if (cm.rows() != cm.cols() || cm.rows() == 0) throw Error("confusion matrix must be square and non-empty");
    if ((cm.array() < 0).any()) throw Error("confusion matrix has negative entries");
    const long total = cm.sum();
    if (total == 0) throw Error("confusion matrix is all zero");
    Metrics m;
    m.oa = 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
    int present = 0;
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    for (Eigen::Index c = 0; c < cm.rows(); ++c) {
        const long row = cm.row(c).sum();
        if (row == 0) continue;
        ++present;
        const long col = cm.col(c).sum();
        const double tp = static_cast<double>(cm(c, c));
        double p = 0.0;
        if (col == 0)
            warn("precision undefined for class " + std::to_string(c) + " (never predicted); counted as 0");
        else
            p = tp / static_cast<double>(col);
        const double r = tp / static_cast<double>(row);
        p_sum += p;
        r_sum += r;
        f_sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    m.precision = 100.0 * p_sum / present;
    m.recall = 100.0 * r_sum / present;
    m.f_measure = 100.0 * f_sum / present;
    m.g_mean = g_mean(m.precision, m.recall);
    return m;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct EvalReport {
    std::string dataset;
    std::string method;
    std::uint64_t seed = 0;
    Confusion confusion;         ///< summed over folds
    Metrics mean;                ///< fold means of OA, P, R, F; g_mean from the mean P and R
    std::vector<Metrics> per_fold;
    std::vector<Confusion> fold_confusion;
    std::vector<std::size_t> fold_extra_test;  ///< rejected training rows added to each test set
};

struct CvOptions {
    int k_folds = 10;
    unsigned threads = 1;
};

namespace detail {

struct FoldOutcome {
    Confusion cm;
    std::size_t extra = 0;
};

inline FoldOutcome run_fold(const Dataset& ds, const Fold& fold, std::size_t f, const ResampleSpec& spec,
                            const gmr::GmrConfig& gcfg, std::uint64_t seed) {
    const Dataset train = ds.subset(fold.train);
    const auto norm = fit_minmax(train);
    const Dataset train_n = apply_normalization(train, norm);
    const auto rr = resample(train_n, spec, derive_seed(seed, "cv-resample", {f}));

    // Rejected training rows join the test set.
    std::vector<std::size_t> test = fold.test;
    for (auto r : rr.rejected) test.push_back(fold.train[r]);
    std::sort(test.begin(), test.end());

    // No synthetic row may originate from a test row.
    std::vector<char> in_test(ds.rows(), 0);
    for (auto r : test) in_test[r] = 1;
    for (const auto& s : rr.synthetic)
        if (in_test[fold.train.at(s.m_index)] || in_test[fold.train.at(s.v_index)])
            throw Error("leakage: synthetic row generated from a test row");
    for (auto src : rr.source_row)
        if (src >= 0 && in_test[fold.train[static_cast<std::size_t>(src)]]) throw Error("leakage: test row in training data");

    auto g = gcfg;
    if (!g.class_values) g.class_values = gmr::default_class_values(ds.num_classes());
    const auto model = gmr::fit(rr.data, g, derive_seed(seed, "cv-gmr", {f}));
    const Dataset test_n = apply_normalization(ds.subset(test), norm);
    const auto pred = model.predict_classes(test_n.features());
    FoldOutcome out{Confusion::Zero(ds.num_classes(), ds.num_classes()), rr.rejected.size()};
    for (std::size_t i = 0; i < test.size(); ++i) ++out.cm(test_n.label(i), pred[i]);
    return out;
}

}  // namespace detail

/// k-fold CV: per fold, min-max fitted on the training part, resampling of
/// the training part only, GMR fit, evaluation on the test part plus rows the
/// undersampler rejected. Folds may run on several threads; each uses seeds
/// derived from (seed, fold) so the report does not depend on the schedule.
inline EvalReport run_cv(const Dataset& ds, const ResampleSpec& spec, const gmr::GmrConfig& gcfg, const CvOptions& opt,
                         std::uint64_t seed, const std::string& dataset_name = "dataset") {
    const auto folds = stratified_kfold(ds, opt.k_folds, derive_seed(seed, "cv-folds"));
    std::vector<detail::FoldOutcome> outcomes(folds.size());
    std::vector<std::exception_ptr> errors(folds.size());
    auto work = [&](std::size_t f) {
        try {
            outcomes[f] = detail::run_fold(ds, folds[f], f, spec, gcfg, seed);
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(folds.size())));
    if (threads == 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) work(f);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t f; (f = next++) < folds.size();) work(f);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    EvalReport rep;
    rep.dataset = dataset_name;
    rep.method = method_name(spec.method);
    rep.seed = seed;
    rep.confusion = Confusion::Zero(ds.num_classes(), ds.num_classes());
    for (auto& o : outcomes) {
        rep.confusion += o.cm;
        rep.fold_confusion.push_back(o.cm);
        rep.per_fold.push_back(compute_metrics(o.cm));
        rep.fold_extra_test.push_back(o.extra);
    }
    const double n = static_cast<double>(rep.per_fold.size());
    for (const auto& m : rep.per_fold) {
        rep.mean.oa += m.oa / n;
        rep.mean.precision += m.precision / n;
        rep.mean.recall += m.recall / n;
        rep.mean.f_measure += m.f_measure / n;
    }
    rep.mean.g_mean = g_mean(rep.mean.precision, rep.mean.recall);
    return rep;
}

// ---------------------------------------------------------------------------
// PCA and the margin proxy

struct Pca {
    Vector mean;
    Eigen::MatrixXd components;  ///< D x n, columns by descending eigenvalue
    Vector eigenvalues;

    Matrix transform(const Matrix& X) const {
        Matrix out = (X.rowwise() - mean.transpose()) * components;
        return out;
    }
};

/// Eigendecomposition of the sample covariance. Each component is signed so
/// that its largest-magnitude loading is positive.
inline Pca fit_pca(const Matrix& X, int n_components) {
    const auto d = X.cols();
    if (n_components < 1 || n_components > d) throw UsageError("pca: n_components must be in [1, D]");
    if (X.rows() < 2) throw Error("pca: need at least 2 rows");
    Pca p;
    p.mean = X.colwise().mean().transpose();
    const Eigen::MatrixXd c = X.rowwise() - p.mean.transpose();
    const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(X.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
    p.components.resize(d, n_components);
    p.eigenvalues.resize(n_components);
    for (int j = 0; j < n_components; ++j) {
        const auto src = d - 1 - j;  // ascending order from the solver
        Vector v = es.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        p.components.col(j) = v;
        p.eigenvalues(j) = es.eigenvalues()(src);
    }
    return p;
}

/// Minimum Euclidean distance between a row of class_a and a row of class_b
/// after projecting their union onto its first n_pca principal components.
inline double margin_ablation(const Dataset& ds, int class_a, int class_b, int n_pca) {
    const auto& ra = ds.class_rows(class_a);
    const auto& rb = ds.class_rows(class_b);
    if (ra.empty() || rb.empty()) throw Error("margin: both classes must be non-empty");
    if (n_pca > static_cast<int>(ds.dims())) throw UsageError("margin: n_pca exceeds the feature count");
    std::vector<std::size_t> both(ra.begin(), ra.end());
    both.insert(both.end(), rb.begin(), rb.end());
    const Matrix X = ds.gather(both);
    const auto pca = fit_pca(X, n_pca);
    const Matrix Y = pca.transform(X);
    const auto na = static_cast<Eigen::Index>(ra.size());
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = na; j < Y.rows(); ++j) best = std::min(best, (Y.row(i) - Y.row(j)).squaredNorm());
    return std::sqrt(best);
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr int kReportSchema = 1;

inline nlohmann::json metrics_json(const Metrics& m) {
    return {{"oa", m.oa}, {"precision", m.precision}, {"recall", m.recall}, {"f_measure", m.f_measure}, {"g_mean", m.g_mean}};
}

inline nlohmann::json confusion_json(const Confusion& cm) {
    auto a = nlohmann::json::array();
    for (Eigen::Index r = 0; r < cm.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < cm.cols(); ++c) row.push_back(cm(r, c));
        a.push_back(row);
    }
    return a;
}

/// One JSON object per line: a "fold" record per (dataset, method, fold)
/// followed by a "summary" record.
inline void write_report_jsonl(const std::vector<EvalReport>& reports, std::ostream& out) {
    for (const auto& r : reports) {
        for (std::size_t f = 0; f < r.per_fold.size(); ++f) {
            nlohmann::json j = metrics_json(r.per_fold[f]);
            j["schema"] = kReportSchema;
            j["record"] = "fold";
            j["dataset"] = r.dataset;
            j["method"] = r.method;
            j["seed"] = r.seed;
            j["fold"] = f;
            j["extra_test_rows"] = r.fold_extra_test[f];
            j["confusion"] = confusion_json(r.fold_confusion[f]);
            out << j.dump() << '\n';
        }
        nlohmann::json j = metrics_json(r.mean);
        j["schema"] = kReportSchema;
        j["record"] = "summary";
        j["dataset"] = r.dataset;
        j["method"] = r.method;
        j["seed"] = r.seed;
        j["folds"] = r.per_fold.size();
        j["confusion"] = confusion_json(r.confusion);
        out << j.dump() << '\n';
    }
}

/// Aligned table, one row per report: Dataset, Method, OA, Precision, Recall,
/// F-measure, G-Mean.
inline void write_report_table(const std::vector<EvalReport>& reports, std::ostream& out) {
    std::size_t wd = 7, wm = 6;
    for (const auto& r : reports) {
        wd = std::max(wd, r.dataset.size());
        wm = std::max(wm, r.method.size());
    }
    auto cell = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%10.2f", v);
        return std::string(b);
    };
    out << std::left << std::setw(static_cast<int>(wd)) << "Dataset" << "  " << std::setw(static_cast<int>(wm)) << "Method"
        << std::right << std::setw(10) << "OA" << std::setw(10) << "Precision" << std::setw(10) << "Recall" << std::setw(10)
        << "F-measure" << std::setw(10) << "G-Mean" << '\n';
    for (const auto& r : reports) {
        out << std::left << std::setw(static_cast<int>(wd)) << r.dataset << "  " << std::setw(static_cast<int>(wm)) << r.method
            << cell(r.mean.oa) << cell(r.mean.precision) << cell(r.mean.recall) << cell(r.mean.f_measure) << cell(r.mean.g_mean)
            << '\n';
    }
    out << std::right;
}

}  // namespace gicaps::evaluate
