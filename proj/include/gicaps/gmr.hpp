#pragma once

#include "gicaps/clustering.hpp"
#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gicaps::gmr {

struct GmrConfig {
    int K = 3;
    int max_iter = 200;
    double tol = 1e-8;                          ///< stop when the objective gains less than this
    std::optional<std::vector<double>> class_values;  ///< default 0, 1, ..., C-1
};

inline constexpr double kRidgeRel = 1e-6;
inline constexpr double kCollapseWeight = 1e-8;
inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Joint mixture over xi = [x; y]. Component blocks: x is the first D
/// coordinates, y the last.
class GmrModel {
public:
    int K = 0;
    std::size_t D = 0;
    std::vector<double> weights;
    std::vector<Vector> means;              ///< length D + 1
    std::vector<Eigen::MatrixXd> covs;      ///< (D + 1) x (D + 1)
    std::vector<double> class_values;
    double reg = 0.0;                       ///< ridge added to every covariance diagonal (lower bound)
    std::vector<double> objective_history;  ///< penalised log-likelihood after each E-step
    std::vector<int> reseeded;              ///< iterations at which a component was re-seeded

    /// Validates the parameters and caches per-component factorisations.
    void prepare() {
        if (K < 1 || weights.size() != static_cast<std::size_t>(K) || means.size() != weights.size() || covs.size() != weights.size())
            throw Error("gmr: inconsistent model");
        const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (std::abs(wsum - 1.0) > 1e-9) throw Error("gmr: weights do not sum to 1");
        const auto d = static_cast<Eigen::Index>(D);
        cache_.clear();
        for (int k = 0; k < K; ++k) {
            if (!(weights[k] > 0.0)) throw Error("gmr: non-positive component weight");
            if (means[k].size() != d + 1 || covs[k].rows() != d + 1 || covs[k].cols() != d + 1) throw Error("gmr: block size mismatch");
            Cache c;
            c.llt.compute(covs[k].topLeftCorner(d, d));
            if (c.llt.info() != Eigen::Success) throw Error("gmr: covariance not positive definite");
            c.logdet = 2.0 * c.llt.matrixLLT().diagonal().array().log().sum();
            c.gain = c.llt.solve(covs[k].topRightCorner(d, 1));  // (Sigma_x)^-1 Sigma_xy
            cache_.push_back(std::move(c));
        }
    }

    /// Responsibilities h(k) of x under the marginal mixture over x.
    Vector responsibilities(ConstVecRef x) const {
        check_ready(x);
        Vector logp(K);
        for (int k = 0; k < K; ++k) logp(k) = std::log(weights[k]) + log_marginal(k, x);
        const double mx = logp.maxCoeff();
        if (!std::isfinite(mx)) {
            warn("gmr: every component density underflows; using the nearest component");
            Vector h = Vector::Zero(K);
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k) {
                const double m = mahalanobis2(k, x);
                if (m < bd) {
                    bd = m;
                    best = k;
                }
            }
            h(best) = 1.0;
            return h;
        }
        Vector h = (logp.array() - mx).exp();
        return h / h.sum();
    }

    /// Posterior mean of y given x.
    double predict_value(ConstVecRef x) const {
        const Vector h = responsibilities(x);
        const auto d = static_cast<Eigen::Index>(D);
        double y = 0.0;
        for (int k = 0; k < K; ++k) {
            if (h(k) == 0.0) continue;
            const Vector dx = x - means[k].head(d);
            y += h(k) * (means[k](d) + cache_[k].gain.dot(dx));
        }
        return y;
    }

    /// Nearest class value to the posterior mean; ties go to the smaller id.
    int predict_class(ConstVecRef x) const { return nearest_class(predict_value(x)); }

    int nearest_class(double y) const {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < class_values.size(); ++c) {
            const double d = std::abs(y - class_values[c]);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(c);
            }
        }
        return best;
    }

    std::vector<int> predict_classes(const Matrix& X) const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(predict_class(X.row(i).transpose()));
        return out;
    }

private:
    struct Cache {
        Eigen::LLT<Eigen::MatrixXd> llt;
        double logdet = 0.0;
        Vector gain;
    };
    std::vector<Cache> cache_;

    void check_ready(ConstVecRef x) const {
        if (cache_.size() != static_cast<std::size_t>(K)) throw Error("gmr: model not prepared");
        if (x.size() != static_cast<Eigen::Index>(D)) throw Error("gmr: query dimension mismatch");
    }
    double mahalanobis2(int k, ConstVecRef x) const {
        const Vector dx = x - means[k].head(static_cast<Eigen::Index>(D));
        return cache_[k].llt.matrixL().solve(dx).squaredNorm();
    }
    double log_marginal(int k, ConstVecRef x) const {
        return -0.5 * (static_cast<double>(D) * kLog2Pi + cache_[k].logdet + mahalanobis2(k, x));
    }
};

namespace detail {

/// Row-wise log densities of every component of a full-dimensional mixture.
inline Eigen::MatrixXd log_weighted_densities(const Matrix& Z, const std::vector<double>& w, const std::vector<Vector>& mu,
                                              const std::vector<Eigen::MatrixXd>& cov) {
    const auto n = Z.rows();
    const auto K = static_cast<Eigen::Index>(w.size());
    const double dd = static_cast<double>(Z.cols());
    Eigen::MatrixXd L(n, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(cov[static_cast<std::size_t>(k)]);
        if (llt.info() != Eigen::Success) throw Error("gmr: covariance lost positive definiteness during EM");
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double c = std::log(w[static_cast<std::size_t>(k)]) - 0.5 * (dd * kLog2Pi + logdet);
        Eigen::MatrixXd diff = (Z.rowwise() - mu[static_cast<std::size_t>(k)].transpose()).transpose();
        llt.matrixL().solveInPlace(diff);
        L.col(k) = (c - 0.5 * diff.colwise().squaredNorm().array()).transpose();
    }
    return L;
}

struct EStep {
    Eigen::MatrixXd resp;
    Vector row_ll;
    double ll = 0.0;
};

inline EStep e_step(const Matrix& Z, const std::vector<double>& w, const std::vector<Vector>& mu,
                    const std::vector<Eigen::MatrixXd>& cov) {
    EStep e;
    e.resp = log_weighted_densities(Z, w, mu, cov);
    e.row_ll.resize(Z.rows());
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const double mx = e.resp.row(i).maxCoeff();
        const double s = (e.resp.row(i).array() - mx).exp().sum();
        const double lse = mx + std::log(s);
        e.row_ll(i) = lse;
        e.resp.row(i) = (e.resp.row(i).array() - lse).exp();
        total += lse;
    }
    e.ll = static_cast<double>(total);
    return e;
}

/// -lambda/2 * sum_k tr(Sigma_k^-1): the log prior whose MAP update adds
/// lambda * I to each scatter matrix.
inline double penalty(const std::vector<Eigen::MatrixXd>& cov, double lambda) {
    double p = 0.0;
    for (const auto& c : cov) {
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        p += llt.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols())).trace();
    }
    return -0.5 * lambda * p;
}

}  // namespace detail

/// EM fit of a K-component joint mixture over [x; y] with k-means
/// initialisation in the joint space. Each M-step solves the penalised
/// problem Sigma_k = (S_k + lambda I) / N_k with lambda = reg * N, so every
/// covariance carries a ridge of at least reg = 1e-6 * mean diagonal of the
/// data covariance and the penalised log-likelihood never decreases.
inline GmrModel fit(const Matrix& X, const std::vector<double>& y, const GmrConfig& cfg, std::uint64_t seed) {
    const auto n = X.rows();
    const auto d = X.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw Error("gmr: label count mismatch");
    if (cfg.K < 1) throw UsageError("gmr: K must be positive");
    if (static_cast<Eigen::Index>(cfg.K) >= n) throw Error("gmr: K must be smaller than the number of rows");
    if (cfg.max_iter < 1) throw UsageError("gmr: max_iter must be positive");

    Matrix Z(n, d + 1);
    Z.leftCols(d) = X;
    for (Eigen::Index i = 0; i < n; ++i) Z(i, d) = y[static_cast<std::size_t>(i)];
    const Vector mean = Z.colwise().mean().transpose();
    const Eigen::MatrixXd centered = Z.rowwise() - mean.transpose();
    const Eigen::MatrixXd sample_cov = centered.transpose() * centered / static_cast<double>(n);
    double meandiag = sample_cov.diagonal().mean();
    if (!(meandiag > 0.0)) meandiag = 1.0;
    const double reg = kRidgeRel * meandiag;
    const double lambda = reg * static_cast<double>(n);
    const auto dim = d + 1;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);

    GmrModel m;
    m.K = cfg.K;
    m.D = static_cast<std::size_t>(d);
    m.reg = reg;
    const int K = cfg.K;

    auto m_step = [&](const Eigen::MatrixXd& resp) {
        for (int k = 0; k < K; ++k) {
            const auto col = resp.col(k);
            const double nk = col.sum();
            m.weights[k] = nk / static_cast<double>(n);
            if (!(nk > 0.0)) continue;
            m.means[k] = (Z.transpose() * col) / nk;
            const Eigen::MatrixXd c = Z.rowwise() - m.means[k].transpose();
            m.covs[k] = (c.transpose() * col.asDiagonal() * c + lambda * I) / nk;
            m.covs[k] = 0.5 * (m.covs[k] + m.covs[k].transpose());
        }
    };

    // Initialisation: hard k-means assignments in the joint space.
    m.weights.assign(K, 0.0);
    m.means.assign(K, Vector::Zero(dim));
    m.covs.assign(K, I);
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, K);
    if (K == 1) {
        resp.setOnes();
    } else {
        const auto km = clustering::kmeans(Z, K, derive_seed(seed, "gmr-init"));
        for (Eigen::Index i = 0; i < n; ++i) resp(i, km.assignments[static_cast<std::size_t>(i)]) = 1.0;
    }
    m_step(resp);

    auto objective = [&](const detail::EStep& e) { return e.ll + detail::penalty(m.covs, lambda); };
    auto e = detail::e_step(Z, m.weights, m.means, m.covs);
    double prev = objective(e);
    m.objective_history.push_back(prev);

    for (int it = 1; it <= cfg.max_iter && K > 1; ++it) {
        m_step(e.resp);
        // Collapse: re-seed at the worst explained row.
        bool reseed = false;
        for (int k = 0; k < K; ++k) {
            if (m.weights[k] >= kCollapseWeight) continue;
            Eigen::Index worst = 0;
            e.row_ll.minCoeff(&worst);
            warn("gmr: component " + std::to_string(k) + " collapsed; re-seeded at row " + std::to_string(worst));
            m.means[k] = Z.row(worst).transpose();
            m.covs[k] = sample_cov + reg * I;
            m.weights[k] = 1.0 / static_cast<double>(n);
            reseed = true;
        }
        if (reseed) {
            const double s = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
            for (auto& wk : m.weights) wk /= s;
            m.reseeded.push_back(it);
        }
        e = detail::e_step(Z, m.weights, m.means, m.covs);
        const double obj = objective(e);
        m.objective_history.push_back(obj);
        if (!reseed && obj - prev < cfg.tol) break;
        prev = obj;
    }

    if (cfg.class_values) {
        m.class_values = *cfg.class_values;
    } else {
        std::vector<double> v(y.begin(), y.end());
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        m.class_values = v;
    }
    m.prepare();
    return m;
}

/// Default label encoding: class id c maps to the real c.
inline std::vector<double> default_class_values(int num_classes) {
    std::vector<double> v(static_cast<std::size_t>(num_classes));
    std::iota(v.begin(), v.end(), 0.0);
    return v;
}

/// Fits on a dataset, encoding class c as class_values[c].
inline GmrModel fit(const Dataset& ds, const GmrConfig& cfg, std::uint64_t seed) {
    auto cv = cfg.class_values ? *cfg.class_values : default_class_values(ds.num_classes());
    if (static_cast<int>(cv.size()) != ds.num_classes()) throw UsageError("gmr: class_values size must equal the class count");
    for (std::size_t c = 1; c < cv.size(); ++c)
        if (!(cv[c] > cv[c - 1])) throw UsageError("gmr: class_values must be strictly increasing");
    std::vector<double> y;
    y.reserve(ds.rows());
    for (auto l : ds.labels()) y.push_back(cv[static_cast<std::size_t>(l)]);
    GmrConfig c = cfg;
    c.class_values = cv;
    return fit(ds.features(), y, c, seed);
}

// ---------------------------------------------------------------------------
// Text serialisation

inline constexpr const char* kModelMagic = "gicaps-gmr";
inline constexpr int kModelVersion = 1;

namespace detail {
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

/// Format (whitespace separated, one record per line):
///   gicaps-gmr 1
///   K <K> D <D> reg <reg>
///   class_values <C> v_0 ... v_{C-1}
///   then per component: weight <w> / mean <D+1 values> / cov <(D+1)^2 values, row major>
inline void save_model(const GmrModel& m, std::ostream& out) {
    using detail::fmt17;
    out << kModelMagic << ' ' << kModelVersion << '\n';
    out << "K " << m.K << " D " << m.D << " reg " << fmt17(m.reg) << '\n';
    out << "class_values " << m.class_values.size();
    for (double v : m.class_values) out << ' ' << fmt17(v);
    out << '\n';
    for (int k = 0; k < m.K; ++k) {
        out << "weight " << fmt17(m.weights[k]) << '\n' << "mean";
        for (Eigen::Index j = 0; j < m.means[k].size(); ++j) out << ' ' << fmt17(m.means[k](j));
        out << '\n' << "cov";
        for (Eigen::Index r = 0; r < m.covs[k].rows(); ++r)
            for (Eigen::Index c = 0; c < m.covs[k].cols(); ++c) out << ' ' << fmt17(m.covs[k](r, c));
        out << '\n';
    }
}

inline GmrModel load_model(std::istream& in) {
    auto expect = [&](const std::string& word) {
        std::string w;
        if (!(in >> w) || w != word) throw Error("gmr model: expected '" + word + "'");
    };
    auto num = [&]() {
        std::string w;
        if (!(in >> w)) throw Error("gmr model: truncated");
        try {
            std::size_t pos = 0;
            const double v = std::stod(w, &pos);
            if (pos != w.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("gmr model: bad number '" + w + "'");
        }
    };
    expect(kModelMagic);
    const int version = static_cast<int>(num());
    if (version != kModelVersion) throw Error("gmr model: unsupported version " + std::to_string(version));
    GmrModel m;
    expect("K");
    m.K = static_cast<int>(num());
    expect("D");
    m.D = static_cast<std::size_t>(num());
    expect("reg");
    m.reg = num();
    if (m.K < 1) throw Error("gmr model: K must be positive");
    expect("class_values");
    const auto nc = static_cast<std::size_t>(num());
    for (std::size_t c = 0; c < nc; ++c) m.class_values.push_back(num());
    const auto dim = static_cast<Eigen::Index>(m.D + 1);
    for (int k = 0; k < m.K; ++k) {
        expect("weight");
        m.weights.push_back(num());
        expect("mean");
        Vector mu(dim);
        for (Eigen::Index j = 0; j < dim; ++j) mu(j) = num();
        m.means.push_back(mu);
        expect("cov");
        Eigen::MatrixXd c(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r)
            for (Eigen::Index j = 0; j < dim; ++j) c(r, j) = num();
        m.covs.push_back(c);
    }
    m.prepare();
    return m;
}

}  // namespace gicaps::gmr
