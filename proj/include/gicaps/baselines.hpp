#pragma once

#include "gicaps/apportion.hpp"
#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/oversample.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

namespace gicaps::baselines {

using oversample::SyntheticRecord;

struct BaselineConfig {
    int k_neighbors = 5;
    int smote_percent = 300;
    double adasyn_beta = 1.0;
    std::optional<std::size_t> adasyn_major_cap;
};

inline void validate(const BaselineConfig& cfg) {
    if (cfg.k_neighbors < 1) throw UsageError("baselines: k_neighbors must be positive");
    if (cfg.smote_percent < 0) throw UsageError("baselines: smote_percent must be non-negative");
    if (!(cfg.adasyn_beta >= 0.0 && cfg.adasyn_beta <= 1.0)) throw UsageError("baselines: adasyn_beta must be in [0, 1]");
}

/// Output of a baseline resampler. For oversamplers `data` is the input
/// followed by the new rows; for RUS it is the input minus `removed`.
struct BaselineResult {
    Dataset data;
    std::vector<long> source_row;  ///< input row of each output row, -1 for synthetic
    std::vector<SyntheticRecord> synthetic;
    std::vector<std::size_t> removed;
};

namespace detail {

inline std::vector<long> identity_rows(std::size_t n) {
    std::vector<long> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = static_cast<long>(i);
    return r;
}

/// k nearest rows of `from` within `pool` (self excluded), ties by row.
inline std::vector<std::size_t> knn(const Dataset& ds, std::size_t from, const std::vector<std::size_t>& pool, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size());
    const auto x = ds.row(from);
    for (auto r : pool)
        if (r != from) d.emplace_back((ds.row(r) - x).squaredNorm(), r);
    k = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
    return out;
}

inline std::size_t effective_k(std::size_t class_size, int k, const Dataset& ds, int class_i) {
    if (class_size <= static_cast<std::size_t>(k)) {
        warn("class '" + ds.class_names()[static_cast<std::size_t>(class_i)] + "' has " + std::to_string(class_size) +
             " rows; k_neighbors reduced to " + std::to_string(class_size - 1));
        return class_size - 1;
    }
    return static_cast<std::size_t>(k);
}

/// Emits `per_row[i]` synthetic points from class row i towards uniformly
/// chosen same-class neighbours.
inline BaselineResult interpolate_neighbours(const Dataset& ds, int class_i, const std::vector<std::size_t>& per_row,
                                             std::size_t k, Rng& rng) {
    const auto& rows = ds.class_rows(class_i);
    std::vector<SyntheticRecord> syn;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (per_row[i] == 0) continue;
        const auto nb = knn(ds, rows[i], rows, k);
        const Vector x = ds.row(rows[i]);
        for (std::size_t s = 0; s < per_row[i]; ++s) {
            const auto n = nb[uniform_index(rng, nb.size())];
            const double u = uniform_open01(rng);
            SyntheticRecord rec;
            rec.class_id = class_i;
            rec.m_index = rows[i];
            rec.v_index = n;
            rec.nominal_param = rec.param = u;
            rec.point = x + u * (ds.row(n) - x);
            syn.push_back(std::move(rec));
        }
    }
    Matrix extra(static_cast<Eigen::Index>(syn.size()), static_cast<Eigen::Index>(ds.dims()));
    for (std::size_t s = 0; s < syn.size(); ++s) extra.row(static_cast<Eigen::Index>(s)) = syn[s].point.transpose();
    std::vector<long> src = identity_rows(ds.rows());
    src.resize(ds.rows() + syn.size(), -1);
    const std::vector<int> labels(syn.size(), class_i);
    return {ds.append(extra, labels), std::move(src), std::move(syn), {}};
}

inline void require_pair(const Dataset& ds, int class_i, const char* who) {
    if (ds.class_rows(class_i).size() < 2)
        throw Error(std::string(who) + ": class '" + ds.class_names()[static_cast<std::size_t>(class_i)] + "' needs at least 2 rows");
}

}  // namespace detail

/// SMOTE: every class row spawns percent/100 synthetic rows; the remainder
/// percent % 100 is served by a random subset of that share of rows.
inline BaselineResult smote(const Dataset& ds, int class_i, const BaselineConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    detail::require_pair(ds, class_i, "smote");
    const auto& rows = ds.class_rows(class_i);
    const std::size_t n = rows.size();
    const std::size_t k = detail::effective_k(n, cfg.k_neighbors, ds, class_i);
    auto rng = make_rng(seed, "smote", {static_cast<std::uint64_t>(class_i)});

    std::vector<std::size_t> per_row(n, static_cast<std::size_t>(cfg.smote_percent / 100));
    const auto extra = n * static_cast<std::size_t>(cfg.smote_percent % 100) / 100;
    if (extra > 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < extra; ++i) ++per_row[order[i]];
    }
    return detail::interpolate_neighbours(ds, class_i, per_row, k, rng);
}

/// ADASYN density ratios: share of other-class rows among the k nearest
/// rows of the whole dataset, normalised to sum to 1. Falls back to uniform
/// weights (with a warning) if every ratio is 0.
inline std::vector<double> adasyn_weights(const Dataset& ds, int class_i, int k_neighbors) {
    const auto& rows = ds.class_rows(class_i);
    std::vector<std::size_t> all(ds.rows());
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> w;
    double sum = 0.0;
    for (auto r : rows) {
        const auto nb = detail::knn(ds, r, all, static_cast<std::size_t>(k_neighbors));
        const auto foreign = std::count_if(nb.begin(), nb.end(), [&](std::size_t q) { return ds.label(q) != class_i; });
        w.push_back(nb.empty() ? 0.0 : static_cast<double>(foreign) / static_cast<double>(nb.size()));
        sum += w.back();
    }
    if (!(sum > 0.0)) {
        warn("adasyn: class '" + ds.class_names()[static_cast<std::size_t>(class_i)] +
             "' has no foreign neighbours; using uniform weights");
        return std::vector<double>(rows.size(), 1.0 / static_cast<double>(rows.size()));
    }
    for (auto& x : w) x /= sum;
    return w;
}

/// ADASYN: G = beta * (majority size - class size) synthetic rows split over
/// class rows in proportion to their density ratio (largest remainder). The
/// majority size is capped by adasyn_major_cap when set.
inline BaselineResult adasyn(const Dataset& ds, int class_i, const BaselineConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    detail::require_pair(ds, class_i, "adasyn");
    const auto sizes = ds.class_sizes();
    std::size_t major = *std::max_element(sizes.begin(), sizes.end());
    if (cfg.adasyn_major_cap) major = std::min(major, *cfg.adasyn_major_cap);
    const std::size_t n = sizes[static_cast<std::size_t>(class_i)];
    const std::size_t g = major > n ? static_cast<std::size_t>(std::llround(cfg.adasyn_beta * static_cast<double>(major - n))) : 0;
    const std::size_t k = detail::effective_k(n, cfg.k_neighbors, ds, class_i);
    if (g == 0) return {ds, detail::identity_rows(ds.rows()), {}, {}};
    const auto w = adasyn_weights(ds, class_i, cfg.k_neighbors);
    const auto per_row = apportion(w, g);
    auto rng = make_rng(seed, "adasyn", {static_cast<std::uint64_t>(class_i)});
    return detail::interpolate_neighbours(ds, class_i, per_row, k, rng);
}

/// Random over-sampling: duplicates class rows uniformly with replacement
/// until the class holds `target` rows.
inline BaselineResult ros(const Dataset& ds, int class_i, std::size_t target, std::uint64_t seed) {
    const auto& rows = ds.class_rows(class_i);
    if (target < rows.size()) throw Error("ros: target below class size");
    auto rng = make_rng(seed, "ros", {static_cast<std::uint64_t>(class_i)});
    const std::size_t h = target - rows.size();
    std::vector<SyntheticRecord> syn;
    Matrix extra(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(ds.dims()));
    for (std::size_t s = 0; s < h; ++s) {
        const auto r = rows[uniform_index(rng, rows.size())];
        SyntheticRecord rec;
        rec.class_id = class_i;
        rec.m_index = rec.v_index = r;
        rec.point = ds.row(r);
        extra.row(static_cast<Eigen::Index>(s)) = rec.point.transpose();
        syn.push_back(std::move(rec));
    }
    std::vector<long> src = detail::identity_rows(ds.rows());
    src.resize(ds.rows() + h, -1);
    const std::vector<int> labels(h, class_i);
    return {ds.append(extra, labels), std::move(src), std::move(syn), {}};
}

/// Random under-sampling: keeps a uniform sample of `target` class rows
/// without replacement. Row order of the survivors is preserved.
inline BaselineResult rus(const Dataset& ds, int class_i, std::size_t target, std::uint64_t seed) {
    const auto& rows = ds.class_rows(class_i);
    if (target > rows.size()) throw Error("rus: target above class size");
    if (target == 0) throw Error("rus: target must be positive");
    auto rng = make_rng(seed, "rus", {static_cast<std::uint64_t>(class_i)});
    std::vector<std::size_t> order(rows.begin(), rows.end());
    shuffle(order.begin(), order.end(), rng);
    std::vector<char> drop(ds.rows(), 0);
    std::vector<std::size_t> removed(order.begin() + static_cast<std::ptrdiff_t>(target), order.end());
    std::sort(removed.begin(), removed.end());
    for (auto r : removed) drop[r] = 1;
    std::vector<std::size_t> keep;
    std::vector<long> src;
    for (std::size_t i = 0; i < ds.rows(); ++i)
        if (!drop[i]) {
            keep.push_back(i);
            src.push_back(static_cast<long>(i));
        }
    return {ds.subset(keep), std::move(src), {}, std::move(removed)};
}

}  // namespace gicaps::baselines
