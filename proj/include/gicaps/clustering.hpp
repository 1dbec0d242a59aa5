#pragma once

#include "gicaps/common.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace gicaps::clustering {

struct Clustering {
    std::vector<int> assignments;           ///< cluster id per point
    std::vector<Vector> centers;
    std::vector<std::size_t> center_indices;  ///< medoid rows; empty for k-means
    double cost = 0.0;
    std::vector<double> cost_history;       ///< cost after build/seeding and after each iteration

    int k() const { return static_cast<int>(centers.size()); }

    std::vector<std::vector<std::size_t>> members() const {
        std::vector<std::vector<std::size_t>> m(centers.size());
        for (std::size_t i = 0; i < assignments.size(); ++i) m[static_cast<std::size_t>(assignments[i])].push_back(i);
        return m;
    }
};

inline double l1_distance(const Matrix& pts, std::size_t i, std::size_t j) {
    const double* a = pts.data() + static_cast<std::ptrdiff_t>(i) * pts.cols();
    const double* b = pts.data() + static_cast<std::ptrdiff_t>(j) * pts.cols();
    double s = 0.0;
    for (Eigen::Index d = 0; d < pts.cols(); ++d) s += std::abs(a[d] - b[d]);
    return s;
}

/// Rows above this count are clustered on a seeded subsample, then every row is reassigned.
inline constexpr std::size_t kMedoidSampleCap = 20000;

namespace detail {

// L1 distances, cached as a dense matrix when it fits comfortably in memory.
class L1Distances {
public:
    explicit L1Distances(const Matrix& pts) : pts_(pts), n_(static_cast<std::size_t>(pts.rows())) {
        if (n_ <= kCacheLimit) {
            cache_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                cache_[i * n_ + i] = 0.0;
                for (std::size_t j = i + 1; j < n_; ++j) cache_[i * n_ + j] = cache_[j * n_ + i] = l1_distance(pts_, i, j);
            }
        }
    }
    double operator()(std::size_t i, std::size_t j) const {
        return cache_.empty() ? l1_distance(pts_, i, j) : cache_[i * n_ + j];
    }
    std::size_t size() const { return n_; }

private:
    static constexpr std::size_t kCacheLimit = 3000;
    const Matrix& pts_;
    std::size_t n_;
    std::vector<double> cache_;
};

struct NearestTwo {
    std::vector<int> nearest;      // medoid slot
    std::vector<double> d_near;
    std::vector<double> d_second;
};

inline NearestTwo nearest_two(const L1Distances& dist, const std::vector<std::size_t>& medoids) {
    const std::size_t n = dist.size();
    NearestTwo nt{std::vector<int>(n, 0), std::vector<double>(n, std::numeric_limits<double>::infinity()),
                  std::vector<double>(n, std::numeric_limits<double>::infinity())};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < medoids.size(); ++m) {
            const double d = dist(medoids[m], i);
            if (d < nt.d_near[i]) {
                nt.d_second[i] = nt.d_near[i];
                nt.d_near[i] = d;
                nt.nearest[i] = static_cast<int>(m);
            } else if (d < nt.d_second[i]) {
                nt.d_second[i] = d;
            }
        }
    }
    // A medoid always belongs to its own cluster, even when duplicated.
    for (std::size_t m = 0; m < medoids.size(); ++m) {
        nt.nearest[medoids[m]] = static_cast<int>(m);
        nt.d_near[medoids[m]] = 0.0;
    }
    return nt;
}

inline double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Greedy BUILD followed by first-improvement PAM swaps. Returns medoid rows.
inline std::vector<std::size_t> pam(const L1Distances& dist, int k, std::uint64_t seed, int max_iter,
                                    std::vector<double>& history) {
    const std::size_t n = dist.size();
    std::vector<std::size_t> medoids;
    std::vector<char> is_medoid(n, 0);
    std::vector<double> d_near(n, std::numeric_limits<double>::infinity());

    // BUILD: each step adds the point with the largest cost reduction (lowest index on ties).
    for (int step = 0; step < k; ++step) {
        double best_gain = -1.0;
        std::size_t best = n;
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) continue;
            double gain = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = dist(c, i);
                if (step == 0)
                    gain -= d;
                else if (d < d_near[i])
                    gain += d_near[i] - d;
            }
            if (best == n || gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t i = 0; i < n; ++i) d_near[i] = std::min(d_near[i], dist(best, i));
        d_near[best] = 0.0;
    }

    auto nt = nearest_two(dist, medoids);
    const double cost = total(nt.d_near);
    history.push_back(cost);

    // SWAP: candidates are visited in a seeded order; the first candidate with
    // a strictly improving swap is applied immediately.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, "pam-swap");
    shuffle(order.begin(), order.end(), rng);
    const double eps = 1e-12 * std::max(1.0, cost);

    for (int iter = 0; iter < max_iter; ++iter) {
        bool improved = false;
        for (std::size_t o : order) {
            if (is_medoid[o]) continue;
            // delta[m]: cost change when medoid slot m is replaced by o.
            std::vector<double> delta(medoids.size(), 0.0);
            double shared = 0.0;  // change common to every slot
            for (std::size_t i = 0; i < n; ++i) {
                const double d_o = dist(o, i);
                const auto m = static_cast<std::size_t>(nt.nearest[i]);
                // Other slots removed: i moves to o only if o is closer.
                const double keep = std::min(d_o - nt.d_near[i], 0.0);
                shared += keep;
                // Own slot removed: i falls back to o or its second-nearest.
                delta[m] += std::min(d_o, nt.d_second[i]) - nt.d_near[i] - keep;
            }
            std::size_t best_m = 0;
            for (std::size_t m = 1; m < medoids.size(); ++m)
                if (delta[m] < delta[best_m]) best_m = m;
            const double change = shared + delta[best_m];
            if (change < -eps) {
                is_medoid[medoids[best_m]] = 0;
                medoids[best_m] = o;
                is_medoid[o] = 1;
                nt = nearest_two(dist, medoids);
                improved = true;
            }
        }
        history.push_back(total(nt.d_near));
        if (!improved) break;
    }
    return medoids;
}

}  // namespace detail

namespace detail {

inline Clustering kmedoids_impl(const Matrix& points, int k, std::uint64_t seed, int max_iter,
                                const L1Distances* shared) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) throw UsageError("kmedoids: k must be positive");
    if (static_cast<std::size_t>(k) > n) throw Error("kmedoids: k exceeds the number of points");

    Clustering out;
    if (n > kMedoidSampleCap) {
        std::vector<std::size_t> sample(n);
        std::iota(sample.begin(), sample.end(), 0);
        auto rng = make_rng(seed, "pam-subsample");
        shuffle(sample.begin(), sample.end(), rng);
        sample.resize(kMedoidSampleCap);
        std::sort(sample.begin(), sample.end());
        Matrix sub(static_cast<Eigen::Index>(sample.size()), points.cols());
        for (std::size_t r = 0; r < sample.size(); ++r)
            sub.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(sample[r]));
        const L1Distances dist(sub);
        for (auto m : pam(dist, k, seed, max_iter, out.cost_history)) out.center_indices.push_back(sample[m]);
    } else if (shared) {
        out.center_indices = pam(*shared, k, seed, max_iter, out.cost_history);
    } else {
        const L1Distances dist(points);
        out.center_indices = pam(dist, k, seed, max_iter, out.cost_history);
    }

    out.assignments.assign(n, 0);
    out.cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < out.center_indices.size(); ++m) {
            const double d = l1_distance(points, i, out.center_indices[m]);
            if (d < best) {
                best = d;
                out.assignments[i] = static_cast<int>(m);
            }
        }
        out.cost += best;
    }
    for (std::size_t m = 0; m < out.center_indices.size(); ++m) {
        out.assignments[out.center_indices[m]] = static_cast<int>(m);
        out.centers.push_back(points.row(static_cast<Eigen::Index>(out.center_indices[m])).transpose());
    }
    if (n > kMedoidSampleCap) out.cost_history.push_back(out.cost);
    return out;
}

}  // namespace detail

/// K-medoids under the L1 metric (PAM). Medoids are data rows; the
/// assignment of every point is its L1-nearest medoid, ties to the lower
/// cluster id.
inline Clustering kmedoids(const Matrix& points, int k, std::uint64_t seed, int max_iter = 100) {
    return detail::kmedoids_impl(points, k, seed, max_iter, nullptr);
}

/// Lloyd's k-means with farthest-point seeding (first center drawn from the
/// seed). Empty clusters take the point farthest from its own center.
inline Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter = 300) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) throw UsageError("kmeans: k must be positive");
    if (static_cast<std::size_t>(k) > n) throw Error("kmeans: k exceeds the number of points");
    const auto kk = static_cast<std::size_t>(k);

    auto sq = [&](std::size_t i, const Vector& c) { return (points.row(static_cast<Eigen::Index>(i)).transpose() - c).squaredNorm(); };

    Clustering out;
    auto rng = make_rng(seed, "kmeans-seed");
    out.centers.push_back(points.row(static_cast<Eigen::Index>(uniform_index(rng, n))).transpose());
    std::vector<double> dmin(n);
    for (std::size_t i = 0; i < n; ++i) dmin[i] = sq(i, out.centers[0]);
    while (out.centers.size() < kk) {
        const auto far = static_cast<std::size_t>(std::max_element(dmin.begin(), dmin.end()) - dmin.begin());
        out.centers.push_back(points.row(static_cast<Eigen::Index>(far)).transpose());
        for (std::size_t i = 0; i < n; ++i) dmin[i] = std::min(dmin[i], sq(i, out.centers.back()));
    }

    out.assignments.assign(n, -1);
    std::vector<double> dist(n);
    for (int iter = 0; iter <= max_iter; ++iter) {
        std::vector<int> next(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < kk; ++c) {
                const double d = sq(i, out.centers[c]);
                if (d < best) {
                    best = d;
                    next[i] = static_cast<int>(c);
                }
            }
            dist[i] = best;
        }
        // Re-seed empty clusters from the point farthest from its center,
        // taken only from clusters that can spare one.
        std::vector<std::size_t> counts(kk, 0);
        for (int a : next) ++counts[static_cast<std::size_t>(a)];
        for (std::size_t c = 0; c < kk; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i)
                if (counts[static_cast<std::size_t>(next[i])] > 1 && (far == n || dist[i] > dist[far])) far = i;
            --counts[static_cast<std::size_t>(next[far])];
            next[far] = static_cast<int>(c);
            dist[far] = 0.0;
            counts[c] = 1;
        }
        const bool changed = next != out.assignments;
        out.assignments = std::move(next);

        std::vector<Vector> sums(kk, Vector::Zero(points.cols()));
        for (std::size_t i = 0; i < n; ++i) sums[static_cast<std::size_t>(out.assignments[i])] += points.row(static_cast<Eigen::Index>(i)).transpose();
        for (std::size_t c = 0; c < kk; ++c) out.centers[c] = sums[c] / static_cast<double>(counts[c]);

        out.cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) out.cost += sq(i, out.centers[static_cast<std::size_t>(out.assignments[i])]);
        out.cost_history.push_back(out.cost);
        if (!changed) break;
    }
    return out;
}

enum class ElbowMetric { l1_medoids, l2_means };

/// Elbow rule: the k in [k_min, k_max] maximising the discrete second
/// difference cost(k-1) - 2 cost(k) + cost(k+1), ties to the smaller k.
/// Ranges shorter than three values return k_min with a warning.
inline int select_k_elbow(const Matrix& points, int k_min, int k_max, std::uint64_t seed,
                          ElbowMetric metric = ElbowMetric::l1_medoids) {
    if (k_min < 1 || k_max < k_min) throw UsageError("select_k_elbow: empty or invalid range");
    if (static_cast<Eigen::Index>(k_max) > points.rows()) throw UsageError("select_k_elbow: k_max exceeds the number of points");
    if (k_max - k_min + 1 < 3) {
        warn("elbow rule needs at least three candidate k values; using k=" + std::to_string(k_min));
        return k_min;
    }
    std::vector<double> cost;
    if (metric == ElbowMetric::l1_medoids) {
        std::optional<detail::L1Distances> dist;
        if (static_cast<std::size_t>(points.rows()) <= kMedoidSampleCap) dist.emplace(points);
        for (int k = k_min; k <= k_max; ++k)
            cost.push_back(detail::kmedoids_impl(points, k, seed, 100, dist ? &*dist : nullptr).cost);
    } else {
        for (int k = k_min; k <= k_max; ++k) cost.push_back(kmeans(points, k, seed).cost);
    }
    int best = k_min + 1;
    double best_curv = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < cost.size(); ++i) {
        const double curv = cost[i - 1] - 2.0 * cost[i] + cost[i + 1];
        if (curv > best_curv) {
            best_curv = curv;
            best = k_min + static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace gicaps::clustering
