#pragma once

#include "gicaps/apportion.hpp"
#include "gicaps/clustering.hpp"
#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gicaps::undersample {

struct UndersampleConfig {
    std::size_t n_target = 0;        ///< rows to keep for the class
    std::optional<int> k_clusters;   ///< nullopt: elbow rule over [1, max_auto_k]
    int max_auto_k = 10;
    double delta = 1.0;              ///< alpha_k = delta * sigma_k
    double dedupe_angle_eps = 1e-9;  ///< radians
    int max_iter = 100;              ///< PAM swap passes
};

/// Angles are measured between position vectors shifted by this amount so
/// that min-max normalised points at the origin still have a direction.
inline constexpr double kAngleShift = 1.0;
inline constexpr double kAlphaFloor = 1e-6;

struct ClusterAngularProfile {
    int cluster_id = 0;
    std::size_t medoid_row = 0;       ///< row in the class matrix
    Vector medoid;
    std::vector<std::size_t> rows;    ///< members, in class-matrix rows
    std::vector<double> thetas;       ///< angle of each member to the medoid
    double sigma = 0.0;               ///< population std-dev of thetas
    double alpha = 0.0;               ///< delta * sigma, floored
    double spread = 0.0;              ///< max theta - min theta
    std::size_t quota = 0;
};

inline Vector shifted(const Matrix& pts, std::size_t i) {
    return pts.row(static_cast<Eigen::Index>(i)).transpose().array() + kAngleShift;
}

inline std::vector<ClusterAngularProfile> angular_profile(const Matrix& points, const clustering::Clustering& clus,
                                                          const UndersampleConfig& cfg) {
    const auto members = clus.members();
    std::vector<ClusterAngularProfile> out;
    std::vector<double> spreads;
    std::vector<std::size_t> caps;
    for (std::size_t k = 0; k < members.size(); ++k) {
        ClusterAngularProfile p;
        p.cluster_id = static_cast<int>(k);
        p.medoid_row = clus.center_indices.at(k);
        p.medoid = clus.centers.at(k);
        p.rows = members[k];
        const Vector m = shifted(points, p.medoid_row);
        for (auto r : p.rows) p.thetas.push_back(r == p.medoid_row ? 0.0 : geometry::angle(m, shifted(points, r)));
        const double n = static_cast<double>(p.thetas.size());
        const double mean = std::accumulate(p.thetas.begin(), p.thetas.end(), 0.0) / n;
        double var = 0.0;
        for (double t : p.thetas) var += (t - mean) * (t - mean);
        p.sigma = std::sqrt(var / n);
        p.alpha = std::max(cfg.delta * p.sigma, kAlphaFloor);
        const auto [lo, hi] = std::minmax_element(p.thetas.begin(), p.thetas.end());
        p.spread = *hi - *lo;
        spreads.push_back(p.spread);
        caps.push_back(p.rows.size());
        out.push_back(std::move(p));
    }
    const auto quotas = apportion(spreads, cfg.n_target, caps, true);
    for (std::size_t k = 0; k < out.size(); ++k) out[k].quota = quotas[k];
    return out;
}

// ---------------------------------------------------------------------------

enum class AuditStatus { kept, rejected };

/// One row of the undersampling audit trail. Records of a cluster are in walk
/// order (ascending theta, medoid first), so consecutive `kept` records are
/// exactly the consecutive kept pairs.
struct AuditRecord {
    int cluster = 0;
    std::size_t row = 0;           ///< row in the class matrix
    AuditStatus status = AuditStatus::kept;
    std::string reason;            ///< medoid | gap | orthant | all | duplicate | gap_same_orthant | quota_trim
    double theta = 0.0;
    double gap = 0.0;              ///< theta minus theta of the previous kept point (0 for the medoid)
    std::string orthant_prev;      ///< orthant code of the previous kept point
    std::string orthant;           ///< orthant code of this point relative to the medoid
    double alpha_eff = 0.0;        ///< threshold the final walk used for this cluster
};

struct UndersampleResult {
    std::vector<std::size_t> retained;  ///< sorted class-matrix rows
    std::vector<std::size_t> rejected;  ///< sorted class-matrix rows
    std::vector<ClusterAngularProfile> profiles;
    std::vector<double> alpha_effective;
    std::vector<AuditRecord> audit;
    int k_clusters = 0;
};

namespace detail {

struct WalkItem {
    std::size_t row;
    double theta;
    geometry::OrthantCode code;
};

// Kept positions (into `items`) of the rejection walk at threshold alpha.
inline std::vector<std::size_t> walk(const std::vector<WalkItem>& items, double alpha) {
    std::vector<std::size_t> kept{0};
    for (std::size_t i = 1; i < items.size(); ++i) {
        const auto& last = items[kept.back()];
        if (items[i].theta - last.theta > alpha || !(items[i].code == last.code)) kept.push_back(i);
    }
    return kept;
}

// Removes kept points until `quota` remain without breaking the walk
// invariant: removing an interior point merges its two gaps, which is safe
// unless both neighbours then share an orthant and the merged gap is still
// within alpha. The densest removable point goes first.
inline std::vector<std::size_t> trim(const std::vector<WalkItem>& items, std::vector<std::size_t> kept, std::size_t quota,
                                     double alpha) {
    while (kept.size() > quota && kept.size() > 1) {
        std::size_t best = 0;
        double best_score = std::numeric_limits<double>::infinity();
        for (std::size_t p = 1; p < kept.size(); ++p) {
            const auto& prev = items[kept[p - 1]];
            const auto& cur = items[kept[p]];
            double score = cur.theta - prev.theta;
            if (p + 1 < kept.size()) {
                const auto& next = items[kept[p + 1]];
                const bool safe = next.theta - prev.theta > alpha || !(next.code == prev.code);
                if (!safe) continue;
                score = std::min(score, next.theta - cur.theta);
            }
            if (score < best_score || (score == best_score && cur.row < items[kept[best]].row)) {
                best_score = score;
                best = p;
            }
        }
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return kept;
}

// Chooses exactly `quota` of `items`. Searches the threshold for a walk that
// keeps at least `quota` points as close to it as possible, then trims.
inline std::pair<std::vector<std::size_t>, double> select(const std::vector<WalkItem>& items, std::size_t quota,
                                                          double alpha) {
    auto count = [&](double a) { return walk(items, a).size(); };
    constexpr int kBisect = 60;
    double lo, hi;  // count(lo) >= quota, count(hi) < quota (or hi unusable)
    const std::size_t c0 = count(alpha);
    if (c0 == quota) return {walk(items, alpha), alpha};
    if (c0 > quota) {
        lo = alpha;
        hi = alpha;
        const double ceiling = 4.0;  // above pi only orthant changes are kept
        while (hi < ceiling) {
            hi = std::min(hi * 2.0, ceiling);
            if (count(hi) <= quota) break;
            lo = hi;
        }
        if (count(hi) == quota) return {walk(items, hi), hi};
        if (count(hi) > quota) return {trim(items, walk(items, hi), quota, hi), hi};
    } else {
        lo = -1.0;  // every gap is >= 0, so every point is kept
        hi = alpha;
    }
    for (int i = 0; i < kBisect; ++i) {
        const double mid = 0.5 * (lo + hi);
        const std::size_t c = count(mid);
        if (c == quota) return {walk(items, mid), mid};
        (c > quota ? lo : hi) = mid;
    }
    return {trim(items, walk(items, lo), quota, lo), lo};
}

}  // namespace detail

/// Angle- and orthant-constrained undersampling of one class.
///
/// Per K-medoids cluster: drop scaled/repeated points, sort by angle to the
/// medoid, and walk the list keeping a point when its angular gap to the last
/// kept point exceeds the cluster threshold or its error vector lies in a
/// different orthant. The threshold is tuned per cluster so that exactly the
/// cluster quota survives; the union has min(n_target, available) rows.
inline UndersampleResult gicaps_undersample(const Matrix& points, const UndersampleConfig& cfg, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n == 0) throw Error("undersample: empty class");
    if (cfg.n_target == 0) throw UsageError("undersample: n_target must be positive");
    if (!(cfg.delta > 0.0)) throw UsageError("undersample: delta must be positive");

    UndersampleResult res;
    int k = cfg.k_clusters.value_or(0);
    if (!cfg.k_clusters) {
        const int k_max = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.max_auto_k, 1)), n));
        k = clustering::select_k_elbow(points, 1, k_max, derive_seed(seed, "undersample-elbow"));
    }
    if (k < 1) throw UsageError("undersample: k_clusters must be positive");
    k = static_cast<int>(std::min({static_cast<std::size_t>(k), cfg.n_target, n}));
    res.k_clusters = k;

    const auto clus = clustering::kmedoids(points, k, derive_seed(seed, "undersample-kmedoids"), cfg.max_iter);
    res.profiles = angular_profile(points, clus, cfg);

    // Dedupe and order each cluster.
    std::vector<std::vector<detail::WalkItem>> items(res.profiles.size());
    std::vector<std::vector<std::size_t>> duplicates(res.profiles.size());
    std::vector<std::size_t> available;
    for (std::size_t c = 0; c < res.profiles.size(); ++c) {
        const auto& p = res.profiles[c];
        std::vector<std::size_t> order(p.rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const bool ma = p.rows[a] == p.medoid_row, mb = p.rows[b] == p.medoid_row;
            if (ma != mb) return ma;
            if (p.thetas[a] != p.thetas[b]) return p.thetas[a] < p.thetas[b];
            return p.rows[a] < p.rows[b];
        });
        auto& list = items[c];
        std::vector<Vector> dirs;
        for (auto o : order) {
            const std::size_t row = p.rows[o];
            const Vector v = shifted(points, row);
            // Any duplicate direction has theta within eps (triangle inequality).
            bool dup = false;
            for (std::size_t s = list.size(); s-- > 0;) {
                if (p.thetas[o] - list[s].theta >= cfg.dedupe_angle_eps) break;
                if (geometry::angle(dirs[s], v) < cfg.dedupe_angle_eps) {
                    dup = true;
                    // Keep the lowest row of a duplicate group (the medoid always stays).
                    if (s > 0 && row < list[s].row) {
                        duplicates[c].push_back(list[s].row);
                        list[s] = {row, p.thetas[o],
                                   geometry::orthant_code(p.medoid, points.row(static_cast<Eigen::Index>(row)).transpose())};
                        dirs[s] = v;
                    } else {
                        duplicates[c].push_back(row);
                    }
                    break;
                }
            }
            if (dup) continue;
            list.push_back({row, p.thetas[o], geometry::orthant_code(p.medoid, points.row(static_cast<Eigen::Index>(row)).transpose())});
            dirs.push_back(v);
        }
        available.push_back(list.size());
    }

    std::vector<double> spreads;
    for (const auto& p : res.profiles) spreads.push_back(p.spread);
    const auto quotas = apportion(spreads, cfg.n_target, available, true);

    for (std::size_t c = 0; c < res.profiles.size(); ++c) {
        auto& p = res.profiles[c];
        p.quota = quotas[c];
        const auto& list = items[c];
        auto [kept, alpha_eff] = detail::select(list, p.quota, p.alpha);
        res.alpha_effective.push_back(alpha_eff);

        std::vector<char> is_kept(list.size(), 0);
        for (auto i : kept) is_kept[i] = 1;
        const auto full_walk = detail::walk(list, alpha_eff);
        std::vector<char> in_walk(list.size(), 0);
        for (auto i : full_walk) in_walk[i] = 1;

        std::size_t last = 0;
        for (std::size_t i = 0; i < list.size(); ++i) {
            AuditRecord rec;
            rec.cluster = static_cast<int>(c);
            rec.row = list[i].row;
            rec.theta = list[i].theta;
            rec.orthant = list[i].code.to_string();
            rec.alpha_eff = alpha_eff;
            rec.gap = i == 0 ? 0.0 : list[i].theta - list[last].theta;
            rec.orthant_prev = list[last].code.to_string();
            if (is_kept[i]) {
                rec.status = AuditStatus::kept;
                if (i == 0)
                    rec.reason = "medoid";
                else if (rec.gap > alpha_eff)
                    rec.reason = alpha_eff < 0.0 ? "all" : "gap";
                else
                    rec.reason = "orthant";
                res.retained.push_back(list[i].row);
                last = i;
            } else {
                rec.status = AuditStatus::rejected;
                rec.reason = in_walk[i] ? "quota_trim" : "gap_same_orthant";
                res.rejected.push_back(list[i].row);
            }
            res.audit.push_back(std::move(rec));
        }
        for (auto row : duplicates[c]) {
            AuditRecord rec;
            rec.cluster = static_cast<int>(c);
            rec.row = row;
            rec.status = AuditStatus::rejected;
            rec.reason = "duplicate";
            rec.alpha_eff = alpha_eff;
            res.audit.push_back(std::move(rec));
            res.rejected.push_back(row);
        }
    }
    std::sort(res.retained.begin(), res.retained.end());
    std::sort(res.rejected.begin(), res.rejected.end());
    return res;
}

/// Picks N_D among `candidates` by the score `eval` returns (mean CV
/// G-mean); ties go to the smaller candidate.
inline std::size_t select_n_target_cv(const Dataset& ds, int majority_class, std::vector<std::size_t> candidates,
                                      const std::function<double(const Dataset&, std::size_t)>& eval) {
    if (candidates.empty()) throw UsageError("select_n_target_cv: no candidates");
    const auto sizes = ds.class_sizes();
    const std::size_t major = sizes.at(static_cast<std::size_t>(majority_class));
    std::size_t next = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        if (static_cast<int>(c) != majority_class) next = std::max(next, sizes[c]);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (auto c : candidates)
        if (c >= major || c < next)
            throw UsageError("select_n_target_cv: candidate " + std::to_string(c) + " outside [" + std::to_string(next) +
                             ", " + std::to_string(major) + ")");
    if (candidates.size() == 1) return candidates.front();
    std::size_t best = candidates.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (auto c : candidates) {
        const double s = eval(ds, c);
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return best;
}

inline void write_audit_csv(const std::vector<AuditRecord>& audit, std::ostream& out,
                            const std::vector<std::size_t>* row_map = nullptr) {
    out << "cluster,row,status,reason,theta,gap,orthant_prev,orthant,alpha_eff\n";
    for (const auto& r : audit) {
        out << r.cluster << ',' << (row_map ? (*row_map)[r.row] : r.row) << ','
            << (r.status == AuditStatus::kept ? "kept" : "rejected") << ',' << r.reason << ','
            << gicaps::detail::format_double(r.theta) << ',' << gicaps::detail::format_double(r.gap) << ','
            << r.orthant_prev << ',' << r.orthant << ',' << gicaps::detail::format_double(r.alpha_eff) << '\n';
    }
}

}  // namespace gicaps::undersample
