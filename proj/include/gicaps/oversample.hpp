#pragma once

#include "gicaps/apportion.hpp"
#include "gicaps/clustering.hpp"
#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <vector>

namespace gicaps::oversample {

using geometry::Interval;
using geometry::NoMansLand;
using geometry::SegmentFrame;

struct OversampleConfig {
    std::map<int, std::size_t> h_target;  ///< synthetic rows per class; missing: top up to the largest class
    int kappa_same = 5;                   ///< same-class neighbours x_v per x_m
    double lambda_v = 2.0;                ///< V_m radius multiplier
    int kappa_q = 3;                      ///< Q_j neighbours per R_j point
    double tau_cross_rel = 0.1;           ///< crossing threshold, fraction of |ab|
    double rho = 0.9;
    double noise_rel = 0.01;              ///< noise std, fraction of |ab|
    bool pre_cluster = false;             ///< split the class by k-means first
    int pre_cluster_k = 2;
    int max_redraws = 10;
    int top_up_rounds = 3;                ///< re-allocation rounds for dropped points
};

inline void validate(const OversampleConfig& cfg) {
    if (cfg.kappa_same < 1) throw UsageError("oversample: kappa_same must be positive");
    if (cfg.kappa_q < 1) throw UsageError("oversample: kappa_q must be positive");
    if (!(cfg.lambda_v > 0.0)) throw UsageError("oversample: lambda_v must be positive");
    if (!(cfg.tau_cross_rel >= 0.0)) throw UsageError("oversample: tau_cross_rel must be non-negative");
    if (!(cfg.rho > 0.0 && cfg.rho <= 1.0)) throw UsageError("oversample: rho must be in (0, 1]");
    if (!(cfg.noise_rel >= 0.0)) throw UsageError("oversample: noise_rel must be non-negative");
    if (cfg.pre_cluster && cfg.pre_cluster_k < 1) throw UsageError("oversample: pre_cluster_k must be positive");
}

/// Interpolation budget of one segment x_m -> x_v.
struct SegmentBudget {
    std::size_t m_index = 0;  ///< dataset rows
    std::size_t v_index = 0;
    double free_length = 0.0;
    std::size_t count = 0;
    NoMansLand nml;
};

/// Provenance of one synthetic row.
struct SyntheticRecord {
    int class_id = 0;
    std::size_t m_index = 0;
    std::size_t v_index = 0;
    double nominal_param = 0.0;  ///< noise-free position along the segment
    double param = 0.0;          ///< projection parameter of the emitted point
    std::vector<Interval> nml;
    Vector point;
};

// ---------------------------------------------------------------------------
// Neighbourhoods

namespace detail {

inline std::vector<std::size_t> k_nearest(const Dataset& ds, std::size_t from, const std::vector<std::size_t>& pool,
                                          std::size_t k, bool skip_coincident) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size());
    const auto x = ds.row(from);
    for (auto r : pool) {
        if (r == from) continue;
        const double dist = (ds.row(r) - x).squaredNorm();
        if (skip_coincident && dist == 0.0) continue;
        d.emplace_back(dist, r);
    }
    const auto kk = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kk; ++i) out.push_back(d[i].second);
    return out;
}

}  // namespace detail

/// Per-class state shared by every x_m of the class being oversampled.
class OversampleContext {
public:
    OversampleContext(const Dataset& ds, int class_i, const OversampleConfig& cfg)
        : ds_(ds), class_i_(class_i), cfg_(cfg), group_(ds.class_rows(class_i)) {
        if (group_.size() < 2) throw Error("cannot oversample singleton class '" + class_name() + "'");
        std::vector<double> nn;
        for (auto r : group_) {
            auto k = detail::k_nearest(ds_, r, group_, 1, false);
            nn.push_back((ds_.row(k.front()) - ds_.row(r)).norm());
        }
        std::sort(nn.begin(), nn.end());
        median_nn_ = nn.size() % 2 ? nn[nn.size() / 2] : 0.5 * (nn[nn.size() / 2 - 1] + nn[nn.size() / 2]);
    }

    /// Restricts x_v candidates to a sub-cluster of the class.
    void set_group(std::vector<std::size_t> rows) { group_ = std::move(rows); }

    const Dataset& dataset() const { return ds_; }
    int class_id() const { return class_i_; }
    const OversampleConfig& config() const { return cfg_; }
    double median_nn() const { return median_nn_; }
    const std::vector<std::size_t>& group() const { return group_; }

    /// kappa_q nearest class-j rows of row r (any location in the dataset).
    const std::vector<std::size_t>& q_neighbours(std::size_t r) {
        auto it = q_cache_.find(r);
        if (it != q_cache_.end()) return it->second;
        auto nb = detail::k_nearest(ds_, r, ds_.class_rows(ds_.label(r)), static_cast<std::size_t>(cfg_.kappa_q), false);
        return q_cache_.emplace(r, std::move(nb)).first->second;
    }

    std::string class_name() const { return ds_.class_names().at(static_cast<std::size_t>(class_i_)); }

private:
    const Dataset& ds_;
    int class_i_;
    OversampleConfig cfg_;
    std::vector<std::size_t> group_;
    double median_nn_ = 0.0;
    std::unordered_map<std::size_t, std::vector<std::size_t>> q_cache_;
};

struct Neighborhood {
    std::vector<std::size_t> v_candidates;
    std::map<int, std::vector<std::size_t>> interferer_pool;  ///< other class -> rows
    Vector center;
    double radius = 0.0;
};

/// x_v candidates are the kappa_same nearest same-class rows of x_m
/// (coincident rows skipped). V_m is the ball around the midpoint of x_m and
/// its farthest candidate with radius lambda_v * max(median same-class NN
/// distance, half that candidate distance); other-class rows inside it form
/// the interferer pool.
inline Neighborhood build_neighborhood(OversampleContext& ctx, std::size_t m_index) {
    const auto& ds = ctx.dataset();
    const auto& cfg = ctx.config();
    Neighborhood nb;
    nb.v_candidates = detail::k_nearest(ds, m_index, ctx.group(), static_cast<std::size_t>(cfg.kappa_same), true);
    if (nb.v_candidates.empty()) return nb;
    const Vector xm = ds.row(m_index);
    const Vector far = ds.row(nb.v_candidates.back());
    nb.center = 0.5 * (xm + far);
    nb.radius = cfg.lambda_v * std::max(ctx.median_nn(), 0.5 * (far - xm).norm());
    const double r2 = nb.radius * nb.radius;
    for (int j = 0; j < ds.num_classes(); ++j) {
        if (j == ctx.class_id()) continue;
        std::vector<std::size_t> rows;
        for (auto r : ds.class_rows(j))
            if ((ds.row(r) - nb.center).squaredNorm() <= r2) rows.push_back(r);
        if (!rows.empty()) nb.interferer_pool.emplace(j, std::move(rows));
    }
    return nb;
}

inline Neighborhood build_neighborhood(const Dataset& ds, int class_i, std::size_t m_index, const OversampleConfig& cfg) {
    OversampleContext ctx(ds, class_i, cfg);
    return build_neighborhood(ctx, m_index);
}

/// No man's land of one segment: R_j holds pool rows of class j within |ab|
/// of the line ab, Q_j the kappa_q nearest class-j rows of each R_j row, and
/// every (q, r) pair is tested for a crossing.
inline NoMansLand segment_interference(OversampleContext& ctx, const SegmentFrame& f,
                                       const std::map<int, std::vector<std::size_t>>& pool) {
    const auto& ds = ctx.dataset();
    const auto& cfg = ctx.config();
    std::vector<geometry::InterfererPair> pairs;
    for (const auto& [j, rows] : pool) {
        for (auto r : rows) {
            if (geometry::project_on_segment(f, ds.row(r)).perp > f.len) continue;
            for (auto q : ctx.q_neighbours(r)) pairs.emplace_back(ds.row(q), ds.row(r));
        }
    }
    return geometry::build_no_mans_land(f, pairs, cfg.tau_cross_rel * f.len, cfg.rho);
}

// ---------------------------------------------------------------------------
// Allocation and interpolation

/// N_m = H * sum_v S_mv / sum_m sum_v S_mv, then N_mv = N_m * S_mv / sum_v S_mv,
/// rounded by largest remainder over the segments (ordered by (m, v)) so that
/// the counts sum to h_i exactly.
inline std::vector<SegmentBudget> allocate_counts(std::vector<SegmentBudget> budgets, std::size_t h_i) {
    std::sort(budgets.begin(), budgets.end(), [](const SegmentBudget& a, const SegmentBudget& b) {
        return std::tie(a.m_index, a.v_index) < std::tie(b.m_index, b.v_index);
    });
    for (auto& b : budgets) {
        if (!(b.free_length >= 0.0)) throw Error("allocate_counts: negative free length");
        b.count = 0;
    }
    if (h_i == 0) return budgets;

    double total = 0.0;
    std::map<std::size_t, double> per_m;
    for (const auto& b : budgets) {
        total += b.free_length;
        per_m[b.m_index] += b.free_length;
    }
    if (!(total > 0.0)) {
        std::string msg = "class fully enclosed by no man's land: " + std::to_string(budgets.size()) + " segments, none with free space";
        throw Error(msg);
    }
    std::vector<double> ideal;
    for (const auto& b : budgets) {
        const double sm = per_m[b.m_index];
        const double n_m = static_cast<double>(h_i) * sm / total;
        ideal.push_back(sm > 0.0 ? n_m * b.free_length / sm : 0.0);
    }
    const auto counts = apportion(ideal, h_i);
    for (std::size_t s = 0; s < budgets.size(); ++s) budgets[s].count = counts[s];
    return budgets;
}

/// `count` positions evenly spaced over the free part of [0, 1], endpoints
/// excluded: the free sub-intervals are laid end to end and cut at
/// gamma / (count + 1) of their total length.
inline std::vector<double> free_positions(const NoMansLand& nml, std::size_t count) {
    const auto free = nml.free_intervals();
    double total = 0.0;
    for (const auto& iv : free) total += iv.length();
    std::vector<double> out;
    if (count == 0 || !(total > 0.0)) return out;
    for (std::size_t g = 1; g <= count; ++g) {
        double s = total * static_cast<double>(g) / static_cast<double>(count + 1);
        for (const auto& iv : free) {
            if (s <= iv.length() || &iv == &free.back()) {
                double t = iv.lo + std::min(s, iv.length());
                // The interval end may be a closed NML boundary.
                if (nml.contains(t)) t = std::nextafter(iv.hi, iv.lo);
                out.push_back(t);
                break;
            }
            s -= iv.length();
        }
    }
    return out;
}

struct InterpolationResult {
    std::vector<SyntheticRecord> points;
    std::size_t dropped = 0;
};

/// Places budget.count points along the free part of the segment and adds
/// isotropic Gaussian noise (std noise_rel * |ab|). A noisy point whose
/// projection falls inside the no man's land is redrawn, and dropped after
/// max_redraws attempts.
inline InterpolationResult interpolate(const SegmentFrame& f, const SegmentBudget& budget, const OversampleConfig& cfg,
                                       Rng& rng, int class_id = 0) {
    InterpolationResult out;
    const double sigma = cfg.noise_rel * f.len;
    const auto positions = free_positions(budget.nml, budget.count);
    out.dropped = budget.count - positions.size();
    Vector noise(f.a.size());
    for (double t : positions) {
        const Vector base = f.point_at(t);
        bool placed = false;
        for (int attempt = 0; attempt <= cfg.max_redraws && !placed; ++attempt) {
            for (Eigen::Index j = 0; j < noise.size(); ++j) noise(j) = sigma > 0.0 ? sigma * standard_normal(rng) : 0.0;
            const Vector p = base + noise;
            const double param = geometry::project_on_segment(f, p).param;
            if (budget.nml.contains(param)) continue;
            out.points.push_back({class_id, budget.m_index, budget.v_index, t, param, budget.nml.intervals, p});
            placed = true;
        }
        if (!placed) ++out.dropped;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct OversampleResult {
    Dataset data;                           ///< input rows followed by synthetic rows
    std::vector<SyntheticRecord> synthetic; ///< one per appended row, same order
    std::vector<SegmentBudget> budgets;
    std::size_t requested = 0;
    std::size_t dropped = 0;
};

namespace detail {

inline std::vector<SegmentBudget> plan_group(OversampleContext& ctx) {
    std::vector<SegmentBudget> budgets;
    const auto& ds = ctx.dataset();
    for (auto m : ctx.group()) {
        const auto nb = build_neighborhood(ctx, m);
        for (auto v : nb.v_candidates) {
            const auto f = SegmentFrame::make(ds.row(m), ds.row(v));
            SegmentBudget b;
            b.m_index = m;
            b.v_index = v;
            b.nml = segment_interference(ctx, f, nb.interferer_pool);
            b.free_length = b.nml.free_length;
            budgets.push_back(std::move(b));
        }
    }
    return budgets;
}

inline std::vector<SyntheticRecord> realise(const Dataset& ds, int class_i, std::vector<SegmentBudget>& budgets,
                                            std::size_t h, const OversampleConfig& cfg, std::uint64_t seed,
                                            std::size_t& dropped) {
    std::vector<SyntheticRecord> out;
    std::size_t remaining = h;
    std::vector<std::size_t> emitted(budgets.size(), 0);
    for (int round = 0; round <= cfg.top_up_rounds && remaining > 0; ++round) {
        auto alloc = allocate_counts(budgets, remaining);
        if (round == 0) budgets = alloc;
        std::size_t got = 0;
        for (std::size_t s = 0; s < alloc.size(); ++s) {
            const auto& b = alloc[s];
            if (b.count == 0) continue;
            const auto f = SegmentFrame::make(ds.row(b.m_index), ds.row(b.v_index));
            auto rng = make_rng(seed, "oversample", {static_cast<std::uint64_t>(class_i), b.m_index, b.v_index,
                                                     static_cast<std::uint64_t>(round)});
            auto res = interpolate(f, b, cfg, rng, class_i);
            got += res.points.size();
            for (auto& p : res.points) out.push_back(std::move(p));
        }
        remaining -= std::min(remaining, got);
    }
    dropped = remaining;
    if (dropped > 0)
        warn("oversample: " + std::to_string(dropped) + " of " + std::to_string(h) + " synthetic points for class '" +
             ds.class_names()[static_cast<std::size_t>(class_i)] + "' could not be placed outside the no man's land");
    return out;
}

}  // namespace detail

/// Synthetic rows needed to bring `class_i` up to the largest class.
inline std::size_t default_h_target(const Dataset& ds, int class_i) {
    const auto sizes = ds.class_sizes();
    const auto mx = *std::max_element(sizes.begin(), sizes.end());
    return mx - sizes[static_cast<std::size_t>(class_i)];
}

/// No-man's-land-aware oversampling of one class. Synthetic rows are appended
/// after the input rows; input rows are untouched.
inline OversampleResult gicaps_oversample(const Dataset& ds, int class_i, const OversampleConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    const auto it = cfg.h_target.find(class_i);
    const std::size_t h = it != cfg.h_target.end() ? it->second : default_h_target(ds, class_i);
    OversampleResult res{ds, {}, {}, h, 0};
    if (h == 0) return res;

    OversampleContext ctx(ds, class_i, cfg);
    const auto& rows = ds.class_rows(class_i);

    // Optional within-class balancing: sub-clusters get budgets inversely
    // proportional to their size.
    std::vector<std::vector<std::size_t>> groups{rows};
    if (cfg.pre_cluster && cfg.pre_cluster_k > 1) {
        const int k = std::min<int>(cfg.pre_cluster_k, static_cast<int>(rows.size() / 2));
        if (k > 1) {
            const auto cl = clustering::kmeans(ds.gather(rows), k, derive_seed(seed, "oversample-precluster", {static_cast<std::uint64_t>(class_i)}));
            groups.assign(static_cast<std::size_t>(k), {});
            for (std::size_t i = 0; i < rows.size(); ++i) groups[static_cast<std::size_t>(cl.assignments[i])].push_back(rows[i]);
        }
    }
    std::vector<double> weights;
    for (const auto& g : groups) weights.push_back(g.size() >= 2 ? 1.0 / static_cast<double>(g.size()) : 0.0);
    const auto shares = apportion(weights, h);

    Matrix extra(0, static_cast<Eigen::Index>(ds.dims()));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (shares[g] == 0) continue;
        ctx.set_group(groups[g]);
        auto budgets = detail::plan_group(ctx);
        std::size_t dropped = 0;
        auto pts = detail::realise(ds, class_i, budgets, shares[g], cfg,
                                   derive_seed(seed, "oversample-group", {static_cast<std::uint64_t>(g)}), dropped);
        res.dropped += dropped;
        for (auto& b : budgets) res.budgets.push_back(std::move(b));
        for (auto& p : pts) res.synthetic.push_back(std::move(p));
    }

    extra.resize(static_cast<Eigen::Index>(res.synthetic.size()), static_cast<Eigen::Index>(ds.dims()));
    for (std::size_t s = 0; s < res.synthetic.size(); ++s) extra.row(static_cast<Eigen::Index>(s)) = res.synthetic[s].point.transpose();
    const std::vector<int> labels(res.synthetic.size(), class_i);
    res.data = ds.append(extra, labels);
    return res;
}

}  // namespace gicaps::oversample
