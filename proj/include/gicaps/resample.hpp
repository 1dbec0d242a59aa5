#pragma once

#include "gicaps/baselines.hpp"
#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/oversample.hpp"
#include "gicaps/undersample.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gicaps {

enum class Method { gicaps, gicaps_o, gicaps_u, smote, adasyn, ros, rus, none };

inline const std::vector<std::pair<Method, std::string>>& method_table() {
    static const std::vector<std::pair<Method, std::string>> t{
        {Method::gicaps, "gicaps"}, {Method::gicaps_o, "gicaps-o"}, {Method::gicaps_u, "gicaps-u"},
        {Method::smote, "smote"},   {Method::adasyn, "adasyn"},     {Method::ros, "ros"},
        {Method::rus, "rus"},       {Method::none, "none"}};
    return t;
}

inline std::string method_name(Method m) {
    for (const auto& [k, v] : method_table())
        if (k == m) return v;
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (const auto& [k, v] : method_table())
        if (v == s) return k;
    throw UsageError("unknown method '" + s + "'");
}

inline bool uses_undersampler(Method m) { return m == Method::gicaps || m == Method::gicaps_u; }
inline bool uses_oversampler(Method m) { return m == Method::gicaps || m == Method::gicaps_o; }

struct ResampleSpec {
    Method method = Method::none;
    std::optional<std::size_t> n_target;  ///< N_D; default: geometric mean of the two largest class sizes
    undersample::UndersampleConfig under;  ///< n_target is overwritten per class
    oversample::OversampleConfig over;
    baselines::BaselineConfig base;
};

/// Per-class bookkeeping of one run.
struct ClassPlan {
    int class_id = 0;
    std::size_t before = 0;
    std::size_t target = 0;
    std::size_t after = 0;
    std::string action;  ///< undersample | oversample | keep | skip-singleton
};

struct ClassAudit {
    int class_id = 0;
    undersample::UndersampleResult result;
    std::vector<std::size_t> row_map;  ///< class-matrix row -> input row
};

struct ResampleResult {
    Dataset data;
    std::vector<long> source_row;                          ///< input row per output row, -1 for synthetic
    std::vector<oversample::SyntheticRecord> synthetic;    ///< m_index / v_index refer to input rows
    std::vector<std::size_t> rejected;                     ///< input rows removed, sorted
    std::vector<ClassAudit> audits;
    std::vector<ClassPlan> plan;
    std::size_t dropped = 0;
};

/// Default N_D: geometric mean of the largest and second largest class sizes
/// among classes with at least 2 rows.
inline std::size_t default_n_target(const Dataset& ds) {
    std::vector<std::size_t> s;
    for (auto c : ds.class_sizes())
        if (c >= 2) s.push_back(c);
    if (s.empty()) throw Error("no class with at least 2 rows");
    std::sort(s.rbegin(), s.rend());
    if (s.size() == 1) return s[0];
    return static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(s[0]) * static_cast<double>(s[1]))));
}

namespace detail {

struct Working {
    Dataset ds;
    std::vector<long> src;
};

inline Working drop_rows(const Working& w, const std::vector<std::size_t>& drop_local) {
    if (drop_local.empty()) return w;
    std::vector<char> drop(w.ds.rows(), 0);
    for (auto r : drop_local) drop[r] = 1;
    std::vector<std::size_t> keep;
    std::vector<long> src;
    for (std::size_t i = 0; i < w.ds.rows(); ++i)
        if (!drop[i]) {
            keep.push_back(i);
            src.push_back(w.src[i]);
        }
    return {w.ds.subset(keep), std::move(src)};
}

inline std::size_t to_input(const Working& w, std::size_t local) { return static_cast<std::size_t>(w.src.at(local)); }

}  // namespace detail

/// Runs one resampling method over every class with at least 2 rows.
/// Undersampling happens first and all oversamplers see the same reduced
/// dataset, so synthetic rows of one class never influence another.
inline ResampleResult resample(const Dataset& ds, const ResampleSpec& spec, std::uint64_t seed) {
    const int C = ds.num_classes();
    const auto sizes = ds.class_sizes();
    ResampleResult res{ds, baselines::detail::identity_rows(ds.rows()), {}, {}, {}, {}, 0};
    std::vector<ClassPlan> plan(static_cast<std::size_t>(C));
    std::size_t max_size = 0, min_size = std::numeric_limits<std::size_t>::max();
    int largest = -1;
    for (int c = 0; c < C; ++c) {
        auto& p = plan[static_cast<std::size_t>(c)];
        p.class_id = c;
        p.before = p.target = sizes[static_cast<std::size_t>(c)];
        p.action = p.before == 1 ? "skip-singleton" : "keep";
        if (p.before >= 2) {
            if (p.before > max_size) {
                max_size = p.before;
                largest = c;
            }
            min_size = std::min(min_size, p.before);
        }
    }
    for (int c = 0; c < C; ++c)
        if (sizes[static_cast<std::size_t>(c)] == 1)
            warn("class '" + ds.class_names()[static_cast<std::size_t>(c)] + "' has a single row and is not resampled");
    if (largest < 0 || spec.method == Method::none) {
        for (auto& p : plan) p.after = p.before;
        res.plan = std::move(plan);
        return res;
    }
    auto eligible = [&](int c) { return sizes[static_cast<std::size_t>(c)] >= 2; };

    // Targets.
    std::size_t n_d = 0;
    if (uses_undersampler(spec.method)) {
        n_d = spec.n_target ? *spec.n_target : default_n_target(ds);
        if (n_d == 0) throw UsageError("n_target must be positive");
    }
    for (int c = 0; c < C; ++c) {
        if (!eligible(c)) continue;
        auto& p = plan[static_cast<std::size_t>(c)];
        switch (spec.method) {
            case Method::gicaps: p.target = std::min(n_d, max_size); break;
            case Method::gicaps_u: p.target = std::min(n_d, p.before); break;
            case Method::gicaps_o:
            case Method::ros: p.target = max_size; break;
            case Method::rus: p.target = min_size; break;
            case Method::smote:
                p.target = c == largest ? p.before : p.before * (1 + static_cast<std::size_t>(spec.base.smote_percent) / 100) +
                                                          p.before * static_cast<std::size_t>(spec.base.smote_percent % 100) / 100;
                break;
            case Method::adasyn:
                if (c == largest && spec.base.adasyn_major_cap) p.target = std::min(p.before, *spec.base.adasyn_major_cap);
                break;
            case Method::none: break;
        }
        if (spec.method == Method::gicaps || spec.method == Method::gicaps_o) {
            const auto it = spec.over.h_target.find(c);
            if (it != spec.over.h_target.end() && p.target >= p.before) p.target = p.before + it->second;
        }
    }

    // Stage 1: removal.
    detail::Working w{ds, res.source_row};
    std::vector<std::size_t> drop;
    for (int c = 0; c < C; ++c) {
        auto& p = plan[static_cast<std::size_t>(c)];
        if (!eligible(c) || p.target >= p.before) continue;
        p.action = "undersample";
        const auto& rows = ds.class_rows(c);
        if (uses_undersampler(spec.method)) {
            auto cfg = spec.under;
            cfg.n_target = p.target;
            auto u = undersample::gicaps_undersample(ds.gather(rows), cfg, derive_seed(seed, "resample-undersample", {static_cast<std::uint64_t>(c)}));
            for (auto r : u.rejected) drop.push_back(rows[r]);
            res.audits.push_back({c, std::move(u), rows});
        } else {
            auto r = baselines::rus(ds, c, p.target, derive_seed(seed, "resample-rus"));
            drop.insert(drop.end(), r.removed.begin(), r.removed.end());
        }
    }
    std::sort(drop.begin(), drop.end());
    res.rejected = drop;
    w = detail::drop_rows(w, drop);

    // Stage 2: synthesis against the reduced dataset.
    std::vector<oversample::SyntheticRecord> syn;
    for (int c = 0; c < C; ++c) {
        auto& p = plan[static_cast<std::size_t>(c)];
        if (!eligible(c)) continue;
        const std::size_t have = w.ds.class_rows(c).size();
        const bool grow = spec.method == Method::adasyn ? c != largest : p.target > have;
        if (!grow) continue;
        p.action = "oversample";
        const auto cseed = derive_seed(seed, "resample-oversample", {static_cast<std::uint64_t>(c)});
        std::vector<oversample::SyntheticRecord> got;
        switch (spec.method) {
            case Method::gicaps:
            case Method::gicaps_o: {
                auto cfg = spec.over;
                cfg.h_target = {{c, p.target - have}};
                auto o = oversample::gicaps_oversample(w.ds, c, cfg, cseed);
                res.dropped += o.dropped;
                got = std::move(o.synthetic);
                break;
            }
            case Method::smote: got = baselines::smote(w.ds, c, spec.base, cseed).synthetic; break;
            case Method::adasyn: got = baselines::adasyn(w.ds, c, spec.base, cseed).synthetic; break;
            case Method::ros: got = baselines::ros(w.ds, c, p.target, cseed).synthetic; break;
            default: break;
        }
        for (auto& s : got) {
            s.m_index = detail::to_input(w, s.m_index);
            s.v_index = detail::to_input(w, s.v_index);
            syn.push_back(std::move(s));
        }
    }

    Matrix extra(static_cast<Eigen::Index>(syn.size()), static_cast<Eigen::Index>(ds.dims()));
    std::vector<int> labels;
    for (std::size_t s = 0; s < syn.size(); ++s) {
        extra.row(static_cast<Eigen::Index>(s)) = syn[s].point.transpose();
        labels.push_back(syn[s].class_id);
    }
    res.data = w.ds.append(extra, labels);
    res.source_row = std::move(w.src);
    res.source_row.resize(res.data.rows(), -1);
    res.synthetic = std::move(syn);
    const auto after = res.data.class_sizes();
    for (int c = 0; c < C; ++c) plan[static_cast<std::size_t>(c)].after = after[static_cast<std::size_t>(c)];
    res.plan = std::move(plan);
    return res;
}

}  // namespace gicaps
