#pragma once

#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"
#include "gicaps/evaluate.hpp"
#include "gicaps/gmr.hpp"
#include "gicaps/resample.hpp"
#include "gicaps/simulate.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

/// Run configuration: a JSON document with "schema": 1. Keys are validated
/// strictly; an unknown key or a wrongly typed value is a usage error.
///
///   {
///     "schema": 1, "seed": 7, "out": "runs/x",
///     "dataset":  {"name": "..", "csv": "path", "label_column": -1, "header": true, "normalize": true}
///              or {"name": "..", "preset": "two_class", "dims": 3}
///              or {"name": "..", "blobs": [{"mean": [..], "cov": [[..]] | "sd": s, "count": n, "class": c}]},
///     "datasets": [ ...dataset objects... ],          (benchmark; defaults to [dataset])
///     "method": "gicaps", "methods": ["gicaps", "smote"],
///     "undersample": {"n_target", "k_clusters", "max_auto_k", "delta", "dedupe_angle_eps", "max_iter"},
///     "oversample":  {"h_target": {"<class>": n}, "kappa_same", "lambda_v", "kappa_q", "tau_cross_rel",
///                     "rho", "noise_rel", "pre_cluster", "pre_cluster_k", "max_redraws", "top_up_rounds"},
///     "baselines":   {"k_neighbors", "smote_percent", "adasyn_beta", "adasyn_major_cap"},
///     "gmr": {"K", "max_iter", "tol", "class_values"},
///     "cv": {"folds", "threads"},
///     "margin": {"classes": [a, b], "n_pca"}
///   }
///
/// A method needs its sub-config object (possibly empty): gicaps needs
/// undersample and oversample, gicaps-u undersample, gicaps-o oversample,
/// smote and adasyn baselines.
namespace gicaps::cli {

using nlohmann::json;

inline constexpr int kConfigSchema = 1;

struct DatasetSpec {
    std::string name;
    std::optional<std::string> csv;
    LabelColumn label_column = -1L;
    bool header = true;
    bool normalize = true;
    std::optional<std::string> preset;
    int dims = 3;
    std::vector<GaussianBlobSpec> blobs;
};

struct RunConfig {
    json effective;  ///< the document after flag overrides
    std::uint64_t seed = 0;
    std::string out = ".";
    std::optional<DatasetSpec> dataset;
    std::vector<DatasetSpec> datasets;
    std::optional<Method> method;
    std::vector<Method> methods;
    std::optional<undersample::UndersampleConfig> under;
    std::optional<std::size_t> n_target;
    std::optional<oversample::OversampleConfig> over;
    std::optional<baselines::BaselineConfig> base;
    gmr::GmrConfig gmr;
    evaluate::CvOptions cv;
    std::optional<std::pair<int, int>> margin_classes;
    std::optional<int> n_pca;
};

/// Command-line values that take precedence over the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
};

namespace detail {

class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw UsageError(where_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw UsageError(where_ + ": unknown key '" + it.key() + "'");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }

    template <typename T>
    void get(const char* key, T& dst) const {
        if (!j_.contains(key)) return;
        dst = as<T>(key);
    }
    template <typename T>
    void get(const char* key, std::optional<T>& dst) const {
        if (!j_.contains(key)) return;
        dst = as<T>(key);
    }
    template <typename T>
    T as(const char* key) const {
        const auto& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw UsageError(path(key) + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw UsageError(path(key) + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw UsageError(path(key) + ": expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw UsageError(path(key) + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw UsageError(path(key) + ": expected a string");
        }
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw UsageError(path(key) + ": invalid value");
        }
    }

    std::string path(const char* key) const { return where_ + "." + key; }

private:
    const json& j_;
    std::string where_;
};

inline Vector to_vector(const json& a, const std::string& where) {
    if (!a.is_array() || a.empty()) throw UsageError(where + ": expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw UsageError(where + ": expected numbers");
        v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    }
    return v;
}

inline GaussianBlobSpec parse_blob(const json& j, const std::string& where) {
    Section s(j, where);
    s.allow({"mean", "cov", "sd", "count", "class"});
    if (!s.has("mean") || !s.has("count")) throw UsageError(where + ": 'mean' and 'count' are required");
    GaussianBlobSpec b;
    b.mean = to_vector(s.raw("mean"), s.path("mean"));
    const auto d = b.mean.size();
    if (s.has("cov") == s.has("sd")) throw UsageError(where + ": give exactly one of 'cov' or 'sd'");
    if (s.has("sd")) {
        const double sd = s.as<double>("sd");
        if (!(sd > 0.0)) throw UsageError(s.path("sd") + ": must be positive");
        b.covariance = simulate::iso(d, sd);
    } else {
        const auto& c = s.raw("cov");
        if (!c.is_array() || c.size() != static_cast<std::size_t>(d)) throw UsageError(s.path("cov") + ": expected a DxD array");
        b.covariance.resize(d, d);
        for (Eigen::Index r = 0; r < d; ++r) {
            const Vector row = to_vector(c[static_cast<std::size_t>(r)], s.path("cov"));
            if (row.size() != d) throw UsageError(s.path("cov") + ": expected a DxD array");
            b.covariance.row(r) = row.transpose();
        }
    }
    b.count = s.as<std::size_t>("count");
    s.get("class", b.class_id);
    return b;
}

inline DatasetSpec parse_dataset(const json& j, const std::string& where) {
    Section s(j, where);
    s.allow({"name", "csv", "label_column", "header", "normalize", "preset", "dims", "blobs"});
    DatasetSpec d;
    s.get("csv", d.csv);
    s.get("preset", d.preset);
    const int sources = int(d.csv.has_value()) + int(d.preset.has_value()) + int(s.has("blobs"));
    if (sources != 1) throw UsageError(where + ": give exactly one of 'csv', 'preset' or 'blobs'");
    if (s.has("label_column")) {
        const auto& lc = s.raw("label_column");
        if (lc.is_string())
            d.label_column = lc.get<std::string>();
        else if (lc.is_number_integer())
            d.label_column = lc.get<long>();
        else
            throw UsageError(s.path("label_column") + ": expected an integer or a column name");
    }
    s.get("header", d.header);
    s.get("normalize", d.normalize);
    s.get("dims", d.dims);
    if (d.preset) {
        const auto& names = simulate::preset_names();
        if (std::find(names.begin(), names.end(), *d.preset) == names.end())
            throw UsageError(s.path("preset") + ": unknown preset '" + *d.preset + "'");
        if (d.dims < 2) throw UsageError(s.path("dims") + ": must be at least 2");
    }
    if (s.has("blobs")) {
        const auto& arr = s.raw("blobs");
        if (!arr.is_array() || arr.empty()) throw UsageError(s.path("blobs") + ": expected a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i) d.blobs.push_back(parse_blob(arr[i], s.path("blobs") + "[" + std::to_string(i) + "]"));
    }
    d.name = d.csv ? *d.csv : d.preset ? *d.preset : "blobs";
    s.get("name", d.name);
    return d;
}

inline undersample::UndersampleConfig parse_under(const json& j, std::optional<std::size_t>& n_target) {
    Section s(j, "undersample");
    s.allow({"n_target", "k_clusters", "max_auto_k", "delta", "dedupe_angle_eps", "max_iter"});
    undersample::UndersampleConfig c;
    s.get("n_target", n_target);
    if (n_target && *n_target == 0) throw UsageError("undersample.n_target: must be positive");
    s.get("k_clusters", c.k_clusters);
    s.get("max_auto_k", c.max_auto_k);
    s.get("delta", c.delta);
    s.get("dedupe_angle_eps", c.dedupe_angle_eps);
    s.get("max_iter", c.max_iter);
    if (c.k_clusters && *c.k_clusters < 1) throw UsageError("undersample.k_clusters: must be positive");
    if (!(c.delta > 0.0)) throw UsageError("undersample.delta: must be positive");
    if (c.max_auto_k < 1 || c.max_iter < 1) throw UsageError("undersample: max_auto_k and max_iter must be positive");
    return c;
}

inline oversample::OversampleConfig parse_over(const json& j) {
    Section s(j, "oversample");
    s.allow({"h_target", "kappa_same", "lambda_v", "kappa_q", "tau_cross_rel", "rho", "noise_rel", "pre_cluster",
             "pre_cluster_k", "max_redraws", "top_up_rounds"});
    oversample::OversampleConfig c;
    if (s.has("h_target")) {
        Section h(s.raw("h_target"), "oversample.h_target");
        for (auto it = s.raw("h_target").begin(); it != s.raw("h_target").end(); ++it) {
            int cls = 0;
            try {
                std::size_t pos = 0;
                cls = std::stoi(it.key(), &pos);
                if (pos != it.key().size() || cls < 0) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw UsageError("oversample.h_target: keys must be class ids, got '" + it.key() + "'");
            }
            c.h_target[cls] = h.as<std::size_t>(it.key().c_str());
        }
    }
    s.get("kappa_same", c.kappa_same);
    s.get("lambda_v", c.lambda_v);
    s.get("kappa_q", c.kappa_q);
    s.get("tau_cross_rel", c.tau_cross_rel);
    s.get("rho", c.rho);
    s.get("noise_rel", c.noise_rel);
    s.get("pre_cluster", c.pre_cluster);
    s.get("pre_cluster_k", c.pre_cluster_k);
    s.get("max_redraws", c.max_redraws);
    s.get("top_up_rounds", c.top_up_rounds);
    if (c.max_redraws < 0 || c.top_up_rounds < 0) throw UsageError("oversample: max_redraws and top_up_rounds must be non-negative");
    oversample::validate(c);
    return c;
}

inline baselines::BaselineConfig parse_base(const json& j) {
    Section s(j, "baselines");
    s.allow({"k_neighbors", "smote_percent", "adasyn_beta", "adasyn_major_cap"});
    baselines::BaselineConfig c;
    s.get("k_neighbors", c.k_neighbors);
    s.get("smote_percent", c.smote_percent);
    s.get("adasyn_beta", c.adasyn_beta);
    s.get("adasyn_major_cap", c.adasyn_major_cap);
    baselines::validate(c);
    return c;
}

inline gmr::GmrConfig parse_gmr(const json& j) {
    Section s(j, "gmr");
    s.allow({"K", "max_iter", "tol", "class_values"});
    gmr::GmrConfig c;
    s.get("K", c.K);
    s.get("max_iter", c.max_iter);
    s.get("tol", c.tol);
    if (s.has("class_values")) {
        const Vector v = to_vector(s.raw("class_values"), "gmr.class_values");
        c.class_values = std::vector<double>(v.data(), v.data() + v.size());
    }
    if (c.K < 1 || c.max_iter < 1) throw UsageError("gmr: K and max_iter must be positive");
    if (!(c.tol >= 0.0)) throw UsageError("gmr.tol: must be non-negative");
    return c;
}

inline Method parse_method_value(const json& v, const std::string& where) {
    if (!v.is_string()) throw UsageError(where + ": expected a method name");
    return parse_method(v.get<std::string>());
}

}  // namespace detail

inline void require_subconfigs(const RunConfig& c, Method m) {
    const std::string name = method_name(m);
    if (uses_undersampler(m) && !c.under) throw UsageError("method " + name + " needs an 'undersample' section");
    if (uses_oversampler(m) && !c.over) throw UsageError("method " + name + " needs an 'oversample' section");
    if ((m == Method::smote || m == Method::adasyn) && !c.base) throw UsageError("method " + name + " needs a 'baselines' section");
}

/// Parses a configuration document after applying the overrides.
inline RunConfig parse_config(json doc, const Overrides& ov = {}) {
    if (!doc.is_object()) throw UsageError("config: expected a JSON object");
    if (ov.seed) doc["seed"] = *ov.seed;
    if (ov.out) doc["out"] = *ov.out;
    if (ov.threads) doc["cv"]["threads"] = *ov.threads;

    detail::Section s(doc, "config");
    s.allow({"schema", "seed", "out", "dataset", "datasets", "method", "methods", "undersample", "oversample", "baselines",
             "gmr", "cv", "margin"});
    if (!s.has("schema")) throw UsageError("config: missing \"schema\"");
    if (s.as<int>("schema") != kConfigSchema)
        throw UsageError("config: unsupported schema " + std::to_string(s.as<int>("schema")) + " (expected 1)");
    if (!s.has("seed")) throw UsageError("config: a seed is required (in the file or via --seed)");

    RunConfig c;
    c.seed = s.as<std::uint64_t>("seed");
    s.get("out", c.out);
    if (s.has("dataset")) c.dataset = detail::parse_dataset(s.raw("dataset"), "dataset");
    if (s.has("datasets")) {
        const auto& arr = s.raw("datasets");
        if (!arr.is_array() || arr.empty()) throw UsageError("config.datasets: expected a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            c.datasets.push_back(detail::parse_dataset(arr[i], "datasets[" + std::to_string(i) + "]"));
    } else if (c.dataset) {
        c.datasets.push_back(*c.dataset);
    }
    if (s.has("method")) c.method = detail::parse_method_value(s.raw("method"), "config.method");
    if (s.has("methods")) {
        const auto& arr = s.raw("methods");
        if (!arr.is_array() || arr.empty()) throw UsageError("config.methods: expected a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i) c.methods.push_back(detail::parse_method_value(arr[i], "config.methods"));
    } else if (c.method) {
        c.methods.push_back(*c.method);
    }
    if (s.has("undersample")) c.under = detail::parse_under(s.raw("undersample"), c.n_target);
    if (s.has("oversample")) c.over = detail::parse_over(s.raw("oversample"));
    if (s.has("baselines")) c.base = detail::parse_base(s.raw("baselines"));
    if (s.has("gmr")) c.gmr = detail::parse_gmr(s.raw("gmr"));
    if (s.has("cv")) {
        detail::Section cv(s.raw("cv"), "cv");
        cv.allow({"folds", "threads"});
        cv.get("folds", c.cv.k_folds);
        cv.get("threads", c.cv.threads);
        if (c.cv.k_folds < 2) throw UsageError("cv.folds: must be at least 2");
        if (c.cv.threads < 1) throw UsageError("cv.threads: must be at least 1");
    }
    if (s.has("margin")) {
        detail::Section m(s.raw("margin"), "margin");
        m.allow({"classes", "n_pca"});
        if (m.has("classes")) {
            const auto& a = m.raw("classes");
            if (!a.is_array() || a.size() != 2 || !a[0].is_number_integer() || !a[1].is_number_integer())
                throw UsageError("margin.classes: expected two class ids");
            c.margin_classes = std::make_pair(a[0].get<int>(), a[1].get<int>());
        }
        m.get("n_pca", c.n_pca);
        if (c.n_pca && *c.n_pca < 1) throw UsageError("margin.n_pca: must be positive");
    }
    for (auto m : c.methods) require_subconfigs(c, m);
    c.effective = std::move(doc);
    return c;
}

inline json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
}

/// Builds the spec the resample module consumes.
inline ResampleSpec resample_spec(const RunConfig& c, Method m) {
    require_subconfigs(c, m);
    ResampleSpec s;
    s.method = m;
    s.n_target = c.n_target;
    if (c.under) s.under = *c.under;
    if (c.over) s.over = *c.over;
    if (c.base) s.base = *c.base;
    return s;
}

/// Loads (or generates) a dataset; the seed feeds generators only.
inline Dataset load_dataset(const DatasetSpec& d, std::uint64_t seed) {
    if (d.csv) return load_csv(*d.csv, d.label_column, d.header);
    if (d.preset) return generate_gmm_data(simulate::preset(*d.preset, seed, d.dims), seed);
    return generate_gmm_data(d.blobs, seed);
}

}  // namespace gicaps::cli
