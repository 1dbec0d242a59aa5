#pragma once

#include "gicaps/common.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace gicaps {

/// Feature matrix with dense integer labels 0..C-1 and a per-class row index.
///
/// Immutable after construction; every mutating operation returns a new
/// Dataset. The constructor enforces the invariants: N >= 1, D >= 1, C >= 1,
/// labels in range, all features finite.
class Dataset {
public:
    Dataset(Matrix features, std::vector<int> labels, std::vector<std::string> class_names,
            std::vector<std::string> feature_names = {})
        : features_(std::move(features)),
          labels_(std::move(labels)),
          class_names_(std::move(class_names)),
          feature_names_(std::move(feature_names)) {
        if (features_.rows() < 1) throw Error("dataset has no rows");
        if (features_.cols() < 1) throw Error("dataset has no features");
        if (class_names_.empty()) throw Error("dataset has no classes");
        if (static_cast<Eigen::Index>(labels_.size()) != features_.rows())
            throw Error("label count does not match row count");
        if (!feature_names_.empty() && static_cast<Eigen::Index>(feature_names_.size()) != features_.cols())
            throw Error("feature name count does not match column count");
        if (!features_.allFinite()) throw Error("dataset contains NaN or Inf");
        class_index_.assign(class_names_.size(), {});
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            const int c = labels_[i];
            if (c < 0 || c >= num_classes()) throw Error("label " + std::to_string(c) + " out of range");
            class_index_[static_cast<std::size_t>(c)].push_back(i);
        }
    }

    /// Convenience for tests and generators: class names are "0".."C-1".
    static Dataset with_numeric_classes(Matrix features, std::vector<int> labels) {
        int c = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
        std::vector<std::string> names;
        for (int k = 0; k < std::max(c, 1); ++k) names.push_back(std::to_string(k));
        return Dataset(std::move(features), std::move(labels), std::move(names));
    }

    const Matrix& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    int label(std::size_t i) const { return labels_[i]; }
    auto row(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)).transpose(); }

    std::size_t rows() const { return static_cast<std::size_t>(features_.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(features_.cols()); }
    int num_classes() const { return static_cast<int>(class_names_.size()); }

    const std::vector<std::size_t>& class_rows(int c) const { return class_index_.at(static_cast<std::size_t>(c)); }
    const std::vector<std::vector<std::size_t>>& class_index() const { return class_index_; }
    std::vector<std::size_t> class_sizes() const {
        std::vector<std::size_t> s;
        for (const auto& rows : class_index_) s.push_back(rows.size());
        return s;
    }

    const std::vector<std::string>& class_names() const { return class_names_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    /// Rows of one class as a dense matrix, in class_rows order.
    Matrix class_matrix(int c) const { return gather(class_rows(c)); }

    Matrix gather(std::span<const std::size_t> idx) const {
        Matrix out(static_cast<Eigen::Index>(idx.size()), features_.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(idx[r]));
        return out;
    }

    /// New dataset made of the given rows, in the given order. Class table is kept.
    Dataset subset(std::span<const std::size_t> idx) const {
        std::vector<int> lab;
        lab.reserve(idx.size());
        for (auto i : idx) lab.push_back(labels_.at(i));
        return Dataset(gather(idx), std::move(lab), class_names_, feature_names_);
    }

    /// Same labels and class table, new feature matrix (possibly different D).
    Dataset with_features(Matrix f, std::vector<std::string> names = {}) const {
        return Dataset(std::move(f), labels_, class_names_, std::move(names));
    }

    /// Appends rows with the given labels.
    Dataset append(const Matrix& extra, std::span<const int> extra_labels) const {
        if (extra.rows() == 0) return *this;
        if (extra.cols() != features_.cols()) throw Error("append: dimension mismatch");
        Matrix f(features_.rows() + extra.rows(), features_.cols());
        f.topRows(features_.rows()) = features_;
        f.bottomRows(extra.rows()) = extra;
        std::vector<int> lab = labels_;
        lab.insert(lab.end(), extra_labels.begin(), extra_labels.end());
        return Dataset(std::move(f), std::move(lab), class_names_, feature_names_);
    }

private:
    Matrix features_;
    std::vector<int> labels_;
    std::vector<std::string> class_names_;
    std::vector<std::string> feature_names_;
    std::vector<std::vector<std::size_t>> class_index_;
};

// ---------------------------------------------------------------------------
// CSV

/// Column holding the class label: an index (negative counts from the end,
/// -1 is the last column) or a header name.
using LabelColumn = std::variant<long, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

inline bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

inline std::optional<double> parse_double(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("failed to format value");
    return std::string(buf, ptr);
}

}  // namespace detail

/// Parses the CSV dialect: comma separated, '.' decimal, optional header,
/// blank lines and lines starting with '#' ignored. A `# classes: a,b,c`
/// comment fixes the label order; otherwise labels are numbered by first
/// appearance.
inline Dataset read_csv(std::istream& in, const LabelColumn& label_column, bool has_header,
                        const std::string& source = "<stream>") {
    std::vector<std::string> header;
    std::vector<std::string> class_names;
    std::unordered_map<std::string, int> class_ids;
    std::vector<double> values;
    std::vector<int> labels;
    std::optional<std::size_t> ncols;
    std::size_t label_idx = 0;

    auto resolve_label_column = [&](std::size_t n) {
        if (const auto* idx = std::get_if<long>(&label_column)) {
            const long i = *idx < 0 ? static_cast<long>(n) + *idx : *idx;
            if (i < 0 || i >= static_cast<long>(n)) throw Error(source + ": label column " + std::to_string(*idx) + " out of range");
            label_idx = static_cast<std::size_t>(i);
        } else {
            const auto& name = std::get<std::string>(label_column);
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw Error(source + ": label column '" + name + "' not found in header");
            label_idx = static_cast<std::size_t>(it - header.begin());
        }
    };

    std::string line;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            constexpr std::string_view directive = "# classes:";
            if (t.rfind(directive, 0) == 0 && labels.empty()) {
                for (auto& name : detail::split_csv_line(t.substr(directive.size()))) {
                    if (name.empty() || class_ids.count(name)) continue;
                    class_ids.emplace(name, static_cast<int>(class_names.size()));
                    class_names.push_back(name);
                }
            }
            continue;
        }
        auto cells = detail::split_csv_line(t);
        if (header_pending) {
            header = cells;
            header_pending = false;
            ncols = cells.size();
            resolve_label_column(cells.size());
            continue;
        }
        if (!ncols) {
            if (std::holds_alternative<std::string>(label_column))
                throw Error(source + ": label column given by name but file has no header");
            ncols = cells.size();
            resolve_label_column(cells.size());
        }
        if (cells.size() != *ncols)
            throw Error(source + ": row at line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(*ncols));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& cell = cells[c];
            if (c == label_idx) {
                if (detail::is_missing(cell))
                    throw Error(source + ": missing label at line " + std::to_string(line_no));
                auto [it, inserted] = class_ids.emplace(cell, static_cast<int>(class_names.size()));
                if (inserted) class_names.push_back(cell);
                labels.push_back(it->second);
                continue;
            }
            if (detail::is_missing(cell))
                throw Error(source + ": missing value at line " + std::to_string(line_no) + ", column " + std::to_string(c + 1));
            auto v = detail::parse_double(cell);
            if (!v || !std::isfinite(*v))
                throw Error(source + ": cannot parse '" + cell + "' as a number at line " + std::to_string(line_no) +
                            ", column " + std::to_string(c + 1));
            values.push_back(*v);
        }
    }
    if (labels.empty()) throw Error(source + ": no data rows");
    if (*ncols < 2) throw Error(source + ": need at least one feature column besides the label");

    const auto n = static_cast<Eigen::Index>(labels.size());
    const auto d = static_cast<Eigen::Index>(*ncols - 1);
    Matrix features = Eigen::Map<Matrix>(values.data(), n, d);
    std::vector<std::string> feature_names;
    if (!header.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != label_idx) feature_names.push_back(header[c]);
    }
    return Dataset(std::move(features), std::move(labels), std::move(class_names), std::move(feature_names));
}

inline Dataset load_csv(const std::string& path, const LabelColumn& label_column = -1L, bool has_header = true) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_csv(in, label_column, has_header, path);
}

/// Writes the dataset with a `# classes:` line (so a reload keeps the label
/// numbering), any extra comment lines, a header, and values in shortest
/// round-trip form. The label is the last column.
inline void write_csv(const Dataset& ds, std::ostream& out, const std::vector<std::string>& comments = {}) {
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "# classes:";
    for (std::size_t k = 0; k < ds.class_names().size(); ++k) out << (k ? "," : " ") << ds.class_names()[k];
    out << '\n';
    for (std::size_t j = 0; j < ds.dims(); ++j) {
        out << (ds.feature_names().empty() ? "f" + std::to_string(j) : ds.feature_names()[j]) << ',';
    }
    out << "label\n";
    const auto& f = ds.features();
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < ds.dims(); ++j)
            out << detail::format_double(f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << ',';
        out << ds.class_names()[static_cast<std::size_t>(ds.label(i))] << '\n';
    }
}

inline void save_csv(const Dataset& ds, const std::string& path, const std::vector<std::string>& comments = {}) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_csv(ds, out, comments);
}

// ---------------------------------------------------------------------------
// Min-max normalization

struct NormalizationParams {
    std::vector<double> min;  ///< per original feature
    std::vector<double> max;
    std::vector<std::size_t> dropped;   ///< constant columns
    std::vector<std::size_t> retained;  ///< columns kept, in order
};

/// Maps each feature to [0,1] with the given parameters. Values outside the
/// fitted range (test folds) map outside [0,1]; that is expected.
inline Dataset apply_normalization(const Dataset& ds, const NormalizationParams& p) {
    if (p.min.size() != ds.dims()) throw Error("normalization fitted on a different dimension");
    Matrix out(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(p.retained.size()));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < p.retained.size(); ++k) {
        const auto j = p.retained[k];
        const double lo = p.min[j], span = p.max[j] - p.min[j];
        out.col(static_cast<Eigen::Index>(k)) = (ds.features().col(static_cast<Eigen::Index>(j)).array() - lo) / span;
        if (!ds.feature_names().empty()) names.push_back(ds.feature_names()[j]);
    }
    return ds.with_features(std::move(out), std::move(names));
}

inline NormalizationParams fit_minmax(const Dataset& ds) {
    NormalizationParams p;
    const auto& f = ds.features();
    for (std::size_t j = 0; j < ds.dims(); ++j) {
        const auto col = f.col(static_cast<Eigen::Index>(j));
        const double lo = col.minCoeff(), hi = col.maxCoeff();
        p.min.push_back(lo);
        p.max.push_back(hi);
        (hi > lo ? p.retained : p.dropped).push_back(j);
    }
    if (p.retained.empty()) throw Error("degenerate dataset: every feature is constant");
    return p;
}

inline std::pair<Dataset, NormalizationParams> normalize_minmax(const Dataset& ds) {
    auto p = fit_minmax(ds);
    return {apply_normalization(ds, p), std::move(p)};
}

// ---------------------------------------------------------------------------
// Stratified k-fold

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Each class is shuffled and dealt round-robin across folds, continuing the
/// deal where the previous class stopped so fold sizes stay balanced.
/// Singleton classes never enter a test fold.
inline std::vector<Fold> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("stratified_kfold: k must be at least 2");
    if (static_cast<std::size_t>(k) > ds.rows()) throw Error("stratified_kfold: k exceeds the number of rows");

    std::vector<std::vector<std::size_t>> test(static_cast<std::size_t>(k));
    std::vector<char> in_test(ds.rows(), 0);
    std::size_t next = 0;
    for (int c = 0; c < ds.num_classes(); ++c) {
        auto rows = ds.class_rows(c);
        if (rows.empty()) continue;
        if (rows.size() == 1) {
            warn("class '" + ds.class_names()[static_cast<std::size_t>(c)] +
                 "' has a single instance; it is kept in every training fold and never tested");
            continue;
        }
        auto rng = make_rng(seed, "kfold", {static_cast<std::uint64_t>(c)});
        shuffle(rows.begin(), rows.end(), rng);
        for (auto r : rows) {
            test[next % static_cast<std::size_t>(k)].push_back(r);
            in_test[r] = 1;
            ++next;
        }
    }

    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        auto& t = test[f];
        std::sort(t.begin(), t.end());
        std::vector<char> mark(ds.rows(), 0);
        for (auto r : t) mark[r] = 1;
        for (std::size_t r = 0; r < ds.rows(); ++r)
            if (!mark[r]) folds[f].train.push_back(r);
        folds[f].test = std::move(t);
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

struct GaussianBlobSpec {
    Vector mean;
    Eigen::MatrixXd covariance;
    std::size_t count = 0;
    int class_id = 0;
};

/// Draws `count` points per blob from N(mean, covariance). Class ids are used
/// verbatim as labels (names "0".."C-1").
inline Dataset generate_gmm_data(const std::vector<GaussianBlobSpec>& specs, std::uint64_t seed) {
    if (specs.empty()) throw UsageError("generate_gmm_data: no blobs given");
    const auto d = specs.front().mean.size();
    std::size_t total = 0;
    int max_class = 0;
    std::vector<Eigen::MatrixXd> factors;
    for (std::size_t b = 0; b < specs.size(); ++b) {
        const auto& s = specs[b];
        const std::string tag = "blob " + std::to_string(b);
        if (s.mean.size() != d || s.covariance.rows() != d || s.covariance.cols() != d)
            throw UsageError(tag + ": dimension mismatch");
        if (s.count == 0) throw UsageError(tag + ": count must be positive");
        if (s.class_id < 0) throw UsageError(tag + ": class id must be non-negative");
        if ((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw Error(tag + ": covariance is not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(s.covariance);
        if (llt.info() != Eigen::Success) throw Error(tag + ": covariance is not positive definite");
        factors.push_back(llt.matrixL());
        total += s.count;
        max_class = std::max(max_class, s.class_id);
    }

    Matrix f(static_cast<Eigen::Index>(total), d);
    std::vector<int> labels;
    labels.reserve(total);
    Eigen::Index row = 0;
    Vector z(d);
    for (std::size_t b = 0; b < specs.size(); ++b) {
        auto rng = make_rng(seed, "generate", {b});
        for (std::size_t i = 0; i < specs[b].count; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) z(j) = standard_normal(rng);
            f.row(row++) = (specs[b].mean + factors[b] * z).transpose();
            labels.push_back(specs[b].class_id);
        }
    }
    std::vector<std::string> names;
    for (int c = 0; c <= max_class; ++c) names.push_back(std::to_string(c));
    return Dataset(std::move(f), std::move(labels), std::move(names));
}

}  // namespace gicaps
