#pragma once

#include "gicaps/cli/config.hpp"
#include "gicaps/evaluate.hpp"
#include "gicaps/resample.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gicaps::cli {

namespace fs = std::filesystem;

/// Reproducibility header: command, schema, seed and the effective config.
/// The output directory and the worker count are left out; neither changes
/// any result. Written as '#' lines in text outputs and as the first record
/// of JSONL outputs.
inline json config_echo(const RunConfig& c) {
    json e = c.effective;
    e.erase("out");
    if (e.contains("cv") && e["cv"].is_object()) {
        e["cv"].erase("threads");
        if (e["cv"].empty()) e.erase("cv");
    }
    return e;
}

inline std::vector<std::string> header_lines(const std::string& command, const RunConfig& c) {
    return {"gicaps " + command, "schema: " + std::to_string(kConfigSchema), "seed: " + std::to_string(c.seed),
            "config: " + config_echo(c).dump()};
}

inline json header_record(const std::string& command, const RunConfig& c) {
    return {{"record", "header"}, {"command", command}, {"schema", kConfigSchema}, {"seed", c.seed}, {"config", config_echo(c)}};
}

namespace detail {

inline fs::path prepare_out(const RunConfig& c) {
    fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

inline void write_comments(std::ostream& out, const std::vector<std::string>& lines) {
    for (const auto& l : lines) out << "# " << l << '\n';
}

inline std::string num(double v) { return gicaps::detail::format_double(v); }

inline const DatasetSpec& single_dataset(const RunConfig& c, const char* cmd) {
    if (!c.dataset) throw UsageError(std::string(cmd) + ": config needs a 'dataset' section");
    return *c.dataset;
}

inline Method single_method(const RunConfig& c, const char* cmd) {
    if (!c.method) throw UsageError(std::string(cmd) + ": config needs a 'method'");
    return *c.method;
}

/// Loads the dataset and min-max normalises it unless disabled.
inline Dataset prepared(const DatasetSpec& d, std::uint64_t seed) {
    Dataset ds = load_dataset(d, seed);
    return d.normalize ? normalize_minmax(ds).first : ds;
}

inline std::string intervals(const std::vector<geometry::Interval>& v) {
    std::string s;
    for (const auto& iv : v) s += (s.empty() ? "" : ";") + num(iv.lo) + ":" + num(iv.hi);
    return s;
}

}  // namespace detail

/// Draws a dataset from a preset or explicit blobs: <out>/data.csv.
inline int cmd_generate(const RunConfig& c) {
    const auto& d = detail::single_dataset(c, "generate");
    if (d.csv) throw UsageError("generate: dataset must be a 'preset' or 'blobs', not a csv");
    const Dataset ds = load_dataset(d, c.seed);
    const auto dir = detail::prepare_out(c);
    auto out = detail::open_out(dir / "data.csv");
    write_csv(ds, out, header_lines("generate", c));
    return 0;
}

/// Resamples one dataset with one method. Writes normalized.csv (the input
/// as resampled), resampled.csv, counts.csv, provenance.csv and, when the
/// angular undersampler ran, audit.csv.
inline int cmd_resample(const RunConfig& c) {
    const auto& d = detail::single_dataset(c, "resample");
    const Method m = detail::single_method(c, "resample");
    const auto spec = resample_spec(c, m);
    const Dataset ds = detail::prepared(d, c.seed);
    const auto r = resample(ds, spec, c.seed);
    const auto hdr = header_lines("resample", c);
    const auto dir = detail::prepare_out(c);

    {
        auto out = detail::open_out(dir / "normalized.csv");
        write_csv(ds, out, hdr);
        auto res = detail::open_out(dir / "resampled.csv");
        write_csv(r.data, res, hdr);
    }
    {
        auto out = detail::open_out(dir / "counts.csv");
        detail::write_comments(out, hdr);
        out << "class,name,before,target,after,action\n";
        for (const auto& p : r.plan)
            out << p.class_id << ',' << ds.class_names()[static_cast<std::size_t>(p.class_id)] << ',' << p.before << ','
                << p.target << ',' << p.after << ',' << p.action << '\n';
    }
    {
        auto out = detail::open_out(dir / "provenance.csv");
        detail::write_comments(out, hdr);
        out << "row,source_row,class,m_index,v_index,nominal_param,param,nml\n";
        const std::size_t first_syn = r.data.rows() - r.synthetic.size();
        for (std::size_t i = 0; i < r.data.rows(); ++i) {
            out << i << ',' << r.source_row[i] << ',' << r.data.label(i);
            if (i < first_syn) {
                out << ",,,,,\n";
                continue;
            }
            const auto& s = r.synthetic[i - first_syn];
            out << ',' << s.m_index << ',' << s.v_index << ',' << detail::num(s.nominal_param) << ',' << detail::num(s.param)
                << ',' << detail::intervals(s.nml) << '\n';
        }
    }
    if (!r.audits.empty()) {
        auto out = detail::open_out(dir / "audit.csv");
        detail::write_comments(out, hdr);
        bool first = true;
        for (const auto& a : r.audits) {
            std::ostringstream tmp;
            undersample::write_audit_csv(a.result.audit, tmp, &a.row_map);
            std::istringstream lines(tmp.str());
            std::string line;
            std::getline(lines, line);
            if (first) out << "class," << line << '\n';
            first = false;
            while (std::getline(lines, line)) out << a.class_id << ',' << line << '\n';
        }
    }
    return 0;
}

/// Cross-validates every (dataset, method) pair: report.jsonl and report.txt.
/// A failing run is recorded and the remaining runs continue; the exit code
/// is 1 if any run failed.
inline int cmd_benchmark(const RunConfig& c) {
    if (c.datasets.empty()) throw UsageError("benchmark: config needs 'dataset' or 'datasets'");
    if (c.methods.empty()) throw UsageError("benchmark: config needs 'method' or 'methods'");
    std::vector<ResampleSpec> specs;
    for (auto m : c.methods) specs.push_back(resample_spec(c, m));

    std::vector<evaluate::EvalReport> reports;
    std::vector<json> failures;
    for (const auto& d : c.datasets) {
        Dataset ds = load_dataset(d, c.seed);
        for (const auto& spec : specs) {
            try {
                reports.push_back(evaluate::run_cv(ds, spec, c.gmr, c.cv, c.seed, d.name));
            } catch (const UsageError&) {
                throw;
            } catch (const std::exception& e) {
                failures.push_back({{"record", "error"}, {"dataset", d.name}, {"method", method_name(spec.method)}, {"message", e.what()}});
                std::cerr << "error: " << d.name << " / " << method_name(spec.method) << ": " << e.what() << '\n';
            }
        }
    }
    const auto dir = detail::prepare_out(c);
    {
        auto out = detail::open_out(dir / "report.jsonl");
        out << header_record("benchmark", c).dump() << '\n';
        evaluate::write_report_jsonl(reports, out);
        for (const auto& f : failures) out << f.dump() << '\n';
    }
    {
        auto out = detail::open_out(dir / "report.txt");
        detail::write_comments(out, header_lines("benchmark", c));
        evaluate::write_report_table(reports, out);
        for (const auto& f : failures)
            out << "FAILED " << f["dataset"].get<std::string>() << " " << f["method"].get<std::string>() << ": "
                << f["message"].get<std::string>() << '\n';
    }
    return failures.empty() ? 0 : 1;
}

/// PCA nearest-pair margin between two classes after each method:
/// margin.csv. Classes default to the largest and smallest class with at
/// least 2 rows; n_pca defaults to min(4, D).
inline int cmd_margin(const RunConfig& c) {
    const auto& d = detail::single_dataset(c, "margin");
    std::vector<Method> methods = c.methods.empty() ? std::vector<Method>{Method::none} : c.methods;
    std::vector<ResampleSpec> specs;
    for (auto m : methods) specs.push_back(resample_spec(c, m));
    const Dataset ds = detail::prepared(d, c.seed);

    int a = -1, b = -1;
    if (c.margin_classes) {
        std::tie(a, b) = *c.margin_classes;
        if (a < 0 || b < 0 || a >= ds.num_classes() || b >= ds.num_classes() || a == b)
            throw UsageError("margin.classes: need two distinct class ids below " + std::to_string(ds.num_classes()));
    } else {
        const auto sizes = ds.class_sizes();
        for (int k = 0; k < ds.num_classes(); ++k) {
            const auto n = sizes[static_cast<std::size_t>(k)];
            if (n < 2) continue;
            if (a < 0 || n > sizes[static_cast<std::size_t>(a)]) a = k;
            if (b < 0 || n < sizes[static_cast<std::size_t>(b)]) b = k;
        }
        if (a < 0 || a == b) throw Error("margin: need two classes with at least 2 rows");
    }
    const int n_pca = c.n_pca.value_or(std::min(4, static_cast<int>(ds.dims())));

    std::ostringstream body;
    body << "method,class_a,class_b,n_pca,rows_a,rows_b,margin\n";
    for (const auto& spec : specs) {
        const auto r = resample(ds, spec, c.seed);
        const double mg = evaluate::margin_ablation(r.data, a, b, n_pca);
        body << method_name(spec.method) << ',' << a << ',' << b << ',' << n_pca << ',' << r.data.class_rows(a).size() << ','
             << r.data.class_rows(b).size() << ',' << detail::num(mg) << '\n';
    }
    const auto dir = detail::prepare_out(c);
    auto out = detail::open_out(dir / "margin.csv");
    detail::write_comments(out, header_lines("margin", c));
    out << body.str();
    return 0;
}

/// Plot-ready point cloud after resampling: every original, synthetic and
/// rejected row with its kind and provenance (points.csv).
inline int cmd_dump_points(const RunConfig& c) {
    const auto& d = detail::single_dataset(c, "dump-points");
    const Method m = detail::single_method(c, "dump-points");
    const auto spec = resample_spec(c, m);
    const Dataset ds = detail::prepared(d, c.seed);
    const auto r = resample(ds, spec, c.seed);
    const auto dir = detail::prepare_out(c);
    auto out = detail::open_out(dir / "points.csv");
    detail::write_comments(out, header_lines("dump-points", c));
    for (std::size_t j = 0; j < ds.dims(); ++j) out << 'f' << j << ',';
    out << "label,kind,source_row,m_index,v_index,param\n";
    auto coords = [&](auto row) {
        for (Eigen::Index j = 0; j < row.size(); ++j) out << detail::num(row(j)) << ',';
    };
    const std::size_t first_syn = r.data.rows() - r.synthetic.size();
    for (std::size_t i = 0; i < r.data.rows(); ++i) {
        coords(r.data.row(i));
        out << r.data.label(i);
        if (i < first_syn) {
            out << ",original," << r.source_row[i] << ",,,\n";
        } else {
            const auto& s = r.synthetic[i - first_syn];
            out << ",synthetic,-1," << s.m_index << ',' << s.v_index << ',' << detail::num(s.param) << '\n';
        }
    }
    for (auto row : r.rejected) {
        coords(ds.row(row));
        out << ds.label(row) << ",rejected," << row << ",,,\n";
    }
    return 0;
}

}  // namespace gicaps::cli
