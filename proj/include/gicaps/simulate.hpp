#pragma once

#include "gicaps/common.hpp"
#include "gicaps/dataset.hpp"

#include <cmath>
#include <string>
#include <vector>

/// Named blob layouts for the simulated experiments. Each preset is a list of
/// GaussianBlobSpec, so it can be dumped to and reloaded from a config.
namespace gicaps::simulate {

inline Eigen::MatrixXd iso(Eigen::Index d, double sd) { return Eigen::MatrixXd::Identity(d, d) * (sd * sd); }

/// Single class, 3-D: three anisotropic blobs in the positive octant.
inline std::vector<GaussianBlobSpec> blob3d(std::size_t n = 2000) {
    Eigen::MatrixXd c1(3, 3), c2(3, 3), c3(3, 3);
    c1 << 0.040, 0.010, 0.000, 0.010, 0.020, 0.000, 0.000, 0.000, 0.010;
    c2 << 0.010, 0.000, 0.000, 0.000, 0.030, -0.008, 0.000, -0.008, 0.020;
    c3 << 0.015, 0.005, 0.005, 0.005, 0.015, 0.005, 0.005, 0.005, 0.015;
    const std::size_t a = n / 2, b = n / 3, c = n - a - b;
    return {{Vector{{1.0, 1.0, 1.0}}, c1, a, 0}, {Vector{{1.8, 1.4, 0.8}}, c2, b, 0}, {Vector{{1.2, 2.0, 1.6}}, c3, c, 0}};
}

/// Two classes in D dimensions: a dense majority blob at the origin (class 0)
/// surrounded by small minority clumps (class 1) whose centres lie on a
/// sphere just outside it. Same-class neighbour segments between clumps cut
/// through the majority.
inline std::vector<GaussianBlobSpec> two_class(int dims, std::uint64_t seed, std::size_t n_major = 600, int clumps = 6,
                                               std::size_t clump_size = 4, double radius = 1.6) {
    if (dims < 2) throw UsageError("two_class: dims must be at least 2");
    const auto d = static_cast<Eigen::Index>(dims);
    std::vector<GaussianBlobSpec> out{{Vector::Zero(d), iso(d, 0.5), n_major, 0}};
    auto rng = make_rng(seed, "simulate-two-class");
    for (int k = 0; k < clumps; ++k) {
        Vector u(d);
        for (Eigen::Index j = 0; j < d; ++j) u(j) = standard_normal(rng);
        out.push_back({radius * u.normalized(), iso(d, 0.08), clump_size, 1});
    }
    return out;
}

/// Three classes along a line with sizes in ratio 100:10:1 (total n), D dims.
inline std::vector<GaussianBlobSpec> imbalanced3(std::size_t n = 2000, int dims = 3) {
    const auto d = static_cast<Eigen::Index>(dims);
    const std::size_t c2 = std::max<std::size_t>(2, n / 111), c1 = 10 * c2, c0 = n - c1 - c2;
    Vector m0 = Vector::Zero(d), m1 = Vector::Zero(d), m2 = Vector::Zero(d);
    m1(0) = 1.5;
    m2(0) = 3.0;
    if (d > 1) m2(1) = 0.5;
    return {{m0, iso(d, 0.5), c0, 0}, {m1, iso(d, 0.45), c1, 1}, {m2, iso(d, 0.4), c2, 2}};
}

/// Sixteen classes whose sizes follow the skew of a 16-level intensity
/// distribution scaled down by `scale` (one singleton class is kept as is).
inline std::vector<GaussianBlobSpec> pain_like(int dims = 4, double scale = 20.0) {
    static constexpr double full[16] = {39835, 2908, 2349, 1409, 802, 242, 270, 53, 79, 32, 67, 76, 48, 22, 1, 5};
    const auto d = static_cast<Eigen::Index>(dims);
    std::vector<GaussianBlobSpec> out;
    for (int c = 0; c < 16; ++c) {
        std::size_t n = full[c] == 1 ? 1 : std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(full[c] / scale)));
        Vector m = Vector::Zero(d);
        m(0) = 0.6 * c;
        if (d > 1) m(1) = 0.3 * std::sin(0.7 * c);
        out.push_back({m, iso(d, 0.35), n, c});
    }
    return out;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> n{"blob3d", "two_class", "imbalanced3", "pain_like"};
    return n;
}

/// Preset by name; `dims` applies where the layout is dimension-free.
inline std::vector<GaussianBlobSpec> preset(const std::string& name, std::uint64_t seed, int dims) {
    if (name == "blob3d") return blob3d();
    if (name == "two_class") return two_class(dims, seed);
    if (name == "imbalanced3") return imbalanced3(2000, dims);
    if (name == "pain_like") return pain_like(dims);
    throw UsageError("unknown preset '" + name + "'");
}

}  // namespace gicaps::simulate
