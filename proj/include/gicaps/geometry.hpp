#pragma once

#include "gicaps/common.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gicaps::geometry {

/// Angle between two vectors in [0, pi]. Throws on a zero vector.
///
/// Equal to acos of the clamped normalised dot product, evaluated as
/// 2 atan2(|u^ - v^|, |u^ + v^|) which keeps full precision near 0 and pi
/// (acos resolves nothing below ~1e-8 rad).
inline double angle(ConstVecRef u, ConstVecRef v) {
    if (u.size() != v.size()) throw Error("angle: dimension mismatch");
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw Error("undefined angle: zero vector");
    const Vector uh = u / nu, vh = v / nv;
    return std::clamp(2.0 * std::atan2((uh - vh).norm(), (uh + vh).norm()), 0.0, 3.14159265358979323846);
}

// ---------------------------------------------------------------------------
// Orthant codes

/// Sign pattern of a difference vector read as a D-bit binary number,
/// feature 0 in the most significant bit. Zero components count as positive.
/// Stored in 64-bit words so any D is supported; value() is available for
/// D <= 64.
class OrthantCode {
public:
    OrthantCode() = default;
    explicit OrthantCode(std::size_t dim) : dim_(dim), words_((dim + 63) / 64, 0) {}

    std::size_t dim() const { return dim_; }

    bool bit(std::size_t feature) const {
        const std::size_t pos = dim_ - 1 - feature;
        return (words_[pos / 64] >> (pos % 64)) & 1ULL;
    }
    void set(std::size_t feature) {
        const std::size_t pos = dim_ - 1 - feature;
        words_[pos / 64] |= 1ULL << (pos % 64);
    }

    std::uint64_t value() const {
        if (dim_ > 64) throw Error("orthant code wider than 64 bits");
        return words_.empty() ? 0 : words_[0];
    }

    /// Decimal for D <= 64, otherwise hexadecimal with a 0x prefix.
    std::string to_string() const {
        if (dim_ <= 64) return std::to_string(value());
        static constexpr char hex[] = "0123456789abcdef";
        std::string s = "0x";
        bool leading = true;
        for (std::size_t w = words_.size(); w-- > 0;)
            for (int nib = 15; nib >= 0; --nib) {
                const auto d = (words_[w] >> (4 * nib)) & 0xF;
                if (leading && d == 0) continue;
                leading = false;
                s.push_back(hex[d]);
            }
        if (leading) s.push_back('0');
        return s;
    }

    friend bool operator==(const OrthantCode&, const OrthantCode&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::uint64_t> words_;
};

inline OrthantCode orthant_code(ConstVecRef ref, ConstVecRef x) {
    if (ref.size() != x.size()) throw Error("orthant_code: dimension mismatch");
    OrthantCode code(static_cast<std::size_t>(x.size()));
    for (Eigen::Index j = 0; j < x.size(); ++j)
        if (x(j) - ref(j) >= 0.0) code.set(static_cast<std::size_t>(j));
    return code;
}

// ---------------------------------------------------------------------------
// Segments, projections, crossings

/// Segment from a (= x_m) to b (= x_v).
struct SegmentFrame {
    Vector a;
    Vector b;
    Vector ab;
    double len = 0.0;

    static SegmentFrame make(ConstVecRef a, ConstVecRef b) {
        if (a.size() != b.size()) throw Error("segment: dimension mismatch");
        SegmentFrame f{a, b, b - a, 0.0};
        f.len = f.ab.norm();
        if (!(f.len > 0.0)) throw Error("segment has zero length");
        return f;
    }

    Vector point_at(double t) const { return a + t * ab; }
};

struct Projection {
    Vector p;      ///< projection of (t - a) onto ab, in a-origin coordinates
    double perp;   ///< distance from t to the line ab
    double param;  ///< p expressed as a fraction of ab
};

inline Projection project_on_segment(const SegmentFrame& f, ConstVecRef t) {
    const Vector at = t - f.a;
    const double param = f.ab.dot(at) / f.ab.squaredNorm();
    Vector p = param * f.ab;
    const double perp = (at - p).norm();
    return {std::move(p), perp, param};
}

struct CrossingResult {
    double o_param = 0.0;  ///< position of O along ab as a fraction of its length
    double c_dist = 0.0;   ///< distance from O to the line through t1, t2
    bool valid = false;    ///< O strictly between a and b
};

/// Estimated intersection O of the line t1-t2 with ab via the similar
/// triangles formed by the perpendicular feet of t1 and t2, and the crossing
/// distance from O to the line t1-t2.
inline CrossingResult crossing(const SegmentFrame& f, ConstVecRef t1, ConstVecRef t2) {
    const auto pr1 = project_on_segment(f, t1);
    const auto pr2 = project_on_segment(f, t2);
    const double d1 = pr1.perp, d2 = pr2.perp;

    CrossingResult r;
    Vector a_o;
    if (d1 + d2 == 0.0) {
        // Both interferers on the line: treat as touching at the mean projection.
        a_o = 0.5 * (pr1.p + pr2.p);
        r.c_dist = 0.0;
    } else {
        a_o = pr1.p + (pr2.p - pr1.p) * (d1 / (d1 + d2));
        const Vector o_t1 = a_o - (t1 - f.a);
        const Vector t12 = t2 - t1;
        const double n12 = t12.squaredNorm();
        // |O t1| sin(theta0) is the component of O t1 orthogonal to t1 t2.
        r.c_dist = n12 > 0.0 ? (o_t1 - t12 * (o_t1.dot(t12) / n12)).norm() : o_t1.norm();
    }
    r.o_param = a_o.dot(f.ab) / f.ab.squaredNorm();
    r.valid = a_o.norm() < f.len && (f.ab - a_o).norm() < f.len;
    return r;
}

// ---------------------------------------------------------------------------
// No man's land

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
    bool contains(double t) const { return t >= lo && t <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Forbidden parametric intervals along a segment plus the free space S used
/// to apportion synthetic points.
struct NoMansLand {
    std::vector<Interval> intervals;  ///< sorted, disjoint, within [0, 1]
    double free_length = 0.0;
    std::size_t crossings = 0;        ///< valid crossings below the threshold

    bool contains(double t) const {
        return std::any_of(intervals.begin(), intervals.end(), [t](const Interval& iv) { return iv.contains(t); });
    }

    /// Complement of the intervals within [0, 1].
    std::vector<Interval> free_intervals() const {
        std::vector<Interval> out;
        double cur = 0.0;
        for (const auto& iv : intervals) {
            if (iv.lo > cur) out.push_back({cur, iv.lo});
            cur = std::max(cur, iv.hi);
        }
        if (cur < 1.0) out.push_back({cur, 1.0});
        return out;
    }
};

/// Sorts and merges overlapping intervals.
inline std::vector<Interval> merge_intervals(std::vector<Interval> v) {
    std::sort(v.begin(), v.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo || (x.lo == y.lo && x.hi < y.hi); });
    std::vector<Interval> out;
    for (const auto& iv : v) {
        if (!out.empty() && iv.lo <= out.back().hi)
            out.back().hi = std::max(out.back().hi, iv.hi);
        else
            out.push_back(iv);
    }
    return out;
}

using InterfererPair = std::pair<Vector, Vector>;

/// Crossings with c_dist < tau_cross span the core interval [min O, max O];
/// it is widened by (1 - rho)/2 of the segment on each side and clamped to
/// [0, 1]. Free space is rho * (len - widened length), which reduces to
/// rho * (len - |O_max - O_min|) at rho = 1 and to rho * len with no crossings.
inline NoMansLand build_no_mans_land(const SegmentFrame& f, const std::vector<InterfererPair>& interferers,
                                     double tau_cross, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw UsageError("rho must be in (0, 1]");
    if (!(tau_cross >= 0.0)) throw UsageError("tau_cross must be non-negative");

    NoMansLand nml;
    double lo = 1.0, hi = 0.0;
    for (const auto& [t1, t2] : interferers) {
        const auto c = crossing(f, t1, t2);
        if (!c.valid || !(c.c_dist < tau_cross)) continue;
        lo = std::min(lo, c.o_param);
        hi = std::max(hi, c.o_param);
        ++nml.crossings;
    }
    if (nml.crossings == 0) {
        nml.free_length = rho * f.len;
        return nml;
    }
    const double pad = 0.5 * (1.0 - rho);
    const Interval widened{std::max(0.0, lo - pad), std::min(1.0, hi + pad)};
    nml.intervals.push_back(widened);
    nml.free_length = rho * f.len * (1.0 - widened.length());
    return nml;
}

}  // namespace gicaps::geometry
