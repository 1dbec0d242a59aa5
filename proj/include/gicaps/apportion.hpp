#pragma once

#include "gicaps/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace gicaps {

/// Splits `total` into integer shares proportional to `weights` by the
/// largest-remainder method. Remainder ties go to the lower index.
///
/// With `caps`, no share exceeds its cap and the overflow is re-apportioned
/// among entries with room (the total shrinks to sum(caps) if needed). With
/// `at_least_one`, every entry with a positive cap receives at least one unit,
/// taken from the largest shares. If every eligible weight is zero the split
/// falls back to equal weights.
inline std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total,
                                          const std::optional<std::vector<std::size_t>>& caps = std::nullopt,
                                          bool at_least_one = false) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> share(n, 0);
    if (n == 0) return share;
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error("apportion: weights must be finite and non-negative");
    if (caps && caps->size() != n) throw Error("apportion: caps size mismatch");
    auto room = [&](std::size_t i) {
        return caps ? ((*caps)[i] > share[i] ? (*caps)[i] - share[i] : 0) : std::numeric_limits<std::size_t>::max();
    };
    if (caps) total = std::min(total, std::accumulate(caps->begin(), caps->end(), std::size_t{0}));

    std::size_t assigned = 0;
    while (assigned < total) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < n; ++i)
            if (room(i) > 0) open.push_back(i);
        if (open.empty()) break;
        double wsum = 0.0;
        for (auto i : open) wsum += weights[i];
        const bool equal = !(wsum > 0.0);
        if (equal) wsum = static_cast<double>(open.size());

        const std::size_t left = total - assigned;
        std::vector<double> rem(n, -1.0);
        std::size_t given = 0;
        for (auto i : open) {
            const double ideal = static_cast<double>(left) * (equal ? 1.0 : weights[i]) / wsum;
            const auto base = std::min(static_cast<std::size_t>(std::floor(ideal)), room(i));
            share[i] += base;
            given += base;
            rem[i] = room(i) > 0 ? ideal - std::floor(ideal) : -1.0;
        }
        std::size_t extra = left - std::min(left, given);
        std::vector<std::size_t> order;
        for (auto i : open)
            if (rem[i] >= 0.0) order.push_back(i);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (auto i : order) {
            if (extra == 0) break;
            if (room(i) == 0) continue;
            ++share[i];
            --extra;
            ++given;
        }
        assigned += given;
        if (given == 0) break;
    }

    if (at_least_one) {
        for (std::size_t i = 0; i < n; ++i) {
            if (share[i] > 0 || (caps && (*caps)[i] == 0)) continue;
            std::size_t donor = n;
            for (std::size_t j = 0; j < n; ++j)
                if (share[j] > 1 && (donor == n || share[j] > share[donor])) donor = j;
            if (donor == n) break;
            --share[donor];
            ++share[i];
        }
    }
    return share;
}

}  // namespace gicaps
