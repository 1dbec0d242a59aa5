#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace gicaps {

/// Row-major so that `features.row(i)` is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;

/// Runtime failure inside a module (maps to CLI exit code 1).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or invalid arguments (maps to CLI exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Warnings
//
// Non-fatal diagnostics go through a process-wide sink. The default prints to
// stderr; tests install a capturing sink with ScopedWarningSink.

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
}  // namespace detail

inline void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

inline WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard<std::mutex> lock(detail::warning_mutex());
    return std::exchange(detail::warning_sink(), std::move(sink));
}

class ScopedWarningSink {
public:
    explicit ScopedWarningSink(WarningSink sink) : previous_(set_warning_sink(std::move(sink))) {}
    ~ScopedWarningSink() { set_warning_sink(std::move(previous_)); }
    ScopedWarningSink(const ScopedWarningSink&) = delete;
    ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
    WarningSink previous_;
};

// ---------------------------------------------------------------------------
// Seed derivation
//
// Every random stream is derived from the run seed plus a purpose string and
// optional integer tags, so parallel and serial execution draw identical
// numbers: derive_seed(seed, "oversample", {class, m_index}).

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                 std::initializer_list<std::uint64_t> tags = {}) {
    // FNV-1a over the purpose string
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(seed ^ splitmix64(h));
    for (auto t : tags) s = splitmix64(s ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return s;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view purpose, std::initializer_list<std::uint64_t> tags = {}) {
    return Rng(derive_seed(seed, purpose, tags));
}

/// Uniform double in [0, 1) with 53 random bits; unlike
/// std::uniform_real_distribution its output is fixed by the standard engine.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in the open interval (0, 1).
inline double uniform_open01(Rng& rng) {
    double u;
    do {
        u = uniform01(rng);
    } while (u == 0.0);
    return u;
}

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

/// Standard normal via Box-Muller. Deterministic across standard libraries.
inline double standard_normal(Rng& rng) {
    const double u1 = uniform_open01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Fisher-Yates with uniform_index, so shuffles are reproducible everywhere.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(first[i - 1], first[j]);
    }
}

}  // namespace gicaps
