#include "gicaps/apportion.hpp"
#include "gicaps/common.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace gicaps;

TEST(Seeds, DerivationIsStableAndPurposeSensitive) {
    EXPECT_EQ(derive_seed(42, "a"), derive_seed(42, "a"));
    EXPECT_NE(derive_seed(42, "a"), derive_seed(42, "b"));
    EXPECT_NE(derive_seed(42, "a"), derive_seed(43, "a"));
    EXPECT_NE(derive_seed(42, "a", {1}), derive_seed(42, "a", {2}));
    EXPECT_NE(derive_seed(42, "a", {1, 2}), derive_seed(42, "a", {2, 1}));
}

TEST(Random, UniformRanges) {
    auto rng = make_rng(7, "t");
    for (int i = 0; i < 10000; ++i) {
        const double u = uniform01(rng);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double v = uniform_open01(rng);
        ASSERT_GT(v, 0.0);
        ASSERT_LT(v, 1.0);
        ASSERT_LT(uniform_index(rng, 7), 7u);
    }
    EXPECT_THROW(uniform_index(rng, 0), Error);
}

TEST(Random, NormalMoments) {
    auto rng = make_rng(11, "normal");
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = standard_normal(rng);
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Random, ShuffleIsPermutationAndDeterministic) {
    std::vector<int> a(50), b;
    std::iota(a.begin(), a.end(), 0);
    b = a;
    auto r1 = make_rng(3, "s"), r2 = make_rng(3, "s");
    shuffle(a.begin(), a.end(), r1);
    shuffle(b.begin(), b.end(), r2);
    EXPECT_EQ(a, b);
    std::set<int> seen(a.begin(), a.end());
    EXPECT_EQ(seen.size(), 50u);
}

TEST(Warnings, ScopedSinkCaptures) {
    std::vector<std::string> got;
    {
        ScopedWarningSink sink([&](const std::string& m) { got.push_back(m); });
        warn("hello");
    }
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0], "hello");
}

TEST(Apportion, LargestRemainder) {
    EXPECT_EQ(apportion({3, 1}, 10), (std::vector<std::size_t>{8, 2}));  // 7.5 / 2.5, tie to lower index
    EXPECT_EQ(apportion({2, 2}, 10), (std::vector<std::size_t>{5, 5}));
    EXPECT_EQ(apportion({1}, 7), (std::vector<std::size_t>{7}));
    EXPECT_EQ(apportion({0.2, 0.4}, 30), (std::vector<std::size_t>{10, 20}));
    EXPECT_EQ(apportion({1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
}

TEST(Apportion, CapsAndMinimumOne) {
    const auto s = apportion({10, 1, 1}, 10, std::vector<std::size_t>{3, 100, 100});
    EXPECT_EQ(s[0], 3u);
    EXPECT_EQ(s[0] + s[1] + s[2], 10u);
    const auto t = apportion({100, 0.001}, 10, std::nullopt, true);
    EXPECT_EQ(t, (std::vector<std::size_t>{9, 1}));
    const auto z = apportion({0, 0}, 5);
    EXPECT_EQ(z[0] + z[1], 5u);
    EXPECT_THROW(apportion({-1.0}, 1), Error);
}
