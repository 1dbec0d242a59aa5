#include "gicaps/resample.hpp"
#include "gicaps/simulate.hpp"

#include <gtest/gtest.h>

using namespace gicaps;

namespace {
Dataset pain() { return generate_gmm_data(simulate::pain_like(), 1); }
}  // namespace

TEST(Methods, ParseAndName) {
    for (const auto& [m, name] : method_table()) {
        EXPECT_EQ(parse_method(name), m);
        EXPECT_EQ(method_name(m), name);
    }
    EXPECT_THROW(parse_method("bogus"), UsageError);
}

TEST(Resample, NoneIsIdentity) {
    const auto ds = pain();
    const auto r = resample(ds, ResampleSpec{}, 1);
    EXPECT_EQ(r.data.features(), ds.features());
    EXPECT_TRUE(r.synthetic.empty());
    EXPECT_TRUE(r.rejected.empty());
}

TEST(Resample, FullGicapsEqualisesClasses) {
    const auto ds = pain();
    ResampleSpec spec;
    spec.method = Method::gicaps;
    spec.n_target = 100;
    const auto r = resample(ds, spec, 1);
    const auto after = r.data.class_sizes();
    for (std::size_t c = 0; c < after.size(); ++c) {
        if (ds.class_sizes()[c] == 1)
            EXPECT_EQ(after[c], 1u);
        else
            EXPECT_EQ(after[c], 100u) << "class " << c;
    }
    EXPECT_EQ(r.dropped, 0u);
    for (const auto& p : r.plan) EXPECT_EQ(p.after, after[static_cast<std::size_t>(p.class_id)]);
    // Every surviving input row is accounted for exactly once.
    std::size_t originals = 0;
    for (auto s : r.source_row) originals += s >= 0;
    EXPECT_EQ(originals + r.rejected.size(), ds.rows());
}

TEST(Resample, SmoteTimesFour) {
    const auto ds = pain();
    ResampleSpec spec;
    spec.method = Method::smote;
    const auto r = resample(ds, spec, 1);
    const auto before = ds.class_sizes(), after = r.data.class_sizes();
    EXPECT_EQ(after[0], before[0]);
    for (std::size_t c = 1; c < before.size(); ++c) EXPECT_EQ(after[c], before[c] == 1 ? 1u : 4 * before[c]);
}

TEST(Resample, BaselineTargets) {
    const auto ds = generate_gmm_data(simulate::imbalanced3(1110, 2), 2);
    const auto sizes = ds.class_sizes();
    ResampleSpec spec;
    spec.method = Method::ros;
    for (auto s : resample(ds, spec, 1).data.class_sizes()) EXPECT_EQ(s, sizes[0]);
    spec.method = Method::rus;
    for (auto s : resample(ds, spec, 1).data.class_sizes()) EXPECT_EQ(s, sizes[2]);
    spec.method = Method::adasyn;
    spec.base.adasyn_major_cap = 300;
    const auto a = resample(ds, spec, 1).data.class_sizes();
    EXPECT_EQ(a[0], 300u);
    EXPECT_EQ(a[1], 300u);
    EXPECT_EQ(a[2], 300u);
    spec = {};
    spec.method = Method::gicaps_o;
    spec.over.h_target[2] = 5;
    const auto o = resample(ds, spec, 1).data.class_sizes();
    EXPECT_EQ(o[1], sizes[0]);
    EXPECT_EQ(o[2], sizes[2] + 5);
}

TEST(Resample, ProvenanceRefersToInputRows) {
    const auto ds = generate_gmm_data(simulate::imbalanced3(600, 3), 3);
    ResampleSpec spec;
    spec.method = Method::gicaps;
    const auto r = resample(ds, spec, 4);
    std::vector<char> rejected(ds.rows(), 0);
    for (auto x : r.rejected) rejected[x] = 1;
    for (const auto& s : r.synthetic) {
        EXPECT_EQ(ds.label(s.m_index), s.class_id);
        EXPECT_EQ(ds.label(s.v_index), s.class_id);
        EXPECT_FALSE(rejected[s.m_index]);
        EXPECT_FALSE(rejected[s.v_index]);
    }
    EXPECT_EQ(default_n_target(ds), static_cast<std::size_t>(std::llround(std::sqrt(double(ds.class_sizes()[0]) * ds.class_sizes()[1]))));
    const auto again = resample(ds, spec, 4);
    EXPECT_EQ(again.data.features(), r.data.features());
}
