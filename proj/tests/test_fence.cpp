#include "fence/fence.hpp"
#include "fence/simlab.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace fence;
using fixtures::expect_error;

namespace {

struct Table {
    std::map<std::string, FitResult> fits;
    std::map<std::string, double> sigmas;
};

Table scripted(const ModelSpace& space, const std::vector<double>& q, const std::vector<double>& s) {
    Table t;
    for (std::size_t i = 0; i < space.size(); ++i) {
        FitResult f;
        f.model_id = space[i].id;
        f.qhat = q[i];
        t.fits[space[i].id] = f;
        t.sigmas[space[i].id] = s[i];
    }
    return t;
}

/// Random Q-hat table with Q_f the smallest; integer rounding creates ties.
Table random_table(const ModelSpace& space, std::mt19937_64& eng) {
    std::uniform_int_distribution<int> q(1, 12);
    std::uniform_real_distribution<double> s(0.2, 3.0);
    std::vector<double> qv(space.size()), sv(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        qv[i] = q(eng);
        sv[i] = s(eng);
    }
    qv[space.full_index()] = 0.0;
    sv[space.full_index()] = 0.0;
    return scripted(space, qv, sv);
}

/// Fence membership over the whole space, then minimum dimension, Q-hat and id.
std::string brute_force(const ModelSpace& space, const Table& t, double c) {
    const double qref = t.fits.at(space.full_model().id).qhat;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& m = space[i];
        if (!in_fence(t.fits.at(m.id).qhat, qref, t.sigmas.at(m.id), c)) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = space[*best];
        const auto key = std::make_tuple(m.dimension, t.fits.at(m.id).qhat, m.id);
        const auto bkey = std::make_tuple(b.dimension, t.fits.at(b.id).qhat, b.id);
        if (key < bkey) best = i;
    }
    return space[*best].id;
}

Table table_of(const ModelSpace& space, const SelectionTable& st) {
    std::vector<double> q(st.qhat.begin(), st.qhat.end()), s(st.sigma.begin(), st.sigma.end());
    return scripted(space, q, s);
}

}  // namespace

TEST(InFence, Examples) {
    EXPECT_TRUE(in_fence(4.0, 4.0, 0.0, 0.0));
    EXPECT_TRUE(in_fence(4.0, 4.0, 3.0, 7.0));
    EXPECT_TRUE(in_fence(5.0, 4.0, 1.0, 2.0));
    EXPECT_FALSE(in_fence(7.0, 4.0, 1.0, 2.0));
}

TEST(FenceSelect, HandTrace) {
    const auto d = fixtures::names_only(3);
    const auto space = fixtures::space_of(d, {{"x1"}, {"x1", "x2"}, {"x1", "x2", "x3"}});
    const auto t = scripted(space, {10, 5, 4}, {1, 1, 1});
    FenceConfig cfg;
    cfg.c = 2.0;
    const auto out = fence_select(space, t.fits, t.sigmas, cfg);
    ASSERT_TRUE(out.selected);
    EXPECT_EQ(out.selected->id, "x1+x2");
    EXPECT_EQ(out.tier_examined, 2);
    EXPECT_FALSE(out.in_fence.at("x1"));
    EXPECT_TRUE(out.in_fence.at("x1+x2"));
    EXPECT_EQ(out.reference.id, "x1+x2+x3");
}

TEST(FenceSelect, ConfigErrors) {
    const auto d = fixtures::names_only(2);
    const auto space = fixtures::space_of(d, {{"x1"}, {"x1", "x2"}});
    auto t = scripted(space, {3, 1}, {1, 0});
    FenceConfig cfg;
    cfg.c = -1.0;
    expect_error([&] { fence_select(space, t.fits, t.sigmas, cfg); }, ErrorCode::InvalidConfig);
    cfg.c = 1.0;
    t.fits.erase("x1");
    expect_error([&] { fence_select(space, t.fits, t.sigmas, cfg); }, ErrorCode::MissingFit);
}

TEST(FenceSelect, ZeroWidthSelectsFullModel) {
    for (int model = 1; model <= 5; ++model) {
        const auto s = fay_herriot_table_model(model);
        const auto space = s.space();
        const auto d = generate_fay_herriot(s, 0, RngStream{1, 0});
        const auto t = evaluate_space(space, d, MeasureKind{MeasureTag::ml_fay_herriot, {}, {}},
                                      SigmaKind::exact_f_numeric);
        EXPECT_EQ(outcome_from_table(space, t, 0.0).selected->id, space.full_model().id);
    }
}

TEST(FenceSelect, WidthAtUpperBoundSelectsMinimalModel) {
    for (int model = 1; model <= 5; ++model) {
        const auto s = fay_herriot_table_model(model);
        const auto space = s.space();
        const auto d = generate_fay_herriot(s, 3, RngStream{1, 0});
        const auto t = evaluate_space(space, d, MeasureKind{MeasureTag::ml_fay_herriot, {}, {}},
                                      SigmaKind::exact_f_numeric);
        const auto mi = space.minimal_indices().front();
        const double B = (t.qhat[mi] - t.reference_fit.qhat) / t.sigma[mi];
        EXPECT_EQ(outcome_from_table(space, t, B).selected->id, "x1");
        EXPECT_EQ(outcome_from_table(space, t, B + 1).selected->id, "x1");
    }
}

TEST(FenceSelect, ReferenceAlwaysInside) {
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const double q = u(eng) - 50.0;
        EXPECT_TRUE(in_fence(q, q, u(eng), u(eng)));
    }
}

TEST(FenceSelect, PermutationInvariant) {
    const auto d = fixtures::names_only(5);
    const auto space = enumerate_all_subsets(d, {"x1"});
    std::mt19937_64 eng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = random_table(space, eng);
        auto models = space.models();
        std::shuffle(models.begin(), models.end(), eng);
        const ModelSpace shuffled(models);
        FenceConfig cfg;
        cfg.c = 1.5;
        EXPECT_EQ(fence_select(space, t.fits, t.sigmas, cfg).selected->id,
                  fence_select(shuffled, t.fits, t.sigmas, cfg).selected->id);
    }
}

TEST(FenceSelect, MatchesBruteForceOnRandomTables) {
    const auto space = enumerate_all_subsets(fixtures::names_only(5), {"x1"});
    std::mt19937_64 eng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const auto t = random_table(space, eng);
        for (double c : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            FenceConfig cfg;
            cfg.c = c;
            const auto out = fence_select(space, t.fits, t.sigmas, cfg);
            EXPECT_EQ(out.selected->id, brute_force(space, t, c));
            // nothing of smaller dimension is inside
            for (const auto& m : space.models()) {
                if (m.dimension < out.selected->dimension) {
                    EXPECT_FALSE(out.in_fence.at(m.id));
                }
            }
        }
    }
}

TEST(FenceSelect, MatchesBruteForceOnSimulatedSpaces) {
    for (int model = 1; model <= 5; ++model) {
        const auto s = fay_herriot_table_model(model);
        const auto space = s.space();
        for (int r = 0; r < 20; ++r) {
            const auto d = generate_fay_herriot(s, r, RngStream{77, 0});
            const auto st = evaluate_space(space, d, MeasureKind{MeasureTag::ml_fay_herriot, {}, {}},
                                           SigmaKind::exact_f_numeric);
            const auto t = table_of(space, st);
            for (double c : {0.5, 1.0, 2.0, 3.0}) {
                FenceConfig cfg;
                cfg.c = c;
                EXPECT_EQ(fence_select(space, t.fits, t.sigmas, cfg).selected->id, brute_force(space, t, c));
            }
        }
    }
}

TEST(FenceSelect, DimensionNonincreasingInWidth) {
    const auto space = enumerate_all_subsets(fixtures::names_only(5), {"x1"});
    std::mt19937_64 eng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const auto t = random_table(space, eng);
        int prev = std::numeric_limits<int>::max();
        for (int k = 0; k <= 40; ++k) {
            FenceConfig cfg;
            cfg.c = 0.25 * k;
            const int dim = fence_select(space, t.fits, t.sigmas, cfg).selected->dimension;
            EXPECT_LE(dim, prev);
            prev = dim;
        }
    }
}

TEST(FenceSelect, EmpiricalMinimizerReference) {
    const auto d = fixtures::names_only(3);
    const auto space = fixtures::space_of(d, {{"x1"}, {"x1", "x2"}, {"x1", "x3"}});
    const auto t = scripted(space, {6, 3, 4}, {1, 0, 1});
    FenceConfig cfg;
    cfg.c = 1.0;
    cfg.reference_policy = ReferencePolicy::empirical_minimizer;
    const auto out = fence_select(space, t.fits, t.sigmas, cfg);
    EXPECT_EQ(out.reference.id, "x1+x2");
    EXPECT_EQ(out.selected->id, "x1+x2");
}

namespace {

struct Script {
    std::map<std::string, double> q, s;
    FitFunction fit() const {
        return [this](const CandidateModel& m) {
            FitResult f;
            f.model_id = m.id;
            f.qhat = q.at(m.id);
            return f;
        };
    }
    SigmaFunction sigma() const {
        return [this](const CandidateModel& m, const CandidateModel&, const FitResult&, const FitResult&) {
            return SigmaEstimate{s.at(m.id), false};
        };
    }
};

}  // namespace

TEST(FbFence, HandTrace) {
    const auto space = enumerate_all_subsets(fixtures::names_only(3), {"x1"});
    // threshold 5 + 2 sigma: x1 out, x1+x3 out (8 > 7), full in, then x1+x2 in (12 <= 13)
    Script sc;
    sc.q = {{"x1", 20}, {"x1+x2", 12}, {"x1+x3", 8}, {"x1+x2+x3", 5}};
    sc.s = {{"x1", 1}, {"x1+x2", 4}, {"x1+x3", 1}, {"x1+x2+x3", 0}};
    FbTrace trace;
    const auto out = fb_fence(space, sc.fit(), sc.sigma(), 2.0, &trace);
    EXPECT_EQ(trace.forward, (std::vector<std::string>{"x1", "x1+x3", "x1+x2+x3"}));
    EXPECT_EQ(trace.backward, (std::vector<std::string>{"x1+x2"}));
    EXPECT_EQ(out.selected->id, "x1+x2");
}

TEST(FbFence, ImmediateFixedPoint) {
    const auto space = enumerate_all_subsets(fixtures::names_only(3), {"x1"});
    Script sc;
    sc.q = {{"x1", 6}, {"x1+x2", 5.5}, {"x1+x3", 5.8}, {"x1+x2+x3", 5}};
    sc.s = {{"x1", 1}, {"x1+x2", 1}, {"x1+x3", 1}, {"x1+x2+x3", 0}};
    FbTrace trace;
    const auto out = fb_fence(space, sc.fit(), sc.sigma(), 2.0, &trace);
    EXPECT_EQ(trace.forward, (std::vector<std::string>{"x1"}));
    EXPECT_TRUE(trace.backward.empty());
    EXPECT_EQ(out.selected->id, "x1");
}

TEST(FbFence, AgreesWithFenceOnSimulatedData) {
    const auto s = fay_herriot_table_model(2);
    const auto space = s.space();
    const MeasureKind measure{MeasureTag::ml_fay_herriot, {}, {}};
    int agree = 0;
    for (int r = 0; r < 100; ++r) {
        const auto d = generate_fay_herriot(s, r, RngStream{2024, 0});
        FenceConfig cfg;
        cfg.c = 1.0;
        cfg.sigma_kind = SigmaKind::exact_f_numeric;
        const auto a = fence_select(space, d, measure, cfg);
        const auto b = fb_fence(space, d, measure, SigmaKind::exact_f_numeric, 1.0);
        agree += a.selected->id == b.selected->id;
    }
    EXPECT_GE(agree, 90);
}
