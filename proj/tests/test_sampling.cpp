#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"

using namespace gdr;

namespace {

AffinityGraph single_edge(double p) {
    AffinityGraph P;
    P.n = 2;
    P.edges = {{0, 1, p}};
    P.refresh_totals();
    return P;
}

SamplingPlan plan(SamplingMode mode, bool accelerated = false) {
    SamplingPlan s;
    s.mode = mode;
    s.accelerated = accelerated;
    return s;
}

}

TEST(EdgeSchedule, TenthWeightFiresEveryTenthEpoch) {
    const auto sched = edge_schedule(single_edge(0.1), 500, plan(SamplingMode::scalar_sampling));
    const auto epochs = sched.application_epochs(0);
    ASSERT_EQ(epochs.size(), 50u);
    EXPECT_EQ(sched.application_count(0), 50u);
    for (std::size_t m = 0; m < epochs.size(); ++m) {
        EXPECT_EQ(epochs[m], 10 * m + 9);
    }
}

TEST(EdgeSchedule, UnitWeightFiresEveryEpoch) {
    for (auto mode : {SamplingMode::scalar_sampling, SamplingMode::per_edge}) {
        const auto sched = edge_schedule(single_edge(1.0), 37, plan(mode));
        EXPECT_EQ(sched.application_count(0), 37u);
    }
    const auto per_edge = edge_schedule(single_edge(0.01), 37, plan(SamplingMode::per_edge));
    EXPECT_EQ(per_edge.application_count(0), 37u);
}

TEST(EdgeSchedule, CountsFollowWeights) {
    const auto inst = oracle::random_instance(60, 4);
    const std::size_t epochs = 300;
    const auto sched = edge_schedule(inst.P, epochs, plan(SamplingMode::scalar_sampling));
    double expected = 0, total = 0;
    for (std::size_t e = 0; e < inst.P.edges.size(); ++e) {
        const double p = inst.P.edges[e].p;
        const auto count = sched.application_count(e);
        EXPECT_GE(count, static_cast<std::size_t>(std::floor(p * epochs)));
        EXPECT_LE(count, static_cast<std::size_t>(std::ceil(p * epochs)));
        // evenly spread: gaps differ by at most one epoch
        const auto at = sched.application_epochs(e);
        for (std::size_t m = 2; m < at.size(); ++m) {
            const long a = static_cast<long>(at[m] - at[m - 1]), b = static_cast<long>(at[m - 1] - at[m - 2]);
            EXPECT_LE(std::abs(a - b), 1);
        }
        expected += p * epochs;
        total += static_cast<double>(count);
    }
    EXPECT_LE(std::abs(total - expected), static_cast<double>(inst.P.edges.size()));
}

TEST(EdgeSchedule, RejectsZeroEpochs) {
    EXPECT_THROW(edge_schedule(single_edge(0.5), 0, plan(SamplingMode::per_edge)), std::invalid_argument);
}

TEST(NegativeSampling, TwoPointsAlwaysTheOther) {
    Rng rng(1);
    for (auto k : sample_negatives(0, 100, 2, rng)) {
        EXPECT_EQ(k, 1u);
    }
    for (auto k : sample_negatives(1, 100, 2, rng)) {
        EXPECT_EQ(k, 0u);
    }
}

TEST(NegativeSampling, UniformByChiSquare) {
    const std::size_t n = 50, draws = 100000, self = 17;
    Rng rng(2);
    std::vector<double> counts(n, 0.0);
    for (auto k : sample_negatives(self, draws, n, rng)) {
        counts[k] += 1;
    }
    EXPECT_EQ(counts[self], 0.0);
    const double expected = static_cast<double>(draws) / (n - 1);
    double chi2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k != self) {
            chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
        }
    }
    // 99.9% quantile of chi-square with 48 degrees of freedom
    EXPECT_LT(chi2, 84.03713371722348);
}

TEST(NegativeSampling, SeededAndNeverSelf) {
    Rng a(9), b(9);
    const auto x = sample_negatives(3, 1000, 10, a);
    EXPECT_EQ(x, sample_negatives(3, 1000, 10, b));
    for (auto k : x) {
        EXPECT_NE(k, 3u);
        EXPECT_LT(k, 10u);
    }
    EXPECT_THROW(sample_negatives(0, 1, 1, a), std::invalid_argument);
}

TEST(FullRepulsion, TwoPointsEqualsPair) {
    EmbeddingState Y(2, 2);
    Y.coords = {0.3, -0.2, 1.1, 0.4};
    GradientRegime r;
    const RepulsionContext ctx{1.0, 0.1};
    const auto full = full_repulsion(0, Y, ABParams::unit(), r, ctx);
    const auto pair = pair_repulsion(0, 1, Y, ABParams::unit(), r, ctx);
    EXPECT_EQ(full[0], pair[0]);
    EXPECT_EQ(full[1], pair[1]);
}

TEST(FullRepulsion, CentreOfRegularPolygonFeelsNothing) {
    const std::size_t m = 7;
    EmbeddingState Y(m + 1, 2);
    for (std::size_t s = 0; s < m; ++s) {
        Y.coords[2 * (s + 1)] = std::cos(2 * M_PI * s / m);
        Y.coords[2 * (s + 1) + 1] = std::sin(2 * M_PI * s / m);
    }
    for (bool normalized : {false, true}) {
        GradientRegime r;
        r.normalized = normalized;
        const auto f = full_repulsion(0, Y, ABParams::unit(), r, {normalization_Z(Y, ABParams::unit()), 0.1});
        EXPECT_NEAR(f.norm(), 0.0, 1e-14);
    }
}

TEST(FullRepulsion, MatchesDoubleLoop) {
    const auto Y = init_random(40, 2, 5, 1.0);
    GradientRegime r;
    r.eps = 0;
    const double p_bar = 0.2;
    for (std::size_t i : {0u, 13u, 39u}) {
        double fx = 0, fy = 0;
        for (std::size_t k = 0; k < 40; ++k) {
            if (k == i) {
                continue;
            }
            const double q = oracle::q_of(Y, i, k);
            const auto [ca, cr] = oracle::umap_reduced(0.0, q, p_bar);
            fx += cr * (Y.coords[2 * i] - Y.coords[2 * k]);
            fy += cr * (Y.coords[2 * i + 1] - Y.coords[2 * k + 1]);
        }
        const auto f = full_repulsion(i, Y, ABParams::unit(), r, {1.0, p_bar});
        EXPECT_NEAR(f[0], fx, 1e-10 * std::max(1.0, std::abs(fx)));
        EXPECT_NEAR(f[1], fy, 1e-10 * std::max(1.0, std::abs(fy)));
    }
}

TEST(EffectiveScalars, Readout) {
    const auto pe = effective_scalars(0.3, 0.1, plan(SamplingMode::per_edge));
    EXPECT_DOUBLE_EQ(pe.attraction, 0.3);
    EXPECT_DOUBLE_EQ(pe.repulsion, 0.9);
    const auto acc = effective_scalars(0.3, 0.1, plan(SamplingMode::per_edge, true));
    EXPECT_DOUBLE_EQ(acc.attraction, 0.3);
    EXPECT_DOUBLE_EQ(acc.repulsion, 0.9);
    const auto sc = effective_scalars(0.3, 0.1, plan(SamplingMode::scalar_sampling));
    EXPECT_EQ(sc.attraction, 1.0);
    EXPECT_EQ(sc.repulsion, 1.0);
}

TEST(EffectiveScalars, AcceleratedSquaresTheWeight) {
    const double force = -0.731;
    for (double p : {0.1, 0.37, 0.8}) {
        const auto s = plan(SamplingMode::per_edge, true);
        const auto sched = edge_schedule(single_edge(p), 1000, s);
        double applied = 0;
        for (std::size_t t = 0; t < 1000; ++t) {
            if (sched.active(0, t)) {
                applied += effective_scalars(p, 0.0, s).attraction * force;
            }
        }
        EXPECT_NEAR(applied / 1000, p * p * force, 0.02 * p * p * std::abs(force)) << "p " << p;
    }
}

TEST(EffectiveScalars, BothUmapFormulationsAgreeOnAverage) {
    // frozen embedding, so every application of an edge carries the same force
    const auto inst = oracle::random_instance(30, 8);
    const std::size_t epochs = 500;
    const auto scalar = plan(SamplingMode::scalar_sampling);
    const auto edge = plan(SamplingMode::per_edge);
    const auto s_sched = edge_schedule(inst.P, epochs, scalar);
    const auto e_sched = edge_schedule(inst.P, epochs, edge);
    for (std::size_t e = 0; e < inst.P.edges.size(); ++e) {
        const double p = inst.P.edges[e].p;
        if (p < 0.1) {
            continue;
        }
        const double f = -2.0 * oracle::q_of(inst.Y, inst.P.edges[e].i, inst.P.edges[e].j);
        double a = 0, b = 0;
        for (std::size_t t = 0; t < epochs; ++t) {
            a += s_sched.active(e, t) ? effective_scalars(p, 0.0, scalar).attraction * f : 0.0;
            b += e_sched.active(e, t) ? effective_scalars(p, 0.0, edge).attraction * f : 0.0;
        }
        EXPECT_NEAR(a / epochs, b / epochs, 0.05 * std::abs(b / epochs));
    }
}

TEST(SamplingPlan, Validation) {
    auto s = plan(SamplingMode::scalar_sampling, true);
    EXPECT_THROW(s.validate(), ConfigError);
    s = plan(SamplingMode::per_edge);
    s.neg_samples = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}
