#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "oracles.hpp"

using namespace gdr;

namespace {

double stddev(const EmbeddingState& Y, std::size_t d) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < Y.n; ++i) {
        mean += Y.coords[i * Y.dim + d];
    }
    mean /= static_cast<double>(Y.n);
    for (std::size_t i = 0; i < Y.n; ++i) {
        const double x = Y.coords[i * Y.dim + d] - mean;
        var += x * x;
    }
    return std::sqrt(var / static_cast<double>(Y.n));
}

/// Largest principal angle between the column spans of A and B.
double subspace_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const Eigen::MatrixXd qa = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() *
                               Eigen::MatrixXd::Identity(A.rows(), A.cols());
    const Eigen::MatrixXd qb = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() *
                               Eigen::MatrixXd::Identity(B.rows(), B.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
    return std::acos(std::min(1.0, svd.singularValues().minCoeff()));
}

Eigen::MatrixXd as_matrix(const EmbeddingState& Y) {
    Eigen::MatrixXd M(Y.n, Y.dim);
    for (std::size_t i = 0; i < Y.n; ++i) {
        for (std::size_t d = 0; d < Y.dim; ++d) {
            M(i, d) = Y.coords[i * Y.dim + d];
        }
    }
    return M;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

RunConfig small(Preset p, std::size_t epochs) {
    auto c = RunConfig::make(p);
    c.epochs = epochs;
    c.seed = 3;
    return c;
}

}

TEST(InitRandom, Statistics) {
    const auto a = init_random(5000, 2, 7);
    const auto b = init_random(5000, 2, 7);
    EXPECT_EQ(a.coords, b.coords);
    double sum2 = 0;
    for (double x : a.coords) {
        sum2 += x * x;
    }
    EXPECT_NEAR(std::sqrt(sum2 / 10000.0), 1e-2, 5e-4);
    EXPECT_TRUE(std::all_of(a.velocity.begin(), a.velocity.end(), [](double v) { return v == 0.0; }));
    EXPECT_TRUE(std::all_of(a.gains.begin(), a.gains.end(), [](double g) { return g == 1.0; }));
    EXPECT_NE(init_random(5000, 2, 8).coords, a.coords);
    EXPECT_THROW(init_random(1, 2, 0), std::invalid_argument);
}

TEST(InitSpectral, DisjointEdgesCollapsePerComponent) {
    AffinityGraph P;
    P.n = 4;
    P.edges = {{0, 1, 1.0}, {2, 3, 1.0}};
    P.refresh_totals();
    const auto s = init_spectral(P, 2);
    EXPECT_EQ(s.components, 2u);
    EXPECT_FALSE(s.fallback);
    EXPECT_EQ(s.state.point(0)[0], s.state.point(1)[0]);
    EXPECT_EQ(s.state.point(0)[1], s.state.point(1)[1]);
    EXPECT_EQ(s.state.point(2)[0], s.state.point(3)[0]);
    EXPECT_NE(s.state.point(0)[0], s.state.point(2)[0]);
}

TEST(InitSpectral, CycleGraphMatchesFourierModes) {
    const std::size_t n = 8;
    AffinityGraph P;
    P.n = n;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        P.edges.push_back({std::min(i, j), std::max(i, j), 1.0});
    }
    std::sort(P.edges.begin(), P.edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });
    P.refresh_totals();
    const auto s = init_spectral(P, 2);
    Eigen::MatrixXd modes(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        modes(i, 0) = std::cos(2 * M_PI * i / n);
        modes(i, 1) = std::sin(2 * M_PI * i / n);
    }
    EXPECT_LT(subspace_angle(as_matrix(s.state), modes), 1e-6);
}

TEST(InitSpectral, StddevIsEnforced) {
    const auto m = make_blobs(600, 3, 5, 5.0, 2);
    const auto P = build_affinities(knn_exact(m, 15), KernelMode::umap_exponential, true, Symmetrization::fuzzy_union);
    const auto s = init_spectral(P, 2);
    for (std::size_t d = 0; d < 2; ++d) {
        EXPECT_NEAR(stddev(s.state, d), 1e-2, 1e-9);
    }
}

TEST(InitSpectral, LanczosMatchesDenseSubspace) {
    // one connected component above the dense-solver size
    const auto roll = make_swiss_roll(1200, 0.0, 4);
    const auto P = build_affinities(knn_exact(roll.data, 15), KernelMode::umap_exponential, true,
                                    Symmetrization::fuzzy_union);
    const auto s = init_spectral(P, 2);
    ASSERT_EQ(s.components, 1u);
    const auto A = internal::adjacency(P);
    std::vector<std::size_t> members(P.n);
    std::iota(members.begin(), members.end(), 0);
    const auto dense = internal::component_dense(A, members, members, 2);
    // the leading eigenvalues of a roll graph are nearly degenerate, so a
    // fixed Krylov budget resolves the subspace only to about 1e-3 rad
    EXPECT_LT(subspace_angle(as_matrix(s.state), dense), 1e-2);
}

TEST(StepBatched, ZeroGradientCoastsOnMomentum) {
    EmbeddingState Y(2, 1);
    Y.coords = {1.0, 2.0};
    Y.velocity = {0.5, -1.0};
    const std::vector<double> g{0.0, 0.0};
    step_batched(Y, g, 1.0, 0.8);
    EXPECT_DOUBLE_EQ(Y.coords[0], 1.4);
    EXPECT_DOUBLE_EQ(Y.coords[1], 1.2);
}

TEST(StepBatched, ConstantGradientHandTrace) {
    EmbeddingState Y(1, 1);
    const std::vector<double> g{1.0};
    const double expected_y[] = {-1.2, -3.2, -5.8};
    const double expected_gain[] = {1.2, 1.4, 1.6};
    for (int t = 0; t < 3; ++t) {
        step_batched(Y, g, 1.0, 0.5);
        EXPECT_NEAR(Y.coords[0], expected_y[t], 1e-14);
        EXPECT_NEAR(Y.gains[0], expected_gain[t], 1e-14);
    }
    EmbeddingState plain(1, 1);
    for (int t = 0; t < 3; ++t) {
        step_batched(plain, g, 0.1, 0.0, false);
    }
    EXPECT_NEAR(plain.coords[0], -0.3, 1e-15);
    EXPECT_EQ(plain.gains[0], 1.0);
}

TEST(StepBatched, SignFlipsDecayGainsToFloor) {
    EmbeddingState Y(1, 1);
    double prev = 10;
    for (int t = 0; t < 100; ++t) {
        const std::vector<double> g{t % 2 ? -1.0 : 1.0};
        step_batched(Y, g, 1.0, 0.0);
        if (t > 0) {
            EXPECT_LE(Y.gains[0], prev);
        }
        prev = Y.gains[0];
    }
    EXPECT_EQ(Y.gains[0], gain_floor);
}

TEST(StepImmediate, MovesByLrTimesForce) {
    std::vector<double> y{0.0, 1.0};
    ForceVector f;
    f.dim = 2;
    f.c = {2.0, 0.0, 0.0};
    step_immediate(y, f, lr_at(1.0, LrSchedule::linear_decay, 0, 100));
    EXPECT_EQ(y, (std::vector<double>{2.0, 1.0}));
}

TEST(LrSchedule, LinearDecayReadoutAndSum) {
    const std::size_t E = 500;
    EXPECT_NEAR(lr_at(2.0, LrSchedule::linear_decay, E - 1, E), 2.0 / E, 1e-15);
    double sum = 0;
    for (std::size_t t = 0; t < E; ++t) {
        sum += lr_at(2.0, LrSchedule::linear_decay, t, E);
    }
    EXPECT_NEAR(sum, 2.0 * (E + 1) / 2.0, 1e-9);
    EXPECT_EQ(lr_at(2.0, LrSchedule::constant, E - 1, E), 2.0);
}

TEST(Momentum, TwoPhaseSchedule) {
    auto c = RunConfig::make(Preset::tsne);
    EXPECT_EQ(momentum_at(c, 0), 0.5);
    EXPECT_EQ(momentum_at(c, 249), 0.5);
    EXPECT_EQ(momentum_at(c, 250), 0.9);
    c.momentum = 0.0;
    EXPECT_EQ(momentum_at(c, 300), 0.0);
}

TEST(CheckFinite, NamesEpochAndPoint) {
    EmbeddingState Y(3, 2);
    Y.coords[5] = std::nan("");
    try {
        check_finite(Y, 17);
        FAIL() << "expected an abort";
    } catch (const NumericAbort& e) {
        EXPECT_EQ(e.epoch(), 17u);
        EXPECT_EQ(e.point(), 2u);
    }
    Y.coords[5] = 2e6;
    EXPECT_THROW(check_finite(Y, 0), NumericAbort);
}

TEST(RunConfig, PresetsHoldTheirInvariants) {
    const auto t = RunConfig::make(Preset::tsne);
    EXPECT_TRUE(t.normalized);
    EXPECT_EQ(t.apply, ApplyMode::batched);
    EXPECT_EQ(t.lr_schedule, LrSchedule::constant);
    EXPECT_GT(t.momentum, 0.0);
    EXPECT_TRUE(t.gains);
    const auto u = RunConfig::make(Preset::umap);
    EXPECT_FALSE(u.normalized);
    EXPECT_EQ(u.apply, ApplyMode::immediate);
    EXPECT_EQ(u.lr_schedule, LrSchedule::linear_decay);
    EXPECT_EQ(u.momentum, 0.0);
    EXPECT_EQ(u.sampling.mode, SamplingMode::scalar_sampling);
    for (auto p : {Preset::gdr_tsne, Preset::gdr_umap}) {
        const auto g = RunConfig::make(p);
        EXPECT_EQ(g.apply, ApplyMode::batched);
        EXPECT_EQ(g.sampling.mode, SamplingMode::per_edge);
        EXPECT_EQ(g.normalized, p == Preset::gdr_tsne);
        EXPECT_EQ(g.sampling.neg_samples, 1);
    }
    for (auto p : {Preset::tsne, Preset::umap, Preset::gdr_tsne, Preset::gdr_umap}) {
        EXPECT_NO_THROW(RunConfig::make(p).validate());
    }
}

TEST(RunConfig, RejectsInvalidCombinations) {
    auto c = RunConfig::make(Preset::gdr_tsne);
    c.loss = LossKind::frobenius;
    EXPECT_THROW(c.validate(), ConfigError);

    c = RunConfig::make(Preset::gdr_umap);
    c.loss = LossKind::frobenius;
    EXPECT_NO_THROW(c.validate());
    c.ab_mode = AbSource::fitted;
    EXPECT_THROW(c.validate(), ConfigError);

    c = RunConfig::make(Preset::gdr_tsne);
    c.sampling.mode = SamplingMode::scalar_sampling;
    EXPECT_THROW(c.validate(), ConfigError);
    c.unsafe_normalized_scalar_sampling = true;
    EXPECT_NO_THROW(c.validate());

    c = RunConfig::make(Preset::umap);
    c.momentum = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);

    c = RunConfig::make(Preset::gdr_umap);
    c.dims = 4;
    EXPECT_THROW(c.validate(), ConfigError);
    c.dims = 2;
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Run, ZeroEpochsReturnsInitialization) {
    const auto m = make_blobs(200, 3, 3, 6.0, 1);
    auto c = small(Preset::gdr_umap, 0);
    const auto prep = prepare(m, c);
    const auto r = optimize(prep, c);
    EXPECT_EQ(r.state.coords, prep.init.coords);
    EXPECT_EQ(r.report.epochs_run, 0u);
}

TEST(Run, GdrUmapLossDecreasesBy200) {
    const auto m = make_blobs(1000, 5, 3, 6.0, 11);
    auto c = small(Preset::gdr_umap, 200);
    c.loss_every = 200;
    const auto r = run(m, c);
    ASSERT_EQ(r.report.loss_trace.size(), 2u);
    EXPECT_EQ(r.report.loss_trace[0].epoch, 0u);
    EXPECT_EQ(r.report.loss_trace[1].epoch, 200u);
    EXPECT_TRUE(r.report.loss_trace[1].exact);
    EXPECT_LT(r.report.loss_trace[1].loss, r.report.loss_trace[0].loss);
}

TEST(Run, SeededRunsAreBitwiseIdentical) {
    const auto m = make_blobs(300, 3, 4, 6.0, 5);
    for (auto p : {Preset::umap, Preset::gdr_umap, Preset::gdr_tsne}) {
        auto c = small(p, 60);
        c.threads = 1;
        EXPECT_EQ(run(m, c).state.coords, run(m, c).state.coords) << to_string(p);
    }
    auto c = small(Preset::gdr_umap, 60);
    c.threads = 3;
    EXPECT_EQ(run(m, c).state.coords, run(m, c).state.coords);
}

TEST(Run, LossTrendsDownInEveryRegime) {
    const auto m = make_blobs(500, 5, 3, 6.0, 6);
    struct Case {
        Preset preset;
        bool frobenius;
    };
    for (const Case cs : {Case{Preset::tsne, false}, Case{Preset::gdr_tsne, false}, Case{Preset::gdr_umap, false},
                          Case{Preset::gdr_umap, true}}) {
        auto c = small(cs.preset, cs.preset == Preset::tsne || cs.preset == Preset::gdr_tsne ? 500 : 300);
        if (cs.frobenius) {
            c.loss = LossKind::frobenius;
        }
        c.loss_every = 5;
        double largest = 0;
        const auto prep = prepare(m, c);
        const auto r = optimize(prep, c, [&](std::size_t, const EmbeddingState& Y) {
            for (double x : Y.coords) {
                largest = std::max(largest, std::abs(x));
            }
        });
        const auto& trace = r.report.loss_trace;
        const std::size_t tenth = std::max<std::size_t>(1, trace.size() / 10);
        std::vector<double> first, last;
        for (std::size_t s = 0; s < tenth; ++s) {
            first.push_back(trace[s].loss);
            last.push_back(trace[trace.size() - 1 - s].loss);
        }
        EXPECT_LT(median(last), median(first)) << to_string(cs.preset) << (cs.frobenius ? " frobenius" : "");
        EXPECT_LT(largest, coordinate_limit);
    }
}

TEST(Run, UmapPresetEndsBelowItsInitialLoss) {
    // scalar sampling with several negatives is not descent on this loss: it
    // drops sharply from the collapsed start, then drifts up as clusters spread
    const auto m = make_blobs(500, 5, 3, 6.0, 6);
    auto c = small(Preset::umap, 300);
    c.loss_every = 5;
    const auto r = run(m, c);
    const auto& trace = r.report.loss_trace;
    std::vector<double> last;
    for (std::size_t s = 0; s < trace.size() / 10; ++s) {
        last.push_back(trace[trace.size() - 1 - s].loss);
    }
    EXPECT_LT(median(last), 0.5 * trace.front().loss);
}

TEST(Run, AcceleratedAndExactVariantsRun) {
    const auto m = make_blobs(300, 3, 3, 6.0, 7);
    auto c = small(Preset::gdr_umap, 100);
    c.sampling.accelerated = true;
    EXPECT_TRUE(run(m, c).state.finite());
    c = small(Preset::gdr_tsne, 100);
    c.repulsion = RepulsionMode::exact;
    EXPECT_TRUE(run(m, c).state.finite());
}
