#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace gdr;

namespace {

NeighborGraph square_graph() {
    // unit square, corners 0..3 counter-clockwise, k = 2 nearest (the two sides)
    DataMatrix m(4, 2);
    m.values = {0, 0, 1, 0, 1, 1, 0, 1};
    return knn_exact(m, 3);
}

}

TEST(CalibrateSigma, MatchesFrozenAndBisectionOracle) {
    const std::vector<double> d{1.0, 2.0};
    const auto cal = calibrate_sigma(d, 1.5);
    EXPECT_FALSE(cal.clamped);
    EXPECT_NEAR(cal.value, 0.90959338070914946, 1e-6);
    EXPECT_NEAR(cal.value, oracle::bisect_sigma(d, 1.5), 1e-6);
    EXPECT_LT(cal.residual, 1e-5);
    EXPECT_LE(cal.iterations, 200);
}

TEST(CalibrateSigma, EqualDistancesClamp) {
    const std::vector<double> d(5, 2.0);
    const auto cal = calibrate_sigma(d, 3.0);
    EXPECT_TRUE(cal.clamped);
    EXPECT_GT(cal.value, 0.0);
    EXPECT_TRUE(std::isfinite(cal.value));
}

TEST(CalibrateSigma, UnreachablePerplexityClamps) {
    const std::vector<double> d{1.0, 2.0, 3.0};
    EXPECT_TRUE(calibrate_sigma(d, 3.5).clamped);
    EXPECT_TRUE(calibrate_sigma(d, 0.5).clamped);
}

TEST(CalibrateSigma, ScalesWithDistances) {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> unit(0.1, 5.0);
    std::vector<double> d(20);
    for (auto& x : d) {
        x = unit(eng);
    }
    std::sort(d.begin(), d.end());
    const double base = calibrate_sigma(d, 7.0).value;
    for (double c : {0.25, 2.0, 8.0}) {
        std::vector<double> s = d;
        for (auto& x : s) {
            x *= c;
        }
        EXPECT_DOUBLE_EQ(calibrate_sigma(s, 7.0).value, c * base);
    }
    std::vector<double> s = d;
    for (auto& x : s) {
        x *= 3.7;
    }
    EXPECT_NEAR(calibrate_sigma(s, 7.0).value / base, 3.7, 1e-9);
}

TEST(CalibrateSigma, RandomRowsAgreeWithOracle) {
    std::mt19937_64 eng(12);
    std::uniform_real_distribution<double> unit(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> d(15);
        for (auto& x : d) {
            x = unit(eng);
        }
        const double perp = 2.0 + trial % 10;
        const auto cal = calibrate_sigma(d, perp);
        ASSERT_FALSE(cal.clamped);
        EXPECT_NEAR(oracle::row_perplexity(d, cal.value), perp, 1e-5 * perp);
        EXPECT_NEAR(cal.value, oracle::bisect_sigma(d, perp), 1e-6 * cal.value);
    }
}

TEST(CalibrateTau, MatchesFrozenAndBisectionOracle) {
    const std::vector<double> d{1.0, 2.0, 3.0, 4.0};
    const auto cal = calibrate_tau(d, 1.0, 4);
    EXPECT_FALSE(cal.clamped);
    EXPECT_NEAR(cal.value, 1.6410179299284883, 1e-6);
    EXPECT_NEAR(cal.value, oracle::bisect_tau(d, 1.0, 2.0), 1e-6);
    EXPECT_LT(cal.residual, 1e-5);
}

TEST(CalibrateTau, AllAtRhoClamps) {
    const std::vector<double> d(4, 1.5);
    const auto cal = calibrate_tau(d, 1.5, 4);
    EXPECT_TRUE(cal.clamped);
    EXPECT_GT(cal.value, 0.0);
}

TEST(CalibrateTau, NearestTermIsOne) {
    const std::vector<double> d{0.7};
    for (double tau : {1e-3, 1.0, 1e3}) {
        EXPECT_EQ(oracle::row_mass(d, 0.7, tau), 1.0);
    }
}

TEST(CalibrateTau, RandomRowsAgreeWithOracle) {
    std::mt19937_64 eng(13);
    std::uniform_real_distribution<double> unit(0.5, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> d(15);
        for (auto& x : d) {
            x = unit(eng);
        }
        std::sort(d.begin(), d.end());
        const auto cal = calibrate_tau(d, d[0], 15);
        ASSERT_FALSE(cal.clamped);
        EXPECT_NEAR(oracle::row_mass(d, d[0], cal.value), std::log2(15.0), 1e-5);
        EXPECT_NEAR(cal.value, oracle::bisect_tau(d, d[0], std::log2(15.0)), 1e-6 * cal.value);
    }
}

TEST(DirectedAffinities, SquareMatchesFormulas) {
    const auto g = square_graph();
    for (bool pseudo : {false, true}) {
        for (auto mode : {KernelMode::gaussian_perplexity, KernelMode::umap_exponential}) {
            const auto params = calibrate_kernel(g, mode, pseudo, 2.0);
            const auto dir = directed_affinities(g, params);
            for (std::size_t i = 0; i < 4; ++i) {
                const double rho = pseudo ? 1.0 : 0.0;
                EXPECT_DOUBLE_EQ(params.rho[i], rho);
                for (std::size_t s = 0; s < 3; ++s) {
                    const double d = g.row_distances(i)[s];
                    const double x = std::max(0.0, d - rho);
                    const double expected = mode == KernelMode::gaussian_perplexity
                                                ? std::exp(-x * x / (2 * params.sigma[i] * params.sigma[i]))
                                                : std::exp(-x / params.tau[i]);
                    EXPECT_NEAR(dir.weights[i * 3 + s], expected, 1e-15);
                }
            }
        }
    }
}

TEST(DirectedAffinities, PseudoDistanceGivesOneAtNearestAndDominates) {
    const auto m = make_blobs(200, 3, 4, 5.0, 3);
    const auto g = knn_exact(m, 10);
    const auto with = directed_affinities(g, calibrate_kernel(g, KernelMode::umap_exponential, true));
    for (std::size_t i = 0; i < g.n; ++i) {
        EXPECT_EQ(with.weights[i * 10], 1.0);
        for (std::size_t s = 0; s < 10; ++s) {
            EXPECT_GT(with.weights[i * 10 + s], 0.0);
            EXPECT_LE(with.weights[i * 10 + s], 1.0);
        }
    }
    // same tau for both, so only the shift differs
    auto params = calibrate_kernel(g, KernelMode::umap_exponential, true);
    const auto shifted = directed_affinities(g, params);
    params.pseudo_distance = false;
    const auto plain = directed_affinities(g, params);
    for (std::size_t e = 0; e < plain.weights.size(); ++e) {
        EXPECT_LT(plain.weights[e], shifted.weights[e]);
    }
}

TEST(Symmetrize, PairArithmetic) {
    EXPECT_DOUBLE_EQ(symmetrize_pair(0.5, 0.5, Symmetrization::average), 0.5);
    EXPECT_DOUBLE_EQ(symmetrize_pair(0.5, 0.5, Symmetrization::fuzzy_union), 0.75);
    EXPECT_DOUBLE_EQ(symmetrize_pair(1.0, 0.0, Symmetrization::average), 0.5);
    EXPECT_DOUBLE_EQ(symmetrize_pair(1.0, 0.0, Symmetrization::fuzzy_union), 1.0);
}

TEST(Symmetrize, MatchesDenseOracle) {
    std::mt19937_64 eng(21);
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    const std::size_t n = 50, k = 6;
    DirectedAffinities dir{n, k, {}, {}};
    std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                others.push_back(j);
            }
        }
        std::shuffle(others.begin(), others.end(), eng);
        for (std::size_t s = 0; s < k; ++s) {
            const double w = unit(eng);
            dir.indices.push_back(others[s]);
            dir.weights.push_back(w);
            D[i][others[s]] = w;
        }
    }
    for (auto mode : {Symmetrization::average, Symmetrization::fuzzy_union}) {
        const auto P = symmetrize(dir, mode);
        const auto M = oracle::dense(P);
        std::size_t nonzero = 0;
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double a = D[i][j], b = D[j][i];
                const double expected = mode == Symmetrization::average ? (a + b) / 2 : a + b - a * b;
                EXPECT_NEAR(M[i][j], expected, 1e-15);
                nonzero += i < j && expected > 0;
                sum += M[i][j];
            }
        }
        EXPECT_EQ(P.edges.size(), nonzero);
        EXPECT_NEAR(P.p_sum, sum, 1e-12);
        EXPECT_NEAR(P.p_mean, sum / 2 / static_cast<double>(nonzero), 1e-12);
        for (std::size_t e = 1; e < P.edges.size(); ++e) {
            EXPECT_TRUE(std::tie(P.edges[e - 1].i, P.edges[e - 1].j) < std::tie(P.edges[e].i, P.edges[e].j));
        }
    }
}

TEST(Symmetrize, UnionDominatesAverage) {
    const auto m = make_blobs(300, 4, 5, 4.0, 8);
    const auto g = knn_exact(m, 12);
    const auto dir = directed_affinities(g, calibrate_kernel(g, KernelMode::umap_exponential, true));
    const auto avg = oracle::dense(symmetrize(dir, Symmetrization::average));
    const auto uni = oracle::dense(symmetrize(dir, Symmetrization::fuzzy_union));
    for (std::size_t i = 0; i < m.n; ++i) {
        for (std::size_t j = 0; j < m.n; ++j) {
            EXPECT_GE(uni[i][j], avg[i][j]);
        }
    }
}

TEST(BuildAffinities, InvariantsAndResiduals) {
    const auto m = make_blobs(400, 4, 6, 5.0, 9);
    const auto g = knn_exact(m, 30);
    for (auto mode : {KernelMode::gaussian_perplexity, KernelMode::umap_exponential}) {
        KernelParams params;
        const auto P = build_affinities(g, mode, mode == KernelMode::umap_exponential,
                                        mode == KernelMode::umap_exponential ? Symmetrization::fuzzy_union
                                                                             : Symmetrization::average,
                                        10.0, 2, &params);
        for (const auto& e : P.edges) {
            EXPECT_LT(e.i, e.j);
            EXPECT_GT(e.p, 0.0);
            EXPECT_LE(e.p, 1.0);
        }
        for (std::size_t i = 0; i < m.n; ++i) {
            if (!params.clamped[i]) {
                EXPECT_LT(params.residual[i], 1e-5);
            }
            if (mode == KernelMode::gaussian_perplexity) {
                EXPECT_GT(params.sigma[i], 0.0);
            } else {
                EXPECT_GT(params.tau[i], 0.0);
                EXPECT_DOUBLE_EQ(params.rho[i], g.row_distances(i)[0]);
            }
        }
        EXPECT_EQ(params.clamped_count(), 0u);
    }
}

TEST(BuildAffinities, ThreadCountDoesNotMatter) {
    const auto m = make_blobs(300, 3, 4, 5.0, 10);
    const auto g = knn_exact(m, 10);
    const auto a = build_affinities(g, KernelMode::umap_exponential, true, Symmetrization::fuzzy_union, 30, 1);
    const auto b = build_affinities(g, KernelMode::umap_exponential, true, Symmetrization::fuzzy_union, 30, 3);
    ASSERT_EQ(a.edges.size(), b.edges.size());
    for (std::size_t e = 0; e < a.edges.size(); ++e) {
        EXPECT_EQ(a.edges[e].p, b.edges[e].p);
    }
}

TEST(AffinityGraph, CsvDump) {
    AffinityGraph P;
    P.n = 3;
    P.edges = {{0, 1, 0.5}, {1, 2, 0.25}};
    P.refresh_totals();
    EXPECT_DOUBLE_EQ(P.p_sum, 1.5);
    EXPECT_DOUBLE_EQ(P.p_mean, 0.375);
    std::ostringstream out;
    P.write_csv(out);
    EXPECT_EQ(out.str(), "i,j,p\n0,1,0.5\n1,2,0.25\n");
}

TEST(DirectedEdges, BothDirectionsPerRow) {
    AffinityGraph P;
    P.n = 3;
    P.edges = {{0, 1, 0.5}, {1, 2, 0.25}};
    const auto adj = directed_edges(P);
    EXPECT_EQ(adj.offsets, (std::vector<std::size_t>{0, 1, 3, 4}));
    EXPECT_EQ(adj.targets, (std::vector<std::size_t>{1, 0, 2, 1}));
    EXPECT_EQ(adj.weights, (std::vector<double>{0.5, 0.5, 0.25, 0.25}));
}
