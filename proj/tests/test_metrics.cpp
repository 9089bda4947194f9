#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"

using namespace gdr;

namespace {

EmbeddingState two_blobs(std::size_t per, double gap, std::uint64_t seed, std::vector<std::int64_t>& labels) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal;
    EmbeddingState Y(2 * per, 2);
    labels.assign(2 * per, 0);
    for (std::size_t i = 0; i < 2 * per; ++i) {
        labels[i] = i < per ? 0 : 1;
        Y.coords[2 * i] = normal(eng) + (i < per ? 0.0 : gap);
        Y.coords[2 * i + 1] = normal(eng);
    }
    return Y;
}

}

TEST(KnnAccuracy, SeparatedBlobsArePerfect) {
    std::vector<std::int64_t> labels;
    const auto Y = two_blobs(200, 100.0, 1, labels);
    EXPECT_DOUBLE_EQ(knn_accuracy(Y, labels, 10), 100.0);
}

TEST(KnnAccuracy, RandomLabelsGiveChance) {
    std::vector<std::int64_t> labels;
    auto Y = two_blobs(1000, 0.0, 2, labels);
    std::mt19937_64 eng(3);
    for (auto& l : labels) {
        l = static_cast<std::int64_t>(eng() % 2);
    }
    EXPECT_NEAR(knn_accuracy(Y, labels, 10), 50.0, 3.0);
}

TEST(KnnAccuracy, RigidMotionInvariant) {
    std::vector<std::int64_t> labels;
    const auto Y = two_blobs(300, 2.0, 4, labels);
    auto moved = Y;
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (std::size_t i = 0; i < Y.n; ++i) {
        const double x = Y.coords[2 * i], y = Y.coords[2 * i + 1];
        moved.coords[2 * i] = c * x - s * y + 5.0;
        moved.coords[2 * i + 1] = s * x + c * y - 3.0;
    }
    EXPECT_DOUBLE_EQ(knn_accuracy(Y, labels, 15), knn_accuracy(moved, labels, 15));
}

TEST(KnnAccuracy, TiesGoToSmallestLabel) {
    EmbeddingState Y(3, 1);
    Y.coords = {0.0, -1.0, 1.0};
    const std::vector<std::int64_t> labels{5, 9, 5};
    // point 0 sees labels {9, 5}: tie, resolved to 5, correct
    // points 1 and 2 see {5, 5} / {5, 9}
    EXPECT_NEAR(knn_accuracy(Y, labels, 2), 100.0 * 2.0 / 3.0, 1e-12);
}

TEST(KnnAccuracy, DefaultKAndErrors) {
    EXPECT_EQ(default_knn_k(2000), 100u);
    EXPECT_EQ(default_knn_k(500), 50u);
    EXPECT_EQ(default_knn_k(5), 1u);
    EmbeddingState Y(4, 2);
    const std::vector<std::int64_t> short_labels{0, 1};
    EXPECT_THROW(knn_accuracy(Y, short_labels, 1), std::invalid_argument);
}

TEST(VMeasure, FrozenValues) {
    const std::vector<std::int64_t> labels{0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
    const std::vector<std::int64_t> clusters{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    const auto v = v_measure(labels, clusters);
    EXPECT_NEAR(v.homogeneity, 0.44270128334605002, 1e-12);
    EXPECT_NEAR(v.completeness, 0.71626903388315621, 1e-12);
    EXPECT_NEAR(v.v, 0.54719817377065405, 1e-12);
    EXPECT_NEAR(v.average, 0.5 * (v.homogeneity + v.completeness), 1e-15);
}

TEST(VMeasure, DegenerateCases) {
    const std::vector<std::int64_t> a{0, 0, 1, 1, 2};
    const auto same = v_measure(a, a);
    EXPECT_DOUBLE_EQ(same.v, 1.0);
    EXPECT_DOUBLE_EQ(same.homogeneity, 1.0);
    const std::vector<std::int64_t> one(5, 7);
    const auto lumped = v_measure(a, one);
    EXPECT_DOUBLE_EQ(lumped.homogeneity, 0.0);
    EXPECT_DOUBLE_EQ(lumped.completeness, 1.0);
    EXPECT_DOUBLE_EQ(lumped.v, 0.0);
}

TEST(VMeasure, MatchesEntropyTableOracle) {
    std::mt19937_64 eng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::int64_t> a(200), b(200);
        for (std::size_t i = 0; i < 200; ++i) {
            a[i] = static_cast<std::int64_t>(eng() % 4);
            b[i] = static_cast<std::int64_t>(eng() % (3 + trial % 4));
        }
        const auto v = v_measure(a, b);
        const auto o = oracle::v_measure(a, b);
        EXPECT_NEAR(v.homogeneity, o.h, 1e-10);
        EXPECT_NEAR(v.completeness, o.c, 1e-10);
        EXPECT_NEAR(v.v, o.v, 1e-10);
        // swapping the labelings swaps the two scores
        const auto w = v_measure(b, a);
        EXPECT_NEAR(w.homogeneity, v.completeness, 1e-12);
        EXPECT_NEAR(w.completeness, v.homogeneity, 1e-12);
    }
}

TEST(KMeans, KEqualsNHasZeroSse) {
    const auto Y = init_random(20, 2, 1, 1.0);
    EXPECT_NEAR(kmeans(Y, 20, 1).sse, 0.0, 1e-20);
}

TEST(KMeans, RecoversSeparatedBlobs) {
    const auto m = make_blobs(300, 3, 2, 30.0, 6);
    EmbeddingState Y(m.n, 2);
    Y.coords = m.values;
    const auto km = kmeans(Y, 3, 2);
    EXPECT_DOUBLE_EQ(v_measure(*m.labels, km.labels).v, 1.0);
    EXPECT_EQ(kmeans(Y, 3, 2).labels, km.labels);
    EXPECT_THROW(kmeans(Y, 0, 1), std::invalid_argument);
}

TEST(SpreadRatio, CollapsedClassesGiveInfinity) {
    EmbeddingState Y(4, 2);
    Y.coords = {0, 0, 0, 0, 5, 5, 5, 5};
    const std::vector<std::int64_t> labels{0, 0, 1, 1};
    EXPECT_TRUE(std::isinf(spread_ratio(Y, labels).ratio));
}

TEST(SpreadRatio, TwoGaussianBlobs) {
    std::vector<std::int64_t> labels;
    const auto Y = two_blobs(20000, 10.0, 7, labels);
    const auto s = spread_ratio(Y, labels);
    EXPECT_NEAR(s.ratio, 10.0 / std::sqrt(M_PI / 2.0), 0.3);
    auto scaled = Y;
    for (auto& x : scaled.coords) {
        x *= 13.0;
    }
    EXPECT_NEAR(spread_ratio(scaled, labels).ratio, s.ratio, 1e-9 * s.ratio);
}

TEST(SpreadRatio, SinglePointClassWarns) {
    EmbeddingState Y(3, 2);
    Y.coords = {0, 0, 1, 0, 9, 9};
    const std::vector<std::int64_t> labels{0, 0, 1};
    EXPECT_FALSE(spread_ratio(Y, labels).warnings.empty());
    const std::vector<std::int64_t> one(3, 0);
    EXPECT_THROW(spread_ratio(Y, one), std::invalid_argument);
}

TEST(Manifold, LineAndReversedLine) {
    std::vector<double> t(500);
    std::iota(t.begin(), t.end(), 0.0);
    EmbeddingState Y(500, 2), R(500, 2);
    for (std::size_t i = 0; i < 500; ++i) {
        Y.coords[2 * i] = t[i];
        R.coords[2 * i] = -t[i];
    }
    EXPECT_NEAR(manifold_preservation(Y, t).magnitude, 1.0, 1e-12);
    const auto r = manifold_preservation(R, t);
    EXPECT_NEAR(r.magnitude, 1.0, 1e-12);
    EXPECT_NEAR(std::abs(r.rho), 1.0, 1e-12);
}

TEST(Manifold, ShuffledParameterIsUncorrelated) {
    const std::size_t n = 2000;
    std::vector<double> t(n);
    std::iota(t.begin(), t.end(), 0.0);
    std::vector<double> shuffled = t;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(8));
    EmbeddingState Y(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        Y.coords[2 * i] = shuffled[i];
        Y.coords[2 * i + 1] = 0.01 * static_cast<double>(i % 7);
    }
    EXPECT_LT(manifold_preservation(Y, t).magnitude, 0.1);
}

TEST(Spearman, HandlesTies) {
    const std::vector<double> a{1, 2, 2, 3}, b{10, 20, 20, 30};
    EXPECT_NEAR(spearman(a, b), 1.0, 1e-12);
}

TEST(AngleAgreement, TwoPointsAreExact) {
    EmbeddingState Y(2, 2);
    Y.coords = {0.0, 0.0, 1.0, 0.5};
    GradientRegime r;
    const auto a = angle_agreement(Y, ABParams::unit(), r, 10, 1);
    EXPECT_EQ(a.used, 10u);
    EXPECT_NEAR(a.mean, 0.0, 1e-7);
}

TEST(AngleAgreement, AngleBetweenBasics) {
    ForceVector a, b;
    a.dim = b.dim = 2;
    a.c = {1, 0, 0};
    b.c = {3, 0, 0};
    EXPECT_NEAR(angle_between(a, b), 0.0, 1e-7);
    b.c = {-2, 0, 0};
    EXPECT_NEAR(angle_between(a, b), M_PI, 1e-7);
    b.c = {0, 4, 0};
    EXPECT_NEAR(angle_between(a, b), M_PI / 2, 1e-12);
}

TEST(AngleAgreement, ShrinksWithMoreSamples) {
    const auto Y = init_random(500, 2, 9, 1.0);
    GradientRegime r;
    const double few = angle_agreement(Y, ABParams::unit(), r, 200, 1, 5, 15).mean;
    const double many = angle_agreement(Y, ABParams::unit(), r, 200, 1, 5, 2000).mean;
    EXPECT_LT(many, few);
    EXPECT_LT(many, 0.5);
}

TEST(ForceRatios, SamplingEqualityAndUnnormalizedOrder) {
    for (std::size_t n : {100u, 1000u}) {
        const auto f = force_ratio_experiment(n, 3);
        EXPECT_NEAR(f.ratio_full / f.ratio_sampled, 1.0, 0.1) << "n " << n;
        EXPECT_TRUE(f.sampling_equal);
        EXPECT_TRUE(f.unnormalized_smaller);
        EXPECT_LT(f.ratio_unnorm, f.ratio_sampled);
    }
}

TEST(ForceRatios, ConcentratedNormsFollowCpn) {
    // with |v| nearly constant kappa is 1 and both ratios reduce to c p n
    ForceRatioOptions opt;
    opt.sigma = 1e-3;
    const auto f = force_ratio_experiment(200, 4, opt);
    EXPECT_NEAR(f.kappa, 1.0, 1e-3);
    EXPECT_NEAR(f.ratio_full, f.cancelled_form, 0.01 * f.cancelled_form);
    EXPECT_NEAR(f.ratio_sampled, f.cancelled_form, 0.01 * f.cancelled_form);
    EXPECT_THROW(force_ratio_experiment(5, 1), std::invalid_argument);
}

TEST(Evaluate, FillsAllFields) {
    const auto m = make_blobs(400, 4, 2, 20.0, 10);
    EmbeddingState Y(m.n, 2);
    Y.coords = m.values;
    const auto rep = evaluate(Y, *m.labels, 1);
    EXPECT_EQ(rep.knn_k, 40u);
    EXPECT_DOUBLE_EQ(rep.knn_accuracy, 100.0);
    EXPECT_EQ(rep.clusters, 4u);
    EXPECT_GT(rep.v.v, 0.99);
    EXPECT_GT(rep.spread.ratio, 2.0);
    EXPECT_TRUE(std::isnan(rep.angle_mean));
}
