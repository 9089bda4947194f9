#ifndef GDR_SAMPLING_HPP
#define GDR_SAMPLING_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "embedding.hpp"
#include "gradients.hpp"
#include "lowdim_kernel.hpp"

namespace gdr {

enum class SamplingMode { scalar_sampling, per_edge };

/**
 * How attractions and repulsions are scheduled each epoch.
 *
 * - scalar_sampling: an edge of weight p fires on a deterministic stride, about
 *   p * epochs times overall, and its force is applied without the p factor.
 * - per_edge: every edge fires every epoch with explicit p and (1 - p_bar)
 *   multipliers.
 * - accelerated (per_edge only): stride schedule *and* explicit multipliers.
 */
struct SamplingPlan {
    SamplingMode mode = SamplingMode::per_edge;
    int neg_samples = 1;
    bool accelerated = false;
    std::uint64_t seed = 0;

    /// True when edges fire on the p-proportional stride.
    bool strided() const { return mode == SamplingMode::scalar_sampling || accelerated; }

    void validate() const {
        if (neg_samples < 1) {
            throw ConfigError("neg_samples must be >= 1");
        }
        if (accelerated && mode == SamplingMode::scalar_sampling) {
            throw ConfigError("the accelerated variant already combines scalar sampling with explicit weights; "
                              "use it with per-edge sampling");
        }
    }
};

/**
 * Deterministic stride schedule. Edge e fires in epoch t (0-based) when
 * floor((t + 1) p_e) > floor(t p_e), so it fires floor(epochs * p_e) times in
 * total and p = 1 fires every epoch.
 */
class EdgeSchedule {
public:
    EdgeSchedule(const AffinityGraph& P, std::size_t epochs, const SamplingPlan& plan)
        : epochs_(epochs), strided_(plan.strided()) {
        weights_.reserve(P.edges.size());
        for (const auto& e : P.edges) {
            weights_.push_back(e.p);
        }
    }

    static bool fires(double p, std::size_t epoch) {
        // both products are non-negative, so truncation is floor
        return static_cast<std::int64_t>(static_cast<double>(epoch + 1) * p) >
               static_cast<std::int64_t>(static_cast<double>(epoch) * p);
    }

    bool active(std::size_t edge, std::size_t epoch) const {
        return !strided_ || fires(weights_[edge], epoch);
    }

    std::size_t application_count(std::size_t edge) const {
        if (!strided_) {
            return epochs_;
        }
        std::size_t count = 0;
        for (std::size_t t = 0; t < epochs_; ++t) {
            count += fires(weights_[edge], t);
        }
        return count;
    }

    std::vector<std::size_t> application_epochs(std::size_t edge) const {
        std::vector<std::size_t> out;
        for (std::size_t t = 0; t < epochs_; ++t) {
            if (active(edge, t)) {
                out.push_back(t);
            }
        }
        return out;
    }

    std::size_t epochs() const { return epochs_; }

private:
    std::size_t epochs_;
    bool strided_;
    std::vector<double> weights_;
};

inline EdgeSchedule edge_schedule(const AffinityGraph& P, std::size_t epochs, const SamplingPlan& plan) {
    if (epochs < 1) {
        throw std::invalid_argument("edge schedule needs at least one epoch");
    }
    return EdgeSchedule(P, epochs, plan);
}

/// One uniform draw from [0, n) \ {i}.
inline std::size_t sample_negative(std::size_t i, std::size_t n, Rng& rng) {
    std::size_t k = static_cast<std::size_t>(rng.below(n - 1));
    return k >= i ? k + 1 : k;
}

/// `count` i.i.d. draws (with replacement) from [0, n) \ {i}.
inline std::vector<std::size_t> sample_negatives(std::size_t i, std::size_t count, std::size_t n, Rng& rng) {
    if (n < 2) {
        throw std::invalid_argument("negative sampling needs n >= 2");
    }
    std::vector<std::size_t> out(count);
    for (auto& k : out) {
        k = sample_negative(i, n, rng);
    }
    return out;
}

/// Quantities the repulsion formulas need besides the coordinates.
struct RepulsionContext {
    /// Normalization term; only read in the normalized regime.
    double Z = 1.0;
    /// Mean edge weight, standing in for the unknown p_ik.
    double p_bar = 0.0;
};

/**
 * Repulsive force on y_i from y_k under the regime, without clipping or any
 * sampling multiplier. This is the quantity the exact sum adds up.
 */
inline ForceVector pair_repulsion(std::size_t i, std::size_t k, const EmbeddingState& Y, const ABParams& ab,
                                  const GradientRegime& regime, const RepulsionContext& ctx) {
    const double* yi = Y.coords.data() + i * Y.dim;
    const double* yk = Y.coords.data() + k * Y.dim;
    const double s = squared_distance(yi, yk, Y.dim);
    const double q = q_unnormalized(s, ab);
    double coef;
    if (regime.loss == LossKind::frobenius) {
        coef = frobenius_coefficients(0.0, q).repulsion;
    } else if (regime.normalized) {
        coef = tsne_coefficients(0.0, q, ctx.Z, kernel_slope(s, ab)).repulsion;
    } else {
        coef = umap_coefficients(0.0, q, s, ab, regime.eps, 1.0 - ctx.p_bar).repulsion;
    }
    ForceVector f;
    f.dim = Y.dim;
    for (std::size_t c = 0; c < Y.dim; ++c) {
        f.c[c] = coef * (yi[c] - yk[c]);
    }
    return f;
}

/// Exact O(n) repulsion on y_i: the sum over every k != i.
inline ForceVector full_repulsion(std::size_t i, const EmbeddingState& Y, const ABParams& ab,
                                  const GradientRegime& regime, const RepulsionContext& ctx) {
    ForceVector total;
    total.dim = Y.dim;
    for (std::size_t k = 0; k < Y.n; ++k) {
        if (k == i) {
            continue;
        }
        const auto f = pair_repulsion(i, k, Y, ab, regime, ctx);
        for (std::size_t c = 0; c < Y.dim; ++c) {
            total.c[c] += f.c[c];
        }
    }
    return total;
}

struct ForceScales {
    double attraction = 1.0;
    double repulsion = 1.0;
};

/**
 * Explicit multipliers applied to each fired force. Scalar sampling encodes the
 * weights in how often an edge fires, so it multiplies by nothing; per-edge
 * (accelerated or not) multiplies by p_ij and 1 - p_bar.
 */
inline ForceScales effective_scalars(double p_ij, double p_bar, const SamplingPlan& plan) {
    if (plan.mode == SamplingMode::scalar_sampling) {
        return {1.0, 1.0};
    }
    return {p_ij, 1.0 - p_bar};
}

}

#endif
