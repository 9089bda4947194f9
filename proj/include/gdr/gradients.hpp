#ifndef GDR_GRADIENTS_HPP
#define GDR_GRADIENTS_HPP

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "embedding.hpp"
#include "lowdim_kernel.hpp"

namespace gdr {

enum class LossKind { kl, frobenius };

/**
 * Which objective the forces descend. `eps` regularizes the 1/|v|^2 factor of
 * the unnormalized KL repulsion; the Frobenius loss needs no such guard.
 */
struct GradientRegime {
    bool normalized = false;
    LossKind loss = LossKind::kl;
    bool accelerated = false;
    double eps = 1e-3;

    void validate() const {
        if (loss == LossKind::frobenius && normalized) {
            throw ConfigError("the Frobenius loss is only stable without normalization");
        }
        if (!(eps >= 0)) {
            throw ConfigError("eps must be non-negative");
        }
    }
};

/// Per-coordinate clip applied to unnormalized KL forces.
constexpr double force_clip = 4.0;

inline double clip_force(double x, double limit = force_clip) {
    return std::clamp(x, -limit, limit);
}

/// A d-dimensional (d <= 3) force contribution.
struct ForceVector {
    std::size_t dim = 0;
    std::array<double, 3> c{};

    double operator[](std::size_t i) const { return c[i]; }

    double norm() const {
        double s = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            s += c[i] * c[i];
        }
        return std::sqrt(s);
    }

    static ForceVector scaled(double coef, std::span<const double> v) {
        ForceVector f;
        f.dim = v.size();
        for (std::size_t i = 0; i < f.dim; ++i) {
            f.c[i] = coef * v[i];
        }
        return f;
    }
};

struct ForcePair {
    ForceVector attraction;
    ForceVector repulsion;
};

/**
 * Every force here is a scalar multiple of v = y_i - y_j. These are the
 * multipliers; negative attraction pulls y_i toward y_j.
 */
struct ForceCoefficients {
    double attraction = 0;
    double repulsion = 0;
};

/**
 * Normalized KL. `q` is the unnormalized kernel value, which equals Z times the
 * normalized one. `slope` is a*b*s^(b-1) (1 when a = b = 1).
 */
inline ForceCoefficients tsne_coefficients(double p_hat, double q, double Z, double slope = 1.0) {
    return {-4.0 * slope * p_hat * q, 4.0 * slope * q * q / Z};
}

/**
 * Unnormalized KL: attraction -2ab s^(b-1) q p, repulsion 2b q (1-p) / (eps + s).
 * The (1 - p) factor is passed separately because it is estimated (mean p) for
 * non-edges and dropped under scalar sampling.
 */
inline ForceCoefficients umap_coefficients(double p, double q, double dist2, const ABParams& ab, double eps,
                                           double one_minus_p) {
    ForceCoefficients out;
    out.attraction = -2.0 * kernel_slope(dist2, ab) * q * p;
    const double denom = eps + dist2;
    out.repulsion = denom > 0 ? 2.0 * ab.b * q * one_minus_p / denom : 0.0;
    return out;
}

/// Squared Frobenius loss with a = b = 1.
inline ForceCoefficients frobenius_coefficients(double p, double q) {
    return {-4.0 * p * q * q, 4.0 * q * q * q};
}

inline ForcePair tsne_forces(double p_hat, double q, double Z, std::span<const double> v) {
    const auto c = tsne_coefficients(p_hat, q, Z);
    return {ForceVector::scaled(c.attraction, v), ForceVector::scaled(c.repulsion, v)};
}

/**
 * UMAP forces on y_i for the pair (i, j). Unlike the coefficient helper, this
 * applies the per-coordinate clip when `clip` is set.
 */
inline ForcePair umap_forces(double p, double q, std::span<const double> v, const ABParams& ab, double eps,
                             double one_minus_p, bool clip = false) {
    double s = 0;
    for (double x : v) {
        s += x * x;
    }
    const auto c = umap_coefficients(p, q, s, ab, eps, one_minus_p);
    ForcePair out{ForceVector::scaled(c.attraction, v), ForceVector::scaled(c.repulsion, v)};
    if (clip) {
        for (std::size_t d = 0; d < v.size(); ++d) {
            out.attraction.c[d] = clip_force(out.attraction.c[d]);
            out.repulsion.c[d] = clip_force(out.repulsion.c[d]);
        }
    }
    return out;
}

inline ForcePair frobenius_forces(double p, double q, std::span<const double> v) {
    const auto c = frobenius_coefficients(p, q);
    return {ForceVector::scaled(c.attraction, v), ForceVector::scaled(c.repulsion, v)};
}

namespace internal {

/// Dense per-row lookup of p_ij; -1 marks a non-edge.
class RowWeights {
public:
    explicit RowWeights(const AffinityGraph& P) : adj_(directed_edges(P)), row_(P.n, -1.0) {}

    void load(std::size_t i) {
        for (std::size_t e = adj_.offsets[i]; e < adj_.offsets[i + 1]; ++e) {
            row_[adj_.targets[e]] = adj_.weights[e];
        }
    }

    void clear(std::size_t i) {
        for (std::size_t e = adj_.offsets[i]; e < adj_.offsets[i + 1]; ++e) {
            row_[adj_.targets[e]] = -1.0;
        }
    }

    double operator[](std::size_t j) const { return row_[j]; }

private:
    DirectedEdges adj_;
    std::vector<double> row_;
};

inline double bernoulli_kl(double p, double q, double floor) {
    double out = 0;
    if (p > 0) {
        out += p * std::log(p / std::max(q, floor));
    }
    if (p < 1) {
        out += (1 - p) * std::log((1 - p) / std::max(1 - q, floor));
    }
    return out;
}

}

/// Floor on q and 1 - q inside the unnormalized KL.
constexpr double kl_floor = 1e-12;

/**
 * sum over ordered pairs of p_hat log(p_hat / q_hat), with p_hat = p / p_sum and
 * q_hat = q / Z. Exact, O(n^2).
 */
inline double kl_loss_normalized(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab) {
    const double Z = normalization_Z(Y, ab);
    double loss = 0;
    for (const auto& e : P.edges) {
        const double p_hat = e.p / P.p_sum;
        const double q = q_unnormalized(squared_distance(Y.coords.data() + e.i * Y.dim, Y.coords.data() + e.j * Y.dim, Y.dim), ab);
        loss += 2.0 * p_hat * std::log(p_hat * Z / q);
    }
    return loss;
}

/**
 * Sum over ordered pairs of the Bernoulli KL between p and q, where non-edges
 * take p = p_bar. O(n^2).
 */
inline double kl_loss_unnormalized(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab, double p_bar) {
    double loss = 0;
    for (std::size_t i = 0; i < Y.n; ++i) {
        const double* yi = Y.coords.data() + i * Y.dim;
        for (std::size_t j = i + 1; j < Y.n; ++j) {
            const double q = q_unnormalized(squared_distance(yi, Y.coords.data() + j * Y.dim, Y.dim), ab);
            loss += 2.0 * internal::bernoulli_kl(p_bar, q, kl_floor);
        }
    }
    for (const auto& e : P.edges) {
        const double q = q_unnormalized(squared_distance(Y.coords.data() + e.i * Y.dim, Y.coords.data() + e.j * Y.dim, Y.dim), ab);
        loss += 2.0 * (internal::bernoulli_kl(e.p, q, kl_floor) - internal::bernoulli_kl(p_bar, q, kl_floor));
    }
    return loss;
}

/// Sum over ordered pairs of (p - q)^2 with p = 0 off the graph. O(n^2).
inline double frobenius_loss(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab) {
    double loss = 0;
    for (std::size_t i = 0; i < Y.n; ++i) {
        const double* yi = Y.coords.data() + i * Y.dim;
        for (std::size_t j = i + 1; j < Y.n; ++j) {
            const double q = q_unnormalized(squared_distance(yi, Y.coords.data() + j * Y.dim, Y.dim), ab);
            loss += 2.0 * q * q;
        }
    }
    for (const auto& e : P.edges) {
        const double q = q_unnormalized(squared_distance(Y.coords.data() + e.i * Y.dim, Y.coords.data() + e.j * Y.dim, Y.dim), ab);
        loss += 2.0 * ((e.p - q) * (e.p - q) - q * q);
    }
    return loss;
}

inline double dense_loss(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab,
                         const GradientRegime& regime, double p_bar) {
    if (regime.loss == LossKind::frobenius) {
        return frobenius_loss(P, Y, ab);
    }
    return regime.normalized ? kl_loss_normalized(P, Y, ab) : kl_loss_unnormalized(P, Y, ab, p_bar);
}

/**
 * Exact gradient of `dense_loss`, assembled from the per-pair forces over every
 * ordered pair. The tSNE coefficients already account for both (i, j) and
 * (j, i); the unnormalized ones are per ordered pair, hence the factor 2.
 * No clipping is applied.
 */
inline std::vector<double> dense_gradient(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab,
                                          const GradientRegime& regime, double p_bar) {
    regime.validate();
    if (regime.loss == LossKind::frobenius && !ab.is_unit()) {
        throw ConfigError("Frobenius gradients assume a = b = 1");
    }
    const std::size_t n = Y.n, dim = Y.dim;
    std::vector<double> grad(n * dim, 0.0);
    const double Z = regime.normalized ? normalization_Z(Y, ab) : 0.0;
    internal::RowWeights weights(P);

    for (std::size_t i = 0; i < n; ++i) {
        weights.load(i);
        const double* yi = Y.coords.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            const double* yj = Y.coords.data() + j * dim;
            const double s = squared_distance(yi, yj, dim);
            const double q = q_unnormalized(s, ab);
            const double pij = weights[j];
            const bool edge = pij >= 0;

            double coef;
            if (regime.loss == LossKind::frobenius) {
                const auto c = frobenius_coefficients(edge ? pij : 0.0, q);
                coef = -2.0 * (c.attraction + c.repulsion);
            } else if (regime.normalized) {
                const auto c = tsne_coefficients(edge ? pij / P.p_sum : 0.0, q, Z, kernel_slope(s, ab));
                coef = -(c.attraction + c.repulsion);
            } else {
                const double p = edge ? pij : p_bar;
                const auto c = umap_coefficients(p, q, s, ab, regime.eps, 1.0 - p);
                coef = -2.0 * (c.attraction + c.repulsion);
            }
            for (std::size_t c = 0; c < dim; ++c) {
                grad[i * dim + c] += coef * (yi[c] - yj[c]);
            }
        }
        weights.clear(i);
    }
    return grad;
}

}

#endif
