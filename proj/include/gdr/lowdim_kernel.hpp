#ifndef GDR_LOWDIM_KERNEL_HPP
#define GDR_LOWDIM_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "embedding.hpp"

namespace gdr {

enum class AbSource { unit, fitted };

/// Shape constants of q(s) = 1 / (1 + a s^b), s the squared distance.
struct ABParams {
    double a = 1.0;
    double b = 1.0;
    AbSource source = AbSource::unit;
    double min_dist = 0.1;
    double spread = 1.0;

    static ABParams unit() { return ABParams{}; }

    bool is_unit() const { return a == 1.0 && b == 1.0; }
};

inline double q_unnormalized(double dist2, const ABParams& ab) {
    if (ab.b == 1.0) {
        return 1.0 / (1.0 + ab.a * dist2);
    }
    return 1.0 / (1.0 + ab.a * std::pow(dist2, ab.b));
}

/// a * b * s^(b-1), the factor by which d q / d y deviates from the a=b=1 case.
inline double kernel_slope(double dist2, const ABParams& ab) {
    if (ab.b == 1.0) {
        return ab.a;
    }
    if (dist2 <= 0) {
        return 0.0;
    }
    return ab.a * ab.b * std::pow(dist2, ab.b - 1.0);
}

/// Sum of q over all ordered pairs k != l. O(n^2).
inline double normalization_Z(const std::vector<double>& coords, std::size_t n, std::size_t dim, const ABParams& ab) {
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* yi = coords.data() + i * dim;
        for (std::size_t j = i + 1; j < n; ++j) {
            z += q_unnormalized(squared_distance(yi, coords.data() + j * dim, dim), ab);
        }
    }
    return 2.0 * z;
}

inline double normalization_Z(const EmbeddingState& state, const ABParams& ab) {
    return normalization_Z(state.coords, state.n, state.dim, ab);
}

struct AbFit {
    ABParams params;
    double rmse = 0;
    bool fallback = false;
    std::string warning;
};

namespace internal {

struct CurveSamples {
    std::vector<double> d;
    std::vector<double> target;
};

inline CurveSamples ab_curve(double min_dist, double spread) {
    CurveSamples c;
    constexpr int count = 300;
    c.d.resize(count);
    c.target.resize(count);
    for (int m = 0; m < count; ++m) {
        const double d = 3.0 * spread * m / (count - 1);
        c.d[m] = d;
        c.target[m] = d <= min_dist ? 1.0 : std::exp(-(d - min_dist) / spread);
    }
    return c;
}

inline double ab_sse(const CurveSamples& c, double a, double b) {
    double sse = 0;
    for (std::size_t m = 0; m < c.d.size(); ++m) {
        const double q = 1.0 / (1.0 + a * std::pow(c.d[m], 2.0 * b));
        sse += (q - c.target[m]) * (q - c.target[m]);
    }
    return sse;
}

}

/**
 * Least-squares fit of (a, b) so that 1 / (1 + a d^(2b)) follows
 * 1 for d <= min_dist and exp(-(d - min_dist) / spread) beyond, on 300
 * points spanning [0, 3 * spread]. A coarse log-grid picks the start, then
 * Levenberg-Marquardt refines in (log a, log b).
 */
inline AbFit fit_ab(double min_dist, double spread) {
    if (!(spread > 0) || !(min_dist >= 0) || !(min_dist < spread * 10)) {
        throw std::invalid_argument("fit_ab needs spread > 0 and 0 <= min_dist < 10 * spread");
    }
    const auto curve = internal::ab_curve(min_dist, spread);
    const std::size_t m = curve.d.size();

    double best_a = 1, best_b = 1, best = std::numeric_limits<double>::infinity();
    for (int ia = 0; ia <= 60; ++ia) {
        const double a = std::exp(std::log(1e-3) + (std::log(1e3) - std::log(1e-3)) * ia / 60.0);
        for (int ib = 0; ib <= 40; ++ib) {
            const double b = 0.1 + 2.9 * ib / 40.0;
            const double s = internal::ab_sse(curve, a, b);
            if (s < best) {
                best = s;
                best_a = a;
                best_b = b;
            }
        }
    }

    double la = std::log(best_a), lb = std::log(best_b);
    double lambda = 1e-3;
    for (int it = 0; it < 500; ++it) {
        const double a = std::exp(la), b = std::exp(lb);
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (std::size_t s = 0; s < m; ++s) {
            const double d = curve.d[s];
            if (d <= 0) {
                continue;
            }
            const double pw = std::pow(d, 2.0 * b);
            const double q = 1.0 / (1.0 + a * pw);
            const double r = q - curve.target[s];
            const double dq_dla = -a * pw * q * q;
            const double dq_dlb = -a * pw * 2.0 * std::log(d) * q * q * b;
            jtj00 += dq_dla * dq_dla;
            jtj01 += dq_dla * dq_dlb;
            jtj11 += dq_dlb * dq_dlb;
            jtr0 += dq_dla * r;
            jtr1 += dq_dlb * r;
        }
        const double h00 = jtj00 * (1 + lambda), h11 = jtj11 * (1 + lambda);
        const double det = h00 * h11 - jtj01 * jtj01;
        if (!(std::abs(det) > 0)) {
            break;
        }
        const double step_a = -(h11 * jtr0 - jtj01 * jtr1) / det;
        const double step_b = -(-jtj01 * jtr0 + h00 * jtr1) / det;
        const double cur = internal::ab_sse(curve, a, b);
        const double next = internal::ab_sse(curve, std::exp(la + step_a), std::exp(lb + step_b));
        if (next < cur) {
            la += step_a;
            lb += step_b;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (std::abs(step_a) + std::abs(step_b) < 1e-12) {
                break;
            }
        } else {
            lambda *= 10;
            if (lambda > 1e12) {
                break;
            }
        }
    }

    AbFit out;
    out.params.a = std::exp(la);
    out.params.b = std::exp(lb);
    out.params.source = AbSource::fitted;
    out.params.min_dist = min_dist;
    out.params.spread = spread;
    out.rmse = std::sqrt(internal::ab_sse(curve, out.params.a, out.params.b) / static_cast<double>(m));
    if (!std::isfinite(out.params.a) || !std::isfinite(out.params.b) || !std::isfinite(out.rmse)) {
        out.fallback = true;
        out.warning = "a/b fit did not converge; using a = b = 1";
        out.params.a = 1.0;
        out.params.b = 1.0;
        out.rmse = std::sqrt(internal::ab_sse(curve, 1.0, 1.0) / static_cast<double>(m));
    }
    return out;
}

}

#endif
