#ifndef GDR_AFFINITY_HPP
#define GDR_AFFINITY_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "common.hpp"
#include "knn_graph.hpp"

namespace gdr {

enum class KernelMode { gaussian_perplexity, umap_exponential };

enum class Symmetrization { average, fuzzy_union };

/**
 * Outcome of a per-row bisection. `clamped` flags rows whose target could not
 * be reached; `value` is then the clamp (or bracket midpoint) rather than a
 * root.
 */
struct Calibration {
    double value = 1.0;
    bool clamped = false;
    double residual = 0.0;
    int iterations = 0;
};

namespace internal {

constexpr double bracket_lo = 1e-12;
constexpr double bracket_hi = 1e12;
constexpr int max_bisections = 200;
constexpr double calibration_tol = 1e-5;
/// Bisection keeps going past calibration_tol down to this residual.
constexpr double solve_tol = 1e-13;

/**
 * Perplexity (2^H) of p_j proportional to exp(-d_j^2 / (2 sigma^2)).
 * Distances are shifted by their minimum for stability, which leaves the
 * normalized distribution unchanged.
 */
inline double gaussian_perplexity(std::span<const double> d, double sigma) {
    double dmin = std::numeric_limits<double>::infinity();
    for (double x : d) {
        dmin = std::min(dmin, x);
    }
    const double beta = 1.0 / (2.0 * sigma * sigma);
    double sum = 0, weighted = 0;
    for (double x : d) {
        // (x - dmin)(x + dmin) is exactly 0 at the minimum, even under FMA contraction.
        const double e = (x - dmin) * (x + dmin) * beta;
        const double w = std::exp(-e);
        sum += w;
        weighted += w * e;
    }
    const double entropy_nats = std::log(sum) + weighted / sum;
    return std::exp(entropy_nats);
}

inline double exponential_mass(std::span<const double> d, double rho, double tau) {
    double sum = 0;
    for (double x : d) {
        sum += std::exp(-std::max(0.0, x - rho) / tau);
    }
    return sum;
}

}

/**
 * Gaussian bandwidth for one row: bisection on log(sigma). The row counts as
 * calibrated when |2^H - perplexity| / perplexity < 1e-5; the search itself
 * runs to near machine precision. The search runs on distances
 * divided by the row maximum, so scaling every distance by c scales sigma by
 * c (bit-exactly when c is a power of two).
 */
inline Calibration calibrate_sigma(std::span<const double> distances, double perplexity) {
    Calibration out;
    const std::size_t k = distances.size();
    if (k == 0) {
        out.clamped = true;
        return out;
    }

    double dmax = 0, dmin = std::numeric_limits<double>::infinity();
    for (double x : distances) {
        dmax = std::max(dmax, x);
        dmin = std::min(dmin, x);
    }
    if (dmax == dmin) {
        // Any sigma gives a uniform row; perplexity is k whatever we pick.
        out.clamped = true;
        out.value = std::sqrt(internal::bracket_lo * internal::bracket_hi) * (dmax > 0 ? dmax : 1.0);
        out.residual = std::abs(static_cast<double>(k) - perplexity) / perplexity;
        return out;
    }

    std::vector<double> scaled(distances.begin(), distances.end());
    for (auto& x : scaled) {
        x /= dmax;
    }

    double lo = std::log(internal::bracket_lo), hi = std::log(internal::bracket_hi);
    const double perp_lo = internal::gaussian_perplexity(scaled, internal::bracket_lo);
    const double perp_hi = internal::gaussian_perplexity(scaled, internal::bracket_hi);
    if (!(perplexity > perp_lo) || !(perplexity < perp_hi)) {
        out.clamped = true;
        const bool low = !(perplexity > perp_lo);
        out.value = (low ? internal::bracket_lo : internal::bracket_hi) * dmax;
        out.residual = std::abs((low ? perp_lo : perp_hi) - perplexity) / perplexity;
        return out;
    }

    double mid = 0, perp = 0;
    for (int it = 0; it < internal::max_bisections; ++it) {
        mid = 0.5 * (lo + hi);
        perp = internal::gaussian_perplexity(scaled, std::exp(mid));
        out.iterations = it + 1;
        if (std::abs(perp - perplexity) / perplexity < internal::solve_tol || hi - lo < 1e-15) {
            break;
        }
        if (perp < perplexity) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.value = std::exp(mid) * dmax;
    out.residual = std::abs(perp - perplexity) / perplexity;
    out.clamped = !(out.residual < internal::calibration_tol);
    return out;
}

/**
 * Exponential-kernel scale for one row: bisection on log(tau) on
 * sum_j exp(-max(0, d_j - rho) / tau) = log2(k), calibrated when within 1e-5.
 * Pass rho = 0 for plain distances.
 */
inline Calibration calibrate_tau(std::span<const double> distances, double rho, std::size_t k) {
    Calibration out;
    if (k < 2 || distances.empty()) {
        out.clamped = true;
        return out;
    }
    const double target = std::log2(static_cast<double>(k));

    double smax = 0;
    std::size_t at_rho = 0;
    for (double x : distances) {
        const double s = std::max(0.0, x - rho);
        smax = std::max(smax, s);
        at_rho += (s == 0);
    }
    if (static_cast<double>(at_rho) >= target || smax == 0 ||
        static_cast<double>(distances.size()) <= target) {
        out.clamped = true;
        out.value = std::sqrt(internal::bracket_lo * internal::bracket_hi) * (smax > 0 ? smax : 1.0);
        out.residual = std::abs(internal::exponential_mass(distances, rho, out.value) - target);
        return out;
    }

    std::vector<double> shifted(distances.size());
    for (std::size_t j = 0; j < distances.size(); ++j) {
        shifted[j] = std::max(0.0, distances[j] - rho) / smax;
    }

    double lo = std::log(internal::bracket_lo), hi = std::log(internal::bracket_hi);
    double mid = 0, mass = 0;
    for (int it = 0; it < internal::max_bisections; ++it) {
        mid = 0.5 * (lo + hi);
        mass = internal::exponential_mass(shifted, 0.0, std::exp(mid));
        out.iterations = it + 1;
        if (std::abs(mass - target) < internal::solve_tol || hi - lo < 1e-15) {
            break;
        }
        if (mass < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.value = std::exp(mid) * smax;
    out.residual = std::abs(mass - target);
    out.clamped = !(out.residual < internal::calibration_tol);
    return out;
}

/**
 * Per-point kernel parameters. `sigma` is filled in Gaussian mode, `tau` in
 * exponential mode; `rho` holds each row's nearest distance when the
 * pseudo-distance is on (zeros otherwise).
 */
struct KernelParams {
    KernelMode mode = KernelMode::umap_exponential;
    double perplexity = 30.0;
    bool pseudo_distance = true;
    std::vector<double> sigma;
    std::vector<double> tau;
    std::vector<double> rho;
    std::vector<char> clamped;
    std::vector<double> residual;

    std::size_t clamped_count() const {
        return static_cast<std::size_t>(std::count(clamped.begin(), clamped.end(), 1));
    }
};

inline KernelParams calibrate_kernel(const NeighborGraph& graph, KernelMode mode, bool pseudo_distance,
                                     double perplexity = 30.0, int threads = 1) {
    KernelParams params;
    params.mode = mode;
    params.perplexity = perplexity;
    params.pseudo_distance = pseudo_distance;
    params.rho.assign(graph.n, 0.0);
    params.clamped.assign(graph.n, 0);
    params.residual.assign(graph.n, 0.0);
    if (mode == KernelMode::gaussian_perplexity) {
        params.sigma.assign(graph.n, 1.0);
    } else {
        params.tau.assign(graph.n, 1.0);
    }

    parallel_for(graph.n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<double> shifted(graph.k);
        for (std::size_t i = begin; i < end; ++i) {
            auto d = graph.row_distances(i);
            const double rho = pseudo_distance ? d[0] : 0.0;
            params.rho[i] = rho;
            Calibration cal;
            if (mode == KernelMode::gaussian_perplexity) {
                for (std::size_t s = 0; s < d.size(); ++s) {
                    shifted[s] = d[s] - rho;
                }
                cal = calibrate_sigma(shifted, perplexity);
                params.sigma[i] = cal.value;
            } else {
                cal = calibrate_tau(d, rho, graph.k);
                params.tau[i] = cal.value;
            }
            params.clamped[i] = cal.clamped ? 1 : 0;
            params.residual[i] = cal.residual;
        }
    });
    return params;
}

/// Directed weights p_{j|i}, aligned with the neighbor graph's layout.
struct DirectedAffinities {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> indices;
    std::vector<double> weights;
};

/**
 * Gaussian mode gives the unnormalized numerators exp(-s^2 / (2 sigma_i^2));
 * exponential mode gives exp(-s / tau_i). Here s = d - rho_i with the
 * pseudo-distance, d otherwise. Weights are floored at the smallest normal
 * double so they stay in (0, 1].
 */
inline DirectedAffinities directed_affinities(const NeighborGraph& graph, const KernelParams& params) {
    DirectedAffinities out{graph.n, graph.k, graph.indices, std::vector<double>(graph.n * graph.k)};
    for (std::size_t i = 0; i < graph.n; ++i) {
        auto d = graph.row_distances(i);
        const double rho = params.pseudo_distance ? params.rho[i] : 0.0;
        for (std::size_t s = 0; s < graph.k; ++s) {
            const double shifted = std::max(0.0, d[s] - rho);
            double w;
            if (params.mode == KernelMode::gaussian_perplexity) {
                const double sigma = params.sigma[i];
                w = std::exp(-(shifted * shifted) / (2.0 * sigma * sigma));
            } else {
                w = std::exp(-shifted / params.tau[i]);
            }
            out.weights[i * graph.k + s] = std::clamp(w, std::numeric_limits<double>::min(), 1.0);
        }
    }
    return out;
}

/// One undirected edge, i < j.
struct Edge {
    std::size_t i;
    std::size_t j;
    double p;
};

/**
 * Symmetric sparse affinities, stored once per unordered pair and sorted by
 * (i, j). `p_sum` counts every edge twice (both ordered pairs), so p / p_sum
 * sums to one over all ordered pairs.
 */
struct AffinityGraph {
    std::size_t n = 0;
    std::vector<Edge> edges;
    double p_sum = 0;
    double p_mean = 0;

    void refresh_totals() {
        double s = 0;
        for (const auto& e : edges) {
            s += e.p;
        }
        p_sum = 2.0 * s;
        p_mean = edges.empty() ? 0.0 : s / static_cast<double>(edges.size());
    }

    void write_csv(std::ostream& out) const {
        out.precision(17);
        out << "i,j,p\n";
        for (const auto& e : edges) {
            out << e.i << ',' << e.j << ',' << e.p << '\n';
        }
    }
};

/// Below this, a symmetrized weight is dropped from the edge list.
constexpr double min_edge_weight = 1e-12;

inline double symmetrize_pair(double forward, double backward, Symmetrization mode) {
    if (mode == Symmetrization::average) {
        return 0.5 * (forward + backward);
    }
    return forward + backward - forward * backward;
}

/**
 * Combine p_{j|i} and p_{i|j}; a reverse edge missing from the kNN graph
 * counts as 0.
 */
inline AffinityGraph symmetrize(const DirectedAffinities& directed, Symmetrization mode) {
    struct Half {
        std::size_t lo, hi;
        double w;
        bool forward;
    };
    std::vector<Half> halves;
    halves.reserve(directed.n * directed.k);
    for (std::size_t i = 0; i < directed.n; ++i) {
        for (std::size_t s = 0; s < directed.k; ++s) {
            const std::size_t j = directed.indices[i * directed.k + s];
            const double w = directed.weights[i * directed.k + s];
            if (j == i) {
                continue;
            }
            halves.push_back({std::min(i, j), std::max(i, j), w, i < j});
        }
    }
    std::sort(halves.begin(), halves.end(), [](const Half& a, const Half& b) {
        return std::tie(a.lo, a.hi, a.forward) < std::tie(b.lo, b.hi, b.forward);
    });

    AffinityGraph out;
    out.n = directed.n;
    for (std::size_t h = 0; h < halves.size();) {
        double fw = 0, bw = 0;
        std::size_t e = h;
        while (e < halves.size() && halves[e].lo == halves[h].lo && halves[e].hi == halves[h].hi) {
            (halves[e].forward ? fw : bw) = halves[e].w;
            ++e;
        }
        const double p = symmetrize_pair(fw, bw, mode);
        if (p >= min_edge_weight) {
            out.edges.push_back({halves[h].lo, halves[h].hi, std::min(p, 1.0)});
        }
        h = e;
    }
    out.refresh_totals();
    return out;
}

/**
 * Adjacency view of an AffinityGraph with both directions of each edge, row
 * by row. `edge[e]` maps back to the undirected edge index.
 */
struct DirectedEdges {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> targets;
    std::vector<double> weights;
    std::vector<std::size_t> edge;

    std::size_t size() const { return targets.size(); }
};

inline DirectedEdges directed_edges(const AffinityGraph& graph) {
    DirectedEdges out;
    out.offsets.assign(graph.n + 1, 0);
    for (const auto& e : graph.edges) {
        ++out.offsets[e.i + 1];
        ++out.offsets[e.j + 1];
    }
    for (std::size_t i = 0; i < graph.n; ++i) {
        out.offsets[i + 1] += out.offsets[i];
    }
    const std::size_t total = out.offsets.back();
    out.targets.resize(total);
    out.weights.resize(total);
    out.edge.resize(total);
    std::vector<std::size_t> fill(out.offsets.begin(), out.offsets.end() - 1);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        const auto& ed = graph.edges[e];
        std::size_t a = fill[ed.i]++;
        out.targets[a] = ed.j;
        out.weights[a] = ed.p;
        out.edge[a] = e;
        std::size_t b = fill[ed.j]++;
        out.targets[b] = ed.i;
        out.weights[b] = ed.p;
        out.edge[b] = e;
    }
    return out;
}

/// Full pipeline from a kNN graph to the symmetric affinity graph.
inline AffinityGraph build_affinities(const NeighborGraph& graph, KernelMode mode, bool pseudo_distance,
                                      Symmetrization sym, double perplexity = 30.0, int threads = 1,
                                      KernelParams* params_out = nullptr) {
    auto params = calibrate_kernel(graph, mode, pseudo_distance, perplexity, threads);
    auto directed = directed_affinities(graph, params);
    auto out = symmetrize(directed, sym);
    if (params_out) {
        *params_out = std::move(params);
    }
    return out;
}

}

#endif
