#ifndef GDR_SPECTRAL_HPP
#define GDR_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "affinity.hpp"
#include "common.hpp"
#include "embedding.hpp"

namespace gdr {

/// Coordinate standard deviation shared by both initializations.
constexpr double init_scale = 1e-2;

/// I.i.d. Gaussian coordinates with standard deviation `scale`.
inline EmbeddingState init_random(std::size_t n, std::size_t dim, std::uint64_t seed, double scale = init_scale) {
    if (n < 2) {
        throw std::invalid_argument("initialization needs n >= 2");
    }
    EmbeddingState state(n, dim);
    Rng rng(seed);
    for (std::size_t i = 0; i < state.coords.size(); i += 2) {
        // Box-Muller, two normals per pair of uniforms.
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        state.coords[i] = scale * r * std::cos(2.0 * M_PI * u2);
        if (i + 1 < state.coords.size()) {
            state.coords[i + 1] = scale * r * std::sin(2.0 * M_PI * u2);
        }
    }
    return state;
}

struct SpectralInit {
    EmbeddingState state;
    /// Component id of each point, components numbered by decreasing size.
    std::vector<std::size_t> component;
    std::size_t components = 0;
    bool fallback = false;
    std::vector<std::string> warnings;
};

namespace internal {

struct Adjacency {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> targets;
    std::vector<double> weights;
};

inline Adjacency adjacency(const AffinityGraph& P) {
    const auto d = directed_edges(P);
    return {d.offsets, d.targets, d.weights};
}

inline std::vector<std::size_t> connected_components(const Adjacency& A, std::size_t n, std::size_t& count) {
    std::vector<std::size_t> comp(n, n);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> sizes;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] != n) {
            continue;
        }
        const std::size_t id = sizes.size();
        sizes.push_back(0);
        comp[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            ++sizes[id];
            for (std::size_t e = A.offsets[u]; e < A.offsets[u + 1]; ++e) {
                const std::size_t v = A.targets[e];
                if (comp[v] == n) {
                    comp[v] = id;
                    stack.push_back(v);
                }
            }
        }
    }
    // Renumber by decreasing size, ties by first appearance.
    std::vector<std::size_t> order(sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
    std::vector<std::size_t> rank(sizes.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank[order[r]] = r;
    }
    for (auto& c : comp) {
        c = rank[c];
    }
    count = sizes.size();
    return comp;
}

/// Makes the largest-magnitude entry of each column positive.
inline void fix_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
        Eigen::Index at = 0;
        vecs.col(c).cwiseAbs().maxCoeff(&at);
        if (vecs(at, c) < 0) {
            vecs.col(c) *= -1.0;
        }
    }
}

/**
 * Eigenvectors 2..dim+1 of L = I - D^-1/2 W D^-1/2 on one connected component
 * given by `members` (with `local` the inverse map). Returns m x dim.
 */
inline Eigen::MatrixXd component_dense(const Adjacency& A, const std::vector<std::size_t>& members,
                                       const std::vector<std::size_t>& local, std::size_t dim) {
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        const std::size_t u = members[a];
        for (std::size_t e = A.offsets[u]; e < A.offsets[u + 1]; ++e) {
            W(a, static_cast<Eigen::Index>(local[A.targets[e]])) = A.weights[e];
        }
    }
    const Eigen::VectorXd inv_sqrt = W.rowwise().sum().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd L = -(inv_sqrt.asDiagonal() * W * inv_sqrt.asDiagonal());
    L.diagonal().array() += 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("dense eigensolver did not converge");
    }
    Eigen::MatrixXd out = solver.eigenvectors().middleCols(1, static_cast<Eigen::Index>(dim));
    fix_signs(out);
    return out;
}

/**
 * Same subspace via Lanczos with full reorthogonalization on
 * M = I + D^-1/2 W D^-1/2, whose largest eigenvalues are the smallest of L.
 * The known top eigenvector sqrt(deg) is projected out of the Krylov space.
 */
inline Eigen::MatrixXd component_lanczos(const Adjacency& A, const std::vector<std::size_t>& members,
                                         const std::vector<std::size_t>& local, std::size_t dim,
                                         std::uint64_t seed, std::size_t max_steps) {
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::VectorXd deg(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        const std::size_t u = members[a];
        double s = 0;
        for (std::size_t e = A.offsets[u]; e < A.offsets[u + 1]; ++e) {
            s += A.weights[e];
        }
        deg(a) = s;
    }
    const Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
    const Eigen::VectorXd top = deg.cwiseSqrt().normalized();

    auto apply = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd y = x;
        for (Eigen::Index a = 0; a < m; ++a) {
            const std::size_t u = members[a];
            double s = 0;
            for (std::size_t e = A.offsets[u]; e < A.offsets[u + 1]; ++e) {
                const auto b = static_cast<Eigen::Index>(local[A.targets[e]]);
                s += A.weights[e] * inv_sqrt(b) * x(b);
            }
            y(a) += inv_sqrt(a) * s;
        }
        return y;
    };

    const auto steps = static_cast<Eigen::Index>(std::min<std::size_t>(max_steps, members.size() - 1));
    Eigen::MatrixXd V(m, steps);
    Eigen::VectorXd alpha(steps), beta(steps);

    Rng rng(seed);
    Eigen::VectorXd v(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        v(a) = rng.uniform() - 0.5;
    }
    v -= top * top.dot(v);
    v.normalize();

    Eigen::Index used = 0;
    for (Eigen::Index s = 0; s < steps; ++s) {
        V.col(s) = v;
        Eigen::VectorXd w = apply(v);
        alpha(s) = v.dot(w);
        for (int pass = 0; pass < 2; ++pass) {
            w -= top * top.dot(w);
            w -= V.leftCols(s + 1) * (V.leftCols(s + 1).transpose() * w);
        }
        used = s + 1;
        const double b = w.norm();
        beta(s) = b;
        if (b < 1e-12) {
            break;
        }
        v = w / b;
    }
    if (used < static_cast<Eigen::Index>(dim)) {
        throw std::runtime_error("Krylov space too small for the requested dimensions");
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(used, used);
    for (Eigen::Index s = 0; s < used; ++s) {
        T(s, s) = alpha(s);
        if (s + 1 < used) {
            T(s, s + 1) = T(s + 1, s) = beta(s);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(T);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("tridiagonal eigensolver did not converge");
    }
    // Largest Ritz values come last; take them in decreasing order.
    Eigen::MatrixXd out(m, static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < dim; ++c) {
        out.col(static_cast<Eigen::Index>(c)) =
            V.leftCols(used) * solver.eigenvectors().col(used - 1 - static_cast<Eigen::Index>(c));
        out.col(static_cast<Eigen::Index>(c)).normalize();
    }
    fix_signs(out);
    return out;
}

}

/// Components up to this size use the dense eigensolver.
constexpr std::size_t spectral_dense_limit = 800;
constexpr std::size_t lanczos_steps = 240;

/**
 * Laplacian eigenmap initialization. Every connected component is embedded
 * on its own (components with at most dim + 1 points collapse to one
 * location), scaled to unit max-norm and placed on a grid with spacing 4. The
 * result is centered and rescaled to `init_scale` standard deviation per
 * dimension. If an eigensolver fails, falls back to `init_random` and says so
 * in `warnings`.
 */
inline SpectralInit init_spectral(const AffinityGraph& P, std::size_t dim, std::uint64_t seed = 0) {
    const std::size_t n = P.n;
    if (n < 2) {
        throw std::invalid_argument("initialization needs n >= 2");
    }
    SpectralInit out;
    out.state = EmbeddingState(n, dim);
    const auto A = internal::adjacency(P);
    out.component = internal::connected_components(A, n, out.components);

    std::vector<std::vector<std::size_t>> members(out.components);
    for (std::size_t i = 0; i < n; ++i) {
        members[out.component[i]].push_back(i);
    }
    std::vector<std::size_t> local(n);
    for (const auto& mem : members) {
        for (std::size_t a = 0; a < mem.size(); ++a) {
            local[mem[a]] = a;
        }
    }

    const std::size_t grid_cols =
        dim == 1 ? out.components : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(out.components))));
    constexpr double spacing = 4.0;

    try {
        for (std::size_t c = 0; c < out.components; ++c) {
            const auto& mem = members[c];
            Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mem.size()), static_cast<Eigen::Index>(dim));
            if (mem.size() > dim + 1) {
                coords = mem.size() <= spectral_dense_limit
                             ? internal::component_dense(A, mem, local, dim)
                             : internal::component_lanczos(A, mem, local, dim, seed + c, lanczos_steps);
                coords.rowwise() -= coords.colwise().mean();
                const double extent = coords.cwiseAbs().maxCoeff();
                if (extent > 0) {
                    coords /= extent;
                }
            }
            double offset[3] = {0, 0, 0};
            offset[0] = spacing * static_cast<double>(c % grid_cols);
            if (dim > 1) {
                offset[1] = spacing * static_cast<double>(c / grid_cols);
            }
            for (std::size_t a = 0; a < mem.size(); ++a) {
                for (std::size_t d = 0; d < dim; ++d) {
                    out.state.coords[mem[a] * dim + d] = coords(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(d)) + offset[d];
                }
            }
        }
    } catch (const std::exception& e) {
        SpectralInit fb;
        fb.state = init_random(n, dim, seed);
        fb.component = std::move(out.component);
        fb.components = out.components;
        fb.fallback = true;
        fb.warnings.push_back(std::string("spectral initialization failed (") + e.what() + "); using random init");
        return fb;
    }

    if (out.components > 1) {
        out.warnings.push_back("affinity graph has " + std::to_string(out.components) +
                               " connected components; embedded separately on a grid");
    }
    for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += out.state.coords[i * dim + d];
        }
        mean /= static_cast<double>(n);
        double var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double& x = out.state.coords[i * dim + d];
            x -= mean;
            var += x * x;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        if (sd > 0) {
            for (std::size_t i = 0; i < n; ++i) {
                out.state.coords[i * dim + d] *= init_scale / sd;
            }
        } else {
            out.warnings.push_back("spectral coordinates are constant along dimension " + std::to_string(d));
        }
    }
    return out;
}

}

#endif
