#ifndef GDR_KNN_GRAPH_HPP
#define GDR_KNN_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"

namespace gdr {

/**
 * k nearest neighbors per point, row-major (`n` rows of `k` entries).
 * Distances are Euclidean and ascending within each row; ties are ordered by
 * neighbor index.
 */
struct NeighborGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> indices;
    std::vector<double> distances;

    std::span<const std::size_t> neighbors(std::size_t i) const {
        return std::span<const std::size_t>(indices.data() + i * k, k);
    }

    std::span<const double> row_distances(std::size_t i) const {
        return std::span<const double>(distances.data() + i * k, k);
    }

    /// True if every row is self-free, in range, finite and sorted.
    bool valid() const {
        if (indices.size() != n * k || distances.size() != n * k) {
            return false;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < k; ++s) {
                const auto j = indices[i * k + s];
                const auto d = distances[i * k + s];
                if (j == i || j >= n || !std::isfinite(d) || d < 0) {
                    return false;
                }
                if (s > 0 && distances[i * k + s - 1] > d) {
                    return false;
                }
            }
        }
        return true;
    }
};

namespace internal {

inline void check_k(std::size_t n, std::size_t k) {
    if (k < 1 || k >= n) {
        throw std::invalid_argument("k must satisfy 1 <= k < n (k=" + std::to_string(k) +
                                    ", n=" + std::to_string(n) + ")");
    }
}

}

/**
 * Brute-force kNN. Rows are computed independently, so the result does not
 * depend on `threads`.
 */
inline NeighborGraph knn_exact(const DataMatrix& data, std::size_t k, int threads = 1) {
    internal::check_k(data.n, k);
    const std::size_t n = data.n;
    NeighborGraph out{n, k, std::vector<std::size_t>(n * k), std::vector<double>(n * k)};

    parallel_for(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n - 1);
        for (std::size_t i = begin; i < end; ++i) {
            cand.clear();
            const double* xi = data.values.data() + i * data.dim;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    cand.emplace_back(squared_distance(xi, data.values.data() + j * data.dim, data.dim), j);
                }
            }
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            for (std::size_t s = 0; s < k; ++s) {
                out.indices[i * k + s] = cand[s].second;
                out.distances[i * k + s] = std::sqrt(cand[s].first);
            }
        }
    });
    return out;
}

struct DescentOptions {
    std::size_t iters = 10;
    double sample_rate = 0.5;
    /// Stop once a round makes fewer than delta * n * k updates.
    double delta = 0.001;
    std::uint64_t seed = 0;
};

namespace internal {

/**
 * Fixed-size max-heap of (squared distance, index) with a "new" flag per
 * entry, one per point.
 */
class CandidateHeaps {
public:
    CandidateHeaps(std::size_t n, std::size_t k)
        : k_(k), dist_(n * k, std::numeric_limits<double>::infinity()), idx_(n * k, n), fresh_(n * k, 0) {}

    bool push(std::size_t row, double d2, std::size_t j) {
        double* d = dist_.data() + row * k_;
        std::size_t* id = idx_.data() + row * k_;
        if (!less(d2, j, d[0], id[0])) {
            return false;
        }
        for (std::size_t s = 0; s < k_; ++s) {
            if (id[s] == j) {
                return false;
            }
        }
        std::uint8_t* f = fresh_.data() + row * k_;
        d[0] = d2;
        id[0] = j;
        f[0] = 1;
        sift_down(d, id, f);
        return true;
    }

    std::size_t index(std::size_t row, std::size_t s) const { return idx_[row * k_ + s]; }
    double dist2(std::size_t row, std::size_t s) const { return dist_[row * k_ + s]; }
    std::uint8_t& fresh(std::size_t row, std::size_t s) { return fresh_[row * k_ + s]; }

private:
    static bool less(double da, std::size_t ia, double db, std::size_t ib) {
        return da < db || (da == db && ia < ib);
    }

    void sift_down(double* d, std::size_t* id, std::uint8_t* f) const {
        std::size_t pos = 0;
        while (true) {
            const std::size_t l = 2 * pos + 1;
            const std::size_t r = l + 1;
            std::size_t top = pos;
            if (l < k_ && less(d[top], id[top], d[l], id[l])) {
                top = l;
            }
            if (r < k_ && less(d[top], id[top], d[r], id[r])) {
                top = r;
            }
            if (top == pos) {
                return;
            }
            std::swap(d[pos], d[top]);
            std::swap(id[pos], id[top]);
            std::swap(f[pos], f[top]);
            pos = top;
        }
    }

    std::size_t k_;
    std::vector<double> dist_;
    std::vector<std::size_t> idx_;
    std::vector<std::uint8_t> fresh_;
};

inline void sample_down(std::vector<std::size_t>& v, std::size_t cap, Rng& rng) {
    if (v.size() <= cap) {
        return;
    }
    for (std::size_t s = 0; s < cap; ++s) {
        const std::size_t pick = s + rng.below(v.size() - s);
        std::swap(v[s], v[pick]);
    }
    v.resize(cap);
}

}

/**
 * Approximate kNN by nearest-neighbor descent: random initial graph, then
 * rounds of local joins over neighbors-of-neighbors (forward and reverse),
 * with at most ceil(sample_rate * 2k) new candidates per point per round.
 *
 * Deterministic for a fixed seed. Returned distances are exact for the
 * neighbors found.
 */
inline NeighborGraph knn_descent(const DataMatrix& data, std::size_t k, const DescentOptions& opt = {}) {
    internal::check_k(data.n, k);
    const std::size_t n = data.n;
    if (n <= k + 1) {
        return knn_exact(data, k);
    }

    const auto dist2 = [&](std::size_t a, std::size_t b) {
        return squared_distance(data.values.data() + a * data.dim, data.values.data() + b * data.dim, data.dim);
    };

    // The search keeps a 2k pool per point and returns its k best; a pool of
    // exactly k stalls well short of the true graph in high dimension.
    const std::size_t pool = std::min(n - 1, 2 * k);
    Rng rng(opt.seed);
    internal::CandidateHeaps heaps(n, pool);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t added = 0;
        while (added < pool) {
            std::size_t j = rng.below(n - 1);
            if (j >= i) {
                ++j;
            }
            if (heaps.push(i, dist2(i, j), j)) {
                ++added;
            }
        }
    }

    const std::size_t cap = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt.sample_rate * pool)));
    std::vector<std::vector<std::size_t>> fresh(n), stale(n), rev_fresh(n), rev_stale(n);

    for (std::size_t it = 0; it < opt.iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            fresh[i].clear();
            stale[i].clear();
            rev_fresh[i].clear();
            rev_stale[i].clear();
        }

        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::size_t> fresh_slots;
            for (std::size_t s = 0; s < pool; ++s) {
                if (heaps.fresh(i, s)) {
                    fresh_slots.push_back(s);
                } else {
                    stale[i].push_back(heaps.index(i, s));
                }
            }
            internal::sample_down(fresh_slots, cap, rng);
            for (auto s : fresh_slots) {
                fresh[i].push_back(heaps.index(i, s));
                heaps.fresh(i, s) = 0;
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            for (auto u : fresh[i]) {
                rev_fresh[u].push_back(i);
            }
            for (auto u : stale[i]) {
                rev_stale[u].push_back(i);
            }
        }

        std::size_t updates = 0;
        std::vector<std::size_t> all_fresh, all_stale;
        for (std::size_t v = 0; v < n; ++v) {
            internal::sample_down(rev_fresh[v], cap, rng);
            internal::sample_down(rev_stale[v], cap, rng);

            all_fresh = fresh[v];
            all_fresh.insert(all_fresh.end(), rev_fresh[v].begin(), rev_fresh[v].end());
            std::sort(all_fresh.begin(), all_fresh.end());
            all_fresh.erase(std::unique(all_fresh.begin(), all_fresh.end()), all_fresh.end());

            all_stale = stale[v];
            all_stale.insert(all_stale.end(), rev_stale[v].begin(), rev_stale[v].end());
            std::sort(all_stale.begin(), all_stale.end());
            all_stale.erase(std::unique(all_stale.begin(), all_stale.end()), all_stale.end());

            for (std::size_t a = 0; a < all_fresh.size(); ++a) {
                const std::size_t u1 = all_fresh[a];
                for (std::size_t b = a + 1; b < all_fresh.size(); ++b) {
                    const std::size_t u2 = all_fresh[b];
                    const double d = dist2(u1, u2);
                    updates += heaps.push(u1, d, u2);
                    updates += heaps.push(u2, d, u1);
                }
                for (auto u2 : all_stale) {
                    if (u2 == u1) {
                        continue;
                    }
                    const double d = dist2(u1, u2);
                    updates += heaps.push(u1, d, u2);
                    updates += heaps.push(u2, d, u1);
                }
            }
        }

        if (static_cast<double>(updates) < opt.delta * static_cast<double>(n * pool)) {
            break;
        }
    }

    NeighborGraph out{n, k, std::vector<std::size_t>(n * k), std::vector<double>(n * k)};
    std::vector<std::pair<double, std::size_t>> row(pool);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < pool; ++s) {
            row[s] = {heaps.dist2(i, s), heaps.index(i, s)};
        }
        std::sort(row.begin(), row.end());
        for (std::size_t s = 0; s < k; ++s) {
            out.indices[i * k + s] = row[s].second;
            out.distances[i * k + s] = std::sqrt(row[s].first);
        }
    }
    return out;
}

/// Fraction of `truth`'s edges that also appear in `approx` (same n and k).
inline double knn_recall(const NeighborGraph& approx, const NeighborGraph& truth) {
    if (approx.n != truth.n || approx.k != truth.k) {
        throw std::invalid_argument("recall needs graphs of equal shape");
    }
    std::size_t hits = 0;
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < truth.n; ++i) {
        a.assign(approx.neighbors(i).begin(), approx.neighbors(i).end());
        b.assign(truth.neighbors(i).begin(), truth.neighbors(i).end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::size_t> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        hits += common.size();
    }
    return static_cast<double>(hits) / static_cast<double>(truth.n * truth.k);
}

}

#endif
