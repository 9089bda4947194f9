#ifndef GDR_METRICS_HPP
#define GDR_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "embedding.hpp"
#include "gradients.hpp"
#include "lowdim_kernel.hpp"
#include "sampling.hpp"

namespace gdr {

/// Default neighbor count of the kNN classifier, min(100, n / 10) and at least 1.
inline std::size_t default_knn_k(std::size_t n) {
    return std::max<std::size_t>(1, std::min<std::size_t>(100, n / 10));
}

/**
 * Leave-one-out k-NN classification accuracy in percent. Each point gets the
 * majority label among its k nearest other points; ties go to the smallest
 * label. Pass k = 0 for `default_knn_k`.
 */
inline double knn_accuracy(const EmbeddingState& Y, std::span<const std::int64_t> labels, std::size_t k = 0,
                           int threads = 1) {
    const std::size_t n = Y.n, dim = Y.dim;
    if (labels.size() != n) {
        throw std::invalid_argument("knn_accuracy needs one label per point");
    }
    if (k == 0) {
        k = default_knn_k(n);
    }
    if (k < 1 || k >= n) {
        throw std::invalid_argument("knn_accuracy needs 1 <= k < n");
    }
    std::vector<char> correct(n, 0);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::pair<double, std::size_t>> cand(n - 1);
        std::map<std::int64_t, std::size_t> votes;
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t m = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    cand[m++] = {squared_distance(Y.coords.data() + i * dim, Y.coords.data() + j * dim, dim), j};
                }
            }
            std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
            votes.clear();
            for (std::size_t s = 0; s < k; ++s) {
                ++votes[labels[cand[s].second]];
            }
            std::int64_t best = 0;
            std::size_t best_count = 0;
            for (const auto& [label, count] : votes) {
                if (count > best_count) {
                    best = label;
                    best_count = count;
                }
            }
            correct[i] = best == labels[i];
        }
    });
    const auto hits = static_cast<double>(std::count(correct.begin(), correct.end(), 1));
    return 100.0 * hits / static_cast<double>(n);
}

struct VMeasure {
    double homogeneity = 1;
    double completeness = 1;
    /// Harmonic mean of the two.
    double v = 1;
    /// Arithmetic mean of the two.
    double average = 1;
};

/**
 * Homogeneity, completeness and their harmonic mean from the contingency
 * table of the two labelings (natural logs). A 0/0 entropy ratio counts as a
 * perfect score.
 */
inline VMeasure v_measure(std::span<const std::int64_t> labels, std::span<const std::int64_t> clusters) {
    if (labels.size() != clusters.size()) {
        throw std::invalid_argument("v_measure needs labelings of equal length");
    }
    const auto n = static_cast<double>(labels.size());
    VMeasure out;
    if (labels.empty()) {
        return out;
    }
    std::map<std::pair<std::int64_t, std::int64_t>, double> joint;
    std::map<std::int64_t, double> class_count, cluster_count;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        joint[{labels[i], clusters[i]}] += 1;
        class_count[labels[i]] += 1;
        cluster_count[clusters[i]] += 1;
    }
    auto entropy = [n](const std::map<std::int64_t, double>& counts) {
        double h = 0;
        for (const auto& [key, c] : counts) {
            h -= (c / n) * std::log(c / n);
        }
        return h;
    };
    const double h_c = entropy(class_count);
    const double h_k = entropy(cluster_count);
    double h_c_given_k = 0, h_k_given_c = 0;
    for (const auto& [key, c] : joint) {
        h_c_given_k -= (c / n) * std::log(c / cluster_count[key.second]);
        h_k_given_c -= (c / n) * std::log(c / class_count[key.first]);
    }
    out.homogeneity = h_c > 0 ? 1.0 - h_c_given_k / h_c : 1.0;
    out.completeness = h_k > 0 ? 1.0 - h_k_given_c / h_k : 1.0;
    const double s = out.homogeneity + out.completeness;
    out.v = s > 0 ? 2.0 * out.homogeneity * out.completeness / s : 0.0;
    out.average = 0.5 * s;
    return out;
}

struct KMeansResult {
    std::vector<std::int64_t> labels;
    std::vector<double> centroids;
    double sse = 0;
    std::size_t iterations = 0;
};

namespace internal {

inline KMeansResult kmeans_once(const std::vector<double>& X, std::size_t n, std::size_t dim, std::size_t k, Rng& rng,
                                std::size_t max_iter) {
    KMeansResult out;
    out.centroids.assign(k * dim, 0.0);
    // k-means++ seeding.
    std::vector<double> closest(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.below(n);
    std::copy_n(X.data() + first * dim, dim, out.centroids.data());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(X.data() + i * dim, out.centroids.data() + (c - 1) * dim, dim));
            total += closest[i];
        }
        std::size_t pick = n - 1;
        if (total > 0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= closest[i];
                if (target < 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        std::copy_n(X.data() + pick * dim, dim, out.centroids.data() + c * dim);
    }

    out.labels.assign(n, -1);
    std::vector<double> dist(n);
    std::vector<std::size_t> sizes(k);
    for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::int64_t arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(X.data() + i * dim, out.centroids.data() + c * dim, dim);
                if (d < best) {
                    best = d;
                    arg = static_cast<std::int64_t>(c);
                }
            }
            dist[i] = best;
            if (out.labels[i] != arg) {
                out.labels[i] = arg;
                changed = true;
            }
        }
        std::fill(out.centroids.begin(), out.centroids.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(out.labels[i]);
            ++sizes[c];
            for (std::size_t d = 0; d < dim; ++d) {
                out.centroids[c * dim + d] += X[i * dim + d];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                // Reseed an empty cluster at the point farthest from its centroid.
                const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
                std::copy_n(X.data() + far * dim, dim, out.centroids.data() + c * dim);
                dist[far] = 0;
                changed = true;
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d) {
                out.centroids[c * dim + d] /= static_cast<double>(sizes[c]);
            }
        }
        if (!changed) {
            break;
        }
    }
    out.sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out.sse += squared_distance(X.data() + i * dim, out.centroids.data() + static_cast<std::size_t>(out.labels[i]) * dim, dim);
    }
    return out;
}

}

/**
 * Lloyd's algorithm with k-means++ seeding; returns the restart with the
 * smallest within-cluster sum of squares.
 */
inline KMeansResult kmeans(const std::vector<double>& X, std::size_t n, std::size_t dim, std::size_t k,
                           std::uint64_t seed, std::size_t restarts = 10, std::size_t max_iter = 300) {
    if (k < 1 || k > n) {
        throw std::invalid_argument("kmeans needs 1 <= k <= n");
    }
    if (X.size() != n * dim) {
        throw std::invalid_argument("kmeans input has the wrong size");
    }
    KMeansResult best;
    best.sse = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
        Rng rng = Rng::stream(seed, r, 0x6b6dULL);
        auto res = internal::kmeans_once(X, n, dim, k, rng, max_iter);
        if (res.sse < best.sse) {
            best = std::move(res);
        }
    }
    return best;
}

inline KMeansResult kmeans(const EmbeddingState& Y, std::size_t k, std::uint64_t seed, std::size_t restarts = 10) {
    return kmeans(Y.coords, Y.n, Y.dim, k, seed, restarts);
}

struct SpreadRatio {
    /// Inter-centroid over intra-class distance; +inf when the latter is 0.
    double ratio = 0;
    double inter = 0;
    double intra = 0;
    std::vector<std::string> warnings;
};

/**
 * Mean pairwise distance between class centroids divided by the mean over
 * classes of the average point-to-centroid distance.
 */
inline SpreadRatio spread_ratio(const EmbeddingState& Y, std::span<const std::int64_t> labels) {
    const std::size_t n = Y.n, dim = Y.dim;
    if (labels.size() != n) {
        throw std::invalid_argument("spread_ratio needs one label per point");
    }
    std::map<std::int64_t, std::size_t> index;
    for (auto l : labels) {
        index.emplace(l, index.size());
    }
    const std::size_t C = index.size();
    if (C < 2) {
        throw std::invalid_argument("spread_ratio needs at least two classes");
    }
    std::vector<double> centroid(C * dim, 0.0);
    std::vector<std::size_t> size(C, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = index[labels[i]];
        ++size[c];
        for (std::size_t d = 0; d < dim; ++d) {
            centroid[c * dim + d] += Y.coords[i * dim + d];
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t d = 0; d < dim; ++d) {
            centroid[c * dim + d] /= static_cast<double>(size[c]);
        }
    }
    std::vector<double> within(C, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = index[labels[i]];
        within[c] += std::sqrt(squared_distance(Y.coords.data() + i * dim, centroid.data() + c * dim, dim));
    }
    SpreadRatio out;
    for (const auto& [label, c] : index) {
        if (size[c] == 1) {
            out.warnings.push_back("class " + std::to_string(label) + " has a single point");
        }
        out.intra += within[c] / static_cast<double>(size[c]);
    }
    out.intra /= static_cast<double>(C);
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < C; ++a) {
        for (std::size_t b = a + 1; b < C; ++b) {
            out.inter += std::sqrt(squared_distance(centroid.data() + a * dim, centroid.data() + b * dim, dim));
            ++pairs;
        }
    }
    out.inter /= static_cast<double>(pairs);
    out.ratio = out.intra > 0 ? out.inter / out.intra : std::numeric_limits<double>::infinity();
    return out;
}

namespace internal {

/// Ranks starting at 1, ties get their average rank.
inline std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t s = 0; s < order.size();) {
        std::size_t e = s;
        while (e + 1 < order.size() && x[order[e + 1]] == x[order[s]]) {
            ++e;
        }
        const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
        for (std::size_t t = s; t <= e; ++t) {
            r[order[t]] = avg;
        }
        s = e + 1;
    }
    return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("spearman needs two equal-length samples of size >= 2");
    }
    const auto ra = internal::ranks(a);
    const auto rb = internal::ranks(b);
    return internal::pearson(ra, rb);
}

/// Projection of every point onto the first principal axis of Y.
inline std::vector<double> principal_projection(const EmbeddingState& Y) {
    const auto n = static_cast<Eigen::Index>(Y.n), dim = static_cast<Eigen::Index>(Y.dim);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(Y.coords.data(), n, dim);
    const Eigen::MatrixXd centered = M.rowwise() - M.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const Eigen::VectorXd axis = solver.eigenvectors().col(dim - 1);
    const Eigen::VectorXd proj = centered * axis;
    return std::vector<double>(proj.data(), proj.data() + proj.size());
}

struct ManifoldScore {
    double rho = 0;
    double magnitude = 0;
};

/**
 * Spearman correlation between the roll parameter and the position along the
 * embedding's first principal axis. The axis sign is arbitrary, so
 * `magnitude` (|rho|) is the score to compare.
 */
inline ManifoldScore manifold_preservation(const EmbeddingState& Y, std::span<const double> t) {
    if (t.size() != Y.n) {
        throw std::invalid_argument("manifold_preservation needs one parameter value per point");
    }
    ManifoldScore out;
    out.rho = spearman(t, principal_projection(Y));
    out.magnitude = std::abs(out.rho);
    return out;
}

struct AngleAgreement {
    double mean = 0;
    std::size_t used = 0;
    std::size_t skipped = 0;
};

inline double angle_between(const ForceVector& a, const ForceVector& b) {
    double dot = 0;
    for (std::size_t c = 0; c < a.dim; ++c) {
        dot += a.c[c] * b.c[c];
    }
    const double cosine = dot / (a.norm() * b.norm());
    return std::acos(std::clamp(cosine, -1.0, 1.0));
}

/**
 * Mean angle between the exact O(n) repulsion on a point and an O(1)
 * estimate, over `trials` sampled points. The estimate averages `estimates`
 * independent draws of `samples` uniform negatives each (a point in the
 * per-edge engine draws about one negative per edge, i.e. about k per
 * epoch). With n = 2 every estimate is the full set, so the angle is 0.
 */
inline AngleAgreement angle_agreement(const EmbeddingState& Y, const ABParams& ab, const GradientRegime& regime,
                                      std::size_t trials, std::uint64_t seed, std::size_t estimates = 5,
                                      std::size_t samples = 15, double p_bar = 0.0) {
    const std::size_t n = Y.n;
    if (n < 2) {
        throw std::invalid_argument("angle_agreement needs n >= 2");
    }
    RepulsionContext ctx;
    ctx.p_bar = p_bar;
    if (regime.normalized) {
        ctx.Z = normalization_Z(Y, ab);
    }
    AngleAgreement out;
    double total = 0;
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t i = rng.below(n);
        const ForceVector full = full_repulsion(i, Y, ab, regime, ctx);
        ForceVector est;
        est.dim = Y.dim;
        for (std::size_t e = 0; e < estimates; ++e) {
            for (std::size_t s = 0; s < samples; ++s) {
                const auto f = pair_repulsion(i, sample_negative(i, n, rng), Y, ab, regime, ctx);
                for (std::size_t c = 0; c < Y.dim; ++c) {
                    est.c[c] += f.c[c];
                }
            }
        }
        if (!(full.norm() > 0) || !(est.norm() > 0)) {
            ++out.skipped;
            continue;
        }
        total += angle_between(full, est);
        ++out.used;
    }
    out.mean = out.used > 0 ? total / static_cast<double>(out.used) : 0.0;
    return out;
}

/**
 * Monte-Carlo attraction/repulsion magnitude ratios under the i.i.d.
 * displacement model: v ~ N(mu, sigma^2 I) in `dim` dimensions, r = 1/(1+|v|^2).
 */
struct ForceRatioOptions {
    std::size_t c = 15;
    std::size_t draws = 100000;
    std::size_t dim = 2;
    double mean_norm = 3.0;
    double sigma = 1.0;
    /// p^umap as a fraction of the 1/(n^2 + 1) bound.
    double p_umap_fraction = 0.5;
};

struct ForceRatios {
    std::size_t n = 0;
    std::size_t c = 0;
    double p_tsne = 0;
    double p_umap = 0;
    double ratio_full = 0;
    double ratio_sampled = 0;
    double ratio_unnorm = 0;
    /// c * p / n, the closed form as usually stated.
    double closed_form = 0;
    /// c * p * n, what the model's algebra gives when the r's cancel.
    double cancelled_form = 0;
    /// E[r] E[r|v|] / E[r^2 |v|]; 1 when |v| is concentrated.
    double kappa = 0;
    bool sampling_equal = false;
    bool closed_form_match = false;
    bool unnormalized_smaller = false;
};

/**
 * Estimates E|A| / E|R| for the normalized forces with n repulsions per
 * point (`ratio_full`), with one repulsion per point (`ratio_sampled`), and
 * for the unnormalized forces (`ratio_unnorm`), with p^tsne = 1/(c n) and
 * p^umap below 1/(n^2 + 1).
 *
 * Trials draw n displacements each: the full normalizer Z is n^2 E[r] (E[r]
 * from every draw), the one-sample normalizer is the trial's own sum of the n
 * r values.
 */
inline ForceRatios force_ratio_experiment(std::size_t n, std::uint64_t seed, const ForceRatioOptions& opt = {}) {
    if (n < 10) {
        throw std::invalid_argument("force_ratio_experiment needs n >= 10");
    }
    if (opt.dim < 1 || opt.c < 1) {
        throw std::invalid_argument("force_ratio_experiment needs dim >= 1 and c >= 1");
    }
    const std::size_t trials = std::max<std::size_t>(1, opt.draws / n);
    ForceRatios out;
    out.n = n;
    out.c = opt.c;
    const auto nd = static_cast<double>(n);
    out.p_tsne = 1.0 / (static_cast<double>(opt.c) * nd);
    out.p_umap = opt.p_umap_fraction / (nd * nd + 1.0);

    Rng rng(seed);
    auto normal = [&rng]() {
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };

    // Per-draw values |v| and r for all trials, kept to compute E[r] first.
    std::vector<double> norm(trials * n), r(trials * n);
    for (std::size_t s = 0; s < norm.size(); ++s) {
        double sq = 0;
        for (std::size_t d = 0; d < opt.dim; ++d) {
            const double x = (d == 0 ? opt.mean_norm : 0.0) + opt.sigma * normal();
            sq += x * x;
        }
        norm[s] = std::sqrt(sq);
        r[s] = 1.0 / (1.0 + sq);
    }
    double mean_r = 0, mean_rv = 0, mean_r2v = 0;
    for (std::size_t s = 0; s < norm.size(); ++s) {
        mean_r += r[s];
        mean_rv += r[s] * norm[s];
        mean_r2v += r[s] * r[s] * norm[s];
    }
    const auto total = static_cast<double>(norm.size());
    mean_r /= total;
    mean_rv /= total;
    mean_r2v /= total;
    out.kappa = mean_r * mean_rv / mean_r2v;
    const double Z = nd * nd * mean_r;

    const double c = static_cast<double>(opt.c);
    double A = 0, R = 0, At = 0, Rt = 0, Au = 0, Ru = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const double* rv = r.data() + t * n;
        const double* nv = norm.data() + t * n;
        double Zt = 0;
        for (std::size_t j = 0; j < n; ++j) {
            Zt += rv[j];
        }
        double a = 0, rep = 0, at = 0, rt = 0, au = 0, ru = 0;
        for (std::size_t j = 0; j < n; ++j) {
            a += c * out.p_tsne * rv[j] * nv[j] / Z;
            rep += rv[j] * rv[j] * nv[j] / (Z * Z);
            at += c * out.p_tsne * rv[j] * nv[j] / Zt;
            rt += rv[j] * rv[j] * nv[j] / (Zt * Zt);
            au += out.p_umap * rv[j] * nv[j];
            ru += (1.0 - out.p_umap) * rv[j] * rv[j] / (1.0 - rv[j]) * nv[j];
        }
        // One attraction pair / one repulsion sample per point: average over j.
        A += a / nd;
        R += rep;
        At += at / nd;
        Rt += rt / nd;
        Au += au / nd;
        Ru += ru / nd;
    }
    out.ratio_full = A / R;
    out.ratio_sampled = At / Rt;
    out.ratio_unnorm = Au / Ru;
    out.closed_form = c * out.p_tsne / nd;
    out.cancelled_form = c * out.p_tsne * nd;

    const double q = out.ratio_full / out.ratio_sampled;
    out.sampling_equal = q >= 0.9 && q <= 1.1;
    auto within = [](double x, double target) { return std::abs(x - target) <= 0.1 * std::abs(target); };
    out.closed_form_match = within(out.ratio_full, out.closed_form) && within(out.ratio_sampled, out.closed_form);
    out.unnormalized_smaller = out.ratio_unnorm < out.ratio_sampled;
    return out;
}

/// Quality metrics of one labeled embedding. Angle and force-ratio fields are
/// filled by the diagnostics that compute them and stay NaN otherwise.
struct MetricReport {
    double knn_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::size_t knn_k = 0;
    VMeasure v;
    std::size_t clusters = 0;
    SpreadRatio spread;
    double angle_mean = std::numeric_limits<double>::quiet_NaN();
    double force_ratio_normalized = std::numeric_limits<double>::quiet_NaN();
    double force_ratio_unnormalized = std::numeric_limits<double>::quiet_NaN();
};

/**
 * kNN accuracy, V-measure of a k-means clustering with one cluster per class,
 * and the spread ratio. Labels must cover every point.
 */
inline MetricReport evaluate(const EmbeddingState& Y, std::span<const std::int64_t> labels, std::uint64_t seed,
                             int threads = 1) {
    if (labels.size() != Y.n) {
        throw std::invalid_argument("metrics need one label per point");
    }
    MetricReport out;
    out.knn_k = default_knn_k(Y.n);
    out.knn_accuracy = knn_accuracy(Y, labels, out.knn_k, threads);
    std::vector<std::int64_t> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    out.clusters = static_cast<std::size_t>(std::unique(classes.begin(), classes.end()) - classes.begin());
    const auto km = kmeans(Y, std::min(out.clusters, Y.n), seed);
    out.v = v_measure(labels, km.labels);
    if (out.clusters >= 2) {
        out.spread = spread_ratio(Y, labels);
    } else {
        out.spread.ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}

#endif
