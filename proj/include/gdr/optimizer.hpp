#ifndef GDR_OPTIMIZER_HPP
#define GDR_OPTIMIZER_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "embedding.hpp"
#include "gradients.hpp"
#include "knn_graph.hpp"
#include "lowdim_kernel.hpp"
#include "sampling.hpp"
#include "spectral.hpp"

namespace gdr {

enum class Preset { tsne, umap, gdr_tsne, gdr_umap };
enum class InitMode { random, spectral };
enum class ApplyMode { immediate, batched };
enum class LrSchedule { constant, linear_decay };
enum class RepulsionMode { sampled, exact };
enum class KnnMethod { exact, descent };

namespace internal {

template<class Enum, std::size_t N>
using NameTable = std::array<std::pair<Enum, std::string_view>, N>;

inline constexpr NameTable<Preset, 4> preset_names{{
    {Preset::tsne, "tsne"}, {Preset::umap, "umap"}, {Preset::gdr_tsne, "gdr_tsne"}, {Preset::gdr_umap, "gdr_umap"}}};
inline constexpr NameTable<InitMode, 2> init_names{{{InitMode::random, "random"}, {InitMode::spectral, "spectral"}}};
inline constexpr NameTable<ApplyMode, 2> apply_names{{{ApplyMode::immediate, "immediate"}, {ApplyMode::batched, "batched"}}};
inline constexpr NameTable<LrSchedule, 2> schedule_names{
    {{LrSchedule::constant, "constant"}, {LrSchedule::linear_decay, "linear_decay"}}};
inline constexpr NameTable<RepulsionMode, 2> repulsion_names{
    {{RepulsionMode::sampled, "sampled"}, {RepulsionMode::exact, "exact"}}};
inline constexpr NameTable<KnnMethod, 2> knn_names{{{KnnMethod::exact, "exact"}, {KnnMethod::descent, "descent"}}};
inline constexpr NameTable<Symmetrization, 2> sym_names{
    {{Symmetrization::average, "average"}, {Symmetrization::fuzzy_union, "union"}}};
inline constexpr NameTable<KernelMode, 2> kernel_names{
    {{KernelMode::gaussian_perplexity, "gaussian"}, {KernelMode::umap_exponential, "exponential"}}};
inline constexpr NameTable<LossKind, 2> loss_names{{{LossKind::kl, "kl"}, {LossKind::frobenius, "frobenius"}}};
inline constexpr NameTable<AbSource, 2> ab_names{{{AbSource::unit, "unit"}, {AbSource::fitted, "fit"}}};
inline constexpr NameTable<SamplingMode, 2> sampling_names{
    {{SamplingMode::scalar_sampling, "scalar"}, {SamplingMode::per_edge, "per-edge"}}};

template<class Enum, std::size_t N>
std::string_view name_of(const NameTable<Enum, N>& table, Enum value) {
    for (const auto& [e, s] : table) {
        if (e == value) {
            return s;
        }
    }
    return "?";
}

template<class Enum, std::size_t N>
Enum parse_name(const NameTable<Enum, N>& table, std::string_view text, const char* what) {
    for (const auto& [e, s] : table) {
        if (s == text) {
            return e;
        }
    }
    std::string choices;
    for (const auto& entry : table) {
        choices += choices.empty() ? "" : ", ";
        choices += entry.second;
    }
    throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) + "' (expected one of: " + choices + ")");
}

}

inline std::string_view to_string(Preset v) { return internal::name_of(internal::preset_names, v); }
inline std::string_view to_string(InitMode v) { return internal::name_of(internal::init_names, v); }
inline std::string_view to_string(ApplyMode v) { return internal::name_of(internal::apply_names, v); }
inline std::string_view to_string(LrSchedule v) { return internal::name_of(internal::schedule_names, v); }
inline std::string_view to_string(RepulsionMode v) { return internal::name_of(internal::repulsion_names, v); }
inline std::string_view to_string(KnnMethod v) { return internal::name_of(internal::knn_names, v); }
inline std::string_view to_string(Symmetrization v) { return internal::name_of(internal::sym_names, v); }
inline std::string_view to_string(KernelMode v) { return internal::name_of(internal::kernel_names, v); }
inline std::string_view to_string(LossKind v) { return internal::name_of(internal::loss_names, v); }
inline std::string_view to_string(AbSource v) { return internal::name_of(internal::ab_names, v); }
inline std::string_view to_string(SamplingMode v) { return internal::name_of(internal::sampling_names, v); }

inline Preset parse_preset(std::string_view s) { return internal::parse_name(internal::preset_names, s, "preset"); }
inline InitMode parse_init(std::string_view s) { return internal::parse_name(internal::init_names, s, "init"); }
inline ApplyMode parse_apply(std::string_view s) { return internal::parse_name(internal::apply_names, s, "apply mode"); }
inline LrSchedule parse_lr_schedule(std::string_view s) {
    return internal::parse_name(internal::schedule_names, s, "learning-rate schedule");
}
inline RepulsionMode parse_repulsion(std::string_view s) {
    return internal::parse_name(internal::repulsion_names, s, "repulsion mode");
}
inline KnnMethod parse_knn(std::string_view s) { return internal::parse_name(internal::knn_names, s, "kNN method"); }
inline Symmetrization parse_symmetrization(std::string_view s) {
    return internal::parse_name(internal::sym_names, s, "symmetrization");
}
inline KernelMode parse_kernel(std::string_view s) { return internal::parse_name(internal::kernel_names, s, "kernel"); }
inline LossKind parse_loss(std::string_view s) { return internal::parse_name(internal::loss_names, s, "loss"); }
inline AbSource parse_ab(std::string_view s) { return internal::parse_name(internal::ab_names, s, "a/b mode"); }
inline SamplingMode parse_sampling(std::string_view s) {
    return internal::parse_name(internal::sampling_names, s, "sampling mode");
}

/**
 * Everything a run needs. `RunConfig::make(p)` fills in the defaults of each
 * method; individual fields can then be toggled. `momentum` is the late-phase
 * coefficient (0 disables momentum); before `momentum_switch` the smaller of
 * it and 0.5 is used.
 */
struct RunConfig {
    Preset preset = Preset::gdr_umap;
    bool normalized = false;
    InitMode init = InitMode::spectral;
    bool pseudo_distance = true;
    Symmetrization symmetrization = Symmetrization::fuzzy_union;
    bool sym_attraction = false;
    AbSource ab_mode = AbSource::unit;
    double min_dist = 0.1;
    double spread = 1.0;
    SamplingPlan sampling;
    LossKind loss = LossKind::kl;
    ApplyMode apply = ApplyMode::batched;
    double lr = 1.0;
    LrSchedule lr_schedule = LrSchedule::constant;
    double momentum = 0.9;
    bool gains = true;
    std::size_t momentum_switch = 250;
    std::size_t epochs = 500;
    std::uint64_t seed = 0;
    std::size_t dims = 2;

    std::size_t k_neighbors = 15;
    double perplexity = 30.0;
    KernelMode kernel = KernelMode::umap_exponential;
    KnnMethod knn = KnnMethod::descent;
    RepulsionMode repulsion = RepulsionMode::sampled;
    double eps = 1e-3;
    int threads = 1;
    bool unsafe_normalized_scalar_sampling = false;
    /// Loss is recorded every this many epochs; 0 picks epochs / 100.
    std::size_t loss_every = 0;
    /// Exact O(n^2) losses and Z refreshes are used up to this many points.
    std::size_t exact_limit = 2000;

    static RunConfig make(Preset p) {
        RunConfig c;
        c.preset = p;
        switch (p) {
        case Preset::tsne:
            c.normalized = true;
            c.kernel = KernelMode::gaussian_perplexity;
            c.k_neighbors = 90;
            c.knn = KnnMethod::exact;
            c.symmetrization = Symmetrization::average;
            c.pseudo_distance = false;
            c.init = InitMode::random;
            c.sym_attraction = false;
            c.ab_mode = AbSource::unit;
            c.sampling = {SamplingMode::per_edge, 1, false, 0};
            c.apply = ApplyMode::batched;
            c.lr_schedule = LrSchedule::constant;
            c.momentum = 0.9;
            c.gains = true;
            c.repulsion = RepulsionMode::exact;
            c.epochs = 1000;
            break;
        case Preset::umap:
            c.normalized = false;
            c.kernel = KernelMode::umap_exponential;
            c.k_neighbors = 15;
            c.knn = KnnMethod::descent;
            c.symmetrization = Symmetrization::fuzzy_union;
            c.pseudo_distance = true;
            c.init = InitMode::spectral;
            c.sym_attraction = true;
            c.ab_mode = AbSource::fitted;
            c.sampling = {SamplingMode::scalar_sampling, 5, false, 0};
            c.apply = ApplyMode::immediate;
            c.lr_schedule = LrSchedule::linear_decay;
            c.momentum = 0.0;
            c.gains = false;
            c.repulsion = RepulsionMode::sampled;
            c.epochs = 500;
            break;
        case Preset::gdr_tsne:
        case Preset::gdr_umap:
            c.normalized = p == Preset::gdr_tsne;
            c.kernel = KernelMode::umap_exponential;
            c.k_neighbors = 15;
            c.knn = KnnMethod::descent;
            c.symmetrization = Symmetrization::fuzzy_union;
            c.pseudo_distance = true;
            c.init = InitMode::spectral;
            c.sym_attraction = false;
            c.ab_mode = AbSource::unit;
            c.sampling = {SamplingMode::per_edge, 1, false, 0};
            c.apply = ApplyMode::batched;
            c.lr_schedule = LrSchedule::constant;
            c.momentum = c.normalized ? 0.5 : 0.0;
            c.gains = c.normalized;
            c.repulsion = RepulsionMode::sampled;
            c.epochs = c.normalized ? 1000 : 500;
            break;
        }
        return c;
    }

    GradientRegime regime() const {
        return GradientRegime{normalized, loss, sampling.accelerated, eps};
    }

    void validate() const {
        regime().validate();
        sampling.validate();
        if (dims < 1 || dims > 3) {
            throw ConfigError("dims must be 1, 2 or 3");
        }
        if (!(lr > 0) || !std::isfinite(lr)) {
            throw ConfigError("learning rate must be positive");
        }
        if (!(momentum >= 0 && momentum < 1)) {
            throw ConfigError("momentum must lie in [0, 1)");
        }
        if (k_neighbors < 1) {
            throw ConfigError("k_neighbors must be >= 1");
        }
        if (!(perplexity > 0)) {
            throw ConfigError("perplexity must be positive");
        }
        if (!(spread > 0) || !(min_dist >= 0)) {
            throw ConfigError("fit needs spread > 0 and min_dist >= 0");
        }
        if (loss == LossKind::frobenius && ab_mode == AbSource::fitted) {
            throw ConfigError("the Frobenius loss is defined for a = b = 1; use --ab unit");
        }
        if (normalized && sampling.mode == SamplingMode::scalar_sampling && !unsafe_normalized_scalar_sampling) {
            throw ConfigError("normalized optimization with scalar sampling diverges; "
                              "pass --unsafe-normalized-scalar-sampling to run it anyway");
        }
        if (apply == ApplyMode::immediate && momentum > 0) {
            throw ConfigError("momentum needs batched gradient application");
        }
        if (apply == ApplyMode::immediate && gains) {
            throw ConfigError("gains need batched gradient application");
        }
        if (apply == ApplyMode::immediate && repulsion == RepulsionMode::exact) {
            throw ConfigError("exact repulsion needs batched gradient application");
        }
        if (repulsion == RepulsionMode::exact && sampling.mode == SamplingMode::scalar_sampling) {
            throw ConfigError("exact repulsion is not combined with scalar sampling");
        }
        if (threads < 0) {
            throw ConfigError("threads must be >= 0 (0 = all cores)");
        }
    }
};

struct LossPoint {
    std::size_t epoch;
    double loss;
    bool exact;
};

struct PhaseTime {
    std::string phase;
    double seconds;
};

struct RunReport {
    RunConfig config;
    ABParams ab;
    double ab_rmse = 0;
    std::size_t n = 0;
    std::size_t k_used = 0;
    std::size_t edges = 0;
    double p_sum = 0;
    double p_bar = 0;
    double final_Z = 0;
    std::size_t clamped_calibrations = 0;
    int threads = 1;
    std::size_t epochs_run = 0;
    double seconds_per_epoch = 0;
    std::vector<PhaseTime> timings;
    std::vector<LossPoint> loss_trace;
    std::vector<std::string> warnings;
};

/// Learning rate used in a given epoch.
inline double lr_at(double lr, LrSchedule schedule, std::size_t epoch, std::size_t epochs) {
    if (schedule == LrSchedule::linear_decay && epochs > 0) {
        return lr * (1.0 - static_cast<double>(epoch) / static_cast<double>(epochs));
    }
    return lr;
}

inline double momentum_at(const RunConfig& c, std::size_t epoch) {
    return epoch < c.momentum_switch ? std::min(c.momentum, 0.5) : c.momentum;
}

/// Moves one point immediately by lr_epoch * force.
inline void step_immediate(std::span<double> y, const ForceVector& force, double lr_epoch) {
    for (std::size_t c = 0; c < y.size(); ++c) {
        y[c] += lr_epoch * force.c[c];
    }
}

constexpr double gain_increment = 0.2;
constexpr double gain_decay = 0.8;
constexpr double gain_floor = 0.01;

/**
 * Momentum step over all points with per-coordinate gains: a gain grows by 0.2
 * while the gradient opposes the current velocity (consistent descent) and
 * shrinks by 0.8 otherwise, never below 0.01.
 */
inline void step_batched(EmbeddingState& state, std::span<const double> grad, double lr, double momentum,
                         bool use_gains = true) {
    for (std::size_t x = 0; x < state.coords.size(); ++x) {
        if (use_gains) {
            const bool differ = (grad[x] > 0) != (state.velocity[x] > 0);
            double g = differ ? state.gains[x] + gain_increment : state.gains[x] * gain_decay;
            state.gains[x] = std::max(g, gain_floor);
        }
        state.velocity[x] = momentum * state.velocity[x] - lr * state.gains[x] * grad[x];
        state.coords[x] += state.velocity[x];
    }
}

/// Largest coordinate magnitude tolerated before the run is aborted.
constexpr double coordinate_limit = 1e6;

inline void check_finite(const EmbeddingState& state, std::size_t epoch) {
    for (std::size_t x = 0; x < state.coords.size(); ++x) {
        const double v = state.coords[x];
        if (!std::isfinite(v) || std::abs(v) > coordinate_limit) {
            const std::size_t point = x / state.dim;
            throw NumericAbort("coordinate of point " + std::to_string(point) + " became " +
                                   (std::isfinite(v) ? "too large" : "non-finite") + " in epoch " +
                                   std::to_string(epoch),
                               epoch, point);
        }
    }
}

/// Output of the graph-building phases, reusable across optimizer runs.
struct Prepared {
    AffinityGraph P;
    ABParams ab;
    double ab_rmse = 0;
    std::size_t k_used = 0;
    std::size_t clamped = 0;
    EmbeddingState init;
    std::vector<PhaseTime> timings;
    std::vector<std::string> warnings;
};

namespace internal {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/**
 * Per-pair force coefficients for the configured regime, including the
 * sampling multipliers. Every force is coefficient * (y_i - y_other).
 */
struct ForceModel {
    GradientRegime regime;
    ABParams ab;
    SamplingPlan plan;
    std::size_t n = 0;
    double p_sum = 1;
    double p_bar = 0;
    bool unsafe = false;

    bool clipped() const { return !regime.normalized && regime.loss == LossKind::kl; }

    double attraction(double p, double s) const {
        const double q = q_unnormalized(s, ab);
        const double mult = effective_scalars(p, p_bar, plan).attraction;
        if (regime.loss == LossKind::frobenius) {
            return -4.0 * q * q * mult;
        }
        if (regime.normalized) {
            return tsne_coefficients(mult / p_sum, q, 1.0, kernel_slope(s, ab)).attraction;
        }
        return umap_coefficients(mult, q, s, ab, regime.eps, 0.0).attraction;
    }

    /// `scale` is the sampling correction; `Z` is only read when normalized.
    double repulsion(double s, double q, double Z, double scale) const {
        if (regime.loss == LossKind::frobenius) {
            return 4.0 * q * q * q * effective_scalars(0.0, p_bar, plan).repulsion * scale;
        }
        if (regime.normalized) {
            return tsne_coefficients(0.0, q, Z, kernel_slope(s, ab)).repulsion * scale;
        }
        return umap_coefficients(0.0, q, s, ab, regime.eps, effective_scalars(0.0, p_bar, plan).repulsion).repulsion *
               scale;
    }
};

/// Adds coef * (y_i - y_k) to `out`, clipping each coordinate if asked.
inline void add_force(double* out, const double* yi, const double* yk, std::size_t dim, double coef, bool clip,
                      double sign = 1.0) {
    for (std::size_t c = 0; c < dim; ++c) {
        double f = coef * (yi[c] - yk[c]);
        if (clip) {
            f = clip_force(f);
        }
        out[c] += sign * f;
    }
}

/**
 * Loss estimate that stays O(edges + pairs): edge terms are exact, the
 * contribution of all other pairs (and Z) comes from uniformly sampled pairs.
 */
inline double sampled_loss(const AffinityGraph& P, const EmbeddingState& Y, const ABParams& ab,
                           const GradientRegime& regime, double p_bar, Rng rng, std::size_t pairs = 20000) {
    const std::size_t n = Y.n, dim = Y.dim;
    const double total = static_cast<double>(n) * static_cast<double>(n - 1);
    double mean_q = 0, mean_bg = 0;
    for (std::size_t s = 0; s < pairs; ++s) {
        const std::size_t i = rng.below(n);
        const std::size_t k = sample_negative(i, n, rng);
        const double q = q_unnormalized(squared_distance(Y.coords.data() + i * dim, Y.coords.data() + k * dim, dim), ab);
        mean_q += q;
        mean_bg += regime.loss == LossKind::frobenius ? q * q : bernoulli_kl(p_bar, q, kl_floor);
    }
    mean_q /= static_cast<double>(pairs);
    mean_bg /= static_cast<double>(pairs);

    double loss = regime.normalized ? 0.0 : total * mean_bg;
    const double Z = total * mean_q;
    for (const auto& e : P.edges) {
        const double q = q_unnormalized(
            squared_distance(Y.coords.data() + e.i * dim, Y.coords.data() + e.j * dim, dim), ab);
        if (regime.loss == LossKind::frobenius) {
            loss += 2.0 * ((e.p - q) * (e.p - q) - q * q);
        } else if (regime.normalized) {
            const double p_hat = e.p / P.p_sum;
            loss += 2.0 * p_hat * std::log(p_hat * Z / q);
        } else {
            loss += 2.0 * (bernoulli_kl(e.p, q, kl_floor) - bernoulli_kl(p_bar, q, kl_floor));
        }
    }
    return loss;
}

}

/// Called after every epoch with the epoch count so far and the current state.
using EpochObserver = std::function<void(std::size_t, const EmbeddingState&)>;

namespace internal {

/// Buffers owned by one worker during a batched epoch.
struct WorkerScratch {
    std::vector<double> grad;
    std::vector<double> rep;
    std::vector<std::size_t> fired;
    double q_sum = 0;
    std::size_t q_count = 0;
};

class Engine {
public:
    Engine(const AffinityGraph& P, const ABParams& ab, const RunConfig& config, EmbeddingState& state,
           RunReport& report)
        : P_(P), config_(config), Y_(state), report_(report), adj_(directed_edges(P)) {
        model_.regime = config.regime();
        model_.ab = ab;
        model_.plan = config.sampling;
        model_.n = P.n;
        model_.p_sum = P.p_sum > 0 ? P.p_sum : 1.0;
        model_.p_bar = P.p_mean;
        model_.unsafe = config.normalized && config.sampling.mode == SamplingMode::scalar_sampling;
        threads_ = resolve_threads(config.threads);
        lr_ = config.lr;
        if (config.normalized) {
            lr_ *= static_cast<double>(P.n) / static_cast<double>(std::max<std::size_t>(config.k_neighbors, 1));
        }
        if (config.normalized) {
            Z_ = fresh_Z(0);
        }
    }

    void run() {
        const std::size_t E = config_.epochs;
        const std::size_t every = config_.loss_every > 0 ? config_.loss_every : std::max<std::size_t>(1, E / 100);
        record_loss(0);
        const auto t0 = Clock::now();
        for (std::size_t epoch = 0; epoch < E; ++epoch) {
            if (config_.apply == ApplyMode::batched) {
                batched_epoch(epoch);
            } else {
                immediate_epoch(epoch);
            }
            check_finite(Y_, epoch);
            Y_.epoch = epoch + 1;
            if (config_.normalized && config_.repulsion == RepulsionMode::sampled && (epoch + 1) % 50 == 0 &&
                P_.n <= config_.exact_limit) {
                Z_ = exact_Z();
            }
            if ((epoch + 1) % every == 0 || epoch + 1 == E) {
                record_loss(epoch + 1);
            }
            if (observer_) {
                const auto t1 = Clock::now();
                observer_(epoch + 1, Y_);
                observer_seconds_ += seconds_since(t1);
            }
        }
        const double total = seconds_since(t0);
        optimize_seconds_ = total - loss_seconds_ - observer_seconds_;
        report_.epochs_run = E;
        report_.seconds_per_epoch = E > 0 ? optimize_seconds_ / static_cast<double>(E) : 0.0;
        report_.final_Z = config_.normalized ? Z_ : 0.0;
        report_.threads = threads_;
    }

    void set_observer(EpochObserver observer) { observer_ = std::move(observer); }
    double optimize_seconds() const { return optimize_seconds_; }
    double loss_seconds() const { return loss_seconds_; }

private:
    double exact_Z() const { return normalization_Z(Y_, model_.ab); }

    double fresh_Z(std::size_t epoch) const {
        if (P_.n <= config_.exact_limit) {
            return exact_Z();
        }
        Rng rng = Rng::stream(config_.seed, epoch, 0xC0FFEEULL);
        const std::size_t pairs = 50000;
        double s = 0;
        for (std::size_t t = 0; t < pairs; ++t) {
            const std::size_t i = rng.below(P_.n);
            const std::size_t k = sample_negative(i, P_.n, rng);
            s += q_unnormalized(squared_distance(Y_.coords.data() + i * Y_.dim, Y_.coords.data() + k * Y_.dim, Y_.dim),
                                model_.ab);
        }
        return static_cast<double>(P_.n) * static_cast<double>(P_.n - 1) * s / static_cast<double>(pairs);
    }

    void record_loss(std::size_t epoch) {
        const auto t0 = Clock::now();
        const auto regime = model_.regime;
        if (P_.n <= config_.exact_limit) {
            report_.loss_trace.push_back({epoch, dense_loss(P_, Y_, model_.ab, regime, model_.p_bar), true});
        } else {
            const double l = sampled_loss(P_, Y_, model_.ab, regime, model_.p_bar,
                                          Rng::stream(config_.seed, epoch, 0xBADC0DEULL));
            report_.loss_trace.push_back({epoch, l, false});
        }
        loss_seconds_ += seconds_since(t0);
    }

    /// Directed edges of row i that fire in `epoch`.
    void fired_edges(std::size_t i, std::size_t epoch, std::vector<std::size_t>& out) const {
        out.clear();
        const bool strided = config_.sampling.strided();
        for (std::size_t e = adj_.offsets[i]; e < adj_.offsets[i + 1]; ++e) {
            // same rule as the schedule, read from the row-local weight copy
            if (!strided || EdgeSchedule::fires(adj_.weights[e], epoch)) {
                out.push_back(e);
            }
        }
    }

    double sampled_scale(std::size_t draws) const {
        if (!config_.normalized) {
            return 1.0;
        }
        if (model_.unsafe) {
            return 1.0 / std::max(1.0 - model_.p_bar, 1e-12);
        }
        return static_cast<double>(P_.n - 1) / static_cast<double>(draws);
    }

    void batched_epoch(std::size_t epoch) {
        const std::size_t n = P_.n, dim = Y_.dim;
        const bool exact = config_.repulsion == RepulsionMode::exact;
        const bool clip = model_.clipped();
        const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads_), n));
        scratch_.resize(static_cast<std::size_t>(workers));
        for (auto& s : scratch_) {
            s.grad.assign(n * dim, 0.0);
            s.q_sum = 0;
            s.q_count = 0;
        }
        // Exact normalized repulsion is collected unscaled and divided by Z
        // once this epoch's Z is known.
        const double Z = Z_;
        const double* Y = Y_.coords.data();

        parallel_for(n, workers, [&](std::size_t begin, std::size_t end, int w) {
            auto& sc = scratch_[static_cast<std::size_t>(w)];
            double* grad = sc.grad.data();
            for (std::size_t i = begin; i < end; ++i) {
                const double* yi = Y + i * dim;
                fired_edges(i, epoch, sc.fired);
                for (auto e : sc.fired) {
                    const std::size_t j = adj_.targets[e];
                    const double* yj = Y + j * dim;
                    const double coef = model_.attraction(adj_.weights[e], squared_distance(yi, yj, dim));
                    add_force(grad + i * dim, yi, yj, dim, coef, clip, -1.0);
                    if (config_.sym_attraction) {
                        add_force(grad + j * dim, yi, yj, dim, coef, clip, 1.0);
                    }
                }
                const std::size_t draws =
                    exact ? 0 : sc.fired.size() * static_cast<std::size_t>(config_.sampling.neg_samples);
                if (draws == 0) {
                    continue;
                }
                Rng rng = Rng::stream(config_.seed, epoch, i);
                const double scale = sampled_scale(draws);
                for (std::size_t t = 0; t < draws; ++t) {
                    const std::size_t k = sample_negative(i, n, rng);
                    const double* yk = Y + k * dim;
                    const double s = squared_distance(yi, yk, dim);
                    const double q = q_unnormalized(s, model_.ab);
                    sc.q_sum += q;
                    ++sc.q_count;
                    add_force(grad + i * dim, yi, yk, dim, model_.repulsion(s, q, Z, scale), clip, -1.0);
                }
            }
        });

        if (exact) {
            exact_repulsion(workers);
        }

        auto& grad = scratch_[0].grad;
        double q_sum = scratch_[0].q_sum;
        std::size_t q_count = scratch_[0].q_count;
        for (std::size_t w = 1; w < scratch_.size(); ++w) {
            for (std::size_t x = 0; x < grad.size(); ++x) {
                grad[x] += scratch_[w].grad[x];
            }
            if (exact) {
                for (std::size_t x = 0; x < grad.size(); ++x) {
                    repulsion_[x] += scratch_[w].rep[x];
                }
            }
            q_sum += scratch_[w].q_sum;
            q_count += scratch_[w].q_count;
        }
        if (exact) {
            double rep_scale = 1.0;
            if (config_.normalized) {
                Z_ = q_sum;
                rep_scale = 1.0 / Z_;
            }
            for (std::size_t x = 0; x < grad.size(); ++x) {
                grad[x] -= rep_scale * repulsion_[x];
            }
        } else {
            update_Z(q_sum, q_count);
        }

        const double lr = lr_at(lr_, config_.lr_schedule, epoch, config_.epochs);
        step_batched(Y_, grad, lr, momentum_at(config_, epoch), config_.gains);
    }

    /**
     * Sum of the repulsions over all pairs, each unordered pair visited once
     * with equal and opposite contributions. Worker w takes rows w, w + W, ...
     * and writes into its own buffer; worker 0's buffer ends up in
     * `repulsion_`. In the normalized regime the terms are left undivided by Z.
     */
    void exact_repulsion(int workers) {
        const std::size_t n = P_.n, dim = Y_.dim;
        const bool clip = model_.clipped();
        const double scale = config_.normalized ? 1.0 : 1.0 / static_cast<double>(n);
        const double* Y = Y_.coords.data();
        const auto W = static_cast<std::size_t>(workers);
        for (auto& sc : scratch_) {
            sc.rep.assign(n * dim, 0.0);
        }
        parallel_for(W, workers, [&](std::size_t begin, std::size_t end, int) {
            for (std::size_t w = begin; w < end; ++w) {
                auto& sc = scratch_[w];
                double* rep = sc.rep.data();
                for (std::size_t i = w; i < n; i += W) {
                    const double* yi = Y + i * dim;
                    double acc[3] = {0, 0, 0};
                    for (std::size_t k = i + 1; k < n; ++k) {
                        const double* yk = Y + k * dim;
                        const double s = squared_distance(yi, yk, dim);
                        const double q = q_unnormalized(s, model_.ab);
                        sc.q_sum += 2.0 * q;
                        const double coef = model_.repulsion(s, q, 1.0, scale);
                        for (std::size_t c = 0; c < dim; ++c) {
                            double f = coef * (yi[c] - yk[c]);
                            if (clip) {
                                f = clip_force(f);
                            }
                            acc[c] += f;
                            rep[k * dim + c] -= f;
                        }
                    }
                    for (std::size_t c = 0; c < dim; ++c) {
                        rep[i * dim + c] += acc[c];
                    }
                }
            }
        });
        repulsion_.swap(scratch_[0].rep);
    }

    void update_Z(double q_sum, std::size_t q_count) {
        if (!config_.normalized || q_count == 0) {
            return;
        }
        const double estimate =
            static_cast<double>(P_.n) * static_cast<double>(P_.n - 1) * q_sum / static_cast<double>(q_count);
        Z_ = z_smoothing * Z_ + (1.0 - z_smoothing) * estimate;
    }

    void immediate_epoch(std::size_t epoch) {
        const std::size_t n = P_.n, dim = Y_.dim;
        const bool clip = model_.clipped();
        const double lr = lr_at(lr_, config_.lr_schedule, epoch, config_.epochs);
        double* Y = Y_.coords.data();
        std::vector<std::size_t> fired;
        double q_sum = 0;
        std::size_t q_count = 0;
        const double Z = Z_;
        std::array<double, 3> f{};
        for (std::size_t i = 0; i < n; ++i) {
            fired_edges(i, epoch, fired);
            if (fired.empty()) {
                continue;
            }
            Rng rng = Rng::stream(config_.seed, epoch, i);
            double* yi = Y + i * dim;
            const std::size_t draws = fired.size() * static_cast<std::size_t>(config_.sampling.neg_samples);
            const double scale = sampled_scale(draws);
            for (auto e : fired) {
                const std::size_t j = adj_.targets[e];
                double* yj = Y + j * dim;
                f.fill(0.0);
                add_force(f.data(), yi, yj, dim, model_.attraction(adj_.weights[e], squared_distance(yi, yj, dim)), clip);
                for (std::size_t c = 0; c < dim; ++c) {
                    yi[c] += lr * f[c];
                    if (config_.sym_attraction) {
                        yj[c] -= lr * f[c];
                    }
                }
                for (int t = 0; t < config_.sampling.neg_samples; ++t) {
                    const std::size_t k = sample_negative(i, n, rng);
                    const double* yk = Y + k * dim;
                    const double s = squared_distance(yi, yk, dim);
                    const double q = q_unnormalized(s, model_.ab);
                    q_sum += q;
                    ++q_count;
                    f.fill(0.0);
                    add_force(f.data(), yi, yk, dim, model_.repulsion(s, q, Z, scale), clip);
                    for (std::size_t c = 0; c < dim; ++c) {
                        yi[c] += lr * f[c];
                    }
                }
            }
        }
        update_Z(q_sum, q_count);
    }

    static constexpr double z_smoothing = 0.5;

    const AffinityGraph& P_;
    const RunConfig& config_;
    EmbeddingState& Y_;
    RunReport& report_;
    DirectedEdges adj_;
    ForceModel model_;
    int threads_ = 1;
    double lr_ = 1;
    double Z_ = 1;
    double optimize_seconds_ = 0;
    double loss_seconds_ = 0;
    double observer_seconds_ = 0;
    EpochObserver observer_;
    std::vector<WorkerScratch> scratch_;
    std::vector<double> repulsion_;
};

}

/// Spectral initialization is skipped from this many points on.
constexpr std::size_t spectral_limit = 100000;

/// kNN graph, affinities, a/b and initialization.
inline Prepared prepare(const DataMatrix& data, const RunConfig& config) {
    using internal::Clock;
    config.validate();
    data.validate();
    Prepared out;
    const int threads = resolve_threads(config.threads);

    out.k_used = config.k_neighbors;
    if (out.k_used >= data.n) {
        out.k_used = data.n - 1;
        out.warnings.push_back("k_neighbors reduced to n - 1 = " + std::to_string(out.k_used));
    }

    auto t0 = Clock::now();
    NeighborGraph graph;
    if (config.knn == KnnMethod::exact) {
        graph = knn_exact(data, out.k_used, threads);
    } else {
        DescentOptions opt;
        opt.seed = config.seed;
        graph = knn_descent(data, out.k_used, opt);
    }
    out.timings.push_back({"knn", internal::seconds_since(t0)});

    t0 = Clock::now();
    KernelParams params;
    out.P = build_affinities(graph, config.kernel, config.pseudo_distance, config.symmetrization, config.perplexity,
                             threads, &params);
    out.clamped = params.clamped_count();
    if (out.clamped > 0) {
        out.warnings.push_back(std::to_string(out.clamped) + " kernel calibrations hit their bracket");
    }
    out.timings.push_back({"affinities", internal::seconds_since(t0)});

    t0 = Clock::now();
    if (config.ab_mode == AbSource::fitted) {
        const auto fit = fit_ab(config.min_dist, config.spread);
        out.ab = fit.params;
        out.ab_rmse = fit.rmse;
        if (!fit.warning.empty()) {
            out.warnings.push_back(fit.warning);
        } else if (fit.rmse >= 0.02) {
            out.warnings.push_back("a/b fit rmse " + std::to_string(fit.rmse) + " exceeds 0.02");
        }
    } else {
        out.ab = ABParams::unit();
        out.ab.min_dist = config.min_dist;
        out.ab.spread = config.spread;
    }

    if (config.init == InitMode::spectral && data.n < spectral_limit) {
        auto s = init_spectral(out.P, config.dims, config.seed);
        out.init = std::move(s.state);
        out.warnings.insert(out.warnings.end(), s.warnings.begin(), s.warnings.end());
    } else {
        if (config.init == InitMode::spectral) {
            out.warnings.push_back("spectral initialization skipped above " + std::to_string(spectral_limit) +
                                   " points; using random init");
        }
        out.init = init_random(data.n, config.dims, config.seed);
    }
    out.timings.push_back({"init", internal::seconds_since(t0)});
    return out;
}

struct RunResult {
    EmbeddingState state;
    RunReport report;
};

/// Epoch loop on already prepared inputs. The initial state is copied.
inline RunResult optimize(const Prepared& prep, const RunConfig& config, EpochObserver observer = {}) {
    config.validate();
    RunResult out{prep.init, {}};
    auto& rep = out.report;
    rep.config = config;
    rep.ab = prep.ab;
    rep.ab_rmse = prep.ab_rmse;
    rep.n = prep.P.n;
    rep.k_used = prep.k_used;
    rep.edges = prep.P.edges.size();
    rep.p_sum = prep.P.p_sum;
    rep.p_bar = prep.P.p_mean;
    rep.clamped_calibrations = prep.clamped;
    rep.timings = prep.timings;
    rep.warnings = prep.warnings;
    rep.threads = resolve_threads(config.threads);
    if (config.repulsion == RepulsionMode::exact && prep.P.n > 20000) {
        rep.warnings.push_back("exact repulsion is O(n^2) per epoch");
    }
    if (prep.P.edges.empty()) {
        rep.warnings.push_back("affinity graph has no edges");
    }

    RunConfig effective = config;
    effective.k_neighbors = prep.k_used;
    internal::Engine engine(prep.P, prep.ab, effective, out.state, rep);
    engine.set_observer(std::move(observer));
    engine.run();
    rep.timings.push_back({"optimize", engine.optimize_seconds()});
    rep.timings.push_back({"loss", engine.loss_seconds()});
    return out;
}

/// Full pipeline: kNN graph, affinities, initialization, epoch loop.
inline RunResult run(const DataMatrix& data, const RunConfig& config) {
    const auto prep = prepare(data, config);
    return optimize(prep, config);
}

}

#endif
