#ifndef GDR_EXPERIMENTS_HPP
#define GDR_EXPERIMENTS_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"

namespace gdr {

/// Parsed form of "blobs:n=1000,clusters=5" or "swiss_roll:n=2000,noise=0.1".
struct SyntheticSpec {
    enum class Kind { blobs, swiss_roll, gaussian };
    Kind kind = Kind::blobs;
    std::size_t n = 1000;
    std::size_t clusters = 5;
    std::size_t dim = 3;
    double sep = 6.0;
    double noise = 0.1;
};

/// A dataset plus the swiss roll parameter when there is one.
struct Dataset {
    DataMatrix data;
    std::optional<std::vector<double>> t;
    std::string name;
};

inline SyntheticSpec parse_synthetic(const std::string& text) {
    SyntheticSpec spec;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    if (kind == "blobs") {
        spec.kind = SyntheticSpec::Kind::blobs;
    } else if (kind == "swiss_roll") {
        spec.kind = SyntheticSpec::Kind::swiss_roll;
    } else if (kind == "gaussian") {
        spec.kind = SyntheticSpec::Kind::gaussian;
        spec.dim = 10;
    } else {
        throw ConfigError("unknown synthetic dataset '" + kind + "' (choose blobs, swiss_roll or gaussian)");
    }
    if (colon == std::string::npos) {
        return spec;
    }
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const auto comma = std::min(rest.find(',', pos), rest.size());
        const std::string item = rest.substr(pos, comma - pos);
        pos = comma + 1;
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("synthetic option '" + item + "' is not key=value");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            if (key == "n") {
                spec.n = std::stoul(value);
            } else if (key == "clusters") {
                spec.clusters = std::stoul(value);
            } else if (key == "dim") {
                spec.dim = std::stoul(value);
            } else if (key == "sep") {
                spec.sep = std::stod(value);
            } else if (key == "noise") {
                spec.noise = std::stod(value);
            } else {
                throw ConfigError("unknown synthetic option '" + key + "'");
            }
        } catch (const std::logic_error& e) {
            if (dynamic_cast<const ConfigError*>(&e)) {
                throw;
            }
            throw ConfigError("bad value for synthetic option '" + key + "': " + value);
        }
    }
    if (spec.n < 2) {
        throw ConfigError("synthetic datasets need n >= 2");
    }
    return spec;
}

inline Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    Dataset out;
    switch (spec.kind) {
    case SyntheticSpec::Kind::blobs:
        out.data = make_blobs(spec.n, spec.clusters, spec.dim, spec.sep, seed);
        out.name = "blobs";
        break;
    case SyntheticSpec::Kind::gaussian:
        out.data = make_blobs(spec.n, 1, spec.dim, 1.0, seed);
        out.name = "gaussian";
        break;
    case SyntheticSpec::Kind::swiss_roll: {
        auto roll = make_swiss_roll(spec.n, spec.noise, seed);
        out.data = std::move(roll.data);
        out.t = std::move(roll.t);
        out.name = "swiss_roll";
        break;
    }
    }
    return out;
}

/// Metrics for whatever the dataset supports: labels and/or the roll parameter.
struct Evaluation {
    std::optional<MetricReport> metrics;
    std::optional<ManifoldScore> manifold;
};

inline Evaluation evaluate_dataset(const Dataset& d, const EmbeddingState& Y, std::uint64_t seed, int threads = 1) {
    Evaluation out;
    if (d.data.labels && Y.n >= 3) {
        out.metrics = evaluate(Y, *d.data.labels, seed, threads);
    }
    if (d.t) {
        out.manifold = manifold_preservation(Y, *d.t);
    }
    return out;
}

/// Single hyperparameter flips of the ablation table.
enum class Toggle { none, init, pseudo_distance, symmetrization, sym_attraction, ab };

inline constexpr std::array<Toggle, 6> all_toggles{Toggle::none,           Toggle::init,           Toggle::pseudo_distance,
                                                   Toggle::symmetrization, Toggle::sym_attraction, Toggle::ab};

inline std::string_view to_string(Toggle t) {
    switch (t) {
    case Toggle::none: return "default";
    case Toggle::init: return "init";
    case Toggle::pseudo_distance: return "pseudo_distance";
    case Toggle::symmetrization: return "symmetrization";
    case Toggle::sym_attraction: return "sym_attraction";
    case Toggle::ab: return "ab";
    }
    return "?";
}

inline void apply_toggle(RunConfig& c, Toggle t) {
    switch (t) {
    case Toggle::none: break;
    case Toggle::init: c.init = c.init == InitMode::random ? InitMode::spectral : InitMode::random; break;
    case Toggle::pseudo_distance: c.pseudo_distance = !c.pseudo_distance; break;
    case Toggle::symmetrization:
        c.symmetrization =
            c.symmetrization == Symmetrization::average ? Symmetrization::fuzzy_union : Symmetrization::average;
        break;
    case Toggle::sym_attraction: c.sym_attraction = !c.sym_attraction; break;
    case Toggle::ab: c.ab_mode = c.ab_mode == AbSource::unit ? AbSource::fitted : AbSource::unit; break;
    }
}

struct SweepCell {
    Preset preset = Preset::gdr_umap;
    Toggle toggle = Toggle::none;
    RunConfig config;
    bool ok = false;
    std::string error;
    Evaluation eval;
    double seconds = 0;
    EmbeddingState embedding;
    std::vector<std::string> warnings;
};

/**
 * Runs every (preset, toggle) cell on one dataset. `tweak` adjusts each cell's
 * config after the preset and toggle are applied (seed, threads, epochs, ...).
 * A failing cell records its error and the sweep goes on. With `parallel`
 * cells run concurrently, one per hardware thread.
 */
template<class Tweak>
std::vector<SweepCell> run_sweep(const Dataset& d, const std::vector<Preset>& presets, Tweak tweak,
                                 bool parallel = false) {
    std::vector<SweepCell> cells;
    for (auto p : presets) {
        for (auto t : all_toggles) {
            SweepCell cell;
            cell.preset = p;
            cell.toggle = t;
            cell.config = RunConfig::make(p);
            apply_toggle(cell.config, t);
            tweak(cell.config);
            cells.push_back(std::move(cell));
        }
    }
    auto run_cell = [&d](SweepCell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            auto result = run(d.data, cell.config);
            cell.eval = evaluate_dataset(d, result.state, cell.config.seed, cell.config.threads);
            cell.embedding = std::move(result.state);
            cell.warnings = std::move(result.report.warnings);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        cell.seconds = internal::seconds_since(t0);
    };
    const int workers = parallel ? resolve_threads(0) : 1;
    parallel_for(cells.size(), workers, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) {
            run_cell(cells[i]);
        }
    });
    return cells;
}

struct AngleRun {
    /// Mean over snapshots of the per-snapshot mean angle.
    double mean = 0;
    std::vector<std::pair<std::size_t, double>> trace;
    std::size_t skipped = 0;
};

/**
 * Optimizes with `config` and measures the angle between sampled and exact
 * repulsions every `every` epochs (and on the initial state). `trials` points
 * are probed per snapshot.
 */
inline AngleRun angle_over_run(const DataMatrix& data, const RunConfig& config, std::size_t every,
                               std::size_t trials, std::uint64_t seed) {
    const auto prep = prepare(data, config);
    const auto regime = config.regime();
    AngleRun out;
    auto probe = [&](std::size_t epoch, const EmbeddingState& Y) {
        const auto a = angle_agreement(Y, prep.ab, regime, trials, seed + epoch, 5, 15, prep.P.p_mean);
        out.trace.emplace_back(epoch, a.mean);
        out.skipped += a.skipped;
    };
    probe(0, prep.init);
    optimize(prep, config, [&](std::size_t epoch, const EmbeddingState& Y) {
        if (epoch % every == 0) {
            probe(epoch, Y);
        }
    });
    double s = 0;
    for (const auto& [epoch, angle] : out.trace) {
        s += angle;
    }
    out.mean = s / static_cast<double>(out.trace.size());
    return out;
}

struct BenchCell {
    std::string variant;
    std::size_t n = 0;
    std::size_t epochs = 0;
    double seconds_per_epoch = 0;
    double prepare_seconds = 0;
    std::optional<double> knn_accuracy;
};

/// The benchmarked variants: gdr_umap, gdr_umap with the accelerated schedule, gdr_tsne.
inline std::vector<std::pair<std::string, RunConfig>> bench_variants() {
    auto acc = RunConfig::make(Preset::gdr_umap);
    acc.sampling.accelerated = true;
    return {{"gdr_umap", RunConfig::make(Preset::gdr_umap)},
            {"gdr_umap_accelerated", acc},
            {"gdr_tsne", RunConfig::make(Preset::gdr_tsne)}};
}

/**
 * Times the epoch loop of `config` on prepared inputs. The loss trace is
 * recorded only at the end so it does not enter the timing.
 */
inline BenchCell bench_run(const Prepared& prep, const std::string& variant, RunConfig config,
                           const std::vector<std::int64_t>* labels, int metric_threads = 1) {
    config.loss_every = config.epochs;
    const auto result = optimize(prep, config);
    BenchCell out;
    out.variant = variant;
    out.n = prep.P.n;
    out.epochs = config.epochs;
    out.seconds_per_epoch = result.report.seconds_per_epoch;
    for (const auto& t : prep.timings) {
        out.prepare_seconds += t.seconds;
    }
    if (labels) {
        out.knn_accuracy = knn_accuracy(result.state, *labels, 0, metric_threads);
    }
    return out;
}

}

#endif
