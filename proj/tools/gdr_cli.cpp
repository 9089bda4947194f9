// gdr: embed datasets, run the ablation sweep, check the force-ratio theorems
// and time the epoch loop.

#include <CLI11.hpp>

#include <gdr/gdr.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace {

/// Every RunConfig field as an optional command-line override.
struct Overrides {
    std::string preset = "gdr_umap";
    bool normalized = false;
    std::string init;
    bool pseudo_distance = false;
    std::string symmetrization;
    bool sym_attraction = false;
    std::string ab;
    double min_dist = 0.1;
    double spread = 1.0;
    std::string sampling;
    bool accelerated = false;
    int neg_samples = 1;
    std::string loss;
    std::size_t epochs = 0;
    double lr = 1.0;
    std::string lr_schedule;
    double momentum = 0.0;
    std::size_t momentum_switch = 250;
    bool gains = false;
    std::size_t k_neighbors = 15;
    double perplexity = 30.0;
    std::size_t dims = 2;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string kernel;
    std::string repulsion;
    std::string knn;
    std::string apply;
    double eps = 1e-3;
    bool unsafe = false;
    std::size_t loss_every = 0;
    std::size_t exact_limit = 2000;

    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_config_flags(CLI::App* app, Overrides& o) {
    auto& m = o.opts;
    m["preset"] = app->add_option("--preset", o.preset,
                                  "Starting point for every other flag: tsne, umap, gdr_tsne or gdr_umap")
                      ->check(CLI::IsMember({"tsne", "umap", "gdr_tsne", "gdr_umap"}))
                      ->capture_default_str();
    m["normalized"] = app->add_flag("--normalized,!--no-normalized", o.normalized,
                                    "Normalization of P and Q (tSNE: on, UMAP: off)");
    m["init"] = app->add_option("--init", o.init, "Y initialization: random or spectral (Laplacian eigenmap)")
                    ->check(CLI::IsMember({"random", "spectral"}));
    m["pseudo_distance"] = app->add_flag("--pseudo-distance,!--no-pseudo-distance", o.pseudo_distance,
                                         "High-dim distance calculation: subtract each point's nearest-neighbor "
                                         "distance (UMAP) or not (tSNE)");
    m["symmetrization"] = app->add_option("--symmetrization", o.symmetrization,
                                          "Setting p_ij = p_ji: average (tSNE) or fuzzy union (UMAP)")
                              ->check(CLI::IsMember({"average", "union"}));
    m["sym_attraction"] = app->add_flag("--sym-attraction,!--no-sym-attraction", o.sym_attraction,
                                        "Attraction(y_i, y_j) applied to both endpoints (UMAP) or one (tSNE)");
    m["ab"] = app->add_option("--ab", o.ab, "Values for a and b: unit (a = b = 1) or fit (grid search on "
                                            "min-dist / spread)")
                  ->check(CLI::IsMember({"unit", "fit"}));
    m["min_dist"] = app->add_option("--min-dist", o.min_dist, "min_dist target of the a/b fit");
    m["spread"] = app->add_option("--spread", o.spread, "spread target of the a/b fit");
    m["sampling"] = app->add_option("--sampling", o.sampling,
                                    "Gradient scalars: scalar (sample edges proportionally to p) or per-edge "
                                    "(explicit p and 1 - p multipliers)")
                        ->check(CLI::IsMember({"scalar", "per-edge"}));
    m["accelerated"] = app->add_flag("--accelerated,!--no-accelerated", o.accelerated,
                                     "Accelerated variant: per-edge multipliers and p-proportional schedule");
    m["neg_samples"] = app->add_option("--neg-samples", o.neg_samples,
                                       "Negative samples (repulsions) per applied attraction")
                           ->check(CLI::PositiveNumber);
    m["loss"] = app->add_option("--loss", o.loss, "Loss: kl divergence or frobenius norm")
                    ->check(CLI::IsMember({"kl", "frobenius"}));
    m["epochs"] = app->add_option("--epochs", o.epochs, "Number of optimization epochs")->check(CLI::PositiveNumber);
    m["lr"] = app->add_option("--lr", o.lr, "Learning rate (multiplied by n / k when normalized)");
    m["lr_schedule"] = app->add_option("--lr-schedule", o.lr_schedule,
                                       "Learning rate schedule: constant or linear_decay")
                           ->check(CLI::IsMember({"constant", "linear_decay"}));
    m["momentum"] = app->add_option("--momentum", o.momentum,
                                    "Gradient amplification: momentum coefficient (0 disables)");
    m["momentum_switch"] = app->add_option("--momentum-switch", o.momentum_switch,
                                           "Epoch from which the full momentum is used (min(m, 0.5) before)");
    m["gains"] = app->add_flag("--gains,!--no-gains", o.gains, "Gradient amplification: per-coordinate gains");
    m["k_neighbors"] = app->add_option("--k-neighbors", o.k_neighbors, "Nearest neighbors per point in the kNN graph")
                           ->check(CLI::PositiveNumber);
    m["perplexity"] = app->add_option("--perplexity", o.perplexity, "Perplexity of the Gaussian (tSNE) kernel");
    m["dims"] = app->add_option("--dims", o.dims, "Embedding dimension (1 to 3)")->check(CLI::Range(1, 3));
    m["seed"] = app->add_option("--seed", o.seed, "Random seed for data, init and sampling");
    m["threads"] = app->add_option("--threads", o.threads, "Worker threads (0 = all cores)")
                       ->check(CLI::NonNegativeNumber);
    m["kernel"] = app->add_option("--kernel", o.kernel,
                                  "High-dim kernel: gaussian (perplexity) or exponential (log2 k target)")
                      ->check(CLI::IsMember({"gaussian", "exponential"}));
    m["repulsion"] = app->add_option("--repulsion", o.repulsion,
                                     "Per-point repulsions: sampled (O(1)) or exact (O(n) sum)")
                         ->check(CLI::IsMember({"sampled", "exact"}));
    m["knn"] = app->add_option("--knn", o.knn, "Nearest neighbor search: exact or descent")
                   ->check(CLI::IsMember({"exact", "descent"}));
    m["apply"] = app->add_option("--apply", o.apply,
                                 "Gradient application: immediate (per force) or batched (per epoch)")
                     ->check(CLI::IsMember({"immediate", "batched"}));
    m["eps"] = app->add_option("--eps", o.eps, "Stabilizer in the unnormalized repulsion denominator");
    m["unsafe"] = app->add_flag("--unsafe-normalized-scalar-sampling", o.unsafe,
                                "Allow scalar sampling in the normalized setting (unstable)");
    m["loss_every"] = app->add_option("--loss-every", o.loss_every, "Loss trace interval in epochs (0 = epochs/100)");
    m["exact_limit"] = app->add_option("--exact-limit", o.exact_limit,
                                       "Largest n for exact losses and exact Z refreshes");
}

gdr::RunConfig build_config(const Overrides& o) {
    auto c = gdr::RunConfig::make(gdr::parse_preset(o.preset));
    if (o.given("normalized")) c.normalized = o.normalized;
    if (o.given("init")) c.init = gdr::parse_init(o.init);
    if (o.given("pseudo_distance")) c.pseudo_distance = o.pseudo_distance;
    if (o.given("symmetrization")) c.symmetrization = gdr::parse_symmetrization(o.symmetrization);
    if (o.given("sym_attraction")) c.sym_attraction = o.sym_attraction;
    if (o.given("ab")) c.ab_mode = gdr::parse_ab(o.ab);
    if (o.given("min_dist")) c.min_dist = o.min_dist;
    if (o.given("spread")) c.spread = o.spread;
    if (o.given("sampling")) c.sampling.mode = gdr::parse_sampling(o.sampling);
    if (o.given("accelerated")) c.sampling.accelerated = o.accelerated;
    if (o.given("neg_samples")) c.sampling.neg_samples = o.neg_samples;
    if (o.given("loss")) c.loss = gdr::parse_loss(o.loss);
    if (o.given("epochs")) c.epochs = o.epochs;
    if (o.given("lr")) c.lr = o.lr;
    if (o.given("lr_schedule")) c.lr_schedule = gdr::parse_lr_schedule(o.lr_schedule);
    if (o.given("momentum")) c.momentum = o.momentum;
    if (o.given("momentum_switch")) c.momentum_switch = o.momentum_switch;
    if (o.given("gains")) c.gains = o.gains;
    if (o.given("k_neighbors")) c.k_neighbors = o.k_neighbors;
    if (o.given("perplexity")) c.perplexity = o.perplexity;
    if (o.given("perplexity") && !o.given("k_neighbors") && c.kernel == gdr::KernelMode::gaussian_perplexity) {
        c.k_neighbors = static_cast<std::size_t>(std::ceil(3 * c.perplexity));
    }
    if (o.given("dims")) c.dims = o.dims;
    if (o.given("seed")) c.seed = o.seed;
    if (o.given("threads")) c.threads = o.threads;
    if (o.given("kernel")) c.kernel = gdr::parse_kernel(o.kernel);
    if (o.given("repulsion")) c.repulsion = gdr::parse_repulsion(o.repulsion);
    if (o.given("knn")) c.knn = gdr::parse_knn(o.knn);
    if (o.given("apply")) c.apply = gdr::parse_apply(o.apply);
    if (o.given("eps")) c.eps = o.eps;
    if (o.given("unsafe")) c.unsafe_normalized_scalar_sampling = o.unsafe;
    if (o.given("loss_every")) c.loss_every = o.loss_every;
    if (o.given("exact_limit")) c.exact_limit = o.exact_limit;
    // with immediate application the amplification defaults are meaningless
    if (c.apply == gdr::ApplyMode::immediate && !o.given("momentum")) c.momentum = 0;
    if (c.apply == gdr::ApplyMode::immediate && !o.given("gains")) c.gains = false;
    c.sampling.seed = c.seed;
    c.validate();
    return c;
}

struct InputSpec {
    std::string input;
    std::string format = "csv";
    bool header = false;
    bool labels = false;
    std::string synthetic;

    void add(CLI::App* app, const std::string& default_synthetic) {
        synthetic = default_synthetic;
        app->add_option("--input", input, "Data file (rows are points)");
        app->add_option("--format", format, "Input format: csv or bin")
            ->check(CLI::IsMember({"csv", "bin"}))
            ->capture_default_str();
        app->add_flag("--header", header, "CSV input has a header row");
        app->add_flag("--labels", labels, "Last CSV column holds class labels");
        app->add_option("--synthetic", synthetic,
                        "Synthetic data, e.g. blobs:n=1000,clusters=5,dim=3,sep=6 or swiss_roll:n=2000,noise=0.1 "
                        "or gaussian:n=500,dim=10")
            ->capture_default_str();
    }

    gdr::Dataset load(std::uint64_t seed) const {
        if (!input.empty()) {
            gdr::Dataset d;
            gdr::CsvOptions opt;
            opt.header = header;
            opt.label_column = labels;
            d.data = gdr::load_matrix(input, format == "csv" ? gdr::MatrixFormat::csv : gdr::MatrixFormat::f32_binary,
                                      opt);
            d.name = fs::path(input).filename().string();
            return d;
        }
        if (synthetic.empty()) {
            throw gdr::ConfigError("give --input or --synthetic");
        }
        return gdr::make_synthetic(gdr::parse_synthetic(synthetic), seed);
    }

    /// Parse-only validation so bad specs fail before any compute.
    void check() const {
        if (input.empty()) {
            if (synthetic.empty()) {
                throw gdr::ConfigError("give --input or --synthetic");
            }
            gdr::parse_synthetic(synthetic);
        }
    }
};

void write_embedding_csv(const std::string& path, const gdr::EmbeddingState& Y,
                         const std::optional<std::vector<std::int64_t>>& labels) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    static const char* names[] = {"x", "y", "z"};
    for (std::size_t c = 0; c < Y.dim; ++c) {
        out << (c ? "," : "") << names[c];
    }
    out << (labels ? ",label\n" : "\n");
    char buf[32];
    for (std::size_t i = 0; i < Y.n; ++i) {
        for (std::size_t c = 0; c < Y.dim; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", Y.coords[i * Y.dim + c]);
            out << (c ? "," : "") << buf;
        }
        if (labels) {
            out << ',' << (*labels)[i];
        }
        out << '\n';
    }
}

gdr::Json evaluation_json(const gdr::Evaluation& e) {
    gdr::Json j = gdr::Json::object();
    if (e.metrics) {
        j = gdr::to_json(*e.metrics);
    }
    if (e.manifold) {
        j["manifold_rho"] = e.manifold->rho;
        j["manifold_abs_rho"] = e.manifold->magnitude;
    }
    return j;
}

gdr::Json dataset_json(const gdr::Dataset& d) {
    return {{"name", d.name}, {"n", d.data.n}, {"dim", d.data.dim}, {"labeled", d.data.has_labels()}};
}

fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

int cmd_embed(const Overrides& o, const InputSpec& in, const std::string& out_dir) {
    const auto config = build_config(o);
    in.check();
    const auto data = in.load(config.seed);
    const auto result = gdr::run(data.data, config);
    const auto eval = gdr::evaluate_dataset(data, result.state, config.seed, config.threads);

    const auto dir = ensure_dir(out_dir);
    write_embedding_csv((dir / "embedding.csv").string(), result.state, data.data.labels);
    gdr::Json report;
    report["dataset"] = dataset_json(data);
    report["run"] = gdr::to_json(result.report);
    report["metrics"] = evaluation_json(eval);
    gdr::save_json((dir / "report.json").string(), report);
    gdr::SvgOptions svg;
    svg.title = std::string(gdr::to_string(config.preset)) + " on " + data.name;
    gdr::save_svg((dir / "plot.svg").string(), result.state, data.data.labels ? &*data.data.labels : nullptr, svg);

    std::cout << "embedded " << data.data.n << " points in " << result.report.epochs_run << " epochs ("
              << result.report.seconds_per_epoch * 1e3 << " ms/epoch)\n";
    if (eval.metrics) {
        std::cout << "knn accuracy " << eval.metrics->knn_accuracy << "  v-measure " << eval.metrics->v.v
                  << "  spread ratio " << eval.metrics->spread.ratio << '\n';
    }
    if (eval.manifold) {
        std::cout << "manifold |rho| " << eval.manifold->magnitude << '\n';
    }
    for (const auto& w : result.report.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    return 0;
}

struct SweepArgs {
    std::vector<std::string> presets{"tsne", "umap", "gdr_tsne", "gdr_umap"};
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool parallel = false;
    bool plots = true;
};

int cmd_sweep(const SweepArgs& a, const InputSpec& in, const std::string& out_dir) {
    std::vector<gdr::Preset> presets;
    for (const auto& p : a.presets) {
        presets.push_back(gdr::parse_preset(p));
    }
    in.check();
    const auto data = in.load(a.seed);
    const auto cells = gdr::run_sweep(
        data, presets,
        [&](gdr::RunConfig& c) {
            c.seed = a.seed;
            c.sampling.seed = a.seed;
            c.threads = a.threads;
            if (a.epochs > 0) {
                c.epochs = a.epochs;
            }
        },
        a.parallel);

    const auto dir = ensure_dir(out_dir);
    if (a.plots) {
        fs::create_directories(dir / "sweep");
    }
    gdr::Json report;
    report["dataset"] = dataset_json(data);
    report["seed"] = a.seed;
    report["threads"] = a.threads;
    report["columns"] = gdr::Json::array();
    for (auto t : gdr::all_toggles) {
        report["columns"].push_back(gdr::to_string(t));
    }
    report["cells"] = gdr::Json::array();
    std::map<gdr::Preset, const gdr::SweepCell*> base;
    for (const auto& c : cells) {
        if (c.toggle == gdr::Toggle::none && c.ok) {
            base[c.preset] = &c;
        }
    }
    for (const auto& c : cells) {
        gdr::Json j;
        j["preset"] = gdr::to_string(c.preset);
        j["toggle"] = gdr::to_string(c.toggle);
        j["ok"] = c.ok;
        j["seconds"] = c.seconds;
        if (!c.ok) {
            j["error"] = c.error;
        } else {
            j["metrics"] = evaluation_json(c.eval);
            const auto it = base.find(c.preset);
            if (it != base.end() && c.eval.metrics && it->second->eval.metrics) {
                j["knn_delta"] = c.eval.metrics->knn_accuracy - it->second->eval.metrics->knn_accuracy;
                j["v_delta"] = c.eval.metrics->v.v - it->second->eval.metrics->v.v;
            }
            if (a.plots) {
                const auto name = std::string(gdr::to_string(c.preset)) + "_" + std::string(gdr::to_string(c.toggle));
                gdr::SvgOptions svg;
                svg.title = name;
                gdr::save_svg((dir / "sweep" / (name + ".svg")).string(), c.embedding,
                              data.data.labels ? &*data.data.labels : nullptr, svg);
            }
            if (!c.warnings.empty()) {
                j["warnings"] = c.warnings;
            }
        }
        report["cells"].push_back(j);
        std::cout << gdr::to_string(c.preset) << " / " << gdr::to_string(c.toggle) << ": ";
        if (!c.ok) {
            std::cout << "failed (" << c.error << ")\n";
        } else if (c.eval.metrics) {
            std::cout << "knn " << c.eval.metrics->knn_accuracy << "  v " << c.eval.metrics->v.v << "  spread "
                      << c.eval.metrics->spread.ratio << '\n';
        } else {
            std::cout << "done\n";
        }
    }
    const auto t = base.find(gdr::Preset::gdr_tsne);
    const auto u = base.find(gdr::Preset::gdr_umap);
    if (t != base.end() && u != base.end() && t->second->eval.metrics && u->second->eval.metrics) {
        const double rt = t->second->eval.metrics->spread.ratio;
        const double ru = u->second->eval.metrics->spread.ratio;
        report["normalization"] = {{"spread_ratio_gdr_tsne", gdr::json_number(rt)},
                                   {"spread_ratio_gdr_umap", gdr::json_number(ru)},
                                   {"umap_over_tsne", gdr::json_number(ru / rt)}};
    }
    gdr::save_json((dir / "sweep_report.json").string(), report);
    return 0;
}

struct TheoremArgs {
    std::vector<std::size_t> sizes{100, 1000, 5000};
    std::size_t draws = 100000;
    std::size_t c = 15;
    std::uint64_t seed = 0;
    std::size_t angle_trials = 100;
    std::size_t angle_every = 50;
    std::size_t angle_dim = 10;
    bool angles = true;
    int threads = 1;
};

int cmd_theorems(const TheoremArgs& a, const std::string& out_dir) {
    gdr::Json report;
    report["seed"] = a.seed;
    report["draws"] = a.draws;
    report["c"] = a.c;
    report["sizes"] = gdr::Json::array();
    bool all_equal = true, all_smaller = true, all_closed = true, all_angles = true;
    for (std::size_t n : a.sizes) {
        gdr::ForceRatioOptions opt;
        opt.c = a.c;
        opt.draws = a.draws;
        const auto f = gdr::force_ratio_experiment(n, a.seed + n, opt);
        gdr::Json row;
        row["n"] = n;
        row["force_ratios"] = gdr::to_json(f);
        all_equal = all_equal && f.sampling_equal;
        all_smaller = all_smaller && f.unnormalized_smaller;
        all_closed = all_closed && f.closed_form_match;
        std::cout << "n=" << n << "  full/sampled " << f.ratio_full / f.ratio_sampled << "  sampled "
                  << f.ratio_sampled << " (c p / n = " << f.closed_form << ", c p n = " << f.cancelled_form
                  << ")  unnorm " << f.ratio_unnorm << '\n';
        if (a.angles) {
            const auto cloud = gdr::make_blobs(n, 1, a.angle_dim, 1.0, a.seed + n);
            row["angles"] = gdr::Json::object();
            for (auto preset : {gdr::Preset::gdr_tsne, gdr::Preset::gdr_umap}) {
                auto config = gdr::RunConfig::make(preset);
                config.seed = a.seed;
                config.sampling.seed = a.seed;
                config.threads = a.threads;
                config.loss_every = config.epochs;
                const auto run = gdr::angle_over_run(cloud, config, a.angle_every, a.angle_trials, a.seed);
                gdr::Json trace = gdr::Json::array();
                for (const auto& [epoch, angle] : run.trace) {
                    trace.push_back({{"epoch", epoch}, {"angle", angle}});
                }
                const bool pass = run.mean < 0.5;
                all_angles = all_angles && pass;
                row["angles"][std::string(gdr::to_string(preset))] = {
                    {"mean", run.mean}, {"below_half_radian", pass}, {"skipped", run.skipped}, {"trace", trace}};
                std::cout << "  angle " << gdr::to_string(preset) << " " << run.mean << " rad\n";
            }
        }
        report["sizes"].push_back(row);
    }
    report["theorem2_equality"] = all_equal;
    report["theorem2_closed_form"] = all_closed;
    report["theorem1_inequality"] = all_smaller;
    if (a.angles) {
        report["angle_below_half_radian"] = all_angles;
    }
    const auto dir = ensure_dir(out_dir);
    gdr::save_json((dir / "theorem_report.json").string(), report);
    std::cout << "theorem 2 equality " << (all_equal ? "pass" : "fail") << ", closed form "
              << (all_closed ? "pass" : "fail") << ", theorem 1 inequality " << (all_smaller ? "pass" : "fail")
              << '\n';
    return 0;
}

struct BenchArgs {
    std::vector<std::size_t> sizes{1000, 10000, 50000};
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    int threads = 1;
    std::size_t dim = 3;
    bool accuracy = false;
};

int cmd_bench(const BenchArgs& a, const std::string& out_dir) {
    gdr::Json report;
    report["seed"] = a.seed;
    report["threads"] = gdr::resolve_threads(a.threads);
    report["epochs"] = a.epochs;
    report["cells"] = gdr::Json::array();
    std::map<std::size_t, std::map<std::string, double>> per_epoch;
    for (std::size_t n : a.sizes) {
        const auto data = gdr::make_blobs(n, 5, a.dim, 6.0, a.seed);
        auto base = gdr::RunConfig::make(gdr::Preset::gdr_umap);
        base.seed = a.seed;
        base.threads = a.threads;
        base.init = gdr::InitMode::random;
        const auto prep = gdr::prepare(data, base);
        for (auto [name, config] : gdr::bench_variants()) {
            config.seed = a.seed;
            config.sampling.seed = a.seed;
            config.threads = a.threads;
            config.init = gdr::InitMode::random;
            config.epochs = a.epochs;
            const auto cell = gdr::bench_run(prep, name, config, a.accuracy ? &*data.labels : nullptr, a.threads);
            per_epoch[n][name] = cell.seconds_per_epoch;
            gdr::Json j{{"variant", name},
                        {"n", n},
                        {"epochs", cell.epochs},
                        {"seconds_per_epoch", cell.seconds_per_epoch},
                        {"prepare_seconds", cell.prepare_seconds}};
            if (cell.knn_accuracy) {
                j["knn_accuracy"] = *cell.knn_accuracy;
            }
            report["cells"].push_back(j);
            std::cout << name << " n=" << n << "  " << cell.seconds_per_epoch * 1e3 << " ms/epoch\n";
        }
    }
    gdr::Json summary = gdr::Json::object();
    for (const auto& [n, m] : per_epoch) {
        if (m.count("gdr_umap") && m.count("gdr_umap_accelerated")) {
            summary["accelerated_over_plain_n" + std::to_string(n)] = m.at("gdr_umap_accelerated") / m.at("gdr_umap");
        }
    }
    if (per_epoch.count(1000) && per_epoch.count(10000)) {
        for (const auto& [name, t] : per_epoch[1000]) {
            summary["scaling_1e4_over_1e3_" + name] = per_epoch[10000][name] / t;
        }
    }
    report["summary"] = summary;
    const auto dir = ensure_dir(out_dir);
    gdr::save_json((dir / "bench_report.json").string(), report);
    return 0;
}

}

int main(int argc, char** argv) {
    CLI::App app{"Gradient dimensionality reduction: tSNE- and UMAP-style embeddings from one engine"};
    app.require_subcommand(1, 1);
    std::string out_dir = "out";

    auto* embed = app.add_subcommand("embed", "Embed a dataset; writes embedding.csv, report.json and plot.svg");
    Overrides overrides;
    add_config_flags(embed, overrides);
    InputSpec embed_input;
    embed_input.add(embed, "");
    embed->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Single-toggle ablation of every preset; writes sweep_report.json");
    SweepArgs sweep_args;
    InputSpec sweep_input;
    sweep_input.add(sweep, "blobs:n=1000,clusters=5");
    sweep->add_option("--presets", sweep_args.presets, "Presets to sweep")
        ->check(CLI::IsMember({"tsne", "umap", "gdr_tsne", "gdr_umap"}))
        ->capture_default_str();
    sweep->add_option("--epochs", sweep_args.epochs, "Override every preset's epoch count");
    sweep->add_option("--seed", sweep_args.seed, "Random seed")->capture_default_str();
    sweep->add_option("--threads", sweep_args.threads, "Worker threads per cell (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    sweep->add_flag("--parallel-cells", sweep_args.parallel, "Run sweep cells concurrently");
    sweep->add_flag("--plots,!--no-plots", sweep_args.plots, "Write one SVG per cell");
    sweep->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    auto* theorems = app.add_subcommand("theorems", "Force-ratio and angle diagnostics; writes theorem_report.json");
    TheoremArgs theorem_args;
    theorems->add_option("--sizes", theorem_args.sizes, "Point counts")->capture_default_str();
    theorems->add_option("--draws", theorem_args.draws, "Monte-Carlo draws per size")->capture_default_str();
    theorems->add_option("--c", theorem_args.c, "Attractions per point")->capture_default_str();
    theorems->add_option("--seed", theorem_args.seed, "Random seed")->capture_default_str();
    theorems->add_option("--angle-trials", theorem_args.angle_trials, "Probed points per angle snapshot")
        ->capture_default_str();
    theorems->add_option("--angle-every", theorem_args.angle_every, "Epochs between angle snapshots")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    theorems->add_flag("--angles,!--no-angles", theorem_args.angles, "Run the angle diagnostic");
    theorems->add_option("--threads", theorem_args.threads, "Worker threads (0 = all cores)");
    theorems->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Per-epoch wall time of the GDR variants; writes bench_report.json");
    BenchArgs bench_args;
    bench->add_option("--sizes", bench_args.sizes, "Point counts")->capture_default_str();
    bench->add_option("--epochs", bench_args.epochs, "Timed epochs per run")->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench->add_option("--seed", bench_args.seed, "Random seed")->capture_default_str();
    bench->add_option("--threads", bench_args.threads, "Worker threads (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    bench->add_flag("--accuracy", bench_args.accuracy, "Also report kNN accuracy of each run");
    bench->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*embed) {
            return cmd_embed(overrides, embed_input, out_dir);
        }
        if (*sweep) {
            return cmd_sweep(sweep_args, sweep_input, out_dir);
        }
        if (*theorems) {
            return cmd_theorems(theorem_args, out_dir);
        }
        return cmd_bench(bench_args, out_dir);
    } catch (const gdr::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const gdr::NumericAbort& e) {
        std::cerr << "aborted: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
