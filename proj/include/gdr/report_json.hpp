#ifndef GDR_REPORT_JSON_HPP
#define GDR_REPORT_JSON_HPP

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "metrics.hpp"
#include "optimizer.hpp"

namespace gdr {

using Json = nlohmann::ordered_json;

/// Finite values stay numbers; infinities become "inf" / "-inf" and NaN null.
inline Json json_number(double x) {
    if (std::isfinite(x)) {
        return x;
    }
    if (std::isnan(x)) {
        return nullptr;
    }
    return x > 0 ? "inf" : "-inf";
}

/// Inverse of json_number; null reads back as NaN.
inline double number_from_json(const Json& j) {
    if (j.is_null()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        throw std::invalid_argument("not a number: " + s);
    }
    return j.get<double>();
}

inline Json to_json(const RunConfig& c) {
    Json j;
    j["preset"] = to_string(c.preset);
    j["normalized"] = c.normalized;
    j["init"] = to_string(c.init);
    j["pseudo_distance"] = c.pseudo_distance;
    j["symmetrization"] = to_string(c.symmetrization);
    j["sym_attraction"] = c.sym_attraction;
    j["ab"] = to_string(c.ab_mode);
    j["min_dist"] = c.min_dist;
    j["spread"] = c.spread;
    j["sampling"] = to_string(c.sampling.mode);
    j["accelerated"] = c.sampling.accelerated;
    j["neg_samples"] = c.sampling.neg_samples;
    j["loss"] = to_string(c.loss);
    j["apply"] = to_string(c.apply);
    j["lr"] = c.lr;
    j["lr_schedule"] = to_string(c.lr_schedule);
    j["momentum"] = c.momentum;
    j["gains"] = c.gains;
    j["momentum_switch"] = c.momentum_switch;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["dims"] = c.dims;
    j["k_neighbors"] = c.k_neighbors;
    j["perplexity"] = c.perplexity;
    j["kernel"] = to_string(c.kernel);
    j["knn"] = to_string(c.knn);
    j["repulsion"] = to_string(c.repulsion);
    j["eps"] = c.eps;
    j["threads"] = c.threads;
    j["unsafe_normalized_scalar_sampling"] = c.unsafe_normalized_scalar_sampling;
    j["loss_every"] = c.loss_every;
    j["exact_limit"] = c.exact_limit;
    return j;
}

inline Json to_json(const RunReport& r) {
    Json j;
    j["config"] = to_json(r.config);
    j["a"] = r.ab.a;
    j["b"] = r.ab.b;
    j["ab_rmse"] = r.ab_rmse;
    j["n"] = r.n;
    j["k_used"] = r.k_used;
    j["edges"] = r.edges;
    j["p_sum"] = r.p_sum;
    j["p_bar"] = r.p_bar;
    j["final_Z"] = r.final_Z;
    j["clamped_calibrations"] = r.clamped_calibrations;
    j["threads"] = r.threads;
    j["epochs_run"] = r.epochs_run;
    j["seconds_per_epoch"] = r.seconds_per_epoch;
    j["timings"] = Json::object();
    for (const auto& t : r.timings) {
        j["timings"][t.phase] = t.seconds;
    }
    j["loss_trace"] = Json::array();
    for (const auto& l : r.loss_trace) {
        j["loss_trace"].push_back({{"epoch", l.epoch}, {"loss", json_number(l.loss)}, {"exact", l.exact}});
    }
    j["warnings"] = r.warnings;
    return j;
}

inline Json to_json(const MetricReport& m) {
    Json j;
    j["knn_accuracy"] = json_number(m.knn_accuracy);
    j["knn_k"] = m.knn_k;
    j["v_measure"] = m.v.v;
    j["v_measure_average"] = m.v.average;
    j["homogeneity"] = m.v.homogeneity;
    j["completeness"] = m.v.completeness;
    j["kmeans_clusters"] = m.clusters;
    j["spread_ratio"] = json_number(m.spread.ratio);
    j["spread_inter"] = m.spread.inter;
    j["spread_intra"] = m.spread.intra;
    j["angle_mean"] = json_number(m.angle_mean);
    j["force_ratio_normalized"] = json_number(m.force_ratio_normalized);
    j["force_ratio_unnormalized"] = json_number(m.force_ratio_unnormalized);
    if (!m.spread.warnings.empty()) {
        j["warnings"] = m.spread.warnings;
    }
    return j;
}

inline Json to_json(const ForceRatios& f) {
    Json j;
    j["n"] = f.n;
    j["c"] = f.c;
    j["p_tsne"] = f.p_tsne;
    j["p_umap"] = f.p_umap;
    j["ratio_full"] = f.ratio_full;
    j["ratio_sampled"] = f.ratio_sampled;
    j["ratio_unnorm"] = f.ratio_unnorm;
    j["full_over_sampled"] = f.ratio_full / f.ratio_sampled;
    j["closed_form"] = f.closed_form;
    j["cancelled_form"] = f.cancelled_form;
    j["kappa"] = f.kappa;
    j["sampling_equal"] = f.sampling_equal;
    j["closed_form_match"] = f.closed_form_match;
    j["unnormalized_smaller"] = f.unnormalized_smaller;
    return j;
}

inline Json to_json(const AngleAgreement& a) {
    return {{"mean", json_number(a.mean)}, {"used", a.used}, {"skipped", a.skipped}};
}

inline void save_json(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
}

inline Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return Json::parse(in);
}

}

#endif
