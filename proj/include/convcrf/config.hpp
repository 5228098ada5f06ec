#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convcrf/kernels.hpp"
#include "convcrf/mean_field.hpp"
#include "convcrf/params.hpp"
#include "convcrf/synthetic.hpp"
#include "convcrf/training.hpp"

namespace convcrf {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& section) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
}

}  // namespace detail

inline nlohmann::json kernel_spec_to_json(const KernelSpec& ks) {
    return {{"features", ks.feature_selector},
            {"thetas", ks.thetas},
            {"weight", ks.weight},
            {"learnable", ks.learnable}};
}

inline KernelSpec kernel_spec_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"features", "thetas", "weight", "learnable"}, "kernels[]");
    KernelSpec ks;
    ks.feature_selector = j.at("features").get<std::vector<std::string>>();
    ks.thetas = j.at("thetas").get<std::vector<double>>();
    ks.weight = j.value("weight", 1.0);
    ks.learnable = j.value("learnable", true);
    ks.validate();
    return ks;
}

// Everything a CLI run needs, parsed strictly: unknown keys are rejected so a
// typo cannot silently fall back to a default.
struct RunConfig {
    ConvCrfConfig crf;
    CrfParams<float> params;
    bool learn_smoothness = false;
    bool learn_compatibility = false;
    NoiseConfig noise;
    TrainConfig train;
    std::string resume_from;
    // default locations, overridable on the command line
    std::string dataset_dir;
    std::string pred_dir;
    std::string out_dir;
    // synthesize
    int synth_count = 8;
    int synth_height = 64, synth_width = 64;
    double confidence = 0.9;
    // bench
    std::vector<std::pair<int, int>> bench_sizes = {{64, 64}, {96, 96}};
    std::vector<int> bench_filter_sizes = {5, 7};
    int bench_classes = 4;
    int bench_repetitions = 10;
    int bench_warmup = 2;

    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    static RunConfig load(const std::string& path);
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j, {"crf", "params", "noise", "synthesize", "train", "bench", "paths"}, "<root>");
    RunConfig rc;
    if (j.contains("crf")) {
        const auto& c = j.at("crf");
        detail::reject_unknown_keys(c,
                                    {"filter_size", "iterations", "blur_factor", "exclude_center",
                                     "normalization", "compatibility", "kernels"},
                                    "crf");
        rc.crf.filter_size = c.value("filter_size", rc.crf.filter_size);
        rc.crf.iterations = c.value("iterations", rc.crf.iterations);
        rc.crf.blur_factor = c.value("blur_factor", rc.crf.blur_factor);
        rc.crf.exclude_center = c.value("exclude_center", rc.crf.exclude_center);
        rc.crf.normalization = c.value("normalization", rc.crf.normalization);
        std::string compat = c.value("compatibility", std::string("potts"));
        if (compat == "potts")
            rc.crf.compat_variant = CompatVariant::Potts;
        else if (compat == "matrix")
            rc.crf.compat_variant = CompatVariant::LearnableMatrix;
        else
            throw ConfigError("crf.compatibility must be 'potts' or 'matrix'");
        if (c.contains("kernels"))
            for (const auto& k : c.at("kernels")) rc.crf.kernels.push_back(kernel_spec_from_json(k));
    }
    if (j.contains("params")) {
        const auto& p = j.at("params");
        detail::reject_unknown_keys(p,
                                    {"w1", "w2", "theta_alpha", "theta_beta", "theta_gamma",
                                     "learn_smoothness", "learn_compatibility"},
                                    "params");
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw ConfigError(std::string("params.") + name + " must be positive");
            return v;
        };
        rc.params.set_w1(positive(p.value("w1", 1.0), "w1"));
        rc.params.set_w2(positive(p.value("w2", 1.0), "w2"));
        rc.params.set_theta_alpha(positive(p.value("theta_alpha", 13.0), "theta_alpha"));
        rc.params.set_theta_beta(positive(p.value("theta_beta", 13.0), "theta_beta"));
        rc.params.set_theta_gamma(positive(p.value("theta_gamma", 3.0), "theta_gamma"));
        rc.learn_smoothness = p.value("learn_smoothness", false);
        rc.learn_compatibility = p.value("learn_compatibility", false);
        if (rc.learn_compatibility) rc.crf.compat_variant = CompatVariant::LearnableMatrix;
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        detail::reject_unknown_keys(n, {"down_factor", "flip_prob", "num_classes", "seed"}, "noise");
        rc.noise.down_factor = n.value("down_factor", rc.noise.down_factor);
        rc.noise.flip_prob = n.value("flip_prob", rc.noise.flip_prob);
        rc.noise.num_classes = n.value("num_classes", rc.noise.num_classes);
        rc.noise.seed = n.value("seed", rc.noise.seed);
        rc.noise.validate();
    }
    if (j.contains("synthesize")) {
        const auto& s = j.at("synthesize");
        detail::reject_unknown_keys(s, {"count", "height", "width", "confidence"}, "synthesize");
        rc.synth_count = s.value("count", rc.synth_count);
        rc.synth_height = s.value("height", rc.synth_height);
        rc.synth_width = s.value("width", rc.synth_width);
        rc.confidence = s.value("confidence", rc.confidence);
        if (rc.synth_count < 1) throw ConfigError("synthesize.count must be >= 1");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t,
                                    {"learning_rate", "steps", "batch_size", "optimizer", "beta1",
                                     "beta2", "epsilon", "seed", "resume_from"},
                                    "train");
        rc.train.learning_rate = t.value("learning_rate", rc.train.learning_rate);
        rc.train.steps = t.value("steps", rc.train.steps);
        rc.train.batch_size = t.value("batch_size", rc.train.batch_size);
        std::string opt = t.value("optimizer", std::string("adam"));
        if (opt == "adam")
            rc.train.optimizer = OptimizerKind::Adam;
        else if (opt == "sgd")
            rc.train.optimizer = OptimizerKind::SGD;
        else
            throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
        rc.train.beta1 = t.value("beta1", rc.train.beta1);
        rc.train.beta2 = t.value("beta2", rc.train.beta2);
        rc.train.epsilon = t.value("epsilon", rc.train.epsilon);
        rc.train.seed = t.value("seed", rc.train.seed);
        rc.resume_from = t.value("resume_from", std::string());
        rc.train.validate();
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        detail::reject_unknown_keys(
            b, {"sizes", "filter_sizes", "classes", "repetitions", "warmup"}, "bench");
        if (b.contains("sizes")) {
            rc.bench_sizes.clear();
            for (const auto& s : b.at("sizes")) {
                if (!s.is_array() || s.size() != 2) throw ConfigError("bench.sizes entries are [h, w]");
                rc.bench_sizes.emplace_back(s[0].get<int>(), s[1].get<int>());
            }
        }
        if (b.contains("filter_sizes"))
            rc.bench_filter_sizes = b.at("filter_sizes").get<std::vector<int>>();
        rc.bench_classes = b.value("classes", rc.bench_classes);
        rc.bench_repetitions = b.value("repetitions", rc.bench_repetitions);
        rc.bench_warmup = b.value("warmup", rc.bench_warmup);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        detail::reject_unknown_keys(p, {"dataset", "pred", "out"}, "paths");
        rc.dataset_dir = p.value("dataset", std::string());
        rc.pred_dir = p.value("pred", std::string());
        rc.out_dir = p.value("out", std::string());
    }
    rc.crf.validate();
    return rc;
}

inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["crf"] = {{"filter_size", crf.filter_size},
                {"iterations", crf.iterations},
                {"blur_factor", crf.blur_factor},
                {"exclude_center", crf.exclude_center},
                {"normalization", crf.normalization},
                {"compatibility",
                 crf.compat_variant == CompatVariant::Potts ? "potts" : "matrix"}};
    nlohmann::json kernels = nlohmann::json::array();
    if (crf.kernels.empty()) {
        // Echo the resolved standard kernel pair.
        KernelSpec app{{"pos_x", "pos_y", "r", "g", "b"},
                       {params.theta_alpha(), params.theta_alpha(), params.theta_beta(),
                        params.theta_beta(), params.theta_beta()},
                       params.w1(),
                       true};
        KernelSpec smooth{{"pos_x", "pos_y"},
                          {params.theta_gamma(), params.theta_gamma()},
                          params.w2(),
                          true};
        kernels.push_back(kernel_spec_to_json(app));
        kernels.push_back(kernel_spec_to_json(smooth));
    } else {
        for (const auto& ks : crf.kernels) kernels.push_back(kernel_spec_to_json(ks));
    }
    j["crf"]["kernels"] = kernels;
    j["params"] = {{"w1", params.w1()},
                   {"w2", params.w2()},
                   {"theta_alpha", params.theta_alpha()},
                   {"theta_beta", params.theta_beta()},
                   {"theta_gamma", params.theta_gamma()},
                   {"learn_smoothness", learn_smoothness},
                   {"learn_compatibility", learn_compatibility}};
    j["noise"] = {{"down_factor", noise.down_factor},
                  {"flip_prob", noise.flip_prob},
                  {"num_classes", noise.num_classes},
                  {"seed", noise.seed}};
    j["synthesize"] = {{"count", synth_count},
                       {"height", synth_height},
                       {"width", synth_width},
                       {"confidence", confidence}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"optimizer", train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"epsilon", train.epsilon},
                  {"seed", train.seed},
                  {"resume_from", resume_from}};
    nlohmann::json sizes = nlohmann::json::array();
    for (auto [h, w] : bench_sizes) sizes.push_back({h, w});
    j["bench"] = {{"sizes", sizes},
                  {"filter_sizes", bench_filter_sizes},
                  {"classes", bench_classes},
                  {"repetitions", bench_repetitions},
                  {"warmup", bench_warmup}};
    j["paths"] = {{"dataset", dataset_dir}, {"pred", pred_dir}, {"out", out_dir}};
    return j;
}

inline RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace convcrf
