#pragma once

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "convcrf/ctf_io.hpp"
#include "convcrf/params.hpp"

namespace convcrf {

// Checkpoint directory: manifest.json mapping parameter-group names to files,
// CTF1 tensors for plane/matrix groups, scalars stored in the manifest itself
// (nlohmann emits shortest round-trip doubles, so reloads are bit-identical).

inline void save_checkpoint(const std::string& dir, const CrfParams<float>& params) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "convcrf-checkpoint-v1";
    manifest["scalars"] = {{"log_w1", params.log_w1},
                           {"log_w2", params.log_w2},
                           {"log_theta_alpha", params.log_theta_alpha},
                           {"log_theta_beta", params.log_theta_beta},
                           {"log_theta_gamma", params.log_theta_gamma}};
    nlohmann::json groups = nlohmann::json::object();
    if (params.learn_smoothness && params.smoothness_features.size() > 0) {
        write_ctf((fs::path(dir) / "smoothness_features.ctf").string(),
                  params.smoothness_features);
        groups["smoothness_features"] = "smoothness_features.ctf";
    }
    if (!params.compat_matrix.empty()) {
        Tensor<float> m(1, 1, params.compat_classes, params.compat_classes);
        std::copy(params.compat_matrix.begin(), params.compat_matrix.end(), m.data.begin());
        write_ctf((fs::path(dir) / "compat_matrix.ctf").string(), m);
        groups["compat_matrix"] = "compat_matrix.ctf";
    }
    manifest["groups"] = groups;
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw DataError("cannot write checkpoint manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

inline CrfParams<float> load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw DataError("cannot open checkpoint manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(f);
    if (manifest.value("format", "") != "convcrf-checkpoint-v1")
        throw DataError("unknown checkpoint format in " + dir);
    CrfParams<float> params;
    const auto& s = manifest.at("scalars");
    params.log_w1 = s.at("log_w1").get<double>();
    params.log_w2 = s.at("log_w2").get<double>();
    params.log_theta_alpha = s.at("log_theta_alpha").get<double>();
    params.log_theta_beta = s.at("log_theta_beta").get<double>();
    params.log_theta_gamma = s.at("log_theta_gamma").get<double>();
    const auto& groups = manifest.at("groups");
    if (groups.contains("smoothness_features")) {
        params.smoothness_features =
            read_ctf((fs::path(dir) / groups.at("smoothness_features").get<std::string>()).string());
        params.learn_smoothness = true;
    }
    if (groups.contains("compat_matrix")) {
        Tensor<float> m =
            read_ctf((fs::path(dir) / groups.at("compat_matrix").get<std::string>()).string());
        params.compat_classes = m.h;
        params.compat_matrix.assign(m.data.begin(), m.data.end());
    }
    return params;
}

}  // namespace convcrf
