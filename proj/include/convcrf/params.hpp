#pragma once

#include <cmath>
#include <vector>

#include "convcrf/tensor.hpp"

namespace convcrf {

// All learnable CRF parameters. Positive scalars (kernel weights and
// bandwidths) are stored in log-space so gradient updates can never drive
// them out of their domain.
//
// Scalar defaults mirror the common FullCRF parameterization on a 0..255
// color scale: w1 = w2 = 1, theta_alpha = theta_beta = 13, theta_gamma = 3.
template <typename T>
struct CrfParams {
    double log_w1 = 0.0;
    double log_w2 = 0.0;
    double log_theta_alpha = std::log(13.0);
    double log_theta_beta = std::log(13.0);
    double log_theta_gamma = std::log(3.0);

    // Optional learnable replacement for the smoothness kernel's spatial
    // features: shape (1, 2, h, w), shared across the batch. Empty = use the
    // fixed mesh coordinates.
    bool learn_smoothness = false;
    Tensor<T> smoothness_features;

    // Optional learnable c x c compatibility matrix (row-major [l][l']).
    // Empty = Potts model.
    std::vector<T> compat_matrix;
    int compat_classes = 0;

    double w1() const { return std::exp(log_w1); }
    double w2() const { return std::exp(log_w2); }
    double theta_alpha() const { return std::exp(log_theta_alpha); }
    double theta_beta() const { return std::exp(log_theta_beta); }
    double theta_gamma() const { return std::exp(log_theta_gamma); }

    void set_w1(double v) { log_w1 = std::log(v); }
    void set_w2(double v) { log_w2 = std::log(v); }
    void set_theta_alpha(double v) { log_theta_alpha = std::log(v); }
    void set_theta_beta(double v) { log_theta_beta = std::log(v); }
    void set_theta_gamma(double v) { log_theta_gamma = std::log(v); }

    void init_smoothness_features(int h, int w) {
        learn_smoothness = true;
        smoothness_features = Tensor<T>(1, 2, h, w);
        for (int x = 0; x < h; ++x)
            for (int y = 0; y < w; ++y) {
                smoothness_features.at(0, 0, x, y) = static_cast<T>(x);
                smoothness_features.at(0, 1, x, y) = static_cast<T>(y);
            }
    }

    // Potts pattern: 0 on the diagonal, 1 elsewhere.
    void init_compat_matrix(int c) {
        compat_classes = c;
        compat_matrix.assign(static_cast<std::size_t>(c) * c, T(1));
        for (int l = 0; l < c; ++l) compat_matrix[static_cast<std::size_t>(l) * c + l] = T(0);
    }

    template <typename U>
    CrfParams<U> cast() const {
        CrfParams<U> out;
        out.log_w1 = log_w1;
        out.log_w2 = log_w2;
        out.log_theta_alpha = log_theta_alpha;
        out.log_theta_beta = log_theta_beta;
        out.log_theta_gamma = log_theta_gamma;
        out.learn_smoothness = learn_smoothness;
        if (smoothness_features.size() > 0)
            out.smoothness_features = smoothness_features.template cast<U>();
        out.compat_classes = compat_classes;
        out.compat_matrix.assign(compat_matrix.begin(), compat_matrix.end());
        return out;
    }
};

}  // namespace convcrf
