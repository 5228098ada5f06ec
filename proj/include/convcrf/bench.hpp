#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "convcrf/mean_field.hpp"
#include "convcrf/rng.hpp"

namespace convcrf {

struct BenchRow {
    int h = 0, w = 0, c = 0, k = 0;
    double mean_ms = 0.0, std_ms = 0.0, median_ms = 0.0;
    int iters = 0;
};

// Times full inference (kernel construction + all mean-field iterations) on
// random inputs. Warm-up repetitions are discarded before the statistics.
inline BenchRow bench_inference(int h, int w, int c, int k, int iterations, int repetitions,
                                int warmup, std::uint64_t seed = 42) {
    Rng rng(seed);
    Tensor<float> unary(1, c, h, w), image(1, 3, h, w);
    unary.fill_uniform(rng, -2.0, 2.0);
    image.fill_uniform(rng, 0.0, 255.0);
    CrfParams<float> params;
    ConvCrfConfig config;
    config.filter_size = k;
    config.iterations = iterations;

    std::vector<double> times;
    for (int rep = 0; rep < warmup + repetitions; ++rep) {
        auto t0 = std::chrono::steady_clock::now();
        Tensor<float> q = inference(unary, image, params, config);
        auto t1 = std::chrono::steady_clock::now();
        if (q.size() != unary.size()) throw std::logic_error("bench: unexpected output shape");
        if (rep >= warmup)
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    BenchRow row{h, w, c, k, 0.0, 0.0, 0.0, iterations};
    double sum = 0.0;
    for (double t : times) sum += t;
    row.mean_ms = sum / times.size();
    double var = 0.0;
    for (double t : times) var += (t - row.mean_ms) * (t - row.mean_ms);
    row.std_ms = times.size() > 1 ? std::sqrt(var / (times.size() - 1)) : 0.0;
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    row.median_ms = sorted[sorted.size() / 2];
    return row;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "h,w,c,k,mean_ms,std_ms,iters\n";
    for (const auto& r : rows)
        f << r.h << "," << r.w << "," << r.c << "," << r.k << "," << r.mean_ms << "," << r.std_ms
          << "," << r.iters << "\n";
}

}  // namespace convcrf
