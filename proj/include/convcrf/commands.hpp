#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convcrf/bench.hpp"
#include "convcrf/checkpoint.hpp"
#include "convcrf/config.hpp"
#include "convcrf/dataset.hpp"
#include "convcrf/mean_field.hpp"
#include "convcrf/metrics.hpp"
#include "convcrf/synthetic.hpp"
#include "convcrf/training.hpp"

namespace convcrf {

namespace detail {

inline void write_config_echo(const std::string& out_dir, const RunConfig& rc) {
    std::ofstream f(std::filesystem::path(out_dir) / "resolved_config.json");
    if (!f) throw DataError("cannot write resolved_config.json in " + out_dir);
    f << rc.to_json().dump(2) << "\n";
}

inline CrfParams<float> resolved_params(const RunConfig& rc, int h, int w, int classes) {
    if (!rc.resume_from.empty()) return load_checkpoint(rc.resume_from);
    CrfParams<float> p = rc.params;
    if (rc.learn_smoothness) p.init_smoothness_features(h, w);
    if (rc.learn_compatibility) p.init_compat_matrix(classes);
    return p;
}

}  // namespace detail

// Generates the toy dataset, corrupts the labels, and converts them to unary
// logits. The manifest is written last and marks the directory complete.
inline int cmd_synthesize(const RunConfig& rc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "labels");
    fs::create_directories(fs::path(out_dir) / "unary");

    const int c = rc.noise.num_classes;
    auto samples = make_toy_dataset<float>(rc.synth_count, rc.synth_height, rc.synth_width, c,
                                           rc.noise.seed);
    for (int i = 0; i < rc.synth_count; ++i) {
        NoiseConfig nc = rc.noise;
        nc.seed = rc.noise.seed + 1000003ull * static_cast<std::uint64_t>(i);
        LabelMap noised = corrupt_labels(samples[i].gt, nc);
        Tensor<float> unary = labels_to_unary<float>(noised, rc.confidence, c);
        write_png(out_dir + "/images/" + sample_id(i) + ".png", tensor_to_image(samples[i].image));
        write_png(out_dir + "/labels/" + sample_id(i) + ".png", labels_to_image(samples[i].gt));
        write_ctf(out_dir + "/unary/" + sample_id(i) + ".ctf", unary);
    }

    nlohmann::json manifest = {{"format", "convcrf-dataset-v1"},
                               {"count", rc.synth_count},
                               {"num_classes", c},
                               {"height", rc.synth_height},
                               {"width", rc.synth_width},
                               {"seed", rc.noise.seed},
                               {"confidence", rc.confidence},
                               {"noise",
                                {{"down_factor", rc.noise.down_factor},
                                 {"flip_prob", rc.noise.flip_prob},
                                 {"num_classes", rc.noise.num_classes},
                                 {"seed", rc.noise.seed}}}};
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    detail::write_config_echo(out_dir, rc);
    return 0;
}

// Runs CRF inference over a dataset: per-image prediction PNGs, aggregate
// metrics JSON, and a per-image wall-clock CSV. Per-image failures are
// reported and skipped; any failure makes the exit code nonzero.
inline int cmd_infer(const RunConfig& rc, const std::string& dataset_dir,
                     const std::string& out_dir, int jobs = 0) {
    namespace fs = std::filesystem;
    Dataset ds = Dataset::open(dataset_dir);
    fs::create_directories(fs::path(out_dir) / "pred");

    std::vector<double> ms(ds.count, 0.0);
    std::vector<ConfusionMatrix> cms(ds.count, ConfusionMatrix(ds.num_classes));
    std::vector<std::string> errors(ds.count);
    const bool have_labels = ds.has_labels();

    CrfParams<float> params = detail::resolved_params(rc, ds.height, ds.width, ds.num_classes);
    parallel_for(
        ds.count,
        [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                try {
                    Tensor<float> unary = ds.load_unary(static_cast<int>(i));
                    Tensor<float> image = ds.load_image(static_cast<int>(i));
                    if (unary.h != image.h || unary.w != image.w)
                        throw ShapeError("unary and image shapes differ");
                    auto t0 = std::chrono::steady_clock::now();
                    Tensor<float> q = inference(unary, image, params, rc.crf);
                    auto t1 = std::chrono::steady_clock::now();
                    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
                    LabelMap pred = argmax_labels(q);
                    write_png(out_dir + "/pred/" + sample_id(static_cast<int>(i)) + ".png",
                              labels_to_image(pred));
                    if (have_labels)
                        accumulate(cms[i], pred, ds.load_labels(static_cast<int>(i)));
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        },
        jobs);

    std::ofstream csv(fs::path(out_dir) / "timing.csv");
    csv << "image,ms\n";
    for (int i = 0; i < ds.count; ++i)
        if (errors[i].empty()) csv << sample_id(i) << "," << ms[i] << "\n";

    if (have_labels) {
        ConfusionMatrix total(ds.num_classes);
        for (const auto& cm : cms) total += cm;
        nlohmann::json report = {{"miou", miou(total)},
                                 {"accuracy", pixel_accuracy(total)},
                                 {"per_class_iou", per_class_iou(total)}};
        std::ofstream mf(fs::path(out_dir) / "metrics.json");
        mf << report.dump(2) << "\n";
    }
    detail::write_config_echo(out_dir, rc);

    int failures = 0;
    for (int i = 0; i < ds.count; ++i)
        if (!errors[i].empty()) {
            std::cerr << "infer: sample " << sample_id(i) << " failed: " << errors[i] << "\n";
            ++failures;
        }
    return failures == 0 ? 0 : 1;
}

// Decoupled CRF training on a labeled dataset; writes a checkpoint directory
// and the per-step loss curve.
inline int cmd_train(const RunConfig& rc, const std::string& dataset_dir,
                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    Dataset ds = Dataset::open(dataset_dir);
    if (!ds.has_labels()) throw DataError("cmd_train: dataset has no labels directory");
    fs::create_directories(out_dir);

    std::vector<TrainSample<float>> samples;
    samples.reserve(ds.count);
    for (int i = 0; i < ds.count; ++i)
        samples.push_back({ds.load_image(i), ds.load_unary(i), ds.load_labels(i)});

    CrfParams<float> init = detail::resolved_params(rc, ds.height, ds.width, ds.num_classes);
    FitResult<float> result = fit(init, samples, rc.train, rc.crf);

    save_checkpoint((fs::path(out_dir) / "checkpoint").string(), result.params);
    std::ofstream csv(fs::path(out_dir) / "loss.csv");
    csv << "step,loss\n";
    for (std::size_t s = 0; s < result.losses.size(); ++s) csv << s << "," << result.losses[s] << "\n";
    detail::write_config_echo(out_dir, rc);
    return 0;
}

// Compares an existing prediction directory against dataset labels.
inline int cmd_eval(const std::string& pred_dir, const std::string& dataset_dir,
                    const std::string& out_dir) {
    namespace fs = std::filesystem;
    Dataset ds = Dataset::open(dataset_dir);
    fs::create_directories(out_dir);
    ConfusionMatrix total(ds.num_classes);
    for (int i = 0; i < ds.count; ++i) {
        LabelMap pred = image_to_labels(read_png(pred_dir + "/" + sample_id(i) + ".png"));
        accumulate(total, pred, ds.load_labels(i));
    }
    nlohmann::json report = {{"miou", miou(total)},
                             {"accuracy", pixel_accuracy(total)},
                             {"per_class_iou", per_class_iou(total)}};
    std::ofstream mf(fs::path(out_dir) / "metrics.json");
    mf << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";
    return 0;
}

inline int cmd_bench(const RunConfig& rc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<BenchRow> rows;
    for (auto [h, w] : rc.bench_sizes)
        for (int k : rc.bench_filter_sizes)
            rows.push_back(bench_inference(h, w, rc.bench_classes, k, rc.crf.iterations,
                                           rc.bench_repetitions, rc.bench_warmup));
    write_bench_csv((fs::path(out_dir) / "bench.csv").string(), rows);
    detail::write_config_echo(out_dir, rc);
    return 0;
}

}  // namespace convcrf
