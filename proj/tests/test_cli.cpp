#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "convcrf/commands.hpp"
#include "test_helpers.hpp"

using namespace convcrf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

RunConfig small_run_config() {
    RunConfig rc;
    rc.synth_count = 4;
    rc.synth_height = 64;
    rc.synth_width = 64;
    rc.noise.num_classes = 3;
    rc.noise.down_factor = 8;
    rc.noise.flip_prob = 0.1;
    rc.noise.seed = 7;
    rc.crf.filter_size = 7;
    rc.crf.iterations = 5;
    return rc;
}

double metrics_value(const std::string& path, const std::string& key) {
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    return j.at(key).get<double>();
}

// Baseline quality of the stored unary potentials: argmax per pixel.
double unary_argmax_miou(const Dataset& ds) {
    ConfusionMatrix cm(ds.num_classes);
    for (int i = 0; i < ds.count; ++i)
        accumulate(cm, argmax_labels(ds.load_unary(i)), ds.load_labels(i));
    return miou(cm);
}

}  // namespace

TEST_CASE("synthesize writes a complete, deterministic dataset") {
    RunConfig rc = small_run_config();
    std::string a = testutil::scratch_dir("synth_a");
    std::string b = testutil::scratch_dir("synth_b");
    REQUIRE(cmd_synthesize(rc, a) == 0);
    REQUIRE(cmd_synthesize(rc, b) == 0);

    for (int i = 0; i < rc.synth_count; ++i) {
        REQUIRE(fs::exists(a + "/images/" + sample_id(i) + ".png"));
        REQUIRE(fs::exists(a + "/labels/" + sample_id(i) + ".png"));
        REQUIRE(fs::exists(a + "/unary/" + sample_id(i) + ".ctf"));
        // byte-identical across runs with the same config
        REQUIRE(slurp(a + "/labels/" + sample_id(i) + ".png") ==
                slurp(b + "/labels/" + sample_id(i) + ".png"));
        REQUIRE(slurp(a + "/unary/" + sample_id(i) + ".ctf") ==
                slurp(b + "/unary/" + sample_id(i) + ".ctf"));
    }
    REQUIRE(fs::exists(a + "/manifest.json"));
    REQUIRE(fs::exists(a + "/resolved_config.json"));

    Dataset ds = Dataset::open(a);
    REQUIRE(ds.count == 4);
    REQUIRE(ds.num_classes == 3);
    REQUIRE(ds.height == 64);
    Tensor<float> u = ds.load_unary(0);
    REQUIRE(u.c == 3);
    REQUIRE(u.h == 64);
    REQUIRE(u.w == 64);
}

TEST_CASE("synthesized unary argmax reflects the corrupted labels") {
    RunConfig rc = small_run_config();
    std::string dir = testutil::scratch_dir("synth_noise");
    cmd_synthesize(rc, dir);
    Dataset ds = Dataset::open(dir);
    // disagreement between unary argmax and clean labels stays near the
    // configured flip probability (blocks flip independently per sample)
    std::int64_t wrong = 0, total = 0;
    for (int i = 0; i < ds.count; ++i) {
        LabelMap noisy = argmax_labels(ds.load_unary(i));
        LabelMap gt = ds.load_labels(i);
        // compare at block resolution where flips are independent
        for (int x = 0; x < gt.h; x += rc.noise.down_factor)
            for (int y = 0; y < gt.w; y += rc.noise.down_factor) {
                ++total;
                if (noisy.at(0, x, y) != gt.at(0, (x / 8) * 8, (y / 8) * 8)) ++wrong;
            }
    }
    double rate = static_cast<double>(wrong) / static_cast<double>(total);
    CAPTURE(wrong, total, rate);
    // 256 Bernoulli(0.1) trials: allow a generous band
    REQUIRE(rate > 0.04);
    REQUIRE(rate < 0.2);
}

TEST_CASE("infer with vanishing pairwise weights reproduces the unary argmax") {
    RunConfig rc = small_run_config();
    std::string data = testutil::scratch_dir("infer_zero_data");
    std::string out = testutil::scratch_dir("infer_zero_out");
    cmd_synthesize(rc, data);

    RunConfig infer_rc = rc;
    infer_rc.params.log_w1 = -80.0;
    infer_rc.params.log_w2 = -80.0;
    REQUIRE(cmd_infer(infer_rc, data, out) == 0);

    Dataset ds = Dataset::open(data);
    double baseline = unary_argmax_miou(ds);
    double crf = metrics_value(out + "/metrics.json", "miou");
    REQUIRE(crf == Catch::Approx(baseline).margin(1e-9));

    // prediction PNGs literally equal the unary argmax
    for (int i = 0; i < ds.count; ++i) {
        LabelMap pred = image_to_labels(read_png(out + "/pred/" + sample_id(i) + ".png"));
        LabelMap base = argmax_labels(ds.load_unary(i));
        REQUIRE(pred.values == base.values);
    }
}

TEST_CASE("infer improves on the unary baseline and writes timing data") {
    RunConfig rc = small_run_config();
    std::string data = testutil::scratch_dir("infer_data");
    std::string out = testutil::scratch_dir("infer_out");
    cmd_synthesize(rc, data);
    REQUIRE(cmd_infer(rc, data, out) == 0);

    Dataset ds = Dataset::open(data);
    double baseline = unary_argmax_miou(ds);
    double crf = metrics_value(out + "/metrics.json", "miou");
    CAPTURE(baseline, crf);
    REQUIRE(crf > baseline);

    std::istringstream csv(slurp(out + "/timing.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    REQUIRE(line == "image,ms");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        REQUIRE(std::stod(line.substr(comma + 1)) >= 0.0);
    }
    REQUIRE(rows == ds.count);

    // metrics.json carries all three required fields
    nlohmann::json m = nlohmann::json::parse(slurp(out + "/metrics.json"));
    REQUIRE(m.contains("miou"));
    REQUIRE(m.contains("accuracy"));
    REQUIRE(m.at("per_class_iou").size() == 3);
}

TEST_CASE("eval on a prediction directory matches infer's own metrics") {
    RunConfig rc = small_run_config();
    std::string data = testutil::scratch_dir("eval_data");
    std::string out = testutil::scratch_dir("eval_infer_out");
    std::string eval_out = testutil::scratch_dir("eval_out");
    cmd_synthesize(rc, data);
    REQUIRE(cmd_infer(rc, data, out) == 0);
    REQUIRE(cmd_eval(out + "/pred", data, eval_out) == 0);
    REQUIRE(metrics_value(eval_out + "/metrics.json", "miou") ==
            Catch::Approx(metrics_value(out + "/metrics.json", "miou")).margin(1e-12));
    REQUIRE(metrics_value(eval_out + "/metrics.json", "accuracy") ==
            Catch::Approx(metrics_value(out + "/metrics.json", "accuracy")).margin(1e-12));
}

TEST_CASE("train with zero steps checkpoints the initial parameters") {
    RunConfig rc = small_run_config();
    rc.train.steps = 0;
    std::string data = testutil::scratch_dir("train0_data");
    std::string out = testutil::scratch_dir("train0_out");
    cmd_synthesize(rc, data);
    REQUIRE(cmd_train(rc, data, out) == 0);

    CrfParams<float> loaded = load_checkpoint(out + "/checkpoint");
    REQUIRE(loaded.log_w1 == rc.params.log_w1);
    REQUIRE(loaded.log_theta_alpha == rc.params.log_theta_alpha);
    REQUIRE(loaded.log_theta_gamma == rc.params.log_theta_gamma);
    REQUIRE(slurp(out + "/loss.csv") == "step,loss\n");
}

TEST_CASE("checkpoints reload bit-identically including tensor groups") {
    CrfParams<float> p;
    p.set_w1(2.5);
    p.set_theta_beta(17.0);
    p.init_smoothness_features(12, 10);
    Rng rng(5);
    p.smoothness_features.fill_uniform(rng, -3.0, 3.0);
    p.init_compat_matrix(4);
    p.compat_matrix[5] = 0.37f;

    std::string dir = testutil::scratch_dir("ckpt");
    save_checkpoint(dir, p);
    CrfParams<float> back = load_checkpoint(dir);
    REQUIRE(back.log_w1 == p.log_w1);
    REQUIRE(back.log_w2 == p.log_w2);
    REQUIRE(back.log_theta_alpha == p.log_theta_alpha);
    REQUIRE(back.log_theta_beta == p.log_theta_beta);
    REQUIRE(back.log_theta_gamma == p.log_theta_gamma);
    REQUIRE(back.learn_smoothness);
    REQUIRE(back.smoothness_features.data == p.smoothness_features.data);
    REQUIRE(back.compat_classes == 4);
    REQUIRE(back.compat_matrix == p.compat_matrix);
    REQUIRE_THROWS_AS(load_checkpoint(dir + "/nonexistent"), DataError);
}

TEST_CASE("training continues from a resumed checkpoint without a jump") {
    // SGD carries no optimizer state beyond the parameters, so a 4-step run
    // followed by a 2-step resume must retrace a continuous 6-step run.
    RunConfig rc = small_run_config();
    rc.crf.filter_size = 3;
    rc.crf.iterations = 2;
    rc.train.optimizer = OptimizerKind::SGD;
    rc.train.learning_rate = 5e-3;
    rc.train.batch_size = 2;
    std::string data = testutil::scratch_dir("resume_data");
    std::string out1 = testutil::scratch_dir("resume_out1");
    std::string out2 = testutil::scratch_dir("resume_out2");
    std::string out_full = testutil::scratch_dir("resume_out_full");
    cmd_synthesize(rc, data);

    rc.train.steps = 4;
    REQUIRE(cmd_train(rc, data, out1) == 0);
    RunConfig rc2 = rc;
    rc2.resume_from = out1 + "/checkpoint";
    rc2.train.steps = 2;
    REQUIRE(cmd_train(rc2, data, out2) == 0);
    RunConfig rc_full = rc;
    rc_full.train.steps = 6;
    REQUIRE(cmd_train(rc_full, data, out_full) == 0);

    auto losses = [](const std::string& path) {
        std::istringstream csv(slurp(path));
        std::string line;
        std::getline(csv, line);  // header
        std::vector<double> out;
        while (std::getline(csv, line))
            if (!line.empty()) out.push_back(std::stod(line.substr(line.find(',') + 1)));
        return out;
    };
    std::vector<double> leg1 = losses(out1 + "/loss.csv");
    std::vector<double> leg2 = losses(out2 + "/loss.csv");
    std::vector<double> full = losses(out_full + "/loss.csv");
    REQUIRE(leg1.size() == 4);
    REQUIRE(leg2.size() == 2);
    REQUIRE(full.size() == 6);
    for (int i = 0; i < 4; ++i)
        REQUIRE(leg1[i] == Catch::Approx(full[i]).epsilon(1e-9));
    // the resumed leg picks up exactly where the continuous run is; the CSV
    // carries limited digits, hence the tolerance
    for (int i = 0; i < 2; ++i) {
        CAPTURE(i, leg2[i], full[4 + i]);
        REQUIRE(leg2[i] == Catch::Approx(full[4 + i]).epsilon(1e-4));
    }
    // mini-batch cycling restarts on resume: only assert the continuity of
    // the first resumed step when batches realign, which they do here because
    // 4 steps x batch 2 wraps the 4-sample dataset exactly
}

TEST_CASE("bench writes one CSV row per size and filter combination") {
    RunConfig rc;
    rc.bench_sizes = {{16, 16}, {24, 16}};
    rc.bench_filter_sizes = {3, 5};
    rc.bench_classes = 3;
    rc.bench_repetitions = 2;
    rc.bench_warmup = 1;
    rc.crf.iterations = 2;
    std::string out = testutil::scratch_dir("bench_out");
    REQUIRE(cmd_bench(rc, out) == 0);
    std::istringstream csv(slurp(out + "/bench.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    REQUIRE(line == "h,w,c,k,mean_ms,std_ms,iters");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 4);
}

TEST_CASE("run configs parse strictly and round trip through the echo") {
    SECTION("unknown keys are rejected at every level") {
        REQUIRE_THROWS_AS(RunConfig::from_json({{"crrf", {{"filter_size", 7}}}}), ConfigError);
        REQUIRE_THROWS_AS(RunConfig::from_json({{"crf", {{"filtersize", 7}}}}), ConfigError);
        REQUIRE_THROWS_AS(RunConfig::from_json({{"train", {{"lr", 0.1}}}}), ConfigError);
    }
    SECTION("invalid values are rejected") {
        REQUIRE_THROWS_AS(RunConfig::from_json({{"crf", {{"filter_size", 4}}}}), ConfigError);
        REQUIRE_THROWS_AS(RunConfig::from_json({{"params", {{"w1", -1.0}}}}), ConfigError);
        REQUIRE_THROWS_AS(RunConfig::from_json({{"crf", {{"compatibility", "diag"}}}}),
                          ConfigError);
        REQUIRE_THROWS_AS(RunConfig::from_json({{"train", {{"optimizer", "lbfgs"}}}}),
                          ConfigError);
    }
    SECTION("parsed values land in the right places") {
        nlohmann::json j = {{"crf", {{"filter_size", 9}, {"blur_factor", 4}, {"compatibility", "matrix"}}},
                            {"params", {{"theta_beta", 21.0}, {"learn_smoothness", true}}},
                            {"train", {{"optimizer", "sgd"}, {"steps", 3}}}};
        RunConfig rc = RunConfig::from_json(j);
        REQUIRE(rc.crf.filter_size == 9);
        REQUIRE(rc.crf.blur_factor == 4);
        REQUIRE(rc.crf.compat_variant == CompatVariant::LearnableMatrix);
        REQUIRE(rc.params.theta_beta() == Catch::Approx(21.0));
        REQUIRE(rc.learn_smoothness);
        REQUIRE(rc.train.optimizer == OptimizerKind::SGD);
        REQUIRE(rc.train.steps == 3);
    }
    SECTION("the echoed config re-parses to the same settings") {
        RunConfig rc = small_run_config();
        nlohmann::json echoed = rc.to_json();
        // the echo expands the standard kernel pair, which from_json treats
        // as custom kernels; strip it to compare the scalar settings
        echoed["crf"].erase("kernels");
        RunConfig back = RunConfig::from_json(echoed);
        REQUIRE(back.crf.filter_size == rc.crf.filter_size);
        REQUIRE(back.crf.iterations == rc.crf.iterations);
        REQUIRE(back.noise.flip_prob == rc.noise.flip_prob);
        REQUIRE(back.synth_count == rc.synth_count);
        REQUIRE(back.params.theta_alpha() == Catch::Approx(rc.params.theta_alpha()));
    }
    SECTION("load rejects missing and malformed files") {
        std::string dir = testutil::scratch_dir("cfg");
        REQUIRE_THROWS_AS(RunConfig::load(dir + "/missing.json"), ConfigError);
        {
            std::ofstream f(dir + "/bad.json");
            f << "{ not json";
        }
        REQUIRE_THROWS_AS(RunConfig::load(dir + "/bad.json"), ConfigError);
    }
}
