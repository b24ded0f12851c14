// Copyright 2025 The flowlab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "datasets.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "rng.hpp"

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.data_n = 256;
    cfg.hidden = {16, 16};
    cfg.steps = 40;
    cfg.batch = 32;
    cfg.sample_steps = 8;
    cfg.sample_n = 64;
    cfg.log_every = 10;
    return cfg;
}

}  // namespace

TEST_CASE("toy datasets: determinism, moments, and label structure") {
    ToyDataset a = gen_toy_dataset("gauss_mixture", 500, 9);
    ToyDataset b = gen_toy_dataset("gauss_mixture", 500, 9);
    CHECK(a.points.vec() == b.points.vec());
    CHECK(a.labels == b.labels);

    ToyDataset big = gen_toy_dataset("gauss_mixture", 10000, 10);
    double mx = 0, my = 0;
    for (int64_t i = 0; i < 10000; ++i) {
        mx += big.points.at({i, 0});
        my += big.points.at({i, 1});
    }
    CHECK(std::fabs(mx / 10000.0) < 0.1);
    CHECK(std::fabs(my / 10000.0) < 0.1);

    ToyDataset cb = gen_toy_dataset("cond_checkerboard", 100, 11);
    std::vector<int> counts(4, 0);
    for (int64_t i = 0; i < 100; ++i) {
        int label = cb.labels[static_cast<size_t>(i)];
        CHECK(label >= 0);
        CHECK(label < 4);
        CHECK(checkerboard_class_at(cb.points.at({i, 0}), cb.points.at({i, 1})) == label);
        ++counts[static_cast<size_t>(label)];
    }
    for (int c : counts) CHECK(c > 0);

    ToyDataset moons = gen_toy_dataset("two_moons", 200, 12);
    CHECK(moons.n_classes == 2);

    CHECK_THROWS_AS(gen_toy_dataset("spiral", 10, 1), Error);
    CHECK_THROWS_AS(gen_toy_dataset("gauss_mixture", 0, 1), Error);
}

TEST_CASE("gauss_mixture analytic covariance") {
    // sample covariance of a large draw approaches sigma^2 + 4 on the diagonal
    ToyDataset big = gen_toy_dataset("gauss_mixture", 40000, 13);
    double sxx = 0, sxy = 0, syy = 0, mx = 0, my = 0;
    for (int64_t i = 0; i < 40000; ++i) {
        mx += big.points.at({i, 0});
        my += big.points.at({i, 1});
    }
    mx /= 40000;
    my /= 40000;
    for (int64_t i = 0; i < 40000; ++i) {
        double dx = big.points.at({i, 0}) - mx;
        double dy = big.points.at({i, 1}) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx /= 39999;
    sxy /= 39999;
    syy /= 39999;
    Tensor cov = gauss_mixture_cov();
    CHECK(std::fabs(sxx - cov.at({0, 0})) < 0.15);
    CHECK(std::fabs(syy - cov.at({1, 1})) < 0.15);
    CHECK(std::fabs(sxy) < 0.15);
}

TEST_CASE("config: file parsing, sections, arrays, and precedence") {
    {
        std::ofstream out("cfg_test.toml");
        out << "# comment\n";
        out << "[train]\n";
        out << "lr = 5e-3  # inline comment\n";
        out << "steps = 120\n";
        out << "[model]\n";
        out << "kind = \"dit\"\n";
        out << "hidden = [32, 16]\n";
        out << "conditional = true\n";
    }
    Config cfg = Config::from_file("cfg_test.toml");
    CHECK(cfg.get_double("train.lr", 0.0) == doctest::Approx(5e-3));
    CHECK(cfg.get_int("train.steps", 0) == 120);
    CHECK(cfg.get_str("model.kind", "") == "dit");
    CHECK(cfg.get_int_list("model.hidden", {}) == std::vector<int64_t>{32, 16});
    CHECK(cfg.get_bool("model.conditional", false));
    CHECK(cfg.get_int("train.batch", 77) == 77);  // default fallback

    cfg.set("train.lr", "1e-4");  // flag beats file
    CHECK(cfg.get_double("train.lr", 0.0) == doctest::Approx(1e-4));

    {
        std::ofstream out("cfg_test.toml");
        out << "[train\n";
    }
    CHECK_THROWS_AS(Config::from_file("cfg_test.toml"), Error);
    {
        std::ofstream out("cfg_test.toml");
        out << "novalue =\n";
    }
    CHECK_THROWS_AS(Config::from_file("cfg_test.toml"), Error);
    std::remove("cfg_test.toml");

    ExperimentConfig exp = resolve_experiment_config(Config());
    CHECK(exp.w_cfg == 3.5);       // sampling defaults
    CHECK(exp.sample_steps == 100);
    CHECK(exp.sample_method == "euler");
}

TEST_CASE("experiment config json roundtrip") {
    ExperimentConfig cfg = tiny_config();
    cfg.model_kind = "dit";
    cfg.conditional = true;
    ExperimentConfig back = experiment_config_from_json(experiment_config_json(cfg));
    CHECK(back.model_kind == "dit");
    CHECK(back.conditional);
    CHECK(back.steps == cfg.steps);
    CHECK(back.hidden == cfg.hidden);
}

TEST_CASE("wasserstein2: identity, translation, and brute-force oracle") {
    Rng rng(14);
    Tensor a({6, 2});
    for (int64_t i = 0; i < a.size(); ++i) a[i] = rng.gaussian();
    CHECK(wasserstein2(a, a) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor one({1, 2}, {0.0, 0.0});
    Tensor two({1, 2}, {1.0, 0.0});
    CHECK(wasserstein2(one, two) == doctest::Approx(1.0).epsilon(1e-12));

    // permuting the rows changes nothing: the assignment recovers it
    Tensor shuffled({6, 2});
    std::vector<int64_t> perm = {4, 2, 0, 5, 1, 3};
    for (int64_t i = 0; i < 6; ++i) {
        shuffled.at({i, 0}) = a.at({perm[static_cast<size_t>(i)], 0});
        shuffled.at({i, 1}) = a.at({perm[static_cast<size_t>(i)], 1});
    }
    CHECK(wasserstein2(a, shuffled) == doctest::Approx(0.0).epsilon(1e-12));

    // brute force over all 720 assignments for n=6
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x({6, 2}), y({6, 2});
        for (int64_t i = 0; i < 12; ++i) {
            x[i] = rng.gaussian();
            y[i] = rng.gaussian();
        }
        std::vector<int> idx = {0, 1, 2, 3, 4, 5};
        double best = 1e300;
        do {
            double cost = 0.0;
            for (int i = 0; i < 6; ++i) {
                double dx = x.at({i, 0}) - y.at({idx[static_cast<size_t>(i)], 0});
                double dy = x.at({i, 1}) - y.at({idx[static_cast<size_t>(i)], 1});
                cost += dx * dx + dy * dy;
            }
            best = std::min(best, cost);
        } while (std::next_permutation(idx.begin(), idx.end()));
        CHECK(wasserstein2(x, y) == doctest::Approx(std::sqrt(best / 6.0)).epsilon(1e-9));
    }
}

TEST_CASE("train: two steps produce one logged point and a loadable checkpoint") {
    ExperimentConfig cfg = tiny_config();
    cfg.steps = 2;
    RunReport report = train_experiment(cfg, 21, "exp_run_tiny");
    CHECK(report.loss_steps.size() == 1);
    CHECK(report.loss_steps[0] == 2);
    CHECK(std::isfinite(report.loss_values[0]));

    LoadedModel loaded = load_model("exp_run_tiny");
    CHECK(loaded.config.steps == 2);
    CHECK(loaded.model->params().size() > 0);
    fs::remove_all("exp_run_tiny");
}

TEST_CASE("train: checkpoint bytes are fixed by (config, seed)") {
    ExperimentConfig cfg = tiny_config();
    train_experiment(cfg, 33, "exp_det_a");
    train_experiment(cfg, 33, "exp_det_b");
    CHECK(slurp("exp_det_a/checkpoint.json") == slurp("exp_det_b/checkpoint.json"));
    CHECK(slurp("exp_det_a/report.json") == slurp("exp_det_b/report.json"));
    train_experiment(cfg, 34, "exp_det_c");
    CHECK(slurp("exp_det_a/checkpoint.json") != slurp("exp_det_c/checkpoint.json"));
    fs::remove_all("exp_det_a");
    fs::remove_all("exp_det_b");
    fs::remove_all("exp_det_c");
}

TEST_CASE("train: divergence aborts with the last good step") {
    ExperimentConfig cfg = tiny_config();
    cfg.steps = 60;
    // Runaway negative decay grows every weight by ~1e10 per step, so the
    // forward pass overflows deterministically after a few dozen updates.
    cfg.lr = 1e5;
    cfg.weight_decay = -1e5;
    try {
        train_experiment(cfg, 5, "exp_diverge");
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kNumeric);
        CHECK(std::string(e.what()).find("diverged at step") != std::string::npos);
        CHECK(std::string(e.what()).find("last good step") != std::string::npos);
    }
    fs::remove_all("exp_diverge");
}

TEST_CASE("sample: empty request writes only the header; seeds fix the bytes") {
    ExperimentConfig cfg = tiny_config();
    cfg.steps = 5;
    train_experiment(cfg, 8, "exp_sample");
    LoadedModel loaded = load_model("exp_sample");

    SampleOptions opts;
    opts.n = 0;
    opts.steps = 4;
    opts.w_cfg = 1.0;
    SampleSet empty = sample_points(*loaded.model, loaded.config, opts);
    write_samples_csv("empty.csv", empty);
    CHECK(slurp("empty.csv") == "x,y\n");

    opts.n = 16;
    opts.seed = 77;
    write_samples_csv("s1.csv", sample_points(*loaded.model, loaded.config, opts));
    write_samples_csv("s2.csv", sample_points(*loaded.model, loaded.config, opts));
    CHECK(slurp("s1.csv") == slurp("s2.csv"));
    opts.seed = 78;
    write_samples_csv("s3.csv", sample_points(*loaded.model, loaded.config, opts));
    CHECK(slurp("s1.csv") != slurp("s3.csv"));

    // CFG on an unconditional model is rejected
    opts.w_cfg = 3.0;
    CHECK_THROWS_AS(sample_points(*loaded.model, loaded.config, opts), Error);
    // class conditioning on an unconditional model is rejected
    opts.w_cfg = 1.0;
    opts.class_id = 0;
    CHECK_THROWS_AS(sample_points(*loaded.model, loaded.config, opts), Error);

    std::remove("empty.csv");
    std::remove("s1.csv");
    std::remove("s2.csv");
    std::remove("s3.csv");
    fs::remove_all("exp_sample");
}

TEST_CASE("sweep: single cell table with finite nonnegative fd") {
    ExperimentConfig cfg = tiny_config();
    cfg.steps = 5;
    train_experiment(cfg, 9, "exp_sweep");
    LoadedModel loaded = load_model("exp_sweep");
    SweepResult result = run_sweep(*loaded.model, loaded.config, {10}, {1.0},
                                   {SamplerConfig::Method::kEuler}, 1.0, nullptr, 3, 64, 256);
    REQUIRE(result.rows.size() == 1);
    CHECK(result.rows[0].error.empty());
    CHECK(result.rows[0].metrics.size() == 2);
    CHECK(result.rows[0].metrics[0] >= 0.0);
    CHECK(std::isfinite(result.rows[0].metrics[0]));
    CHECK(result.metric_names == std::vector<std::string>{"fd", "w2"});
    fs::remove_all("exp_sweep");
}

TEST_CASE("metrics report: identical sets, exact planted Gaussians, and markers") {
    {
        std::ofstream ref("mr_ref.jsonl"), gen("mr_gen.jsonl");
        ref.precision(17);
        gen.precision(17);
        double a = 1.0 / std::sqrt(2.0);
        // sample mean 0, unbiased variance 1
        ref << R"({"id": "a", "vec": [)" << -a << "]}\n";
        ref << R"({"id": "b", "vec": [)" << a << "]}\n";
        // sample mean 1, unbiased variance 1
        gen << R"({"id": "a", "vec": [)" << 1.0 - a << "]}\n";
        gen << R"({"id": "b", "vec": [)" << 1.0 + a << "]}\n";
    }
    nlohmann::json report = metrics_report("mr_ref.jsonl", "mr_gen.jsonl", "", "", "", "");
    CHECK(std::fabs(report["fd"].get<double>() - 1.0) < 1e-6);
    auto missing = report["not_computed"].get<std::vector<std::string>>();
    CHECK(std::find(missing.begin(), missing.end(), "paired_kl") != missing.end());
    CHECK(std::find(missing.begin(), missing.end(), "inception_score") != missing.end());
    CHECK(std::find(missing.begin(), missing.end(), "embedding_score") != missing.end());

    nlohmann::json same = metrics_report("mr_ref.jsonl", "mr_ref.jsonl", "", "", "", "");
    CHECK(same["fd"].get<double>() <= 1e-8);

    std::remove("mr_ref.jsonl");
    std::remove("mr_gen.jsonl");
}

TEST_CASE("filter pipeline end to end with file I/O") {
    {
        std::ofstream rec("flt_records.jsonl");
        rec << R"({"id": "r1", "duration": 20.0, "category": "music", "segments": [[1.0, 0.0], [1.0, 0.0]]})"
            << "\n";
        std::ofstream cand("flt_cands.jsonl");
        cand << R"({"record_id": "r1", "segment": 0, "captions": [{"text": "bright bell", "vec": [0.8, 0.6]}]})"
             << "\n";
        cand << R"({"record_id": "r1", "segment": 1, "captions": [{"text": "noisy hiss", "vec": [0.9, 0.43589]}]})"
             << "\n";
    }
    FilterConfig filter;
    DatasetSummary summary = run_filter("flt_records.jsonl", "flt_cands.jsonl", filter,
                                        "flt_out.jsonl", "flt_summary.json", "flt_hist.csv");
    CHECK(summary.accepted == 1);
    CHECK(summary.rejected_keyword == 1);
    CHECK(summary.evaluated() == 2);
    std::string hist = slurp("flt_hist.csv");
    CHECK(hist.rfind("bin_low,count\n", 0) == 0);

    // threshold override drops the 0.8 candidate too
    filter.threshold = 0.85;
    DatasetSummary strict = run_filter("flt_records.jsonl", "flt_cands.jsonl", filter,
                                       "flt_out.jsonl", "flt_summary.json", "");
    CHECK(strict.accepted == 0);
    CHECK(strict.rejected_threshold == 1);

    std::remove("flt_records.jsonl");
    std::remove("flt_cands.jsonl");
    std::remove("flt_out.jsonl");
    std::remove("flt_summary.json");
    std::remove("flt_hist.csv");
}

TEST_CASE("vae loss report: halved stereo copy shows 0.5 spectral convergence") {
    Config cfg;
    cfg.set("vae.samples", "2048");
    cfg.set("vae.ffts", "[256, 512]");
    nlohmann::json report = vae_loss_report(cfg, 4);
    for (const auto& term : report["sum_channel"]["per_resolution"]) {
        CHECK(std::fabs(term["spectral_convergence"].get<double>() - 0.5) < 1e-6);
    }
    CHECK(report["stereo_mrstft"].get<double>() > 0.0);
    CHECK(report["demo"]["gaussian_kl"].get<double>() >= 0.0);
    CHECK(report["demo"]["hinge_adversarial"].get<double>() >= 0.0);

    nlohmann::json again = vae_loss_report(cfg, 4);
    CHECK(report.dump() == again.dump());
}

TEST_CASE("conditional training smoke: labels flow through cfg dropout") {
    ExperimentConfig cfg = tiny_config();
    cfg.dataset = "cond_checkerboard";
    cfg.conditional = true;
    cfg.steps = 10;
    RunReport report = train_experiment(cfg, 51, "exp_cond");
    CHECK(std::isfinite(report.loss_values.back()));
    LoadedModel loaded = load_model("exp_cond");

    SampleOptions opts;
    opts.n = 8;
    opts.steps = 4;
    opts.w_cfg = 3.0;
    opts.class_id = 2;
    opts.seed = 5;
    SampleSet samples = sample_points(*loaded.model, loaded.config, opts);
    CHECK(samples.labeled);
    CHECK(samples.labels == std::vector<int>(8, 2));
    // guided sampling with CFG costs two model calls per solver step
    CHECK(samples.field_evals == 4);

    write_samples_csv("cond.csv", samples);
    CHECK(slurp("cond.csv").rfind("x,y,label\n", 0) == 0);
    std::remove("cond.csv");
    fs::remove_all("exp_cond");
}
