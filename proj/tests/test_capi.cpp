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

// Exercises the public C surface the way an external client would: only
// flowlab/flowlab.h, opaque handles, and status codes.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flowlab/flowlab.h"

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("c api: status names and version") {
    CHECK(std::string(fl_status_name(FL_OK)) == "ok");
    CHECK(std::string(fl_status_name(FL_ERR_IO)) == "io");
    CHECK(std::string(fl_status_name(FL_ERR_SHAPE)) == "shape_mismatch");
    CHECK(fl_version() != nullptr);
}

TEST_CASE("c api: config set/get/load with precedence") {
    fl_config* cfg = fl_config_new();
    REQUIRE(cfg != nullptr);
    char buf[64];
    CHECK(fl_config_get(cfg, "train.lr", buf, sizeof(buf)) == FL_ERR_STATE);

    {
        std::ofstream out("capi_cfg.toml");
        out << "[train]\nlr = 0.5\n";
    }
    CHECK(fl_config_load_file(cfg, "capi_cfg.toml") == FL_OK);
    CHECK(fl_config_get(cfg, "train.lr", buf, sizeof(buf)) == FL_OK);
    CHECK(std::string(buf) == "0.5");
    CHECK(fl_config_set(cfg, "train.lr", "0.25") == FL_OK);  // flag beats file
    CHECK(fl_config_get(cfg, "train.lr", buf, sizeof(buf)) == FL_OK);
    CHECK(std::string(buf) == "0.25");

    CHECK(fl_config_load_file(cfg, "missing.toml") == FL_ERR_IO);
    CHECK(std::strlen(fl_last_error()) > 0);
    fl_config_free(cfg);
    std::remove("capi_cfg.toml");
}

TEST_CASE("c api: buffer metrics match their pinned values") {
    // FD between exact N(0,1) and N(1,1) sample stats
    double a = 1.0 / std::sqrt(2.0);
    std::vector<double> ref = {-a, a};
    std::vector<double> gen = {1.0 - a, 1.0 + a};
    double fd = -1.0;
    CHECK(fl_frechet_distance(ref.data(), 2, gen.data(), 2, 1, &fd) == FL_OK);
    CHECK(std::fabs(fd - 1.0) < 1e-6);

    std::vector<double> p = {1.0, 0.0, 0.0, 1.0};  // two one-hot rows
    double kl = -1.0;
    CHECK(fl_paired_kl(p.data(), p.data(), 2, 2, &kl) == FL_OK);
    CHECK(kl == 0.0);

    double is = -1.0;
    CHECK(fl_inception_score(p.data(), 2, 2, &is) == FL_OK);
    CHECK(std::fabs(is - 2.0) < 1e-6);

    std::vector<double> text = {1.0, 0.0};
    std::vector<double> audio = {a, a};
    double cs = -1.0;
    CHECK(fl_embedding_score(text.data(), audio.data(), 1, 2, &cs) == FL_OK);
    CHECK(std::fabs(cs - a) < 1e-12);

    // invalid posterior rows surface as argument errors
    std::vector<double> bad = {0.7, 0.7};
    CHECK(fl_paired_kl(bad.data(), bad.data(), 1, 2, &kl) == FL_ERR_INVALID_ARGUMENT);
    CHECK(fl_frechet_distance(nullptr, 2, gen.data(), 2, 1, &fd) == FL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("c api: train, open, sample, sweep roundtrip") {
    fl_config* cfg = fl_config_new();
    REQUIRE(cfg != nullptr);
    fl_config_set(cfg, "dataset.n", "256");
    fl_config_set(cfg, "model.hidden", "[16, 16]");
    fl_config_set(cfg, "train.steps", "30");
    fl_config_set(cfg, "train.batch", "32");
    CHECK(fl_train(cfg, 11, "capi_run") == FL_OK);
    fl_config_free(cfg);
    CHECK(fs::exists("capi_run/checkpoint.json"));
    CHECK(fs::exists("capi_run/meta.json"));
    CHECK(fs::exists("capi_run/report.json"));

    fl_model* model = nullptr;
    REQUIRE(fl_model_open("capi_run", &model) == FL_OK);

    fl_sample_options options;
    fl_sample_options_init(&options);
    CHECK(options.w_cfg == 3.5);
    CHECK(options.steps == 100);
    CHECK(std::string(options.method) == "euler");
    options.n = 20;
    options.steps = 6;
    options.w_cfg = 1.0;
    options.seed = 3;
    CHECK(fl_model_sample(model, &options, nullptr, "capi_samples.csv") == FL_OK);
    std::string csv = slurp("capi_samples.csv");
    CHECK(csv.rfind("x,y\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);

    CHECK(fl_model_sweep(model, "euler", "4,8", "1", 1.0, nullptr, 7, "capi_sweep.csv") == FL_OK);
    std::string sweep_csv = slurp("capi_sweep.csv");
    CHECK(sweep_csv.rfind("method,steps,nfe,w_cfg,w_ag,fd,w2\n", 0) == 0);
    CHECK(std::count(sweep_csv.begin(), sweep_csv.end(), '\n') == 3);

    fl_model_close(model);

    fl_model* missing = nullptr;
    CHECK(fl_model_open("no_such_dir", &missing) == FL_ERR_IO);
    CHECK(missing == nullptr);

    std::remove("capi_samples.csv");
    std::remove("capi_sweep.csv");
    fs::remove_all("capi_run");
}

TEST_CASE("c api: metrics, captions, vae-loss file flows") {
    {
        std::ofstream ref("capi_ref.jsonl");
        ref << R"({"id": "a", "vec": [0.0, 1.0]})" << "\n";
        ref << R"({"id": "b", "vec": [1.0, 0.0]})" << "\n";
    }
    CHECK(fl_metrics("capi_ref.jsonl", "capi_ref.jsonl", nullptr, nullptr, nullptr, nullptr,
                     "capi_metrics.json") == FL_OK);
    std::string report = slurp("capi_metrics.json");
    CHECK(report.find("\"fd\"") != std::string::npos);
    CHECK(report.find("not_computed") != std::string::npos);

    {
        std::ofstream rec("capi_records.jsonl");
        rec << R"({"id": "r", "duration": 10.0, "category": "music", "segments": [[1.0, 0.0]]})"
            << "\n";
        std::ofstream cand("capi_cands.jsonl");
        cand << R"({"record_id": "r", "segment": 0, "captions": [{"text": "soft rain", "vec": [0.9, 0.435889894354]}]})"
             << "\n";
    }
    CHECK(fl_filter_captions(nullptr, "capi_records.jsonl", "capi_cands.jsonl",
                             "capi_accepted.jsonl", "capi_summary.json", nullptr) == FL_OK);
    CHECK(slurp("capi_summary.json").find("\"accepted\": 1") != std::string::npos);

    fl_config* vcfg = fl_config_new();
    fl_config_set(vcfg, "vae.samples", "1024");
    fl_config_set(vcfg, "vae.ffts", "[256]");
    CHECK(fl_vae_loss(vcfg, 1, "capi_vae.json") == FL_OK);
    CHECK(slurp("capi_vae.json").find("stereo_mrstft") != std::string::npos);
    fl_config_free(vcfg);

    std::remove("capi_ref.jsonl");
    std::remove("capi_metrics.json");
    std::remove("capi_records.jsonl");
    std::remove("capi_cands.jsonl");
    std::remove("capi_accepted.jsonl");
    std::remove("capi_summary.json");
    std::remove("capi_vae.json");
}

TEST_CASE("c api: selftest passes through the shared library") {
    CHECK(fl_selftest(0) == 0);
}
