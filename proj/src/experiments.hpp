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

#ifndef FLOWLAB_EXPERIMENTS_HPP_
#define FLOWLAB_EXPERIMENTS_HPP_

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "captions.hpp"
#include "config.hpp"
#include "models.hpp"
#include "samplers.hpp"
#include "tensor.hpp"

namespace flowlab {

// Everything a run needs, resolved from defaults, config file, and flag
// overrides (flag > file > default).
struct ExperimentConfig {
    // dataset
    std::string dataset = "gauss_mixture";
    int64_t data_n = 4096;
    // model
    std::string model_kind = "mlp";  // mlp | dit
    std::vector<int64_t> hidden = {64, 64};
    int64_t t_embed_dim = 16;
    int64_t cond_dim = 8;
    bool conditional = false;
    int64_t depth = 2;
    int64_t width = 32;
    int64_t heads = 2;
    double rope_base = 16384.0;
    double p_dropout = 0.1;
    // objective
    std::string objective = "otcfm";         // otcfm | v_diffusion
    std::string t_sampler = "logit_normal";  // uniform | logit_normal
    std::string weighting = "unit";          // unit | min_snr_gamma
    double gamma = 5.0;
    // training
    int64_t steps = 3000;
    int64_t batch = 256;
    double lr = 1e-3;
    std::string lr_schedule = "exponential";  // constant | exponential
    double lr_final_factor = 0.01;            // final lr = lr * factor
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double p_uncond = 0.1;
    int64_t log_every = 50;
    // sampling defaults
    std::string sample_method = "euler";
    int64_t sample_steps = 100;
    double w_cfg = 3.5;
    double w_ag = 1.0;
    int64_t sample_n = 1000;

    void validate() const;
    int dataset_classes() const;
};

ExperimentConfig resolve_experiment_config(const Config& config);
nlohmann::json experiment_config_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

std::unique_ptr<FieldModel> build_model(const ExperimentConfig& config, uint64_t seed);

struct RunReport {
    std::vector<int64_t> loss_steps;
    std::vector<double> loss_values;
    double wall_seconds = 0.0;
    std::vector<double> sample_mean;  // (2)
    std::vector<double> sample_cov;   // row-major (2,2)
    double w2_to_target = 0.0;

    nlohmann::json to_json() const;
};

// Runs the training loop and writes checkpoint.json, meta.json, and
// report.json into out_dir. Deterministic in (config, seed).
RunReport train_experiment(const ExperimentConfig& config, uint64_t seed,
                           const std::string& out_dir);

struct LoadedModel {
    ExperimentConfig config;
    std::unique_ptr<FieldModel> model;
};

// Accepts a run directory or a checkpoint file; meta.json must sit next to
// the checkpoint.
LoadedModel load_model(const std::string& checkpoint_path);

// Condition selector for sampling: kNullCond draws unconditionally, a class
// id conditions every sample, kMixedCond draws a random class per sample.
constexpr int kMixedCond = -2;

struct SampleOptions {
    int64_t n = 1000;
    SamplerConfig::Method method = SamplerConfig::Method::kEuler;
    int64_t steps = 100;
    double w_cfg = 3.5;
    double cfg_t_lo = 0.0;
    double cfg_t_hi = 1.0;
    double w_ag = 1.0;
    int class_id = kNullCond;
    uint64_t seed = 0;
};

struct SampleSet {
    Tensor points;  // (n, 2)
    std::vector<int> labels;
    bool labeled = false;
    int64_t field_evals = 0;  // guided-field NFE for one batched run
};

SampleSet sample_points(FieldModel& model, const ExperimentConfig& config,
                        const SampleOptions& options, FieldModel* bad_model = nullptr);

void write_samples_csv(const std::string& path, const SampleSet& samples);

// Empirical 2-Wasserstein via exact Hungarian assignment on the first
// min(n, max_points) rows of each set.
double wasserstein2(const Tensor& a, const Tensor& b, int64_t max_points = 512);

// Sweep over (method, nfe, w_cfg) with the metric set {fd, w2} against a
// freshly generated reference set from the model's training dataset.
SweepResult run_sweep(FieldModel& model, const ExperimentConfig& config,
                      const std::vector<int64_t>& nfe_list, const std::vector<double>& cfg_list,
                      const std::vector<SamplerConfig::Method>& methods, double w_ag,
                      FieldModel* bad_model, uint64_t seed, int64_t samples_per_row = 512,
                      int64_t eval_n = 2048);

// Metric report over JSONL inputs; empty paths mark an input as absent and
// the affected metrics land in "not_computed".
nlohmann::json metrics_report(const std::string& ref_embeddings, const std::string& gen_embeddings,
                              const std::string& ref_posteriors, const std::string& gen_posteriors,
                              const std::string& text_embeddings,
                              const std::string& audio_embeddings);

FilterConfig resolve_filter_config(const Config& config);

// filter-captions command body: reads records and candidates, runs
// build_dataset with the toy embedder as provider, writes accepted JSONL,
// the summary JSON, and the histogram CSV.
DatasetSummary run_filter(const std::string& records_path, const std::string& candidates_path,
                          const FilterConfig& filter, const std::string& accepted_out,
                          const std::string& summary_out, const std::string& histogram_out);

// vae-loss command body: loss suite over generated or file-provided signals.
nlohmann::json vae_loss_report(const Config& config, uint64_t seed);

}  // namespace flowlab

#endif  // FLOWLAB_EXPERIMENTS_HPP_
