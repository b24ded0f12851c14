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

#include "experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "checkpoint.hpp"
#include "datasets.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "vae_losses.hpp"

namespace flowlab {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
    if (dataset != "gauss_mixture" && dataset != "two_moons" && dataset != "cond_checkerboard") {
        fail(ErrorCode::kInvalidArgument, "unknown dataset '" + dataset + "'");
    }
    if (model_kind != "mlp" && model_kind != "dit") {
        fail(ErrorCode::kInvalidArgument, "model must be mlp or dit, got '" + model_kind + "'");
    }
    if (objective != "otcfm" && objective != "v_diffusion") {
        fail(ErrorCode::kInvalidArgument, "objective must be otcfm or v_diffusion");
    }
    if (t_sampler != "uniform" && t_sampler != "logit_normal") {
        fail(ErrorCode::kInvalidArgument, "t_sampler must be uniform or logit_normal");
    }
    if (weighting != "unit" && weighting != "min_snr_gamma") {
        fail(ErrorCode::kInvalidArgument, "weighting must be unit or min_snr_gamma");
    }
    if (data_n < 1 || steps < 1 || batch < 1 || sample_steps < 1 || log_every < 1) {
        fail(ErrorCode::kInvalidArgument, "counts and steps must be >= 1");
    }
    if (lr <= 0.0) fail(ErrorCode::kInvalidArgument, "lr must be positive");
    if (lr_schedule != "constant" && lr_schedule != "exponential") {
        fail(ErrorCode::kInvalidArgument, "lr_schedule must be constant or exponential");
    }
    if (lr_final_factor <= 0.0 || lr_final_factor > 1.0) {
        fail(ErrorCode::kInvalidArgument, "lr_final_factor outside (0, 1]");
    }
    if (p_uncond < 0.0 || p_uncond > 1.0) fail(ErrorCode::kInvalidArgument, "p_uncond outside [0,1]");
}

int ExperimentConfig::dataset_classes() const {
    if (dataset == "two_moons") return 2;
    return 4;  // gauss_mixture and cond_checkerboard
}

ExperimentConfig resolve_experiment_config(const Config& c) {
    ExperimentConfig e;
    e.dataset = c.get_str("dataset.name", e.dataset);
    e.data_n = c.get_int("dataset.n", e.data_n);
    e.model_kind = c.get_str("model.kind", e.model_kind);
    e.hidden = c.get_int_list("model.hidden", e.hidden);
    e.t_embed_dim = c.get_int("model.t_embed_dim", e.t_embed_dim);
    e.cond_dim = c.get_int("model.cond_dim", e.cond_dim);
    e.conditional = c.get_bool("model.conditional", e.conditional);
    e.depth = c.get_int("model.depth", e.depth);
    e.width = c.get_int("model.width", e.width);
    e.heads = c.get_int("model.heads", e.heads);
    e.rope_base = c.get_double("model.rope_base", e.rope_base);
    e.p_dropout = c.get_double("model.p_dropout", e.p_dropout);
    e.objective = c.get_str("objective.kind", e.objective);
    e.t_sampler = c.get_str("objective.t_sampler", e.t_sampler);
    e.weighting = c.get_str("objective.weighting", e.weighting);
    e.gamma = c.get_double("objective.gamma", e.gamma);
    e.steps = c.get_int("train.steps", e.steps);
    e.batch = c.get_int("train.batch", e.batch);
    e.lr = c.get_double("train.lr", e.lr);
    e.lr_schedule = c.get_str("train.lr_schedule", e.lr_schedule);
    e.lr_final_factor = c.get_double("train.lr_final_factor", e.lr_final_factor);
    e.beta1 = c.get_double("train.beta1", e.beta1);
    e.beta2 = c.get_double("train.beta2", e.beta2);
    e.adam_eps = c.get_double("train.eps", e.adam_eps);
    e.weight_decay = c.get_double("train.weight_decay", e.weight_decay);
    e.p_uncond = c.get_double("train.p_uncond", e.p_uncond);
    e.log_every = c.get_int("train.log_every", e.log_every);
    e.sample_method = c.get_str("sample.method", e.sample_method);
    e.sample_steps = c.get_int("sample.steps", e.sample_steps);
    e.w_cfg = c.get_double("sample.w_cfg", e.w_cfg);
    e.w_ag = c.get_double("sample.w_ag", e.w_ag);
    e.sample_n = c.get_int("sample.n", e.sample_n);
    e.validate();
    return e;
}

json experiment_config_json(const ExperimentConfig& e) {
    json doc;
    doc["dataset"] = {{"name", e.dataset}, {"n", e.data_n}};
    doc["model"] = {{"kind", e.model_kind},     {"hidden", e.hidden},
                    {"t_embed_dim", e.t_embed_dim}, {"cond_dim", e.cond_dim},
                    {"conditional", e.conditional}, {"depth", e.depth},
                    {"width", e.width},         {"heads", e.heads},
                    {"rope_base", e.rope_base}, {"p_dropout", e.p_dropout}};
    doc["objective"] = {{"kind", e.objective},
                        {"t_sampler", e.t_sampler},
                        {"weighting", e.weighting},
                        {"gamma", e.gamma}};
    doc["train"] = {{"steps", e.steps},       {"batch", e.batch},
                    {"lr", e.lr},             {"lr_schedule", e.lr_schedule},
                    {"lr_final_factor", e.lr_final_factor}, {"beta1", e.beta1},
                    {"beta2", e.beta2},       {"eps", e.adam_eps},
                    {"weight_decay", e.weight_decay}, {"p_uncond", e.p_uncond},
                    {"log_every", e.log_every}};
    doc["sample"] = {{"method", e.sample_method},
                     {"steps", e.sample_steps},
                     {"w_cfg", e.w_cfg},
                     {"w_ag", e.w_ag},
                     {"n", e.sample_n}};
    return doc;
}

ExperimentConfig experiment_config_from_json(const json& doc) {
    ExperimentConfig e;
    try {
        e.dataset = doc.at("dataset").at("name").get<std::string>();
        e.data_n = doc.at("dataset").at("n").get<int64_t>();
        const json& m = doc.at("model");
        e.model_kind = m.at("kind").get<std::string>();
        e.hidden = m.at("hidden").get<std::vector<int64_t>>();
        e.t_embed_dim = m.at("t_embed_dim").get<int64_t>();
        e.cond_dim = m.at("cond_dim").get<int64_t>();
        e.conditional = m.at("conditional").get<bool>();
        e.depth = m.at("depth").get<int64_t>();
        e.width = m.at("width").get<int64_t>();
        e.heads = m.at("heads").get<int64_t>();
        e.rope_base = m.at("rope_base").get<double>();
        e.p_dropout = m.at("p_dropout").get<double>();
        const json& o = doc.at("objective");
        e.objective = o.at("kind").get<std::string>();
        e.t_sampler = o.at("t_sampler").get<std::string>();
        e.weighting = o.at("weighting").get<std::string>();
        e.gamma = o.at("gamma").get<double>();
        const json& t = doc.at("train");
        e.steps = t.at("steps").get<int64_t>();
        e.batch = t.at("batch").get<int64_t>();
        e.lr = t.at("lr").get<double>();
        e.lr_schedule = t.at("lr_schedule").get<std::string>();
        e.lr_final_factor = t.at("lr_final_factor").get<double>();
        e.beta1 = t.at("beta1").get<double>();
        e.beta2 = t.at("beta2").get<double>();
        e.adam_eps = t.at("eps").get<double>();
        e.weight_decay = t.at("weight_decay").get<double>();
        e.p_uncond = t.at("p_uncond").get<double>();
        e.log_every = t.at("log_every").get<int64_t>();
        const json& s = doc.at("sample");
        e.sample_method = s.at("method").get<std::string>();
        e.sample_steps = s.at("steps").get<int64_t>();
        e.w_cfg = s.at("w_cfg").get<double>();
        e.w_ag = s.at("w_ag").get<double>();
        e.sample_n = s.at("n").get<int64_t>();
    } catch (const json::exception& ex) {
        fail(ErrorCode::kParse, std::string("meta.json: ") + ex.what());
    }
    e.validate();
    return e;
}

std::unique_ptr<FieldModel> build_model(const ExperimentConfig& config, uint64_t seed) {
    int64_t n_classes = config.conditional ? config.dataset_classes() : 0;
    if (config.model_kind == "mlp") {
        MlpConfig mc;
        mc.in_dim = 2;
        mc.hidden = config.hidden;
        mc.t_embed_dim = config.t_embed_dim;
        mc.cond_dim = config.cond_dim;
        mc.n_classes = n_classes;
        return std::make_unique<MlpField>(mc, seed);
    }
    DiTConfig dc;
    dc.depth = config.depth;
    dc.width = config.width;
    dc.heads = config.heads;
    dc.rope_base = config.rope_base;
    dc.p_dropout = config.p_dropout;
    dc.cond_dim = config.cond_dim;
    dc.in_channels = 1;
    dc.n_classes = n_classes;
    return std::make_unique<DiTField>(dc, seed);
}

namespace {

ObjectiveConfig objective_from(const ExperimentConfig& config) {
    ObjectiveConfig obj;
    obj.kind = config.objective == "otcfm" ? ObjectiveConfig::Kind::kOtcfm
                                           : ObjectiveConfig::Kind::kVDiffusion;
    obj.t_sampler = config.t_sampler == "uniform" ? TimestepSamplerKind::kUniform
                                                  : TimestepSamplerKind::kLogitNormal;
    obj.weighting.kind = config.weighting == "unit" ? LossWeighting::Kind::kUnit
                                                    : LossWeighting::Kind::kMinSnrGamma;
    obj.weighting.gamma = config.gamma;
    return obj;
}

std::string join_path(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

}  // namespace

json RunReport::to_json() const {
    json doc;
    json curve = json::array();
    for (size_t i = 0; i < loss_steps.size(); ++i) {
        curve.push_back({{"step", loss_steps[i]}, {"loss", loss_values[i]}});
    }
    doc["loss_curve"] = curve;
    doc["sample_mean"] = sample_mean;
    doc["sample_cov"] = sample_cov;
    doc["w2_to_target"] = w2_to_target;
    // wall_seconds stays out of the file: (config, seed) fixes output bytes.
    return doc;
}

RunReport train_experiment(const ExperimentConfig& config, uint64_t seed,
                           const std::string& out_dir) {
    config.validate();
    auto t_start = std::chrono::steady_clock::now();

    Rng root(seed);
    ToyDataset data = gen_toy_dataset(config.dataset, config.data_n, root.derive(1).seed());
    std::unique_ptr<FieldModel> model = build_model(config, root.derive(2).seed());
    Rng batch_rng = root.derive(3);
    Rng path_rng = root.derive(4);
    Rng cond_rng = root.derive(5);
    Rng dropout_rng = root.derive(6);

    ObjectiveConfig objective = objective_from(config);
    AdamWConfig adamw;
    adamw.lr = config.lr;
    adamw.beta1 = config.beta1;
    adamw.beta2 = config.beta2;
    adamw.eps = config.adam_eps;
    adamw.weight_decay = config.weight_decay;

    RunReport report;
    int64_t last_good = 0;
    for (int64_t step = 1; step <= config.steps; ++step) {
        Tensor x0({config.batch, 2});
        std::vector<int> cond(static_cast<size_t>(config.batch), kNullCond);
        for (int64_t b = 0; b < config.batch; ++b) {
            int64_t idx = static_cast<int64_t>(batch_rng.uniform_int(static_cast<uint64_t>(config.data_n)));
            x0.at({b, 0}) = data.points.at({idx, 0});
            x0.at({b, 1}) = data.points.at({idx, 1});
            if (config.conditional) {
                cond[static_cast<size_t>(b)] =
                    cfg_dropout_condition(data.labels[static_cast<size_t>(idx)], cond_rng, config.p_uncond);
            }
        }
        if (config.lr_schedule == "exponential") {
            double frac = config.steps > 1
                              ? static_cast<double>(step - 1) / static_cast<double>(config.steps - 1)
                              : 1.0;
            adamw.lr = config.lr * std::pow(config.lr_final_factor, frac);
        }
        double loss_value = 0.0;
        try {
            Tape tape;
            Value loss = training_loss(
                tape,
                [&](Tape& t, const Tensor& x_t, const std::vector<double>& ts) {
                    return model->forward_batch(t, x_t, ts, cond, true, &dropout_rng);
                },
                x0, objective, path_rng);
            loss_value = tape.value(loss).item();
            model->params().zero_grad();
            tape.backward(loss);
            adamw_step(model->params(), adamw);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kNumeric) {
                fail(ErrorCode::kNumeric, "training diverged at step " + std::to_string(step) +
                                              " (last good step " + std::to_string(last_good) +
                                              "): " + e.what());
            }
            throw;
        }
        last_good = step;
        if (step % config.log_every == 0 || step == config.steps) {
            report.loss_steps.push_back(step);
            report.loss_values.push_back(loss_value);
        }
    }

    fs::create_directories(out_dir);
    save_checkpoint(model->params(), join_path(out_dir, "checkpoint.json"));
    {
        json meta;
        meta["config"] = experiment_config_json(config);
        meta["seed"] = seed;
        std::ofstream out(join_path(out_dir, "meta.json"));
        if (!out) fail(ErrorCode::kIo, "cannot write meta.json in " + out_dir);
        out << meta.dump(2) << "\n";
    }

    // Final sample statistics against the training distribution.
    SampleOptions opts;
    opts.n = std::min<int64_t>(config.sample_n, 512);
    opts.method = parse_method(config.sample_method);
    opts.steps = config.sample_steps;
    opts.w_cfg = 1.0;  // statistics of the unguided model
    opts.class_id = config.conditional ? kMixedCond : kNullCond;
    opts.seed = root.derive(7).seed();
    SampleSet samples = sample_points(*model, config, opts);
    GaussianStats stats = fit_gaussian(samples.points);
    report.sample_mean = stats.mean.vec();
    report.sample_cov = stats.cov.vec();
    report.w2_to_target = wasserstein2(samples.points, data.points, 512);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    std::ofstream out(join_path(out_dir, "report.json"));
    if (!out) fail(ErrorCode::kIo, "cannot write report.json in " + out_dir);
    out << report.to_json().dump(2) << "\n";
    return report;
}

LoadedModel load_model(const std::string& checkpoint_path) {
    fs::path ckpt(checkpoint_path);
    if (fs::is_directory(ckpt)) ckpt /= "checkpoint.json";
    if (!fs::exists(ckpt)) fail(ErrorCode::kIo, "checkpoint not found: " + ckpt.string());
    fs::path meta = ckpt.parent_path() / "meta.json";
    if (!fs::exists(meta)) fail(ErrorCode::kIo, "meta.json not found next to " + ckpt.string());

    std::ifstream in(meta);
    json meta_doc;
    try {
        in >> meta_doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, meta.string() + ": " + std::string(e.what()));
    }
    LoadedModel loaded;
    loaded.config = experiment_config_from_json(meta_doc.at("config"));
    loaded.model = build_model(loaded.config, 0);
    load_checkpoint(loaded.model->params(), ckpt.string());
    return loaded;
}

SampleSet sample_points(FieldModel& model, const ExperimentConfig& config,
                        const SampleOptions& options, FieldModel* bad_model) {
    if (options.n < 0) fail(ErrorCode::kInvalidArgument, "sample: n must be >= 0");
    if (options.steps < 1) fail(ErrorCode::kInvalidArgument, "sample: NFE must be >= 1");
    int n_classes = config.conditional ? config.dataset_classes() : 0;

    SampleSet out;
    out.labeled = options.class_id != kNullCond;
    if (options.class_id != kNullCond && !config.conditional) {
        fail(ErrorCode::kInvalidArgument, "sample: class conditioning needs a conditional model");
    }
    if (options.w_cfg != 1.0 && options.class_id == kNullCond) {
        fail(ErrorCode::kInvalidArgument, "sample: CFG (w_cfg != 1) needs a class condition");
    }
    if (options.class_id >= n_classes) {
        fail(ErrorCode::kInvalidArgument, "sample: class id out of range");
    }

    Rng root(options.seed);
    Rng init_rng = root.derive(0);
    Rng class_rng = root.derive(1);

    out.points = Tensor({options.n, 2});
    if (options.n == 0) return out;

    std::vector<int> cond(static_cast<size_t>(options.n), kNullCond);
    if (options.class_id == kMixedCond) {
        for (auto& c : cond) c = static_cast<int>(class_rng.uniform_int(static_cast<uint64_t>(n_classes)));
    } else if (options.class_id >= 0) {
        for (auto& c : cond) c = options.class_id;
    }
    out.labels = cond;

    std::vector<int> null_cond(static_cast<size_t>(options.n), kNullCond);
    OdeField cond_field([&model, cond](const Tensor& x, double t) {
        return model.eval_batch(x, std::vector<double>(static_cast<size_t>(x.shape()[0]), t), cond);
    });
    OdeField uncond_field([&model, null_cond](const Tensor& x, double t) {
        return model.eval_batch(x, std::vector<double>(static_cast<size_t>(x.shape()[0]), t), null_cond);
    });

    GuidanceSpec spec;
    spec.w_cfg = options.w_cfg;
    spec.cfg_t_lo = options.cfg_t_lo;
    spec.cfg_t_hi = options.cfg_t_hi;
    spec.w_ag = options.w_ag;
    if (bad_model != nullptr) {
        FieldModel* bad = bad_model;
        spec.bad_field = OdeField([bad, cond](const Tensor& x, double t) {
            return bad->eval_batch(x, std::vector<double>(static_cast<size_t>(x.shape()[0]), t), cond);
        });
    }
    OdeField field = guided_field(cond_field, uncond_field, spec);

    Tensor x_init({options.n, 2});
    for (int64_t i = 0; i < x_init.size(); ++i) x_init[i] = init_rng.gaussian();

    SamplerConfig sampler;
    sampler.method = options.method;
    sampler.steps = options.steps;
    out.points = ode_sample(field, x_init, sampler);
    out.field_evals = field.nfe();
    return out;
}

void write_samples_csv(const std::string& path, const SampleSet& samples) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
    out << (samples.labeled ? "x,y,label\n" : "x,y\n");
    char buf[64];
    for (int64_t i = 0; i < samples.points.shape()[0]; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", samples.points.at({i, 0}),
                      samples.points.at({i, 1}));
        out << buf;
        if (samples.labeled) out << "," << samples.labels[static_cast<size_t>(i)];
        out << "\n";
    }
}

double wasserstein2(const Tensor& a, const Tensor& b, int64_t max_points) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1]) {
        fail(ErrorCode::kShapeMismatch, "wasserstein2: point sets must be (n, d) with equal d");
    }
    int64_t k = std::min({a.shape()[0], b.shape()[0], max_points});
    if (k < 1) fail(ErrorCode::kInvalidArgument, "wasserstein2: empty point set");
    int64_t d = a.shape()[1];

    std::vector<std::vector<double>> cost(static_cast<size_t>(k),
                                          std::vector<double>(static_cast<size_t>(k)));
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (int64_t m = 0; m < d; ++m) {
                double diff = a.at({i, m}) - b.at({j, m});
                s += diff * diff;
            }
            cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = s;
        }
    }

    // Hungarian algorithm, shortest-augmenting-path form with potentials.
    const double kInf = 1e300;
    int n = static_cast<int>(k);
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            int i0 = p[static_cast<size_t>(j0)];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                             u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        total += cost[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)][static_cast<size_t>(j - 1)];
    }
    return std::sqrt(total / static_cast<double>(k));
}

SweepResult run_sweep(FieldModel& model, const ExperimentConfig& config,
                      const std::vector<int64_t>& nfe_list, const std::vector<double>& cfg_list,
                      const std::vector<SamplerConfig::Method>& methods, double w_ag,
                      FieldModel* bad_model, uint64_t seed, int64_t samples_per_row,
                      int64_t eval_n) {
    Rng root(seed);
    ToyDataset reference = gen_toy_dataset(config.dataset, eval_n, root.derive(100).seed());
    GaussianStats ref_stats = fit_gaussian(reference.points);

    std::vector<NamedMetric> metric_fns = {
        {"fd",
         [ref_stats](const Tensor& samples) {
             return frechet_distance(fit_gaussian(samples), ref_stats);
         }},
        {"w2",
         [&reference](const Tensor& samples) {
             return wasserstein2(samples, reference.points, 512);
         }},
    };

    GeneratorFn generate = [&](SamplerConfig::Method method, int64_t steps, double w_cfg,
                               Rng& row_rng) {
        SampleOptions opts;
        opts.n = samples_per_row;
        opts.method = method;
        opts.steps = steps;
        opts.w_cfg = w_cfg;
        opts.w_ag = w_ag;
        opts.class_id = config.conditional ? kMixedCond : kNullCond;
        if (w_cfg != 1.0 && !config.conditional) {
            fail(ErrorCode::kInvalidArgument, "sweep: CFG scales need a conditional model");
        }
        opts.seed = row_rng.next_u64();
        return sample_points(model, config, opts, bad_model).points;
    };

    return sweep(generate, metric_fns, nfe_list, cfg_list, methods, root, w_ag);
}

json metrics_report(const std::string& ref_embeddings, const std::string& gen_embeddings,
                    const std::string& ref_posteriors, const std::string& gen_posteriors,
                    const std::string& text_embeddings, const std::string& audio_embeddings) {
    if (ref_embeddings.empty() || gen_embeddings.empty()) {
        fail(ErrorCode::kInvalidArgument, "metrics: reference and generated embedding files are required");
    }
    json report;
    std::vector<std::string> not_computed;

    EmbeddingSet ref = read_embedding_jsonl(ref_embeddings);
    EmbeddingSet gen = read_embedding_jsonl(gen_embeddings);
    report["fd"] = frechet_distance(fit_gaussian(ref.vecs), fit_gaussian(gen.vecs));

    if (!ref_posteriors.empty() && !gen_posteriors.empty()) {
        EmbeddingSet rp = read_embedding_jsonl(ref_posteriors);
        EmbeddingSet gp = read_embedding_jsonl(gen_posteriors);
        validate_posteriors(rp.vecs);
        validate_posteriors(gp.vecs);
        report["paired_kl"] = paired_kl(rp.vecs, gp.vecs);
        report["inception_score"] = inception_score(gp.vecs);
    } else {
        not_computed.push_back("paired_kl");
        not_computed.push_back("inception_score");
    }

    if (!text_embeddings.empty() && !audio_embeddings.empty()) {
        EmbeddingSet te = read_embedding_jsonl(text_embeddings);
        EmbeddingSet ae = read_embedding_jsonl(audio_embeddings);
        report["embedding_score"] = embedding_score(te.vecs, ae.vecs);
    } else {
        not_computed.push_back("embedding_score");
    }
    report["not_computed"] = not_computed;
    return report;
}

FilterConfig resolve_filter_config(const Config& config) {
    FilterConfig f;
    f.threshold = config.get_double("filter.threshold", f.threshold);
    f.candidates_per_segment = config.get_int("filter.candidates_per_segment", f.candidates_per_segment);
    f.segment_length = config.get_double("filter.segment_length", f.segment_length);
    f.subsample_keep_every = config.get_int("filter.subsample_keep_every", f.subsample_keep_every);
    if (config.has("filter.blocklist")) {
        f.keyword_blocklist = config.get_str_list("filter.blocklist", f.keyword_blocklist);
    }
    if (config.has("filter.blocklist_extra")) {
        for (const std::string& kw : config.get_str_list("filter.blocklist_extra", {})) {
            f.keyword_blocklist.push_back(kw);
        }
    }
    f.validate();
    return f;
}

DatasetSummary run_filter(const std::string& records_path, const std::string& candidates_path,
                          const FilterConfig& filter, const std::string& accepted_out,
                          const std::string& summary_out, const std::string& histogram_out) {
    std::vector<AudioRecord> records = read_records_jsonl(records_path, filter.segment_length);
    CandidateMap candidates = read_candidates_jsonl(candidates_path);
    BuildResult result = build_dataset(records, candidates, filter, toy_embedder);
    write_accepted_jsonl(accepted_out, result.accepted);
    write_summary_json(summary_out, result.summary, filter);
    if (!histogram_out.empty()) write_histogram_csv(histogram_out, result.summary);
    return result.summary;
}

namespace {

Tensor read_raw_f64(const std::string& path, int64_t channel, int64_t channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path);
    in.seekg(0, std::ios::end);
    std::streamoff bytes = in.tellg();
    in.seekg(0);
    if (bytes % static_cast<std::streamoff>(sizeof(double) * channels) != 0) {
        fail(ErrorCode::kParse, path + ": size is not a whole number of f64 frames");
    }
    int64_t frames = bytes / static_cast<std::streamoff>(sizeof(double) * channels);
    std::vector<double> interleaved(static_cast<size_t>(frames * channels));
    in.read(reinterpret_cast<char*>(interleaved.data()), bytes);
    if (!in) fail(ErrorCode::kIo, "short read on " + path);
    Tensor out({frames});
    for (int64_t i = 0; i < frames; ++i) out[i] = interleaved[static_cast<size_t>(i * channels + channel)];
    return out;
}

json breakdown_json(const MrStftBreakdown& b) {
    json per = json::array();
    for (const auto& term : b.per_resolution) {
        per.push_back({{"spectral_convergence", term.spectral_convergence},
                       {"log_magnitude", term.log_magnitude}});
    }
    return {{"per_resolution", per}, {"total", b.total}};
}

}  // namespace

json vae_loss_report(const Config& config, uint64_t seed) {
    StftConfig stft;
    if (config.has("vae.ffts")) {
        stft.resolutions.clear();
        for (int64_t fft : config.get_int_list("vae.ffts", {})) {
            stft.resolutions.push_back({fft, std::max<int64_t>(fft / 4, 1), fft});
        }
    }
    stft.validate();
    double sample_rate = config.get_double("vae.sample_rate", 8000.0);

    StereoSignal ref, deg;
    std::string ref_file = config.get_str("vae.ref_file", "");
    if (!ref_file.empty()) {
        std::string deg_file = config.get_str("vae.deg_file", "");
        if (deg_file.empty()) fail(ErrorCode::kInvalidArgument, "vae: deg_file required with ref_file");
        int64_t channels = config.get_int("vae.channels", 2);
        if (channels != 1 && channels != 2) fail(ErrorCode::kInvalidArgument, "vae: channels must be 1 or 2");
        ref.left = read_raw_f64(ref_file, 0, channels);
        ref.right = channels == 2 ? read_raw_f64(ref_file, 1, channels) : ref.left;
        deg.left = read_raw_f64(deg_file, 0, channels);
        deg.right = channels == 2 ? read_raw_f64(deg_file, 1, channels) : deg.left;
        if (channels == 1) {
            // mono input: report the mono loss only
            json report;
            report["sample_rate"] = sample_rate;
            MrStftBreakdown b = mrstft_loss_breakdown(ref.left, deg.left, stft);
            report["mrstft"] = breakdown_json(b);
            return report;
        }
    } else {
        std::string kind = config.get_str("vae.signal", "sine");
        int64_t samples = config.get_int("vae.samples", 4096);
        double gain = config.get_double("vae.gain", 0.5);
        double noise_level = config.get_double("vae.noise_level", 0.0);
        Rng rng(seed);
        ref.left = gen_test_signal(kind, samples, sample_rate, rng.derive(0).seed());
        ref.right = gen_test_signal(kind, samples, sample_rate, rng.derive(1).seed());
        Tensor nl = gen_test_signal("noise", samples, sample_rate, rng.derive(2).seed());
        Tensor nr = gen_test_signal("noise", samples, sample_rate, rng.derive(3).seed());
        deg.left = Tensor({samples});
        deg.right = Tensor({samples});
        for (int64_t i = 0; i < samples; ++i) {
            deg.left[i] = gain * ref.left[i] + noise_level * nl[i];
            deg.right[i] = gain * ref.right[i] + noise_level * nr[i];
        }
    }
    ref.sample_rate = sample_rate;
    deg.sample_rate = sample_rate;

    auto combine = [](const Tensor& a, const Tensor& b, double sign) {
        Tensor out(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + sign * b[i];
        return out;
    };
    Tensor x_sum = combine(ref.left, ref.right, 1.0);
    Tensor x_diff = combine(ref.left, ref.right, -1.0);
    Tensor h_sum = combine(deg.left, deg.right, 1.0);
    Tensor h_diff = combine(deg.left, deg.right, -1.0);

    json report;
    report["sample_rate"] = sample_rate;
    MrStftBreakdown sum_b = mrstft_loss_breakdown(x_sum, h_sum, stft);
    MrStftBreakdown diff_b = mrstft_loss_breakdown(x_diff, h_diff, stft);
    report["sum_channel"] = breakdown_json(sum_b);
    report["diff_channel"] = breakdown_json(diff_b);
    report["stereo_mrstft"] = sum_b.total + diff_b.total;

    // Demonstrate the remaining losses on seeded synthetic inputs.
    Rng demo(seed ^ 0x5eedf00dULL);
    DiscriminatorTaps real, fake;
    for (int k = 0; k < 3; ++k) {
        real.scores.push_back(demo.gaussian());
        fake.scores.push_back(demo.gaussian());
        std::vector<Tensor> rl, fl;
        for (int l = 0; l < 4; ++l) {
            Tensor r({8}), f({8});
            for (int64_t i = 0; i < 8; ++i) {
                r[i] = demo.gaussian();
                f[i] = demo.gaussian();
            }
            rl.push_back(r);
            fl.push_back(f);
        }
        real.features.push_back(rl);
        fake.features.push_back(fl);
    }
    LatentPosterior post;
    post.mean = Tensor({8});
    post.log_var = Tensor({8});
    for (int64_t i = 0; i < 8; ++i) {
        post.mean[i] = 0.5 * demo.gaussian();
        post.log_var[i] = 0.25 * demo.gaussian();
    }
    report["demo"] = {{"hinge_adversarial", hinge_adv_loss(real, fake)},
                      {"feature_matching", feature_matching_loss(real, fake)},
                      {"gaussian_kl", gaussian_kl_loss(post)}};
    return report;
}

}  // namespace flowlab
