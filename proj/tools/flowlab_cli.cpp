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

// Command-line front end; everything goes through the C API in
// flowlab/flowlab.h.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "flowlab/flowlab.h"

namespace {

namespace fs = std::filesystem;

struct ConfigDeleter {
    void operator()(fl_config* c) const { fl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<fl_config, ConfigDeleter>;

struct ModelDeleter {
    void operator()(fl_model* m) const { fl_model_close(m); }
};
using ModelPtr = std::unique_ptr<fl_model, ModelDeleter>;

[[noreturn]] void die(fl_status status) {
    std::cerr << "error[" << fl_status_name(status) << "]: " << fl_last_error() << "\n";
    std::exit(static_cast<int>(status));
}

void check(fl_status status) {
    if (status != FL_OK) die(status);
}

ConfigPtr make_config(const std::string& config_path, const std::vector<std::string>& sets) {
    ConfigPtr config(fl_config_new());
    if (!config) {
        std::cerr << "error[internal]: out of memory\n";
        std::exit(FL_ERR_INTERNAL);
    }
    if (!config_path.empty()) check(fl_config_load_file(config.get(), config_path.c_str()));
    for (const std::string& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::cerr << "error[invalid_argument]: --set expects key=value, got '" << kv << "'\n";
            std::exit(FL_ERR_INVALID_ARGUMENT);
        }
        check(fl_config_set(config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    return config;
}

ModelPtr open_model(const std::string& path) {
    fl_model* raw = nullptr;
    check(fl_model_open(path.c_str(), &raw));
    return ModelPtr(raw);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowlab: flow-matching and diffusion experiments on toy data, with samplers, "
                 "metrics, waveform losses, and caption curation"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    std::string out_path;
    std::vector<std::string> sets;

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a vector-field model and save a checkpoint");
    train->add_option("--config", config_path, "config file (TOML-style sections)");
    train->add_option("--seed", seed, "run seed");
    train->add_option("--out", out_path, "output run directory")->required();
    train->add_option("--set", sets, "override any config key, e.g. --set train.lr=1e-3");
    std::string dataset, model_kind, objective, t_sampler, weighting, hidden;
    int64_t steps = -1, batch = -1, data_n = -1, log_every = -1, depth = -1, width = -1, heads = -1;
    double lr = -1, weight_decay = -1, p_uncond = -1, gamma = -1, p_dropout = -1, rope_base = -1;
    bool conditional = false;
    train->add_option("--dataset", dataset, "gauss_mixture|two_moons|cond_checkerboard");
    train->add_option("--model", model_kind, "mlp|dit");
    train->add_option("--hidden", hidden, "mlp hidden widths, e.g. 64,64");
    train->add_option("--objective", objective, "otcfm|v_diffusion");
    train->add_option("--t-sampler", t_sampler, "uniform|logit_normal");
    train->add_option("--weighting", weighting, "unit|min_snr_gamma");
    train->add_option("--gamma", gamma, "min-SNR gamma");
    train->add_option("--steps", steps, "training steps");
    train->add_option("--batch", batch, "batch size");
    train->add_option("--n", data_n, "dataset size");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--weight-decay", weight_decay, "AdamW decoupled decay");
    train->add_option("--p-uncond", p_uncond, "condition dropout probability");
    train->add_option("--log-every", log_every, "loss logging stride");
    train->add_option("--depth", depth, "dit depth");
    train->add_option("--width", width, "dit width");
    train->add_option("--heads", heads, "dit heads");
    train->add_option("--p-dropout", p_dropout, "dit dropout");
    train->add_option("--rope-base", rope_base, "dit rope base");
    train->add_flag("--conditional", conditional, "train class-conditionally");

    // ---- sample ----
    auto* sample = app.add_subcommand("sample", "integrate trajectories from a checkpoint");
    std::string checkpoint, bad_checkpoint, method = "euler", cfg_interval;
    int64_t sample_n = 1000, sample_steps = 100;
    double w_cfg = 3.5, w_ag = 1.0;
    int32_t class_id = FL_COND_NONE;
    bool mixed_class = false;
    sample->add_option("--checkpoint", checkpoint, "run directory or checkpoint.json")->required();
    sample->add_option("--out", out_path, "output CSV")->required();
    sample->add_option("--n", sample_n, "number of samples");
    sample->add_option("--method", method, "euler|heun");
    sample->add_option("--steps", sample_steps, "solver steps");
    sample->add_option("--w-cfg", w_cfg, "CFG scale (1 disables)");
    sample->add_option("--cfg-interval", cfg_interval, "CFG-active t interval, e.g. 0,0.6");
    sample->add_option("--w-ag", w_ag, "autoguidance scale (1 disables)");
    sample->add_option("--bad-checkpoint", bad_checkpoint, "bad model for autoguidance");
    sample->add_option("--class-id", class_id, "condition every sample on this class");
    sample->add_flag("--mixed-class", mixed_class, "draw a random class per sample");
    sample->add_option("--seed", seed, "sampling seed");

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "sweep (method, NFE, w_cfg) and score each cell");
    std::string nfe_list, wcfg_list, methods = "euler";
    sweep->add_option("--checkpoint", checkpoint, "run directory or checkpoint.json")->required();
    sweep->add_option("--out", out_path, "output CSV")->required();
    sweep->add_option("--nfe", nfe_list, "comma-separated NFE list")->required();
    sweep->add_option("--w-cfg", wcfg_list, "comma-separated CFG scales")->required();
    sweep->add_option("--methods", methods, "comma-separated methods (euler,heun)");
    sweep->add_option("--w-ag", w_ag, "autoguidance scale for all rows");
    sweep->add_option("--bad-checkpoint", bad_checkpoint, "bad model for autoguidance");
    sweep->add_option("--seed", seed, "sweep seed");

    // ---- metrics ----
    auto* metrics = app.add_subcommand("metrics", "evaluation metrics over JSONL embedding files");
    std::string ref_emb, gen_emb, ref_post, gen_post, text_emb, audio_emb;
    metrics->add_option("--ref", ref_emb, "reference embeddings (JSONL)")->required();
    metrics->add_option("--gen", gen_emb, "generated embeddings (JSONL)")->required();
    metrics->add_option("--ref-posteriors", ref_post, "reference posteriors (JSONL)");
    metrics->add_option("--gen-posteriors", gen_post, "generated posteriors (JSONL)");
    metrics->add_option("--text-embeddings", text_emb, "paired text embeddings (JSONL)");
    metrics->add_option("--audio-embeddings", audio_emb, "paired audio embeddings (JSONL)");
    metrics->add_option("--out", out_path, "output JSON report")->required();

    // ---- filter-captions ----
    auto* filter = app.add_subcommand("filter-captions", "run the caption curation pipeline");
    std::string records_path, candidates_path;
    double threshold = -10.0, segment_length = -1.0;
    int64_t keep_every = -1;
    filter->add_option("--records", records_path, "audio records (JSONL)")->required();
    filter->add_option("--candidates", candidates_path, "caption candidates (JSONL)")->required();
    filter->add_option("--config", config_path, "config file with a [filter] section");
    filter->add_option("--threshold", threshold, "similarity threshold (overrides config)");
    filter->add_option("--segment-length", segment_length, "segment length in seconds");
    filter->add_option("--keep-every", keep_every, "subsample stride for non-music/speech");
    filter->add_option("--set", sets, "override any config key");
    filter->add_option("--out", out_path, "output directory")->required();

    // ---- vae-loss ----
    auto* vae = app.add_subcommand("vae-loss", "waveform loss suite over test signals");
    std::string signal_kind, ref_file, deg_file;
    int64_t vae_samples = -1, channels = -1;
    double sample_rate = -1.0, gain = -10.0, noise_level = -10.0;
    vae->add_option("--config", config_path, "config file with a [vae] section");
    vae->add_option("--signal", signal_kind, "sine|chirp|noise");
    vae->add_option("--samples", vae_samples, "signal length in samples");
    vae->add_option("--sample-rate", sample_rate, "sample rate in Hz");
    vae->add_option("--gain", gain, "degraded-copy gain");
    vae->add_option("--noise-level", noise_level, "degraded-copy additive noise");
    vae->add_option("--ref-file", ref_file, "raw f64le reference signal file");
    vae->add_option("--deg-file", deg_file, "raw f64le degraded signal file");
    vae->add_option("--channels", channels, "channels in raw input (1 or 2)");
    vae->add_option("--seed", seed, "signal seed");
    vae->add_option("--set", sets, "override any config key");
    vae->add_option("--out", out_path, "output JSON report")->required();

    // ---- selftest ----
    auto* selftest = app.add_subcommand("selftest", "run the library invariant suite");
    bool verbose = false;
    selftest->add_flag("--verbose", verbose, "print passing checks too");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        ConfigPtr config = make_config(config_path, sets);
        auto set_if = [&](const char* key, const std::string& value) {
            if (!value.empty()) check(fl_config_set(config.get(), key, value.c_str()));
        };
        set_if("dataset.name", dataset);
        set_if("model.kind", model_kind);
        set_if("model.hidden", hidden);
        set_if("objective.kind", objective);
        set_if("objective.t_sampler", t_sampler);
        set_if("objective.weighting", weighting);
        auto set_num = [&](const char* key, double value, double unset) {
            if (value != unset) check(fl_config_set(config.get(), key, std::to_string(value).c_str()));
        };
        auto set_int = [&](const char* key, int64_t value) {
            if (value >= 0) check(fl_config_set(config.get(), key, std::to_string(value).c_str()));
        };
        set_int("dataset.n", data_n);
        set_int("train.steps", steps);
        set_int("train.batch", batch);
        set_int("train.log_every", log_every);
        set_int("model.depth", depth);
        set_int("model.width", width);
        set_int("model.heads", heads);
        set_num("train.lr", lr, -1);
        set_num("train.weight_decay", weight_decay, -1);
        set_num("train.p_uncond", p_uncond, -1);
        set_num("objective.gamma", gamma, -1);
        set_num("model.p_dropout", p_dropout, -1);
        set_num("model.rope_base", rope_base, -1);
        if (conditional) check(fl_config_set(config.get(), "model.conditional", "true"));
        check(fl_train(config.get(), seed, out_path.c_str()));
        std::cout << "trained; checkpoint, meta, and report written to " << out_path << "\n";
        return 0;
    }

    if (sample->parsed()) {
        ModelPtr model = open_model(checkpoint);
        ModelPtr bad;
        if (!bad_checkpoint.empty()) bad = open_model(bad_checkpoint);
        fl_sample_options options;
        fl_sample_options_init(&options);
        options.n = sample_n;
        options.method = method.c_str();
        options.steps = sample_steps;
        options.w_cfg = w_cfg;
        options.w_ag = w_ag;
        options.seed = seed;
        options.class_id = mixed_class ? FL_COND_MIXED : class_id;
        if (!cfg_interval.empty()) {
            size_t comma = cfg_interval.find(',');
            if (comma == std::string::npos) {
                std::cerr << "error[invalid_argument]: --cfg-interval expects lo,hi\n";
                return FL_ERR_INVALID_ARGUMENT;
            }
            options.cfg_t_lo = std::stod(cfg_interval.substr(0, comma));
            options.cfg_t_hi = std::stod(cfg_interval.substr(comma + 1));
        }
        check(fl_model_sample(model.get(), &options, bad.get(), out_path.c_str()));
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }

    if (sweep->parsed()) {
        ModelPtr model = open_model(checkpoint);
        ModelPtr bad;
        if (!bad_checkpoint.empty()) bad = open_model(bad_checkpoint);
        check(fl_model_sweep(model.get(), methods.c_str(), nfe_list.c_str(), wcfg_list.c_str(),
                             w_ag, bad.get(), seed, out_path.c_str()));
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }

    if (metrics->parsed()) {
        check(fl_metrics(ref_emb.c_str(), gen_emb.c_str(),
                         ref_post.empty() ? nullptr : ref_post.c_str(),
                         gen_post.empty() ? nullptr : gen_post.c_str(),
                         text_emb.empty() ? nullptr : text_emb.c_str(),
                         audio_emb.empty() ? nullptr : audio_emb.c_str(), out_path.c_str()));
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }

    if (filter->parsed()) {
        ConfigPtr config = make_config(config_path, sets);
        if (threshold > -10.0) {
            check(fl_config_set(config.get(), "filter.threshold", std::to_string(threshold).c_str()));
        }
        if (segment_length > 0.0) {
            check(fl_config_set(config.get(), "filter.segment_length",
                                std::to_string(segment_length).c_str()));
        }
        if (keep_every >= 1) {
            check(fl_config_set(config.get(), "filter.subsample_keep_every",
                                std::to_string(keep_every).c_str()));
        }
        std::error_code ec;
        fs::create_directories(out_path, ec);
        std::string accepted = (fs::path(out_path) / "accepted.jsonl").string();
        std::string summary = (fs::path(out_path) / "summary.json").string();
        std::string histogram = (fs::path(out_path) / "histogram.csv").string();
        check(fl_filter_captions(config.get(), records_path.c_str(), candidates_path.c_str(),
                                 accepted.c_str(), summary.c_str(), histogram.c_str()));
        std::cout << "wrote " << accepted << ", " << summary << ", " << histogram << "\n";
        return 0;
    }

    if (vae->parsed()) {
        ConfigPtr config = make_config(config_path, sets);
        auto set_if = [&](const char* key, const std::string& value) {
            if (!value.empty()) check(fl_config_set(config.get(), key, value.c_str()));
        };
        set_if("vae.signal", signal_kind);
        set_if("vae.ref_file", ref_file);
        set_if("vae.deg_file", deg_file);
        if (vae_samples >= 1) {
            check(fl_config_set(config.get(), "vae.samples", std::to_string(vae_samples).c_str()));
        }
        if (channels >= 1) {
            check(fl_config_set(config.get(), "vae.channels", std::to_string(channels).c_str()));
        }
        if (sample_rate > 0.0) {
            check(fl_config_set(config.get(), "vae.sample_rate", std::to_string(sample_rate).c_str()));
        }
        if (gain > -10.0) check(fl_config_set(config.get(), "vae.gain", std::to_string(gain).c_str()));
        if (noise_level > -10.0) {
            check(fl_config_set(config.get(), "vae.noise_level", std::to_string(noise_level).c_str()));
        }
        check(fl_vae_loss(config.get(), seed, out_path.c_str()));
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }

    if (selftest->parsed()) {
        int failures = fl_selftest(verbose ? 1 : 0);
        if (failures < 0) {
            std::cerr << "error[internal]: " << fl_last_error() << "\n";
            return FL_ERR_INTERNAL;
        }
        return failures == 0 ? 0 : 1;
    }

    return 0;
}
