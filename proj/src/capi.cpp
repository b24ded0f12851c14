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

#include "flowlab/flowlab.h"

#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "metrics.hpp"
#include "selftest.hpp"
#include "tensor.hpp"

namespace {

thread_local std::string g_last_error;

fl_status to_status(flowlab::ErrorCode code) {
    using flowlab::ErrorCode;
    switch (code) {
        case ErrorCode::kInvalidArgument: return FL_ERR_INVALID_ARGUMENT;
        case ErrorCode::kShapeMismatch: return FL_ERR_SHAPE;
        case ErrorCode::kDomain: return FL_ERR_DOMAIN;
        case ErrorCode::kNumeric: return FL_ERR_NUMERIC;
        case ErrorCode::kSingular: return FL_ERR_SINGULAR;
        case ErrorCode::kParse: return FL_ERR_PARSE;
        case ErrorCode::kIo: return FL_ERR_IO;
        case ErrorCode::kState: return FL_ERR_STATE;
        case ErrorCode::kNotConverged: return FL_ERR_NOT_CONVERGED;
        case ErrorCode::kInternal: return FL_ERR_INTERNAL;
    }
    return FL_ERR_INTERNAL;
}

template <typename Fn>
fl_status guarded(Fn&& fn) {
    try {
        fn();
        return FL_OK;
    } catch (const flowlab::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FL_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return FL_ERR_INTERNAL;
    }
}

fl_status invalid(const char* message) {
    g_last_error = message;
    return FL_ERR_INVALID_ARGUMENT;
}

std::vector<std::string> split_csv(const std::string& raw) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : raw) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

flowlab::Tensor wrap_rows(const double* data, int64_t n, int64_t dim, const char* what) {
    if (data == nullptr || n < 1 || dim < 1) {
        flowlab::fail(flowlab::ErrorCode::kInvalidArgument,
                      std::string(what) + ": need a non-null buffer with n >= 1, dim >= 1");
    }
    std::vector<double> copy(data, data + n * dim);
    return flowlab::Tensor({n, dim}, std::move(copy));
}

}  // namespace

struct fl_config {
    flowlab::Config config;
};

struct fl_model {
    flowlab::LoadedModel loaded;
};

extern "C" {

const char* fl_status_name(fl_status status) {
    switch (status) {
        case FL_OK: return "ok";
        case FL_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case FL_ERR_SHAPE: return "shape_mismatch";
        case FL_ERR_DOMAIN: return "domain";
        case FL_ERR_NUMERIC: return "numeric";
        case FL_ERR_SINGULAR: return "singular";
        case FL_ERR_PARSE: return "parse";
        case FL_ERR_IO: return "io";
        case FL_ERR_STATE: return "state";
        case FL_ERR_NOT_CONVERGED: return "not_converged";
        case FL_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* fl_last_error(void) {
    return g_last_error.c_str();
}

const char* fl_version(void) {
    return "0.1.0";
}

fl_config* fl_config_new(void) {
    return new (std::nothrow) fl_config();
}

fl_status fl_config_load_file(fl_config* config, const char* path) {
    if (config == nullptr || path == nullptr) return invalid("fl_config_load_file: null argument");
    return guarded([&] { config->config.load_file(path); });
}

fl_status fl_config_set(fl_config* config, const char* key, const char* value) {
    if (config == nullptr || key == nullptr || value == nullptr) {
        return invalid("fl_config_set: null argument");
    }
    return guarded([&] { config->config.set(key, value); });
}

fl_status fl_config_get(const fl_config* config, const char* key, char* buf, size_t buf_len) {
    if (config == nullptr || key == nullptr || buf == nullptr || buf_len == 0) {
        return invalid("fl_config_get: null argument");
    }
    if (!config->config.has(key)) {
        g_last_error = std::string("config key not set: ") + key;
        return FL_ERR_STATE;
    }
    std::string value = config->config.get_str(key, "");
    std::snprintf(buf, buf_len, "%s", value.c_str());
    return FL_OK;
}

void fl_config_free(fl_config* config) {
    delete config;
}

fl_status fl_train(const fl_config* config, uint64_t seed, const char* out_dir) {
    if (out_dir == nullptr) return invalid("fl_train: out_dir is null");
    return guarded([&] {
        flowlab::Config empty;
        const flowlab::Config& cfg = config != nullptr ? config->config : empty;
        flowlab::ExperimentConfig experiment = flowlab::resolve_experiment_config(cfg);
        flowlab::train_experiment(experiment, seed, out_dir);
    });
}

fl_status fl_model_open(const char* path, fl_model** out_model) {
    if (path == nullptr || out_model == nullptr) return invalid("fl_model_open: null argument");
    return guarded([&] {
        auto model = std::make_unique<fl_model>();
        model->loaded = flowlab::load_model(path);
        *out_model = model.release();
    });
}

void fl_model_close(fl_model* model) {
    delete model;
}

void fl_sample_options_init(fl_sample_options* options) {
    if (options == nullptr) return;
    options->n = 1000;
    options->method = "euler";
    options->steps = 100;
    options->w_cfg = 3.5;
    options->cfg_t_lo = 0.0;
    options->cfg_t_hi = 1.0;
    options->w_ag = 1.0;
    options->class_id = FL_COND_NONE;
    options->seed = 0;
}

fl_status fl_model_sample(fl_model* model, const fl_sample_options* options, fl_model* bad_model,
                          const char* csv_out) {
    if (model == nullptr || options == nullptr || csv_out == nullptr) {
        return invalid("fl_model_sample: null argument");
    }
    return guarded([&] {
        flowlab::SampleOptions opts;
        opts.n = options->n;
        opts.method = flowlab::parse_method(options->method != nullptr ? options->method : "euler");
        opts.steps = options->steps;
        opts.w_cfg = options->w_cfg;
        opts.cfg_t_lo = options->cfg_t_lo;
        opts.cfg_t_hi = options->cfg_t_hi;
        opts.w_ag = options->w_ag;
        opts.class_id = options->class_id;
        opts.seed = options->seed;
        flowlab::SampleSet samples =
            flowlab::sample_points(*model->loaded.model, model->loaded.config, opts,
                                   bad_model != nullptr ? bad_model->loaded.model.get() : nullptr);
        flowlab::write_samples_csv(csv_out, samples);
    });
}

fl_status fl_model_sweep(fl_model* model, const char* methods, const char* nfe_list,
                         const char* wcfg_list, double w_ag, fl_model* bad_model, uint64_t seed,
                         const char* csv_out) {
    if (model == nullptr || methods == nullptr || nfe_list == nullptr || wcfg_list == nullptr ||
        csv_out == nullptr) {
        return invalid("fl_model_sweep: null argument");
    }
    return guarded([&] {
        std::vector<flowlab::SamplerConfig::Method> method_vec;
        for (const std::string& name : split_csv(methods)) {
            method_vec.push_back(flowlab::parse_method(name));
        }
        std::vector<int64_t> nfes;
        for (const std::string& item : split_csv(nfe_list)) nfes.push_back(std::stoll(item));
        std::vector<double> cfgs;
        for (const std::string& item : split_csv(wcfg_list)) cfgs.push_back(std::stod(item));
        if (method_vec.empty() || nfes.empty() || cfgs.empty()) {
            flowlab::fail(flowlab::ErrorCode::kInvalidArgument, "sweep: empty grid");
        }
        flowlab::SweepResult result = flowlab::run_sweep(
            *model->loaded.model, model->loaded.config, nfes, cfgs, method_vec, w_ag,
            bad_model != nullptr ? bad_model->loaded.model.get() : nullptr, seed);
        std::ofstream out(csv_out);
        if (!out) flowlab::fail(flowlab::ErrorCode::kIo, std::string("cannot write ") + csv_out);
        out << result.to_csv();
    });
}

fl_status fl_metrics(const char* ref_embeddings, const char* gen_embeddings,
                     const char* ref_posteriors, const char* gen_posteriors,
                     const char* text_embeddings, const char* audio_embeddings,
                     const char* json_out) {
    if (ref_embeddings == nullptr || gen_embeddings == nullptr || json_out == nullptr) {
        return invalid("fl_metrics: ref, gen, and output paths are required");
    }
    return guarded([&] {
        nlohmann::json report = flowlab::metrics_report(
            ref_embeddings, gen_embeddings, ref_posteriors != nullptr ? ref_posteriors : "",
            gen_posteriors != nullptr ? gen_posteriors : "",
            text_embeddings != nullptr ? text_embeddings : "",
            audio_embeddings != nullptr ? audio_embeddings : "");
        std::ofstream out(json_out);
        if (!out) flowlab::fail(flowlab::ErrorCode::kIo, std::string("cannot write ") + json_out);
        out << report.dump(2) << "\n";
    });
}

fl_status fl_frechet_distance(const double* ref, int64_t ref_n, const double* gen, int64_t gen_n,
                              int64_t dim, double* out) {
    if (out == nullptr) return invalid("fl_frechet_distance: out is null");
    return guarded([&] {
        flowlab::Tensor a = wrap_rows(ref, ref_n, dim, "fl_frechet_distance(ref)");
        flowlab::Tensor b = wrap_rows(gen, gen_n, dim, "fl_frechet_distance(gen)");
        *out = flowlab::frechet_distance(flowlab::fit_gaussian(a), flowlab::fit_gaussian(b));
    });
}

fl_status fl_paired_kl(const double* ref, const double* gen, int64_t n, int64_t classes,
                       double* out) {
    if (out == nullptr) return invalid("fl_paired_kl: out is null");
    return guarded([&] {
        flowlab::Tensor a = wrap_rows(ref, n, classes, "fl_paired_kl(ref)");
        flowlab::Tensor b = wrap_rows(gen, n, classes, "fl_paired_kl(gen)");
        flowlab::validate_posteriors(a);
        flowlab::validate_posteriors(b);
        *out = flowlab::paired_kl(a, b);
    });
}

fl_status fl_inception_score(const double* posteriors, int64_t n, int64_t classes, double* out) {
    if (out == nullptr) return invalid("fl_inception_score: out is null");
    return guarded([&] {
        flowlab::Tensor p = wrap_rows(posteriors, n, classes, "fl_inception_score");
        flowlab::validate_posteriors(p);
        *out = flowlab::inception_score(p);
    });
}

fl_status fl_embedding_score(const double* text, const double* audio, int64_t n, int64_t dim,
                             double* out) {
    if (out == nullptr) return invalid("fl_embedding_score: out is null");
    return guarded([&] {
        flowlab::Tensor t = wrap_rows(text, n, dim, "fl_embedding_score(text)");
        flowlab::Tensor a = wrap_rows(audio, n, dim, "fl_embedding_score(audio)");
        *out = flowlab::embedding_score(t, a);
    });
}

fl_status fl_filter_captions(const fl_config* config, const char* records_path,
                             const char* candidates_path, const char* accepted_out,
                             const char* summary_out, const char* histogram_out) {
    if (records_path == nullptr || candidates_path == nullptr || accepted_out == nullptr ||
        summary_out == nullptr) {
        return invalid("fl_filter_captions: null path argument");
    }
    return guarded([&] {
        flowlab::Config empty;
        const flowlab::Config& cfg = config != nullptr ? config->config : empty;
        flowlab::FilterConfig filter = flowlab::resolve_filter_config(cfg);
        flowlab::run_filter(records_path, candidates_path, filter, accepted_out, summary_out,
                            histogram_out != nullptr ? histogram_out : "");
    });
}

fl_status fl_vae_loss(const fl_config* config, uint64_t seed, const char* json_out) {
    if (json_out == nullptr) return invalid("fl_vae_loss: json_out is null");
    return guarded([&] {
        flowlab::Config empty;
        const flowlab::Config& cfg = config != nullptr ? config->config : empty;
        nlohmann::json report = flowlab::vae_loss_report(cfg, seed);
        std::ofstream out(json_out);
        if (!out) flowlab::fail(flowlab::ErrorCode::kIo, std::string("cannot write ") + json_out);
        out << report.dump(2) << "\n";
    });
}

int fl_selftest(int verbose) {
    try {
        return flowlab::run_selftest(verbose != 0, std::cout);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return -1;
    }
}

}  // extern "C"
