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

#ifndef FLOWLAB_DIFFUSION_HPP_
#define FLOWLAB_DIFFUSION_HPP_

#include <functional>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace flowlab {

class Rng;

// Time orientation: t=0 is data, t=1 is noise; samplers integrate 1 -> 0.
// The cosine schedule gives alpha_bar(0)=1 and alpha_bar(1)=0 exactly.
struct NoiseSchedule {
    enum class Kind { kCosine };
    Kind kind = Kind::kCosine;
};

// alpha_bar(t) = cos^2(pi*t/2); t outside [0,1] is a domain error.
double alpha_at(const NoiseSchedule& schedule, double t);

enum class PredictionKind { kEps, kX0, kV, kVelocity };

enum class TimestepSamplerKind { kUniform, kLogitNormal };

// Draws are clamped to [1e-5, 1-1e-5] to keep SNR finite at the endpoints.
constexpr double kTimeClampLo = 1e-5;
constexpr double kTimeClampHi = 1.0 - 1e-5;

// The logit-normal squash t = 1/(1+exp(-z)).
double logistic(double z);

double sample_t(TimestepSamplerKind sampler, Rng& rng);

struct LossWeighting {
    enum class Kind { kUnit, kMinSnrGamma };
    Kind kind = Kind::kUnit;
    double gamma = 5.0;
};

// Min-SNR weighting with SNR(t) = alpha_bar/(1-alpha_bar); t is clamped as
// in sample_t before evaluating SNR. kind must be kEps or kV.
double minsnr_weight(double t, double gamma, const NoiseSchedule& schedule, PredictionKind kind);

// x_t = sqrt(alpha_bar)*x0 + sqrt(1-alpha_bar)*eps
Tensor diffuse(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule);

// v = sqrt(alpha_bar)*eps - sqrt(1-alpha_bar)*x0
Tensor v_target(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule);

// Algebraic conversion between {eps, x0, v} given (x_t, t). Exact round
// trips; raises a singular error if a needed division underflows.
Tensor convert_prediction(const Tensor& pred, PredictionKind from, PredictionKind to,
                          const Tensor& x_t, double t, const NoiseSchedule& schedule);

// One forward-process draw: state plus the regression target.
struct PathSample {
    Tensor x0;
    Tensor eps;
    double t = 0.0;
    Tensor x_t;
    Tensor target;
};

// Straight interpolant x_t = (1-t)*x0 + t*eps with target u = eps - x0
// (constant along the path).
PathSample otcfm_path(const Tensor& x0, const Tensor& eps, double t);

// Diffusion path with the v-prediction target.
PathSample vdiff_path(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule);

struct ObjectiveConfig {
    enum class Kind { kVDiffusion, kOtcfm };
    Kind kind = Kind::kOtcfm;
    TimestepSamplerKind t_sampler = TimestepSamplerKind::kLogitNormal;
    LossWeighting weighting;
    NoiseSchedule schedule;
};

// A batch of path samples in row form; x0/eps/x_t/target are (B, D).
struct PathBatch {
    Tensor x0;
    Tensor eps;
    Tensor x_t;
    Tensor target;
    std::vector<double> t;
};

// One independent (t, eps) per batch row.
PathBatch sample_path_batch(const Tensor& x0, const ObjectiveConfig& objective, Rng& rng);

// The model under training: maps a batch state (B, D) and per-row times to
// a prediction node of the same shape. Conditioning, dropout and parameter
// binding live inside the callable.
using BatchFieldFn = std::function<Value(Tape&, const Tensor& x_t, const std::vector<double>& t)>;

// mean over rows of weight(t) * mean over dims of (field - target)^2.
Value path_batch_loss(Tape& tape, const BatchFieldFn& field, const PathBatch& batch,
                      const ObjectiveConfig& objective);

// Draws a path batch and evaluates the weighted regression loss.
Value training_loss(Tape& tape, const BatchFieldFn& field, const Tensor& x0,
                    const ObjectiveConfig& objective, Rng& rng);

}  // namespace flowlab

#endif  // FLOWLAB_DIFFUSION_HPP_
