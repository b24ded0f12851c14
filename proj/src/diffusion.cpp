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

#include "diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        fail(ErrorCode::kShapeMismatch, std::string(op) + ": shapes " + shape_str(a.shape()) +
                                            " and " + shape_str(b.shape()) + " differ");
    }
}

double clamp_time(double t) {
    return std::clamp(t, kTimeClampLo, kTimeClampHi);
}

}  // namespace

double alpha_at(const NoiseSchedule& schedule, double t) {
    (void)schedule;  // single (cosine) kind
    if (!(t >= 0.0 && t <= 1.0)) {
        fail(ErrorCode::kDomain, "alpha_at: t=" + std::to_string(t) + " outside [0,1]");
    }
    double c = std::cos(0.5 * M_PI * t);
    return c * c;
}

double logistic(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

double sample_t(TimestepSamplerKind sampler, Rng& rng) {
    double t = 0.0;
    switch (sampler) {
        case TimestepSamplerKind::kUniform:
            t = rng.uniform();
            break;
        case TimestepSamplerKind::kLogitNormal:
            t = logistic(rng.gaussian());
            break;
    }
    return clamp_time(t);
}

double minsnr_weight(double t, double gamma, const NoiseSchedule& schedule, PredictionKind kind) {
    if (gamma <= 0.0) fail(ErrorCode::kInvalidArgument, "minsnr_weight: gamma must be positive");
    double tc = clamp_time(t);
    double ab = alpha_at(schedule, tc);
    double snr = ab / (1.0 - ab);
    switch (kind) {
        case PredictionKind::kEps:
            return std::min(snr, gamma) / snr;
        case PredictionKind::kV:
            return std::min(snr, gamma) / (snr + 1.0);
        default:
            fail(ErrorCode::kInvalidArgument, "minsnr_weight: kind must be eps or v");
    }
}

Tensor diffuse(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule) {
    check_same_shape(x0, eps, "diffuse");
    double ab = alpha_at(schedule, t);
    double ca = std::sqrt(ab);
    double cb = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = ca * x0[i] + cb * eps[i];
    return out;
}

Tensor v_target(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule) {
    check_same_shape(x0, eps, "v_target");
    double ab = alpha_at(schedule, t);
    double ca = std::sqrt(ab);
    double cb = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = ca * eps[i] - cb * x0[i];
    return out;
}

Tensor convert_prediction(const Tensor& pred, PredictionKind from, PredictionKind to,
                          const Tensor& x_t, double t, const NoiseSchedule& schedule) {
    if (from == PredictionKind::kVelocity || to == PredictionKind::kVelocity) {
        fail(ErrorCode::kInvalidArgument,
             "convert_prediction: velocity belongs to the OT-CFM path, not the diffusion algebra");
    }
    check_same_shape(pred, x_t, "convert_prediction");
    if (from == to) return pred;

    double ab = alpha_at(schedule, t);
    double a = std::sqrt(ab);        // sqrt(alpha_bar)
    double b = std::sqrt(1.0 - ab);  // sqrt(1-alpha_bar)
    auto need = [&](double denom, const char* what) {
        if (std::fabs(denom) < 1e-12) {
            fail(ErrorCode::kSingular, std::string("convert_prediction: division by ") + what +
                                           " underflows at t=" + std::to_string(t));
        }
    };

    // Canonicalize to (x0, eps), then emit the requested quantity.
    Tensor x0(pred.shape()), eps(pred.shape());
    switch (from) {
        case PredictionKind::kX0:
            need(b, "sqrt(1-alpha_bar)");
            for (int64_t i = 0; i < pred.size(); ++i) {
                x0[i] = pred[i];
                eps[i] = (x_t[i] - a * pred[i]) / b;
            }
            break;
        case PredictionKind::kEps:
            need(a, "sqrt(alpha_bar)");
            for (int64_t i = 0; i < pred.size(); ++i) {
                eps[i] = pred[i];
                x0[i] = (x_t[i] - b * pred[i]) / a;
            }
            break;
        case PredictionKind::kV:
            // x0 = a*x_t - b*v, eps = b*x_t + a*v; no division needed.
            for (int64_t i = 0; i < pred.size(); ++i) {
                x0[i] = a * x_t[i] - b * pred[i];
                eps[i] = b * x_t[i] + a * pred[i];
            }
            break;
        default:
            fail(ErrorCode::kInternal, "convert_prediction: unreachable");
    }

    Tensor out(pred.shape());
    switch (to) {
        case PredictionKind::kX0:
            out = x0;
            break;
        case PredictionKind::kEps:
            out = eps;
            break;
        case PredictionKind::kV:
            for (int64_t i = 0; i < pred.size(); ++i) out[i] = a * eps[i] - b * x0[i];
            break;
        default:
            fail(ErrorCode::kInternal, "convert_prediction: unreachable");
    }
    return out;
}

PathSample otcfm_path(const Tensor& x0, const Tensor& eps, double t) {
    check_same_shape(x0, eps, "otcfm_path");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::kDomain, "otcfm_path: t outside [0,1]");
    PathSample s;
    s.x0 = x0;
    s.eps = eps;
    s.t = t;
    s.x_t = Tensor(x0.shape());
    s.target = Tensor(x0.shape());
    for (int64_t i = 0; i < x0.size(); ++i) {
        s.x_t[i] = (1.0 - t) * x0[i] + t * eps[i];
        s.target[i] = eps[i] - x0[i];
    }
    return s;
}

PathSample vdiff_path(const Tensor& x0, const Tensor& eps, double t, const NoiseSchedule& schedule) {
    PathSample s;
    s.x0 = x0;
    s.eps = eps;
    s.t = t;
    s.x_t = diffuse(x0, eps, t, schedule);
    s.target = v_target(x0, eps, t, schedule);
    return s;
}

PathBatch sample_path_batch(const Tensor& x0, const ObjectiveConfig& objective, Rng& rng) {
    if (x0.rank() != 2) fail(ErrorCode::kShapeMismatch, "sample_path_batch: x0 must be (batch, dim)");
    int64_t batch = x0.shape()[0];
    int64_t dim = x0.shape()[1];
    PathBatch out;
    out.x0 = x0;
    out.eps = Tensor({batch, dim});
    out.x_t = Tensor({batch, dim});
    out.target = Tensor({batch, dim});
    out.t.resize(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        double t = sample_t(objective.t_sampler, rng);
        out.t[static_cast<size_t>(b)] = t;
        Tensor row_x0({dim}), row_eps({dim});
        for (int64_t d = 0; d < dim; ++d) {
            row_x0[d] = x0.at({b, d});
            row_eps[d] = rng.gaussian();
        }
        PathSample s = objective.kind == ObjectiveConfig::Kind::kOtcfm
                           ? otcfm_path(row_x0, row_eps, t)
                           : vdiff_path(row_x0, row_eps, t, objective.schedule);
        for (int64_t d = 0; d < dim; ++d) {
            out.eps.at({b, d}) = row_eps[d];
            out.x_t.at({b, d}) = s.x_t[d];
            out.target.at({b, d}) = s.target[d];
        }
    }
    return out;
}

Value path_batch_loss(Tape& tape, const BatchFieldFn& field, const PathBatch& batch,
                      const ObjectiveConfig& objective) {
    int64_t rows = batch.x_t.shape()[0];
    Tensor weights({rows, 1});
    for (int64_t b = 0; b < rows; ++b) {
        double w = 1.0;
        if (objective.weighting.kind == LossWeighting::Kind::kMinSnrGamma) {
            if (objective.kind != ObjectiveConfig::Kind::kVDiffusion) {
                fail(ErrorCode::kInvalidArgument,
                     "min-SNR weighting is defined for the diffusion objective");
            }
            w = minsnr_weight(batch.t[static_cast<size_t>(b)], objective.weighting.gamma,
                              objective.schedule, PredictionKind::kV);
        }
        weights.at({b, 0}) = w;
    }
    Value pred = field(tape, batch.x_t, batch.t);
    if (tape.value(pred).shape() != batch.target.shape()) {
        fail(ErrorCode::kShapeMismatch,
             "training_loss: field output " + shape_str(tape.value(pred).shape()) +
                 " does not match target " + shape_str(batch.target.shape()));
    }
    Value diff = tape.sub(pred, tape.constant(batch.target));
    Value weighted = tape.mul(tape.mul(diff, diff), tape.constant(weights));
    return tape.mean(weighted);
}

Value training_loss(Tape& tape, const BatchFieldFn& field, const Tensor& x0,
                    const ObjectiveConfig& objective, Rng& rng) {
    PathBatch batch = sample_path_batch(x0, objective, rng);
    return path_batch_loss(tape, field, batch, objective);
}

}  // namespace flowlab
