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

#include "samplers.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

std::vector<double> make_t_grid(int64_t steps) {
    if (steps < 1) fail(ErrorCode::kInvalidArgument, "t grid needs steps >= 1");
    std::vector<double> grid(static_cast<size_t>(steps) + 1);
    for (int64_t i = 0; i <= steps; ++i) {
        grid[static_cast<size_t>(i)] =
            1.0 - static_cast<double>(i) / static_cast<double>(steps);
    }
    grid.front() = 1.0;
    grid.back() = 0.0;
    return grid;
}

int64_t SamplerConfig::nfe() const {
    return method == Method::kEuler ? steps : 2 * steps - 1;
}

SamplerConfig::Method parse_method(const std::string& name) {
    if (name == "euler") return SamplerConfig::Method::kEuler;
    if (name == "heun") return SamplerConfig::Method::kHeun;
    fail(ErrorCode::kInvalidArgument, "unknown sampler method '" + name + "' (euler|heun)");
}

const char* method_name(SamplerConfig::Method method) {
    return method == SamplerConfig::Method::kEuler ? "euler" : "heun";
}

OdeField guided_field(OdeField cond_field, OdeField uncond_field, const GuidanceSpec& spec) {
    if (!cond_field.valid()) fail(ErrorCode::kInvalidArgument, "guided_field: missing conditional field");
    bool ag_active = spec.w_ag != 1.0;
    if (ag_active && !spec.bad_field.valid()) {
        fail(ErrorCode::kInvalidArgument, "guided_field: w_ag != 1 requires a bad field");
    }
    bool cfg_possible = spec.w_cfg != 1.0;
    if (cfg_possible && !uncond_field.valid()) {
        fail(ErrorCode::kInvalidArgument, "guided_field: w_cfg != 1 requires an unconditional field");
    }
    GuidanceSpec s = spec;
    return OdeField([cond_field, uncond_field, s, ag_active, cfg_possible](
                        const Tensor& x, double t) mutable -> Tensor {
        Tensor v = cond_field(x, t);
        if (cfg_possible && t >= s.cfg_t_lo && t <= s.cfg_t_hi) {
            Tensor vu = uncond_field(x, t);
            for (int64_t i = 0; i < v.size(); ++i) {
                v[i] = vu[i] + s.w_cfg * (v[i] - vu[i]);
            }
        }
        if (ag_active) {
            Tensor vb = s.bad_field(x, t);
            for (int64_t i = 0; i < v.size(); ++i) {
                v[i] = vb[i] + s.w_ag * (v[i] - vb[i]);
            }
        }
        return v;
    });
}

namespace {

const std::vector<double>& resolve_grid(const SamplerConfig& config, std::vector<double>& storage) {
    if (!config.t_grid.empty()) {
        if (config.t_grid.size() < 2 || config.t_grid.front() != 1.0 || config.t_grid.back() != 0.0) {
            fail(ErrorCode::kInvalidArgument, "t grid must run from 1 to 0");
        }
        for (size_t i = 1; i < config.t_grid.size(); ++i) {
            if (config.t_grid[i] >= config.t_grid[i - 1]) {
                fail(ErrorCode::kInvalidArgument, "t grid must be strictly descending");
            }
        }
        return config.t_grid;
    }
    storage = make_t_grid(config.steps);
    return storage;
}

void check_state(const Tensor& x, size_t step) {
    if (!x.all_finite()) {
        fail(ErrorCode::kNumeric, "sampler: non-finite state at step " + std::to_string(step));
    }
}

}  // namespace

Tensor euler_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config) {
    std::vector<double> storage;
    const std::vector<double>& grid = resolve_grid(config, storage);
    Tensor x = x_init;
    for (size_t i = 0; i + 1 < grid.size(); ++i) {
        double dt = grid[i + 1] - grid[i];
        Tensor v = field(x, grid[i]);
        if (!v.same_shape(x)) fail(ErrorCode::kShapeMismatch, "sampler: field changed the state shape");
        for (int64_t j = 0; j < x.size(); ++j) x[j] += dt * v[j];
        check_state(x, i);
    }
    return x;
}

Tensor heun_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config) {
    std::vector<double> storage;
    const std::vector<double>& grid = resolve_grid(config, storage);
    Tensor x = x_init;
    size_t n = grid.size() - 1;
    for (size_t i = 0; i < n; ++i) {
        double dt = grid[i + 1] - grid[i];
        Tensor v1 = field(x, grid[i]);
        if (!v1.same_shape(x)) fail(ErrorCode::kShapeMismatch, "sampler: field changed the state shape");
        if (i + 1 == n) {
            // Final step falls back to plain Euler, keeping NFE at 2*steps-1.
            for (int64_t j = 0; j < x.size(); ++j) x[j] += dt * v1[j];
        } else {
            Tensor pred = x;
            for (int64_t j = 0; j < x.size(); ++j) pred[j] += dt * v1[j];
            check_state(pred, i);
            Tensor v2 = field(pred, grid[i + 1]);
            for (int64_t j = 0; j < x.size(); ++j) x[j] += 0.5 * dt * (v1[j] + v2[j]);
        }
        check_state(x, i);
    }
    return x;
}

Tensor ode_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config) {
    return config.method == SamplerConfig::Method::kEuler ? euler_sample(field, x_init, config)
                                                          : heun_sample(field, x_init, config);
}

namespace {

std::string format_sig6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << "method,steps,nfe,w_cfg,w_ag";
    for (const std::string& name : metric_names) os << "," << name;
    os << "\n";
    for (const SweepRow& row : rows) {
        os << row.method << "," << row.steps << "," << row.nfe << "," << format_sig6(row.w_cfg)
           << "," << format_sig6(row.w_ag);
        if (row.error.empty()) {
            for (double m : row.metrics) os << "," << format_sig6(m);
        } else {
            for (size_t i = 0; i < metric_names.size(); ++i) os << ",error:" << row.error;
        }
        os << "\n";
    }
    return os.str();
}

SweepResult sweep(const GeneratorFn& generate, const std::vector<NamedMetric>& metrics,
                  const std::vector<int64_t>& nfe_list, const std::vector<double>& cfg_list,
                  const std::vector<SamplerConfig::Method>& methods, const Rng& rng,
                  double w_ag) {
    SweepResult result;
    for (const NamedMetric& m : metrics) result.metric_names.push_back(m.name);
    uint64_t row_index = 0;
    for (SamplerConfig::Method method : methods) {
        for (int64_t nfe : nfe_list) {
            for (double w_cfg : cfg_list) {
                if (nfe < 1) fail(ErrorCode::kInvalidArgument, "sweep: nfe must be >= 1");
                SweepRow row;
                row.method = method_name(method);
                row.w_cfg = w_cfg;
                row.w_ag = w_ag;
                row.steps = method == SamplerConfig::Method::kEuler ? nfe : (nfe + 2) / 2;
                row.nfe = method == SamplerConfig::Method::kEuler ? row.steps : 2 * row.steps - 1;
                Rng row_rng = rng.derive(row_index);
                try {
                    Tensor samples = generate(method, row.steps, w_cfg, row_rng);
                    for (const NamedMetric& m : metrics) row.metrics.push_back(m.fn(samples));
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                result.rows.push_back(std::move(row));
                ++row_index;
            }
        }
    }
    return result;
}

}  // namespace flowlab
