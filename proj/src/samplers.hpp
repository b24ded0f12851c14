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

#ifndef FLOWLAB_SAMPLERS_HPP_
#define FLOWLAB_SAMPLERS_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace flowlab {

class Rng;

// Velocity field with an evaluation counter; the counter increments exactly
// once per call, including calls made inside guidance wrappers.
class OdeField {
 public:
    using Fn = std::function<Tensor(const Tensor& x, double t)>;

    OdeField() = default;
    explicit OdeField(Fn fn) : state_(std::make_shared<State>(State{std::move(fn), 0})) {}

    bool valid() const { return state_ != nullptr; }

    Tensor operator()(const Tensor& x, double t) {
        ++state_->count;
        return state_->fn(x, t);
    }

    int64_t nfe() const { return state_ ? state_->count : 0; }
    void reset_nfe() {
        if (state_) state_->count = 0;
    }

 private:
    struct State {
        Fn fn;
        int64_t count = 0;
    };
    std::shared_ptr<State> state_;
};

// Uniform descending grid 1 = t_0 > ... > t_steps = 0 (steps+1 knots).
std::vector<double> make_t_grid(int64_t steps);

struct SamplerConfig {
    enum class Method { kEuler, kHeun };
    Method method = Method::kEuler;
    int64_t steps = 100;
    std::vector<double> t_grid;  // optional; make_t_grid(steps) when empty

    // NFE for the configured method: steps for Euler, 2*steps-1 for Heun.
    int64_t nfe() const;
};

SamplerConfig::Method parse_method(const std::string& name);
const char* method_name(SamplerConfig::Method method);

// CFG first, then autoguidance. w_cfg=1 leaves CFG inactive, and w_ag=1 (or
// a missing bad_field) leaves autoguidance inactive; inactive stages do not
// evaluate their extra field at all, so the guided field is bit-identical
// to the conditional field when both are off.
struct GuidanceSpec {
    double w_cfg = 1.0;
    double cfg_t_lo = 0.0;  // CFG active when cfg_t_lo <= t <= cfg_t_hi
    double cfg_t_hi = 1.0;
    double w_ag = 1.0;
    OdeField bad_field;
};

OdeField guided_field(OdeField cond_field, OdeField uncond_field, const GuidanceSpec& spec);

// Integrates x' = field(x, t) along the descending grid; x_init sits at t=1.
// Aborts with the step index if the state goes non-finite.
Tensor euler_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config);

// Predictor-corrector Heun with a plain Euler final step, so NFE = 2*steps-1.
Tensor heun_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config);

Tensor ode_sample(OdeField& field, const Tensor& x_init, const SamplerConfig& config);

// ---- configuration sweep ----

struct NamedMetric {
    std::string name;
    std::function<double(const Tensor& samples)> fn;
};

// Produces the generated sample set for one configuration.
using GeneratorFn =
    std::function<Tensor(SamplerConfig::Method method, int64_t steps, double w_cfg, Rng& rng)>;

struct SweepRow {
    std::string method;
    int64_t steps = 0;
    int64_t nfe = 0;
    double w_cfg = 1.0;
    double w_ag = 1.0;
    std::vector<double> metrics;
    std::string error;  // non-empty marks a failed row
};

struct SweepResult {
    std::vector<std::string> metric_names;
    std::vector<SweepRow> rows;

    // CSV with header method,steps,nfe,w_cfg,w_ag,<metrics>; floats use six
    // significant digits; failed rows carry the error marker in each metric
    // column.
    std::string to_csv() const;
};

// One row per (method, nfe, w_cfg), in the listed order. Each row draws its
// own RNG stream derived from (rng, row index), so results do not depend on
// row execution order. Requested NFE maps to steps per method; the actual
// NFE is recorded (for Heun an even request rounds up to the next odd).
SweepResult sweep(const GeneratorFn& generate, const std::vector<NamedMetric>& metrics,
                  const std::vector<int64_t>& nfe_list, const std::vector<double>& cfg_list,
                  const std::vector<SamplerConfig::Method>& methods, const Rng& rng,
                  double w_ag = 1.0);

}  // namespace flowlab

#endif  // FLOWLAB_SAMPLERS_HPP_
