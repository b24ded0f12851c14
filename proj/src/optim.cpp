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

#include "optim.hpp"

#include <cmath>

#include "error.hpp"

namespace flowlab {

int ParamSet::add(const std::string& name, Tensor init) {
    if (find(name) != nullptr) {
        fail(ErrorCode::kInvalidArgument, "duplicate parameter name: " + name);
    }
    Param p;
    p.name = name;
    p.grad = Tensor(init.shape());
    p.moment1 = Tensor(init.shape());
    p.moment2 = Tensor(init.shape());
    p.value = std::move(init);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
}

Param* ParamSet::find(const std::string& name) {
    for (Param& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

const Param* ParamSet::find(const std::string& name) const {
    return const_cast<ParamSet*>(this)->find(name);
}

void ParamSet::zero_grad() {
    for (Param& p : params_) {
        p.grad = Tensor(p.value.shape());
    }
}

void adamw_step(ParamSet& params, const AdamWConfig& cfg) {
    for (Param& p : params) {
        if (!p.grad.all_finite()) {
            fail(ErrorCode::kNumeric, "non-finite gradient for parameter '" + p.name + "'");
        }
        p.step += 1;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        double* theta = p.value.data();
        const double* g = p.grad.data();
        double* m = p.moment1.data();
        double* v = p.moment2.data();
        int64_t n = p.value.size();
        for (int64_t i = 0; i < n; ++i) {
            theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace flowlab
