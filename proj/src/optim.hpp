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

#ifndef FLOWLAB_OPTIM_HPP_
#define FLOWLAB_OPTIM_HPP_

#include <deque>
#include <string>

#include "tensor.hpp"

namespace flowlab {

// Trainable tensor plus its gradient and AdamW state.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor moment1;
    Tensor moment2;
    int64_t step = 0;
};

// Owns parameters with stable addresses; models keep indices into it.
class ParamSet {
 public:
    int add(const std::string& name, Tensor init);

    Param& operator[](int index) { return params_[static_cast<size_t>(index)]; }
    const Param& operator[](int index) const { return params_[static_cast<size_t>(index)]; }

    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();

 private:
    std::deque<Param> params_;  // deque keeps addresses stable across add()
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// One AdamW update over all params. Decoupled weight decay is applied to
// the value before the moment-based term.
void adamw_step(ParamSet& params, const AdamWConfig& cfg);

}  // namespace flowlab

#endif  // FLOWLAB_OPTIM_HPP_
