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

#ifndef FLOWLAB_CHECKPOINT_HPP_
#define FLOWLAB_CHECKPOINT_HPP_

#include <map>
#include <string>

#include "optim.hpp"
#include "tensor.hpp"

namespace flowlab {

// Parameter checkpoint: one JSON document {name: {"shape": [...], "data": [...]}}
// with f64 values in decimal. Keys are emitted sorted, so serialization is
// byte-deterministic.
void save_checkpoint(const ParamSet& params, const std::string& path);

// Loads into an existing ParamSet; every parameter must be present with a
// matching shape. Optimizer state is not stored.
void load_checkpoint(ParamSet& params, const std::string& path);

// Raw form for tools that do not hold a ParamSet.
std::map<std::string, Tensor> read_checkpoint(const std::string& path);

}  // namespace flowlab

#endif  // FLOWLAB_CHECKPOINT_HPP_
