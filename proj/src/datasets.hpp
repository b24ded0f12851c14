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

#ifndef FLOWLAB_DATASETS_HPP_
#define FLOWLAB_DATASETS_HPP_

#include <string>
#include <vector>

#include "tensor.hpp"

namespace flowlab {

struct ToyDataset {
    std::string name;
    Tensor points;            // (n, 2)
    std::vector<int> labels;  // class id per point
    int n_classes = 0;
};

// Deterministic per (name, n, seed). Names: gauss_mixture (four Gaussians at
// (+-2, +-2), sigma 0.3, labels = component), two_moons, cond_checkerboard
// (4x4 grid over [-2,2]^2 with four interleaved classes).
ToyDataset gen_toy_dataset(const std::string& name, int64_t n, uint64_t seed);

// Analytic moments of the gauss_mixture distribution.
Tensor gauss_mixture_mean();  // (2)
Tensor gauss_mixture_cov();   // (2, 2)

// Nearest-cell class assignment for cond_checkerboard points.
int checkerboard_class_at(double x, double y);

}  // namespace flowlab

#endif  // FLOWLAB_DATASETS_HPP_
