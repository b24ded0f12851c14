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

#include "datasets.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

namespace {

constexpr double kMixtureSigma = 0.3;

ToyDataset gen_gauss_mixture(int64_t n, Rng& rng) {
    ToyDataset ds;
    ds.name = "gauss_mixture";
    ds.n_classes = 4;
    ds.points = Tensor({n, 2});
    ds.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int c = static_cast<int>(rng.uniform_int(4));
        double cx = (c & 1) ? 2.0 : -2.0;
        double cy = (c & 2) ? 2.0 : -2.0;
        ds.points.at({i, 0}) = cx + kMixtureSigma * rng.gaussian();
        ds.points.at({i, 1}) = cy + kMixtureSigma * rng.gaussian();
        ds.labels[static_cast<size_t>(i)] = c;
    }
    return ds;
}

ToyDataset gen_two_moons(int64_t n, Rng& rng) {
    ToyDataset ds;
    ds.name = "two_moons";
    ds.n_classes = 2;
    ds.points = Tensor({n, 2});
    ds.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int c = static_cast<int>(rng.uniform_int(2));
        double theta = rng.uniform(0.0, M_PI);
        double x, y;
        if (c == 0) {
            x = 2.0 * std::cos(theta);
            y = 2.0 * std::sin(theta) - 0.5;
        } else {
            x = 2.0 - 2.0 * std::cos(theta);
            y = -2.0 * std::sin(theta) + 0.5;
        }
        ds.points.at({i, 0}) = x + 0.1 * rng.gaussian();
        ds.points.at({i, 1}) = y + 0.1 * rng.gaussian();
        ds.labels[static_cast<size_t>(i)] = c;
    }
    return ds;
}

ToyDataset gen_checkerboard(int64_t n, Rng& rng) {
    ToyDataset ds;
    ds.name = "cond_checkerboard";
    ds.n_classes = 4;
    ds.points = Tensor({n, 2});
    ds.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int c = static_cast<int>(rng.uniform_int(4));
        // class c owns the 4 cells with (col%2) + 2*(row%2) == c
        int64_t col = 2 * static_cast<int64_t>(rng.uniform_int(2)) + (c & 1);
        int64_t row = 2 * static_cast<int64_t>(rng.uniform_int(2)) + ((c >> 1) & 1);
        ds.points.at({i, 0}) = -2.0 + static_cast<double>(col) + rng.uniform();
        ds.points.at({i, 1}) = -2.0 + static_cast<double>(row) + rng.uniform();
        ds.labels[static_cast<size_t>(i)] = c;
    }
    return ds;
}

}  // namespace

ToyDataset gen_toy_dataset(const std::string& name, int64_t n, uint64_t seed) {
    if (n < 1) fail(ErrorCode::kInvalidArgument, "dataset size must be >= 1");
    Rng rng(seed);
    if (name == "gauss_mixture") return gen_gauss_mixture(n, rng);
    if (name == "two_moons") return gen_two_moons(n, rng);
    if (name == "cond_checkerboard") return gen_checkerboard(n, rng);
    fail(ErrorCode::kInvalidArgument,
         "unknown dataset '" + name + "' (gauss_mixture|two_moons|cond_checkerboard)");
}

Tensor gauss_mixture_mean() {
    return Tensor({2});
}

Tensor gauss_mixture_cov() {
    // mean of component covariances plus covariance of component means:
    // sigma^2 I + 4 I
    Tensor cov({2, 2});
    double v = kMixtureSigma * kMixtureSigma + 4.0;
    cov.at({0, 0}) = v;
    cov.at({1, 1}) = v;
    return cov;
}

int checkerboard_class_at(double x, double y) {
    auto cell = [](double v) {
        return std::clamp(static_cast<int64_t>(std::floor(v + 2.0)), int64_t{0}, int64_t{3});
    };
    int64_t col = cell(x);
    int64_t row = cell(y);
    return static_cast<int>((col % 2) + 2 * (row % 2));
}

}  // namespace flowlab
