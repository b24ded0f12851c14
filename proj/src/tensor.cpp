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

#include "tensor.hpp"

#include <cmath>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

int64_t shape_size(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) fail(ErrorCode::kShapeMismatch, "negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != static_cast<int64_t>(data_.size())) {
        fail(ErrorCode::kShapeMismatch,
             "data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) {
    return Tensor({}, {v});
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

Tensor Tensor::eye(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.data_[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    int64_t r = static_cast<int64_t>(rows.size());
    int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    Tensor t({r, c});
    int64_t i = 0;
    for (const auto& row : rows) {
        if (static_cast<int64_t>(row.size()) != c) {
            fail(ErrorCode::kShapeMismatch, "ragged rows in from_rows");
        }
        for (double v : row) t.data_[static_cast<size_t>(i++)] = v;
    }
    return t;
}

Tensor Tensor::gaussian(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.gaussian();
    return t;
}

int64_t Tensor::dim(int64_t axis) const {
    if (axis < 0 || axis >= rank()) {
        fail(ErrorCode::kInvalidArgument,
             "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[static_cast<size_t>(axis)];
}

namespace {

int64_t flat_index(const Shape& shape, std::initializer_list<int64_t> index) {
    if (index.size() != shape.size()) {
        fail(ErrorCode::kInvalidArgument, "index rank mismatch for shape " + shape_str(shape));
    }
    int64_t flat = 0;
    auto st = strides_of(shape);
    size_t i = 0;
    for (int64_t ix : index) {
        if (ix < 0 || ix >= shape[i]) fail(ErrorCode::kInvalidArgument, "index out of bounds");
        flat += ix * st[i++];
    }
    return flat;
}

}  // namespace

double& Tensor::at(std::initializer_list<int64_t> index) {
    return data_[static_cast<size_t>(flat_index(shape_, index))];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
    return data_[static_cast<size_t>(flat_index(shape_, index))];
}

double Tensor::item() const {
    if (size() != 1) {
        fail(ErrorCode::kInvalidArgument, "item() on tensor of shape " + shape_str(shape_));
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const std::string& op) {
    size_t ra = a.size(), rb = b.size();
    size_t r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
        int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1) {
            fail(ErrorCode::kShapeMismatch,
                 op + ": shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcast-compatible");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

std::vector<int64_t> strides_of(const Shape& shape) {
    std::vector<int64_t> st(shape.size());
    int64_t acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        st[i] = acc;
        acc *= shape[i];
    }
    return st;
}

}  // namespace flowlab
