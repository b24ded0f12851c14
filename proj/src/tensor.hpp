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

#ifndef FLOWLAB_TENSOR_HPP_
#define FLOWLAB_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace flowlab {

class Rng;

using Shape = std::vector<int64_t>;

// Dense row-major f64 tensor with value semantics. Rank 0 is a scalar.
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor eye(int64_t n);
    // Convenience for 2D literals in tests and reference math.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor gaussian(Shape shape, Rng& rng);

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int64_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t flat) { return data_[static_cast<size_t>(flat)]; }
    double operator[](int64_t flat) const { return data_[static_cast<size_t>(flat)]; }
    double& at(std::initializer_list<int64_t> index);
    double at(std::initializer_list<int64_t> index) const;

    // Scalar extraction; errors unless size()==1.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

 private:
    Shape shape_;
    std::vector<double> data_;
};

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// numpy-style trailing-dimension broadcast; throws on incompatibility,
// naming `op` in the message.
Shape broadcast_shapes(const Shape& a, const Shape& b, const std::string& op);

// Row-major strides (in elements) for a shape.
std::vector<int64_t> strides_of(const Shape& shape);

}  // namespace flowlab

#endif  // FLOWLAB_TENSOR_HPP_
