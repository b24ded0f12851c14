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

#ifndef FLOWLAB_AUTODIFF_HPP_
#define FLOWLAB_AUTODIFF_HPP_

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace flowlab {

struct Param;
class Rng;
class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
    Tape* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

// Define-by-run reverse-mode tape. A tape records one forward pass; build a
// fresh tape per pass. Nodes are appended in topological order, so backward()
// is a single reverse sweep that visits each node exactly once.
//
// Every forward op validates shapes (broadcasting follows the numpy trailing
// rule) and rejects non-finite outputs with a numeric error naming the op.
class Tape {
 public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. constant() is not differentiated; leaf() gets a gradient;
    // param() additionally accumulates into p.grad during backward().
    Value constant(Tensor t);
    Value leaf(Tensor t);
    Value param(Param& p);

    const Tensor& value(Value v) const;
    // Gradient of a leaf/param node. Only valid after backward(); interior
    // gradients are freed as the sweep passes them.
    const Tensor& grad(Value v) const;

    // Elementwise with broadcasting.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);

    // 2D matrix product.
    Value matmul(Value a, Value b);

    // Full reductions to a scalar.
    Value sum(Value a);
    Value mean(Value a);

    // Elementwise unaries.
    Value exp(Value a);
    Value log(Value a);
    Value sqrt(Value a);
    Value abs(Value a);
    Value tanh(Value a);
    Value gelu_tanh(Value a);  // 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))

    // Row-wise over the last axis.
    Value softmax(Value a);
    Value layer_norm(Value a);  // zero mean, unit variance, no affine

    // Structure ops.
    Value concat(const std::vector<Value>& parts, int64_t axis);
    Value slice(Value a, int64_t axis, int64_t start, int64_t len);
    Value transpose(Value a, int64_t axis0, int64_t axis1);
    Value broadcast_to(Value a, Shape shape);
    Value reshape(Value a, Shape shape);
    Value gather1d(Value a, std::vector<int64_t> indices);

    // Inverted dropout; identity when p == 0. Mask is drawn from rng.
    Value dropout(Value a, double p, Rng& rng);

    // Sugar built on the primitives above.
    Value scale(Value a, double c);
    Value add_scalar(Value a, double c);

    // Reverse sweep from a scalar root. Accumulates into bound Param::grad.
    void backward(Value root);

    size_t node_count() const { return nodes_.size(); }

 private:
    struct Node {
        Tensor value;
        Tensor grad;                  // allocated lazily during backward
        bool requires_grad = false;
        bool is_leaf = false;
        Param* bound = nullptr;
        std::vector<int32_t> inputs;
        std::string op;
        // Receives the node's own grad, pushes into input grads.
        std::function<void(Tape&, const Node&)> backward_fn;
    };

    Value wrap(Node node);
    Value finish(const char* op, Tensor out, std::vector<int32_t> inputs,
                 std::function<void(Tape&, const Node&)> backward_fn);
    Node& node(Value v);
    const Node& node(Value v) const;
    Tensor& grad_buffer(int32_t id);
    void accumulate(int32_t id, const Tensor& g);

    std::deque<Node> nodes_;  // deque: value() references stay valid as nodes append
    bool backward_done_ = false;
};

// Finite-difference validation of reverse-mode gradients.
struct GradCheckIssue {
    size_t input_index = 0;
    int64_t flat_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double err = 0.0;
};

struct GradCheckReport {
    bool passed = true;
    double max_err = 0.0;
    int64_t coordinates = 0;
    std::vector<GradCheckIssue> failures;  // capped at 16 entries
};

inline Value operator+(Value a, Value b) { return a.tape->add(a, b); }
inline Value operator-(Value a, Value b) { return a.tape->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.tape->mul(a, b); }
inline Value operator/(Value a, Value b) { return a.tape->div(a, b); }

using TapeFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Compares reverse-mode gradients of the scalar-valued f against central
// differences (f(x+h)-f(x-h))/2h, coordinate by coordinate. The error
// measure is |a-n| / max(1, |a|, |n|). Failures are reported, not thrown.
GradCheckReport grad_check(const TapeFn& f, const std::vector<Tensor>& point,
                           double h = 1e-5, double tol = 1e-5);

}  // namespace flowlab

#endif  // FLOWLAB_AUTODIFF_HPP_
