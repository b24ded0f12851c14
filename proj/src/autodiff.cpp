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

#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "error.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace flowlab {

namespace {

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;
constexpr double kLayerNormEps = 1e-12;

// Strides aligned to rank r with broadcast dims mapped to stride 0.
std::vector<int64_t> aligned_strides(const Shape& shape, size_t r) {
    std::vector<int64_t> s(r, 0);
    auto st = strides_of(shape);
    size_t off = r - shape.size();
    for (size_t i = 0; i < shape.size(); ++i) {
        s[off + i] = (shape[i] == 1) ? 0 : st[i];
    }
    return s;
}

template <typename F>
Tensor ew_map2(const Tensor& a, const Tensor& b, const Shape& out_shape, F&& f) {
    Tensor out(out_shape);
    size_t r = out_shape.size();
    auto sa = aligned_strides(a.shape(), r);
    auto sb = aligned_strides(b.shape(), r);
    std::vector<int64_t> idx(r, 0);
    int64_t n = out.size();
    int64_t ia = 0, ib = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        out[flat] = f(a[ia], b[ib]);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out_shape[d]) break;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    return out;
}

template <typename F>
Tensor ew_map1(const Tensor& a, F&& f) {
    Tensor out(a.shape());
    int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i]);
    return out;
}

// Sum-reduce g down to `target` (broadcast adjoint).
Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    Tensor out(target);
    size_t r = g.shape().size();
    auto so = aligned_strides(target, r);
    std::vector<int64_t> idx(r, 0);
    int64_t n = g.size();
    int64_t io = 0;
    const Shape& gs = g.shape();
    for (int64_t flat = 0; flat < n; ++flat) {
        out[io] += g[flat];
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            io += so[d];
            if (idx[d] < gs[d]) break;
            io -= so[d] * gs[d];
            idx[d] = 0;
        }
    }
    return out;
}

Tensor matmul_raw(const Tensor& a, const Tensor& b) {
    int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = out.data();
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * n;
            double* crow = pc + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor transpose_raw(const Tensor& a, int64_t a0, int64_t a1) {
    Shape out_shape = a.shape();
    std::swap(out_shape[static_cast<size_t>(a0)], out_shape[static_cast<size_t>(a1)]);
    Tensor out(out_shape);
    auto sin = strides_of(a.shape());
    std::swap(sin[static_cast<size_t>(a0)], sin[static_cast<size_t>(a1)]);
    size_t r = out_shape.size();
    std::vector<int64_t> idx(r, 0);
    int64_t n = a.size();
    int64_t isrc = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        out[flat] = a[isrc];
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            isrc += sin[d];
            if (idx[d] < out_shape[d]) break;
            isrc -= sin[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    return out;
}

}  // namespace

Value Tape::wrap(Node n) {
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int32_t>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Value v) {
    if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size()) {
        fail(ErrorCode::kInvalidArgument, "value does not belong to this tape");
    }
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Value v) const {
    return const_cast<Tape*>(this)->node(v);
}

Value Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.is_leaf = true;
    n.requires_grad = false;
    n.op = "constant";
    return wrap(std::move(n));
}

Value Tape::leaf(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.is_leaf = true;
    n.requires_grad = true;
    n.op = "leaf";
    return wrap(std::move(n));
}

Value Tape::param(Param& p) {
    Node n;
    n.value = p.value;
    n.is_leaf = true;
    n.requires_grad = true;
    n.bound = &p;
    n.op = "param:" + p.name;
    return wrap(std::move(n));
}

const Tensor& Tape::value(Value v) const {
    return node(v).value;
}

const Tensor& Tape::grad(Value v) const {
    const Node& n = node(v);
    if (!backward_done_) fail(ErrorCode::kState, "grad() before backward()");
    if (!n.is_leaf) fail(ErrorCode::kState, "grad() is only retained for leaf nodes");
    if (!n.requires_grad) fail(ErrorCode::kState, "grad() of a constant");
    return n.grad;
}

Value Tape::finish(const char* op, Tensor out, std::vector<int32_t> inputs,
                   std::function<void(Tape&, const Node&)> backward_fn) {
    if (!out.all_finite()) {
        fail(ErrorCode::kNumeric, std::string(op) + ": non-finite output");
    }
    Node n;
    n.value = std::move(out);
    n.inputs = std::move(inputs);
    n.op = op;
    for (int32_t id : n.inputs) {
        if (nodes_[static_cast<size_t>(id)].requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    if (n.requires_grad) n.backward_fn = std::move(backward_fn);
    return wrap(std::move(n));
}

Tensor& Tape::grad_buffer(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0 && n.value.size() != 0) {
        n.grad = Tensor(n.value.shape());
    } else if (n.grad.shape() != n.value.shape()) {
        n.grad = Tensor(n.value.shape());
    }
    return n.grad;
}

void Tape::accumulate(int32_t id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    Tensor& buf = grad_buffer(id);
    int64_t sz = buf.size();
    for (int64_t i = 0; i < sz; ++i) buf[i] += g[i];
}

// ---- elementwise binaries ----

Value Tape::add(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Shape os = broadcast_shapes(ta.shape(), tb.shape(), "add");
    Tensor out = ew_map2(ta, tb, os, [](double x, double y) { return x + y; });
    int32_t ia = a.id, ib = b.id;
    return finish("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Node& self) {
        t.accumulate(ia, reduce_to(self.grad, t.nodes_[static_cast<size_t>(ia)].value.shape()));
        t.accumulate(ib, reduce_to(self.grad, t.nodes_[static_cast<size_t>(ib)].value.shape()));
    });
}

Value Tape::sub(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Shape os = broadcast_shapes(ta.shape(), tb.shape(), "sub");
    Tensor out = ew_map2(ta, tb, os, [](double x, double y) { return x - y; });
    int32_t ia = a.id, ib = b.id;
    return finish("sub", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Node& self) {
        t.accumulate(ia, reduce_to(self.grad, t.nodes_[static_cast<size_t>(ia)].value.shape()));
        Tensor neg = ew_map1(self.grad, [](double x) { return -x; });
        t.accumulate(ib, reduce_to(neg, t.nodes_[static_cast<size_t>(ib)].value.shape()));
    });
}

Value Tape::mul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Shape os = broadcast_shapes(ta.shape(), tb.shape(), "mul");
    Tensor out = ew_map2(ta, tb, os, [](double x, double y) { return x * y; });
    int32_t ia = a.id, ib = b.id;
    return finish("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& vb = t.nodes_[static_cast<size_t>(ib)].value;
        Tensor ga = ew_map2(self.grad, vb, self.value.shape(), [](double g, double y) { return g * y; });
        Tensor gb = ew_map2(self.grad, va, self.value.shape(), [](double g, double x) { return g * x; });
        t.accumulate(ia, reduce_to(ga, va.shape()));
        t.accumulate(ib, reduce_to(gb, vb.shape()));
    });
}

Value Tape::div(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Shape os = broadcast_shapes(ta.shape(), tb.shape(), "div");
    Tensor out = ew_map2(ta, tb, os, [](double x, double y) { return x / y; });
    int32_t ia = a.id, ib = b.id;
    return finish("div", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& vb = t.nodes_[static_cast<size_t>(ib)].value;
        Tensor ga = ew_map2(self.grad, vb, self.value.shape(), [](double g, double y) { return g / y; });
        // d(a/b)/db = -a/b^2 = -value/b
        Tensor gb = ew_map2(self.grad, self.value, self.value.shape(), [](double g, double q) { return g * q; });
        gb = ew_map2(gb, vb, self.value.shape(), [](double gq, double y) { return -gq / y; });
        t.accumulate(ia, reduce_to(ga, va.shape()));
        t.accumulate(ib, reduce_to(gb, vb.shape()));
    });
}

// ---- matmul ----

Value Tape::matmul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0]) {
        fail(ErrorCode::kShapeMismatch,
             "matmul: incompatible shapes " + shape_str(ta.shape()) + " and " + shape_str(tb.shape()));
    }
    Tensor out = matmul_raw(ta, tb);
    int32_t ia = a.id, ib = b.id;
    return finish("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& vb = t.nodes_[static_cast<size_t>(ib)].value;
        t.accumulate(ia, matmul_raw(self.grad, transpose_raw(vb, 0, 1)));
        t.accumulate(ib, matmul_raw(transpose_raw(va, 0, 1), self.grad));
    });
}

// ---- reductions ----

Value Tape::sum(Value a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
    int32_t ia = a.id;
    return finish("sum", Tensor::scalar(s), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        t.accumulate(ia, Tensor::full(va.shape(), self.grad.item()));
    });
}

Value Tape::mean(Value a) {
    const Tensor& ta = value(a);
    if (ta.size() == 0) fail(ErrorCode::kInvalidArgument, "mean of empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
    double inv_n = 1.0 / static_cast<double>(ta.size());
    int32_t ia = a.id;
    return finish("mean", Tensor::scalar(s * inv_n), {ia}, [ia, inv_n](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        t.accumulate(ia, Tensor::full(va.shape(), self.grad.item() * inv_n));
    });
}

// ---- unaries ----

Value Tape::exp(Value a) {
    Tensor out = ew_map1(value(a), [](double x) { return std::exp(x); });
    int32_t ia = a.id;
    return finish("exp", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        Tensor g = ew_map2(self.grad, self.value, self.value.shape(), [](double gg, double y) { return gg * y; });
        t.accumulate(ia, g);
    });
}

Value Tape::log(Value a) {
    Tensor out = ew_map1(value(a), [](double x) { return std::log(x); });
    int32_t ia = a.id;
    return finish("log", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor g = ew_map2(self.grad, va, va.shape(), [](double gg, double x) { return gg / x; });
        t.accumulate(ia, g);
    });
}

Value Tape::sqrt(Value a) {
    Tensor out = ew_map1(value(a), [](double x) { return std::sqrt(x); });
    int32_t ia = a.id;
    return finish("sqrt", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        Tensor g = ew_map2(self.grad, self.value, self.value.shape(),
                           [](double gg, double y) { return 0.5 * gg / y; });
        t.accumulate(ia, g);
    });
}

Value Tape::abs(Value a) {
    Tensor out = ew_map1(value(a), [](double x) { return std::fabs(x); });
    int32_t ia = a.id;
    return finish("abs", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor g = ew_map2(self.grad, va, va.shape(), [](double gg, double x) {
            return x > 0.0 ? gg : (x < 0.0 ? -gg : 0.0);
        });
        t.accumulate(ia, g);
    });
}

Value Tape::tanh(Value a) {
    Tensor out = ew_map1(value(a), [](double x) { return std::tanh(x); });
    int32_t ia = a.id;
    return finish("tanh", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        Tensor g = ew_map2(self.grad, self.value, self.value.shape(),
                           [](double gg, double y) { return gg * (1.0 - y * y); });
        t.accumulate(ia, g);
    });
}

Value Tape::gelu_tanh(Value a) {
    Tensor out = ew_map1(value(a), [](double x) {
        double u = kGeluK * (x + kGeluC * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
    });
    int32_t ia = a.id;
    return finish("gelu_tanh", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor g = ew_map2(self.grad, va, va.shape(), [](double gg, double x) {
            double u = kGeluK * (x + kGeluC * x * x * x);
            double th = std::tanh(u);
            double du = kGeluK * (1.0 + 3.0 * kGeluC * x * x);
            double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
            return gg * d;
        });
        t.accumulate(ia, g);
    });
}

// ---- row-wise ops over the last axis ----

Value Tape::softmax(Value a) {
    const Tensor& ta = value(a);
    if (ta.rank() < 1) fail(ErrorCode::kShapeMismatch, "softmax: requires rank >= 1");
    int64_t cols = ta.shape().back();
    int64_t rows = ta.size() / cols;
    Tensor out(ta.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = ta.data() + r * cols;
        double* y = out.data() + r * cols;
        double m = x[0];
        for (int64_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (int64_t j = 0; j < cols; ++j) y[j] /= s;
    }
    int32_t ia = a.id;
    return finish("softmax", std::move(out), {ia}, [ia, rows, cols](Tape& t, const Node& self) {
        Tensor g(self.value.shape());
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * cols;
            const double* gy = self.grad.data() + r * cols;
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += gy[j] * y[j];
            double* gx = g.data() + r * cols;
            for (int64_t j = 0; j < cols; ++j) gx[j] = y[j] * (gy[j] - dot);
        }
        t.accumulate(ia, g);
    });
}

Value Tape::layer_norm(Value a) {
    const Tensor& ta = value(a);
    if (ta.rank() < 1) fail(ErrorCode::kShapeMismatch, "layer_norm: requires rank >= 1");
    int64_t cols = ta.shape().back();
    int64_t rows = ta.size() / cols;
    Tensor out(ta.shape());
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = ta.data() + r * cols;
        double mu = 0.0;
        for (int64_t j = 0; j < cols; ++j) mu += x[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(cols);
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_sigma[static_cast<size_t>(r)] = is;
        double* y = out.data() + r * cols;
        for (int64_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * is;
    }
    int32_t ia = a.id;
    return finish("layer_norm", std::move(out), {ia},
                  [ia, rows, cols, inv_sigma](Tape& t, const Node& self) {
        Tensor g(self.value.shape());
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * cols;
            const double* gy = self.grad.data() + r * cols;
            double mg = 0.0, mgy = 0.0;
            for (int64_t j = 0; j < cols; ++j) {
                mg += gy[j];
                mgy += gy[j] * y[j];
            }
            mg /= static_cast<double>(cols);
            mgy /= static_cast<double>(cols);
            double is = inv_sigma[static_cast<size_t>(r)];
            double* gx = g.data() + r * cols;
            for (int64_t j = 0; j < cols; ++j) gx[j] = is * (gy[j] - mg - y[j] * mgy);
        }
        t.accumulate(ia, g);
    });
}

// ---- structure ops ----

Value Tape::concat(const std::vector<Value>& parts, int64_t axis) {
    if (parts.empty()) fail(ErrorCode::kInvalidArgument, "concat: no inputs");
    const Tensor& first = value(parts[0]);
    int64_t rank = first.rank();
    if (axis < 0 || axis >= rank) fail(ErrorCode::kInvalidArgument, "concat: axis out of range");
    Shape os = first.shape();
    int64_t total = 0;
    for (const Value& p : parts) {
        const Tensor& tp = value(p);
        if (tp.rank() != rank) fail(ErrorCode::kShapeMismatch, "concat: rank mismatch");
        for (int64_t d = 0; d < rank; ++d) {
            if (d != axis && tp.shape()[static_cast<size_t>(d)] != os[static_cast<size_t>(d)]) {
                fail(ErrorCode::kShapeMismatch,
                     "concat: shapes " + shape_str(os) + " and " + shape_str(tp.shape()) +
                         " differ off-axis");
            }
        }
        total += tp.shape()[static_cast<size_t>(axis)];
    }
    os[static_cast<size_t>(axis)] = total;

    // outer = product of dims before axis; inner = product after.
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= os[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < rank; ++d) inner *= os[static_cast<size_t>(d)];

    Tensor out(os);
    std::vector<int32_t> ids;
    std::vector<int64_t> axis_sizes;
    int64_t offset = 0;
    for (const Value& p : parts) {
        const Tensor& tp = value(p);
        int64_t ax = tp.shape()[static_cast<size_t>(axis)];
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = tp.data() + o * ax * inner;
            double* dst = out.data() + (o * total + offset) * inner;
            std::copy(src, src + ax * inner, dst);
        }
        offset += ax;
        ids.push_back(p.id);
        axis_sizes.push_back(ax);
    }
    return finish("concat", std::move(out), ids,
                  [ids, axis_sizes, outer, inner, total](Tape& t, const Node& self) {
        int64_t off = 0;
        for (size_t i = 0; i < ids.size(); ++i) {
            int64_t ax = axis_sizes[i];
            const Tensor& vi = t.nodes_[static_cast<size_t>(ids[i])].value;
            Tensor g(vi.shape());
            for (int64_t o = 0; o < outer; ++o) {
                const double* src = self.grad.data() + (o * total + off) * inner;
                double* dst = g.data() + o * ax * inner;
                std::copy(src, src + ax * inner, dst);
            }
            t.accumulate(ids[i], g);
            off += ax;
        }
    });
}

Value Tape::slice(Value a, int64_t axis, int64_t start, int64_t len) {
    const Tensor& ta = value(a);
    int64_t rank = ta.rank();
    if (axis < 0 || axis >= rank) fail(ErrorCode::kInvalidArgument, "slice: axis out of range");
    int64_t dim = ta.shape()[static_cast<size_t>(axis)];
    if (len < 1 || start < 0 || start + len > dim) {
        fail(ErrorCode::kInvalidArgument, "slice: range [" + std::to_string(start) + "," +
                                              std::to_string(start + len) + ") out of bounds for dim " +
                                              std::to_string(dim));
    }
    Shape os = ta.shape();
    os[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= ta.shape()[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < rank; ++d) inner *= ta.shape()[static_cast<size_t>(d)];
    Tensor out(os);
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = ta.data() + (o * dim + start) * inner;
        std::copy(src, src + len * inner, out.data() + o * len * inner);
    }
    int32_t ia = a.id;
    return finish("slice", std::move(out), {ia},
                  [ia, outer, inner, dim, start, len](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor g(va.shape());
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + o * len * inner;
            double* dst = g.data() + (o * dim + start) * inner;
            std::copy(src, src + len * inner, dst);
        }
        t.accumulate(ia, g);
    });
}

Value Tape::transpose(Value a, int64_t axis0, int64_t axis1) {
    const Tensor& ta = value(a);
    if (axis0 < 0 || axis0 >= ta.rank() || axis1 < 0 || axis1 >= ta.rank()) {
        fail(ErrorCode::kInvalidArgument, "transpose: axis out of range");
    }
    Tensor out = transpose_raw(ta, axis0, axis1);
    int32_t ia = a.id;
    return finish("transpose", std::move(out), {ia}, [ia, axis0, axis1](Tape& t, const Node& self) {
        t.accumulate(ia, transpose_raw(self.grad, axis0, axis1));
    });
}

Value Tape::broadcast_to(Value a, Shape shape) {
    const Tensor& ta = value(a);
    Shape check = broadcast_shapes(ta.shape(), shape, "broadcast");
    if (check != shape) {
        fail(ErrorCode::kShapeMismatch,
             "broadcast: cannot broadcast " + shape_str(ta.shape()) + " to " + shape_str(shape));
    }
    Tensor ones(shape);
    Tensor out = ew_map2(ta, ones, shape, [](double x, double) { return x; });
    int32_t ia = a.id;
    return finish("broadcast", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        t.accumulate(ia, reduce_to(self.grad, va.shape()));
    });
}

Value Tape::reshape(Value a, Shape shape) {
    const Tensor& ta = value(a);
    if (shape_size(shape) != ta.size()) {
        fail(ErrorCode::kShapeMismatch,
             "reshape: size mismatch " + shape_str(ta.shape()) + " -> " + shape_str(shape));
    }
    Tensor out(shape, ta.vec());
    int32_t ia = a.id;
    return finish("reshape", std::move(out), {ia}, [ia](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        t.accumulate(ia, Tensor(va.shape(), self.grad.vec()));
    });
}

Value Tape::gather1d(Value a, std::vector<int64_t> indices) {
    const Tensor& ta = value(a);
    if (ta.rank() != 1) fail(ErrorCode::kShapeMismatch, "gather1d: input must be rank 1");
    int64_t n = ta.size();
    Tensor out({static_cast<int64_t>(indices.size())});
    for (size_t i = 0; i < indices.size(); ++i) {
        int64_t ix = indices[i];
        if (ix < 0 || ix >= n) fail(ErrorCode::kInvalidArgument, "gather1d: index out of range");
        out[static_cast<int64_t>(i)] = ta[ix];
    }
    int32_t ia = a.id;
    return finish("gather1d", std::move(out), {ia}, [ia, indices](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor g(va.shape());
        for (size_t i = 0; i < indices.size(); ++i) {
            g[indices[i]] += self.grad[static_cast<int64_t>(i)];
        }
        t.accumulate(ia, g);
    });
}

Value Tape::dropout(Value a, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) fail(ErrorCode::kInvalidArgument, "dropout: p must be in [0,1)");
    if (p == 0.0) return a;
    const Tensor& ta = value(a);
    double keep = 1.0 - p;
    Tensor mask(ta.shape());
    for (int64_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
    }
    Tensor out = ew_map2(ta, mask, ta.shape(), [](double x, double m) { return x * m; });
    int32_t ia = a.id;
    return finish("dropout", std::move(out), {ia}, [ia, mask](Tape& t, const Node& self) {
        Tensor g = ew_map2(self.grad, mask, mask.shape(), [](double gg, double m) { return gg * m; });
        t.accumulate(ia, g);
    });
}

Value Tape::scale(Value a, double c) {
    return mul(a, constant(Tensor::scalar(c)));
}

Value Tape::add_scalar(Value a, double c) {
    return add(a, constant(Tensor::scalar(c)));
}

void Tape::backward(Value root) {
    Node& r = node(root);
    if (r.value.rank() != 0) {
        fail(ErrorCode::kInvalidArgument, "backward: root must be a scalar, got shape " + shape_str(r.value.shape()));
    }
    if (backward_done_) fail(ErrorCode::kState, "backward() already ran on this tape");
    backward_done_ = true;
    if (!r.requires_grad) {
        // Nothing differentiable upstream; leaf grads stay zero.
        for (Node& n : nodes_) {
            if (n.is_leaf && n.requires_grad && n.grad.size() == 0) n.grad = Tensor(n.value.shape());
        }
        return;
    }
    grad_buffer(root.id)[0] = 1.0;
    for (int32_t i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward_fn) n.backward_fn(*this, n);
        if (n.bound != nullptr) {
            Tensor& pg = n.bound->grad;
            if (pg.shape() != n.grad.shape()) pg = Tensor(n.grad.shape());
            for (int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
        }
        if (!n.is_leaf) n.grad = Tensor();  // free intermediate grads
    }
    for (Node& n : nodes_) {
        if (n.is_leaf && n.requires_grad && n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    }
}

GradCheckReport grad_check(const TapeFn& f, const std::vector<Tensor>& point, double h, double tol) {
    if (h <= 0.0) fail(ErrorCode::kInvalidArgument, "grad_check: h must be positive");
    GradCheckReport report;

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Value> leaves;
        leaves.reserve(point.size());
        for (const Tensor& t : point) leaves.push_back(tape.leaf(t));
        Value root = f(tape, leaves);
        if (tape.value(root).rank() != 0) {
            fail(ErrorCode::kInvalidArgument, "grad_check: f must be scalar-valued");
        }
        tape.backward(root);
        for (Value v : leaves) analytic.push_back(tape.grad(v));
    }

    auto eval = [&](const std::vector<Tensor>& x) {
        Tape tape;
        std::vector<Value> leaves;
        leaves.reserve(x.size());
        for (const Tensor& t : x) leaves.push_back(tape.constant(t));
        return tape.value(f(tape, leaves)).item();
    };

    std::vector<Tensor> work = point;
    for (size_t i = 0; i < point.size(); ++i) {
        for (int64_t j = 0; j < point[i].size(); ++j) {
            double orig = work[i][j];
            work[i][j] = orig + h;
            double fp = eval(work);
            work[i][j] = orig - h;
            double fm = eval(work);
            work[i][j] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[i][j];
            double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            report.max_err = std::max(report.max_err, err);
            ++report.coordinates;
            if (err > tol) {
                report.passed = false;
                if (report.failures.size() < 16) {
                    report.failures.push_back({i, j, a, numeric, err});
                }
            }
        }
    }
    return report;
}

}  // namespace flowlab
