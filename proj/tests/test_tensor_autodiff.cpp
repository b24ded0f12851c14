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

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "error.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace flowlab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul forward: identity and hand-computed product") {
    Tape tape;
    Value i2 = tape.constant(Tensor::eye(2));
    Value m = tape.constant(Tensor::from_rows({{3, 4}, {5, 6}}));
    Value out = tape.matmul(i2, m);
    CHECK(tape.value(out).vec() == std::vector<double>{3, 4, 5, 6});

    Value a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    Value b = tape.constant(Tensor::from_rows({{5, 6}, {7, 8}}));
    Value c = tape.matmul(a, b);
    // hand arithmetic: [[1*5+2*7, 1*6+2*8], [3*5+4*7, 3*6+4*8]]
    CHECK(tape.value(c).vec() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("broadcast mismatch raises a shape error naming the op") {
    Tape tape;
    Value a = tape.constant(Tensor({2, 3}));
    Value b = tape.constant(Tensor({4}));
    try {
        tape.add(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kShapeMismatch);
        std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4)") != std::string::npos);
    }
}

TEST_CASE("backward: d/dx sum(x^2) at x=[3] is [6]") {
    Tape tape;
    Value x = tape.leaf(Tensor({1}, {3.0}));
    Value root = tape.sum(tape.mul(x, x));
    tape.backward(root);
    CHECK(tape.grad(x).vec() == std::vector<double>{6.0});
}

TEST_CASE("backward: sum(matmul(A,B)) matches central differences") {
    Rng rng(11);
    auto f = [](Tape& t, const std::vector<Value>& v) {
        return t.sum(t.matmul(v[0], v[1]));
    };
    std::vector<Tensor> point = {random_tensor({3, 2}, rng), random_tensor({2, 4}, rng)};
    auto report = grad_check(f, point, 1e-5, 1e-6);
    CHECK(report.passed);
    CHECK(report.coordinates == 14);
}

TEST_CASE("backward: constant-only graph leaves an empty gradient set") {
    Tape tape;
    Value c = tape.constant(Tensor({3}, {1.0, 2.0, 3.0}));
    Value root = tape.mean(c);
    tape.backward(root);  // no differentiable inputs; must not throw
    CHECK(tape.value(root).item() == doctest::Approx(2.0));
}

TEST_CASE("backward: non-scalar root is a contract error") {
    Tape tape;
    Value x = tape.leaf(Tensor({2}, {1.0, 2.0}));
    Value y = tape.mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("grad_check: tanh at 0 has unit derivative") {
    auto f = [](Tape& t, const std::vector<Value>& v) { return t.sum(t.tanh(v[0])); };
    std::vector<Tensor> point = {Tensor({1}, {0.0})};
    Tape tape;
    Value x = tape.leaf(point[0]);
    Value root = f(tape, {x});
    tape.backward(root);
    CHECK(tape.grad(x)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grad_check(f, point).passed);
}

TEST_CASE("grad_check: softmax cross-entropy on 3 classes") {
    // loss = -sum(target * log(softmax(logits)))
    Tensor target({3}, {0.1, 0.7, 0.2});
    auto f = [target](Tape& t, const std::vector<Value>& v) {
        Value logp = t.log(t.softmax(v[0]));
        return t.scale(t.sum(t.mul(t.constant(target), logp)), -1.0);
    };
    std::vector<Tensor> point = {Tensor({3}, {0.2, -0.4, 1.1})};
    auto report = grad_check(f, point, 1e-5, 1e-5);
    CHECK(report.passed);
}

TEST_CASE("grad_check: deliberately wrong backward rule fails") {
    // Numerically behaves like sum(x*x) but routes half the dependence
    // through a constant, so the reverse-mode grad is x instead of 2x.
    auto f = [](Tape& t, const std::vector<Value>& v) {
        Tensor frozen = t.value(v[0]);
        return t.sum(t.mul(v[0], t.constant(frozen)));
    };
    std::vector<Tensor> point = {Tensor({2}, {3.0, -1.5})};
    auto report = grad_check(f, point, 1e-5, 1e-5);
    CHECK_FALSE(report.passed);
    CHECK(report.failures.size() == 2);
}

TEST_CASE("every primitive passes randomized finite-difference checks") {
    Rng rng(20240917);
    struct Case {
        const char* name;
        TapeFn fn;
        std::vector<Tensor> point;
    };
    // Shapes up to rank 3; points kept away from non-smooth / out-of-domain
    // regions (log, sqrt, div, abs).
    std::vector<Case> cases;
    cases.push_back({"add", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.add(v[0], v[1])); },
                     {random_tensor({2, 3, 2}, rng), random_tensor({3, 1}, rng)}});
    cases.push_back({"sub", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.sub(v[0], v[1])); },
                     {random_tensor({4}, rng), random_tensor({2, 4}, rng)}});
    cases.push_back({"mul", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(v[0], v[1])); },
                     {random_tensor({2, 2, 3}, rng), random_tensor({1, 3}, rng)}});
    cases.push_back({"div", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.div(v[0], v[1])); },
                     {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng, 0.5, 2.0)}});
    cases.push_back({"matmul", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.matmul(v[0], v[1])); },
                     {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}});
    cases.push_back({"sum", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(v[0], v[0])); },
                     {random_tensor({2, 3}, rng)}});
    cases.push_back({"mean", [](Tape& t, const std::vector<Value>& v) { return t.mean(t.mul(v[0], v[0])); },
                     {random_tensor({3, 2, 2}, rng)}});
    cases.push_back({"exp", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.exp(v[0])); },
                     {random_tensor({5}, rng)}});
    cases.push_back({"log", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.log(v[0])); },
                     {random_tensor({2, 3}, rng, 0.5, 2.0)}});
    cases.push_back({"sqrt", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.sqrt(v[0])); },
                     {random_tensor({4}, rng, 0.5, 2.0)}});
    cases.push_back({"abs", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.abs(v[0])); },
                     {random_tensor({2, 4}, rng, 0.2, 1.0)}});
    cases.push_back({"tanh", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.tanh(v[0])); },
                     {random_tensor({3, 3}, rng)}});
    cases.push_back({"gelu_tanh", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.gelu_tanh(v[0])); },
                     {random_tensor({2, 5}, rng, -2.0, 2.0)}});
    cases.push_back({"softmax",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value s = t.softmax(v[0]);
                         return t.sum(t.mul(s, s));
                     },
                     {random_tensor({2, 4}, rng)}});
    cases.push_back({"layer_norm",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value y = t.layer_norm(v[0]);
                         return t.sum(t.mul(y, t.exp(y)));
                     },
                     {random_tensor({2, 5}, rng)}});
    cases.push_back({"concat",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value c = t.concat({v[0], v[1]}, 1);
                         return t.sum(t.mul(c, c));
                     },
                     {random_tensor({2, 2, 3}, rng), random_tensor({2, 3, 3}, rng)}});
    cases.push_back({"slice",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value s = t.slice(v[0], 1, 1, 2);
                         return t.sum(t.mul(s, s));
                     },
                     {random_tensor({2, 4, 2}, rng)}});
    cases.push_back({"transpose",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value tr = t.transpose(v[0], 0, 2);
                         return t.sum(t.mul(tr, t.exp(tr)));
                     },
                     {random_tensor({2, 3, 4}, rng)}});
    cases.push_back({"broadcast",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value b = t.broadcast_to(v[0], {4, 3, 2});
                         return t.sum(t.mul(b, b));
                     },
                     {random_tensor({3, 1}, rng)}});
    cases.push_back({"reshape",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value r = t.reshape(v[0], {3, 2});
                         return t.sum(t.mul(r, t.exp(r)));
                     },
                     {random_tensor({6}, rng)}});
    cases.push_back({"gather1d",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value g = t.gather1d(v[0], {0, 2, 2, 4, 1});
                         return t.sum(t.mul(g, g));
                     },
                     {random_tensor({5}, rng)}});

    for (auto& c : cases) {
        CAPTURE(c.name);
        auto report = grad_check(c.fn, c.point, 1e-5, 1e-5);
        CHECK_MESSAGE(report.passed, c.name, ": max_err=", report.max_err);
    }
}

TEST_CASE("softmax rows sum to one; layer_norm is standardized") {
    Rng rng(7);
    Tensor x = random_tensor({6, 9}, rng, -3.0, 3.0);
    Tape tape;
    Value s = tape.softmax(tape.constant(x));
    for (int64_t r = 0; r < 6; ++r) {
        double rowsum = 0.0;
        for (int64_t j = 0; j < 9; ++j) rowsum += tape.value(s).at({r, j});
        CHECK(std::fabs(rowsum - 1.0) < 1e-12);
    }
    Value ln = tape.layer_norm(tape.constant(x));
    for (int64_t r = 0; r < 6; ++r) {
        double mu = 0.0, var = 0.0;
        for (int64_t j = 0; j < 9; ++j) mu += tape.value(ln).at({r, j});
        mu /= 9.0;
        for (int64_t j = 0; j < 9; ++j) {
            double d = tape.value(ln).at({r, j}) - mu;
            var += d * d;
        }
        var /= 9.0;
        CHECK(std::fabs(mu) < 1e-10);
        CHECK(std::fabs(var - 1.0) < 1e-8);
    }
}

TEST_CASE("dropout: seeded mask reproduces and backward uses the same mask") {
    Tensor x = Tensor::full({64}, 1.0);
    Rng rng1(5), rng2(5);
    Tape t1, t2;
    Value a1 = t1.leaf(x);
    Value y1 = t1.dropout(a1, 0.25, rng1);
    Value a2 = t2.leaf(x);
    Value y2 = t2.dropout(a2, 0.25, rng2);
    CHECK(t1.value(y1).vec() == t2.value(y2).vec());
    // backward of sum(dropout(x)) gives exactly the mask
    Value root = t1.sum(y1);
    t1.backward(root);
    CHECK(t1.grad(a1).vec() == t1.value(y1).vec());  // x==1 so output==mask
}

TEST_CASE("non-finite outputs are a numeric error, not a silent state") {
    Tape tape;
    Value x = tape.constant(Tensor({1}, {-1.0}));
    CHECK_THROWS_AS(tape.log(x), Error);
    Value z = tape.constant(Tensor({1}, {0.0}));
    Value one = tape.constant(Tensor({1}, {1.0}));
    CHECK_THROWS_AS(tape.div(one, z), Error);
}

TEST_CASE("adamw: hand-evaluated first step") {
    ParamSet ps;
    int w = ps.add("w", Tensor({1}, {1.0}));
    ps[w].grad = Tensor({1}, {1.0});
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    adamw_step(ps, cfg);
    // m_hat = 1, v_hat = 1 -> theta = 1 - 0.1 * 1/(1 + 1e-8)
    CHECK(ps[w].value[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adamw: zero gradient leaves the value unchanged") {
    ParamSet ps;
    int w = ps.add("w", Tensor({2}, {1.0, -2.0}));
    AdamWConfig cfg;
    adamw_step(ps, cfg);
    CHECK(ps[w].value.vec() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("adamw: decoupled decay applies without gradient") {
    ParamSet ps;
    int w = ps.add("w", Tensor({1}, {1.0}));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.1;
    adamw_step(ps, cfg);
    CHECK(ps[w].value[0] == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("adamw: non-finite gradient names the parameter") {
    ParamSet ps;
    int w = ps.add("bad_param", Tensor({1}, {1.0}));
    ps[w].grad = Tensor({1}, {std::nan("")});
    try {
        adamw_step(ps, AdamWConfig{});
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kNumeric);
        CHECK(std::string(e.what()).find("bad_param") != std::string::npos);
    }
}

namespace {

// Tiny fixed training script used by the determinism check: fit y = Wx on
// random data for a few AdamW steps and return the final parameter bytes.
std::vector<double> run_training_script(uint64_t seed) {
    Rng rng(seed);
    ParamSet ps;
    int w = ps.add("w", random_tensor({3, 3}, rng));
    Tensor target = random_tensor({4, 3}, rng);
    Tensor input = random_tensor({4, 3}, rng);
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    for (int step = 0; step < 25; ++step) {
        ps.zero_grad();
        Tape tape;
        Value pred = tape.matmul(tape.constant(input), tape.param(ps[w]));
        Value diff = tape.sub(pred, tape.constant(target));
        Value loss = tape.mean(tape.mul(diff, diff));
        tape.backward(loss);
        adamw_step(ps, cfg);
    }
    return ps[w].value.vec();
}

}  // namespace

TEST_CASE("determinism: same seed gives bit-identical trajectories") {
    auto a = run_training_script(123);
    auto b = run_training_script(123);
    CHECK(a == b);
    auto c = run_training_script(124);
    CHECK(a != c);
}

TEST_CASE("rng: identical seeds give identical streams, derived streams differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng base(42);
    Rng s1 = base.derive(1);
    Rng s2 = base.derive(2);
    bool all_equal = true;
    for (int i = 0; i < 16; ++i) {
        if (s1.next_u64() != s2.next_u64()) all_equal = false;
    }
    CHECK_FALSE(all_equal);
}

TEST_CASE("checkpoint: roundtrip, shape validation, byte determinism") {
    Rng rng(9);
    ParamSet ps;
    ps.add("layer0/weight", random_tensor({2, 3}, rng));
    ps.add("layer0/bias", random_tensor({3}, rng));
    std::string path = "ckpt_test.json";
    save_checkpoint(ps, path);

    ParamSet loaded;
    loaded.add("layer0/weight", Tensor({2, 3}));
    loaded.add("layer0/bias", Tensor({3}));
    load_checkpoint(loaded, path);
    CHECK(loaded[0].value.vec() == ps[0].value.vec());
    CHECK(loaded[1].value.vec() == ps[1].value.vec());

    ParamSet wrong;
    wrong.add("layer0/weight", Tensor({3, 2}));
    wrong.add("layer0/bias", Tensor({3}));
    CHECK_THROWS_AS(load_checkpoint(wrong, path), Error);

    save_checkpoint(ps, "ckpt_test2.json");
    std::ifstream f1(path), f2("ckpt_test2.json");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::remove(path.c_str());
    std::remove("ckpt_test2.json");
}
