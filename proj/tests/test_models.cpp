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

#include "error.hpp"
#include "models.hpp"
#include "rng.hpp"

using namespace flowlab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

DiTConfig toy_dit_config() {
    DiTConfig cfg;
    cfg.depth = 2;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.cond_dim = 8;
    cfg.in_channels = 1;
    cfg.n_classes = 4;
    cfg.p_dropout = 0.1;
    return cfg;
}

}  // namespace

TEST_CASE("sinusoidal_embed: t=0, norm bound, and injectivity on a grid") {
    Tensor e0 = sinusoidal_embed(0.0, 8);
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(e0[2 * i] == 0.0);
        CHECK(e0[2 * i + 1] == 1.0);
    }
    CHECK_THROWS_AS(sinusoidal_embed(0.5, 7), Error);

    // dot(e,e) = dim/2 + sum of cos^2 terms <= dim
    for (double t : {0.1, 0.35, 0.9}) {
        Tensor e = sinusoidal_embed(t, 16);
        double dot = 0.0;
        for (int64_t i = 0; i < e.size(); ++i) dot += e[i] * e[i];
        CHECK(dot <= 16.0 + 1e-12);
        CHECK(dot >= 8.0 - 1e-12);
    }

    double min_dist = 1e300;
    const int grid = 100;
    std::vector<Tensor> embeds;
    for (int i = 0; i < grid; ++i) {
        embeds.push_back(sinusoidal_embed((i + 0.5) / grid, 16));
    }
    for (int i = 0; i < grid; ++i) {
        for (int j = i + 1; j < grid; ++j) {
            double d = 0.0;
            for (int64_t m = 0; m < 16; ++m) {
                double diff = embeds[i][m] - embeds[j][m];
                d += diff * diff;
            }
            min_dist = std::min(min_dist, std::sqrt(d));
        }
    }
    CHECK(min_dist > 0.0);
}

TEST_CASE("adaln: identity modulation at init and zero-gate passthrough") {
    ParamSet ps;
    AdaLNParams ada = make_adaln(ps, "ada", 6);
    Rng rng(3);

    BranchFn branch = [](Tape& t, Value x) { return t.tanh(x); };
    for (int trial = 0; trial < 10; ++trial) {
        Tape tape;
        Value h = tape.constant(random_tensor({4, 6}, rng));
        Value cond = tape.constant(random_tensor({1, 6}, rng, -2.0, 2.0));
        Value out = adaln_modulate(tape, ps, h, cond, ada, branch);
        // out == h + branch(layer_norm(h)) for any cond at init
        Value expected = tape.add(h, branch(tape, tape.layer_norm(h)));
        for (int64_t i = 0; i < 24; ++i) {
            CHECK(std::fabs(tape.value(out)[i] - tape.value(expected)[i]) < 1e-12);
        }
    }

    // gate trained to 0 -> residual passthrough
    ParamSet ps0;
    AdaLNParams ada0 = make_adaln(ps0, "ada", 6);
    for (int64_t i = 0; i < 6; ++i) ps0[ada0.bias].value[12 + i] = 0.0;
    Tape tape;
    Value h = tape.constant(random_tensor({3, 6}, rng));
    Value cond = tape.constant(random_tensor({1, 6}, rng));
    Value out = adaln_modulate(tape, ps0, h, cond, ada0, branch);
    CHECK(tape.value(out).vec() == tape.value(h).vec());
}

TEST_CASE("adaln: gradient w.r.t. the conditioning linear matches finite differences") {
    ParamSet ps;
    AdaLNParams ada = make_adaln(ps, "ada", 4);
    Rng rng(17);
    // Move away from the identity init so the weight gradient is nontrivial.
    for (int64_t i = 0; i < ps[ada.weight].value.size(); ++i) {
        ps[ada.weight].value[i] = 0.3 * rng.gaussian();
    }
    Tensor h = random_tensor({3, 4}, rng);
    Tensor cond = random_tensor({1, 4}, rng);
    Tensor probe = random_tensor({3, 4}, rng);

    auto eval = [&]() {
        Tape tape;
        Value out = adaln_modulate(tape, ps, tape.constant(h), tape.constant(cond), ada,
                                   [](Tape& t, Value x) { return t.gelu_tanh(x); });
        return tape.value(tape.sum(tape.mul(out, tape.constant(probe)))).item();
    };

    ps.zero_grad();
    {
        Tape tape;
        Value out = adaln_modulate(tape, ps, tape.constant(h), tape.constant(cond), ada,
                                   [](Tape& t, Value x) { return t.gelu_tanh(x); });
        tape.backward(tape.sum(tape.mul(out, tape.constant(probe))));
    }
    double h_step = 1e-5;
    for (Param& p : ps) {
        for (int64_t j = 0; j < p.value.size(); ++j) {
            double orig = p.value[j];
            p.value[j] = orig + h_step;
            double fp = eval();
            p.value[j] = orig - h_step;
            double fm = eval();
            p.value[j] = orig;
            double numeric = (fp - fm) / (2.0 * h_step);
            CHECK(std::fabs(p.grad[j] - numeric) /
                      std::max({1.0, std::fabs(p.grad[j]), std::fabs(numeric)}) <
                  1e-5);
        }
    }
}

TEST_CASE("rope: position zero is the identity rotation") {
    RopeCache cache = make_rope_cache({0}, 16384.0, 2, 8);
    for (int64_t j = 0; j < 8; ++j) {
        CHECK(cache.cos_table[j] == 1.0);
        CHECK(cache.sin_table[j] == 0.0);
    }
    Rng rng(4);
    Tape tape;
    Tensor q = random_tensor({1, 8}, rng);
    Tensor k = random_tensor({1, 8}, rng);
    auto [qr, kr] = rope_apply(tape, tape.constant(q), tape.constant(k), {0}, 16384.0, 2);
    CHECK(tape.value(qr).vec() == q.vec());
    CHECK(tape.value(kr).vec() == k.vec());
}

TEST_CASE("rope: rotations are isometries") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        int64_t pos = static_cast<int64_t>(rng.uniform_int(1000));
        Tensor q = random_tensor({1, 8}, rng, -2.0, 2.0);
        Tape tape;
        auto [qr, kr] = rope_apply(tape, tape.constant(q), tape.constant(q), {pos}, 16384.0, 2);
        double n0 = 0.0, n1 = 0.0;
        for (int64_t j = 0; j < 8; ++j) {
            n0 += q[j] * q[j];
            n1 += tape.value(qr)[j] * tape.value(qr)[j];
        }
        CHECK(std::fabs(std::sqrt(n0) - std::sqrt(n1)) < 1e-12);
    }
}

TEST_CASE("rope: attention logits depend only on relative position") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        int64_t m = static_cast<int64_t>(rng.uniform_int(512));
        int64_t n = static_cast<int64_t>(rng.uniform_int(512));
        int64_t delta = static_cast<int64_t>(rng.uniform_int(512));
        Tensor qk({2, 8});
        for (int64_t j = 0; j < 16; ++j) qk[j] = rng.uniform(-1.0, 1.0);

        auto dot_after = [&](int64_t pm, int64_t pn) {
            Tape tape;
            Value rows = tape.constant(qk);
            auto [rot, unused] = rope_apply(tape, rows, rows, {pm, pn}, 16384.0, 2);
            (void)unused;
            double d = 0.0;
            for (int64_t j = 0; j < 8; ++j) {
                d += tape.value(rot).at({0, j}) * tape.value(rot).at({1, j});
            }
            return d;
        };
        CHECK(std::fabs(dot_after(m, n) - dot_after(m + delta, n + delta)) < 1e-10);
    }
}

TEST_CASE("attention: single position returns v; zero queries mix uniformly") {
    Rng rng(6);
    Tape tape;
    Tensor q1 = random_tensor({1, 4}, rng);
    Tensor v1 = random_tensor({1, 4}, rng);
    Value out = attention_mix(tape, tape.constant(q1), tape.constant(q1), tape.constant(v1), 2);
    for (int64_t j = 0; j < 4; ++j) CHECK(tape.value(out)[j] == doctest::Approx(v1[j]).epsilon(1e-12));

    Tensor q0({3, 4});  // zero queries -> uniform weights over the sequence
    Tensor k = random_tensor({5, 4}, rng);
    Tensor v = random_tensor({5, 4}, rng);
    Value u = attention_mix(tape, tape.constant(q0), tape.constant(k), tape.constant(v), 2);
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
            double mean = 0.0;
            for (int64_t l = 0; l < 5; ++l) mean += v.at({l, j});
            mean /= 5.0;
            CHECK(tape.value(u).at({i, j}) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention: two-token d=1 hand example") {
    Tape tape;
    Tensor q({2, 1}, {1.0, 2.0});
    Tensor k({2, 1}, {0.5, -1.0});
    Tensor v({2, 1}, {3.0, 7.0});
    Value out = attention_mix(tape, tape.constant(q), tape.constant(k), tape.constant(v), 1);
    auto mix = [&](double qq) {
        double a = std::exp(qq * 0.5), b = std::exp(qq * -1.0);
        return (a * 3.0 + b * 7.0) / (a + b);
    };
    CHECK(tape.value(out)[0] == doctest::Approx(mix(1.0)).epsilon(1e-12));
    CHECK(tape.value(out)[1] == doctest::Approx(mix(2.0)).epsilon(1e-12));
}

TEST_CASE("dit block: zeroed branch projections make it the identity") {
    DiTField model(toy_dit_config(), 99);
    ParamSet& ps = model.params();
    for (Param& p : ps) {
        bool is_out = p.name.find("self_out") != std::string::npos ||
                      p.name.find("cross_out") != std::string::npos ||
                      p.name.find("ff2") != std::string::npos;
        if (is_out) p.value = Tensor(p.value.shape());
    }
    Rng rng(14);
    Tape tape;
    Value h = tape.constant(random_tensor({4, 16}, rng));
    Value cond = tape.constant(random_tensor({1, 16}, rng));
    Value text = tape.constant(random_tensor({1, 16}, rng));
    Value out = model.block_forward(tape, 0, h, cond, text, false, nullptr);
    CHECK(tape.value(out).vec() == tape.value(h).vec());
}

TEST_CASE("dit: eval mode is deterministic; train mode replays under a fixed seed") {
    DiTField model(toy_dit_config(), 7);
    // Move off the zero init so dropout differences are visible at the output.
    Rng noise(71);
    for (Param& p : model.params()) {
        for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.1 * noise.gaussian();
    }
    Rng rng(8);
    Tensor x = random_tensor({3, 4}, rng);
    std::vector<double> ts = {0.2, 0.5, 0.9};
    std::vector<int> cond = {0, kNullCond, 2};

    Tensor out1 = model.eval_batch(x, ts, cond);
    Tensor out2 = model.eval_batch(x, ts, cond);
    CHECK(out1.vec() == out2.vec());

    Rng d1(123), d2(123), d3(321);
    Tape t1, t2, t3;
    Tensor a = t1.value(model.forward_batch(t1, x, ts, cond, true, &d1));
    Tensor b = t2.value(model.forward_batch(t2, x, ts, cond, true, &d2));
    Tensor c = t3.value(model.forward_batch(t3, x, ts, cond, true, &d3));
    CHECK(a.vec() == b.vec());
    CHECK(a.vec() != c.vec());
}

TEST_CASE("dit: fresh model outputs exactly zero and matches input shape") {
    DiTField model(toy_dit_config(), 2025);
    Rng rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({2, 6}, rng, -3.0, 3.0);
        std::vector<double> ts = {rng.uniform(), rng.uniform()};
        std::vector<int> cond = {trial % 4, kNullCond};
        Tensor out = model.eval_batch(x, ts, cond);
        CHECK(out.shape() == x.shape());
        for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    }
}

TEST_CASE("dit: full-model gradient check on the 4-token toy config") {
    DiTField model(toy_dit_config(), 31337);
    // Perturb away from the zero init so every path carries gradient.
    Rng noise(57);
    for (Param& p : model.params()) {
        for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.05 * noise.gaussian();
    }
    Rng rng(58);
    Tensor x = random_tensor({1, 4}, rng);
    auto result = param_grad_check(model, x, {0.35}, {1}, 1e-5, 1e-4);
    CHECK_MESSAGE(result.passed, "max_err=", result.max_err);
    CHECK(result.coordinates > 10000);
}

TEST_CASE("mlp: output shape and full gradient check") {
    MlpConfig cfg;
    cfg.in_dim = 2;
    cfg.hidden = {16, 16};
    cfg.t_embed_dim = 8;
    cfg.cond_dim = 4;
    cfg.n_classes = 4;
    MlpField model(cfg, 5);
    Rng rng(6);
    Tensor x = random_tensor({5, 2}, rng);
    std::vector<double> ts = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<int> cond = {0, 1, 2, 3, kNullCond};
    Tensor out = model.eval_batch(x, ts, cond);
    CHECK(out.shape() == x.shape());

    Tensor x1 = random_tensor({2, 2}, rng);
    auto result = param_grad_check(model, x1, {0.25, 0.75}, {1, kNullCond}, 1e-5, 1e-4);
    CHECK_MESSAGE(result.passed, "max_err=", result.max_err);
}

TEST_CASE("mlp: unknown class id is rejected") {
    MlpConfig cfg;
    cfg.n_classes = 2;
    MlpField model(cfg, 1);
    Tensor x({1, 2});
    CHECK_THROWS_AS(model.eval_batch(x, {0.5}, {5}), Error);
}

TEST_CASE("cfg_dropout_condition: limits and replacement rate") {
    Rng rng(2026);
    CHECK(cfg_dropout_condition(3, rng, 0.0) == 3);
    CHECK(cfg_dropout_condition(3, rng, 1.0) == kNullCond);
    CHECK_THROWS_AS(cfg_dropout_condition(3, rng, 1.5), Error);

    int replaced = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        if (cfg_dropout_condition(7, rng, 0.1) == kNullCond) ++replaced;
    }
    double rate = static_cast<double>(replaced) / n;
    CHECK(std::fabs(rate - 0.1) < 0.005);
}
