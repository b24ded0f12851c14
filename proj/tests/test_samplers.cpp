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
#include "rng.hpp"
#include "samplers.hpp"

using namespace flowlab;

namespace {

OdeField constant_field(double c) {
    return OdeField([c](const Tensor& x, double) { return Tensor::full(x.shape(), c); });
}

OdeField linear_field() {
    return OdeField([](const Tensor& x, double) { return x; });
}

double integrate_linear(SamplerConfig::Method method, int64_t steps) {
    OdeField f = linear_field();
    SamplerConfig cfg;
    cfg.method = method;
    cfg.steps = steps;
    Tensor x1({1}, {1.0});
    return ode_sample(f, x1, cfg)[0];
}

}  // namespace

TEST_CASE("make_t_grid: uniform descending knots") {
    CHECK(make_t_grid(1) == std::vector<double>{1.0, 0.0});
    auto g4 = make_t_grid(4);
    CHECK(g4 == std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0});
    auto g7 = make_t_grid(7);
    for (size_t i = 1; i < g7.size(); ++i) {
        CHECK(std::fabs((g7[i] - g7[i - 1]) + 1.0 / 7.0) < 1e-15);
    }
    CHECK_THROWS_AS(make_t_grid(0), Error);
}

TEST_CASE("guided_field: CFG and autoguidance arithmetic") {
    OdeField cond = constant_field(2.0);
    OdeField uncond = constant_field(1.0);
    Tensor x({1}, {0.0});

    GuidanceSpec off;
    off.w_cfg = 1.0;
    OdeField g_off = guided_field(cond, uncond, off);
    CHECK(g_off(x, 0.5)[0] == 2.0);  // w_cfg = 1 disables guidance

    GuidanceSpec cfg3;
    cfg3.w_cfg = 3.0;
    OdeField g3 = guided_field(cond, uncond, cfg3);
    CHECK(g3(x, 0.5)[0] == 4.0);  // 1 + 3*(2-1)

    GuidanceSpec both;
    both.w_cfg = 3.0;
    both.w_ag = 2.0;
    both.bad_field = constant_field(1.0);
    OdeField gb = guided_field(cond, uncond, both);
    // CFG gives 4, then autoguidance: 1 + 2*(4-1) = 7
    CHECK(gb(x, 0.5)[0] == 7.0);

    GuidanceSpec ag_only;
    ag_only.w_ag = 2.0;
    ag_only.bad_field = constant_field(1.0);
    OdeField ga = guided_field(cond, uncond, ag_only);
    CHECK(ga(x, 0.5)[0] == 3.0);  // 1 + 2*(2-1)

    GuidanceSpec missing_bad;
    missing_bad.w_ag = 2.0;
    CHECK_THROWS_AS(guided_field(cond, uncond, missing_bad), Error);
}

TEST_CASE("guided_field: inactive guidance is bit-identical to the conditional field") {
    Rng rng(12);
    OdeField cond([](const Tensor& x, double t) {
        Tensor v = x;
        for (int64_t i = 0; i < v.size(); ++i) v[i] = std::sin(13.0 * v[i]) + 0.37 * t;
        return v;
    });
    OdeField uncond = constant_field(123.0);
    GuidanceSpec spec;  // w_cfg = 1, w_ag = 1
    OdeField g = guided_field(cond, uncond, spec);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({3});
        for (int64_t i = 0; i < 3; ++i) x[i] = rng.gaussian();
        double t = rng.uniform();
        Tensor a = cond(x, t);
        Tensor b = g(x, t);
        CHECK(a.vec() == b.vec());  // exact bit equality
    }
    CHECK(uncond.nfe() == 0);  // never evaluated
}

TEST_CASE("guided_field: limited CFG interval gates the unconditional calls") {
    OdeField cond = constant_field(2.0);
    OdeField uncond = constant_field(1.0);
    GuidanceSpec spec;
    spec.w_cfg = 3.0;
    spec.cfg_t_lo = 0.0;
    spec.cfg_t_hi = 0.6;  // CFG off for the first 40% of the 1->0 trajectory
    OdeField g = guided_field(cond, uncond, spec);
    Tensor x({1}, {0.0});
    CHECK(g(x, 0.9)[0] == 2.0);   // outside interval: pure conditional
    CHECK(g(x, 0.6)[0] == 4.0);   // boundary included
    CHECK(g(x, 0.25)[0] == 4.0);  // inside

    SamplerConfig cfg;
    cfg.steps = 10;
    cond.reset_nfe();
    uncond.reset_nfe();
    euler_sample(g, x, cfg);
    CHECK(cond.nfe() == 10);
    CHECK(uncond.nfe() == 6);  // t in {0.6, 0.5, 0.4, 0.3, 0.2, 0.1}
    CHECK(g.nfe() == 13);      // 3 calls during the interval checks above + 10
}

TEST_CASE("euler: exact on constant fields, NFE equals steps") {
    for (int64_t steps : {1, 5, 17}) {
        OdeField f = constant_field(2.0);
        SamplerConfig cfg;
        cfg.steps = steps;
        Tensor x1({1}, {1.0});
        Tensor x0 = euler_sample(f, x1, cfg);
        CHECK(x0[0] == doctest::Approx(-1.0).epsilon(1e-14));
        CHECK(f.nfe() == steps);
    }
}

TEST_CASE("heun: exact on constant fields and identical to euler there") {
    OdeField f1 = constant_field(-0.7);
    OdeField f2 = constant_field(-0.7);
    SamplerConfig ce, ch;
    ce.method = SamplerConfig::Method::kEuler;
    ce.steps = 9;
    ch.method = SamplerConfig::Method::kHeun;
    ch.steps = 9;
    Tensor x1({2}, {1.0, -2.0});
    Tensor a = euler_sample(f1, x1, ce);
    Tensor b = heun_sample(f2, x1, ch);
    CHECK(a.vec() == b.vec());
    CHECK(f2.nfe() == 2 * 9 - 1);
}

TEST_CASE("heun: 50 steps cost 99 NFE") {
    OdeField f = linear_field();
    SamplerConfig cfg;
    cfg.method = SamplerConfig::Method::kHeun;
    cfg.steps = 50;
    CHECK(cfg.nfe() == 99);
    Tensor x1({1}, {1.0});
    heun_sample(f, x1, cfg);
    CHECK(f.nfe() == 99);
}

TEST_CASE("solver errors halve (euler) and quarter (heun) when steps double") {
    double exact = std::exp(-1.0);
    for (int64_t steps : {10, 20, 40}) {
        double e1 = std::fabs(integrate_linear(SamplerConfig::Method::kEuler, steps) - exact);
        double e2 = std::fabs(integrate_linear(SamplerConfig::Method::kEuler, 2 * steps) - exact);
        CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));

        double h1 = std::fabs(integrate_linear(SamplerConfig::Method::kHeun, steps) - exact);
        double h2 = std::fabs(integrate_linear(SamplerConfig::Method::kHeun, 2 * steps) - exact);
        CHECK(h1 / h2 == doctest::Approx(4.0).epsilon(0.125));
    }
}

TEST_CASE("solver order: log-log slopes over steps {10,20,40,80}") {
    double exact = std::exp(-1.0);
    auto slope = [&](SamplerConfig::Method m) {
        std::vector<double> xs, ys;
        for (int64_t steps : {10, 20, 40, 80}) {
            xs.push_back(std::log(static_cast<double>(steps)));
            ys.push_back(std::log(std::fabs(integrate_linear(m, steps) - exact)));
        }
        double mx = 0, my = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= xs.size();
        my /= ys.size();
        double num = 0, den = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            num += (xs[i] - mx) * (ys[i] - my);
            den += (xs[i] - mx) * (xs[i] - mx);
        }
        return -num / den;  // error decreases with steps
    };
    double euler_slope = slope(SamplerConfig::Method::kEuler);
    double heun_slope = slope(SamplerConfig::Method::kHeun);
    CHECK(euler_slope > 0.8);
    CHECK(euler_slope < 1.2);
    CHECK(heun_slope > 1.8);
    CHECK(heun_slope < 2.2);
}

TEST_CASE("sampler aborts with the step index on non-finite states") {
    OdeField f([](const Tensor& x, double t) {
        Tensor v = x;
        for (int64_t i = 0; i < v.size(); ++i) v[i] = t < 0.75 ? std::nan("") : 0.0;
        return v;
    });
    SamplerConfig cfg;
    cfg.steps = 4;
    Tensor x1({1}, {1.0});
    try {
        euler_sample(f, x1, cfg);
        FAIL("expected numeric abort");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kNumeric);
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("sweep: grid shape, determinism, and error rows") {
    auto generate = [](SamplerConfig::Method method, int64_t steps, double w_cfg, Rng& rng) {
        if (w_cfg > 5.0) throw Error(ErrorCode::kNumeric, "diverged");
        Tensor out({4, 1});
        for (int64_t i = 0; i < 4; ++i) {
            out[i] = rng.gaussian() + w_cfg + static_cast<double>(steps) +
                     (method == SamplerConfig::Method::kHeun ? 100.0 : 0.0);
        }
        return out;
    };
    std::vector<NamedMetric> metrics = {
        {"mean",
         [](const Tensor& s) {
             double m = 0;
             for (int64_t i = 0; i < s.size(); ++i) m += s[i];
             return m / static_cast<double>(s.size());
         }},
    };

    SweepResult one = sweep(generate, metrics, {10}, {1.0}, {SamplerConfig::Method::kEuler}, Rng(7));
    CHECK(one.rows.size() == 1);
    CHECK(one.rows[0].nfe == 10);

    SweepResult a = sweep(generate, metrics, {5, 9}, {1.0, 3.0},
                          {SamplerConfig::Method::kEuler, SamplerConfig::Method::kHeun}, Rng(7));
    SweepResult b = sweep(generate, metrics, {5, 9}, {1.0, 3.0},
                          {SamplerConfig::Method::kEuler, SamplerConfig::Method::kHeun}, Rng(7));
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.rows.size() == 8);
    // Heun rows report the achieved odd NFE.
    CHECK(a.rows[4].method == "heun");
    CHECK(a.rows[4].steps == 3);  // request 5 -> steps 3 -> nfe 5
    CHECK(a.rows[4].nfe == 5);
    CHECK(a.rows[6].steps == 5);  // request 9 -> steps 5 -> nfe 9
    CHECK(a.rows[6].nfe == 9);

    SweepResult err = sweep(generate, metrics, {10}, {9.0}, {SamplerConfig::Method::kEuler}, Rng(7));
    CHECK(err.rows.size() == 1);
    CHECK_FALSE(err.rows[0].error.empty());
    CHECK(err.to_csv().find("error:") != std::string::npos);

    std::string csv = a.to_csv();
    CHECK(csv.rfind("method,steps,nfe,w_cfg,w_ag,mean\n", 0) == 0);
}
