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

#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "captions.hpp"
#include "datasets.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "vae_losses.hpp"

namespace flowlab {

namespace {

struct CheckContext {
    std::ostringstream detail;
    bool ok = true;

    void expect(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (detail.tellp() > 0) detail << "; ";
            detail << what;
        }
    }
};

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

void check_primitive_gradients(CheckContext& c) {
    Rng rng(1);
    struct Case {
        const char* name;
        TapeFn fn;
        std::vector<Tensor> point;
    };
    std::vector<Case> cases;
    cases.push_back({"matmul", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.matmul(v[0], v[1])); },
                     {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}});
    cases.push_back({"gelu_tanh", [](Tape& t, const std::vector<Value>& v) { return t.sum(t.gelu_tanh(v[0])); },
                     {random_tensor({2, 5}, rng, -2.0, 2.0)}});
    cases.push_back({"softmax",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value s = t.softmax(v[0]);
                         return t.sum(t.mul(s, s));
                     },
                     {random_tensor({3, 4}, rng)}});
    cases.push_back({"layer_norm",
                     [](Tape& t, const std::vector<Value>& v) {
                         Value y = t.layer_norm(v[0]);
                         return t.sum(t.mul(y, t.exp(y)));
                     },
                     {random_tensor({2, 6}, rng)}});
    cases.push_back({"log_div",
                     [](Tape& t, const std::vector<Value>& v) {
                         return t.sum(t.log(t.div(v[0], v[1])));
                     },
                     {random_tensor({4}, rng, 0.5, 2.0), random_tensor({4}, rng, 0.5, 2.0)}});
    for (auto& cs : cases) {
        auto report = grad_check(cs.fn, cs.point, 1e-5, 1e-5);
        c.expect(report.passed, std::string(cs.name) + " max_err=" + std::to_string(report.max_err));
    }
}

void check_rng_determinism(CheckContext& c) {
    Rng a(99), b(99);
    bool same = true;
    for (int i = 0; i < 64; ++i) same = same && a.next_u64() == b.next_u64();
    c.expect(same, "same seed produced different streams");
}

void check_rowwise_invariants(CheckContext& c) {
    Rng rng(2);
    Tensor x = random_tensor({8, 7}, rng, -3.0, 3.0);
    Tape tape;
    const Tensor& sm = tape.value(tape.softmax(tape.constant(x)));
    const Tensor& ln = tape.value(tape.layer_norm(tape.constant(x)));
    for (int64_t r = 0; r < 8; ++r) {
        double rowsum = 0.0, mu = 0.0;
        for (int64_t j = 0; j < 7; ++j) {
            rowsum += sm.at({r, j});
            mu += ln.at({r, j});
        }
        mu /= 7.0;
        double var = 0.0;
        for (int64_t j = 0; j < 7; ++j) var += (ln.at({r, j}) - mu) * (ln.at({r, j}) - mu);
        var /= 7.0;
        c.expect(std::fabs(rowsum - 1.0) < 1e-12, "softmax row sum");
        c.expect(std::fabs(mu) < 1e-10, "layer_norm row mean");
        c.expect(std::fabs(var - 1.0) < 1e-8, "layer_norm row variance");
    }
}

void check_parameterization_roundtrip(CheckContext& c) {
    NoiseSchedule sched;
    Rng rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        double t = rng.uniform(0.1, 0.9);
        Tensor x0({2}), eps({2});
        for (int64_t i = 0; i < 2; ++i) {
            x0[i] = rng.gaussian();
            eps[i] = rng.gaussian();
        }
        Tensor x_t = diffuse(x0, eps, t, sched);
        Tensor v = v_target(x0, eps, t, sched);
        Tensor x0b = convert_prediction(v, PredictionKind::kV, PredictionKind::kX0, x_t, t, sched);
        Tensor epsb = convert_prediction(x0b, PredictionKind::kX0, PredictionKind::kEps, x_t, t, sched);
        Tensor vb = convert_prediction(epsb, PredictionKind::kEps, PredictionKind::kV, x_t, t, sched);
        for (int64_t i = 0; i < 2; ++i) {
            worst = std::max({worst, std::fabs(x0b[i] - x0[i]), std::fabs(epsb[i] - eps[i]),
                              std::fabs(vb[i] - v[i])});
        }
    }
    c.expect(worst < 1e-10, "roundtrip worst error " + std::to_string(worst));
}

void check_otcfm_target(CheckContext& c) {
    Rng rng(4);
    Tensor x0 = random_tensor({3}, rng);
    Tensor eps = random_tensor({3}, rng);
    PathSample a = otcfm_path(x0, eps, 0.2);
    PathSample b = otcfm_path(x0, eps, 0.8);
    c.expect(a.target.vec() == b.target.vec(), "OT-CFM target depends on t");
}

void check_logit_normal(CheckContext& c) {
    Rng rng(5);
    const int n = 100000;
    std::vector<double> draws;
    draws.reserve(n);
    int mid = 0;
    for (int i = 0; i < n; ++i) {
        double t = sample_t(TimestepSamplerKind::kLogitNormal, rng);
        draws.push_back(t);
        if (t >= 0.25 && t <= 0.75) ++mid;
    }
    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    double median = draws[n / 2];
    double frac = static_cast<double>(mid) / n;
    c.expect(std::fabs(median - 0.5) < 0.01, "median " + std::to_string(median));
    c.expect(std::fabs(frac - 0.728) < 0.01, "mid-mass " + std::to_string(frac));
}

void check_minsnr(CheckContext& c) {
    NoiseSchedule sched;
    double prev = minsnr_weight(1e-5, 5.0, sched, PredictionKind::kV);
    for (int i = 1; i <= 1000; ++i) {
        double t = 1e-5 + (1.0 - 2e-5) * i / 1000.0;
        double w = minsnr_weight(t, 5.0, sched, PredictionKind::kV);
        c.expect(w > 0.0 && w <= 5.0 + 1e-12, "min-SNR weight out of range");
        c.expect(std::fabs(w - prev) < 0.05, "min-SNR weight discontinuity");
        prev = w;
    }
}

void check_dit_init(CheckContext& c) {
    DiTConfig cfg;
    cfg.depth = 2;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.n_classes = 4;
    DiTField model(cfg, 77);
    Rng rng(6);
    Tensor x = random_tensor({2, 4}, rng, -2.0, 2.0);
    Tensor out = model.eval_batch(x, {0.3, 0.9}, {1, kNullCond});
    bool all_zero = true;
    for (int64_t i = 0; i < out.size(); ++i) all_zero = all_zero && out[i] == 0.0;
    c.expect(all_zero, "fresh DiT output is not exactly zero");

    // AdaLN identity at init
    ParamSet ps;
    AdaLNParams ada = make_adaln(ps, "ada", 8);
    Tape tape;
    Value h = tape.constant(random_tensor({3, 8}, rng));
    Value cond = tape.constant(random_tensor({1, 8}, rng, -2.0, 2.0));
    BranchFn branch = [](Tape& t, Value v) { return t.tanh(v); };
    Value mod = adaln_modulate(tape, ps, h, cond, ada, branch);
    Value expect = tape.add(h, branch(tape, tape.layer_norm(h)));
    double worst = 0.0;
    for (int64_t i = 0; i < 24; ++i) {
        worst = std::max(worst, std::fabs(tape.value(mod)[i] - tape.value(expect)[i]));
    }
    c.expect(worst < 1e-12, "AdaLN modulates at init");

    // RoPE relative-position invariance
    Rng rr(7);
    for (int trial = 0; trial < 100; ++trial) {
        int64_t m = static_cast<int64_t>(rr.uniform_int(256));
        int64_t n = static_cast<int64_t>(rr.uniform_int(256));
        int64_t delta = static_cast<int64_t>(rr.uniform_int(256));
        Tensor qk = random_tensor({2, 8}, rr);
        auto dot_after = [&](int64_t pm, int64_t pn) {
            Tape t2;
            Value rows = t2.constant(qk);
            auto [rot, kr] = rope_apply(t2, rows, rows, {pm, pn}, 16384.0, 2);
            (void)kr;
            double d = 0.0;
            for (int64_t j = 0; j < 8; ++j) {
                d += t2.value(rot).at({0, j}) * t2.value(rot).at({1, j});
            }
            return d;
        };
        c.expect(std::fabs(dot_after(m, n) - dot_after(m + delta, n + delta)) < 1e-10,
                 "RoPE relative invariance");
        if (!c.ok) break;
    }
}

void check_model_gradients(CheckContext& c) {
    MlpConfig mc;
    mc.hidden = {8, 8};
    mc.t_embed_dim = 4;
    mc.cond_dim = 4;
    mc.n_classes = 2;
    MlpField mlp(mc, 11);
    Rng rng(8);
    Tensor x = random_tensor({2, 2}, rng);
    auto report = param_grad_check(mlp, x, {0.3, 0.6}, {0, kNullCond}, 1e-5, 1e-4);
    c.expect(report.passed, "mlp grad check max_err=" + std::to_string(report.max_err));

    DiTConfig dc;
    dc.depth = 1;
    dc.width = 8;
    dc.heads = 2;
    dc.cond_dim = 4;
    dc.n_classes = 2;
    DiTField dit(dc, 12);
    Rng noise(13);
    for (Param& p : dit.params()) {
        for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.05 * noise.gaussian();
    }
    Tensor xd = random_tensor({1, 4}, rng);
    auto dit_report = param_grad_check(dit, xd, {0.4}, {1}, 1e-5, 1e-4);
    c.expect(dit_report.passed, "dit grad check max_err=" + std::to_string(dit_report.max_err));
}

void check_solvers(CheckContext& c) {
    double exact = std::exp(-1.0);
    auto integrate = [&](SamplerConfig::Method m, int64_t steps) {
        OdeField f([](const Tensor& x, double) { return x; });
        SamplerConfig cfg;
        cfg.method = m;
        cfg.steps = steps;
        Tensor x1({1}, {1.0});
        Tensor x0 = ode_sample(f, x1, cfg);
        return std::make_pair(std::fabs(x0[0] - exact), f.nfe());
    };
    auto [e10, n10] = integrate(SamplerConfig::Method::kEuler, 10);
    auto [e80, n80] = integrate(SamplerConfig::Method::kEuler, 80);
    double euler_slope = std::log(e10 / e80) / std::log(8.0);
    c.expect(euler_slope > 0.8 && euler_slope < 1.2, "euler slope " + std::to_string(euler_slope));
    c.expect(n10 == 10 && n80 == 80, "euler NFE accounting");

    auto [h10, hn10] = integrate(SamplerConfig::Method::kHeun, 10);
    auto [h80, hn80] = integrate(SamplerConfig::Method::kHeun, 80);
    double heun_slope = std::log(h10 / h80) / std::log(8.0);
    c.expect(heun_slope > 1.8 && heun_slope < 2.2, "heun slope " + std::to_string(heun_slope));
    c.expect(hn10 == 19 && hn80 == 159, "heun NFE accounting");

    // guidance identities and arithmetic
    OdeField cond([](const Tensor& x, double) { return Tensor::full(x.shape(), 2.0); });
    OdeField uncond([](const Tensor& x, double) { return Tensor::full(x.shape(), 1.0); });
    GuidanceSpec off;
    OdeField g_off = guided_field(cond, uncond, off);
    Tensor probe({1}, {0.0});
    c.expect(g_off(probe, 0.5)[0] == 2.0, "w_cfg=1 identity");
    GuidanceSpec g3;
    g3.w_cfg = 3.0;
    OdeField gg = guided_field(cond, uncond, g3);
    c.expect(gg(probe, 0.5)[0] == 4.0, "CFG arithmetic");
    GuidanceSpec ag;
    ag.w_ag = 2.0;
    ag.bad_field = OdeField([](const Tensor& x, double) { return Tensor::full(x.shape(), 1.0); });
    OdeField ga = guided_field(cond, uncond, ag);
    c.expect(ga(probe, 0.5)[0] == 3.0, "autoguidance arithmetic");
}

void check_metric_identities(CheckContext& c) {
    GaussianStats a{Tensor({1}, {0.0}), Tensor({1, 1}, {1.0})};
    GaussianStats b{Tensor({1}, {1.0}), Tensor({1, 1}, {1.0})};
    c.expect(std::fabs(frechet_distance(a, b) - 1.0) < 1e-6, "FD(N(0,1), N(1,1)) != 1");
    c.expect(frechet_distance(a, a) <= 1e-8, "FD(identical) > 1e-8");

    Tensor onehots({4, 4});
    for (int64_t i = 0; i < 4; ++i) onehots.at({i, i}) = 1.0;
    c.expect(std::fabs(inception_score(onehots) - 4.0) < 1e-6, "IS of one-hots");
    Tensor p({2, 3}, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
    c.expect(paired_kl(p, p) == 0.0, "KL(identical)");

    Tensor t1({1, 2}, {1.0, 0.0});
    Tensor t2({1, 2}, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
    c.expect(std::fabs(embedding_score(t1, t2) - 1.0 / std::sqrt(2.0)) < 1e-12, "cosine score");
}

void check_vae_losses(CheckContext& c) {
    StftConfig cfg;
    cfg.resolutions = {{256, 64, 256}};
    Tensor s = gen_test_signal("sine", 1500, 8000.0, 21);
    c.expect(mrstft_loss(s, s, cfg) == 0.0, "MRSTFT(identical) != 0");
    Tensor half(s.shape());
    for (int64_t i = 0; i < s.size(); ++i) half[i] = 0.5 * s[i];
    MrStftBreakdown b = mrstft_loss_breakdown(s, half, cfg);
    c.expect(std::fabs(b.per_resolution[0].spectral_convergence - 0.5) < 1e-6,
             "spectral convergence of 0.5x");
    LatentPosterior post{Tensor({1}, {1.0}), Tensor({1}, {0.0})};
    c.expect(gaussian_kl_loss(post) == 0.5, "gaussian KL pin");
    DiscriminatorTaps r, f;
    r.scores = {0.5};
    f.scores = {-0.2};
    c.expect(std::fabs(hinge_adv_loss(r, f) - 1.3) < 1e-12, "hinge pin");
}

void check_caption_pipeline(CheckContext& c) {
    Rng rng(31);
    std::vector<AudioRecord> records;
    CandidateMap cands;
    for (int i = 0; i < 40; ++i) {
        AudioRecord rec;
        rec.id = "r" + std::to_string(100 + i);
        rec.duration = 10.0;
        rec.category = "music";
        Tensor e({4});
        e[0] = 1.0;
        rec.segment_embeddings.push_back(e);
        records.push_back(rec);
        double sim = rng.uniform(0.0, 1.0);
        Tensor v({4});
        v[0] = sim;
        v[1] = std::sqrt(std::max(0.0, 1.0 - sim * sim));
        cands[{rec.id, 0}] = {{"caption " + std::to_string(i), v}};
    }
    int64_t prev = 1000;
    for (double th : {0.3, 0.4, 0.45, 0.5}) {
        FilterConfig fc;
        fc.threshold = th;
        BuildResult out = build_dataset(records, cands, fc, toy_embedder);
        c.expect(out.summary.evaluated() == 40, "summary conservation");
        c.expect(out.summary.accepted <= prev, "threshold monotonicity");
        prev = out.summary.accepted;
    }
    FilterConfig fc;
    BuildResult r1 = build_dataset(records, cands, fc, toy_embedder);
    BuildResult r2 = build_dataset(records, cands, fc, toy_embedder);
    bool same = r1.accepted.size() == r2.accepted.size();
    for (size_t i = 0; same && i < r1.accepted.size(); ++i) {
        same = r1.accepted[i].record_id == r2.accepted[i].record_id &&
               r1.accepted[i].similarity == r2.accepted[i].similarity;
    }
    c.expect(same, "build_dataset repeatability");
}

void check_toy_datasets(CheckContext& c) {
    ToyDataset a = gen_toy_dataset("gauss_mixture", 2000, 5);
    ToyDataset b = gen_toy_dataset("gauss_mixture", 2000, 5);
    c.expect(a.points.vec() == b.points.vec(), "dataset determinism");
    double mx = 0.0, my = 0.0;
    for (int64_t i = 0; i < 2000; ++i) {
        mx += a.points.at({i, 0});
        my += a.points.at({i, 1});
    }
    c.expect(std::fabs(mx / 2000.0) < 0.15 && std::fabs(my / 2000.0) < 0.15, "mixture mean near 0");

    ToyDataset cb = gen_toy_dataset("cond_checkerboard", 400, 6);
    std::vector<int> counts(4, 0);
    bool consistent = true;
    for (int64_t i = 0; i < 400; ++i) {
        int label = cb.labels[static_cast<size_t>(i)];
        ++counts[static_cast<size_t>(label)];
        consistent = consistent &&
                     checkerboard_class_at(cb.points.at({i, 0}), cb.points.at({i, 1})) == label;
    }
    c.expect(consistent, "checkerboard labels match cell assignment");
    c.expect(counts[0] > 0 && counts[1] > 0 && counts[2] > 0 && counts[3] > 0,
             "checkerboard classes populated");
}

}  // namespace

int run_selftest(bool verbose, std::ostream& out) {
    struct Entry {
        const char* name;
        std::function<void(CheckContext&)> fn;
    };
    const std::vector<Entry> checks = {
        {"primitive_gradients", check_primitive_gradients},
        {"rng_determinism", check_rng_determinism},
        {"softmax_layernorm_rows", check_rowwise_invariants},
        {"parameterization_roundtrip", check_parameterization_roundtrip},
        {"otcfm_target_constant", check_otcfm_target},
        {"logit_normal_stats", check_logit_normal},
        {"minsnr_weight_bounds", check_minsnr},
        {"dit_init_invariants", check_dit_init},
        {"model_gradients", check_model_gradients},
        {"solver_order_and_guidance", check_solvers},
        {"metric_identities", check_metric_identities},
        {"vae_loss_identities", check_vae_losses},
        {"caption_pipeline", check_caption_pipeline},
        {"toy_datasets", check_toy_datasets},
    };
    int failures = 0;
    for (const Entry& entry : checks) {
        CheckContext ctx;
        std::string error;
        try {
            entry.fn(ctx);
        } catch (const std::exception& e) {
            ctx.ok = false;
            error = e.what();
        }
        if (ctx.ok) {
            if (verbose) out << "[ ok ] " << entry.name << "\n";
        } else {
            ++failures;
            out << "[FAIL] " << entry.name;
            std::string detail = ctx.detail.str();
            if (!detail.empty()) out << ": " << detail;
            if (!error.empty()) out << ": " << error;
            out << "\n";
        }
    }
    out << (failures == 0 ? "selftest: all checks passed" : "selftest: FAILURES") << " ("
        << checks.size() - static_cast<size_t>(failures) << "/" << checks.size() << ")\n";
    return failures;
}

}  // namespace flowlab
