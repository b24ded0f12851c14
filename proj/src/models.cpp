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

#include "models.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

namespace {

Tensor gaussian_init(Shape shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.gaussian();
    return t;
}

struct Lin {
    int w = -1, b = -1;
};

Lin make_linear(ParamSet& ps, const std::string& name, int64_t in, int64_t out, Rng& rng) {
    Lin l;
    l.w = ps.add(name + "/w", gaussian_init({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    l.b = ps.add(name + "/b", Tensor({out}));
    return l;
}

Lin make_zero_linear(ParamSet& ps, const std::string& name, int64_t in, int64_t out) {
    Lin l;
    l.w = ps.add(name + "/w", Tensor({in, out}));
    l.b = ps.add(name + "/b", Tensor({out}));
    return l;
}

Value linear_fwd(Tape& tape, ParamSet& ps, const Lin& lin, Value x) {
    return tape.add(tape.matmul(x, tape.param(ps[lin.w])), tape.param(ps[lin.b]));
}

}  // namespace

Tensor sinusoidal_embed(double t, int64_t dim) {
    if (dim <= 0 || dim % 2 != 0) {
        fail(ErrorCode::kInvalidArgument, "sinusoidal_embed: dim must be positive and even");
    }
    int64_t half = dim / 2;
    Tensor out({dim});
    for (int64_t i = 0; i < half; ++i) {
        double freq = half > 1 ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(half - 1))
                               : 1.0;
        out[2 * i] = std::sin(t * freq);
        out[2 * i + 1] = std::cos(t * freq);
    }
    return out;
}

int cfg_dropout_condition(int cond_id, Rng& rng, double p_uncond) {
    if (p_uncond < 0.0 || p_uncond > 1.0) {
        fail(ErrorCode::kInvalidArgument, "cfg_dropout_condition: p_uncond outside [0,1]");
    }
    if (p_uncond <= 0.0) return cond_id;
    return rng.uniform() < p_uncond ? kNullCond : cond_id;
}

Value attention_mix(Tape& tape, Value q, Value k, Value v, int64_t heads) {
    const Tensor& tq = tape.value(q);
    const Tensor& tk = tape.value(k);
    const Tensor& tv = tape.value(v);
    if (tq.rank() != 2 || tk.rank() != 2 || tv.rank() != 2) {
        fail(ErrorCode::kShapeMismatch, "attention: q/k/v must be rank 2");
    }
    int64_t width = tq.shape()[1];
    if (tk.shape()[1] != width || tv.shape()[1] != width || tk.shape()[0] != tv.shape()[0]) {
        fail(ErrorCode::kShapeMismatch, "attention: inconsistent q/k/v shapes");
    }
    if (heads < 1 || width % heads != 0) {
        fail(ErrorCode::kInvalidArgument, "attention: width must divide into heads");
    }
    int64_t dh = width / heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Value> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        Value qh = tape.slice(q, 1, h * dh, dh);
        Value kh = tape.slice(k, 1, h * dh, dh);
        Value vh = tape.slice(v, 1, h * dh, dh);
        Value scores = tape.scale(tape.matmul(qh, tape.transpose(kh, 0, 1)), inv_sqrt);
        Value weights = tape.softmax(scores);
        outs.push_back(tape.matmul(weights, vh));
    }
    return heads == 1 ? outs[0] : tape.concat(outs, 1);
}

RopeCache make_rope_cache(const std::vector<int64_t>& positions, double base, int64_t heads,
                          int64_t width) {
    if (base <= 0.0) fail(ErrorCode::kInvalidArgument, "rope: base must be positive");
    if (heads < 1 || width % heads != 0) fail(ErrorCode::kInvalidArgument, "rope: bad head split");
    int64_t dh = width / heads;
    if (dh % 2 != 0) fail(ErrorCode::kInvalidArgument, "rope: head dim must be even");
    int64_t n = static_cast<int64_t>(positions.size());
    RopeCache cache;
    cache.cos_table = Tensor({n, width});
    cache.sin_table = Tensor({n, width});
    for (int64_t p = 0; p < n; ++p) {
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t i = 0; i < dh / 2; ++i) {
                double theta = static_cast<double>(positions[static_cast<size_t>(p)]) *
                               std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
                int64_t col = h * dh + 2 * i;
                cache.cos_table.at({p, col}) = std::cos(theta);
                cache.cos_table.at({p, col + 1}) = std::cos(theta);
                cache.sin_table.at({p, col}) = std::sin(theta);
                cache.sin_table.at({p, col + 1}) = std::sin(theta);
            }
        }
    }
    return cache;
}

namespace {

// y = x * cos + rot90(x) * sin, with rot90 the per-pair map
// (x0, x1) -> (-x1, x0), expressed as a constant matrix product.
Value rope_rotate(Tape& tape, Value x, const RopeCache& cache) {
    int64_t width = tape.value(x).shape()[1];
    Tensor rot({width, width});
    for (int64_t i = 0; i < width; i += 2) {
        rot.at({i + 1, i}) = -1.0;
        rot.at({i, i + 1}) = 1.0;
    }
    Value swapped = tape.matmul(x, tape.constant(rot));
    return tape.add(tape.mul(x, tape.constant(cache.cos_table)),
                    tape.mul(swapped, tape.constant(cache.sin_table)));
}

}  // namespace

std::pair<Value, Value> rope_apply(Tape& tape, Value q, Value k,
                                   const std::vector<int64_t>& positions, double base,
                                   int64_t heads) {
    const Tensor& tq = tape.value(q);
    if (tq.rank() != 2 || tape.value(k).shape() != tq.shape()) {
        fail(ErrorCode::kShapeMismatch, "rope: q and k must be rank 2 with equal shapes");
    }
    if (static_cast<int64_t>(positions.size()) != tq.shape()[0]) {
        fail(ErrorCode::kShapeMismatch, "rope: positions must match the sequence length");
    }
    RopeCache cache = make_rope_cache(positions, base, heads, tq.shape()[1]);
    return {rope_rotate(tape, q, cache), rope_rotate(tape, k, cache)};
}

AdaLNParams make_adaln(ParamSet& params, const std::string& name, int64_t width) {
    AdaLNParams ada;
    ada.weight = params.add(name + "/w", Tensor({width, 3 * width}));
    Tensor bias({3 * width});
    for (int64_t i = 0; i < width; ++i) {
        bias[i] = 1.0;              // scale
        bias[2 * width + i] = 1.0;  // gate; shift stays 0
    }
    ada.bias = params.add(name + "/b", bias);
    return ada;
}

Value adaln_modulate(Tape& tape, ParamSet& params, Value h, Value cond,
                     const AdaLNParams& adaln, const BranchFn& branch) {
    const Tensor& th = tape.value(h);
    if (th.rank() != 2) fail(ErrorCode::kShapeMismatch, "adaln: h must be (seq, width)");
    int64_t width = th.shape()[1];
    Value mod = tape.add(tape.matmul(cond, tape.param(params[adaln.weight])),
                         tape.param(params[adaln.bias]));
    Value scale = tape.slice(mod, 1, 0, width);
    Value shift = tape.slice(mod, 1, width, width);
    Value gate = tape.slice(mod, 1, 2 * width, width);
    Value modded = tape.add(tape.mul(tape.layer_norm(h), scale), shift);
    return tape.add(h, tape.mul(gate, branch(tape, modded)));
}

Tensor FieldModel::eval_batch(const Tensor& x_t, const std::vector<double>& t,
                              const std::vector<int>& cond) {
    Tape tape;
    Value out = forward_batch(tape, x_t, t, cond, false, nullptr);
    return tape.value(out);
}

GradCheckReport param_grad_check(FieldModel& model, const Tensor& x, const std::vector<double>& t,
                                 const std::vector<int>& cond, double h, double tol) {
    Rng probe_rng(0xfeedbeefULL);
    Tensor probe(x.shape());
    for (int64_t i = 0; i < probe.size(); ++i) probe[i] = probe_rng.uniform(-1.0, 1.0);

    auto eval = [&]() {
        Tape tape;
        Value out = model.forward_batch(tape, x, t, cond, false, nullptr);
        return tape.value(tape.sum(tape.mul(out, tape.constant(probe)))).item();
    };

    model.params().zero_grad();
    {
        Tape tape;
        Value out = model.forward_batch(tape, x, t, cond, false, nullptr);
        tape.backward(tape.sum(tape.mul(out, tape.constant(probe))));
    }

    GradCheckReport report;
    size_t param_index = 0;
    for (Param& p : model.params()) {
        for (int64_t j = 0; j < p.value.size(); ++j) {
            double orig = p.value[j];
            p.value[j] = orig + h;
            double fp = eval();
            p.value[j] = orig - h;
            double fm = eval();
            p.value[j] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = p.grad[j];
            double err = std::fabs(analytic - numeric) /
                         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            report.max_err = std::max(report.max_err, err);
            ++report.coordinates;
            if (err > tol) {
                report.passed = false;
                if (report.failures.size() < 16) {
                    report.failures.push_back({param_index, j, analytic, numeric, err});
                }
            }
        }
        ++param_index;
    }
    return report;
}

namespace {

// One-hot rows over n_classes+1 columns; the last column is the null slot.
Tensor cond_onehot(const std::vector<int>& cond, int64_t n_classes) {
    int64_t rows = static_cast<int64_t>(cond.size());
    Tensor onehot({rows, n_classes + 1});
    for (int64_t b = 0; b < rows; ++b) {
        int id = cond[static_cast<size_t>(b)];
        if (id == kNullCond) {
            onehot.at({b, n_classes}) = 1.0;
        } else if (id >= 0 && id < n_classes) {
            onehot.at({b, id}) = 1.0;
        } else {
            fail(ErrorCode::kInvalidArgument,
                 "condition id " + std::to_string(id) + " outside [0," + std::to_string(n_classes) + ")");
        }
    }
    return onehot;
}

Tensor t_embed_rows(const std::vector<double>& t, int64_t dim) {
    Tensor rows({static_cast<int64_t>(t.size()), dim});
    for (size_t b = 0; b < t.size(); ++b) {
        Tensor e = sinusoidal_embed(t[b], dim);
        for (int64_t j = 0; j < dim; ++j) rows.at({static_cast<int64_t>(b), j}) = e[j];
    }
    return rows;
}

}  // namespace

MlpField::MlpField(const MlpConfig& config, uint64_t seed) : config_(config) {
    if (config_.in_dim < 1 || config_.t_embed_dim < 2 || config_.t_embed_dim % 2 != 0 ||
        config_.cond_dim < 1 || config_.n_classes < 0) {
        fail(ErrorCode::kInvalidArgument, "mlp: bad config");
    }
    Rng rng(seed);
    embed_ = params_.add("embed", gaussian_init({config_.n_classes + 1, config_.cond_dim}, rng, 0.5));
    int64_t prev = config_.in_dim + config_.t_embed_dim + config_.cond_dim;
    for (size_t i = 0; i < config_.hidden.size(); ++i) {
        Lin l = make_linear(params_, "layer" + std::to_string(i), prev, config_.hidden[i], rng);
        layer_w_.push_back(l.w);
        layer_b_.push_back(l.b);
        prev = config_.hidden[i];
    }
    Lin out = make_linear(params_, "out", prev, config_.in_dim, rng);
    layer_w_.push_back(out.w);
    layer_b_.push_back(out.b);
}

Value MlpField::forward_batch(Tape& tape, const Tensor& x_t, const std::vector<double>& t,
                              const std::vector<int>& cond, bool training, Rng* dropout_rng) {
    (void)training;
    (void)dropout_rng;
    if (x_t.rank() != 2 || x_t.shape()[1] != config_.in_dim) {
        fail(ErrorCode::kShapeMismatch, "mlp: x_t must be (batch, " + std::to_string(config_.in_dim) + ")");
    }
    int64_t batch = x_t.shape()[0];
    if (static_cast<int64_t>(t.size()) != batch || static_cast<int64_t>(cond.size()) != batch) {
        fail(ErrorCode::kShapeMismatch, "mlp: t and cond must have one entry per row");
    }
    Value onehot = tape.constant(cond_onehot(cond, config_.n_classes));
    Value cond_emb = tape.matmul(onehot, tape.param(params_[embed_]));
    Value h = tape.concat(
        {tape.constant(x_t), tape.constant(t_embed_rows(t, config_.t_embed_dim)), cond_emb}, 1);
    for (size_t i = 0; i < layer_w_.size(); ++i) {
        Lin l{layer_w_[i], layer_b_[i]};
        h = linear_fwd(tape, params_, l, h);
        if (i + 1 < layer_w_.size()) h = tape.gelu_tanh(h);
    }
    return h;
}

void DiTConfig::validate() const {
    if (depth < 1 || width < 2 || heads < 1 || cond_dim < 1 || in_channels < 1 || n_classes < 0) {
        fail(ErrorCode::kInvalidArgument, "dit: bad config");
    }
    if (width % heads != 0) fail(ErrorCode::kInvalidArgument, "dit: width must be divisible by heads");
    if ((width / heads) % 2 != 0) fail(ErrorCode::kInvalidArgument, "dit: head dim must be even");
    if (rope_base <= 0.0) fail(ErrorCode::kInvalidArgument, "dit: rope_base must be positive");
    if (p_dropout < 0.0 || p_dropout >= 1.0) fail(ErrorCode::kInvalidArgument, "dit: p_dropout outside [0,1)");
}

DiTField::DiTField(const DiTConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    int64_t w = config_.width;
    embed_ = params_.add("embed", gaussian_init({config_.n_classes + 1, config_.cond_dim}, rng, 0.5));
    {
        Lin l = make_linear(params_, "in_proj", config_.in_channels, w, rng);
        in_proj_ = {l.w, l.b};
    }
    {
        Lin l1 = make_linear(params_, "t_mlp1", w, w, rng);
        Lin l2 = make_linear(params_, "t_mlp2", w, w, rng);
        t_mlp1_ = {l1.w, l1.b};
        t_mlp2_ = {l2.w, l2.b};
    }
    {
        Lin l = make_linear(params_, "text_proj", config_.cond_dim, w, rng);
        text_proj_ = {l.w, l.b};
    }
    for (int64_t d = 0; d < config_.depth; ++d) {
        std::string prefix = "block" + std::to_string(d);
        Block blk;
        blk.ada_self = make_adaln(params_, prefix + "/ada_self", w);
        blk.ada_cross = make_adaln(params_, prefix + "/ada_cross", w);
        blk.ada_ff = make_adaln(params_, prefix + "/ada_ff", w);
        Lin qkv = make_linear(params_, prefix + "/qkv", w, 3 * w, rng);
        blk.qkv = {qkv.w, qkv.b};
        Lin so = make_linear(params_, prefix + "/self_out", w, w, rng);
        blk.self_out = {so.w, so.b};
        Lin cq = make_linear(params_, prefix + "/cross_q", w, w, rng);
        Lin ck = make_linear(params_, prefix + "/cross_k", w, w, rng);
        Lin cv = make_linear(params_, prefix + "/cross_v", w, w, rng);
        Lin co = make_linear(params_, prefix + "/cross_out", w, w, rng);
        blk.cross_q = {cq.w, cq.b};
        blk.cross_k = {ck.w, ck.b};
        blk.cross_v = {cv.w, cv.b};
        blk.cross_out = {co.w, co.b};
        Lin f1 = make_linear(params_, prefix + "/ff1", w, 4 * w, rng);
        Lin f2 = make_linear(params_, prefix + "/ff2", 4 * w, w, rng);
        blk.ff1 = {f1.w, f1.b};
        blk.ff2 = {f2.w, f2.b};
        blocks_.push_back(blk);
    }
    // Final projection: AdaLN with scale/shift only, then a zero linear so
    // the fresh model outputs exactly zero.
    final_ada_.weight = params_.add("final_ada/w", Tensor({w, 2 * w}));
    Tensor fb({2 * w});
    for (int64_t i = 0; i < w; ++i) fb[i] = 1.0;
    final_ada_.bias = params_.add("final_ada/b", fb);
    Lin fp = make_zero_linear(params_, "final_proj", w, config_.in_channels);
    final_proj_ = {fp.w, fp.b};
}

Value DiTField::block_forward(Tape& tape, int block_index, Value h, Value cond_vec,
                              Value text_tokens, bool training, Rng* dropout_rng) {
    if (block_index < 0 || static_cast<size_t>(block_index) >= blocks_.size()) {
        fail(ErrorCode::kInvalidArgument, "dit: block index out of range");
    }
    const Block& block = blocks_[static_cast<size_t>(block_index)];
    int64_t seq = tape.value(h).shape()[0];
    int64_t w = config_.width;
    auto maybe_dropout = [&](Tape& t, Value x) {
        if (training && config_.p_dropout > 0.0) {
            if (dropout_rng == nullptr) {
                fail(ErrorCode::kInvalidArgument, "dit: training mode requires a dropout rng");
            }
            return t.dropout(x, config_.p_dropout, *dropout_rng);
        }
        return x;
    };

    std::vector<int64_t> positions(static_cast<size_t>(seq));
    for (int64_t p = 0; p < seq; ++p) positions[static_cast<size_t>(p)] = p;

    h = adaln_modulate(tape, params_, h, cond_vec, block.ada_self, [&](Tape& t, Value x) {
        Lin qkv{block.qkv.w, block.qkv.b};
        Value proj = linear_fwd(t, params_, qkv, x);
        Value q = t.slice(proj, 1, 0, w);
        Value k = t.slice(proj, 1, w, w);
        Value v = t.slice(proj, 1, 2 * w, w);
        auto [qr, kr] = rope_apply(t, q, k, positions, config_.rope_base, config_.heads);
        Value mixed = attention_mix(t, qr, kr, v, config_.heads);
        Lin so{block.self_out.w, block.self_out.b};
        return maybe_dropout(t, linear_fwd(t, params_, so, mixed));
    });

    h = adaln_modulate(tape, params_, h, cond_vec, block.ada_cross, [&](Tape& t, Value x) {
        Lin cq{block.cross_q.w, block.cross_q.b};
        Lin ck{block.cross_k.w, block.cross_k.b};
        Lin cv{block.cross_v.w, block.cross_v.b};
        Value q = linear_fwd(t, params_, cq, x);
        Value k = linear_fwd(t, params_, ck, text_tokens);
        Value v = linear_fwd(t, params_, cv, text_tokens);
        Value mixed = attention_mix(t, q, k, v, config_.heads);
        Lin co{block.cross_out.w, block.cross_out.b};
        return maybe_dropout(t, linear_fwd(t, params_, co, mixed));
    });

    h = adaln_modulate(tape, params_, h, cond_vec, block.ada_ff, [&](Tape& t, Value x) {
        Lin f1{block.ff1.w, block.ff1.b};
        Lin f2{block.ff2.w, block.ff2.b};
        Value inner = t.gelu_tanh(linear_fwd(t, params_, f1, x));
        return maybe_dropout(t, linear_fwd(t, params_, f2, inner));
    });

    return h;
}

Value DiTField::forward_seq(Tape& tape, const Tensor& latent_seq, double t, int cond_id,
                            bool training, Rng* dropout_rng) {
    if (latent_seq.rank() != 2 || latent_seq.shape()[1] != config_.in_channels) {
        fail(ErrorCode::kShapeMismatch,
             "dit: latent_seq must be (seq, " + std::to_string(config_.in_channels) + ")");
    }
    int64_t seq = latent_seq.shape()[0];
    int64_t w = config_.width;

    Lin in{in_proj_.w, in_proj_.b};
    Value h = linear_fwd(tape, params_, in, tape.constant(latent_seq));

    Tensor te = sinusoidal_embed(t, w);
    Value t_cond = tape.constant(Tensor({1, w}, te.vec()));
    Lin tm1{t_mlp1_.w, t_mlp1_.b};
    Lin tm2{t_mlp2_.w, t_mlp2_.b};
    t_cond = linear_fwd(tape, params_, tm2, tape.gelu_tanh(linear_fwd(tape, params_, tm1, t_cond)));

    Value onehot = tape.constant(cond_onehot({cond_id}, config_.n_classes));
    Value text_emb = tape.matmul(onehot, tape.param(params_[embed_]));  // (1, cond_dim)
    Lin tp{text_proj_.w, text_proj_.b};
    Value text_tokens = linear_fwd(tape, params_, tp, text_emb);  // (1, w)

    // Pool the text sequence into the AdaLN conditioning vector.
    int64_t text_len = tape.value(text_tokens).shape()[0];
    Tensor pool({1, text_len});
    for (int64_t i = 0; i < text_len; ++i) pool.at({0, i}) = 1.0 / static_cast<double>(text_len);
    Value cond_vec = tape.add(t_cond, tape.matmul(tape.constant(pool), text_tokens));

    for (size_t i = 0; i < blocks_.size(); ++i) {
        h = block_forward(tape, static_cast<int>(i), h, cond_vec, text_tokens, training, dropout_rng);
    }

    // Final AdaLN uses scale/shift only.
    Value mod = tape.add(tape.matmul(cond_vec, tape.param(params_[final_ada_.weight])),
                         tape.param(params_[final_ada_.bias]));
    Value scale = tape.slice(mod, 1, 0, w);
    Value shift = tape.slice(mod, 1, w, w);
    Value y = tape.add(tape.mul(tape.layer_norm(h), scale), shift);
    Lin fp{final_proj_.w, final_proj_.b};
    return linear_fwd(tape, params_, fp, y);
}

Value DiTField::forward_batch(Tape& tape, const Tensor& x_t, const std::vector<double>& t,
                              const std::vector<int>& cond, bool training, Rng* dropout_rng) {
    if (x_t.rank() != 2) fail(ErrorCode::kShapeMismatch, "dit: x_t must be (batch, dim)");
    int64_t batch = x_t.shape()[0];
    int64_t dim = x_t.shape()[1];
    if (dim % config_.in_channels != 0) {
        fail(ErrorCode::kShapeMismatch, "dit: row dim must be a multiple of in_channels");
    }
    if (static_cast<int64_t>(t.size()) != batch || static_cast<int64_t>(cond.size()) != batch) {
        fail(ErrorCode::kShapeMismatch, "dit: t and cond must have one entry per row");
    }
    int64_t seq = dim / config_.in_channels;
    std::vector<Value> rows;
    rows.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        Tensor latent({seq, config_.in_channels});
        for (int64_t j = 0; j < dim; ++j) latent[j] = x_t.at({b, j});
        Value out = forward_seq(tape, latent, t[static_cast<size_t>(b)],
                                cond[static_cast<size_t>(b)], training, dropout_rng);
        rows.push_back(tape.reshape(out, {1, dim}));
    }
    return batch == 1 ? rows[0] : tape.concat(rows, 0);
}

}  // namespace flowlab
