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

#ifndef FLOWLAB_MODELS_HPP_
#define FLOWLAB_MODELS_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "optim.hpp"
#include "tensor.hpp"

namespace flowlab {

class Rng;

// Interleaved sin/cos of t at geometric frequencies spanning [1, 1e4].
// dim must be even.
Tensor sinusoidal_embed(double t, int64_t dim);

// Condition ids: 0..n_classes-1 select a learned class embedding, -1 selects
// the learned null embedding used for classifier-free guidance.
constexpr int kNullCond = -1;

// Replaces cond with the null embedding with probability p_uncond.
int cfg_dropout_condition(int cond_id, Rng& rng, double p_uncond);

// Per-head scaled dot-product mixing: softmax(q k^T / sqrt(d_head)) v,
// heads concatenated. q is (S, W); k, v are (L, W). The output projection
// belongs to the caller.
Value attention_mix(Tape& tape, Value q, Value k, Value v, int64_t heads);

// Rotation tables theta_{p,i} = p * base^(-2i/d_head) for pair index i.
struct RopeCache {
    Tensor cos_table;  // (positions, width)
    Tensor sin_table;
};

RopeCache make_rope_cache(const std::vector<int64_t>& positions, double base, int64_t heads,
                          int64_t width);

// Rotates q and k pairwise per head; positions index the sequence axis.
std::pair<Value, Value> rope_apply(Tape& tape, Value q, Value k,
                                   const std::vector<int64_t>& positions, double base,
                                   int64_t heads);

// Conditioning map cond -> (scale, shift, gate); at init it is the identity
// modulation (scale=1, shift=0, gate=1) regardless of cond.
struct AdaLNParams {
    int weight = -1;  // (cond_width, 3*width), zero-initialized
    int bias = -1;    // (3*width,), initialized to [1 | 0 | 1]
};

AdaLNParams make_adaln(ParamSet& params, const std::string& name, int64_t width);

using BranchFn = std::function<Value(Tape&, Value)>;

// out = h + gate(c) * branch(layer_norm(h) * scale(c) + shift(c));
// the gate is unbounded (no squashing). h is (S, W), cond is (1, W).
Value adaln_modulate(Tape& tape, ParamSet& params, Value h, Value cond,
                     const AdaLNParams& adaln, const BranchFn& branch);

// Conditional vector field over row batches. cond holds one id per row.
class FieldModel {
 public:
    virtual ~FieldModel() = default;

    virtual Value forward_batch(Tape& tape, const Tensor& x_t, const std::vector<double>& t,
                                const std::vector<int>& cond, bool training, Rng* dropout_rng) = 0;

    virtual ParamSet& params() = 0;
    virtual const ParamSet& params() const = 0;

    // Inference convenience: evaluates on a throwaway tape.
    Tensor eval_batch(const Tensor& x_t, const std::vector<double>& t, const std::vector<int>& cond);
};

// Finite-difference check of d(sum(forward * probe))/d(params) for a field
// model, run in eval mode. The probe is a fixed pseudo-random tensor so every
// output coordinate carries gradient.
GradCheckReport param_grad_check(FieldModel& model, const Tensor& x, const std::vector<double>& t,
                                 const std::vector<int>& cond, double h = 1e-5, double tol = 1e-4);

struct MlpConfig {
    int64_t in_dim = 2;
    std::vector<int64_t> hidden = {64, 64};
    int64_t t_embed_dim = 16;
    int64_t cond_dim = 8;
    int64_t n_classes = 0;  // 0 = unconditional (null embedding only)
};

class MlpField : public FieldModel {
 public:
    MlpField(const MlpConfig& config, uint64_t seed);

    Value forward_batch(Tape& tape, const Tensor& x_t, const std::vector<double>& t,
                        const std::vector<int>& cond, bool training, Rng* dropout_rng) override;

    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    const MlpConfig& config() const { return config_; }

 private:
    MlpConfig config_;
    ParamSet params_;
    std::vector<int> layer_w_, layer_b_;
    int embed_ = -1;  // (n_classes+1, cond_dim); last row is the null embedding
};

struct DiTConfig {
    int64_t depth = 2;
    int64_t width = 32;
    int64_t heads = 2;
    double rope_base = 16384.0;
    double p_dropout = 0.1;
    int64_t cond_dim = 8;
    int64_t in_channels = 1;
    int64_t n_classes = 0;

    void validate() const;
};

// Toy-scale DiT stack: input projection, `depth` blocks of AdaLN-modulated
// self-attention (RoPE), cross-attention over the text sequence, and a
// gelu-tanh feed-forward, then an AdaLN (scale/shift) final projection that
// is zero-initialized so a fresh model outputs exactly zero.
class DiTField : public FieldModel {
 public:
    DiTField(const DiTConfig& config, uint64_t seed);

    // latent_seq is (seq, in_channels).
    Value forward_seq(Tape& tape, const Tensor& latent_seq, double t, int cond_id, bool training,
                      Rng* dropout_rng);

    // One block: AdaLN-modulated self-attention (RoPE), cross-attention over
    // text_tokens, then the feed-forward branch. h is (seq, width), cond_vec
    // and text_tokens are (1, width) / (text_len, width).
    Value block_forward(Tape& tape, int block_index, Value h, Value cond_vec, Value text_tokens,
                        bool training, Rng* dropout_rng);

    Value forward_batch(Tape& tape, const Tensor& x_t, const std::vector<double>& t,
                        const std::vector<int>& cond, bool training, Rng* dropout_rng) override;

    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    const DiTConfig& config() const { return config_; }

 private:
    struct Linear {
        int w = -1, b = -1;
    };
    struct Block {
        AdaLNParams ada_self, ada_cross, ada_ff;
        Linear qkv, self_out;
        Linear cross_q, cross_k, cross_v, cross_out;
        Linear ff1, ff2;
    };


    DiTConfig config_;
    ParamSet params_;
    Linear in_proj_;
    Linear t_mlp1_, t_mlp2_;
    Linear text_proj_;
    int embed_ = -1;
    std::vector<Block> blocks_;
    AdaLNParams final_ada_;  // scale/shift only (gate unused in the final layer)
    Linear final_proj_;      // zero-initialized
};

}  // namespace flowlab

#endif  // FLOWLAB_MODELS_HPP_
