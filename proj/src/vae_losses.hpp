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

#ifndef FLOWLAB_VAE_LOSSES_HPP_
#define FLOWLAB_VAE_LOSSES_HPP_

#include <string>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace flowlab {

struct StftResolution {
    int64_t fft_size = 1024;
    int64_t hop = 256;
    int64_t window_length = 1024;
};

// Hann-windowed, reflection-padded magnitude STFT resolutions. Defaults are
// three octave-spaced resolutions.
struct StftConfig {
    std::vector<StftResolution> resolutions = {
        {512, 128, 512}, {1024, 256, 1024}, {2048, 512, 2048}};

    void validate() const;
};

// Magnitude floor used inside the loss so log terms stay defined.
constexpr double kMagFloor = 1e-7;

// Exact magnitude spectrogram (frames x bins, bins = fft/2+1); no floor.
Tensor stft_mag(const Tensor& signal, const StftResolution& res);

// Tape-based magnitude spectrogram with the floor folded into the sqrt so
// gradients stay finite; used by the loss terms below.
Value stft_mag_value(Tape& tape, Value signal, const StftResolution& res);

struct MrStftTerms {
    double spectral_convergence = 0.0;
    double log_magnitude = 0.0;
};

struct MrStftBreakdown {
    std::vector<MrStftTerms> per_resolution;
    double total = 0.0;
};

// sum_i ( ||S_i(x)-S_i(xhat)||_F / ||S_i(x)||_F + (1/T_i) ||log(S_i(x)/S_i(xhat))||_1 ).
// An (exactly) silent reference is a degenerate-reference error.
Value mrstft_loss_value(Tape& tape, Value x, Value xhat, const StftConfig& cfg,
                        MrStftBreakdown* breakdown = nullptr);

double mrstft_loss(const Tensor& x, const Tensor& xhat, const StftConfig& cfg);
MrStftBreakdown mrstft_loss_breakdown(const Tensor& x, const Tensor& xhat, const StftConfig& cfg);

struct StereoSignal {
    Tensor left;
    Tensor right;
    double sample_rate = 44100.0;
};

// L_MRSTFT(x_sum, xhat_sum) + L_MRSTFT(x_diff, xhat_diff) with
// x_sum = left + right and x_diff = left - right.
double stereo_mrstft_loss(const StereoSignal& x, const StereoSignal& xhat, const StftConfig& cfg);

// Final scores and per-layer features of K discriminators.
struct DiscriminatorTaps {
    std::vector<double> scores;                 // D_k
    std::vector<std::vector<Tensor>> features;  // [k][l]
};

// sum_k max(0, 1 - D_k(x)) + max(0, 1 + D_k(xhat))
double hinge_adv_loss(const DiscriminatorTaps& real, const DiscriminatorTaps& fake);

// (1/(K L)) sum_{k,l} ||D_k^l(x) - D_k^l(xhat)||_1 / mean(|D_k^l(x)|),
// denominator floored at 1e-12.
double feature_matching_loss(const DiscriminatorTaps& real, const DiscriminatorTaps& fake);

struct LatentPosterior {
    Tensor mean;
    Tensor log_var;  // clamped to [-30, 20]
};

// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2) against the standard normal.
double gaussian_kl_loss(const LatentPosterior& posterior);

// Deterministic synthetic test signals: sine, chirp, or noise.
Tensor gen_test_signal(const std::string& kind, int64_t samples, double sample_rate, uint64_t seed);

}  // namespace flowlab

#endif  // FLOWLAB_VAE_LOSSES_HPP_
