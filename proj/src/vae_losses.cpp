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

#include "vae_losses.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace flowlab {

namespace {

void validate_resolution(const StftResolution& res) {
    if (res.fft_size < 2 || res.hop < 1 || res.window_length < 1) {
        fail(ErrorCode::kInvalidArgument, "stft: sizes must be positive");
    }
    if (!(res.hop <= res.window_length && res.window_length <= res.fft_size)) {
        fail(ErrorCode::kInvalidArgument, "stft: need hop <= window_length <= fft_size");
    }
}

// Periodic Hann of window_length, centered in an fft_size buffer.
Tensor padded_hann(const StftResolution& res) {
    Tensor w({res.fft_size});
    int64_t offset = (res.fft_size - res.window_length) / 2;
    for (int64_t n = 0; n < res.window_length; ++n) {
        w[offset + n] =
            0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) /
                                  static_cast<double>(res.window_length)));
    }
    return w;
}

// Reflection indices for center padding by fft/2 on each side.
std::vector<int64_t> reflect_pad_indices(int64_t length, int64_t pad) {
    if (length < 2) fail(ErrorCode::kInvalidArgument, "stft: signal too short to reflect-pad");
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(length + 2 * pad));
    auto mirror = [&](int64_t i) {
        // reflect without repeating the edge sample
        int64_t period = 2 * (length - 1);
        i = ((i % period) + period) % period;
        return i < length ? i : period - i;
    };
    for (int64_t i = -pad; i < length + pad; ++i) idx.push_back(mirror(i));
    return idx;
}

struct DftBasis {
    Tensor cos_basis;  // (fft, bins)
    Tensor sin_basis;
};

DftBasis dft_basis(int64_t fft) {
    int64_t bins = fft / 2 + 1;
    DftBasis b;
    b.cos_basis = Tensor({fft, bins});
    b.sin_basis = Tensor({fft, bins});
    for (int64_t n = 0; n < fft; ++n) {
        for (int64_t m = 0; m < bins; ++m) {
            double phi = 2.0 * M_PI * static_cast<double>(n) * static_cast<double>(m) /
                         static_cast<double>(fft);
            b.cos_basis.at({n, m}) = std::cos(phi);
            b.sin_basis.at({n, m}) = -std::sin(phi);
        }
    }
    return b;
}

int64_t frame_count(int64_t padded, int64_t fft, int64_t hop) {
    return 1 + (padded - fft) / hop;
}

}  // namespace

void StftConfig::validate() const {
    if (resolutions.empty()) fail(ErrorCode::kInvalidArgument, "stft config needs >= 1 resolution");
    for (const StftResolution& res : resolutions) validate_resolution(res);
}

Tensor stft_mag(const Tensor& signal, const StftResolution& res) {
    validate_resolution(res);
    if (signal.rank() != 1) fail(ErrorCode::kShapeMismatch, "stft: signal must be rank 1");
    int64_t length = signal.size();
    if (length < res.window_length) {
        fail(ErrorCode::kInvalidArgument, "stft: signal shorter than the window");
    }
    int64_t pad = res.fft_size / 2;
    auto idx = reflect_pad_indices(length, pad);
    Tensor window = padded_hann(res);
    DftBasis basis = dft_basis(res.fft_size);
    int64_t frames = frame_count(static_cast<int64_t>(idx.size()), res.fft_size, res.hop);
    int64_t bins = res.fft_size / 2 + 1;
    Tensor mag({frames, bins});
    for (int64_t f = 0; f < frames; ++f) {
        for (int64_t m = 0; m < bins; ++m) {
            double re = 0.0, im = 0.0;
            for (int64_t n = 0; n < res.fft_size; ++n) {
                double s = signal[idx[static_cast<size_t>(f * res.hop + n)]] * window[n];
                re += s * basis.cos_basis.at({n, m});
                im += s * basis.sin_basis.at({n, m});
            }
            mag.at({f, m}) = std::sqrt(re * re + im * im);
        }
    }
    return mag;
}

Value stft_mag_value(Tape& tape, Value signal, const StftResolution& res) {
    validate_resolution(res);
    const Tensor& sig = tape.value(signal);
    if (sig.rank() != 1) fail(ErrorCode::kShapeMismatch, "stft: signal must be rank 1");
    if (sig.size() < res.window_length) {
        fail(ErrorCode::kInvalidArgument, "stft: signal shorter than the window");
    }
    int64_t pad = res.fft_size / 2;
    auto idx = reflect_pad_indices(sig.size(), pad);
    Value padded = tape.gather1d(signal, idx);
    Tensor window = padded_hann(res);
    DftBasis basis = dft_basis(res.fft_size);
    Value cosb = tape.constant(basis.cos_basis);
    Value sinb = tape.constant(basis.sin_basis);
    Value win = tape.constant(Tensor({1, res.fft_size}, window.vec()));
    int64_t frames = frame_count(static_cast<int64_t>(idx.size()), res.fft_size, res.hop);

    std::vector<Value> rows_re, rows_im;
    rows_re.reserve(static_cast<size_t>(frames));
    rows_im.reserve(static_cast<size_t>(frames));
    for (int64_t f = 0; f < frames; ++f) {
        Value frame = tape.reshape(tape.slice(padded, 0, f * res.hop, res.fft_size), {1, res.fft_size});
        Value windowed = tape.mul(frame, win);
        rows_re.push_back(tape.matmul(windowed, cosb));
        rows_im.push_back(tape.matmul(windowed, sinb));
    }
    Value re = frames == 1 ? rows_re[0] : tape.concat(rows_re, 0);
    Value im = frames == 1 ? rows_im[0] : tape.concat(rows_im, 0);
    Value energy = tape.add(tape.mul(re, re), tape.mul(im, im));
    // Fold the magnitude floor into the sqrt so the gradient stays finite.
    return tape.sqrt(tape.add_scalar(energy, kMagFloor * kMagFloor));
}

namespace {

void check_not_silent(const Tensor& x, const char* label) {
    for (int64_t i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) return;
    }
    fail(ErrorCode::kDomain, std::string("mrstft: ") + label + " reference signal is silent");
}

}  // namespace

Value mrstft_loss_value(Tape& tape, Value x, Value xhat, const StftConfig& cfg,
                        MrStftBreakdown* breakdown) {
    cfg.validate();
    const Tensor& tx = tape.value(x);
    const Tensor& th = tape.value(xhat);
    if (tx.shape() != th.shape()) {
        fail(ErrorCode::kShapeMismatch, "mrstft: signal lengths differ");
    }
    check_not_silent(tx, "mono");
    Value total;
    bool first = true;
    if (breakdown) breakdown->per_resolution.clear();
    for (const StftResolution& res : cfg.resolutions) {
        Value sx = stft_mag_value(tape, x, res);
        Value sh = stft_mag_value(tape, xhat, res);
        int64_t frames = tape.value(sx).shape()[0];

        Value diff = tape.sub(sx, sh);
        Value num = tape.sqrt(tape.sum(tape.mul(diff, diff)));
        Value den = tape.sqrt(tape.sum(tape.mul(sx, sx)));
        Value sc = tape.div(num, den);

        Value logratio = tape.sub(tape.log(sx), tape.log(sh));
        Value logmag = tape.scale(tape.sum(tape.abs(logratio)), 1.0 / static_cast<double>(frames));

        if (breakdown) {
            breakdown->per_resolution.push_back(
                {tape.value(sc).item(), tape.value(logmag).item()});
        }
        Value term = tape.add(sc, logmag);
        total = first ? term : tape.add(total, term);
        first = false;
    }
    if (breakdown) breakdown->total = tape.value(total).item();
    return total;
}

double mrstft_loss(const Tensor& x, const Tensor& xhat, const StftConfig& cfg) {
    Tape tape;
    Value loss = mrstft_loss_value(tape, tape.constant(x), tape.constant(xhat), cfg);
    return tape.value(loss).item();
}

MrStftBreakdown mrstft_loss_breakdown(const Tensor& x, const Tensor& xhat, const StftConfig& cfg) {
    Tape tape;
    MrStftBreakdown breakdown;
    mrstft_loss_value(tape, tape.constant(x), tape.constant(xhat), cfg, &breakdown);
    return breakdown;
}

namespace {

Tensor combine(const Tensor& a, const Tensor& b, double sign) {
    if (a.shape() != b.shape()) fail(ErrorCode::kShapeMismatch, "stereo: channel lengths differ");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + sign * b[i];
    return out;
}

}  // namespace

double stereo_mrstft_loss(const StereoSignal& x, const StereoSignal& xhat, const StftConfig& cfg) {
    Tensor x_sum = combine(x.left, x.right, 1.0);
    Tensor x_diff = combine(x.left, x.right, -1.0);
    Tensor h_sum = combine(xhat.left, xhat.right, 1.0);
    Tensor h_diff = combine(xhat.left, xhat.right, -1.0);
    check_not_silent(x_sum, "sum");
    check_not_silent(x_diff, "diff");
    return mrstft_loss(x_sum, h_sum, cfg) + mrstft_loss(x_diff, h_diff, cfg);
}

double hinge_adv_loss(const DiscriminatorTaps& real, const DiscriminatorTaps& fake) {
    if (real.scores.size() != fake.scores.size()) {
        fail(ErrorCode::kShapeMismatch, "hinge: discriminator counts differ");
    }
    double loss = 0.0;
    for (size_t k = 0; k < real.scores.size(); ++k) {
        loss += std::max(0.0, 1.0 - real.scores[k]) + std::max(0.0, 1.0 + fake.scores[k]);
    }
    return loss;
}

double feature_matching_loss(const DiscriminatorTaps& real, const DiscriminatorTaps& fake) {
    if (real.features.size() != fake.features.size() || real.features.empty()) {
        fail(ErrorCode::kShapeMismatch, "feature_matching: discriminator counts differ or empty");
    }
    size_t total_layers = 0;
    double loss = 0.0;
    for (size_t k = 0; k < real.features.size(); ++k) {
        const auto& rl = real.features[k];
        const auto& fl = fake.features[k];
        if (rl.size() != fl.size()) {
            fail(ErrorCode::kShapeMismatch, "feature_matching: layer counts differ");
        }
        for (size_t l = 0; l < rl.size(); ++l) {
            if (rl[l].shape() != fl[l].shape()) {
                fail(ErrorCode::kShapeMismatch, "feature_matching: tap shapes differ at layer " +
                                                    std::to_string(l));
            }
            double num = 0.0, mean_abs = 0.0;
            for (int64_t i = 0; i < rl[l].size(); ++i) {
                num += std::fabs(rl[l][i] - fl[l][i]);
                mean_abs += std::fabs(rl[l][i]);
            }
            mean_abs /= static_cast<double>(rl[l].size());
            loss += num / std::max(mean_abs, 1e-12);
            ++total_layers;
        }
    }
    return loss / static_cast<double>(total_layers);
}

double gaussian_kl_loss(const LatentPosterior& posterior) {
    if (posterior.mean.shape() != posterior.log_var.shape()) {
        fail(ErrorCode::kShapeMismatch, "gaussian_kl: mean and log_var shapes differ");
    }
    double loss = 0.0;
    for (int64_t i = 0; i < posterior.mean.size(); ++i) {
        double mu = posterior.mean[i];
        double lv = std::clamp(posterior.log_var[i], -30.0, 20.0);
        loss += mu * mu + std::exp(lv) - 1.0 - lv;
    }
    return 0.5 * loss;
}

Tensor gen_test_signal(const std::string& kind, int64_t samples, double sample_rate, uint64_t seed) {
    if (samples < 1) fail(ErrorCode::kInvalidArgument, "gen_test_signal: samples must be positive");
    if (sample_rate <= 0.0) fail(ErrorCode::kInvalidArgument, "gen_test_signal: bad sample rate");
    Tensor out({samples});
    Rng rng(seed);
    if (kind == "sine") {
        double freq = sample_rate / 8.0;
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (int64_t n = 0; n < samples; ++n) {
            out[n] = std::sin(2.0 * M_PI * freq * static_cast<double>(n) / sample_rate + phase);
        }
    } else if (kind == "chirp") {
        double f0 = sample_rate / 64.0, f1 = sample_rate / 4.0;
        for (int64_t n = 0; n < samples; ++n) {
            double u = static_cast<double>(n) / static_cast<double>(samples);
            double freq = f0 + (f1 - f0) * u * 0.5;
            out[n] = std::sin(2.0 * M_PI * freq * static_cast<double>(n) / sample_rate);
        }
    } else if (kind == "noise") {
        for (int64_t n = 0; n < samples; ++n) out[n] = 0.5 * rng.gaussian();
    } else {
        fail(ErrorCode::kInvalidArgument, "gen_test_signal: unknown kind '" + kind + "' (sine|chirp|noise)");
    }
    return out;
}

}  // namespace flowlab
