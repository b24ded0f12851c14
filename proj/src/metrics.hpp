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

#ifndef FLOWLAB_METRICS_HPP_
#define FLOWLAB_METRICS_HPP_

#include <string>
#include <vector>

#include "tensor.hpp"

namespace flowlab {

struct GaussianStats {
    Tensor mean;  // (d)
    Tensor cov;   // (d, d), symmetric PSD up to rounding
};

// Sample mean and unbiased covariance (n-1); set is (n, d) with n >= 2.
GaussianStats fit_gaussian(const Tensor& set);

struct EigenSym {
    Tensor values;   // (d)
    Tensor vectors;  // (d, d); column j pairs with values[j]
};

// Cyclic Jacobi iteration, run until the off-diagonal Frobenius norm drops
// below 1e-12 (at most 100 sweeps). Input must be symmetric within 1e-8 and
// is symmetrized internally.
EigenSym eigen_sym(const Tensor& m);

// PSD square root via eigen_sym with eigenvalues clamped at zero.
Tensor sqrt_psd(const Tensor& m);

// ||mu_a - mu_b||^2 + tr(cov_a + cov_b - 2 (cov_a^1/2 cov_b cov_a^1/2)^1/2)
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// mean over paired rows of sum_c ref_c (log ref_c - log gen_c); probability
// entries are clamped to >= 1e-12 before the logarithm. Direction is
// KL(reference || generated).
double paired_kl(const Tensor& ref, const Tensor& gen);

// exp(mean_i KL(p_i || p_bar)) with the same clamping; p is (n, C).
double inception_score(const Tensor& p);

// Mean cosine similarity of paired rows; zero-norm rows score 0.
double embedding_score(const Tensor& text_embs, const Tensor& audio_embs);

// Checks PosteriorSet invariants: entries >= 0, rows sum to 1 within 1e-9.
void validate_posteriors(const Tensor& p);

// JSON-lines input, one {"id": ..., "vec": [...]} object per line; the first
// row fixes the dimension and mismatches are rejected with line numbers.
struct EmbeddingSet {
    std::vector<std::string> ids;
    Tensor vecs;  // (n, d)
};

EmbeddingSet read_embedding_jsonl(const std::string& path);

}  // namespace flowlab

#endif  // FLOWLAB_METRICS_HPP_
