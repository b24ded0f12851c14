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

#include "metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace flowlab {

namespace {

constexpr double kProbClamp = 1e-12;

Tensor matmul_sq(const Tensor& a, const Tensor& b) {
    int64_t n = a.shape()[0];
    Tensor out({n, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < n; ++k) {
            double aik = a.at({i, k});
            if (aik == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at({i, j}) += aik * b.at({k, j});
        }
    }
    return out;
}

double trace(const Tensor& m) {
    double s = 0.0;
    for (int64_t i = 0; i < m.shape()[0]; ++i) s += m.at({i, i});
    return s;
}

}  // namespace

GaussianStats fit_gaussian(const Tensor& set) {
    if (set.rank() != 2) fail(ErrorCode::kShapeMismatch, "fit_gaussian: set must be (n, d)");
    int64_t n = set.shape()[0];
    int64_t d = set.shape()[1];
    if (n < 2) fail(ErrorCode::kInvalidArgument, "fit_gaussian: needs at least 2 samples");
    GaussianStats stats;
    stats.mean = Tensor({d});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) stats.mean[j] += set.at({i, j});
    }
    for (int64_t j = 0; j < d; ++j) stats.mean[j] /= static_cast<double>(n);
    stats.cov = Tensor({d, d});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t a = 0; a < d; ++a) {
            double da = set.at({i, a}) - stats.mean[a];
            for (int64_t b = a; b < d; ++b) {
                stats.cov.at({a, b}) += da * (set.at({i, b}) - stats.mean[b]);
            }
        }
    }
    for (int64_t a = 0; a < d; ++a) {
        for (int64_t b = a; b < d; ++b) {
            double v = stats.cov.at({a, b}) / static_cast<double>(n - 1);
            stats.cov.at({a, b}) = v;
            stats.cov.at({b, a}) = v;
        }
    }
    return stats;
}

EigenSym eigen_sym(const Tensor& m) {
    if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) {
        fail(ErrorCode::kShapeMismatch, "eigen_sym: matrix must be square");
    }
    int64_t n = m.shape()[0];
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            if (std::fabs(m.at({i, j}) - m.at({j, i})) > 1e-8) {
                fail(ErrorCode::kInvalidArgument, "eigen_sym: matrix is not symmetric within 1e-8");
            }
        }
    }
    Tensor a({n, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) a.at({i, j}) = 0.5 * (m.at({i, j}) + m.at({j, i}));
    }
    Tensor v = Tensor::eye(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                if (i != j) s += a.at({i, j}) * a.at({i, j});
            }
        }
        return std::sqrt(s);
    };

    bool converged = n < 2;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                double apq = a.at({p, q});
                if (std::fabs(apq) < 1e-300) continue;
                double tau = (a.at({q, q}) - a.at({p, p})) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int64_t k = 0; k < n; ++k) {
                    double akp = a.at({k, p});
                    double akq = a.at({k, q});
                    a.at({k, p}) = c * akp - s * akq;
                    a.at({k, q}) = s * akp + c * akq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    double apk = a.at({p, k});
                    double aqk = a.at({q, k});
                    a.at({p, k}) = c * apk - s * aqk;
                    a.at({q, k}) = s * apk + c * aqk;
                }
                for (int64_t k = 0; k < n; ++k) {
                    double vkp = v.at({k, p});
                    double vkq = v.at({k, q});
                    v.at({k, p}) = c * vkp - s * vkq;
                    v.at({k, q}) = s * vkp + c * vkq;
                }
            }
        }
        if (off_norm() < 1e-12) converged = true;
    }
    if (!converged) fail(ErrorCode::kNotConverged, "eigen_sym: Jacobi did not converge in 100 sweeps");

    EigenSym out;
    out.values = Tensor({n});
    for (int64_t i = 0; i < n; ++i) out.values[i] = a.at({i, i});
    out.vectors = v;
    return out;
}

Tensor sqrt_psd(const Tensor& m) {
    EigenSym es = eigen_sym(m);
    int64_t n = m.shape()[0];
    Tensor out({n, n});
    for (int64_t k = 0; k < n; ++k) {
        double lam = std::max(es.values[k], 0.0);
        double root = std::sqrt(lam);
        for (int64_t i = 0; i < n; ++i) {
            double vik = es.vectors.at({i, k});
            if (vik == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) {
                out.at({i, j}) += root * vik * es.vectors.at({j, k});
            }
        }
    }
    return out;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.shape() != b.mean.shape() || a.cov.shape() != b.cov.shape()) {
        fail(ErrorCode::kShapeMismatch, "frechet_distance: dimension mismatch");
    }
    int64_t d = a.mean.size();
    double mean_term = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }
    Tensor root_a = sqrt_psd(a.cov);
    Tensor middle = matmul_sq(matmul_sq(root_a, b.cov), root_a);
    // Symmetrize rounding noise before the second root.
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t j = i + 1; j < d; ++j) {
            double v = 0.5 * (middle.at({i, j}) + middle.at({j, i}));
            middle.at({i, j}) = v;
            middle.at({j, i}) = v;
        }
    }
    Tensor cross = sqrt_psd(middle);
    double fd = mean_term + trace(a.cov) + trace(b.cov) - 2.0 * trace(cross);
    return std::max(fd, 0.0);
}

namespace {

void check_posterior_pair(const Tensor& ref, const Tensor& gen) {
    if (ref.rank() != 2 || gen.rank() != 2 || ref.shape() != gen.shape()) {
        fail(ErrorCode::kShapeMismatch, "paired posteriors must share (n, C)");
    }
}

double row_kl(const double* p, const double* q, int64_t c) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
        double pj = std::max(p[j], kProbClamp);
        double qj = std::max(q[j], kProbClamp);
        s += pj * (std::log(pj) - std::log(qj));
    }
    return s;
}

}  // namespace

void validate_posteriors(const Tensor& p) {
    if (p.rank() != 2) fail(ErrorCode::kShapeMismatch, "posteriors must be (n, C)");
    int64_t n = p.shape()[0], c = p.shape()[1];
    for (int64_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double v = p.at({i, j});
            if (v < 0.0) fail(ErrorCode::kInvalidArgument, "posterior row " + std::to_string(i) + " has a negative entry");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-9) {
            fail(ErrorCode::kInvalidArgument,
                 "posterior row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

double paired_kl(const Tensor& ref, const Tensor& gen) {
    check_posterior_pair(ref, gen);
    int64_t n = ref.shape()[0], c = ref.shape()[1];
    if (n == 0) fail(ErrorCode::kInvalidArgument, "paired_kl: empty sets");
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        total += row_kl(ref.data() + i * c, gen.data() + i * c, c);
    }
    return total / static_cast<double>(n);
}

double inception_score(const Tensor& p) {
    if (p.rank() != 2 || p.shape()[0] < 1) fail(ErrorCode::kInvalidArgument, "inception_score: needs (n, C)");
    int64_t n = p.shape()[0], c = p.shape()[1];
    std::vector<double> marginal(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c; ++j) marginal[static_cast<size_t>(j)] += p.at({i, j});
    }
    for (double& m : marginal) m /= static_cast<double>(n);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        total += row_kl(p.data() + i * c, marginal.data(), c);
    }
    return std::exp(total / static_cast<double>(n));
}

double embedding_score(const Tensor& text_embs, const Tensor& audio_embs) {
    if (text_embs.rank() != 2 || audio_embs.rank() != 2 || text_embs.shape() != audio_embs.shape()) {
        fail(ErrorCode::kShapeMismatch, "embedding_score: paired sets must share (n, d)");
    }
    int64_t n = text_embs.shape()[0], d = text_embs.shape()[1];
    if (n == 0) fail(ErrorCode::kInvalidArgument, "embedding_score: empty sets");
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double a = text_embs.at({i, j});
            double b = audio_embs.at({i, j});
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if (na > 0.0 && nb > 0.0) total += dot / (std::sqrt(na) * std::sqrt(nb));
        // zero-norm rows contribute similarity 0 by convention
    }
    return total / static_cast<double>(n);
}

EmbeddingSet read_embedding_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path);
    EmbeddingSet set;
    std::vector<std::vector<double>> rows;
    std::string line;
    int64_t lineno = 0;
    int64_t dim = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("vec") || !obj["vec"].is_array()) {
            fail(ErrorCode::kParse,
                 path + ":" + std::to_string(lineno) + ": expected {\"id\": ..., \"vec\": [...]}");
        }
        std::vector<double> vec;
        for (const auto& v : obj["vec"]) {
            if (!v.is_number()) {
                fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": vec entries must be numbers");
            }
            vec.push_back(v.get<double>());
        }
        if (dim < 0) {
            dim = static_cast<int64_t>(vec.size());
            if (dim == 0) fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": empty vector");
        } else if (static_cast<int64_t>(vec.size()) != dim) {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": dimension " +
                                        std::to_string(vec.size()) + " does not match first row (" +
                                        std::to_string(dim) + ")");
        }
        for (double v : vec) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": non-finite value");
            }
        }
        set.ids.push_back(obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump());
        rows.push_back(std::move(vec));
    }
    int64_t n = static_cast<int64_t>(rows.size());
    set.vecs = Tensor({n, std::max<int64_t>(dim, 0)});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < dim; ++j) set.vecs.at({i, j}) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    return set;
}

}  // namespace flowlab
