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

#include "captions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace flowlab {

using nlohmann::json;

const std::vector<std::string>& default_keyword_blocklist() {
    static const std::vector<std::string> kList = {
        "ambiguous", "artifact", "background noise", "broken up", "buzzing", "choppy",
        "clipping", "compromised", "crackling", "deficient", "distant", "distorted",
        "dropout", "echo", "faint", "faulty", "feedback", "flawed", "fluctuating", "fuzzy",
        "garbled", "gibberish", "glitch", "hissing", "imprecise", "inadequate", "inaudible",
        "incoherent", "indistinct", "inferior", "insufficient", "interference", "irregular",
        "irrelevant", "lacking", "low quality", "low volume", "low-quality", "mediocre",
        "misheard", "misinterpretation", "muffled", "murmur", "noise", "noisy", "off-mic",
        "overlapping speech", "overmodulated", "poor", "popping", "reverberation",
        "scrambled", "second-rate", "sibilance", "skipped", "skipping", "static",
        "suboptimal", "substandard", "uncertain", "unclear", "undermodulated",
        "unintelligible", "unknown sounds", "unreliable", "unsatisfactory", "unspecific",
        "vague"};
    return kList;
}

void FilterConfig::validate() const {
    if (threshold < -1.0 || threshold > 1.0) {
        fail(ErrorCode::kInvalidArgument, "filter: threshold outside [-1, 1]");
    }
    if (candidates_per_segment < 1) {
        fail(ErrorCode::kInvalidArgument, "filter: candidates_per_segment must be >= 1");
    }
    if (segment_length <= 0.0) fail(ErrorCode::kInvalidArgument, "filter: segment_length must be positive");
    if (subsample_keep_every < 1) {
        fail(ErrorCode::kInvalidArgument, "filter: subsample_keep_every must be >= 1");
    }
}

int64_t segment_count(double duration, double segment_length) {
    if (duration < 0.0) fail(ErrorCode::kInvalidArgument, "segment_count: negative duration");
    if (segment_length <= 0.0) fail(ErrorCode::kInvalidArgument, "segment_count: bad segment length");
    return static_cast<int64_t>(std::floor(duration / segment_length));
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.rank() != 1) {
        fail(ErrorCode::kShapeMismatch, "cosine: vectors must be rank 1 with equal dims (" +
                                            shape_str(a.shape()) + " vs " + shape_str(b.shape()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

BestCaption best_caption(const std::vector<CaptionCandidate>& candidates,
                         const Tensor& audio_embedding, double threshold) {
    if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "best_caption: no candidates");
    BestCaption best;
    best.similarity = -2.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double sim = cosine_similarity(candidates[i].embedding, audio_embedding);
        if (sim > best.similarity) {  // strict: ties keep the lowest index
            best.similarity = sim;
            best.index = i;
        }
    }
    best.accepted = best.similarity >= threshold;
    return best;
}

namespace {

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

KeywordMatch keyword_filter(const std::string& text, const std::vector<std::string>& blocklist) {
    std::string lowered = to_lower(text);
    for (const std::string& keyword : blocklist) {
        if (lowered.find(to_lower(keyword)) != std::string::npos) {
            return {false, keyword};
        }
    }
    return {true, ""};
}

std::vector<int64_t> subsample_segments(const AudioRecord& record, const FilterConfig& config) {
    int64_t n = static_cast<int64_t>(record.segment_embeddings.size());
    std::vector<int64_t> keep;
    if (record.category == "music" || record.category == "speech") {
        for (int64_t i = 0; i < n; ++i) keep.push_back(i);
        return keep;
    }
    for (int64_t i = 0; i < n; i += config.subsample_keep_every) keep.push_back(i);
    return keep;
}

MaxSim max_sim(const std::vector<std::string>& ids, const Tensor& embeddings, const Tensor& query) {
    if (embeddings.rank() != 2 || embeddings.shape()[0] == 0) {
        fail(ErrorCode::kInvalidArgument, "max_sim: dataset is empty");
    }
    if (ids.size() != static_cast<size_t>(embeddings.shape()[0])) {
        fail(ErrorCode::kShapeMismatch, "max_sim: id count does not match rows");
    }
    int64_t d = embeddings.shape()[1];
    if (query.rank() != 1 || query.size() != d) {
        fail(ErrorCode::kShapeMismatch, "max_sim: query dimension mismatch");
    }
    MaxSim best;
    best.score = -2.0;
    for (int64_t i = 0; i < embeddings.shape()[0]; ++i) {
        Tensor row({d});
        for (int64_t j = 0; j < d; ++j) row[j] = embeddings.at({i, j});
        double sim = cosine_similarity(row, query);
        if (sim > best.score) {
            best.score = sim;
            best.id = ids[static_cast<size_t>(i)];
        }
    }
    return best;
}

Tensor toy_embedder(const std::string& text) {
    if (text.empty()) fail(ErrorCode::kInvalidArgument, "toy_embedder: empty text carries no information");
    Tensor v({kToyEmbedderDim});
    auto fnv1a = [](const char* data, size_t len) {
        uint64_t h = 1469598103934665603ULL;
        for (size_t i = 0; i < len; ++i) {
            h ^= static_cast<unsigned char>(data[i]);
            h *= 1099511628211ULL;
        }
        return h;
    };
    auto add_gram = [&](const char* data, size_t len) {
        uint64_t h = fnv1a(data, len);
        int64_t bucket = static_cast<int64_t>(h % kToyEmbedderDim);
        double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        v[bucket] += sign;
    };
    if (text.size() < 3) {
        add_gram(text.data(), text.size());
    } else {
        for (size_t i = 0; i + 3 <= text.size(); ++i) add_gram(text.data() + i, 3);
    }
    double norm = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) norm += v[i] * v[i];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        // Signed counts cancelled out; fall back to a single deterministic bucket.
        v[static_cast<int64_t>(fnv1a(text.data(), text.size()) % kToyEmbedderDim)] = 1.0;
        norm = 1.0;
    }
    for (int64_t i = 0; i < v.size(); ++i) v[i] /= norm;
    return v;
}

namespace {

void validate_record(const AudioRecord& record, double segment_length) {
    int64_t expected = segment_count(record.duration, segment_length);
    if (static_cast<int64_t>(record.segment_embeddings.size()) != expected) {
        fail(ErrorCode::kInvalidArgument,
             "record '" + record.id + "': " + std::to_string(record.segment_embeddings.size()) +
                 " segments but duration " + std::to_string(record.duration) + " implies " +
                 std::to_string(expected));
    }
    for (size_t s = 0; s < record.segment_embeddings.size(); ++s) {
        const Tensor& e = record.segment_embeddings[s];
        double norm = 0.0;
        for (int64_t i = 0; i < e.size(); ++i) norm += e[i] * e[i];
        if (std::fabs(std::sqrt(norm) - 1.0) > 1e-6) {
            fail(ErrorCode::kInvalidArgument, "record '" + record.id + "' segment " +
                                                  std::to_string(s) + ": embedding is not unit norm");
        }
    }
}

int histogram_bin(double sim) {
    int bin = static_cast<int>(std::floor(sim * 100.0));
    return std::clamp(bin, 0, 99);
}

}  // namespace

BuildResult build_dataset(const std::vector<AudioRecord>& records, const CandidateMap& candidates,
                          const FilterConfig& config, const EmbedFn& embedder) {
    config.validate();
    BuildResult result;

    std::vector<const AudioRecord*> ordered;
    ordered.reserve(records.size());
    for (const AudioRecord& r : records) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const AudioRecord* a, const AudioRecord* b) { return a->id < b->id; });

    for (const AudioRecord* record : ordered) {
        validate_record(*record, config.segment_length);
        result.summary.total_hours += record->duration / 3600.0;
        for (int64_t seg : subsample_segments(*record, config)) {
            auto it = candidates.find({record->id, seg});
            if (it == candidates.end() || it->second.empty()) continue;

            std::vector<CaptionCandidate> embedded = it->second;
            for (CaptionCandidate& c : embedded) {
                if (c.embedding.size() == 0) {
                    if (!embedder) {
                        fail(ErrorCode::kInvalidArgument,
                             "record '" + record->id + "': candidate lacks an embedding and no embedder is set");
                    }
                    try {
                        c.embedding = embedder(c.text);
                    } catch (const Error& e) {
                        fail(e.code(), "record '" + record->id + "': embedding provider failed: " + e.what());
                    }
                }
            }

            BestCaption best = best_caption(embedded, record->segment_embeddings[static_cast<size_t>(seg)],
                                            config.threshold);
            if (!best.accepted) {
                ++result.summary.rejected_threshold;
                ++result.summary.histogram[static_cast<size_t>(histogram_bin(best.similarity))];
                continue;
            }
            KeywordMatch kw = keyword_filter(embedded[best.index].text, config.keyword_blocklist);
            if (!kw.passed) {
                ++result.summary.rejected_keyword;
                continue;
            }
            ++result.summary.accepted;
            ++result.summary.histogram[static_cast<size_t>(histogram_bin(best.similarity))];
            result.accepted.push_back(
                {record->id, seg, embedded[best.index].text, best.similarity});
        }
    }
    return result;
}

// ---- JSON-lines I/O ----

namespace {

json parse_line(const std::string& path, int64_t lineno, const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
}

}  // namespace

std::vector<AudioRecord> read_records_jsonl(const std::string& path, double segment_length) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path);
    std::vector<AudioRecord> records;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj = parse_line(path, lineno, line);
        if (!obj.contains("id") || !obj.contains("duration") || !obj.contains("category") ||
            !obj.contains("segments")) {
            fail(ErrorCode::kParse,
                 path + ":" + std::to_string(lineno) + ": record needs id/duration/category/segments");
        }
        AudioRecord rec;
        rec.id = obj["id"].get<std::string>();
        rec.duration = obj["duration"].get<double>();
        rec.category = obj["category"].get<std::string>();
        if (rec.category != "music" && rec.category != "speech" && rec.category != "other") {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) +
                                        ": category must be music|speech|other, got '" + rec.category + "'");
        }
        for (const json& seg : obj["segments"]) {
            std::vector<double> vec;
            for (const json& v : seg) vec.push_back(v.get<double>());
            rec.segment_embeddings.emplace_back(Shape{static_cast<int64_t>(vec.size())}, vec);
        }
        try {
            validate_record(rec, segment_length);
        } catch (const Error& e) {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        records.push_back(std::move(rec));
    }
    return records;
}

CandidateMap read_candidates_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path);
    CandidateMap map;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj = parse_line(path, lineno, line);
        if (!obj.contains("record_id") || !obj.contains("segment") || !obj.contains("captions")) {
            fail(ErrorCode::kParse,
                 path + ":" + std::to_string(lineno) + ": entry needs record_id/segment/captions");
        }
        std::string id = obj["record_id"].get<std::string>();
        int64_t seg = obj["segment"].get<int64_t>();
        std::vector<CaptionCandidate>& list = map[{id, seg}];
        for (const json& cap : obj["captions"]) {
            if (!cap.contains("text")) {
                fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": caption needs text");
            }
            CaptionCandidate c;
            c.text = cap["text"].get<std::string>();
            if (cap.contains("vec")) {
                std::vector<double> vec;
                for (const json& v : cap["vec"]) vec.push_back(v.get<double>());
                c.embedding = Tensor({static_cast<int64_t>(vec.size())}, vec);
            }
            list.push_back(std::move(c));
        }
    }
    return map;
}

void write_accepted_jsonl(const std::string& path, const std::vector<AcceptedCaption>& accepted) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
    for (const AcceptedCaption& a : accepted) {
        json obj;
        obj["record_id"] = a.record_id;
        obj["segment"] = a.segment;
        obj["caption"] = a.caption;
        obj["similarity"] = a.similarity;
        out << obj.dump() << "\n";
    }
}

void write_summary_json(const std::string& path, const DatasetSummary& summary,
                        const FilterConfig& config) {
    json obj;
    obj["accepted"] = summary.accepted;
    obj["rejected_threshold"] = summary.rejected_threshold;
    obj["rejected_keyword"] = summary.rejected_keyword;
    obj["evaluated"] = summary.evaluated();
    obj["total_hours"] = summary.total_hours;
    obj["threshold"] = config.threshold;
    obj["histogram"] = summary.histogram;
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
    out << obj.dump(2) << "\n";
}

void write_histogram_csv(const std::string& path, const DatasetSummary& summary) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
    out << "bin_low,count\n";
    char buf[32];
    for (size_t i = 0; i < summary.histogram.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(i) / 100.0);
        out << buf << "," << summary.histogram[i] << "\n";
    }
}

}  // namespace flowlab
