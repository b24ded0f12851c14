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

#ifndef FLOWLAB_CAPTIONS_HPP_
#define FLOWLAB_CAPTIONS_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace flowlab {

// Curation of caption candidates against audio embeddings: best-of-K
// selection, similarity thresholding, keyword filtering, segmentation and
// subsampling, plus a cross-dataset max-similarity probe.

struct AudioRecord {
    std::string id;
    double duration = 0.0;     // seconds
    std::string category;      // music | speech | other
    std::vector<Tensor> segment_embeddings;  // unit vectors, one per segment
};

struct CaptionCandidate {
    std::string text;
    Tensor embedding;  // unit vector; empty means "embed the text on demand"
};

// Packaged keyword blocklist for detecting low-quality audio via captions.
const std::vector<std::string>& default_keyword_blocklist();

struct FilterConfig {
    double threshold = 0.45;
    int64_t candidates_per_segment = 10;
    std::vector<std::string> keyword_blocklist = default_keyword_blocklist();
    double segment_length = 10.0;  // seconds
    int64_t subsample_keep_every = 1;  // applies to non-music/speech records

    void validate() const;
};

// floor(duration / segment_length); the trailing partial segment is dropped.
int64_t segment_count(double duration, double segment_length);

double cosine_similarity(const Tensor& a, const Tensor& b);

struct BestCaption {
    bool accepted = false;
    size_t index = 0;
    double similarity = 0.0;
};

// argmax cosine similarity against the audio embedding; ties break to the
// lowest candidate index; accepted iff similarity >= threshold.
BestCaption best_caption(const std::vector<CaptionCandidate>& candidates,
                         const Tensor& audio_embedding, double threshold);

struct KeywordMatch {
    bool passed = true;
    std::string keyword;  // first blocklist entry found, when failed
};

// Case-insensitive substring match over the blocklist.
KeywordMatch keyword_filter(const std::string& text, const std::vector<std::string>& blocklist);

// music/speech keep every segment; other categories keep every k-th,
// always including index 0.
std::vector<int64_t> subsample_segments(const AudioRecord& record, const FilterConfig& config);

struct MaxSim {
    double score = 0.0;
    std::string id;
};

// max over the dataset of cosine similarity to the query; ties break to the
// earliest inserted row.
MaxSim max_sim(const std::vector<std::string>& ids, const Tensor& embeddings, const Tensor& query);

// Deterministic stand-in text embedder: hashed character trigrams projected
// to 64 dims and L2-normalized.
Tensor toy_embedder(const std::string& text);
constexpr int64_t kToyEmbedderDim = 64;

struct AcceptedCaption {
    std::string record_id;
    int64_t segment = 0;
    std::string caption;
    double similarity = 0.0;
};

struct DatasetSummary {
    int64_t accepted = 0;
    int64_t rejected_threshold = 0;
    int64_t rejected_keyword = 0;
    std::vector<int64_t> histogram = std::vector<int64_t>(100, 0);  // bin width 0.01 over [0,1]
    double total_hours = 0.0;

    int64_t evaluated() const { return accepted + rejected_threshold + rejected_keyword; }
};

using CandidateMap = std::map<std::pair<std::string, int64_t>, std::vector<CaptionCandidate>>;
using EmbedFn = std::function<Tensor(const std::string&)>;

struct BuildResult {
    std::vector<AcceptedCaption> accepted;
    DatasetSummary summary;
};

// Full curation pass. Per retained segment with candidates: best_caption,
// then keyword_filter on the winning text. Output order is (record id,
// segment index); the histogram holds accepted plus threshold-rejected
// similarities. Pure function of its inputs.
BuildResult build_dataset(const std::vector<AudioRecord>& records, const CandidateMap& candidates,
                          const FilterConfig& config, const EmbedFn& embedder);

// ---- JSON-lines interfaces ----

// {"id", "duration", "category", "segments": [[f64,...], ...]} per line.
std::vector<AudioRecord> read_records_jsonl(const std::string& path, double segment_length);

// {"record_id", "segment": int, "captions": [{"text", "vec": [...]}]} per
// line; "vec" is optional (the embedder fills it in).
CandidateMap read_candidates_jsonl(const std::string& path);

void write_accepted_jsonl(const std::string& path, const std::vector<AcceptedCaption>& accepted);
void write_summary_json(const std::string& path, const DatasetSummary& summary,
                        const FilterConfig& config);
void write_histogram_csv(const std::string& path, const DatasetSummary& summary);

}  // namespace flowlab

#endif  // FLOWLAB_CAPTIONS_HPP_
