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

#include "checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace flowlab {

using nlohmann::json;

void save_checkpoint(const ParamSet& params, const std::string& path) {
    json doc = json::object();
    for (const Param& p : params) {
        json entry;
        entry["shape"] = p.value.shape();
        entry["data"] = p.value.vec();
        doc[p.name] = std::move(entry);
    }
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
    out << doc.dump(0) << "\n";
    if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open checkpoint: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, "checkpoint " + path + ": " + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::kParse, "checkpoint " + path + ": top level must be an object");
    std::map<std::string, Tensor> tensors;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const json& entry = it.value();
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data")) {
            fail(ErrorCode::kParse, "checkpoint entry '" + it.key() + "' must have shape and data");
        }
        Shape shape;
        for (const json& d : entry["shape"]) shape.push_back(d.get<int64_t>());
        std::vector<double> data;
        data.reserve(entry["data"].size());
        for (const json& v : entry["data"]) data.push_back(v.get<double>());
        if (shape_size(shape) != static_cast<int64_t>(data.size())) {
            fail(ErrorCode::kShapeMismatch, "checkpoint entry '" + it.key() + "': data length " +
                                                std::to_string(data.size()) + " does not match shape " +
                                                shape_str(shape));
        }
        tensors.emplace(it.key(), Tensor(std::move(shape), std::move(data)));
    }
    return tensors;
}

void load_checkpoint(ParamSet& params, const std::string& path) {
    auto tensors = read_checkpoint(path);
    for (Param& p : params) {
        auto it = tensors.find(p.name);
        if (it == tensors.end()) {
            fail(ErrorCode::kParse, "checkpoint is missing parameter '" + p.name + "'");
        }
        if (it->second.shape() != p.value.shape()) {
            fail(ErrorCode::kShapeMismatch, "checkpoint parameter '" + p.name + "' has shape " +
                                                shape_str(it->second.shape()) + ", expected " +
                                                shape_str(p.value.shape()));
        }
        p.value = it->second;
    }
}

}  // namespace flowlab
