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

#include "config.hpp"

#include <cstdlib>
#include <fstream>

#include "error.hpp"

namespace flowlab {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

std::vector<std::string> split_array(const std::string& raw) {
    // raw is the text between [ and ]
    std::vector<std::string> items;
    std::string cur;
    bool in_quote = false;
    char quote = 0;
    for (char c : raw) {
        if (in_quote) {
            if (c == quote) in_quote = false;
            cur += c;
        } else if (c == '"' || c == '\'') {
            in_quote = true;
            quote = c;
            cur += c;
        } else if (c == ',') {
            items.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    std::string last = trim(cur);
    if (!last.empty()) items.push_back(last);
    return items;
}

double parse_double(const std::string& key, const std::string& raw) {
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0') {
        fail(ErrorCode::kParse, "config key '" + key + "': '" + raw + "' is not a number");
    }
    return v;
}

int64_t parse_int(const std::string& key, const std::string& raw) {
    char* end = nullptr;
    long long v = std::strtoll(raw.c_str(), &end, 10);
    if (end == raw.c_str() || *end != '\0') {
        fail(ErrorCode::kParse, "config key '" + key + "': '" + raw + "' is not an integer");
    }
    return static_cast<int64_t>(v);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    Config cfg;
    cfg.load_file(path);
    return cfg;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open config file " + path);
    std::string line;
    std::string section;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = std::string::npos;
        bool in_quote = false;
        char quote = 0;
        for (size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (in_quote) {
                if (c == quote) in_quote = false;
            } else if (c == '"' || c == '\'') {
                in_quote = true;
                quote = c;
            } else if (c == '#') {
                hash = i;
                break;
            }
        }
        std::string content = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (content.empty()) continue;
        if (content.front() == '[') {
            if (content.back() != ']') {
                fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(content.substr(1, content.size() - 2));
            if (section.empty()) {
                fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": empty section name");
            }
            continue;
        }
        size_t eq = content.find('=');
        if (eq == std::string::npos) {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(content.substr(0, eq));
        std::string value = trim(content.substr(eq + 1));
        if (key.empty() || value.empty()) {
            fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": empty key or value");
        }
        values_[section.empty() ? key : section + "." + key] = value;
    }
}

void Config::set(const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) fail(ErrorCode::kInvalidArgument, "config: empty key");
    values_[dotted_key] = value;
}

bool Config::has(const std::string& dotted_key) const {
    return values_.count(dotted_key) > 0;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : strip_quotes(it->second);
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_double(key, strip_quotes(it->second));
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_int(key, strip_quotes(it->second));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = strip_quotes(it->second);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(ErrorCode::kParse, "config key '" + key + "': '" + v + "' is not a boolean");
}

namespace {

std::vector<std::string> raw_list(const std::map<std::string, std::string>& values,
                                  const std::string& key, bool* found) {
    auto it = values.find(key);
    if (it == values.end()) {
        *found = false;
        return {};
    }
    *found = true;
    std::string v = trim(it->second);
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
        return split_array(v.substr(1, v.size() - 2));
    }
    // also accept bare comma-separated lists (handy for CLI overrides)
    return split_array(v);
}

}  // namespace

std::vector<int64_t> Config::get_int_list(const std::string& key,
                                          const std::vector<int64_t>& fallback) const {
    bool found = false;
    auto raw = raw_list(values_, key, &found);
    if (!found) return fallback;
    std::vector<int64_t> out;
    for (const std::string& item : raw) out.push_back(parse_int(key, strip_quotes(item)));
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
    bool found = false;
    auto raw = raw_list(values_, key, &found);
    if (!found) return fallback;
    std::vector<double> out;
    for (const std::string& item : raw) out.push_back(parse_double(key, strip_quotes(item)));
    return out;
}

std::vector<std::string> Config::get_str_list(const std::string& key,
                                              const std::vector<std::string>& fallback) const {
    bool found = false;
    auto raw = raw_list(values_, key, &found);
    if (!found) return fallback;
    std::vector<std::string> out;
    for (const std::string& item : raw) out.push_back(strip_quotes(item));
    return out;
}

}  // namespace flowlab
