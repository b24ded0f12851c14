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

#ifndef FLOWLAB_CONFIG_HPP_
#define FLOWLAB_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flowlab {

// TOML-style sections of key = value pairs, stored as strings under dotted
// keys ("train.lr"). Values: numbers, booleans, quoted or bare strings, and
// flat arrays. Precedence is flag > file > default: set() overwrites what
// load_file() read, and typed getters fall back to defaults.
class Config {
 public:
    Config() = default;

    static Config from_file(const std::string& path);
    void load_file(const std::string& path);

    void set(const std::string& dotted_key, const std::string& value);
    bool has(const std::string& dotted_key) const;

    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int64_t> get_int_list(const std::string& key,
                                      const std::vector<int64_t>& fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<std::string> get_str_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

 private:
    std::map<std::string, std::string> values_;
};

}  // namespace flowlab

#endif  // FLOWLAB_CONFIG_HPP_
