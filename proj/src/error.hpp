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

#ifndef FLOWLAB_ERROR_HPP_
#define FLOWLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace flowlab {

// Error categories; these map 1:1 onto the C API status codes.
enum class ErrorCode {
    kInvalidArgument = 1,
    kShapeMismatch = 2,
    kDomain = 3,
    kNumeric = 4,
    kSingular = 5,
    kParse = 6,
    kIo = 7,
    kState = 8,
    kNotConverged = 9,
    kInternal = 10,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

 private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace flowlab

#endif  // FLOWLAB_ERROR_HPP_
