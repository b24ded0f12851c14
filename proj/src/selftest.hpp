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

#ifndef FLOWLAB_SELFTEST_HPP_
#define FLOWLAB_SELFTEST_HPP_

#include <ostream>

namespace flowlab {

// Runs the library's invariant suite, printing one line per check. Returns
// the number of failed checks (0 = all good).
int run_selftest(bool verbose, std::ostream& out);

}  // namespace flowlab

#endif  // FLOWLAB_SELFTEST_HPP_
