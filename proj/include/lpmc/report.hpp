// Copyright 2026 The LPMC Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scalar accounting for a backbone and its prompt sets.

#ifndef LPMC_REPORT_HPP_
#define LPMC_REPORT_HPP_

#include <string>
#include <vector>

#include "lpmc/lpm.hpp"

namespace lpmc {

struct ParamReport {
  struct Row {
    std::string component;
    Index scalars = 0;
  };
  std::vector<Row> rows;
  Index backbone = 0;
  /// Trainable scalars per prompt set, in the order given.
  std::vector<std::pair<int, Index>> prompt_sets;

  /// One prompt set against the backbone; the first set when several.
  double ratio() const;
  /// CSV "component,scalars" plus one ratio line per prompt set.
  std::string to_text() const;
};

/// Counts trainable scalars only (BatchNorm running statistics excluded).
template <typename S>
ParamReport param_report(const Backbone<S>& backbone, const std::vector<const PromptSet<S>*>& sets);

}  // namespace lpmc

#endif  // LPMC_REPORT_HPP_
