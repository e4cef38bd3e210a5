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

#include "lpmc/report.hpp"

#include <cstdio>
#include <map>
#include <stdexcept>

namespace lpmc {

namespace {

// Component label for a parameter name, keyed on its first segment.
std::string component_of(const std::string& name, bool prompt) {
  const std::string head = name.substr(0, name.find('.'));
  if (prompt) return head == "epg" || head == "enc" ? "encoder" : "decoder";
  if (head == "enc") return "encoder";
  if (head == "dec") return "decoder";
  return "hyperprior";
}

template <typename S>
std::vector<ParamReport::Row> group(const ParamStore<S>& params, const std::string& prefix, bool prompt) {
  std::map<std::string, Index> counts;
  for (const auto& e : params.entries()) {
    if (e.trainable) counts[component_of(e.name, prompt)] += e.tensor.numel();
  }
  std::vector<ParamReport::Row> rows;
  for (const char* c : {"encoder", "decoder", "hyperprior"}) {
    auto it = counts.find(c);
    if (it != counts.end()) rows.push_back({prefix + "." + c, it->second});
  }
  rows.push_back({prefix + ".total", params.trainable_count()});
  return rows;
}

std::string percent(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r);
  return buf;
}

}  // namespace

double ParamReport::ratio() const {
  if (prompt_sets.empty()) throw std::logic_error("param report has no prompt sets");
  return static_cast<double>(prompt_sets.front().second) / static_cast<double>(backbone);
}

std::string ParamReport::to_text() const {
  std::string out = "component,scalars\n";
  for (const auto& r : rows) out += r.component + "," + std::to_string(r.scalars) + "\n";
  for (const auto& [id, n] : prompt_sets) {
    out += "promptset_" + std::to_string(id) + ".ratio," +
           percent(static_cast<double>(n) / static_cast<double>(backbone)) + "\n";
  }
  if (prompt_sets.size() > 1) {
    Index all = 0;
    for (const auto& p : prompt_sets) all += p.second;
    out += "promptsets.ratio," + percent(static_cast<double>(all) / static_cast<double>(backbone)) + "\n";
  }
  return out;
}

template <typename S>
ParamReport param_report(const Backbone<S>& backbone, const std::vector<const PromptSet<S>*>& sets) {
  ParamReport r;
  r.rows = group(backbone.params(), "backbone", false);
  r.backbone = backbone.params().trainable_count();
  for (const PromptSet<S>* s : sets) {
    const auto rows = group(s->params(), "promptset_" + std::to_string(s->lambda_id()), true);
    r.rows.insert(r.rows.end(), rows.begin(), rows.end());
    r.prompt_sets.emplace_back(s->lambda_id(), s->params().trainable_count());
  }
  return r;
}

template ParamReport param_report(const Backbone<float>&, const std::vector<const PromptSet<float>*>&);
template ParamReport param_report(const Backbone<double>&, const std::vector<const PromptSet<double>*>&);

}  // namespace lpmc
