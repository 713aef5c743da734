// Copyright 2026 The OSDG Scheduler Authors.
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

// Domain scheduling for meta-train / meta-test partitioning.
//
// Reliability of source domain d under the reserved classes C*:
//   omega_d = min_{c in C*} exp(1 + mean_i conf(x_i^(c,d))) * (0.1 + sigma * gamma_d)
// where gamma_d counts past selections of d. The hardest domain is the argmin.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osdg/autodiff.hpp"
#include "osdg/common.hpp"
#include "osdg/dataset.hpp"
#include "osdg/network.hpp"
#include "osdg/objectives.hpp"

namespace osdg {

enum class SchedulerKind { Hardest, Sequential, Random, Easiest, SelfGenerated };

inline std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Hardest: return "hardest";
    case SchedulerKind::Sequential: return "sequential";
    case SchedulerKind::Random: return "random";
    case SchedulerKind::Easiest: return "easiest";
    case SchedulerKind::SelfGenerated: return "selfgen";
  }
  return "hardest";
}

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "hardest") return SchedulerKind::Hardest;
  if (s == "sequential") return SchedulerKind::Sequential;
  if (s == "random") return SchedulerKind::Random;
  if (s == "easiest") return SchedulerKind::Easiest;
  if (s == "selfgen") return SchedulerKind::SelfGenerated;
  throw ParameterError("unknown scheduler '" + s + "' (expected hardest|sequential|random|easiest|selfgen)");
}

struct ScheduleRecord {
  std::size_t step = 0;
  int selected = 0;
  std::map<int, double> omega;
  bool operator==(const ScheduleRecord&) const = default;
};

struct ScheduleState {
  std::map<int, std::size_t> gamma;
  double sigma = 2e-5;
  std::vector<ScheduleRecord> history;

  std::size_t selections() const {
    std::size_t n = 0;
    for (const auto& [d, g] : gamma) n += g;
    return n;
  }
  std::size_t gamma_of(int d) const {
    auto it = gamma.find(d);
    return it == gamma.end() ? 0 : it->second;
  }
};

/// Confidence samples per (domain, class) cell.
using ProbeMap = std::map<CellKey, std::vector<double>>;

inline std::map<int, double> domain_reliability(const ProbeMap& probes, const ScheduleState& state) {
  std::map<int, double> omega;
  for (const auto& [cell, values] : probes) {
    if (values.empty())
      throw ParameterError(str_cat("domain_reliability: empty probe list for (domain ", cell.first, ", class ",
                                   cell.second, ")"));
    double total = 0.0;
    for (double v : values) total += v;
    const double m = total / static_cast<double>(values.size());
    const double balance = 0.1 + state.sigma * static_cast<double>(state.gamma_of(cell.first));
    const double score = std::exp(1.0 + m) * balance;
    auto [it, inserted] = omega.emplace(cell.first, score);
    if (!inserted) it->second = std::min(it->second, score);
  }
  return omega;
}

/// Argmin; ties resolve to the lowest domain id.
inline int select_hardest(const std::map<int, double>& omega) {
  if (omega.empty()) throw ParameterError("select_hardest: no domains");
  int best = omega.begin()->first;
  double best_score = omega.begin()->second;
  for (const auto& [d, s] : omega) {
    if (std::isnan(s)) throw ParameterError(str_cat("select_hardest: NaN score for domain ", d));
    if (s < best_score) {
      best = d;
      best_score = s;
    }
  }
  return best;
}

/// Argmax; ties resolve to the lowest domain id.
inline int select_easiest(const std::map<int, double>& omega) {
  if (omega.empty()) throw ParameterError("select_easiest: no domains");
  int best = omega.begin()->first;
  double best_score = omega.begin()->second;
  for (const auto& [d, s] : omega) {
    if (std::isnan(s)) throw ParameterError(str_cat("select_easiest: NaN score for domain ", d));
    if (s > best_score) {
      best = d;
      best_score = s;
    }
  }
  return best;
}

/// Scores a batch of samples (n x p) with one confidence per row.
using ConfidenceFn = std::function<std::vector<double>(const Tensor&)>;

inline ConfidenceFn follower_confidence(const FollowerNetwork& follower) {
  return [&follower](const Tensor& x) {
    Graph g;
    g.set_no_grad(true);
    return forward_follower(g, follower, g.constant(x)).value().data;
  };
}

/// Mean of the two cls heads' max-softmax confidences.
inline ConfidenceFn main_confidence(const MainNetwork& net) {
  return [&net](const Tensor& x) {
    Graph g;
    g.set_no_grad(true);
    MainOutputs out = forward_main(g, net, g.constant(x));
    const auto& c1 = conf(out.cls_logits1).value().data;
    const auto& c2 = conf(out.cls_logits2).value().data;
    std::vector<double> mean(c1.size());
    for (std::size_t i = 0; i < c1.size(); ++i) mean[i] = 0.5 * (c1[i] + c2[i]);
    return mean;
  };
}

/// Draws probe_size training samples per (source domain, reserved class) and
/// records their confidences. Cells are visited in (domain, class) order.
inline ProbeMap probe(const DomainDataset& ds, const ConfidenceFn& score, const std::vector<int>& reserved_classes,
                      std::size_t probe_size, Rng& rng) {
  if (probe_size < 1) throw ParameterError("probe: probe_size must be >= 1");
  ProbeMap out;
  for (int d : ds.manifest().source_domains()) {
    for (int c : reserved_classes) {
      SampleRefs batch = sample_batch(ds, rng, {{d}, {c}, probe_size});
      out[{d, c}] = score(features_matrix(batch, ds.manifest().feature_dim));
    }
  }
  return out;
}

struct PartitionDomains {
  int d_star = 0, d_i = 0, d_j = 0;
  bool operator==(const PartitionDomains&) const = default;
};

/// Scheduling step given a confidence source. Every kind probes (so the
/// history always carries omega scores) and increments gamma.
inline PartitionDomains partition_from_confidence(SchedulerKind kind, const DomainDataset& ds,
                                                  const ConfidenceFn& score, ScheduleState& state, Rng& rng,
                                                  const std::vector<int>& reserved_classes, std::size_t probe_size) {
  const std::vector<int> sources = ds.manifest().source_domains();
  if (sources.size() < 3)
    throw ParameterError(str_cat("scheduler: need at least 3 source domains, have ", sources.size()));

  const ProbeMap probes = probe(ds, score, reserved_classes, probe_size, rng);
  const std::map<int, double> omega = domain_reliability(probes, state);

  PartitionDomains out;
  switch (kind) {
    case SchedulerKind::Hardest:
    case SchedulerKind::SelfGenerated:
      out.d_star = select_hardest(omega);
      break;
    case SchedulerKind::Easiest:
      out.d_star = select_easiest(omega);
      break;
    case SchedulerKind::Sequential:
      out.d_star = sources[state.selections() % sources.size()];
      break;
    case SchedulerKind::Random:
      out.d_star = sources[rng.index(sources.size())];
      break;
  }
  std::vector<int> rest;
  for (int d : sources)
    if (d != out.d_star) rest.push_back(d);
  if (rest.size() > 2) rest = rng.choose(rest, 2);
  out.d_i = rest[0];
  out.d_j = rest[1];

  state.history.push_back({state.history.size(), out.d_star, omega});
  ++state.gamma[out.d_star];
  return out;
}

inline PartitionDomains next_partition_domains(SchedulerKind kind, const DomainDataset& ds, const MainNetwork& main,
                                               const FollowerNetwork& follower, ScheduleState& state, Rng& rng,
                                               const std::vector<int>& reserved_classes, std::size_t probe_size) {
  const ConfidenceFn score =
      kind == SchedulerKind::SelfGenerated ? main_confidence(main) : follower_confidence(follower);
  return partition_from_confidence(kind, ds, score, state, rng, reserved_classes, probe_size);
}

/// Columns: step,selected_domain,omega_<d>... for each source domain.
inline void write_schedule_history(const std::filesystem::path& path, const ScheduleState& state,
                                   const std::vector<int>& sources) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,selected_domain";
  for (int d : sources) out << ",omega_" << d;
  out << '\n';
  for (const auto& rec : state.history) {
    out << rec.step << ',' << rec.selected;
    for (int d : sources) {
      auto it = rec.omega.find(d);
      out << ',' << (it == rec.omega.end() ? std::string() : format_double(it->second));
    }
    out << '\n';
  }
}

}  // namespace osdg
