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

// Meta-learning loop with a scheduled domain partition.
//
// Each iteration reserves two seen classes {c_i, c_j}, asks the scheduler for
// the partition domains (d*, d_i, d_j) and draws
//   meta-train  = Omega_a  ({c_i,c_j} x {d_i,d_j})  U  Omega_b  (rest x {d*})
//   meta-test   = Omega_a* ({c_i,c_j} x {d*})       U  Omega_b* (rest x {d_i,d_j})
// Phase 1 takes an SGD step on L_m-train; phase 2 takes an SGD step on
// L_m-test + L_m-train, both evaluated at the phase-1 parameters (first order).
//
// The follower only learns through L_REG: its outputs enter L_CLS as detached
// sample weights, and its regression target is the detached main-network
// confidence.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "osdg/autodiff.hpp"
#include "osdg/dataset.hpp"
#include "osdg/metrics.hpp"
#include "osdg/network.hpp"
#include "osdg/objectives.hpp"
#include "osdg/scheduler.hpp"

namespace osdg {

enum class ConfSource { Softmax, Evidential };

inline std::string to_string(ConfSource c) { return c == ConfSource::Softmax ? "softmax" : "evidential"; }

inline ConfSource parse_conf_source(const std::string& s) {
  if (s == "softmax") return ConfSource::Softmax;
  if (s == "evidential") return ConfSource::Evidential;
  throw ParameterError("unknown conf source '" + s + "' (expected softmax|evidential)");
}

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 0.1;
  std::size_t decay_step = 8000;
  std::size_t max_steps = 10000;
  std::size_t batch_size = 16;
  LossWeights weights;
  double sigma = 2e-5;
  std::size_t probe_size = 16;
  SchedulerKind scheduler = SchedulerKind::Hardest;
  std::uint64_t seed = 1;
  std::vector<std::size_t> backbone_widths{64, 64};
  int depth1 = 2;
  int depth2 = 1;
  std::size_t eval_interval = 100;
  double omega_min = 0.1;
  bool single_update = false;
  bool use_rb = true;
  ConfSource conf_source = ConfSource::Softmax;

  void validate() const {
    if (!(lr > 0.0)) throw ParameterError("train: lr must be positive");
    if (!(lr_decay > 0.0)) throw ParameterError("train: lr_decay must be positive");
    if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
    if (probe_size < 1) throw ParameterError("train: probe_size must be >= 1");
    if (!(sigma > 0.0)) throw ParameterError("train: sigma must be positive");
    if (eval_interval < 1) throw ParameterError("train: eval_interval must be >= 1");
    if (!(omega_min > 0.0 && omega_min <= 1.0)) throw ParameterError("train: omega_min must lie in (0, 1]");
    for (double w : {weights.cls, weights.reg, weights.rbe})
      if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("train: loss weights must be finite and >= 0");
  }

  ArchConfig arch(const Manifest& m) const {
    ArchConfig a;
    a.input_dim = m.feature_dim;
    a.backbone_widths = backbone_widths;
    a.depth1 = depth1;
    a.depth2 = depth2;
    a.num_classes = m.seen_class_ids.size();
    return a;
  }
};

struct MetaBatch {
  SampleRefs omega_a, omega_b, omega_a_star, omega_b_star;
  std::vector<int> reserved_classes;  // {c_i, c_j}
  PartitionDomains domains;

  SampleRefs meta_train() const {
    SampleRefs out = omega_a;
    out.insert(out.end(), omega_b.begin(), omega_b.end());
    return out;
  }
  SampleRefs meta_test() const {
    SampleRefs out = omega_a_star;
    out.insert(out.end(), omega_b_star.begin(), omega_b_star.end());
    return out;
  }
};

/// Throws std::logic_error when a set leaves its (class-set x domain-set) cells.
inline void check_meta_batch(const MetaBatch& b) {
  const std::set<int> reserved(b.reserved_classes.begin(), b.reserved_classes.end());
  const int ds = b.domains.d_star, di = b.domains.d_i, dj = b.domains.d_j;
  if (reserved.size() != 2) throw std::logic_error("meta batch: need two distinct reserved classes");
  if (ds == di || ds == dj || di == dj) throw std::logic_error("meta batch: partition domains not distinct");
  auto check = [&](const SampleRefs& set, bool want_reserved, bool want_star, const char* name) {
    for (const Sample* s : set) {
      const bool is_reserved = reserved.count(s->class_id) > 0;
      const bool in_star = s->domain_id == ds;
      const bool in_pair = s->domain_id == di || s->domain_id == dj;
      if (is_reserved != want_reserved || (want_star ? !in_star : !in_pair)) {
        throw std::logic_error(str_cat("meta batch: ", name, " holds sample (class ", s->class_id, ", domain ",
                                       s->domain_id, ") outside its cells"));
      }
    }
  };
  check(b.omega_a, true, false, "omega_a");
  check(b.omega_b, false, true, "omega_b");
  check(b.omega_a_star, true, true, "omega_a_star");
  check(b.omega_b_star, false, false, "omega_b_star");
}

inline MetaBatch build_meta_batch(const DomainDataset& ds, SchedulerKind kind, const Networks& nets,
                                  ScheduleState& state, Rng& rng, std::size_t batch_size, std::size_t probe_size) {
  const Manifest& m = ds.manifest();
  if (m.seen_class_ids.size() < 3)
    throw ParameterError(str_cat("meta batch: need at least 3 seen classes, have ", m.seen_class_ids.size()));
  MetaBatch b;
  b.reserved_classes = rng.choose(m.seen_class_ids, 2);
  b.domains = next_partition_domains(kind, ds, nets.main, nets.follower, state, rng, b.reserved_classes, probe_size);
  std::vector<int> rest;
  for (int c : m.seen_class_ids)
    if (c != b.reserved_classes[0] && c != b.reserved_classes[1]) rest.push_back(c);
  const std::vector<int> pair{b.domains.d_i, b.domains.d_j};
  const std::vector<int> star{b.domains.d_star};
  b.omega_a = sample_batch(ds, rng, {pair, b.reserved_classes, batch_size});
  b.omega_b = sample_batch(ds, rng, {star, rest, batch_size});
  b.omega_a_star = sample_batch(ds, rng, {star, b.reserved_classes, batch_size});
  b.omega_b_star = sample_batch(ds, rng, {pair, rest, batch_size});
  check_meta_batch(b);
  return b;
}

inline Tensor one_hot_labels(const SampleRefs& samples, const Manifest& m) {
  const std::size_t c = m.seen_class_ids.size();
  Tensor y = Tensor::zeros({samples.size(), c});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int k = m.seen_index(samples[i]->class_id);
    if (k < 0) throw ParameterError(str_cat("labels: class ", samples[i]->class_id, " is not a seen class"));
    y.at(i, static_cast<std::size_t>(k)) = 1.0;
  }
  return y;
}

/// Quantities that enter the losses without carrying gradient: the L_CLS
/// sample weights, the L_REG target and the kernel bandwidth.
struct DetachedTerms {
  Tensor omega;        // n, clamped follower output
  Tensor conf_target;  // n x 1, mean confidence of the two branches
  double bandwidth = 1.0;
};

inline DetachedTerms detached_terms(const MainOutputs& out, const Var& follower_out, const TrainConfig& cfg) {
  const std::size_t n = follower_out.shape()[0];
  DetachedTerms t{Tensor::zeros({n}), Tensor::zeros({n, 1}), 1.0};
  if (cfg.conf_source == ConfSource::Softmax) {
    const Tensor c1 = conf(out.cls_logits1).value();
    const Tensor c2 = conf(out.cls_logits2).value();
    for (std::size_t i = 0; i < n; ++i) t.conf_target.data[i] = 0.5 * (c1.data[i] + c2.data[i]);
  } else {
    const Tensor e1 = evidential_certainty(out.evidence1.value());
    const Tensor e2 = evidential_certainty(out.evidence2.value());
    for (std::size_t i = 0; i < n; ++i) t.conf_target.data[i] = 0.5 * (e1.data[i] + e2.data[i]);
  }
  for (std::size_t i = 0; i < n; ++i)
    t.omega.data[i] = std::clamp(follower_out.value().data[i], cfg.omega_min, 1.0);
  t.bandwidth = median_bandwidth(out.f1.value(), out.f2.value());
  return t;
}

/// Builds L_CLS, L_REG and L_RBE for one set of samples inside `g`. When
/// `fixed` is given it replaces the detached terms computed from the current
/// forward pass.
inline LossBreakdown compute_losses(Graph& g, Networks& nets, const SampleRefs& samples, const Manifest& m,
                                    const TrainConfig& cfg, const DetachedTerms* fixed = nullptr) {
  Var x = g.constant(features_matrix(samples, m.feature_dim));
  Var y = g.constant(one_hot_labels(samples, m));
  MainOutputs out = forward_main(g, nets.main, x);
  Var follower_out = forward_follower(g, nets.follower, x);
  const DetachedTerms terms = fixed ? *fixed : detached_terms(out, follower_out, cfg);

  LossBreakdown b;
  b.l_reg = follower_loss(follower_out, g.constant(terms.conf_target));
  b.l_cls =
      classification_loss(out.cls_logits1, out.cls_logits2, out.bcls_logits1, out.bcls_logits2, y, terms.omega);
  b.r_rb = rebias_discrepancy(out.f1, out.f2, terms.bandwidth);
  b.l_rbe = evidential_loss(out.evidence1, out.evidence2, y, cfg.use_rb ? std::optional<Var>(b.r_rb) : std::nullopt);
  b.total = add(add(scale(b.l_cls, cfg.weights.cls), scale(b.l_reg, cfg.weights.reg)),
                scale(b.l_rbe, cfg.weights.rbe));
  return b;
}

/// Detached terms evaluated at the current parameters.
inline DetachedTerms detached_terms(const Networks& nets, const SampleRefs& samples, const Manifest& m,
                                    const TrainConfig& cfg) {
  Graph g;
  g.set_no_grad(true);
  Var x = g.constant(features_matrix(samples, m.feature_dim));
  MainOutputs out = forward_main(g, nets.main, x);
  return detached_terms(out, forward_follower(g, nets.follower, x), cfg);
}

inline void check_finite(const LossValues& v, const char* phase) {
  const std::pair<const char*, double> terms[] = {
      {"l_cls", v.l_cls}, {"l_reg", v.l_reg}, {"l_rbe", v.l_rbe}, {"r_rb", v.r_rb}, {"total", v.total}};
  std::string bad;
  for (const auto& [name, value] : terms)
    if (!std::isfinite(value)) bad += str_cat(" ", name, "=", value);
  if (!bad.empty()) {
    std::string dump;
    for (const auto& [name, value] : terms) dump += str_cat(" ", name, "=", value);
    throw NonFiniteLossError(str_cat("non-finite loss in ", phase, ":", bad, " (all terms:", dump, ")"));
  }
}

struct StepLosses {
  LossValues meta_train;          // phase 1, at the parameters on entry
  LossValues meta_test;           // phase 2, at the phase-1 parameters
  LossValues meta_train_updated;  // phase 2, L_m-train recomputed

  LossValues all() const {
    LossValues v = meta_test;
    v += meta_train_updated;
    return v;
  }
};

inline StepLosses meta_step(Networks& nets, const MetaBatch& batch, const Manifest& m, const TrainConfig& cfg,
                            double lr) {
  const auto params = nets.parameters();
  const SampleRefs train_set = batch.meta_train();
  const SampleRefs test_set = batch.meta_test();
  StepLosses out;
  if (cfg.single_update) {
    Graph g;
    LossBreakdown tr = compute_losses(g, nets, train_set, m, cfg);
    LossBreakdown te = compute_losses(g, nets, test_set, m, cfg);
    out.meta_train = out.meta_train_updated = LossValues::of(tr);
    out.meta_test = LossValues::of(te);
    check_finite(out.meta_train, "meta-train");
    check_finite(out.meta_test, "meta-test");
    g.backward(add(tr.total, te.total));
    sgd_step(params, lr);
    return out;
  }
  {
    Graph g;
    LossBreakdown tr = compute_losses(g, nets, train_set, m, cfg);
    out.meta_train = LossValues::of(tr);
    check_finite(out.meta_train, "meta-train");
    g.backward(tr.total);
    sgd_step(params, lr);
  }
  {
    Graph g;
    LossBreakdown te = compute_losses(g, nets, test_set, m, cfg);
    LossBreakdown tr = compute_losses(g, nets, train_set, m, cfg);
    out.meta_test = LossValues::of(te);
    out.meta_train_updated = LossValues::of(tr);
    check_finite(out.meta_test, "meta-test");
    check_finite(out.meta_train_updated, "meta-train (updated)");
    g.backward(add(te.total, tr.total));
    sgd_step(params, lr);
  }
  return out;
}

struct TrainRecord {
  std::size_t step = 0;  // 1-based iteration count
  StepLosses losses;
  int selected_domain = 0;
  std::optional<double> val_acc;
  std::optional<double> test_acc;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  std::size_t evaluations() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const TrainRecord& r) { return r.val_acc.has_value(); }));
  }
};

struct TrainResult {
  Networks nets;
  TrainLog log;
  ScheduleState schedule;
};

inline double learning_rate_at(const TrainConfig& cfg, std::size_t iteration) {
  return iteration >= cfg.decay_step ? cfg.lr * cfg.lr_decay : cfg.lr;
}

using StepCallback = std::function<void(const TrainRecord&)>;

inline TrainResult train(const DomainDataset& ds, const TrainConfig& cfg, const StepCallback& on_step = {}) {
  cfg.validate();
  const Manifest& m = ds.manifest();
  TrainResult result{init(cfg.seed, cfg.arch(m)), {}, {}};
  result.schedule.sigma = cfg.sigma;
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  for (std::size_t it = 0; it < cfg.max_steps; ++it) {
    MetaBatch batch = build_meta_batch(ds, cfg.scheduler, result.nets, result.schedule, rng, cfg.batch_size,
                                       cfg.probe_size);
    TrainRecord rec;
    rec.step = it + 1;
    rec.selected_domain = batch.domains.d_star;
    rec.losses = meta_step(result.nets, batch, m, cfg, learning_rate_at(cfg, it));
    if (rec.step % cfg.eval_interval == 0) {
      rec.val_acc = split_accuracy(result.nets.main, ds.val(), m);
      rec.test_acc = split_accuracy(result.nets.main, ds.test(), m);
    }
    if (on_step) on_step(rec);
    result.log.records.push_back(std::move(rec));
  }
  return result;
}

/// One row per iteration; loss columns hold the phase-2 objective L_all and
/// the accuracy columns are filled on evaluation steps only.
inline void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,l_cls,l_reg,l_rbe,r_rb,total,selected_domain,val_acc,test_acc\n";
  for (const auto& r : log.records) {
    const LossValues v = r.losses.all();
    out << r.step << ',' << format_double(v.l_cls) << ',' << format_double(v.l_reg) << ',' << format_double(v.l_rbe)
        << ',' << format_double(v.r_rb) << ',' << format_double(v.total) << ',' << r.selected_domain << ','
        << (r.val_acc ? format_double(*r.val_acc) : "") << ',' << (r.test_acc ? format_double(*r.test_acc) : "")
        << '\n';
  }
}

}  // namespace osdg
