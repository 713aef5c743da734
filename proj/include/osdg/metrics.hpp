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

// Open-set evaluation: close-set accuracy, H-score at a validation-derived
// threshold, and OSCR (area under CCR vs. FPR over a moving threshold).

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "osdg/autodiff.hpp"
#include "osdg/dataset.hpp"
#include "osdg/network.hpp"

namespace osdg {

enum class Head { Cls, Bcls };

inline const char* head_name(Head h) { return h == Head::Cls ? "cls" : "bcls"; }

struct HeadPrediction {
  int predicted = 0;  // seen class id
  double confidence = 0.0;
};

struct Predictions {
  std::vector<HeadPrediction> cls;
  std::vector<HeadPrediction> bcls;
};

/// cls track: argmax / max-softmax of the branch-averaged cls logits.
/// bcls track: argmax / sigmoid of the max branch-averaged bcls logit.
/// Logits are averaged before any squashing.
inline Predictions predict(const MainNetwork& net, const Tensor& x, const std::vector<int>& seen_class_ids) {
  Graph g;
  g.set_no_grad(true);
  MainOutputs out = forward_main(g, net, g.constant(x));
  const Tensor& c1 = out.cls_logits1.value();
  const Tensor& c2 = out.cls_logits2.value();
  const Tensor& b1 = out.bcls_logits1.value();
  const Tensor& b2 = out.bcls_logits2.value();
  const std::size_t n = c1.rows(), c = c1.cols();
  if (seen_class_ids.size() != c)
    throw DimensionError(str_cat("predict: network has ", c, " outputs but ", seen_class_ids.size(), " seen classes"));
  Predictions p;
  p.cls.resize(n);
  p.bcls.resize(n);
  std::vector<double> avg(c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < c; ++k) avg[k] = 0.5 * (c1.at(r, k) + c2.at(r, k));
    std::size_t arg = static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(avg[k] - avg[arg]);
    p.cls[r] = {seen_class_ids[arg], 1.0 / z};

    for (std::size_t k = 0; k < c; ++k) avg[k] = 0.5 * (b1.at(r, k) + b2.at(r, k));
    arg = static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
    p.bcls[r] = {seen_class_ids[arg], detail::stable_sigmoid(avg[arg])};
  }
  return p;
}

struct PredictionRecord {
  std::size_t sample_id = 0;
  int true_class = 0;
  bool unknown = false;
  int predicted = 0;
  double confidence = 0.0;
  Head head = Head::Cls;

  bool correct() const { return !unknown && predicted == true_class; }
};

inline double close_set_accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ParameterError("close_set_accuracy: no records");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.unknown) throw ParameterError("close_set_accuracy: record for an unseen class");
    hits += r.correct() ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Empirical q-quantile with linear interpolation between order statistics.
inline double derive_lambda(std::vector<double> confidences, double q = 0.05) {
  if (confidences.empty()) throw ParameterError("derive_lambda: no validation confidences");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError(str_cat("derive_lambda: quantile ", q, " outside [0, 1]"));
  std::sort(confidences.begin(), confidences.end());
  const double pos = q * static_cast<double>(confidences.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, confidences.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return confidences[lo] + frac * (confidences[hi] - confidences[lo]);
}

namespace detail {

inline std::pair<std::size_t, std::size_t> population(std::span<const PredictionRecord> records, const char* who) {
  std::size_t known = 0, unknown = 0;
  for (const auto& r : records) (r.unknown ? unknown : known) += 1;
  if (known == 0 || unknown == 0)
    throw ParameterError(str_cat(who, ": need both known and unknown records (have ", known, " known, ", unknown,
                                 " unknown)"));
  return {known, unknown};
}

}  // namespace detail

/// With `known_rejection_is_error`, Acc_k counts knowns that are both
/// accepted (conf >= lambda) and correct over all knowns; otherwise it is the
/// accuracy among accepted knowns only.
inline double h_score(std::span<const PredictionRecord> records, double lambda, bool known_rejection_is_error = true) {
  const auto [n_known, n_unknown] = detail::population(records, "h_score");
  std::size_t known_hits = 0, known_accepted = 0, unknown_rejected = 0;
  for (const auto& r : records) {
    const bool accepted = r.confidence >= lambda;
    if (r.unknown) {
      unknown_rejected += accepted ? 0 : 1;
    } else if (accepted) {
      ++known_accepted;
      known_hits += r.correct() ? 1 : 0;
    }
  }
  double acc_k = 0.0;
  if (known_rejection_is_error) {
    acc_k = static_cast<double>(known_hits) / static_cast<double>(n_known);
  } else if (known_accepted > 0) {
    acc_k = static_cast<double>(known_hits) / static_cast<double>(known_accepted);
  }
  const double acc_u = static_cast<double>(unknown_rejected) / static_cast<double>(n_unknown);
  if (acc_k + acc_u == 0.0) return 0.0;
  return 2.0 * acc_k * acc_u / (acc_k + acc_u);
}

enum class OscrIntegration { Trapezoid, Step };

inline OscrIntegration parse_oscr_integration(const std::string& s) {
  if (s == "trapezoid") return OscrIntegration::Trapezoid;
  if (s == "step") return OscrIntegration::Step;
  throw ParameterError("unknown OSCR integration '" + s + "' (expected trapezoid|step)");
}

inline std::string to_string(OscrIntegration i) { return i == OscrIntegration::Trapezoid ? "trapezoid" : "step"; }

/// Integrates an OSCR curve given as (FPR, CCR) points in sweep order.
/// The curve is extended flat to FPR = 0 and closed at FPR = 1.
inline double integrate_oscr_curve(std::vector<std::pair<double, double>> pts, double ccr_all,
                                   OscrIntegration mode) {
  std::sort(pts.begin(), pts.end());
  if (pts.empty() || pts.front().first > 0.0) {
    const double y0 = pts.empty() ? ccr_all : pts.front().second;
    pts.insert(pts.begin(), {0.0, y0});
  }
  if (pts.back().first < 1.0) pts.emplace_back(1.0, ccr_all);
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double w = pts[k + 1].first - pts[k].first;
    area += mode == OscrIntegration::Trapezoid ? w * 0.5 * (pts[k].second + pts[k + 1].second)
                                               : w * pts[k + 1].second;
  }
  return area;
}

/// Thresholds sweep every distinct confidence; a sample counts at threshold
/// theta when conf >= theta.
inline double oscr(std::span<const PredictionRecord> records, OscrIntegration mode = OscrIntegration::Trapezoid) {
  const auto [n_known, n_unknown] = detail::population(records, "oscr");
  std::vector<const PredictionRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const PredictionRecord* a, const PredictionRecord* b) { return a->confidence > b->confidence; });
  std::vector<std::pair<double, double>> pts;
  std::size_t cc = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double theta = order[i]->confidence;
    while (i < order.size() && order[i]->confidence == theta) {
      if (order[i]->unknown) ++fp;
      else if (order[i]->correct()) ++cc;
      ++i;
    }
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(n_unknown),
                     static_cast<double>(cc) / static_cast<double>(n_known));
  }
  return integrate_oscr_curve(std::move(pts), static_cast<double>(cc) / static_cast<double>(n_known), mode);
}

// ---------------------------------------------------------------------------
// Reports

struct EvalOptions {
  double lambda_quantile = 0.05;
  bool known_rejection_is_error = true;
  OscrIntegration integration = OscrIntegration::Trapezoid;
};

struct EvalReport {
  Head head = Head::Cls;
  double acc = 0, h_score = 0, oscr = 0, lambda = 0;
  std::size_t n_known = 0, n_unknown = 0;
  std::vector<PredictionRecord> records;

  nlohmann::json to_json() const {
    return {{"head", head_name(head)}, {"acc", acc},         {"h_score", h_score},    {"oscr", oscr},
            {"lambda", lambda},        {"n_known", n_known}, {"n_unknown", n_unknown}};
  }
};

inline std::vector<PredictionRecord> make_records(const std::vector<Sample>& samples,
                                                  const std::vector<HeadPrediction>& preds, const Manifest& m,
                                                  Head head) {
  std::vector<PredictionRecord> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = {i, samples[i].class_id, !m.is_seen(samples[i].class_id), preds[i].predicted, preds[i].confidence, head};
  }
  return out;
}

/// Batched prediction over a sample list.
inline Predictions predict_samples(const MainNetwork& net, const std::vector<Sample>& samples, const Manifest& m,
                                   std::size_t chunk = 512) {
  Predictions all;
  SampleRefs r = refs(samples);
  for (std::size_t start = 0; start < r.size(); start += chunk) {
    const std::size_t end = std::min(r.size(), start + chunk);
    std::span<const Sample* const> part(r.data() + start, end - start);
    Predictions p = predict(net, features_matrix(part, m.feature_dim), m.seen_class_ids);
    all.cls.insert(all.cls.end(), p.cls.begin(), p.cls.end());
    all.bcls.insert(all.bcls.end(), p.bcls.begin(), p.bcls.end());
  }
  return all;
}

/// Close-set accuracy (cls track) over the seen-class samples of a split.
inline double split_accuracy(const MainNetwork& net, const std::vector<Sample>& samples, const Manifest& m) {
  std::vector<Sample> known;
  for (const Sample& s : samples)
    if (m.is_seen(s.class_id)) known.push_back(s);
  if (known.empty()) return 0.0;
  Predictions p = predict_samples(net, known, m);
  auto records = make_records(known, p.cls, m, Head::Cls);
  return close_set_accuracy(records);
}

/// Evaluates the held-out test split on both heads; lambda comes from the
/// source validation split (or the training split when no validation exists).
inline std::vector<EvalReport> evaluate(const DomainDataset& ds, const MainNetwork& net, const EvalOptions& opt = {}) {
  const Manifest& m = ds.manifest();
  const auto& calib = ds.val().empty() ? ds.train() : ds.val();
  Predictions cal = predict_samples(net, calib, m);
  Predictions test = predict_samples(net, ds.test(), m);
  std::vector<EvalReport> reports;
  for (Head head : {Head::Cls, Head::Bcls}) {
    const auto& cal_preds = head == Head::Cls ? cal.cls : cal.bcls;
    const auto& test_preds = head == Head::Cls ? test.cls : test.bcls;
    std::vector<double> cal_conf;
    for (const auto& p : cal_preds) cal_conf.push_back(p.confidence);
    EvalReport rep;
    rep.head = head;
    rep.lambda = derive_lambda(cal_conf, opt.lambda_quantile);
    rep.records = make_records(ds.test(), test_preds, m, head);
    std::vector<PredictionRecord> known;
    for (const auto& r : rep.records) (r.unknown ? rep.n_unknown : rep.n_known) += 1;
    for (const auto& r : rep.records)
      if (!r.unknown) known.push_back(r);
    rep.acc = known.empty() ? 0.0 : close_set_accuracy(known);
    rep.h_score = h_score(rep.records, rep.lambda, opt.known_rejection_is_error);
    rep.oscr = oscr(rep.records, opt.integration);
    reports.push_back(std::move(rep));
  }
  return reports;
}

inline void write_eval_report(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,head,true_class,is_unseen,predicted,confidence\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.records)
      out << r.sample_id << ',' << head_name(r.head) << ',' << r.true_class << ',' << (r.unknown ? 1 : 0) << ','
          << r.predicted << ',' << format_double(r.confidence) << '\n';
}

/// Rows: sample_id,true_class,domain,is_unseen,f1_0..f1_{h-1},f2_0..f2_{h-1}.
inline void export_embeddings(const MainNetwork& net, const std::vector<Sample>& samples, const Manifest& m,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t h = net.branch1.back().out_dim();
  out << "sample_id,true_class,domain,is_unseen";
  for (std::size_t k = 0; k < h; ++k) out << ",f1_" << k;
  for (std::size_t k = 0; k < h; ++k) out << ",f2_" << k;
  out << '\n';
  SampleRefs r = refs(samples);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < r.size(); start += kChunk) {
    const std::size_t end = std::min(r.size(), start + kChunk);
    std::span<const Sample* const> part(r.data() + start, end - start);
    Graph g;
    g.set_no_grad(true);
    MainOutputs o = forward_main(g, net, g.constant(features_matrix(part, m.feature_dim)));
    const Tensor& f1 = o.f1.value();
    const Tensor& f2 = o.f2.value();
    for (std::size_t i = 0; i < part.size(); ++i) {
      const Sample& s = *part[i];
      std::string line = str_cat(start + i, ',', s.class_id, ',', s.domain_id, ',', m.is_seen(s.class_id) ? 0 : 1);
      for (std::size_t k = 0; k < h; ++k) line += "," + format_double(f1.at(i, k));
      for (std::size_t k = 0; k < h; ++k) line += "," + format_double(f2.at(i, k));
      out << line << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace osdg
