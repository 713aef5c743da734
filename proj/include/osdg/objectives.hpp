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

// Loss terms of the evidential bi-level scheduler.
//
//   R_RB   = E[K(f1,f1)] + E[K(f2,f2)] - 2 E[K(f1,f2)]     (Gaussian kernel, V-statistic)
//   L_RBE  = mean_n sum_i sum_c y_c (log S_i - log(e_ic + 1)) - R_RB,  S_i = sum_c (e_ic + 1)
//   L_CLS  = sum_k [ WCE(cls_k, y, w) + WBCE(bcls_k, y, w) ],           w = omega / sum(omega)
//   L_REG  = MSE(follower(x), detached mean Conf of the two cls heads)

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "osdg/autodiff.hpp"
#include "osdg/common.hpp"

namespace osdg {

struct LossWeights {
  double cls = 1.0;
  double reg = 1e-4;
  double rbe = 5e-4;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  Var l_cls, l_reg, l_rbe, r_rb, total;
};

/// Plain numbers pulled out of a LossBreakdown once the graph is done.
struct LossValues {
  double l_cls = 0, l_reg = 0, l_rbe = 0, r_rb = 0, total = 0;
  bool operator==(const LossValues&) const = default;

  static LossValues of(const LossBreakdown& b) {
    return {b.l_cls.value().item(), b.l_reg.value().item(), b.l_rbe.value().item(), b.r_rb.value().item(),
            b.total.value().item()};
  }
  LossValues& operator+=(const LossValues& o) {
    l_cls += o.l_cls;
    l_reg += o.l_reg;
    l_rbe += o.l_rbe;
    r_rb += o.r_rb;
    total += o.total;
    return *this;
  }
};

/// Median pairwise Euclidean distance over the rows of [f1; f2]. Falls back
/// to 1 when every row coincides.
inline double median_bandwidth(const Tensor& f1, const Tensor& f2) {
  if (f1.rank() != 2 || f2.rank() != 2 || f1.cols() != f2.cols())
    throw DimensionError("median_bandwidth: shapes " + shape_str(f1.shape) + " and " + shape_str(f2.shape));
  const std::size_t p = f1.cols();
  std::vector<const double*> rows;
  for (std::size_t i = 0; i < f1.rows(); ++i) rows.push_back(f1.data.data() + i * p);
  for (std::size_t i = 0; i < f2.rows(); ++i) rows.push_back(f2.data.data() + i * p);
  std::vector<double> dist;
  dist.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < p; ++k) {
        const double diff = rows[i][k] - rows[j][k];
        d2 += diff * diff;
      }
      dist.push_back(std::sqrt(d2));
    }
  }
  if (dist.empty()) return 1.0;
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median > 1e-12 ? median : 1.0;
}

inline Var rebias_discrepancy(Var f1, Var f2, double bandwidth) {
  if (f1.shape() != f2.shape() || f1.shape().size() != 2)
    throw DimensionError("rebias_discrepancy: shapes " + shape_str(f1.shape()) + " and " + shape_str(f2.shape()));
  if (f1.shape()[0] < 2) throw ParameterError("rebias_discrepancy: need at least 2 samples");
  Var k11 = mean(gaussian_gram(f1, f1, bandwidth));
  Var k22 = mean(gaussian_gram(f2, f2, bandwidth));
  Var k12 = mean(gaussian_gram(f1, f2, bandwidth));
  return sub(add(k11, k22), scale(k12, 2.0));
}

namespace detail {

inline void check_one_hot(const Var& y, const Shape& like, const char* who) {
  if (y.shape() != like) {
    throw DimensionError(str_cat(who, ": labels ", shape_str(y.shape()), " do not match ", shape_str(like)));
  }
  const Tensor& t = y.value();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const double v = t.at(r, c);
      if (v != 0.0 && v != 1.0) throw ParameterError(str_cat(who, ": label row ", r, " is not one-hot"));
      total += v;
    }
    if (total != 1.0) throw ParameterError(str_cat(who, ": label row ", r, " is not one-hot"));
  }
}

inline Var branch_evidential(Var evidence, Var y) {
  Var alpha = add_scalar(evidence, 1.0);
  Var log_strength = log(sum(alpha, 1, true));              // n x 1
  Var per_class = sub(log_strength, log(alpha));            // n x C
  return sum(mul(y, per_class));
}

}  // namespace detail

/// Evidential term with an optional precomputed discrepancy to subtract.
inline Var evidential_loss(Var evidence1, Var evidence2, Var y, std::optional<Var> r_rb) {
  if (evidence1.shape() != evidence2.shape() || evidence1.shape().size() != 2)
    throw DimensionError("evidential_loss: evidence shapes " + shape_str(evidence1.shape()) + " and " +
                         shape_str(evidence2.shape()));
  detail::check_one_hot(y, evidence1.shape(), "evidential_loss");
  for (const Var* e : {&evidence1, &evidence2}) {
    const auto& v = e->value().data;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!(v[i] >= 0.0)) throw ParameterError(str_cat("evidential_loss: negative evidence ", v[i], " at index ", i));
  }
  const double n = static_cast<double>(evidence1.shape()[0]);
  Var loss = scale(add(detail::branch_evidential(evidence1, y), detail::branch_evidential(evidence2, y)), 1.0 / n);
  if (r_rb) loss = sub(loss, *r_rb);
  return loss;
}

inline Var evidential_loss(Var evidence1, Var evidence2, Var y, Var f1, Var f2, double bandwidth) {
  return evidential_loss(evidence1, evidence2, y, rebias_discrepancy(f1, f2, bandwidth));
}

/// Maximum softmax probability per row, n x 1.
inline Var conf(Var logits) {
  if (logits.shape().size() != 2 || logits.shape()[1] < 2)
    throw DimensionError("conf: expected n x C logits with C >= 2, got " + shape_str(logits.shape()));
  return max_over_axis(softmax(logits, 1), 1, true).values;
}

/// Evidential certainty 1 - C / S per row, n x 1 (values only).
inline Tensor evidential_certainty(const Tensor& evidence) {
  const std::size_t n = evidence.rows(), c = evidence.cols();
  Tensor out = Tensor::zeros({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += evidence.at(r, k) + 1.0;
    out.data[r] = 1.0 - static_cast<double>(c) / s;
  }
  return out;
}

/// MSE against a target that is always detached from its producer.
inline Var follower_loss(Var follower_out, Var conf_target) {
  if (follower_out.shape() != conf_target.shape())
    throw DimensionError("follower_loss: shapes " + shape_str(follower_out.shape()) + " and " +
                         shape_str(conf_target.shape()));
  Var target = detach(conf_target);
  return mean(square(sub(follower_out, target)));
}

/// Sum over both branches of sample-weighted softmax CE and one-vs-all BCE.
/// Weights are normalized to sum to one; the BCE averages the C binary terms.
inline Var classification_loss(Var cls_logits1, Var cls_logits2, Var bcls_logits1, Var bcls_logits2, Var y,
                               const Tensor& omega) {
  const Shape& shape = cls_logits1.shape();
  for (const Var* v : {&cls_logits2, &bcls_logits1, &bcls_logits2}) {
    if (v->shape() != shape)
      throw DimensionError("classification_loss: logits " + shape_str(v->shape()) + " vs " + shape_str(shape));
  }
  detail::check_one_hot(y, shape, "classification_loss");
  const std::size_t n = shape[0];
  if (omega.size() != n)
    throw DimensionError(str_cat("classification_loss: ", omega.size(), " weights for ", n, " samples"));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(omega.data[i] > 0.0) || !std::isfinite(omega.data[i]))
      throw ParameterError(str_cat("classification_loss: weight ", omega.data[i], " at index ", i, " must be > 0"));
    total += omega.data[i];
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = omega.data[i] / total;
  Graph& g = y.graph();
  Var weights = g.constant(Tensor({n}, std::move(w)));

  auto weighted_ce = [&](Var z) {
    Var per = sum(mul(y, sub(logsumexp(z, 1, true), z)), 1);
    return sum(mul(per, weights));
  };
  auto weighted_bce = [&](Var z) {
    Var per = mean(sub(softplus(z), mul(y, z)), 1);
    return sum(mul(per, weights));
  };
  return add(add(weighted_ce(cls_logits1), weighted_bce(bcls_logits1)),
             add(weighted_ce(cls_logits2), weighted_bce(bcls_logits2)));
}

}  // namespace osdg
