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

// Main network (backbone, two rebias branches, per-branch evidence / cls /
// bcls heads) and the follower network (same backbone shape, independent
// weights, one sigmoid regression head).

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "osdg/autodiff.hpp"
#include "osdg/common.hpp"

namespace osdg {

struct ArchConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> backbone_widths{64, 64};
  int depth1 = 2;
  int depth2 = 1;
  std::size_t num_classes = 6;  // seen classes

  bool operator==(const ArchConfig&) const = default;

  std::size_t embedding_dim() const { return backbone_widths.back(); }

  void validate() const {
    if (input_dim == 0) throw ParameterError("arch: input_dim must be >= 1");
    if (backbone_widths.empty()) throw ParameterError("arch: backbone needs at least one layer");
    for (std::size_t w : backbone_widths)
      if (w == 0) throw ParameterError("arch: layer widths must be >= 1");
    for (int d : {depth1, depth2})
      if (d != 1 && d != 2)
        throw ParameterError(str_cat("arch: rebias branch depth must be 1 or 2, got ", d));
    if (num_classes < 2) throw ParameterError("arch: need at least 2 output classes");
  }
};

struct Dense {
  Parameter weight;  // in x out
  Parameter bias;    // out

  std::size_t in_dim() const { return weight.value.shape[0]; }
  std::size_t out_dim() const { return weight.value.shape[1]; }

  template <typename Self>
  static Var apply(Graph& g, Self& layer, Var x) {
    return add(matmul(x, g.param(layer.weight)), g.param(layer.bias));
  }
};

struct MainNetwork {
  std::vector<Dense> backbone;
  std::vector<Dense> branch1;
  std::vector<Dense> branch2;
  Dense evidence1, evidence2;
  Dense cls1, cls2;
  Dense bcls1, bcls2;

  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& l : backbone) f(l);
    for (auto& l : branch1) f(l);
    for (auto& l : branch2) f(l);
    for (Dense* l : {&evidence1, &evidence2, &cls1, &cls2, &bcls1, &bcls2}) f(*l);
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for_each_layer([&](Dense& l) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    });
    return out;
  }
};

struct FollowerNetwork {
  std::vector<Dense> backbone;
  Dense head;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : backbone) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
  }
};

struct Networks {
  ArchConfig arch;
  MainNetwork main;
  FollowerNetwork follower;

  std::vector<Parameter*> parameters() {
    auto out = main.parameters();
    for (Parameter* p : follower.parameters()) out.push_back(p);
    return out;
  }
};

inline std::size_t parameter_count(std::span<Parameter* const> params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

namespace detail {

inline Dense make_dense(const std::string& name, std::size_t in, std::size_t out, double bound, Rng& rng) {
  Dense d;
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  d.weight = Parameter{name + ".weight", Tensor({in, out}, std::move(w)), std::nullopt};
  d.bias = Parameter{name + ".bias", Tensor::zeros({out}), std::nullopt};
  return d;
}

// Hidden relu layers use bound sqrt(6 / fan_in); output heads sqrt(1 / fan_in).
inline double hidden_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
inline double head_bound(std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

inline std::vector<Dense> make_backbone(const std::string& prefix, const ArchConfig& arch, Rng& rng) {
  std::vector<Dense> layers;
  std::size_t in = arch.input_dim;
  for (std::size_t i = 0; i < arch.backbone_widths.size(); ++i) {
    const std::size_t out = arch.backbone_widths[i];
    layers.push_back(make_dense(str_cat(prefix, ".", i), in, out, hidden_bound(in), rng));
    in = out;
  }
  return layers;
}

template <typename Layers>
Var relu_stack(Graph& g, Layers& layers, Var x) {
  for (auto& l : layers) x = relu(Dense::apply(g, l, x));
  return x;
}

inline void check_input(const Var& x, std::size_t dim, const char* who) {
  if (x.shape().size() != 2 || x.shape()[1] != dim) {
    throw DimensionError(str_cat(who, ": expected input n x ", dim, ", got ", shape_str(x.shape())));
  }
}

}  // namespace detail

/// Deterministic initialization; the main network is drawn before the follower.
inline Networks init(std::uint64_t seed, const ArchConfig& arch) {
  arch.validate();
  Rng rng(seed);
  Networks nets;
  nets.arch = arch;
  const std::size_t h = arch.embedding_dim();
  const std::size_t c = arch.num_classes;
  auto& m = nets.main;
  m.backbone = detail::make_backbone("backbone", arch, rng);
  for (int i = 0; i < arch.depth1; ++i)
    m.branch1.push_back(detail::make_dense(str_cat("branch1.", i), h, h, detail::hidden_bound(h), rng));
  for (int i = 0; i < arch.depth2; ++i)
    m.branch2.push_back(detail::make_dense(str_cat("branch2.", i), h, h, detail::hidden_bound(h), rng));
  m.evidence1 = detail::make_dense("evidence1", h, c, detail::head_bound(h), rng);
  m.evidence2 = detail::make_dense("evidence2", h, c, detail::head_bound(h), rng);
  m.cls1 = detail::make_dense("cls1", h, c, detail::head_bound(h), rng);
  m.cls2 = detail::make_dense("cls2", h, c, detail::head_bound(h), rng);
  m.bcls1 = detail::make_dense("bcls1", h, c, detail::head_bound(h), rng);
  m.bcls2 = detail::make_dense("bcls2", h, c, detail::head_bound(h), rng);
  nets.follower.backbone = detail::make_backbone("follower.backbone", arch, rng);
  nets.follower.head = detail::make_dense("follower.head", h, 1, detail::head_bound(h), rng);
  return nets;
}

struct MainOutputs {
  Var f1, f2;
  Var evidence1, evidence2;
  Var cls_logits1, cls_logits2;
  Var bcls_logits1, bcls_logits2;
};

/// Works for both mutable networks (trainable) and const networks (frozen).
template <typename Net>
  requires std::is_same_v<std::remove_const_t<Net>, MainNetwork>
MainOutputs forward_main(Graph& g, Net& net, Var x) {
  detail::check_input(x, net.backbone.front().in_dim(), "forward_main");
  Var z = detail::relu_stack(g, net.backbone, x);
  MainOutputs out;
  out.f1 = detail::relu_stack(g, net.branch1, z);
  out.f2 = detail::relu_stack(g, net.branch2, z);
  out.evidence1 = softplus(Dense::apply(g, net.evidence1, out.f1));
  out.evidence2 = softplus(Dense::apply(g, net.evidence2, out.f2));
  out.cls_logits1 = Dense::apply(g, net.cls1, out.f1);
  out.cls_logits2 = Dense::apply(g, net.cls2, out.f2);
  out.bcls_logits1 = Dense::apply(g, net.bcls1, out.f1);
  out.bcls_logits2 = Dense::apply(g, net.bcls2, out.f2);
  return out;
}

template <typename Net>
  requires std::is_same_v<std::remove_const_t<Net>, FollowerNetwork>
Var forward_follower(Graph& g, Net& net, Var x) {
  detail::check_input(x, net.backbone.front().in_dim(), "forward_follower");
  Var z = detail::relu_stack(g, net.backbone, x);
  return sigmoid(Dense::apply(g, net.head, z));
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"input_dim", a.input_dim},
          {"backbone_widths", a.backbone_widths},
          {"depth1", a.depth1},
          {"depth2", a.depth2},
          {"num_classes", a.num_classes}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.backbone_widths = j.at("backbone_widths").get<std::vector<std::size_t>>();
  a.depth1 = j.at("depth1").get<int>();
  a.depth2 = j.at("depth2").get<int>();
  a.num_classes = j.at("num_classes").get<std::size_t>();
  return a;
}

inline nlohmann::json checkpoint_to_json(Networks& nets) {
  nlohmann::json params = nlohmann::json::object();
  for (Parameter* p : nets.parameters())
    params[p->name] = {{"shape", p->value.shape}, {"data", p->value.data}};
  return {{"format", "osdg-checkpoint"}, {"version", 1}, {"arch", arch_to_json(nets.arch)}, {"parameters", params}};
}

inline Networks checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "osdg-checkpoint") throw IngestionError("checkpoint: unrecognized format");
  Networks nets = init(0, arch_from_json(j.at("arch")));
  const auto& params = j.at("parameters");
  for (Parameter* p : nets.parameters()) {
    if (!params.contains(p->name)) throw IngestionError("checkpoint: missing parameter " + p->name);
    const auto& entry = params.at(p->name);
    auto shape = entry.at("shape").get<Shape>();
    if (shape != p->value.shape) {
      throw IngestionError("checkpoint: parameter " + p->name + " has shape " + shape_str(shape) +
                           ", architecture expects " + shape_str(p->value.shape));
    }
    p->value = Tensor(std::move(shape), entry.at("data").get<std::vector<double>>());
  }
  return nets;
}

inline void save_checkpoint(Networks& nets, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(nets).dump() << '\n';
}

inline Networks load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("checkpoint: cannot open " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("checkpoint " + path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw IngestionError("checkpoint " + path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw IngestionError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace osdg
