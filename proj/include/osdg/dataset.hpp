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

// Synthetic multi-domain open-set datasets and their on-disk format.
//
// Every domain is an affine view of one shared set of class prototypes:
//   x = s_d * Q_d * (mu_c + eps) + b_d,   eps ~ N(0, (sigma_class * noise_d)^2 I)
// where Q_d is a product of Givens rotations. One domain is held out; its
// test split carries both seen and unseen classes.
//
// Directory layout: manifest.json, train.csv, val.csv, test.csv. Each CSV
// starts with a header row followed by `class_id,domain_id,f_0,...,f_{p-1}`.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "osdg/common.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

enum class Difficulty { Easy, Medium, Hard };

inline std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "easy";
}

inline Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "medium") return Difficulty::Medium;
  if (s == "hard") return Difficulty::Hard;
  throw ParameterError("unknown difficulty '" + s + "' (expected easy|medium|hard)");
}

struct GeneratorParams {
  double prototype_radius = 4.0;
  double class_noise = 0.5;           // sigma_class
  double max_rotation = 0.15;         // radians per Givens rotation
  std::size_t rotations_per_domain = 4;
  double scale_jitter = 0.1;          // s_d in [1 - j, 1 + j]
  double bias_scale = 0.2;            // b_d ~ N(0, bias_scale^2 I)
  double noise_jitter = 0.2;          // noise_d in [1 - j, 1 + j]

  bool operator==(const GeneratorParams&) const = default;
};

inline GeneratorParams difficulty_params(Difficulty d) {
  GeneratorParams p;
  switch (d) {
    case Difficulty::Easy:
      break;
    case Difficulty::Medium:
      p.prototype_radius = 3.0;
      p.class_noise = 0.7;
      p.max_rotation = 0.3;
      p.scale_jitter = 0.2;
      p.bias_scale = 0.4;
      break;
    case Difficulty::Hard:
      p.prototype_radius = 2.5;
      p.class_noise = 0.9;
      p.max_rotation = 0.6;
      p.scale_jitter = 0.3;
      p.bias_scale = 0.6;
      break;
  }
  return p;
}

struct GenerateOptions {
  std::uint64_t seed = 1;
  int num_domains = 4;
  int num_classes = 10;
  int num_unseen_classes = 4;
  std::size_t feature_dim = 16;
  std::size_t samples_per_cell = 200;
  Difficulty difficulty = Difficulty::Easy;
  double val_fraction = 0.1;
  int held_out_domain = -1;  // -1 selects the last domain
  std::optional<double> class_noise;  // overrides the difficulty preset

  bool operator==(const GenerateOptions&) const = default;
};

struct Rotation {
  std::size_t i = 0, j = 1;
  double angle = 0.0;
  bool operator==(const Rotation&) const = default;
};

struct DomainSpec {
  std::vector<Rotation> rotations;
  double scale = 1.0;
  std::vector<double> bias;
  double noise = 1.0;

  bool operator==(const DomainSpec&) const = default;

  // v <- Q v, applying the Givens rotations in order.
  void rotate(std::span<double> v) const {
    for (const Rotation& r : rotations) {
      const double c = std::cos(r.angle), s = std::sin(r.angle);
      const double a = v[r.i], b = v[r.j];
      v[r.i] = c * a - s * b;
      v[r.j] = s * a + c * b;
    }
  }

  Tensor matrix(std::size_t dim) const {
    Tensor q = Tensor::zeros({dim, dim});
    std::vector<double> col(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      std::fill(col.begin(), col.end(), 0.0);
      col[c] = 1.0;
      rotate(col);
      for (std::size_t r = 0; r < dim; ++r) q.at(r, c) = col[r];
    }
    return q;
  }
};

struct GeneratorInfo {
  GenerateOptions options;
  GeneratorParams params;
  std::vector<std::vector<double>> prototypes;
  std::vector<DomainSpec> domains;

  bool operator==(const GeneratorInfo&) const = default;
};

struct Manifest {
  std::size_t feature_dim = 0;
  std::vector<std::string> domain_names;
  std::vector<std::string> class_names;
  std::vector<int> seen_class_ids;
  std::vector<int> unseen_class_ids;
  int held_out_domain_id = 0;
  std::optional<GeneratorInfo> generator;

  bool operator==(const Manifest&) const = default;

  int num_domains() const { return static_cast<int>(domain_names.size()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<int> source_domains() const {
    std::vector<int> out;
    for (int d = 0; d < num_domains(); ++d)
      if (d != held_out_domain_id) out.push_back(d);
    return out;
  }

  bool is_seen(int class_id) const {
    return std::find(seen_class_ids.begin(), seen_class_ids.end(), class_id) != seen_class_ids.end();
  }

  /// Position of a seen class among the classifier outputs, or -1.
  int seen_index(int class_id) const {
    auto it = std::find(seen_class_ids.begin(), seen_class_ids.end(), class_id);
    return it == seen_class_ids.end() ? -1 : static_cast<int>(it - seen_class_ids.begin());
  }

  /// Throws ParameterError describing the first broken invariant.
  void validate() const {
    if (feature_dim == 0) throw ParameterError("manifest: feature_dim must be positive");
    if (domain_names.empty()) throw ParameterError("manifest: no domains");
    if (class_names.empty()) throw ParameterError("manifest: no classes");
    if (held_out_domain_id < 0 || held_out_domain_id >= num_domains()) {
      throw ParameterError(str_cat("manifest: held_out_domain_id ", held_out_domain_id, " out of range"));
    }
    std::set<int> seen;
    for (int c : seen_class_ids) {
      if (c < 0 || c >= num_classes()) throw ParameterError(str_cat("manifest: seen class id ", c, " out of range"));
      if (!seen.insert(c).second) throw ParameterError(str_cat("manifest: duplicate seen class id ", c));
    }
    std::set<int> all = seen;
    for (int c : unseen_class_ids) {
      if (c < 0 || c >= num_classes()) throw ParameterError(str_cat("manifest: unseen class id ", c, " out of range"));
      if (seen.count(c)) throw ParameterError(str_cat("manifest: class id ", c, " is both seen and unseen"));
      if (!all.insert(c).second) throw ParameterError(str_cat("manifest: duplicate unseen class id ", c));
    }
    if (static_cast<int>(all.size()) != num_classes()) {
      throw ParameterError("manifest: seen and unseen class ids do not cover all classes");
    }
    if (seen_class_ids.empty()) throw ParameterError("manifest: no seen classes");
  }
};

struct Sample {
  std::vector<double> features;
  int class_id = 0;
  int domain_id = 0;
  bool operator==(const Sample&) const = default;
};

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParameterError("unknown split '" + s + "' (expected train|val|test)");
}

using CellKey = std::pair<int, int>;  // (domain, class)

class DomainDataset {
 public:
  DomainDataset(Manifest manifest, std::vector<Sample> train, std::vector<Sample> val,
                std::vector<Sample> test)
      : manifest_(std::move(manifest)), train_(std::move(train)), val_(std::move(val)), test_(std::move(test)) {
    manifest_.validate();
    for (const auto* split : {&train_, &val_, &test_}) {
      for (const Sample& s : *split) {
        if (s.features.size() != manifest_.feature_dim)
          throw ParameterError("dataset: sample feature length mismatch");
        if (s.class_id < 0 || s.class_id >= manifest_.num_classes() || s.domain_id < 0 ||
            s.domain_id >= manifest_.num_domains())
          throw ParameterError("dataset: sample id out of range");
      }
    }
    for (std::size_t i = 0; i < train_.size(); ++i) {
      const Sample& s = train_[i];
      if (!manifest_.is_seen(s.class_id) || s.domain_id == manifest_.held_out_domain_id) {
        throw ParameterError(str_cat("dataset: training sample ", i, " (class ", s.class_id, ", domain ",
                                     s.domain_id, ") is not a source-domain seen-class sample"));
      }
      train_cells_[{s.domain_id, s.class_id}].push_back(i);
    }
    for (int d : manifest_.source_domains()) {
      for (int c : manifest_.seen_class_ids) {
        if (!train_cells_.count({d, c}))
          throw ParameterError(str_cat("dataset: empty training cell (domain ", d, ", class ", c, ")"));
      }
    }
  }

  const Manifest& manifest() const { return manifest_; }
  const std::vector<Sample>& train() const { return train_; }
  const std::vector<Sample>& val() const { return val_; }
  const std::vector<Sample>& test() const { return test_; }

  const std::vector<Sample>& split(Split s) const {
    switch (s) {
      case Split::Train: return train_;
      case Split::Val: return val_;
      case Split::Test: return test_;
    }
    return train_;
  }

  /// Indices into train() for one (domain, class) cell; empty if absent.
  std::span<const std::size_t> train_cell(int domain, int class_id) const {
    auto it = train_cells_.find({domain, class_id});
    if (it == train_cells_.end()) return {};
    return it->second;
  }

  bool operator==(const DomainDataset& o) const {
    return manifest_ == o.manifest_ && train_ == o.train_ && val_ == o.val_ && test_ == o.test_;
  }

 private:
  Manifest manifest_;
  std::vector<Sample> train_, val_, test_;
  std::map<CellKey, std::vector<std::size_t>> train_cells_;
};

// ---------------------------------------------------------------------------
// Generation

inline DomainDataset generate(const GenerateOptions& opt) {
  if (opt.num_domains < 4) throw ParameterError("generate: need at least 4 domains (3 sources + 1 held out)");
  if (opt.num_classes < 3) throw ParameterError("generate: need at least 3 classes");
  if (opt.num_unseen_classes < 1) throw ParameterError("generate: need at least 1 unseen class");
  if (opt.num_unseen_classes >= opt.num_classes)
    throw ParameterError("generate: unseen classes must be fewer than total classes");
  if (opt.feature_dim < 2) throw ParameterError("generate: feature_dim must be at least 2");
  if (opt.samples_per_cell < 1) throw ParameterError("generate: samples_per_cell must be positive");
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0))
    throw ParameterError("generate: val_fraction must lie in [0, 1)");
  if (opt.held_out_domain < -1 || opt.held_out_domain >= opt.num_domains)
    throw ParameterError("generate: held_out_domain out of range");

  const auto n_val = static_cast<std::size_t>(
      std::llround(opt.val_fraction * static_cast<double>(opt.samples_per_cell)));
  if (n_val >= opt.samples_per_cell)
    throw ParameterError("generate: validation fraction leaves an empty training cell");

  GeneratorParams params = difficulty_params(opt.difficulty);
  if (opt.class_noise) {
    if (*opt.class_noise < 0.0) throw ParameterError("generate: class_noise must be >= 0");
    params.class_noise = *opt.class_noise;
  }

  const std::size_t p = opt.feature_dim;
  Rng rng(opt.seed);

  std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(opt.num_classes));
  for (auto& mu : prototypes) {
    mu.resize(p);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : mu) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm < 1e-12);
    const double f = params.prototype_radius / std::sqrt(norm);
    for (double& v : mu) v *= f;
  }

  std::vector<DomainSpec> domains(static_cast<std::size_t>(opt.num_domains));
  for (auto& spec : domains) {
    for (std::size_t r = 0; r < params.rotations_per_domain; ++r) {
      Rotation rot;
      rot.i = rng.index(p);
      rot.j = rng.index(p - 1);
      if (rot.j >= rot.i) ++rot.j;
      rot.angle = rng.uniform(-params.max_rotation, params.max_rotation);
      spec.rotations.push_back(rot);
    }
    spec.scale = rng.uniform(1.0 - params.scale_jitter, 1.0 + params.scale_jitter);
    spec.bias.resize(p);
    for (double& b : spec.bias) b = params.bias_scale * rng.normal();
    spec.noise = rng.uniform(1.0 - params.noise_jitter, 1.0 + params.noise_jitter);
  }

  Manifest m;
  m.feature_dim = p;
  for (int d = 0; d < opt.num_domains; ++d) m.domain_names.push_back(str_cat("domain_", d));
  for (int c = 0; c < opt.num_classes; ++c) m.class_names.push_back(str_cat("class_", c));
  const int n_seen = opt.num_classes - opt.num_unseen_classes;
  for (int c = 0; c < n_seen; ++c) m.seen_class_ids.push_back(c);
  for (int c = n_seen; c < opt.num_classes; ++c) m.unseen_class_ids.push_back(c);
  m.held_out_domain_id = opt.held_out_domain < 0 ? opt.num_domains - 1 : opt.held_out_domain;
  m.generator = GeneratorInfo{opt, params, prototypes, domains};

  auto draw = [&](int d, int c) {
    const DomainSpec& spec = domains[static_cast<std::size_t>(d)];
    const auto& mu = prototypes[static_cast<std::size_t>(c)];
    Sample s;
    s.class_id = c;
    s.domain_id = d;
    s.features.resize(p);
    const double sd = params.class_noise * spec.noise;
    for (std::size_t k = 0; k < p; ++k) s.features[k] = mu[k] + sd * rng.normal();
    spec.rotate(s.features);
    for (std::size_t k = 0; k < p; ++k) s.features[k] = spec.scale * s.features[k] + spec.bias[k];
    return s;
  };

  std::vector<Sample> train, val, test;
  for (int d = 0; d < opt.num_domains; ++d) {
    if (d == m.held_out_domain_id) {
      for (int c = 0; c < opt.num_classes; ++c)
        for (std::size_t i = 0; i < opt.samples_per_cell; ++i) test.push_back(draw(d, c));
      continue;
    }
    for (int c = 0; c < n_seen; ++c) {
      for (std::size_t i = 0; i < opt.samples_per_cell; ++i) {
        Sample s = draw(d, c);
        (i < opt.samples_per_cell - n_val ? train : val).push_back(std::move(s));
      }
    }
  }
  return DomainDataset(std::move(m), std::move(train), std::move(val), std::move(test));
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json generator_to_json(const GeneratorInfo& g) {
  using nlohmann::json;
  json opts = {{"seed", g.options.seed},
               {"num_domains", g.options.num_domains},
               {"num_classes", g.options.num_classes},
               {"num_unseen_classes", g.options.num_unseen_classes},
               {"feature_dim", g.options.feature_dim},
               {"samples_per_cell", g.options.samples_per_cell},
               {"difficulty", to_string(g.options.difficulty)},
               {"val_fraction", g.options.val_fraction},
               {"held_out_domain", g.options.held_out_domain}};
  opts["class_noise"] = g.options.class_noise ? json(*g.options.class_noise) : json(nullptr);
  json params = {{"prototype_radius", g.params.prototype_radius},
                 {"class_noise", g.params.class_noise},
                 {"max_rotation", g.params.max_rotation},
                 {"rotations_per_domain", g.params.rotations_per_domain},
                 {"scale_jitter", g.params.scale_jitter},
                 {"bias_scale", g.params.bias_scale},
                 {"noise_jitter", g.params.noise_jitter}};
  json domains = json::array();
  for (const auto& d : g.domains) {
    json rots = json::array();
    for (const auto& r : d.rotations) rots.push_back({r.i, r.j, r.angle});
    domains.push_back({{"rotations", rots}, {"scale", d.scale}, {"bias", d.bias}, {"noise", d.noise}});
  }
  return {{"options", opts}, {"params", params}, {"prototypes", g.prototypes}, {"domains", domains}};
}

inline GeneratorInfo generator_from_json(const nlohmann::json& j) {
  GeneratorInfo g;
  const auto& o = j.at("options");
  g.options.seed = o.at("seed").get<std::uint64_t>();
  g.options.num_domains = o.at("num_domains").get<int>();
  g.options.num_classes = o.at("num_classes").get<int>();
  g.options.num_unseen_classes = o.at("num_unseen_classes").get<int>();
  g.options.feature_dim = o.at("feature_dim").get<std::size_t>();
  g.options.samples_per_cell = o.at("samples_per_cell").get<std::size_t>();
  g.options.difficulty = parse_difficulty(o.at("difficulty").get<std::string>());
  g.options.val_fraction = o.at("val_fraction").get<double>();
  g.options.held_out_domain = o.at("held_out_domain").get<int>();
  if (o.contains("class_noise") && !o.at("class_noise").is_null())
    g.options.class_noise = o.at("class_noise").get<double>();
  const auto& p = j.at("params");
  g.params.prototype_radius = p.at("prototype_radius").get<double>();
  g.params.class_noise = p.at("class_noise").get<double>();
  g.params.max_rotation = p.at("max_rotation").get<double>();
  g.params.rotations_per_domain = p.at("rotations_per_domain").get<std::size_t>();
  g.params.scale_jitter = p.at("scale_jitter").get<double>();
  g.params.bias_scale = p.at("bias_scale").get<double>();
  g.params.noise_jitter = p.at("noise_jitter").get<double>();
  g.prototypes = j.at("prototypes").get<std::vector<std::vector<double>>>();
  for (const auto& d : j.at("domains")) {
    DomainSpec spec;
    for (const auto& r : d.at("rotations"))
      spec.rotations.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>()});
    spec.scale = d.at("scale").get<double>();
    spec.bias = d.at("bias").get<std::vector<double>>();
    spec.noise = d.at("noise").get<double>();
    g.domains.push_back(std::move(spec));
  }
  return g;
}

inline void write_split(const std::filesystem::path& path, std::size_t dim, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::string line = "class_id,domain_id";
  for (std::size_t k = 0; k < dim; ++k) line += str_cat(",f_", k);
  out << line << '\n';
  for (const Sample& s : samples) {
    line = std::to_string(s.class_id);
    line += ',';
    line += std::to_string(s.domain_id);
    for (double v : s.features) {
      line += ',';
      line += format_double(v);
    }
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::vector<Sample> read_split(const std::filesystem::path& path, const Manifest& m, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string() + ": cannot open");
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t expected = m.feature_dim + 2;
  auto fail = [&](const std::string& msg) {
    throw IngestionError(str_cat(path.string(), ":", line_no, ": ", msg));
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("class_id", 0) == 0) continue;
    if (line.empty()) continue;
    const auto fields = split_view(line, ',');
    if (fields.size() != expected)
      fail(str_cat("expected ", expected, " fields (", m.feature_dim, " features), got ", fields.size()));
    long long cls = 0, dom = 0;
    if (!parse_int(fields[0], cls)) fail("malformed class_id");
    if (!parse_int(fields[1], dom)) fail("malformed domain_id");
    if (cls < 0 || cls >= m.num_classes()) fail(str_cat("unknown class_id ", cls));
    if (dom < 0 || dom >= m.num_domains()) fail(str_cat("unknown domain_id ", dom));
    Sample s;
    s.class_id = static_cast<int>(cls);
    s.domain_id = static_cast<int>(dom);
    if (split != Split::Test) {
      if (!m.is_seen(s.class_id)) fail(str_cat("unseen class ", cls, " in ", split_name(split), " split"));
      if (s.domain_id == m.held_out_domain_id)
        fail(str_cat("held-out domain ", dom, " in ", split_name(split), " split"));
    }
    s.features.resize(m.feature_dim);
    for (std::size_t k = 0; k < m.feature_dim; ++k) {
      if (!parse_double(fields[k + 2], s.features[k]) || !std::isfinite(s.features[k]))
        fail(str_cat("malformed feature f_", k));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j = {{"format", "osdg-dataset"},
                      {"version", 1},
                      {"feature_dim", m.feature_dim},
                      {"domain_names", m.domain_names},
                      {"class_names", m.class_names},
                      {"seen_class_ids", m.seen_class_ids},
                      {"unseen_class_ids", m.unseen_class_ids},
                      {"held_out_domain_id", m.held_out_domain_id}};
  if (m.generator) j["generator"] = detail::generator_to_json(*m.generator);
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.feature_dim = j.at("feature_dim").get<std::size_t>();
  m.domain_names = j.at("domain_names").get<std::vector<std::string>>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.seen_class_ids = j.at("seen_class_ids").get<std::vector<int>>();
  m.unseen_class_ids = j.at("unseen_class_ids").get<std::vector<int>>();
  m.held_out_domain_id = j.at("held_out_domain_id").get<int>();
  if (j.contains("generator")) m.generator = detail::generator_from_json(j.at("generator"));
  return m;
}

inline void save(const DomainDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest_to_json(ds.manifest()).dump(2) << '\n';
  }
  const std::size_t p = ds.manifest().feature_dim;
  detail::write_split(dir / "train.csv", p, ds.train());
  detail::write_split(dir / "val.csv", p, ds.val());
  detail::write_split(dir / "test.csv", p, ds.test());
}

inline DomainDataset load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IngestionError(manifest_path.string() + ": cannot open");
  Manifest m;
  try {
    m = manifest_from_json(nlohmann::json::parse(in));
    m.validate();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(manifest_path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw IngestionError(manifest_path.string() + ": " + e.what());
  }
  auto train = detail::read_split(dir / "train.csv", m, Split::Train);
  auto val = detail::read_split(dir / "val.csv", m, Split::Val);
  auto test = detail::read_split(dir / "test.csv", m, Split::Test);
  try {
    return DomainDataset(std::move(m), std::move(train), std::move(val), std::move(test));
  } catch (const ParameterError& e) {
    throw IngestionError(dir.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sampling

struct BatchConstraints {
  std::vector<int> domains;
  std::vector<int> classes;
  std::size_t size = 0;
};

using SampleRefs = std::vector<const Sample*>;

/// Uniform draws with replacement from the training samples lying in
/// domains x classes.
inline SampleRefs sample_batch(const DomainDataset& ds, Rng& rng, const BatchConstraints& c) {
  if (c.size == 0) return {};
  std::vector<std::span<const std::size_t>> cells;
  std::vector<std::string> empty;
  std::size_t total = 0;
  for (int d : c.domains) {
    for (int k : c.classes) {
      auto cell = ds.train_cell(d, k);
      if (cell.empty()) empty.push_back(str_cat("(domain ", d, ", class ", k, ")"));
      cells.push_back(cell);
      total += cell.size();
    }
  }
  if (cells.empty()) throw ParameterError("sample_batch: empty constraint set");
  if (!empty.empty()) {
    std::string msg = "sample_batch: empty cells";
    for (const auto& e : empty) msg += " " + e;
    throw ParameterError(msg);
  }
  SampleRefs out;
  out.reserve(c.size);
  for (std::size_t n = 0; n < c.size; ++n) {
    std::size_t r = rng.index(total);
    for (const auto& cell : cells) {
      if (r < cell.size()) {
        out.push_back(&ds.train()[cell[r]]);
        break;
      }
      r -= cell.size();
    }
  }
  return out;
}

/// Stacks sample features into an n x p matrix.
inline Tensor features_matrix(std::span<const Sample* const> samples, std::size_t dim) {
  if (samples.empty()) throw DimensionError("features_matrix: empty batch");
  std::vector<double> data;
  data.reserve(samples.size() * dim);
  for (const Sample* s : samples) data.insert(data.end(), s->features.begin(), s->features.end());
  return Tensor({samples.size(), dim}, std::move(data));
}

inline SampleRefs refs(const std::vector<Sample>& samples) {
  SampleRefs out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(&s);
  return out;
}

}  // namespace osdg
