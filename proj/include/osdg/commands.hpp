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

// Command-line front end: generate, train, evaluate, compare,
// export-embeddings.
//
// Run configuration is a flat JSON object whose keys mirror the long flags
// (snake_case key <-> kebab-case flag). Flags override values read from
// --config. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "osdg/dataset.hpp"
#include "osdg/meta_trainer.hpp"
#include "osdg/metrics.hpp"
#include "osdg/network.hpp"

namespace osdg {

struct RunConfig {
  std::string data;
  std::string out = "out";
  TrainConfig train;
  EvalOptions eval;
  std::string ablation = "none";  // none | wo_rbe | wo_rb | wo_dgs
};

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"none", "wo_rbe", "wo_rb", "wo_dgs"};
  return names;
}

/// Rewrites the affected fields; idempotent, so an echoed config replays the same run.
inline void apply_ablation(RunConfig& c) {
  if (c.ablation == "none") return;
  if (c.ablation == "wo_rbe") {
    c.train.weights.rbe = 0.0;
    c.train.conf_source = ConfSource::Softmax;
  } else if (c.ablation == "wo_rb") {
    c.train.use_rb = false;
  } else if (c.ablation == "wo_dgs") {
    c.train.scheduler = SchedulerKind::Sequential;
  } else {
    throw ParameterError("unknown ablation '" + c.ablation + "' (expected none|wo_rbe|wo_rb|wo_dgs)");
  }
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return {{"data", c.data},
          {"out", c.out},
          {"lr", t.lr},
          {"lr_decay", t.lr_decay},
          {"decay_step", t.decay_step},
          {"max_steps", t.max_steps},
          {"batch_size", t.batch_size},
          {"w_cls", t.weights.cls},
          {"w_reg", t.weights.reg},
          {"w_rbe", t.weights.rbe},
          {"sigma", t.sigma},
          {"probe_size", t.probe_size},
          {"scheduler", to_string(t.scheduler)},
          {"seed", t.seed},
          {"backbone_widths", t.backbone_widths},
          {"depth1", t.depth1},
          {"depth2", t.depth2},
          {"eval_interval", t.eval_interval},
          {"omega_min", t.omega_min},
          {"single_update", t.single_update},
          {"use_rb", t.use_rb},
          {"conf_source", to_string(t.conf_source)},
          {"ablation", c.ablation},
          {"lambda_quantile", c.eval.lambda_quantile},
          {"known_rejection_is_error", c.eval.known_rejection_is_error},
          {"oscr_integration", to_string(c.eval.integration)}};
}

/// Missing keys keep their defaults; unknown keys and wrong types are usage errors.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config: expected a JSON object");
  RunConfig c;
  const nlohmann::json defaults = run_config_to_json(c);
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ParameterError("config: unknown key '" + key + "'");
  nlohmann::json merged = defaults;
  merged.update(j);
  try {
    TrainConfig& t = c.train;
    c.data = merged.at("data").get<std::string>();
    c.out = merged.at("out").get<std::string>();
    t.lr = merged.at("lr").get<double>();
    t.lr_decay = merged.at("lr_decay").get<double>();
    t.decay_step = merged.at("decay_step").get<std::size_t>();
    t.max_steps = merged.at("max_steps").get<std::size_t>();
    t.batch_size = merged.at("batch_size").get<std::size_t>();
    t.weights.cls = merged.at("w_cls").get<double>();
    t.weights.reg = merged.at("w_reg").get<double>();
    t.weights.rbe = merged.at("w_rbe").get<double>();
    t.sigma = merged.at("sigma").get<double>();
    t.probe_size = merged.at("probe_size").get<std::size_t>();
    t.scheduler = parse_scheduler(merged.at("scheduler").get<std::string>());
    t.seed = merged.at("seed").get<std::uint64_t>();
    t.backbone_widths = merged.at("backbone_widths").get<std::vector<std::size_t>>();
    t.depth1 = merged.at("depth1").get<int>();
    t.depth2 = merged.at("depth2").get<int>();
    t.eval_interval = merged.at("eval_interval").get<std::size_t>();
    t.omega_min = merged.at("omega_min").get<double>();
    t.single_update = merged.at("single_update").get<bool>();
    t.use_rb = merged.at("use_rb").get<bool>();
    t.conf_source = parse_conf_source(merged.at("conf_source").get<std::string>());
    c.ablation = merged.at("ablation").get<std::string>();
    c.eval.lambda_quantile = merged.at("lambda_quantile").get<double>();
    c.eval.known_rejection_is_error = merged.at("known_rejection_is_error").get<bool>();
    c.eval.integration = parse_oscr_integration(merged.at("oscr_integration").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  if (!(c.eval.lambda_quantile >= 0.0 && c.eval.lambda_quantile <= 1.0))
    throw ParameterError("config: lambda_quantile must lie in [0, 1]");
  apply_ablation(c);
  return c;
}

namespace detail {

inline std::string kebab(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParameterError("--" + kebab(key) + ": expected true or false, got '" + s + "'");
}

/// Converts a flag string to the JSON type of the key's default value.
inline nlohmann::json coerce(const std::string& raw, const nlohmann::json& like, const std::string& key) {
  const std::string flag = "--" + kebab(key);
  if (like.is_boolean()) return parse_bool(raw, key);
  if (like.is_string()) return raw;
  if (like.is_array()) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::string_view part : split_view(raw, ',')) {
      long long v = 0;
      if (!parse_int(part, v) || v < 0) throw ParameterError(flag + ": expected comma-separated integers");
      arr.push_back(static_cast<std::size_t>(v));
    }
    return arr;
  }
  if (like.is_number_unsigned() || like.is_number_integer()) {
    long long v = 0;
    if (!parse_int(raw, v)) throw ParameterError(flag + ": expected an integer, got '" + raw + "'");
    if (like.is_number_unsigned()) {
      if (v < 0) throw ParameterError(flag + ": must be non-negative");
      return static_cast<std::uint64_t>(v);
    }
    return v;
  }
  double v = 0;
  if (!parse_double(raw, v)) throw ParameterError(flag + ": expected a number, got '" + raw + "'");
  return v;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Registers one string-valued flag per RunConfig key on a subcommand. A
/// repeated flag keeps its last value.
class ConfigFlags {
 public:
  explicit ConfigFlags(CLI::App* app) : app_(app) {
    app->add_option("--config", config_path_, "JSON run config; flags override its values");
    const nlohmann::json defaults = run_config_to_json(RunConfig{});
    for (const auto& [key, value] : defaults.items()) {
      const std::string name = "--" + kebab(key);
      std::string& slot = raw_[key];
      if (value.is_boolean())
        app->add_flag(name + "{true}", slot, "(default " + value.dump() + ")")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      else
        app->add_option(name, slot, "(default " + (value.is_string() ? value.get<std::string>() : value.dump()) + ")")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  RunConfig resolve() const {
    nlohmann::json j = config_path_.empty() ? nlohmann::json::object() : read_json_file(config_path_);
    if (!j.is_object()) throw ParameterError(config_path_ + ": expected a JSON object");
    const nlohmann::json defaults = run_config_to_json(RunConfig{});
    for (const auto& [key, raw] : raw_)
      if (app_->count("--" + kebab(key)) > 0) j[key] = coerce(raw, defaults.at(key), key);
    return run_config_from_json(j);
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::string> raw_;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (std::string_view part : split_view(s, ','))
    if (!part.empty()) out.emplace_back(part);
  return out;
}

inline void check_compatible(const Networks& nets, const Manifest& m) {
  if (nets.arch.input_dim != m.feature_dim || nets.arch.num_classes != m.seen_class_ids.size()) {
    throw IngestionError(str_cat("checkpoint expects ", nets.arch.input_dim, " features and ", nets.arch.num_classes,
                                 " seen classes; dataset has ", m.feature_dim, " and ", m.seen_class_ids.size()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline void cmd_generate(const GenerateOptions& opt, const std::filesystem::path& out_dir, std::ostream& out) {
  DomainDataset ds = generate(opt);
  save(ds, out_dir);
  const Manifest& m = ds.manifest();
  out << "wrote " << out_dir.string() << ": " << m.num_domains() << " domains (held out " << m.held_out_domain_id
      << "), " << m.seen_class_ids.size() << " seen + " << m.unseen_class_ids.size() << " unseen classes, dim "
      << m.feature_dim << ", train/val/test = " << ds.train().size() << "/" << ds.val().size() << "/"
      << ds.test().size() << "\n";
}

struct TrainArtifacts {
  TrainResult result;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

/// Trains and writes config.json, checkpoint.json, train_log.csv and
/// schedule_history.csv under cfg.out.
inline TrainArtifacts run_training(const RunConfig& cfg, const DomainDataset& ds, std::ostream* progress,
                                   bool write_checkpoint = true) {
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  detail::write_json_file(dir / "config.json", run_config_to_json(cfg));
  StepCallback cb;
  if (progress) {
    cb = [progress](const TrainRecord& r) {
      if (r.val_acc)
        *progress << "step " << r.step << " total " << format_double(r.losses.all().total) << " val_acc "
                  << format_double(*r.val_acc) << " test_acc " << format_double(*r.test_acc) << "\n";
    };
  }
  TrainArtifacts a{train(ds, cfg.train, cb), 0.0, 0.0};
  if (write_checkpoint) save_checkpoint(a.result.nets, dir / "checkpoint.json");
  write_train_log(dir / "train_log.csv", a.result.log);
  write_schedule_history(dir / "schedule_history.csv", a.result.schedule, ds.manifest().source_domains());
  a.val_acc = split_accuracy(a.result.nets.main, ds.val(), ds.manifest());
  a.test_acc = split_accuracy(a.result.nets.main, ds.test(), ds.manifest());
  return a;
}

inline std::vector<EvalReport> run_evaluation(const RunConfig& cfg, const DomainDataset& ds, const Networks& nets,
                                              bool write_predictions_csv = true) {
  detail::check_compatible(nets, ds.manifest());
  std::vector<EvalReport> reports = evaluate(ds, nets.main, cfg.eval);
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  write_eval_report(dir / "eval_report.json", reports);
  if (write_predictions_csv) write_predictions(dir / "predictions.csv", reports);
  return reports;
}

struct CompareRow {
  std::string scheduler;  // scheduler name, suffixed with "+<ablation>" for ablated runs
  Head head = Head::Cls;
  std::uint64_t seed = 0;
  double acc = 0, h_score = 0, oscr = 0;
  std::string status = "ok";
};

inline std::size_t compare_threads(std::size_t runs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OSDG_SCHED_THREADS")) {
    long long cap = 0;
    if (!parse_int(env, cap) || cap < 1) throw ParameterError("OSDG_SCHED_THREADS must be a positive integer");
    n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, runs));
}

/// Trains every (ablation, scheduler, seed) combination and evaluates it.
/// Each run's artifacts land in <out>/runs/<label>-seed<k>/.
inline std::vector<CompareRow> run_compare(const RunConfig& base, const DomainDataset& ds,
                                           const std::vector<SchedulerKind>& kinds,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::vector<std::string>& ablations) {
  struct Job {
    RunConfig cfg;
    std::string label;
  };
  std::vector<Job> jobs;
  for (const std::string& ab : ablations) {
    for (SchedulerKind k : kinds) {
      for (std::uint64_t s : seeds) {
        Job j{base, to_string(k) + (ab == "none" ? "" : "+" + ab)};
        j.cfg.train.scheduler = k;
        j.cfg.train.seed = s;
        j.cfg.ablation = ab;
        apply_ablation(j.cfg);
        j.cfg.out = (std::filesystem::path(base.out) / "runs" / str_cat(j.label, "-seed", s)).string();
        jobs.push_back(std::move(j));
      }
    }
  }
  std::vector<std::vector<CompareRow>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      std::vector<CompareRow>& rows = results[i];
      for (Head h : {Head::Cls, Head::Bcls}) rows.push_back({job.label, h, job.cfg.train.seed, 0, 0, 0, "ok"});
      try {
        TrainArtifacts a = run_training(job.cfg, ds, nullptr, false);
        std::vector<EvalReport> reports = run_evaluation(job.cfg, ds, a.result.nets, false);
        for (std::size_t r = 0; r < 2; ++r) {
          rows[r].acc = reports[r].acc;
          rows[r].h_score = reports[r].h_score;
          rows[r].oscr = reports[r].oscr;
        }
      } catch (const std::exception& e) {
        std::string msg = std::string("error: ") + e.what();
        std::replace_if(msg.begin(), msg.end(), [](char ch) { return ch == ',' || ch == '\n' || ch == '"'; }, ';');
        for (auto& row : rows) row.status = msg;
      }
    }
  };
  const std::size_t n_threads = compare_threads(jobs.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<CompareRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
    return std::tie(a.scheduler, a.head, a.seed) < std::tie(b.scheduler, b.head, b.seed);
  });
  return rows;
}

/// Per-run rows followed by mean and std (sample, n-1) rows per (scheduler, head)
/// over the successful runs.
inline void write_comparison(const std::filesystem::path& path, const std::vector<CompareRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "scheduler,head,seed,acc,h_score,oscr,status\n";
  for (const auto& r : rows) {
    out << r.scheduler << ',' << head_name(r.head) << ',' << r.seed << ',' << format_double(r.acc) << ','
        << format_double(r.h_score) << ',' << format_double(r.oscr) << ',' << r.status << '\n';
  }
  std::map<std::pair<std::string, Head>, std::vector<const CompareRow*>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.scheduler, r.head}];
    if (r.status == "ok") g.push_back(&r);
  }
  for (const auto& [key, members] : groups) {
    const double n = static_cast<double>(members.size());
    double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
    for (const CompareRow* r : members) {
      const double v[3] = {r->acc, r->h_score, r->oscr};
      for (int k = 0; k < 3; ++k) mean[k] += v[k] / n;
    }
    for (const CompareRow* r : members) {
      const double v[3] = {r->acc, r->h_score, r->oscr};
      for (int k = 0; k < 3; ++k) var[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
    }
    const std::string status = str_cat("n=", members.size());
    out << key.first << ',' << head_name(key.second) << ",mean";
    for (int k = 0; k < 3; ++k) out << ',' << (members.empty() ? "" : format_double(mean[k]));
    out << ',' << status << '\n';
    out << key.first << ',' << head_name(key.second) << ",std";
    for (int k = 0; k < 3; ++k)
      out << ',' << (members.empty() ? "" : format_double(members.size() > 1 ? std::sqrt(var[k] / (n - 1)) : 0.0));
    out << ',' << status << '\n';
  }
}

inline DomainDataset load_dataset_for(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ParameterError("--data (or config key 'data') is required");
  return load(cfg.data);
}

/// Entry point shared by the executable and the tests.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Open-set domain generalization with a scheduled meta-learning loop"};
  app.require_subcommand(1);

  GenerateOptions gen;
  std::string gen_out, gen_difficulty = "easy";
  double gen_noise = -1.0;
  long long gen_seed = 1;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic multi-domain dataset");
  generate_cmd->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  generate_cmd->add_option("--domains", gen.num_domains, "Number of domains")->capture_default_str();
  generate_cmd->add_option("--classes", gen.num_classes, "Number of classes")->capture_default_str();
  generate_cmd->add_option("--unseen", gen.num_unseen_classes, "Number of unseen classes")->capture_default_str();
  generate_cmd->add_option("--dim", gen.feature_dim, "Feature dimension")->capture_default_str();
  generate_cmd->add_option("--per-cell", gen.samples_per_cell, "Samples per (domain, class)")->capture_default_str();
  generate_cmd->add_option("--difficulty", gen_difficulty, "easy|medium|hard")->capture_default_str();
  generate_cmd->add_option("--val-fraction", gen.val_fraction, "Source validation fraction")->capture_default_str();
  generate_cmd->add_option("--held-out", gen.held_out_domain, "Held-out domain id (-1 = last)")
      ->capture_default_str();
  generate_cmd->add_option("--class-noise", gen_noise, "Override the per-class noise std");
  generate_cmd->add_option("--out", gen_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Run meta-training and write a checkpoint");
  detail::ConfigFlags train_flags(train_cmd);

  std::string eval_checkpoint;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the held-out domain");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file (default <out>/checkpoint.json)");
  detail::ConfigFlags eval_flags(eval_cmd);

  std::string cmp_schedulers = "hardest,sequential,random,easiest,selfgen", cmp_seeds = "1,2,3",
              cmp_ablations = "none";
  auto* compare_cmd = app.add_subcommand("compare", "Train and evaluate schedulers across seeds");
  compare_cmd->add_option("--schedulers", cmp_schedulers, "Comma-separated scheduler kinds")->capture_default_str();
  compare_cmd->add_option("--seeds", cmp_seeds, "Comma-separated seeds")->capture_default_str();
  compare_cmd->add_option("--ablations", cmp_ablations, "Comma-separated: none,wo_rbe,wo_rb,wo_dgs")
      ->capture_default_str();
  detail::ConfigFlags compare_flags(compare_cmd);

  std::string emb_checkpoint, emb_split = "test";
  auto* emb_cmd = app.add_subcommand("export-embeddings", "Dump rebiased embeddings of a split");
  emb_cmd->add_option("--checkpoint", emb_checkpoint, "Checkpoint file (default <out>/checkpoint.json)");
  emb_cmd->add_option("--split", emb_split, "train|val|test")->capture_default_str();
  detail::ConfigFlags emb_flags(emb_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate_cmd->parsed()) {
      if (gen_seed < 0) throw ParameterError("--seed must be non-negative");
      gen.seed = static_cast<std::uint64_t>(gen_seed);
      gen.difficulty = parse_difficulty(gen_difficulty);
      if (generate_cmd->count("--class-noise") > 0) gen.class_noise = gen_noise;
      cmd_generate(gen, gen_out, out);
    } else if (train_cmd->parsed()) {
      RunConfig cfg = train_flags.resolve();
      cfg.train.validate();
      DomainDataset ds = load_dataset_for(cfg);
      TrainArtifacts a = run_training(cfg, ds, &out);
      out << "trained " << a.result.log.records.size() << " steps; final val_acc " << format_double(a.val_acc)
          << " test_acc " << format_double(a.test_acc) << "\n";
    } else if (eval_cmd->parsed()) {
      RunConfig cfg = eval_flags.resolve();
      DomainDataset ds = load_dataset_for(cfg);
      const std::filesystem::path ckpt =
          eval_checkpoint.empty() ? std::filesystem::path(cfg.out) / "checkpoint.json" : std::filesystem::path(eval_checkpoint);
      Networks nets = load_checkpoint(ckpt);
      for (const auto& r : run_evaluation(cfg, ds, nets)) {
        out << head_name(r.head) << ": acc " << format_double(r.acc) << " h_score " << format_double(r.h_score)
            << " oscr " << format_double(r.oscr) << " lambda " << format_double(r.lambda) << "\n";
      }
    } else if (compare_cmd->parsed()) {
      RunConfig cfg = compare_flags.resolve();
      cfg.train.validate();
      std::vector<SchedulerKind> kinds;
      for (const auto& s : detail::split_list(cmp_schedulers)) kinds.push_back(parse_scheduler(s));
      std::vector<std::uint64_t> seeds;
      for (const auto& s : detail::split_list(cmp_seeds)) {
        long long v = 0;
        if (!parse_int(s, v) || v < 0) throw ParameterError("--seeds: expected non-negative integers, got '" + s + "'");
        seeds.push_back(static_cast<std::uint64_t>(v));
      }
      std::vector<std::string> ablations = detail::split_list(cmp_ablations);
      for (const auto& a : ablations)
        if (std::find(ablation_names().begin(), ablation_names().end(), a) == ablation_names().end())
          throw ParameterError("--ablations: unknown ablation '" + a + "'");
      if (kinds.empty() || seeds.empty() || ablations.empty())
        throw ParameterError("compare: schedulers, seeds and ablations must be non-empty");
      DomainDataset ds = load_dataset_for(cfg);
      std::filesystem::create_directories(cfg.out);
      std::vector<CompareRow> rows = run_compare(cfg, ds, kinds, seeds, ablations);
      write_comparison(std::filesystem::path(cfg.out) / "comparison.csv", rows);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.status == "ok" ? 0 : 1;
      out << "wrote " << (std::filesystem::path(cfg.out) / "comparison.csv").string() << ": " << rows.size()
          << " rows, " << failed << " failed\n";
      if (failed > 0) {
        err << "compare: " << failed << " result rows failed\n";
        return 1;
      }
    } else if (emb_cmd->parsed()) {
      RunConfig cfg = emb_flags.resolve();
      const Split split = parse_split(emb_split);
      DomainDataset ds = load_dataset_for(cfg);
      const std::filesystem::path ckpt =
          emb_checkpoint.empty() ? std::filesystem::path(cfg.out) / "checkpoint.json" : std::filesystem::path(emb_checkpoint);
      Networks nets = load_checkpoint(ckpt);
      detail::check_compatible(nets, ds.manifest());
      std::filesystem::create_directories(cfg.out);
      const auto path = std::filesystem::path(cfg.out) / "embeddings.csv";
      export_embeddings(nets.main, ds.split(split), ds.manifest(), path);
      out << "wrote " << path.string() << ": " << ds.split(split).size() << " rows\n";
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace osdg
