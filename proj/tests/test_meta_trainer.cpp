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


#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "osdg/meta_trainer.hpp"
#include "test_util.hpp"

using namespace osdg;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.backbone_widths = {8};
  c.depth1 = 2;
  c.depth2 = 1;
  c.batch_size = 4;
  c.probe_size = 2;
  c.max_steps = 20;
  c.eval_interval = 5;
  c.lr = 0.05;
  return c;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<Tensor> out;
  for (const Parameter* p : ps) out.push_back(p->value);
  return out;
}

bool same(const std::vector<Parameter*>& ps, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (!(ps[i]->value == snap[i])) return false;
  return true;
}

/// Relative error between backprop parameter gradients and central
/// differences of `loss_at` (which must rebuild the loss from scratch).
double parameter_grad_error(Networks& nets, const std::function<Var(Graph&)>& loss_at, double h = 1e-4) {
  auto params = nets.parameters();
  for (Parameter* p : params) p->grad.reset();
  {
    Graph g;
    g.backward(loss_at(g));
  }
  double diff = 0, na = 0, nn = 0;
  for (Parameter* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double orig = p->value.data[k];
      p->value.data[k] = orig + h;
      double up, down;
      {
        Graph g;
        up = loss_at(g).value().item();
      }
      p->value.data[k] = orig - h;
      {
        Graph g;
        down = loss_at(g).value().item();
      }
      p->value.data[k] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = (*p->grad)[k];
      diff += (num - ana) * (num - ana);
      na += ana * ana;
      nn += num * num;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

}  // namespace

TEST(BuildMetaBatch, CellConstraintsHoldOnRandomBuilds) {
  DomainDataset ds = testutil::tiny_dataset();
  const Manifest& m = ds.manifest();
  TrainConfig cfg = tiny_config();
  Networks nets = init(1, cfg.arch(m));
  ScheduleState st;
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    MetaBatch b = build_meta_batch(ds, SchedulerKind::Random, nets, st, rng, 6, 2);
    const std::set<int> reserved(b.reserved_classes.begin(), b.reserved_classes.end());
    ASSERT_EQ(reserved.size(), 2u);
    for (int c : reserved) EXPECT_TRUE(m.is_seen(c));
    const std::set<int> pair{b.domains.d_i, b.domains.d_j};
    for (const auto* set : {&b.omega_a, &b.omega_b, &b.omega_a_star, &b.omega_b_star}) EXPECT_EQ(set->size(), 6u);
    for (const Sample* s : b.omega_a) {
      EXPECT_TRUE(reserved.count(s->class_id));
      EXPECT_TRUE(pair.count(s->domain_id));
    }
    for (const Sample* s : b.omega_b) {
      EXPECT_FALSE(reserved.count(s->class_id));
      EXPECT_EQ(s->domain_id, b.domains.d_star);
    }
    for (const Sample* s : b.omega_a_star) {
      EXPECT_TRUE(reserved.count(s->class_id));
      EXPECT_EQ(s->domain_id, b.domains.d_star);
    }
    for (const Sample* s : b.omega_b_star) {
      EXPECT_FALSE(reserved.count(s->class_id));
      EXPECT_TRUE(pair.count(s->domain_id));
    }
    std::set<CellKey> train_cells, test_cells;
    for (const Sample* s : b.meta_train()) train_cells.insert({s->domain_id, s->class_id});
    for (const Sample* s : b.meta_test()) test_cells.insert({s->domain_id, s->class_id});
    for (const auto& c : train_cells) EXPECT_FALSE(test_cells.count(c));
  }
  EXPECT_EQ(st.selections(), 100u);
}

TEST(BuildMetaBatch, ReproducibleForFixedSeed) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks nets = init(1, cfg.arch(ds.manifest()));
  ScheduleState s1, s2;
  Rng r1(4), r2(4);
  for (int t = 0; t < 5; ++t) {
    MetaBatch a = build_meta_batch(ds, SchedulerKind::Hardest, nets, s1, r1, 4, 2);
    MetaBatch b = build_meta_batch(ds, SchedulerKind::Hardest, nets, s2, r2, 4, 2);
    EXPECT_EQ(a.meta_train(), b.meta_train());
    EXPECT_EQ(a.meta_test(), b.meta_test());
    EXPECT_EQ(a.domains, b.domains);
  }
}

TEST(BuildMetaBatch, ConstraintCheckerRejectsStraySamples) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks nets = init(1, cfg.arch(ds.manifest()));
  ScheduleState st;
  Rng rng(1);
  MetaBatch b = build_meta_batch(ds, SchedulerKind::Sequential, nets, st, rng, 4, 2);
  EXPECT_NO_THROW(check_meta_batch(b));
  b.omega_b.push_back(b.omega_a.front());
  EXPECT_THROW(check_meta_batch(b), std::logic_error);
}

TEST(BuildMetaBatch, NeedsThreeSeenClasses) {
  GenerateOptions opt;
  opt.num_classes = 4;
  opt.num_unseen_classes = 2;
  opt.feature_dim = 3;
  opt.samples_per_cell = 5;
  DomainDataset ds = generate(opt);
  TrainConfig cfg = tiny_config();
  Networks nets = init(1, cfg.arch(ds.manifest()));
  ScheduleState st;
  Rng rng(1);
  EXPECT_THROW(build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2), ParameterError);
}

TEST(ComputeLosses, TotalIsTheWeightedSum) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.weights = {0.7, 0.3, 0.2};
  Networks nets = init(2, cfg.arch(ds.manifest()));
  Graph g;
  LossBreakdown b = compute_losses(g, nets, refs(ds.train()), ds.manifest(), cfg);
  LossValues v = LossValues::of(b);
  EXPECT_NEAR(v.total, 0.7 * v.l_cls + 0.3 * v.l_reg + 0.2 * v.l_rbe, 1e-12);
  cfg.use_rb = false;
  Graph g2;
  LossValues w = LossValues::of(compute_losses(g2, nets, refs(ds.train()), ds.manifest(), cfg));
  EXPECT_NEAR(w.l_rbe, v.l_rbe + v.r_rb, 1e-12);
}

TEST(ComputeLosses, FixedTermsAtTheBasePointChangeNothing) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks nets = init(2, cfg.arch(ds.manifest()));
  SampleRefs all = refs(ds.train());
  SampleRefs some(all.begin(), all.begin() + 12);
  DetachedTerms t = detached_terms(nets, some, ds.manifest(), cfg);
  Graph g1, g2;
  LossValues a = LossValues::of(compute_losses(g1, nets, some, ds.manifest(), cfg));
  LossValues b = LossValues::of(compute_losses(g2, nets, some, ds.manifest(), cfg, &t));
  EXPECT_EQ(a, b);
  for (double w : t.omega.data) {
    EXPECT_GE(w, cfg.omega_min);
    EXPECT_LE(w, 1.0);
  }
}

TEST(ComputeLosses, CompositeGradientMatchesFiniteDifferences) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.weights = {1.0, 0.5, 0.5};
  Networks nets = init(3, cfg.arch(ds.manifest()));
  ScheduleState st;
  Rng rng(5);
  MetaBatch b = build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2);
  const SampleRefs train_set = b.meta_train();
  const DetachedTerms t = detached_terms(nets, train_set, ds.manifest(), cfg);
  const double err = parameter_grad_error(nets, [&](Graph& g) {
    return compute_losses(g, nets, train_set, ds.manifest(), cfg, &t).total;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(MetaStep, PhaseTwoGradientMatchesFiniteDifferencesAtUpdatedParameters) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.weights = {1.0, 0.5, 0.5};
  Networks nets = init(6, cfg.arch(ds.manifest()));
  ScheduleState st;
  Rng rng(6);
  MetaBatch b = build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2);
  const SampleRefs tr = b.meta_train(), te = b.meta_test();
  {
    Graph g;
    g.backward(compute_losses(g, nets, tr, ds.manifest(), cfg).total);
    sgd_step(nets.parameters(), cfg.lr);
  }
  const DetachedTerms t_tr = detached_terms(nets, tr, ds.manifest(), cfg);
  const DetachedTerms t_te = detached_terms(nets, te, ds.manifest(), cfg);
  const double err = parameter_grad_error(nets, [&](Graph& g) {
    return add(compute_losses(g, nets, te, ds.manifest(), cfg, &t_te).total,
               compute_losses(g, nets, tr, ds.manifest(), cfg, &t_tr).total);
  });
  EXPECT_LT(err, 1e-4);
}

TEST(MetaStep, ZeroRegWeightFreezesTheFollower) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.weights = {1.0, 0.0, 0.0};
  Networks nets = init(2, cfg.arch(ds.manifest()));
  const auto follower_before = snapshot(nets.follower.parameters());
  const auto main_before = snapshot(nets.main.parameters());
  ScheduleState st;
  Rng rng(2);
  for (int i = 0; i < 3; ++i) {
    MetaBatch b = build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2);
    meta_step(nets, b, ds.manifest(), cfg, cfg.lr);
  }
  EXPECT_TRUE(same(nets.follower.parameters(), follower_before));
  EXPECT_FALSE(same(nets.main.parameters(), main_before));
}

TEST(MetaStep, OnlyRegWeightLeavesTheMainNetworkUnchanged) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.weights = {0.0, 1.0, 0.0};
  Networks nets = init(2, cfg.arch(ds.manifest()));
  const auto follower_before = snapshot(nets.follower.parameters());
  const auto main_before = snapshot(nets.main.parameters());
  ScheduleState st;
  Rng rng(2);
  for (int i = 0; i < 3; ++i) {
    MetaBatch b = build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2);
    meta_step(nets, b, ds.manifest(), cfg, cfg.lr);
  }
  EXPECT_TRUE(same(nets.main.parameters(), main_before));
  EXPECT_FALSE(same(nets.follower.parameters(), follower_before));
}

TEST(MetaStep, IdenticalStateGivesIdenticalDeltas) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks a = init(2, cfg.arch(ds.manifest()));
  Networks b = a;
  ScheduleState st;
  Rng rng(2);
  MetaBatch batch = build_meta_batch(ds, SchedulerKind::Hardest, a, st, rng, 4, 2);
  StepLosses la = meta_step(a, batch, ds.manifest(), cfg, cfg.lr);
  StepLosses lb = meta_step(b, batch, ds.manifest(), cfg, cfg.lr);
  EXPECT_EQ(la.all(), lb.all());
  EXPECT_TRUE(same(a.parameters(), snapshot(b.parameters())));
}

TEST(MetaStep, SingleUpdateDiffersFromTwoPhases) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks a = init(2, cfg.arch(ds.manifest()));
  Networks b = a;
  ScheduleState st;
  Rng rng(2);
  MetaBatch batch = build_meta_batch(ds, SchedulerKind::Hardest, a, st, rng, 4, 2);
  meta_step(a, batch, ds.manifest(), cfg, cfg.lr);
  cfg.single_update = true;
  StepLosses l = meta_step(b, batch, ds.manifest(), cfg, cfg.lr);
  EXPECT_EQ(l.meta_train, l.meta_train_updated);
  EXPECT_FALSE(same(a.parameters(), snapshot(b.parameters())));
}

TEST(MetaStep, NonFiniteLossNamesTheTerm) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  Networks nets = init(2, cfg.arch(ds.manifest()));
  ScheduleState st;
  Rng rng(2);
  MetaBatch batch = build_meta_batch(ds, SchedulerKind::Hardest, nets, st, rng, 4, 2);
  nets.main.cls1.weight.value.data[0] = std::numeric_limits<double>::infinity();
  try {
    meta_step(nets, batch, ds.manifest(), cfg, cfg.lr);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("l_cls="), std::string::npos) << msg;
    EXPECT_NE(msg.find("meta-train"), std::string::npos) << msg;
  }
}

TEST(Train, ZeroStepsReturnsInitializedNetworks) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 0;
  TrainResult r = train(ds, cfg);
  EXPECT_TRUE(r.log.records.empty());
  EXPECT_TRUE(r.schedule.history.empty());
  Networks fresh = init(cfg.seed, cfg.arch(ds.manifest()));
  EXPECT_TRUE(same(r.nets.parameters(), snapshot(fresh.parameters())));
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  TrainResult a = train(ds, cfg), b = train(ds, cfg);
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    EXPECT_EQ(a.log.records[i].losses.all(), b.log.records[i].losses.all());
    EXPECT_EQ(a.log.records[i].selected_domain, b.log.records[i].selected_domain);
    EXPECT_EQ(a.log.records[i].val_acc, b.log.records[i].val_acc);
  }
  EXPECT_EQ(a.schedule.history, b.schedule.history);
}

TEST(Train, LogBookkeeping) {
  DomainDataset ds = testutil::tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 23;
  TrainResult r = train(ds, cfg);
  ASSERT_EQ(r.log.records.size(), 23u);
  EXPECT_EQ(r.log.evaluations(), 4u);
  for (std::size_t i = 0; i < r.log.records.size(); ++i) {
    EXPECT_EQ(r.log.records[i].step, i + 1);
    EXPECT_EQ(r.log.records[i].val_acc.has_value(), (i + 1) % 5 == 0);
    EXPECT_EQ(r.log.records[i].selected_domain, r.schedule.history[i].selected);
  }
  EXPECT_EQ(r.schedule.selections(), 23u);
  testutil::TempDir dir("trainlog");
  write_train_log(dir / "log.csv", r.log);
  const std::string text = testutil::slurp(dir / "log.csv");
  EXPECT_EQ(text.rfind("step,l_cls,l_reg,l_rbe,r_rb,total,selected_domain,val_acc,test_acc\n1,", 0), 0u);
  std::size_t rows = 0;
  for (char c : text) rows += c == '\n';
  EXPECT_EQ(rows, 24u);
  EXPECT_NE(text.find(",,\n"), std::string::npos);  // blank eval columns
}

TEST(Train, LossesStayFiniteAcrossSeeds) {
  DomainDataset ds = testutil::tiny_dataset();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig cfg = tiny_config();
    cfg.seed = seed;
    cfg.lr = 0.1;
    TrainResult r = train(ds, cfg);
    for (const auto& rec : r.log.records) {
      EXPECT_TRUE(std::isfinite(rec.losses.all().total));
      EXPECT_TRUE(std::isfinite(rec.losses.meta_train.total));
    }
  }
}

TEST(Train, LearningRateDecaysAtTheDecayStep) {
  TrainConfig cfg;
  EXPECT_EQ(learning_rate_at(cfg, 7999), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 8000), 1e-4);
}

TEST(TrainConfig, DefaultsAndValidation) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.lr, 1e-3);
  EXPECT_EQ(cfg.max_steps, 10000u);
  EXPECT_EQ(cfg.batch_size, 16u);
  EXPECT_EQ(cfg.weights.cls, 1.0);
  EXPECT_EQ(cfg.weights.reg, 1e-4);
  EXPECT_EQ(cfg.weights.rbe, 5e-4);
  EXPECT_EQ(cfg.sigma, 2e-5);
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}
