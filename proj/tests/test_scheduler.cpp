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

#include "oracles.hpp"
#include "osdg/scheduler.hpp"
#include "test_util.hpp"

using namespace osdg;

namespace {

Networks tiny_nets(const DomainDataset& ds, std::uint64_t seed = 1) {
  ArchConfig a;
  a.input_dim = ds.manifest().feature_dim;
  a.backbone_widths = {8};
  a.num_classes = ds.manifest().seen_class_ids.size();
  return init(seed, a);
}

/// Scores every row by the domain it came from (rows are identified by their
/// first feature, which is unique in a generated dataset).
ConfidenceFn domain_scorer(const DomainDataset& ds, std::map<int, double> by_domain) {
  std::map<double, int> domain_of;
  for (const Sample& s : ds.train()) domain_of[s.features[0]] = s.domain_id;
  return [domain_of, by_domain](const Tensor& x) {
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = by_domain.at(domain_of.at(x.at(r, 0)));
    return out;
  };
}

}  // namespace

TEST(DomainReliability, DirectSubstitution) {
  ScheduleState st;
  ProbeMap p{{{0, 1}, {0.2, 0.4}}};
  auto w = domain_reliability(p, st);
  EXPECT_DOUBLE_EQ(w.at(0), std::exp(1.3) * 0.1);
}

TEST(DomainReliability, MinOverClasses) {
  ScheduleState st;
  st.gamma[0] = 10;
  ProbeMap p{{{0, 1}, {0.9}}, {{0, 2}, {0.1}}};
  EXPECT_DOUBLE_EQ(domain_reliability(p, st).at(0), std::exp(1.1) * (0.1 + 2e-5 * 10));
}

TEST(DomainReliability, LargerGammaGivesLargerScore) {
  ScheduleState st;
  st.gamma = {{0, 5}, {1, 3}};
  ProbeMap p{{{0, 0}, {0.5}}, {{1, 0}, {0.5}}};
  auto w = domain_reliability(p, st);
  EXPECT_GT(w.at(0), w.at(1));
}

TEST(DomainReliability, EmptyListNamesTheCell) {
  ScheduleState st;
  ProbeMap p{{{2, 5}, {}}};
  try {
    domain_reliability(p, st);
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("domain 2, class 5"), std::string::npos) << e.what();
  }
}

TEST(DomainReliability, MatchesOracleOnRandomMaps) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    ScheduleState st;
    st.sigma = rng.uniform(1e-6, 0.2);
    ProbeMap p;
    const int nd = 3 + static_cast<int>(rng.index(3));
    for (int d = 0; d < nd; ++d) {
      st.gamma[d] = rng.index(50);
      for (int c : {1, 4}) {
        std::vector<double> v(1 + rng.index(6));
        for (double& x : v) x = rng.uniform();
        p[{d, c}] = v;
      }
    }
    auto got = domain_reliability(p, st);
    auto want = oracle::reliability(p, st.gamma, st.sigma);
    ASSERT_EQ(got.size(), want.size());
    for (const auto& [d, s] : want) EXPECT_NEAR(got.at(d), s, 1e-12);
    EXPECT_EQ(select_hardest(got), oracle::argmin(want));
  }
}

TEST(DomainReliability, LoweringAProbeNeverRaisesTheScore) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    ScheduleState st;
    ProbeMap p{{{0, 0}, {rng.uniform(), rng.uniform()}}, {{0, 1}, {rng.uniform(), rng.uniform()}}};
    const double before = domain_reliability(p, st).at(0);
    p[{0, rng.index(2)}][rng.index(2)] *= rng.uniform();
    EXPECT_LE(domain_reliability(p, st).at(0), before);
  }
}

TEST(SelectHardest, Examples) {
  EXPECT_EQ(select_hardest({{0, 0.3}, {1, 0.2}, {2, 0.9}}), 1);
  EXPECT_EQ(select_hardest({{0, 0.5}, {1, 0.5}, {2, 0.5}}), 0);
  EXPECT_EQ(select_easiest({{0, 0.3}, {1, 0.2}, {2, 0.9}}), 2);
  EXPECT_THROW(select_hardest({{0, std::numeric_limits<double>::quiet_NaN()}}), ParameterError);
  EXPECT_THROW(select_hardest({}), ParameterError);
}

TEST(Probe, OneConfidencePerCellInRange) {
  DomainDataset ds = testutil::tiny_dataset();
  Networks n = tiny_nets(ds);
  Rng rng(1);
  ProbeMap p = probe(ds, follower_confidence(n.follower), {0, 2}, 1, rng);
  EXPECT_EQ(p.size(), 6u);
  for (const auto& [cell, v] : p) {
    ASSERT_EQ(v.size(), 1u);
    EXPECT_GT(v[0], 0.0);
    EXPECT_LT(v[0], 1.0);
  }
  Rng a(5), b(5);
  EXPECT_EQ(probe(ds, follower_confidence(n.follower), {1, 3}, 4, a),
            probe(ds, follower_confidence(n.follower), {1, 3}, 4, b));
  EXPECT_THROW(probe(ds, follower_confidence(n.follower), {1, 3}, 0, a), ParameterError);
}

TEST(Partition, SequentialIsRoundRobin) {
  DomainDataset ds = testutil::tiny_dataset();
  Networks n = tiny_nets(ds);
  ScheduleState st;
  Rng rng(1);
  std::vector<int> seq;
  for (int i = 0; i < 7; ++i)
    seq.push_back(next_partition_domains(SchedulerKind::Sequential, ds, n.main, n.follower, st, rng, {0, 1}, 2).d_star);
  EXPECT_EQ(seq, (std::vector<int>{0, 1, 2, 0, 1, 2, 0}));
}

TEST(Partition, ComplementWithThreeSources) {
  DomainDataset ds = testutil::tiny_dataset();
  Networks n = tiny_nets(ds);
  Rng rng(2);
  for (SchedulerKind k : {SchedulerKind::Hardest, SchedulerKind::Sequential, SchedulerKind::Random,
                          SchedulerKind::Easiest, SchedulerKind::SelfGenerated}) {
    ScheduleState st;
    for (int i = 0; i < 10; ++i) {
      PartitionDomains p = next_partition_domains(k, ds, n.main, n.follower, st, rng, {0, 1}, 2);
      std::set<int> all{p.d_star, p.d_i, p.d_j};
      EXPECT_EQ(all, (std::set<int>{0, 1, 2})) << to_string(k);
    }
    EXPECT_EQ(st.history.size(), 10u);
    EXPECT_EQ(st.selections(), 10u);
  }
}

TEST(Partition, MoreSourcesDrawTwoDistinctOthers) {
  GenerateOptions opt;
  opt.num_domains = 6;
  opt.num_classes = 5;
  opt.num_unseen_classes = 1;
  opt.feature_dim = 3;
  opt.samples_per_cell = 6;
  DomainDataset ds = generate(opt);
  Networks n = tiny_nets(ds);
  ScheduleState st;
  Rng rng(3);
  std::set<std::pair<int, int>> pairs;
  for (int i = 0; i < 50; ++i) {
    PartitionDomains p = next_partition_domains(SchedulerKind::Random, ds, n.main, n.follower, st, rng, {0, 1}, 1);
    EXPECT_NE(p.d_i, p.d_j);
    EXPECT_NE(p.d_i, p.d_star);
    EXPECT_NE(p.d_j, p.d_star);
    EXPECT_NE(p.d_star, 5);
    pairs.insert({p.d_i, p.d_j});
  }
  EXPECT_GT(pairs.size(), 3u);
}

TEST(Partition, HardestPicksTheLowConfidenceDomain) {
  DomainDataset ds = testutil::tiny_dataset();
  ScheduleState st;
  Rng rng(1);
  auto score = domain_scorer(ds, {{0, 0.8}, {1, 0.7}, {2, 0.3}});
  EXPECT_EQ(partition_from_confidence(SchedulerKind::Hardest, ds, score, st, rng, {0, 1}, 3).d_star, 2);
  EXPECT_EQ(partition_from_confidence(SchedulerKind::Easiest, ds, score, st, rng, {0, 1}, 3).d_star, 0);
}

TEST(Partition, BalancingVisitsEveryDomainUnderEqualConfidence) {
  DomainDataset ds = testutil::tiny_dataset();
  ScheduleState st;
  Rng rng(1);
  auto score = domain_scorer(ds, {{0, 0.5}, {1, 0.5}, {2, 0.5}});
  std::vector<int> seq;
  for (int i = 0; i < 6; ++i)
    seq.push_back(partition_from_confidence(SchedulerKind::Hardest, ds, score, st, rng, {0, 1}, 2).d_star);
  EXPECT_EQ(seq, (std::vector<int>{0, 1, 2, 0, 1, 2}));
}

TEST(Partition, SelfGeneratedEqualsHardestOnMainConfidence) {
  DomainDataset ds = testutil::tiny_dataset();
  Networks n = tiny_nets(ds, 4);
  ScheduleState s1, s2;
  Rng r1(8), r2(8);
  for (int i = 0; i < 10; ++i) {
    auto a = partition_from_confidence(SchedulerKind::Hardest, ds, main_confidence(n.main), s1, r1, {1, 2}, 4);
    auto b = next_partition_domains(SchedulerKind::SelfGenerated, ds, n.main, n.follower, s2, r2, {1, 2}, 4);
    EXPECT_EQ(a, b);
  }
  EXPECT_EQ(s1.history, s2.history);
}

TEST(Partition, NeedsThreeSources) {
  GenerateOptions opt;
  opt.feature_dim = 3;
  opt.samples_per_cell = 4;
  DomainDataset big = generate(opt);
  Manifest m = big.manifest();
  m.domain_names.pop_back();  // 3 domains: 2 sources
  m.held_out_domain_id = 2;
  m.generator.reset();
  std::vector<Sample> train, test;
  for (const Sample& s : big.train())
    if (s.domain_id < 2) train.push_back(s);
  DomainDataset ds(m, train, {}, test);
  Networks n = tiny_nets(ds);
  ScheduleState st;
  Rng rng(1);
  EXPECT_THROW(next_partition_domains(SchedulerKind::Hardest, ds, n.main, n.follower, st, rng, {0, 1}, 1),
               ParameterError);
}

TEST(ScheduleHistory, CsvColumns) {
  testutil::TempDir dir("sched");
  ScheduleState st;
  st.history.push_back({0, 1, {{0, 0.5}, {1, 0.25}, {2, 0.75}}});
  write_schedule_history(dir / "h.csv", st, {0, 1, 2});
  EXPECT_EQ(testutil::slurp(dir / "h.csv"), "step,selected_domain,omega_0,omega_1,omega_2\n0,1,0.5,0.25,0.75\n");
}
