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

#include <fstream>
#include <set>

#include "oracles.hpp"
#include "osdg/dataset.hpp"
#include "test_util.hpp"

using namespace osdg;

TEST(Generate, SameSeedIsBitIdentical) {
  DomainDataset a = testutil::tiny_dataset(3);
  DomainDataset b = testutil::tiny_dataset(3);
  EXPECT_TRUE(a == b);
  DomainDataset c = testutil::tiny_dataset(4);
  EXPECT_FALSE(a == c);
}

TEST(Generate, SplitsRespectSeenAndHeldOut) {
  GenerateOptions opt;
  opt.samples_per_cell = 50;
  DomainDataset ds = generate(opt);
  const Manifest& m = ds.manifest();
  EXPECT_EQ(m.held_out_domain_id, 3);
  EXPECT_EQ(m.seen_class_ids, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(m.unseen_class_ids, (std::vector<int>{6, 7, 8, 9}));
  for (const auto* split : {&ds.train(), &ds.val()}) {
    for (const Sample& s : *split) {
      EXPECT_TRUE(m.is_seen(s.class_id));
      EXPECT_NE(s.domain_id, m.held_out_domain_id);
    }
  }
  for (const Sample& s : ds.test()) EXPECT_EQ(s.domain_id, m.held_out_domain_id);
  // per-cell counts: train + val == samples_per_cell for every source cell
  std::map<CellKey, std::size_t> counts;
  for (const auto* split : {&ds.train(), &ds.val()})
    for (const Sample& s : *split) ++counts[{s.domain_id, s.class_id}];
  EXPECT_EQ(counts.size(), 3u * 6u);
  for (const auto& [cell, n] : counts) EXPECT_EQ(n, 50u);
  EXPECT_EQ(ds.test().size(), 10u * 50u);
  EXPECT_EQ(ds.val().size(), 3u * 6u * 5u);
}

TEST(Generate, ZeroNoiseMakesClassSamplesIdenticalWithinDomain) {
  GenerateOptions opt;
  opt.samples_per_cell = 10;
  opt.class_noise = 0.0;
  DomainDataset ds = generate(opt);
  std::map<CellKey, std::vector<double>> first;
  for (const Sample& s : ds.train()) {
    auto [it, inserted] = first.emplace(CellKey{s.domain_id, s.class_id}, s.features);
    if (!inserted) EXPECT_EQ(it->second, s.features);
  }
}

TEST(Generate, RejectsInvalidParameters) {
  GenerateOptions opt;
  opt.num_unseen_classes = 10;
  EXPECT_THROW(generate(opt), ParameterError);
  opt = {};
  opt.num_domains = 3;
  EXPECT_THROW(generate(opt), ParameterError);
  opt = {};
  opt.val_fraction = 1.0;
  EXPECT_THROW(generate(opt), ParameterError);
}

TEST(Generate, EasyDifficultyIsSeparableByNearestCentroid) {
  GenerateOptions opt;
  opt.seed = 5;
  DomainDataset ds = generate(opt);
  EXPECT_GT(oracle::nearest_centroid_accuracy(ds), 0.9);
}

TEST(Generate, DifficultyPresetsGetHarder) {
  double acc[3];
  int i = 0;
  for (Difficulty d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard}) {
    GenerateOptions opt;
    opt.difficulty = d;
    opt.samples_per_cell = 100;
    acc[i++] = oracle::nearest_centroid_accuracy(generate(opt));
  }
  EXPECT_GE(acc[0], acc[1]);
  EXPECT_GE(acc[1], acc[2]);
}

TEST(SaveLoad, RoundTripIsExact) {
  testutil::TempDir dir("dataset");
  DomainDataset ds = testutil::tiny_dataset();
  save(ds, dir.path());
  for (const char* f : {"manifest.json", "train.csv", "val.csv", "test.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  DomainDataset back = load(dir.path());
  EXPECT_TRUE(ds == back);
  const std::string header = testutil::slurp(dir / "train.csv").substr(0, 40);
  EXPECT_EQ(header.rfind("class_id,domain_id,f_0,f_1,f_2,f_3\n", 0), 0u);
}

TEST(SaveLoad, RejectsOverlappingSeenAndUnseen) {
  testutil::TempDir dir("overlap");
  save(testutil::tiny_dataset(), dir.path());
  auto j = nlohmann::json::parse(testutil::slurp(dir / "manifest.json"));
  j["unseen_class_ids"] = {3, 4};
  std::ofstream(dir / "manifest.json") << j.dump();
  EXPECT_THROW(load(dir.path()), IngestionError);
}

TEST(SaveLoad, WrongFeatureCountNamesTheLine) {
  testutil::TempDir dir("badrow");
  save(testutil::tiny_dataset(), dir.path());
  std::string text = testutil::slurp(dir / "val.csv");
  text += "0,0,1.5,2.5\n";
  std::ofstream(dir / "val.csv", std::ios::binary) << text;
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  try {
    load(dir.path());
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("val.csv:" + std::to_string(lines) + ":"), std::string::npos) << msg;
  }
}

TEST(SaveLoad, UnknownIdsAreRejected) {
  testutil::TempDir dir("badid");
  save(testutil::tiny_dataset(), dir.path());
  std::string text = testutil::slurp(dir / "train.csv");
  text += "42,0,1,2,3,4\n";
  std::ofstream(dir / "train.csv", std::ios::binary) << text;
  EXPECT_THROW(load(dir.path()), IngestionError);
}

TEST(SaveLoad, MissingManifestIsIngestionError) {
  testutil::TempDir dir("missing");
  EXPECT_THROW(load(dir.path()), IngestionError);
}

TEST(SampleBatch, SizeZeroIsEmpty) {
  DomainDataset ds = testutil::tiny_dataset();
  Rng rng(1);
  EXPECT_TRUE(sample_batch(ds, rng, {{0}, {0}, 0}).empty());
}

TEST(SampleBatch, SingleCellConstraint) {
  DomainDataset ds = testutil::tiny_dataset();
  Rng rng(1);
  SampleRefs b = sample_batch(ds, rng, {{1}, {2}, 5});
  ASSERT_EQ(b.size(), 5u);
  for (const Sample* s : b) {
    EXPECT_EQ(s->domain_id, 1);
    EXPECT_EQ(s->class_id, 2);
  }
}

TEST(SampleBatch, DeterministicForFixedSeed) {
  DomainDataset ds = testutil::tiny_dataset();
  Rng a(9), b(9);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(sample_batch(ds, a, {{0, 1}, {0, 1, 2}, 8}), sample_batch(ds, b, {{0, 1}, {0, 1, 2}, 8}));
}

TEST(SampleBatch, EmptyCellErrorNamesTheCell) {
  DomainDataset ds = testutil::tiny_dataset();
  Rng rng(1);
  try {
    sample_batch(ds, rng, {{0, 3}, {1}, 4});  // domain 3 is held out
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("(domain 3, class 1)"), std::string::npos) << e.what();
  }
}

TEST(Rng, ChooseReturnsDistinctElements) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    auto c = rng.choose(std::vector<int>{0, 1, 2, 3, 4, 5}, 3);
    EXPECT_EQ(std::set<int>(c.begin(), c.end()).size(), 3u);
  }
  EXPECT_THROW(rng.choose(std::vector<int>{1}, 2), ParameterError);
}

TEST(Rng, UniformStaysInRange) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.index(7), 7u);
  }
}
