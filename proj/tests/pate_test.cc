// Copyright 2026 The dpadapt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "dpadapt/pate.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <type_traits>
#include <vector>

#include "gtest/gtest.h"

namespace dpadapt {
namespace {

ModelConfig TinyConfig(int num_classes) {
  ModelConfig cfg;
  cfg.encoder = {4, 8, 2};
  cfg.num_classes = num_classes;
  cfg.adapters = AdapterConfig{3, Connection::kNone, {}};
  return cfg;
}

// Classes sit on separate axes, far apart relative to the noise.
LabeledDataset Separable(int n, int num_classes, uint64_t seed,
                         Sensitivity tag) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 4);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % num_classes;
    for (int j = 0; j < 4; ++j) {
      x(i, j) = rng.Normal(j == y[i] ? 4.0 : 0.0, 0.4);
    }
  }
  return LabeledDataset(x, y, num_classes, tag);
}

// Scalar Laplace RDP at unit sensitivity, written out for the oracle.
double LaplaceRdpOracle(double alpha, double b) {
  if (std::isinf(alpha)) return 1.0 / b;
  const double a = alpha;
  // log(u e^x + v e^y) with both exponents factored out of the larger term.
  const double x = std::log(a / (2 * a - 1)) + (a - 1) / b;
  const double y = std::log((a - 1) / (2 * a - 1)) - a / b;
  const double hi = std::max(x, y), lo = std::min(x, y);
  return (hi + std::log1p(std::exp(lo - hi))) / (a - 1);
}

TEST(VoteHistogramTest, GapAndTotal) {
  const VoteHistogram h({3, 1, 1});
  EXPECT_EQ(h.total(), 5);
  EXPECT_EQ(h.Gap(), 2);
  EXPECT_THROW(VoteHistogram({4}), InputError);
  EXPECT_THROW(VoteHistogram({4, -1}), InputError);
}

TEST(PartitionTest, EvenAndRemainderSizes) {
  const LabeledDataset d = Separable(100, 2, 1, Sensitivity::kSensitive);
  Rng rng(2);
  for (const auto& c : PartitionDisjoint(d, 4, rng)) EXPECT_EQ(c.size(), 25u);
  const LabeledDataset ten = Separable(10, 2, 1, Sensitivity::kSensitive);
  std::vector<size_t> sizes;
  for (const auto& c : PartitionDisjoint(ten, 3, rng)) sizes.push_back(c.size());
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<size_t>{3, 3, 4}));
  EXPECT_THROW(PartitionDisjoint(ten, 11, rng), InputError);
}

TEST(PartitionTest, ChunksAreDisjointAndCoverTheInput) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.UniformInt(80));
    const int k = 2 + static_cast<int>(rng.UniformInt(9));
    // Feature 0 doubles as a row id.
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 2);
    std::vector<int> y(n, 0);
    for (int i = 0; i < n; ++i) x(i, 0) = i;
    const LabeledDataset d(x, y, 2, Sensitivity::kSensitive);
    std::multiset<int> ids;
    size_t lo = n, hi = 0;
    for (const auto& c : PartitionDisjoint(d, k, rng)) {
      EXPECT_EQ(c.sensitivity(), Sensitivity::kSensitive);
      lo = std::min(lo, c.size());
      hi = std::max(hi, c.size());
      for (Eigen::Index i = 0; i < c.features().rows(); ++i) {
        ids.insert(static_cast<int>(c.features()(i, 0)));
      }
    }
    EXPECT_LE(hi - lo, 1u);
    std::multiset<int> expected;
    for (int i = 0; i < n; ++i) expected.insert(i);
    EXPECT_EQ(ids, expected);
  }
}

TEST(TeacherTest, ZeroLearningRateKeepsInitialisation) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(2), rng);
  const LabeledDataset d = Separable(40, 2, 2, Sensitivity::kSensitive);
  const auto chunks = PartitionDisjoint(d, 2, rng);
  TrainConfig tc;
  tc.epochs = 1;
  tc.optimizer.learning_rate = 0.0;
  const TeacherEnsemble e =
      TrainTeachers(chunks, base, TrainMode::kAdapters, tc, Rng(5));
  for (const Model& t : e.teachers) {
    EXPECT_TRUE(t.parameters() == base.parameters());
  }
}

TEST(TeacherTest, DeterministicAndThreadCountIndependent) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(2), rng);
  const LabeledDataset d = Separable(40, 2, 2, Sensitivity::kSensitive);
  const std::vector<LabeledDataset> same = {d, d};
  TrainConfig tc;
  tc.epochs = 3;
  Rng a(9), b(9);
  const Model ta = TrainTeacher(base, d, TrainMode::kAdapters, tc, a);
  const Model tb = TrainTeacher(base, d, TrainMode::kAdapters, tc, b);
  EXPECT_TRUE(ta.parameters() == tb.parameters());

  const auto chunks = PartitionDisjoint(Separable(90, 2, 3, Sensitivity::kSensitive),
                                        3, rng);
  const TeacherEnsemble one =
      TrainTeachers(chunks, base, TrainMode::kAdapters, tc, Rng(4), 1);
  const TeacherEnsemble three =
      TrainTeachers(chunks, base, TrainMode::kAdapters, tc, Rng(4), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(one.teachers[i].parameters() == three.teachers[i].parameters());
  }
}

TEST(TeacherTest, SeparableChunksAreLearnedAndEncoderIsShared) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(3), rng);
  const auto chunks =
      PartitionDisjoint(Separable(300, 3, 4, Sensitivity::kSensitive), 5, rng);
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 16;
  const TeacherEnsemble e =
      TrainTeachers(chunks, base, TrainMode::kAdapters, tc, Rng(6));
  ASSERT_EQ(e.teachers.size(), 5u);
  const uint64_t frozen = base.FrozenHash(TrainMode::kAdapters);
  for (size_t i = 0; i < chunks.size(); ++i) {
    EXPECT_GE(Accuracy(e.teachers[i], chunks[i]), 0.95);
    EXPECT_EQ(e.teachers[i].FrozenHash(TrainMode::kAdapters), frozen);
  }
}

TEST(VoteTest, TalliesPredictions) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(3), rng);
  // Teacher predicting class c: zero head weights, bias peaked at c.
  auto constant_teacher = [&](int c) {
    Model m = base;
    m.MutableView(m.block("head.weight")).setZero();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
    b(c) = 1.0;
    m.MutableView(m.block("head.bias")) = b;
    return m;
  };
  TeacherEnsemble e;
  e.num_classes = 3;
  for (int c : {0, 0, 1, 2, 0}) e.teachers.push_back(constant_teacher(c));
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(4);
  EXPECT_EQ(Vote(e, x).counts(), (std::vector<int>{3, 1, 1}));

  TeacherEnsemble same;
  same.num_classes = 3;
  same.teachers.assign(4, base);
  Rng data(2);
  Eigen::MatrixXd xs(1000, 4);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = data.Normal();
  for (const VoteHistogram& h : VoteBatch(same, xs)) {
    EXPECT_EQ(h.total(), 4);
    EXPECT_EQ(*std::max_element(h.counts().begin(), h.counts().end()), 4);
  }
  EXPECT_THROW(Vote(e, Eigen::VectorXd::Ones(3)), InputError);
}

TEST(NoisyAggregateTest, ClearWinnerAndSymmetry) {
  Rng rng(3);
  int wins = 0;
  for (int i = 0; i < 100000; ++i) {
    wins += NoisyAggregate(VoteHistogram({10, 0}), 1.0, rng) == 0;
  }
  EXPECT_GT(wins / 1e5, 0.99);
  int zeros = 0;
  for (int i = 0; i < 100000; ++i) {
    zeros += NoisyAggregate(VoteHistogram({5, 5}), 1.0, rng) == 0;
  }
  EXPECT_NEAR(zeros / 1e5, 0.5, 0.01);
  EXPECT_EQ(PlainArgmax(VoteHistogram({2, 5, 5})), 1);
  EXPECT_THROW(NoisyAggregate(VoteHistogram({1, 1}), 0.0, rng), DomainError);
}

TEST(NoisyAggregateTest, AdjacentHistogramRatiosRespectPureBound) {
  // One teacher moves its vote from class 0 to class 1.
  const VoteHistogram h({6, 4, 2}), h_adj({5, 5, 2});
  const double lambda = 1.0;
  const int trials = 400000;
  Rng rng(11);
  std::vector<double> p(3, 0), q(3, 0);
  for (int i = 0; i < trials; ++i) {
    ++p[NoisyAggregate(h, lambda, rng)];
    ++q[NoisyAggregate(h_adj, lambda, rng)];
  }
  const double bound = std::exp(2.0 / lambda);
  for (int c = 0; c < 3; ++c) {
    const double pc = p[c] / trials, qc = q[c] / trials;
    // Delta-method stderr of the log ratio.
    const double se = std::sqrt((1 - pc) / (pc * trials) + (1 - qc) / (qc * trials));
    EXPECT_LE(std::log(pc / qc), std::log(bound) + 3 * se);
    EXPECT_LE(std::log(qc / pc), std::log(bound) + 3 * se);
  }
}

TEST(PerQueryRdpTest, PureBoundAndOracle) {
  EXPECT_DOUBLE_EQ(PerQueryRdp(2.0, 10).EpsilonAt(kInfiniteOrder), 1.0);
  EXPECT_DOUBLE_EQ(PerQueryRdp(0.25, 10).EpsilonAt(kInfiniteOrder), 8.0);
  for (double lambda : {0.25, 0.5, 2.0, 20.0}) {
    const RdpCurve c = PerQueryRdp(lambda, 50);
    for (const auto& pt : c.points()) {
      EXPECT_NEAR(pt.epsilon, 2 * LaplaceRdpOracle(pt.alpha, lambda),
                  1e-12 * (1 + pt.epsilon));
      EXPECT_LE(pt.epsilon, 2.0 / lambda + 1e-15);
    }
    EXPECT_LE(BestDp(c, 1e-5).budget.epsilon, 2.0 / lambda);
  }
  EXPECT_THROW(PerQueryRdp(0.0, 10), DomainError);
}

TEST(QueryLedgerTest, AccumulatesAndSerializes) {
  QueryLedger ledger(PerQueryRdp(5.0, 10));
  for (int k = 1; k <= 30; ++k) {
    ledger.RecordQuery(k % 7);
    EXPECT_LT(ledger.ConsistencyError(), 1e-9);
  }
  EXPECT_EQ(ledger.queries_spent(), 30);
  for (size_t i = 0; i < ledger.accumulated().size(); ++i) {
    EXPECT_NEAR(ledger.accumulated().points()[i].epsilon,
                30 * ledger.per_query().points()[i].epsilon, 1e-9);
  }
  const nlohmann::json j = ledger.ToJson(1e-5);
  EXPECT_EQ(j["queries_spent"], 30);
  EXPECT_EQ(j["vote_gaps"].size(), 30u);
  EXPECT_EQ(j["alphas"].back(), "inf");
  EXPECT_NEAR(j["epsilon_spent"].get<double>(), ledger.Spent(1e-5).budget.epsilon,
              1e-12);
}

struct LabelFixture {
  TeacherEnsemble ensemble;
  PublicDataset queries;
};

LabelFixture MakeFixture(int num_public) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(3), rng);
  const auto chunks =
      PartitionDisjoint(Separable(300, 3, 4, Sensitivity::kSensitive), 6, rng);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 16;
  return {TrainTeachers(chunks, base, TrainMode::kAdapters, tc, Rng(6)),
          PublicDataset(Separable(num_public, 3, 8, Sensitivity::kPublic))};
}

TEST(LabelStudentDataTest, ZeroQueriesIsANoOp) {
  const LabelFixture f = MakeFixture(20);
  PateConfig cfg;
  cfg.max_queries = 0;
  Rng rng(1);
  const LabelingResult r = LabelStudentData(
      f.ensemble, f.queries, cfg, QueryLedger(PerQueryRdp(cfg.lambda, 6)), rng);
  EXPECT_EQ(r.labeled.size(), 0u);
  EXPECT_EQ(r.ledger.queries_spent(), 0);
  EXPECT_FALSE(r.budget_exhausted);
}

TEST(LabelStudentDataTest, StopsWhereAnIndependentScanPredicts) {
  // Per-query pure epsilon 2 / lambda = 0.1.
  const double lambda = 20.0, delta = 1e-5, target = 8.0;
  std::vector<double> grid(DefaultAlphaGrid().begin(), DefaultAlphaGrid().end());
  grid.push_back(kInfiniteOrder);
  auto eps_after = [&](int k) {
    double best = INFINITY;
    for (double a : grid) {
      const double e = k * 2 * LaplaceRdpOracle(a, lambda);
      best = std::min(best, std::isinf(a) ? e : e + std::log(1 / delta) / (a - 1));
    }
    return best;
  };
  int predicted = 0;
  while (eps_after(predicted + 1) <= target) ++predicted;
  EXPECT_GT(predicted, 80);  // Far beyond the pure-composition count.

  const LabelFixture f = MakeFixture(predicted + 50);
  PateConfig cfg;
  cfg.lambda = lambda;
  cfg.num_teachers = 6;
  cfg.max_queries = predicted + 50;
  cfg.target_budget = {target, delta};
  Rng rng(2);
  const LabelingResult r = LabelStudentData(
      f.ensemble, f.queries, cfg, QueryLedger(PerQueryRdp(lambda, 6)), rng);
  EXPECT_EQ(r.ledger.queries_spent(), predicted);
  EXPECT_EQ(r.labeled.size(), static_cast<size_t>(predicted));
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_LE(r.ledger.Spent(delta).budget.epsilon, target);
  EXPECT_LT(r.ledger.ConsistencyError(), 1e-9);
  EXPECT_EQ(r.ledger.vote_gaps().size(), static_cast<size_t>(predicted));

  // Nothing fits now.
  Rng again(3);
  EXPECT_THROW(LabelStudentData(f.ensemble, f.queries, cfg, r.ledger, again),
               BudgetError);
}

TEST(LabelStudentDataTest, OutputNeverExceedsAnyLimit) {
  const LabelFixture f = MakeFixture(60);
  for (int max_queries : {1, 10, 59, 60, 500}) {
    for (double lambda : {0.5, 2.0, 8.0}) {
      PateConfig cfg;
      cfg.lambda = lambda;
      cfg.max_queries = max_queries;
      Rng rng(4);
      const LabelingResult r = LabelStudentData(
          f.ensemble, f.queries, cfg, QueryLedger(PerQueryRdp(lambda, 6)), rng);
      EXPECT_LE(r.labeled.size(), std::min<size_t>(60, max_queries));
      EXPECT_LE(r.ledger.Spent(cfg.target_budget.delta).budget.epsilon,
                cfg.target_budget.epsilon);
      EXPECT_EQ(r.labeled.data().sensitivity(), Sensitivity::kPublic);
    }
  }
}

TEST(StudentTest, TypeRefusesSensitiveData) {
  static_assert(!std::is_convertible_v<LabeledDataset, PublicDataset>);
  static_assert(!std::is_invocable_v<decltype(&TrainStudent),
                                     const LabeledDataset&, const Model&,
                                     TrainMode, const TrainConfig&, Rng&>);
  EXPECT_THROW(PublicDataset(Separable(10, 2, 1, Sensitivity::kSensitive)),
               InputError);
}

TEST(StudentTest, ZeroLearningRateKeepsInitialisation) {
  Rng rng(1);
  const Model base = Model::Create(TinyConfig(3), rng);
  TrainConfig tc;
  tc.epochs = 2;
  tc.optimizer.learning_rate = 0.0;
  const PublicDataset pub(Separable(30, 3, 2, Sensitivity::kPublic));
  EXPECT_TRUE(TrainStudent(pub, base, TrainMode::kAdapters, tc, rng).parameters() ==
              base.parameters());
}

TEST(StudentTest, NoisyLabelsStayCloseToNoiseFree) {
  const LabelFixture f = MakeFixture(300);
  const PublicDataset eval(Separable(300, 3, 99, Sensitivity::kPublic));
  Rng init(1);
  const Model base = Model::Create(TinyConfig(3), init);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 16;
  double acc[2];
  for (int noisy = 0; noisy < 2; ++noisy) {
    PateConfig cfg;
    cfg.lambda = 0.25;
    cfg.num_teachers = 6;
    cfg.noise_free = noisy == 0;
    // Pure per-query cost is 8, so allow a large budget for this check.
    cfg.target_budget = {1e4, 1e-5};
    Rng rng(5);
    const LabelingResult r = LabelStudentData(
        f.ensemble, f.queries, cfg, QueryLedger(PerQueryRdp(0.25, 6)), rng);
    Rng train(6);
    const Model s = TrainStudent(r.labeled, base, TrainMode::kFullFinetune, tc, train);
    acc[noisy] = Accuracy(s, eval.data());
  }
  EXPECT_GE(acc[0], 0.90);
  EXPECT_GE(acc[1], acc[0] - 0.10);
}

}  // namespace
}  // namespace dpadapt
