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


#ifndef DPADAPT_PATE_H_
#define DPADAPT_PATE_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpadapt/adapter_net.h"
#include "dpadapt/common.h"
#include "dpadapt/data_gen.h"
#include "dpadapt/privacy.h"
#include "json.hpp"

namespace dpadapt {

// Per-class teacher vote counts.
class VoteHistogram {
 public:
  explicit VoteHistogram(std::vector<int> counts);

  const std::vector<int>& counts() const { return counts_; }
  int num_classes() const { return static_cast<int>(counts_.size()); }
  int total() const;
  // Top count minus runner-up count.
  int Gap() const;

 private:
  std::vector<int> counts_;
};

struct PateConfig {
  double lambda = 10.0;  // Laplace scale on each vote count.
  int num_teachers = 10;
  // Upper bound on student queries; 0 performs no labelling.
  int max_queries = 1000;
  PrivacyBudget target_budget{8.0, 1e-5};
  // Debug switch: plain argmax without noise. Accounting is unaffected.
  bool noise_free = false;

  void Validate() const;
};

// Teachers share the base model's architecture; in linear_probe and
// adapters mode they also share its frozen weights bit-for-bit.
struct TeacherEnsemble {
  std::vector<Model> teachers;
  TrainMode mode = TrainMode::kAdapters;
  int num_classes = 0;
};

// Order-randomised split into n chunks whose sizes differ by at most one.
std::vector<LabeledDataset> PartitionDisjoint(const LabeledDataset& data,
                                              int n_teachers, Rng& rng);

// Copy of `base` trained on `chunk`.
Model TrainTeacher(const Model& base, const LabeledDataset& chunk,
                   TrainMode mode, const TrainConfig& config, Rng& rng);

// Teacher i trains on chunks[i] with stream rng.Split(i). Teachers train on
// up to `num_threads` threads; the result does not depend on the count.
TeacherEnsemble TrainTeachers(const std::vector<LabeledDataset>& chunks,
                              const Model& base, TrainMode mode,
                              const TrainConfig& config, const Rng& rng,
                              int num_threads = 1);

VoteHistogram Vote(const TeacherEnsemble& ensemble, const Eigen::VectorXd& x);
// Histograms for every row of `inputs`.
std::vector<VoteHistogram> VoteBatch(const TeacherEnsemble& ensemble,
                                     const Eigen::MatrixXd& inputs);

// argmax_c (counts[c] + Lap(lambda)), lowest index on ties.
int NoisyAggregate(const VoteHistogram& hist, double lambda, Rng& rng);
// argmax_c counts[c], lowest index on ties.
int PlainArgmax(const VoteHistogram& hist);

// RDP of one NoisyAggregate call. Moving one teacher's vote changes two
// counts by one, so this is twice the scalar Laplace RDP at scale lambda;
// its max-divergence point is the pure bound 2 / lambda. The bound does not
// depend on the votes or on the ensemble size.
RdpCurve PerQueryRdp(double lambda, int n_teachers);

// Privacy state of the student-labelling phase.
class QueryLedger {
 public:
  explicit QueryLedger(RdpCurve per_query);

  int64_t queries_spent() const { return queries_spent_; }
  const RdpCurve& per_query() const { return per_query_; }
  const RdpCurve& accumulated() const { return accumulated_; }
  // Top-minus-runner-up vote gap of every answered query, in order.
  const std::vector<int>& vote_gaps() const { return vote_gaps_; }

  // Budget spent so far at the given delta.
  DpConversion Spent(double delta) const;
  // Budget after one more query.
  DpConversion SpentAfterNextQuery(double delta) const;

  void RecordQuery(int vote_gap);

  // Max pointwise |accumulated - queries_spent x per_query|.
  double ConsistencyError() const;

  nlohmann::json ToJson(double delta) const;

 private:
  int64_t queries_spent_ = 0;
  RdpCurve per_query_;
  RdpCurve accumulated_;
  std::vector<int> vote_gaps_;
};

struct LabelingResult {
  PublicDataset labeled;
  QueryLedger ledger;
  // True when labelling stopped because the next query would overspend.
  bool budget_exhausted = false;
};

// Labels up to min(|public_inputs|, max_queries) inputs in order, one noisy
// aggregate each. Before every query the composed cost is checked against
// config.target_budget; labelling stops short instead of overspending.
// Throws BudgetError when queries are requested but not even one fits.
LabelingResult LabelStudentData(const TeacherEnsemble& ensemble,
                                const PublicDataset& public_inputs,
                                const PateConfig& config, QueryLedger ledger,
                                Rng& rng);

// Copy of `base` trained on privately labelled public data.
Model TrainStudent(const PublicDataset& labeled, const Model& base,
                   TrainMode mode, const TrainConfig& config, Rng& rng);

}  // namespace dpadapt

#endif  // DPADAPT_PATE_H_
