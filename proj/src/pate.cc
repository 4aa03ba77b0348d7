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
#include <future>
#include <limits>
#include <numeric>

namespace dpadapt {

VoteHistogram::VoteHistogram(std::vector<int> counts)
    : counts_(std::move(counts)) {
  if (counts_.size() < 2) throw InputError("histogram needs >= 2 classes");
  for (int c : counts_) {
    if (c < 0) throw InputError("vote counts must be non-negative");
  }
}

int VoteHistogram::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0);
}

int VoteHistogram::Gap() const {
  std::vector<int> sorted = counts_;
  std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(),
                    std::greater<>());
  return sorted[0] - sorted[1];
}

void PateConfig::Validate() const {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (num_teachers < 2) throw InputError("need at least 2 teachers");
  if (max_queries < 0) throw InputError("max_queries must be non-negative");
  if (!(target_budget.delta > 0.0 && target_budget.delta < 1.0)) {
    throw DomainError("target delta must lie in (0, 1)");
  }
  if (!(target_budget.epsilon >= 0.0)) {
    throw DomainError("target epsilon must be non-negative");
  }
}

std::vector<LabeledDataset> PartitionDisjoint(const LabeledDataset& data,
                                              int n_teachers, Rng& rng) {
  if (n_teachers < 1) throw InputError("need at least one chunk");
  if (static_cast<size_t>(n_teachers) > data.size()) {
    throw InputError("more teachers than samples");
  }
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(order);
  std::vector<LabeledDataset> chunks;
  chunks.reserve(static_cast<size_t>(n_teachers));
  const size_t base = data.size() / n_teachers;
  const size_t extra = data.size() % n_teachers;
  size_t start = 0;
  for (size_t i = 0; i < static_cast<size_t>(n_teachers); ++i) {
    const size_t len = base + (i < extra ? 1 : 0);
    std::vector<size_t> idx(order.begin() + start, order.begin() + start + len);
    std::sort(idx.begin(), idx.end());
    chunks.push_back(data.Subset(idx));
    start += len;
  }
  return chunks;
}

Model TrainTeacher(const Model& base, const LabeledDataset& chunk,
                   TrainMode mode, const TrainConfig& config, Rng& rng) {
  if (chunk.empty()) throw InputError("TrainTeacher: empty chunk");
  Model teacher = base;
  Train(teacher, chunk, mode, config, rng);
  return teacher;
}

TeacherEnsemble TrainTeachers(const std::vector<LabeledDataset>& chunks,
                              const Model& base, TrainMode mode,
                              const TrainConfig& config, const Rng& rng,
                              int num_threads) {
  if (chunks.size() < 2) throw InputError("need at least 2 teachers");
  for (const auto& c : chunks) {
    if (c.empty()) throw InputError("TrainTeachers: empty chunk");
  }
  TeacherEnsemble ensemble;
  ensemble.mode = mode;
  ensemble.num_classes = base.config().num_classes;
  ensemble.teachers.resize(chunks.size(), base);

  auto train_one = [&](size_t i) {
    Rng stream = rng.Split(i);
    ensemble.teachers[i] = TrainTeacher(base, chunks[i], mode, config, stream);
  };
  const size_t workers =
      std::clamp<size_t>(static_cast<size_t>(std::max(num_threads, 1)), 1,
                         chunks.size());
  if (workers == 1) {
    for (size_t i = 0; i < chunks.size(); ++i) train_one(i);
    return ensemble;
  }
  std::vector<std::future<void>> futures;
  for (size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (size_t i = w; i < chunks.size(); i += workers) train_one(i);
    }));
  }
  for (auto& f : futures) f.get();
  return ensemble;
}

std::vector<VoteHistogram> VoteBatch(const TeacherEnsemble& ensemble,
                                     const Eigen::MatrixXd& inputs) {
  if (ensemble.teachers.empty()) throw InputError("empty ensemble");
  std::vector<std::vector<int>> counts(
      static_cast<size_t>(inputs.rows()),
      std::vector<int>(static_cast<size_t>(ensemble.num_classes), 0));
  for (const Model& teacher : ensemble.teachers) {
    const std::vector<int> predicted = teacher.Predict(inputs);
    for (size_t i = 0; i < predicted.size(); ++i) ++counts[i][predicted[i]];
  }
  std::vector<VoteHistogram> out;
  out.reserve(counts.size());
  for (auto& c : counts) out.emplace_back(std::move(c));
  return out;
}

VoteHistogram Vote(const TeacherEnsemble& ensemble, const Eigen::VectorXd& x) {
  return VoteBatch(ensemble, Eigen::MatrixXd(x.transpose())).front();
}

int NoisyAggregate(const VoteHistogram& hist, double lambda, Rng& rng) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < hist.num_classes(); ++c) {
    const double noisy = hist.counts()[c] + rng.Laplace(lambda);
    if (noisy > best_value) {
      best_value = noisy;
      best = c;
    }
  }
  return best;
}

int PlainArgmax(const VoteHistogram& hist) {
  const auto& c = hist.counts();
  return static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
}

RdpCurve PerQueryRdp(double lambda, int n_teachers) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (n_teachers < 1) throw InputError("need at least one teacher");
  const RdpCurve scalar = LaplaceRdp(lambda, DefaultAlphaGridWithInfinity());
  return ComposeN(scalar, 2);
}

QueryLedger::QueryLedger(RdpCurve per_query)
    : per_query_(std::move(per_query)),
      accumulated_(RdpCurve::Zero(per_query_.Alphas())) {
  if (per_query_.empty()) throw InputError("ledger needs a per-query curve");
}

DpConversion QueryLedger::Spent(double delta) const {
  return BestDp(accumulated_, delta);
}

DpConversion QueryLedger::SpentAfterNextQuery(double delta) const {
  return BestDp(Compose(accumulated_, per_query_), delta);
}

void QueryLedger::RecordQuery(int vote_gap) {
  accumulated_ = Compose(accumulated_, per_query_);
  ++queries_spent_;
  vote_gaps_.push_back(vote_gap);
}

double QueryLedger::ConsistencyError() const {
  const RdpCurve expected = ComposeN(per_query_, queries_spent_);
  double worst = 0.0;
  for (size_t i = 0; i < expected.size(); ++i) {
    const double a = accumulated_.points()[i].epsilon;
    const double b = expected.points()[i].epsilon;
    if (std::isinf(a) && std::isinf(b)) continue;
    worst = std::max(worst, std::fabs(a - b));
  }
  return worst;
}

nlohmann::json QueryLedger::ToJson(double delta) const {
  nlohmann::json alphas = nlohmann::json::array();
  nlohmann::json accumulated = nlohmann::json::array();
  nlohmann::json per_query = nlohmann::json::array();
  // JSON has no infinity; the max-divergence order is written as "inf".
  auto number = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  for (size_t i = 0; i < accumulated_.size(); ++i) {
    alphas.push_back(number(accumulated_.points()[i].alpha));
    accumulated.push_back(number(accumulated_.points()[i].epsilon));
    per_query.push_back(number(per_query_.points()[i].epsilon));
  }
  const DpConversion spent = Spent(delta);
  return nlohmann::json{
      {"queries_spent", queries_spent_},
      {"alphas", alphas},
      {"per_query", per_query},
      {"accumulated", accumulated},
      {"vote_gaps", vote_gaps_},
      {"delta", delta},
      {"epsilon_spent", spent.budget.epsilon},
      {"best_alpha", number(spent.alpha)},
  };
}

LabelingResult LabelStudentData(const TeacherEnsemble& ensemble,
                                const PublicDataset& public_inputs,
                                const PateConfig& config, QueryLedger ledger,
                                Rng& rng) {
  config.Validate();
  const double delta = config.target_budget.delta;
  const double target = config.target_budget.epsilon;
  const size_t wanted = std::min(public_inputs.size(),
                                 static_cast<size_t>(config.max_queries));
  if (wanted > 0 && ledger.SpentAfterNextQuery(delta).budget.epsilon > target) {
    throw BudgetError("privacy budget exhausted before labelling started");
  }
  const LabeledDataset& data = public_inputs.data();
  std::vector<size_t> answered;
  std::vector<int> labels;
  bool exhausted = false;
  // Votes are tallied in chunks, only for queries that are answered.
  constexpr Eigen::Index kChunk = 256;
  std::vector<VoteHistogram> pending;
  size_t pending_start = 0;
  for (size_t i = 0; i < wanted; ++i) {
    if (ledger.SpentAfterNextQuery(delta).budget.epsilon > target) {
      exhausted = true;
      break;
    }
    if (i >= pending_start + pending.size()) {
      pending_start = i;
      const Eigen::Index rows =
          std::min<Eigen::Index>(kChunk, static_cast<Eigen::Index>(wanted - i));
      pending = VoteBatch(ensemble, data.features().middleRows(
                                        static_cast<Eigen::Index>(i), rows));
    }
    const VoteHistogram& hist = pending[i - pending_start];
    labels.push_back(config.noise_free ? PlainArgmax(hist)
                                       : NoisyAggregate(hist, config.lambda, rng));
    answered.push_back(i);
    ledger.RecordQuery(hist.Gap());
  }
  LabeledDataset labeled = data.Subset(answered).WithLabels(std::move(labels));
  return LabelingResult{PublicDataset(std::move(labeled)), std::move(ledger),
                        exhausted};
}

Model TrainStudent(const PublicDataset& labeled, const Model& base,
                   TrainMode mode, const TrainConfig& config, Rng& rng) {
  if (labeled.size() == 0) throw InputError("TrainStudent: no labelled data");
  Model student = base;
  Train(student, labeled.data(), mode, config, rng);
  return student;
}

}  // namespace dpadapt
