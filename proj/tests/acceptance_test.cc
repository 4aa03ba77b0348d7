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


// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Tolerances are fixed here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "dpadapt/adapter_net.h"
#include "dpadapt/harness.h"
#include "dpadapt/pate.h"
#include "dpadapt/privacy.h"

namespace dpadapt {
namespace {

constexpr double kUtilityTolerance = 0.01;
constexpr double kConversionTolerance = 1e-9;
constexpr int kDpTrials = 1000000;
constexpr double kDpStandardErrors = 3.0;
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-4;
constexpr int kIdentityInputs = 1000;
constexpr double kPateOverDpsgdPoints = 15.0;
constexpr double kAdapterGapPoints = 10.0;
constexpr double kSaturationPoints = 2.0;
// A topology trains successfully when its utility numerator is positive.
constexpr double kTrainedAccuracy = 50.0;
constexpr double kSyntheticBudgetSeconds = 600.0;
constexpr double kBudgetSlack = 1e-9;

int failures = 0;

void Report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string Fmt(const char* format, double a, double b = 0, double c = 0,
                double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c, d);
  return buf;
}

void UtilityArithmetic() {
  struct Case {
    double accuracy;
    int64_t params;
    double expected;
  };
  const Case cases[] = {{92.10, 5400000, 2.72},
                        {96.49, 5400000, 3.00},
                        {61.13, 21700, 1.13},
                        {88.08, 132840, 3.22}};
  double worst = 0;
  std::string detail;
  for (const Case& c : cases) {
    const double u = Utility(c.accuracy, c.params);
    worst = std::max(worst, std::abs(u - c.expected));
    detail += Fmt("%.4f ", u);
  }
  Report("utility_arithmetic", worst <= kUtilityTolerance,
         detail + Fmt("max_err=%.4f", worst));
}

void RdpConversion() {
  const double log_inv_delta = std::log(1e5);
  const double errors[] = {
      std::abs(RdpToDp(2, 0, 1.0).epsilon - 0.0),
      std::abs(RdpToDp(2, 1, 1e-5).epsilon - (1 + log_inv_delta)),
      std::abs(RdpToDp(101, 1, 1e-5).epsilon - (1 + log_inv_delta / 100)),
  };
  const double worst = *std::max_element(std::begin(errors), std::end(errors));

  bool dominated = true;
  const std::vector<RdpCurve> curves = {
      GaussianRdp(1.1, DefaultAlphaGridWithInfinity()),
      ComposeN(GaussianRdp(3.0, DefaultAlphaGridWithInfinity()), 500),
      ComposeN(PerQueryRdp(20.0, 100), 425),
      ComposeN(PerQueryRdp(0.5, 10), 3),
  };
  for (const RdpCurve& c : curves) {
    for (double delta : {1e-3, 1e-5, 1e-8}) {
      const double best = BestDp(c, delta).budget.epsilon;
      for (const auto& p : c.points()) {
        if (std::isinf(p.epsilon)) continue;
        dominated &= best <= RdpToDp(p.alpha, p.epsilon, delta).epsilon;
      }
    }
  }
  Report("rdp_to_dp_conversion",
         worst <= kConversionTolerance && dominated,
         Fmt("max_err=%.3g best_dp_below_every_order=", worst) +
             (dominated ? "yes" : "no"));
}

void EmpiricalNoisyArgmaxDp() {
  // Pairs differ by one teacher moving its vote.
  const std::vector<std::pair<VoteHistogram, VoteHistogram>> pairs = {
      {VoteHistogram({1, 0}), VoteHistogram({0, 1})},
      {VoteHistogram({5, 4, 1}), VoteHistogram({4, 5, 1})},
      {VoteHistogram({3, 1, 1, 0}), VoteHistogram({2, 1, 1, 1})},
  };
  bool pass = true;
  std::string detail;
  Rng root(2024);
  uint64_t stream = 0;
  for (double lambda : {0.5, 1.0, 2.0}) {
    const double bound = std::exp(2.0 / lambda);
    double worst_excess = -std::numeric_limits<double>::infinity();
    double worst_ratio = 0;
    for (const auto& [h, h_adj] : pairs) {
      const int k = h.num_classes();
      std::vector<double> p(k, 0), q(k, 0);
      Rng rng = root.Split(stream++);
      for (int t = 0; t < kDpTrials; ++t) {
        ++p[NoisyAggregate(h, lambda, rng)];
        ++q[NoisyAggregate(h_adj, lambda, rng)];
      }
      for (int c = 0; c < k; ++c) {
        if (p[c] == 0 || q[c] == 0) continue;  // No estimate for this outcome.
        const double pc = p[c] / kDpTrials, qc = q[c] / kDpTrials;
        for (double ratio : {pc / qc, qc / pc}) {
          // Delta-method standard error of the ratio estimate.
          const double se = ratio * std::sqrt((1 - pc) / (pc * kDpTrials) +
                                              (1 - qc) / (qc * kDpTrials));
          const double excess = (ratio - bound) / se;
          if (excess > worst_excess) {
            worst_excess = excess;
            worst_ratio = ratio;
          }
          pass &= ratio <= bound + kDpStandardErrors * se;
        }
      }
    }
    detail += Fmt("lambda=%.1f max_ratio=%.4f bound=%.4f z=%.2f; ", lambda,
                  worst_ratio, bound, worst_excess);
  }
  Report("empirical_noisy_argmax_dp", pass, detail);
}

double MeanLoss(const Model& m, const Eigen::MatrixXd& x,
                const std::vector<int>& y) {
  const Eigen::MatrixXd logits = m.Forward(x);
  double loss = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    loss += mx + std::log((logits.row(i).array() - mx).exp().sum()) -
            logits(i, y[i]);
  }
  return loss / logits.rows();
}

constexpr Connection kTopologies[] = {Connection::kNone,
                                      Connection::kNeighboring,
                                      Connection::kUnet, Connection::kDensenet};

void GradientOracle() {
  double worst = 0;
  for (Connection conn : kTopologies) {
    ModelConfig cfg;
    cfg.encoder = {6, 7, 2};
    cfg.num_classes = 3;
    cfg.adapters = AdapterConfig{3, conn, {}};
    Rng rng(31);
    Model m = Model::Create(cfg, rng);
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) {
      m.mutable_parameters()(i) = rng.Normal(0.0, 0.5);
    }
    Eigen::MatrixXd x(5, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.Normal();
    const std::vector<int> y = {0, 2, 1, 1, 0};
    for (TrainMode mode : {TrainMode::kFullFinetune, TrainMode::kAdapters}) {
      const LossAndGradient g = m.Backward(x, y, mode);
      const Model::Range r = m.TrainableRange(mode);
      for (size_t k = 0; k < r.size; ++k) {
        Model plus = m, minus = m;
        plus.mutable_parameters()(r.offset + k) += kFiniteDifferenceStep;
        minus.mutable_parameters()(r.offset + k) -= kFiniteDifferenceStep;
        const double fd = (MeanLoss(plus, x, y) - MeanLoss(minus, x, y)) /
                          (2 * kFiniteDifferenceStep);
        const double rel =
            std::abs(fd - g.gradient(k)) /
            std::max(1e-6, std::abs(fd) + std::abs(g.gradient(k)));
        worst = std::max(worst, rel);
      }
    }
  }
  Report("gradient_oracle", worst < kGradientTolerance,
         Fmt("max_relative_error=%.3g over 4 topologies", worst));
}

void ZeroInitIdentity() {
  bool identical = true;
  for (Connection conn : kTopologies) {
    ModelConfig plain_cfg;
    plain_cfg.encoder = {10, 16, 6};
    plain_cfg.num_classes = 5;
    Rng rng(41);
    const Model plain = Model::Create(plain_cfg, rng);
    Rng head_rng(42);
    const Model adapted =
        plain.WithFreshHead(5, AdapterConfig{4, conn, {}}, head_rng);
    Model reference = plain;
    reference.MutableView(reference.block("head.weight")) =
        adapted.View(adapted.block("head.weight"));
    Eigen::MatrixXd x(kIdentityInputs, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.Normal();
    identical &= adapted.Forward(x) == reference.Forward(x);
  }
  Report("zero_init_identity", identical,
         Fmt("%g inputs x 4 topologies bit-identical", kIdentityInputs));
}

void ParameterCountAnchor() {
  ModelConfig cfg;
  cfg.encoder = {40, 192, 12};
  cfg.num_classes = 13;
  cfg.adapters = AdapterConfig{24, Connection::kNone, {}};
  const int64_t adapters = CountAdapterParameters(cfg);
  const double millions = adapters / 1e6;
  const bool rounds = std::round(millions * 10) / 10 == 0.1 &&
                      std::round(millions * 100) / 100 == 0.11;
  bool increasing = true;
  int64_t previous = 0;
  for (int d = 1; d <= 288; ++d) {
    cfg.adapters->down_dim = d;
    const int64_t n = CountTrainable(cfg, TrainMode::kAdapters);
    increasing &= n > previous;
    previous = n;
  }
  Report("parameter_count_anchor", rounds && increasing,
         Fmt("adapter_params=%.0f (%.3fM) strictly_increasing_d1..288=",
             static_cast<double>(adapters), millions) +
             (increasing ? "yes" : "no"));
}

void SyntheticSuite() {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig base;  // The default synthetic task.
  base.seeds = {1, 2, 3, 4, 5};
  base.threads = std::max(1u, std::thread::hardware_concurrency());
  PretrainCache cache;
  std::vector<ExperimentReport> all;
  auto run = [&](const std::string& label,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
    ExperimentConfig cfg = base;
    cfg.label = label;
    for (const auto& [k, v] : kv) SetConfigValue(cfg, k, v);
    all.push_back(Run(cfg, &cache));
    const ExperimentReport& r = all.back();
    std::printf("  run %-18s acc=%6.2f utility=%.3f params=%lld eps=%s (%.1fs)\n",
                label.c_str(), r.mean_accuracy, r.utility,
                static_cast<long long>(r.trainable_params),
                r.epsilon_spent ? Fmt("%.4f", *r.epsilon_spent).c_str() : "-",
                r.wall_time_seconds);
    std::fflush(stdout);
    return r;
  };

  const ExperimentReport ft = run("ft/none", {{"method", "ft"}});
  const ExperimentReport dpsgd =
      run("ft/dpsgd", {{"method", "ft"}, {"privacy", "dpsgd"}});
  const ExperimentReport pate =
      run("ft/pate", {{"method", "ft"}, {"privacy", "pate"}});
  const std::vector<int> dims = {3, 8, 24, 64};
  std::vector<ExperimentReport> sweep;
  for (int d : dims) {
    sweep.push_back(run("adapters-d" + std::to_string(d) + "/pate",
                        {{"method", "adapters"},
                         {"privacy", "pate"},
                         {"adapter.d", std::to_string(d)}}));
  }
  // The small-d adapter run doubles as the no-connection topology run.
  const int small = 1;
  std::vector<ExperimentReport> topologies = {sweep[small]};
  for (const char* t : {"neighboring", "unet", "densenet"}) {
    topologies.push_back(run(std::string("adapters-") + t + "/pate",
                             {{"method", "adapters"},
                              {"privacy", "pate"},
                              {"adapter.d", std::to_string(dims[small])},
                              {"adapter.connection", t}}));
  }

  const double gap = pate.mean_accuracy - dpsgd.mean_accuracy;
  Report("synthetic_a_pate_beats_dpsgd", gap >= kPateOverDpsgdPoints,
         Fmt("pate_ft=%.2f dpsgd_ft=%.2f gap=%.2f need>=%.0f",
             pate.mean_accuracy, dpsgd.mean_accuracy, gap,
             kPateOverDpsgdPoints));

  const double adapter_gap = ft.mean_accuracy - sweep[small].mean_accuracy;
  Report("synthetic_b_pate_adapters_near_ft",
         adapter_gap <= kAdapterGapPoints,
         Fmt("ft_none=%.2f pate_adapters_d8=%.2f gap=%.2f need<=%.0f",
             ft.mean_accuracy, sweep[small].mean_accuracy, adapter_gap,
             kAdapterGapPoints));

  const double top_half =
      std::max(sweep[2].mean_accuracy, sweep[3].mean_accuracy);
  const bool saturates = top_half >= pate.mean_accuracy - kSaturationPoints;
  size_t best = 0;
  for (size_t i = 1; i < sweep.size(); ++i) {
    if (sweep[i].utility > sweep[best].utility) best = i;
  }
  const bool interior = best != 0 && best != sweep.size() - 1 &&
                        sweep[0].utility < sweep[best].utility &&
                        sweep.back().utility < sweep[best].utility;
  std::string utilities;
  for (size_t i = 0; i < sweep.size(); ++i) {
    utilities += Fmt("u(%.0f)=%.3f ", dims[i], sweep[i].utility);
  }
  Report("synthetic_c_d_sweep_saturation_and_interior_utility",
         saturates && interior,
         Fmt("max_acc_d24_d64=%.2f pate_ft=%.2f need_within=%.0f ", top_half,
             pate.mean_accuracy, kSaturationPoints) +
             utilities + "best_d=" + std::to_string(dims[best]));

  bool within = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (const ExperimentReport& r : all) {
    if (!r.target_epsilon) continue;
    for (const SeedResult& s : r.seeds) {
      within &= s.epsilon_spent.has_value() &&
                *s.epsilon_spent <= *r.target_epsilon + kBudgetSlack;
      if (s.epsilon_spent) {
        worst_margin = std::min(worst_margin, *r.target_epsilon - *s.epsilon_spent);
      }
    }
  }
  Report("synthetic_d_budget_never_exceeded", within,
         Fmt("min_remaining_epsilon=%.6f across all private seeds",
             worst_margin));

  bool trained = true;
  std::string accs;
  for (const ExperimentReport& r : topologies) {
    trained &= std::isfinite(r.mean_accuracy) &&
               r.mean_accuracy >= kTrainedAccuracy;
    accs += std::string(ConnectionName(r.connection)) +
            Fmt("=%.2f ", r.mean_accuracy);
  }
  Report("synthetic_e_all_topologies_train", trained,
         accs + Fmt("need>=%.0f each, no ordering required", kTrainedAccuracy));

  const double seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  Report("synthetic_runtime", seconds < kSyntheticBudgetSeconds,
         Fmt("%.1fs for 5 seeds, need<%.0fs", seconds,
             kSyntheticBudgetSeconds));
}

}  // namespace
}  // namespace dpadapt

int main() {
  using namespace dpadapt;
  UtilityArithmetic();
  RdpConversion();
  EmpiricalNoisyArgmaxDp();
  GradientOracle();
  ZeroInitIdentity();
  ParameterCountAnchor();
  SyntheticSuite();
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
