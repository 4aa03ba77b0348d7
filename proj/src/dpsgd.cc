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


#include "dpadapt/dpsgd.h"

#include <cmath>
#include <numeric>

namespace dpadapt {

void DpsgdConfig::Validate() const {
  if (!(clip_norm > 0.0)) throw DomainError("clip_norm must be positive");
  if (!(noise_multiplier > 0.0)) {
    throw DomainError("noise_multiplier must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw DomainError("learning_rate must be positive");
  }
  if (batch_size < 1 || dataset_size < 1 || batch_size > dataset_size) {
    throw InputError("need 1 <= batch_size <= dataset_size");
  }
  if (steps < 0) throw InputError("steps must be non-negative");
}

std::vector<Eigen::VectorXd> ClipPerSample(
    std::span<const Eigen::VectorXd> grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw DomainError("clip_norm must be positive");
  std::vector<Eigen::VectorXd> out;
  out.reserve(grads.size());
  for (const Eigen::VectorXd& g : grads) {
    const double norm = g.norm();
    if (norm > clip_norm) {
      out.push_back(g * (clip_norm / norm));
    } else {
      out.push_back(g);
    }
  }
  return out;
}

void NoisyStep(std::span<const Eigen::VectorXd> clipped_grads,
               const DpsgdConfig& config, Eigen::Ref<Eigen::VectorXd> params,
               Rng& rng) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(params.size());
  for (const Eigen::VectorXd& g : clipped_grads) {
    if (g.size() != params.size()) {
      throw InputError("NoisyStep: gradient and parameter sizes differ");
    }
    total += g;
  }
  if (!config.noise_free) {
    const double sigma = config.noise_multiplier * config.clip_norm;
    for (Eigen::Index j = 0; j < total.size(); ++j) {
      total[j] += rng.Normal(0.0, sigma);
    }
  }
  params -= config.learning_rate * (total / config.batch_size);
}

RdpCurve DpsgdCurve(const DpsgdConfig& config) {
  if (!(config.noise_multiplier > 0.0)) {
    throw DomainError("noise_multiplier must be positive");
  }
  const std::vector<double> alphas = DefaultAlphaGridWithInfinity();
  return ComposeN(GaussianRdp(config.noise_multiplier, alphas), config.steps);
}

DpConversion DpsgdAccountDetailed(const DpsgdConfig& config, double delta) {
  return BestDp(DpsgdCurve(config), delta);
}

PrivacyBudget DpsgdAccount(const DpsgdConfig& config, double delta) {
  return DpsgdAccountDetailed(config, delta).budget;
}

double CalibrateNoiseMultiplier(int steps, double target_epsilon,
                                double delta) {
  if (!(target_epsilon > 0.0)) {
    throw DomainError("target epsilon must be positive");
  }
  DpsgdConfig probe;
  probe.steps = steps;
  auto eps_for = [&](double z) {
    probe.noise_multiplier = z;
    return DpsgdAccount(probe, delta).epsilon;
  };
  double lo = 1e-3, hi = 1.0;
  while (eps_for(hi) > target_epsilon) {
    hi *= 2.0;
    if (hi > 1e9) throw DomainError("target epsilon unreachable");
  }
  if (eps_for(lo) <= target_epsilon) return lo;
  while ((hi - lo) / hi > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (eps_for(mid) > target_epsilon ? lo : hi) = mid;
  }
  return hi;
}

DpsgdHistory TrainDpsgd(Model& model, const LabeledDataset& data,
                        TrainMode mode, const DpsgdConfig& config, Rng& rng) {
  if (data.empty()) throw InputError("TrainDpsgd: empty dataset");
  config.Validate();
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(order);
  size_t cursor = 0;

  DpsgdHistory history;
  std::vector<Eigen::VectorXd> grads;
  for (int step = 0; step < config.steps; ++step) {
    grads.clear();
    double loss = 0.0;
    for (int k = 0; k < config.batch_size; ++k) {
      if (cursor == order.size()) {
        rng.Shuffle(order);
        cursor = 0;
      }
      const size_t i = order[cursor++];
      const Eigen::MatrixXd x = data.features().row(static_cast<Eigen::Index>(i));
      const int y = data.labels()[i];
      LossAndGradient lg = model.Backward(x, std::span<const int>(&y, 1), mode);
      loss += lg.loss;
      grads.push_back(std::move(lg.gradient));
    }
    const std::vector<Eigen::VectorXd> clipped =
        ClipPerSample(grads, config.clip_norm);
    NoisyStep(clipped, config, model.TrainableSlice(mode), rng);
    history.loss.push_back(loss / config.batch_size);
  }
  return history;
}

}  // namespace dpadapt
