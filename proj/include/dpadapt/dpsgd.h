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


#ifndef DPADAPT_DPSGD_H_
#define DPADAPT_DPSGD_H_

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpadapt/adapter_net.h"
#include "dpadapt/common.h"
#include "dpadapt/data_gen.h"
#include "dpadapt/privacy.h"

namespace dpadapt {

struct DpsgdConfig {
  // May be +infinity, which disables clipping.
  double clip_norm = 1.0;
  // Noise stddev on the summed gradient is noise_multiplier * clip_norm.
  double noise_multiplier = 1.0;
  int batch_size = 32;
  int dataset_size = 0;
  double learning_rate = 0.1;
  int steps = 0;
  // Debug switch: skip the Gaussian draw. Accounting is unaffected.
  bool noise_free = false;

  void Validate() const;
  double sampling_rate() const {
    return static_cast<double>(batch_size) / dataset_size;
  }
};

// g * min(1, clip_norm / ||g||_2) for every gradient.
std::vector<Eigen::VectorXd> ClipPerSample(
    std::span<const Eigen::VectorXd> grads, double clip_norm);

// params -= lr * (sum of clipped grads + N(0, (noise_multiplier C)^2 I)) / B,
// where B = config.batch_size.
void NoisyStep(std::span<const Eigen::VectorXd> clipped_grads,
               const DpsgdConfig& config, Eigen::Ref<Eigen::VectorXd> params,
               Rng& rng);

// Per-step Gaussian RDP composed over config.steps, without subsampling
// amplification.
RdpCurve DpsgdCurve(const DpsgdConfig& config);
PrivacyBudget DpsgdAccount(const DpsgdConfig& config, double delta);
DpConversion DpsgdAccountDetailed(const DpsgdConfig& config, double delta);

// Smallest noise multiplier (to 1e-4 relative) whose DpsgdAccount epsilon
// is <= target_epsilon for the given steps.
double CalibrateNoiseMultiplier(int steps, double target_epsilon,
                                double delta);

struct DpsgdHistory {
  std::vector<double> loss;  // Mean clipped-batch loss per step.
};

// Runs config.steps DPSGD updates on the parameters selected by `mode`.
// Per-sample gradients come from one backward pass per example. Batches
// walk through reshuffled epochs of `data`.
DpsgdHistory TrainDpsgd(Model& model, const LabeledDataset& data,
                        TrainMode mode, const DpsgdConfig& config, Rng& rng);

}  // namespace dpadapt

#endif  // DPADAPT_DPSGD_H_
