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


#ifndef DPADAPT_HARNESS_H_
#define DPADAPT_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpadapt/adapter_net.h"
#include "dpadapt/data_gen.h"
#include "dpadapt/dpsgd.h"
#include "dpadapt/pate.h"
#include "json.hpp"

namespace dpadapt {

enum class Method { kFromScratch, kFineTune, kLinearProbe, kAdapters };
enum class Privacy { kNone, kDpsgd, kPate };

std::string_view MethodName(Method m);  // "fs", "ft", "lp", "adapters"
std::string_view PrivacyName(Privacy p);  // "none", "dpsgd", "pate"
Method ParseMethod(std::string_view name);
Privacy ParsePrivacy(std::string_view name);
TrainMode ModeFor(Method m);

// (accuracy - 50) / ln(trainable_params). Throws DomainError when
// trainable_params < 2.
double Utility(double accuracy_percent, int64_t trainable_params);

struct DpsgdSettings {
  double clip_norm = 1.0;
  // Unset: calibrated so the run spends exactly the target epsilon.
  std::optional<double> noise_multiplier;
  int batch_size = 64;
  double learning_rate = 0.5;
  int epochs = 2;
  double target_epsilon = 8.0;
  bool noise_free = false;
};

struct ExperimentConfig {
  Method method = Method::kFineTune;
  Privacy privacy = Privacy::kNone;
  AdapterConfig adapter;
  EncoderConfig encoder;  // input_dim is taken from the data spec.
  // Default task: non-convex classes (four sub-clusters each) under a strong
  // shift, hard enough that very narrow adapters fall short.
  SyntheticSpec data{.samples_per_class = 1000,
                     .domain_shift = 3.25,
                     .clusters_per_class = 4,
                     .noise_stddev = 0.5};
  double test_fraction = 0.4;
  TrainConfig pretrain{.epochs = 20,
                       .batch_size = 64,
                       .optimizer = {.learning_rate = 3e-3},
                      .track_accuracy = false};
  TrainConfig train{.epochs = 50,
                    .batch_size = 32,
                    .optimizer = {.learning_rate = 3e-3},
                    .track_accuracy = false};
  TrainConfig teacher{.epochs = 50,
                      .batch_size = 32,
                      .optimizer = {.learning_rate = 3e-3},
                      .track_accuracy = false};
  std::optional<PateConfig> pate;
  std::optional<DpsgdSettings> dpsgd;
  std::vector<uint64_t> seeds{1};
  double delta = 1e-5;
  int threads = 1;
  std::string label;

  // Throws ConfigError when the privacy regime lacks its settings or a
  // value is out of range.
  void Validate() const;
};

// Flat "key = value" text, '#' starts a comment. Unknown keys are errors.
// Setting privacy = pate or dpsgd enables that regime's defaults. PATE starts
// at 100 teachers and lambda = 15 rather than the bare PateConfig values.
ExperimentConfig ParseConfig(std::istream& in);
ExperimentConfig ParseConfigFile(const std::string& path);
// Applies one assignment on top of an existing config.
void SetConfigValue(ExperimentConfig& config, std::string_view key,
                    std::string_view value);
// Every key with its current value, in ParseConfig syntax.
std::string FormatConfig(const ExperimentConfig& config);

struct SeedResult {
  uint64_t seed = 0;
  double accuracy = 0.0;  // Percent on the eval split.
  size_t eval_size = 0;
  std::optional<double> epsilon_spent;  // Unset for non-private runs.
  // PATE only.
  int64_t queries_answered = 0;
  bool budget_exhausted = false;
  double teacher_mean_accuracy = 0.0;
  std::optional<nlohmann::json> ledger;
  // DPSGD only.
  double noise_multiplier = 0.0;
  double sampling_rate = 0.0;
  int steps = 0;
};

struct ExperimentReport {
  std::string label;
  Method method = Method::kFineTune;
  Privacy privacy = Privacy::kNone;
  int adapter_d = 0;
  Connection connection = Connection::kNone;
  std::vector<SeedResult> seeds;
  double mean_accuracy = 0.0;
  int64_t trainable_params = 0;
  int64_t total_params = 0;
  double utility = 0.0;
  std::optional<double> epsilon_spent;  // Max over seeds.
  std::optional<double> target_epsilon;
  double delta = 0.0;
  double wall_time_seconds = 0.0;

  size_t eval_size() const;
  nlohmann::json ToJson() const;
};

// Caches source-domain pretraining across runs that share data, encoder,
// pretraining settings and seed. Thread-safe.
class PretrainCache {
 public:
  std::shared_ptr<const Model> GetOrTrain(const ExperimentConfig& config,
                                          uint64_t seed);

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Model>> models_;
};

// Trains on the source domain with every parameter trainable.
Model Pretrain(const ExperimentConfig& config, const LabeledDataset& source,
               uint64_t seed);

// generate -> split -> pretrain -> adapt under the privacy regime ->
// evaluate, for every seed. Deterministic per seed apart from wall time.
ExperimentReport Run(const ExperimentConfig& config,
                     PretrainCache* cache = nullptr);

enum class SweepAxis { kAdapterDim, kTopology, kLambda };
SweepAxis ParseSweepAxis(std::string_view name);
std::string_view SweepAxisName(SweepAxis axis);

struct SweepResult {
  SweepAxis axis;
  std::vector<std::string> values;
  std::vector<ExperimentReport> reports;  // Same order as values.
  std::string summary_csv;
};

// One Run per value, reports ordered by axis value.
SweepResult Sweep(const ExperimentConfig& base, SweepAxis axis,
                  std::span<const std::string> values,
                  PretrainCache* cache = nullptr);

// Table-shaped CSV: label,method,dp,trainable_params,utility,accuracy,epsilon.
std::string SummaryCsv(std::span<const ExperimentReport> reports,
                       std::string_view first_column = "label",
                       std::span<const std::string> first_values = {});

// Eval-size weighted mean accuracy over several runs (e.g. languages).
double WeightedAccuracy(std::span<const ExperimentReport> reports);

}  // namespace dpadapt

#endif  // DPADAPT_HARNESS_H_
