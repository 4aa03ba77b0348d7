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


#ifndef DPADAPT_ADAPTER_NET_H_
#define DPADAPT_ADAPTER_NET_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dpadapt/common.h"
#include "dpadapt/data_gen.h"

namespace dpadapt {

// How residual adapters feed each other.
enum class Connection : uint32_t {
  kNone = 0,
  kNeighboring = 1,
  kUnet = 2,
  kDensenet = 3,
};

std::string_view ConnectionName(Connection c);
// Accepts "none", "neighboring", "unet", "densenet".
Connection ParseConnection(std::string_view name);

enum class TrainMode { kFullFinetune, kLinearProbe, kAdapters };

std::string_view TrainModeName(TrainMode mode);

// Input projection to hidden_dim followed by num_layers dense+ReLU blocks.
struct EncoderConfig {
  int input_dim = 40;
  int hidden_dim = 64;
  int num_layers = 4;
};

struct AdapterConfig {
  int down_dim = 8;
  Connection connection = Connection::kNone;
  // Optional per-layer override of down_dim; empty or num_layers entries.
  std::vector<int> per_layer_dims;

  int DimForLayer(int layer) const {
    return per_layer_dims.empty() ? down_dim : per_layer_dims[layer];
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  int num_classes = 2;
  std::optional<AdapterConfig> adapters;

  void Validate() const;
};

// Which parameter group a block belongs to.
enum class ParamGroup { kEncoder, kAdapter, kHead };

struct ParamBlock {
  std::string name;
  ParamGroup group;
  int rows;
  int cols;
  size_t offset;
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

// Input of adapter `layer` (1-based) under `connection`.
//
// `prev_feature` is the output of layer - 1 (the embedding for layer 1).
// `adapter_outputs[k - 1]` holds the output of adapter k for k < layer;
// entries past what the connection needs may be absent. Throws
// InternalError when a required earlier output is missing.
Eigen::VectorXd AdapterInput(int layer, int num_layers, Connection connection,
                             const Eigen::VectorXd& prev_feature,
                             std::span<const Eigen::VectorXd> adapter_outputs);

// Layers whose adapter output feeds adapter `layer` (1-based) besides the
// previous feature. Empty for kNone and for layer 1.
std::vector<int> AdapterSkipSources(int layer, int num_layers,
                                    Connection connection);

struct LossAndGradient {
  double loss = 0.0;
  // Gradient of the mean loss over the TrainableRange of the active mode.
  Eigen::VectorXd gradient;
};

// Frozen-encoder classifier with optional residual adapters.
//
// Layer recursion, for i = 1..N with F_0 the input embedding:
//   A_i = Up_i(relu(Down_i(u_i)))     u_i from AdapterInput
//   F_i = relu(W_i F_{i-1} + b_i) + A_i
//   logits = W_head F_N + b_head
// Parameters live in one flat vector laid out encoder | adapters | head, so
// every TrainMode trains one contiguous range.
class Model {
 public:
  // Encoder and head use scaled uniform init; adapter down-projections are
  // small-uniform and up-projections are zero.
  static Model Create(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  bool has_adapters() const { return config_.adapters.has_value(); }

  std::span<const ParamBlock> blocks() const { return blocks_; }
  const ParamBlock& block(std::string_view name) const;

  // Indices into blocks(), resolved once so the hot paths skip name
  // lookups. Adapter vectors are empty without an adapter stack.
  struct BlockIndex {
    size_t embed_weight = 0, embed_bias = 0, head_weight = 0, head_bias = 0;
    std::vector<size_t> weight, bias;  // Per encoder layer.
    std::vector<size_t> down_weight, down_bias, up_weight, up_bias;
  };
  const BlockIndex& index() const { return index_; }

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& mutable_parameters() { return params_; }

  Eigen::Map<const Eigen::MatrixXd> View(const ParamBlock& block) const;
  Eigen::Map<Eigen::MatrixXd> MutableView(const ParamBlock& block);

  // [offset, offset + size) of the parameters updated under `mode`.
  struct Range {
    size_t offset;
    size_t size;
  };
  Range TrainableRange(TrainMode mode) const;
  Eigen::VectorBlock<Eigen::VectorXd> TrainableSlice(TrainMode mode);
  // Hash of every parameter outside TrainableRange(mode).
  uint64_t FrozenHash(TrainMode mode) const;

  // Logits, one row per input row. Throws InputError on a width mismatch.
  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd Forward(const Eigen::VectorXd& input) const;
  std::vector<int> Predict(const Eigen::MatrixXd& inputs) const;

  // Mean softmax cross-entropy over the batch and its exact gradient with
  // respect to the parameters trainable under `mode`.
  LossAndGradient Backward(const Eigen::MatrixXd& inputs,
                           std::span<const int> labels, TrainMode mode) const;

  // Copy with freshly initialised adapters (or none) and a fresh head for
  // `num_classes`; encoder weights are kept bit-for-bit.
  Model WithFreshHead(int num_classes, std::optional<AdapterConfig> adapters,
                      Rng& rng) const;

 private:
  Model(ModelConfig config, std::vector<ParamBlock> blocks);

  void CheckMode(TrainMode mode) const;

  ModelConfig config_;
  std::vector<ParamBlock> blocks_;
  BlockIndex index_;
  Eigen::VectorXd params_;
};

// Exact number of parameters updated under `mode`.
int64_t CountTrainable(const Model& model, TrainMode mode);
// Same count from shapes alone, for configurations too large to allocate.
int64_t CountTrainable(const ModelConfig& config, TrainMode mode);
// Parameters of the adapter stack alone.
int64_t CountAdapterParameters(const ModelConfig& config);

// Vector-level AdamW with decoupled weight decay.
struct AdamWConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(AdamWConfig config, Eigen::Index size);
  void Step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);

 private:
  AdamWConfig config_;
  Eigen::VectorXd m_, v_;
  int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  AdamWConfig optimizer;
  // Training accuracy per epoch costs one extra forward pass over the data.
  bool track_accuracy = true;
};

struct TrainHistory {
  std::vector<double> loss;      // Mean minibatch loss per epoch.
  // Training accuracy after each epoch, when tracked.
  std::vector<double> accuracy;
};

// Minibatch AdamW over the parameters selected by `mode`.
TrainHistory Train(Model& model, const LabeledDataset& data, TrainMode mode,
                   const TrainConfig& config, Rng& rng);

// Fraction in [0, 1] of correctly classified rows.
double Accuracy(const Model& model, const LabeledDataset& data);

// Checkpoint layout, little-endian:
//   "DPAM" | u32 version=1 | u32 input_dim | u32 hidden_dim | u32 num_layers |
//   u32 num_classes | u32 has_adapters | u32 down_dim | u32 topology |
//   u32 per_layer_dims[num_layers] (when has_adapters) |
//   f32 parameters in block declaration order (matrices column-major).
// Parameters are stored as float32, so a round trip rounds them.
void SaveCheckpoint(const Model& model, std::ostream& out);
Model LoadCheckpoint(std::istream& in);

}  // namespace dpadapt

#endif  // DPADAPT_ADAPTER_NET_H_
