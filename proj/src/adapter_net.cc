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


#include "dpadapt/adapter_net.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "binary_io.h"

namespace dpadapt {
namespace {

constexpr uint32_t kCheckpointVersion = 1;

std::vector<ParamBlock> BuildLayout(const ModelConfig& config) {
  std::vector<ParamBlock> blocks;
  size_t offset = 0;
  auto add = [&](std::string name, ParamGroup group, int rows, int cols) {
    blocks.push_back(ParamBlock{std::move(name), group, rows, cols, offset});
    offset += blocks.back().size();
  };
  const EncoderConfig& enc = config.encoder;
  add("embed.weight", ParamGroup::kEncoder, enc.hidden_dim, enc.input_dim);
  add("embed.bias", ParamGroup::kEncoder, enc.hidden_dim, 1);
  for (int i = 1; i <= enc.num_layers; ++i) {
    const std::string p = "layer" + std::to_string(i);
    add(p + ".weight", ParamGroup::kEncoder, enc.hidden_dim, enc.hidden_dim);
    add(p + ".bias", ParamGroup::kEncoder, enc.hidden_dim, 1);
  }
  if (config.adapters) {
    for (int i = 1; i <= enc.num_layers; ++i) {
      const int d = config.adapters->DimForLayer(i - 1);
      const std::string p = "adapter" + std::to_string(i);
      add(p + ".down.weight", ParamGroup::kAdapter, d, enc.hidden_dim);
      add(p + ".down.bias", ParamGroup::kAdapter, d, 1);
      add(p + ".up.weight", ParamGroup::kAdapter, enc.hidden_dim, d);
      add(p + ".up.bias", ParamGroup::kAdapter, enc.hidden_dim, 1);
    }
  }
  add("head.weight", ParamGroup::kHead, config.num_classes, enc.hidden_dim);
  add("head.bias", ParamGroup::kHead, config.num_classes, 1);
  return blocks;
}

size_t TotalSize(const std::vector<ParamBlock>& blocks) {
  return blocks.back().offset + blocks.back().size();
}

size_t FirstOffset(const std::vector<ParamBlock>& blocks, ParamGroup group) {
  for (const auto& b : blocks) {
    if (b.group == group) return b.offset;
  }
  throw InternalError("no parameter block in the requested group");
}

Eigen::MatrixXd Relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

Eigen::MatrixXd ReluMask(const Eigen::MatrixXd& pre) {
  return (pre.array() > 0.0).cast<double>().matrix();
}

// Row-wise affine map: rows of `x` times W^T plus b.
Eigen::MatrixXd Affine(const Eigen::MatrixXd& x,
                       const Eigen::Map<const Eigen::MatrixXd>& w,
                       const Eigen::Map<const Eigen::MatrixXd>& b) {
  Eigen::MatrixXd out = x * w.transpose();
  out.rowwise() += b.col(0).transpose();
  return out;
}

// Intermediate values of one forward pass, one row per sample.
struct Trace {
  std::vector<Eigen::MatrixXd> feature;  // F_0..F_N.
  std::vector<Eigen::MatrixXd> pre;      // Encoder pre-activations, 1..N.
  std::vector<Eigen::MatrixXd> adapter_in;
  std::vector<Eigen::MatrixXd> adapter_pre;
  std::vector<Eigen::MatrixXd> adapter_hidden;
  std::vector<Eigen::MatrixXd> adapter_out;
  Eigen::MatrixXd logits;
};

}  // namespace

std::string_view ConnectionName(Connection c) {
  switch (c) {
    case Connection::kNone:
      return "none";
    case Connection::kNeighboring:
      return "neighboring";
    case Connection::kUnet:
      return "unet";
    case Connection::kDensenet:
      return "densenet";
  }
  return "unknown";
}

Connection ParseConnection(std::string_view name) {
  for (Connection c : {Connection::kNone, Connection::kNeighboring,
                       Connection::kUnet, Connection::kDensenet}) {
    if (ConnectionName(c) == name) return c;
  }
  throw ConfigError("unknown connection topology: " + std::string(name));
}

std::string_view TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFullFinetune:
      return "full_finetune";
    case TrainMode::kLinearProbe:
      return "linear_probe";
    case TrainMode::kAdapters:
      return "adapters";
  }
  return "unknown";
}

void ModelConfig::Validate() const {
  if (encoder.input_dim < 1 || encoder.hidden_dim < 1) {
    throw InputError("encoder dimensions must be positive");
  }
  if (encoder.num_layers < 1) throw InputError("encoder needs >= 1 layer");
  if (num_classes < 2) throw InputError("need at least 2 classes");
  if (adapters) {
    if (adapters->down_dim < 1) throw InputError("adapter down_dim must be >= 1");
    if (!adapters->per_layer_dims.empty()) {
      if (static_cast<int>(adapters->per_layer_dims.size()) !=
          encoder.num_layers) {
        throw InputError("per_layer_dims must have one entry per layer");
      }
      for (int d : adapters->per_layer_dims) {
        if (d < 1) throw InputError("adapter dims must be >= 1");
      }
    }
  }
}

std::vector<int> AdapterSkipSources(int layer, int num_layers,
                                    Connection connection) {
  if (layer < 1 || layer > num_layers) {
    throw InputError("adapter layer index out of range");
  }
  std::vector<int> sources;
  switch (connection) {
    case Connection::kNone:
      break;
    case Connection::kNeighboring:
      if (layer >= 2) sources.push_back(layer - 1);
      break;
    case Connection::kUnet:
      // Layers past the midpoint read their mirror; the last layer's mirror
      // (index 0) does not exist.
      if (2 * layer > num_layers && num_layers - layer >= 1) {
        sources.push_back(num_layers - layer);
      }
      break;
    case Connection::kDensenet:
      for (int k = 1; k < layer; ++k) sources.push_back(k);
      break;
  }
  return sources;
}

Eigen::VectorXd AdapterInput(int layer, int num_layers, Connection connection,
                             const Eigen::VectorXd& prev_feature,
                             std::span<const Eigen::VectorXd> adapter_outputs) {
  Eigen::VectorXd input = prev_feature;
  for (int k : AdapterSkipSources(layer, num_layers, connection)) {
    if (static_cast<size_t>(k) > adapter_outputs.size()) {
      throw InternalError("adapter " + std::to_string(k) +
                          " output needed before it was computed");
    }
    const Eigen::VectorXd& source = adapter_outputs[k - 1];
    if (source.size() != input.size()) {
      throw InputError("adapter output width mismatch");
    }
    input += source;
  }
  return input;
}

Model::Model(ModelConfig config, std::vector<ParamBlock> blocks)
    : config_(std::move(config)),
      blocks_(std::move(blocks)),
      params_(Eigen::VectorXd::Zero(
          static_cast<Eigen::Index>(TotalSize(blocks_)))) {
  auto find = [&](const std::string& name) {
    return static_cast<size_t>(&block(name) - blocks_.data());
  };
  index_.embed_weight = find("embed.weight");
  index_.embed_bias = find("embed.bias");
  index_.head_weight = find("head.weight");
  index_.head_bias = find("head.bias");
  for (int i = 1; i <= config_.encoder.num_layers; ++i) {
    const std::string p = "layer" + std::to_string(i);
    index_.weight.push_back(find(p + ".weight"));
    index_.bias.push_back(find(p + ".bias"));
    if (!has_adapters()) continue;
    const std::string a = "adapter" + std::to_string(i);
    index_.down_weight.push_back(find(a + ".down.weight"));
    index_.down_bias.push_back(find(a + ".down.bias"));
    index_.up_weight.push_back(find(a + ".up.weight"));
    index_.up_bias.push_back(find(a + ".up.bias"));
  }
}

Model Model::Create(const ModelConfig& config, Rng& rng) {
  config.Validate();
  Model model(config, BuildLayout(config));
  for (const ParamBlock& b : model.blocks_) {
    auto values = model.MutableView(b);
    const bool is_bias = b.cols == 1 && b.name.ends_with("bias");
    if (is_bias) continue;  // Biases start at zero.
    double limit = 0.0;
    if (b.group == ParamGroup::kEncoder) {
      limit = std::sqrt(6.0 / b.cols);  // He-uniform for ReLU layers.
    } else if (b.group == ParamGroup::kHead) {
      limit = 1.0 / std::sqrt(static_cast<double>(b.cols));
    } else if (b.name.find(".down.") != std::string::npos) {
      limit = 1.0 / std::sqrt(static_cast<double>(b.cols));
    } else {
      continue;  // Up-projections start at zero.
    }
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        values(i, j) = limit * (2.0 * rng.Uniform() - 1.0);
      }
    }
  }
  return model;
}

const ParamBlock& Model::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw InputError("no parameter block named " + std::string(name));
}

Eigen::Map<const Eigen::MatrixXd> Model::View(const ParamBlock& b) const {
  return {params_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<Eigen::MatrixXd> Model::MutableView(const ParamBlock& b) {
  return {params_.data() + b.offset, b.rows, b.cols};
}

void Model::CheckMode(TrainMode mode) const {
  if (mode == TrainMode::kAdapters && !has_adapters()) {
    throw InputError("adapters mode requires an adapter stack");
  }
}

Model::Range Model::TrainableRange(TrainMode mode) const {
  CheckMode(mode);
  const size_t total = TotalSize(blocks_);
  size_t offset = 0;
  switch (mode) {
    case TrainMode::kFullFinetune:
      offset = 0;
      break;
    case TrainMode::kLinearProbe:
      offset = FirstOffset(blocks_, ParamGroup::kHead);
      break;
    case TrainMode::kAdapters:
      offset = FirstOffset(blocks_, ParamGroup::kAdapter);
      break;
  }
  return Range{offset, total - offset};
}

Eigen::VectorBlock<Eigen::VectorXd> Model::TrainableSlice(TrainMode mode) {
  const Range r = TrainableRange(mode);
  return params_.segment(static_cast<Eigen::Index>(r.offset),
                         static_cast<Eigen::Index>(r.size));
}

uint64_t Model::FrozenHash(TrainMode mode) const {
  const Range r = TrainableRange(mode);
  std::vector<double> frozen(params_.data(), params_.data() + r.offset);
  frozen.insert(frozen.end(), params_.data() + r.offset + r.size,
                params_.data() + params_.size());
  return HashDoubles(frozen);
}

namespace {

Trace RunForward(const Model& model, const Eigen::MatrixXd& inputs) {
  const ModelConfig& cfg = model.config();
  const int n_layers = cfg.encoder.num_layers;
  if (inputs.cols() != cfg.encoder.input_dim) {
    throw InputError("input width " + std::to_string(inputs.cols()) +
                     " does not match encoder input_dim " +
                     std::to_string(cfg.encoder.input_dim));
  }
  const Model::BlockIndex& ix = model.index();
  auto view = [&](size_t i) { return model.View(model.blocks()[i]); };
  Trace t;
  t.feature.push_back(
      Affine(inputs, view(ix.embed_weight), view(ix.embed_bias)));
  for (int i = 1; i <= n_layers; ++i) {
    const size_t li = static_cast<size_t>(i - 1);
    t.pre.push_back(
        Affine(t.feature.back(), view(ix.weight[li]), view(ix.bias[li])));
    Eigen::MatrixXd next = Relu(t.pre.back());
    if (model.has_adapters()) {
      Eigen::MatrixXd u = t.feature.back();
      for (int k :
           AdapterSkipSources(i, n_layers, cfg.adapters->connection)) {
        u += t.adapter_out[k - 1];
      }
      Eigen::MatrixXd p_down =
          Affine(u, view(ix.down_weight[li]), view(ix.down_bias[li]));
      Eigen::MatrixXd hidden = Relu(p_down);
      Eigen::MatrixXd out =
          Affine(hidden, view(ix.up_weight[li]), view(ix.up_bias[li]));
      next += out;
      t.adapter_in.push_back(std::move(u));
      t.adapter_pre.push_back(std::move(p_down));
      t.adapter_hidden.push_back(std::move(hidden));
      t.adapter_out.push_back(std::move(out));
    }
    t.feature.push_back(std::move(next));
  }
  t.logits =
      Affine(t.feature.back(), view(ix.head_weight), view(ix.head_bias));
  return t;
}

}  // namespace

Eigen::MatrixXd Model::Forward(const Eigen::MatrixXd& inputs) const {
  return RunForward(*this, inputs).logits;
}

Eigen::VectorXd Model::Forward(const Eigen::VectorXd& input) const {
  return Forward(Eigen::MatrixXd(input.transpose())).row(0).transpose();
}

std::vector<int> Model::Predict(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd logits = Forward(inputs);
  std::vector<int> out(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best;
    logits.row(i).maxCoeff(&best);
    out[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LossAndGradient Model::Backward(const Eigen::MatrixXd& inputs,
                                std::span<const int> labels,
                                TrainMode mode) const {
  const Range range = TrainableRange(mode);
  if (static_cast<size_t>(inputs.rows()) != labels.size() || labels.empty()) {
    throw InputError("Backward: batch and labels differ in size or are empty");
  }
  const Trace t = RunForward(*this, inputs);
  const Eigen::Index batch = inputs.rows();
  const int n_layers = config_.encoder.num_layers;

  // Softmax cross-entropy. d(mean loss)/d(logits) = (softmax - onehot) / B.
  Eigen::MatrixXd d_logits(batch, t.logits.cols());
  LossAndGradient result;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= t.logits.cols()) throw InputError("label out of range");
    const double max_logit = t.logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted =
        t.logits.row(i).array() - max_logit;
    const Eigen::RowVectorXd expd = shifted.array().exp();
    const double z = expd.sum();
    result.loss += std::log(z) - shifted[y];
    d_logits.row(i) = expd / z;
    d_logits(i, y) -= 1.0;
  }
  result.loss /= static_cast<double>(batch);
  d_logits /= static_cast<double>(batch);

  result.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(range.size));
  auto grad_view = [&](size_t index) {
    const ParamBlock& b = blocks_[index];
    return Eigen::Map<Eigen::MatrixXd>(
        result.gradient.data() + (b.offset - range.offset), b.rows, b.cols);
  };
  auto set_affine_grads = [&](size_t weight, size_t bias,
                              const Eigen::MatrixXd& d_out,
                              const Eigen::MatrixXd& in) {
    grad_view(weight).noalias() = d_out.transpose() * in;
    grad_view(bias) = d_out.colwise().sum().transpose();
  };
  auto view = [&](size_t index) { return View(blocks_[index]); };

  set_affine_grads(index_.head_weight, index_.head_bias, d_logits,
                   t.feature.back());
  if (mode == TrainMode::kLinearProbe) return result;

  const bool train_encoder = mode == TrainMode::kFullFinetune;
  const bool with_adapters = has_adapters();
  const Connection conn =
      with_adapters ? config_.adapters->connection : Connection::kNone;

  Eigen::MatrixXd d_feature = d_logits * view(index_.head_weight);  // dL/dF_N.
  // Gradient reaching adapter outputs through later adapters' inputs.
  std::vector<Eigen::MatrixXd> d_adapter_skip;
  if (with_adapters) {
    d_adapter_skip.assign(n_layers, Eigen::MatrixXd::Zero(
                                        batch, config_.encoder.hidden_dim));
  }

  for (int i = n_layers; i >= 1; --i) {
    const size_t li = static_cast<size_t>(i - 1);
    Eigen::MatrixXd d_prev;  // dL/dF_{i-1}.
    if (with_adapters) {
      const Eigen::MatrixXd d_out = d_feature + d_adapter_skip[li];
      const Eigen::MatrixXd d_hidden = d_out * view(index_.up_weight[li]);
      const Eigen::MatrixXd d_pre =
          d_hidden.cwiseProduct(ReluMask(t.adapter_pre[li]));
      set_affine_grads(index_.up_weight[li], index_.up_bias[li], d_out,
                       t.adapter_hidden[li]);
      set_affine_grads(index_.down_weight[li], index_.down_bias[li], d_pre,
                       t.adapter_in[li]);
      const Eigen::MatrixXd d_in = d_pre * view(index_.down_weight[li]);
      for (int k : AdapterSkipSources(i, n_layers, conn)) {
        d_adapter_skip[static_cast<size_t>(k - 1)] += d_in;
      }
      d_prev = d_in;
    }
    const Eigen::MatrixXd d_pre = d_feature.cwiseProduct(ReluMask(t.pre[li]));
    if (train_encoder) {
      set_affine_grads(index_.weight[li], index_.bias[li], d_pre, t.feature[li]);
    }
    if (i == 1 && !train_encoder) break;
    const Eigen::MatrixXd through = d_pre * view(index_.weight[li]);
    d_feature = with_adapters ? Eigen::MatrixXd(through + d_prev) : through;
  }
  if (train_encoder) {
    set_affine_grads(index_.embed_weight, index_.embed_bias, d_feature, inputs);
  }
  return result;
}

Model Model::WithFreshHead(int num_classes,
                           std::optional<AdapterConfig> adapters,
                           Rng& rng) const {
  ModelConfig cfg = config_;
  cfg.num_classes = num_classes;
  cfg.adapters = std::move(adapters);
  Model fresh = Create(cfg, rng);
  const size_t encoder_size = FirstOffset(
      blocks_, has_adapters() ? ParamGroup::kAdapter : ParamGroup::kHead);
  fresh.params_.head(static_cast<Eigen::Index>(encoder_size)) =
      params_.head(static_cast<Eigen::Index>(encoder_size));
  return fresh;
}

int64_t CountTrainable(const ModelConfig& config, TrainMode mode) {
  config.Validate();
  if (mode == TrainMode::kAdapters && !config.adapters) {
    throw InputError("adapters mode requires an adapter stack");
  }
  int64_t count = 0;
  for (const ParamBlock& b : BuildLayout(config)) {
    const bool trainable =
        mode == TrainMode::kFullFinetune || b.group == ParamGroup::kHead ||
        (mode == TrainMode::kAdapters && b.group == ParamGroup::kAdapter);
    if (trainable) count += static_cast<int64_t>(b.size());
  }
  return count;
}

int64_t CountTrainable(const Model& model, TrainMode mode) {
  return static_cast<int64_t>(model.TrainableRange(mode).size);
}

int64_t CountAdapterParameters(const ModelConfig& config) {
  config.Validate();
  int64_t count = 0;
  for (const ParamBlock& b : BuildLayout(config)) {
    if (b.group == ParamGroup::kAdapter) count += static_cast<int64_t>(b.size());
  }
  return count;
}

AdamW::AdamW(AdamWConfig config, Eigen::Index size)
    : config_(config),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {}

void AdamW::Step(Eigen::Ref<Eigen::VectorXd> params,
                 const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InputError("AdamW: size mismatch");
  }
  ++t_;
  const double lr = config_.learning_rate;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const Eigen::ArrayXd m_hat = m_.array() / bc1;
  const Eigen::ArrayXd v_hat = v_.array() / bc2;
  params.array() -= lr * (m_hat / (v_hat.sqrt() + config_.epsilon) +
                          config_.weight_decay * params.array());
}

TrainHistory Train(Model& model, const LabeledDataset& data, TrainMode mode,
                   const TrainConfig& config, Rng& rng) {
  if (data.empty()) throw InputError("Train: empty dataset");
  if (config.epochs < 0 || config.batch_size < 1) {
    throw InputError("Train: bad epochs or batch size");
  }
  if (data.num_classes() != model.config().num_classes) {
    throw InputError("Train: dataset and model disagree on class count");
  }
  auto slice = model.TrainableSlice(mode);
  AdamW optimizer(config.optimizer, slice.size());
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const std::span<const size_t> idx(order.data() + start, end - start);
      const LabeledDataset batch = data.Subset(idx);
      const LossAndGradient lg =
          model.Backward(batch.features(), batch.labels(), mode);
      optimizer.Step(model.TrainableSlice(mode), lg.gradient);
      loss_sum += lg.loss;
      ++batches;
    }
    history.loss.push_back(loss_sum / batches);
    if (config.track_accuracy) history.accuracy.push_back(Accuracy(model, data));
  }
  return history;
}

double Accuracy(const Model& model, const LabeledDataset& data) {
  if (data.empty()) throw InputError("Accuracy: empty dataset");
  const std::vector<int> predicted = model.Predict(data.features());
  size_t correct = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == data.labels()[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void SaveCheckpoint(const Model& model, std::ostream& out) {
  using namespace binary_io;
  const ModelConfig& cfg = model.config();
  WriteMagic(out, "DPAM");
  Write<uint32_t>(out, kCheckpointVersion);
  Write<uint32_t>(out, static_cast<uint32_t>(cfg.encoder.input_dim));
  Write<uint32_t>(out, static_cast<uint32_t>(cfg.encoder.hidden_dim));
  Write<uint32_t>(out, static_cast<uint32_t>(cfg.encoder.num_layers));
  Write<uint32_t>(out, static_cast<uint32_t>(cfg.num_classes));
  Write<uint32_t>(out, cfg.adapters ? 1u : 0u);
  Write<uint32_t>(out,
                  cfg.adapters ? static_cast<uint32_t>(cfg.adapters->down_dim) : 0u);
  Write<uint32_t>(out, cfg.adapters
                           ? static_cast<uint32_t>(cfg.adapters->connection)
                           : 0u);
  if (cfg.adapters) {
    for (int i = 0; i < cfg.encoder.num_layers; ++i) {
      Write<uint32_t>(out, static_cast<uint32_t>(cfg.adapters->DimForLayer(i)));
    }
  }
  for (Eigen::Index i = 0; i < model.parameters().size(); ++i) {
    Write<float>(out, static_cast<float>(model.parameters()[i]));
  }
  if (!out) throw InputError("SaveCheckpoint: write failed");
}

Model LoadCheckpoint(std::istream& in) {
  using namespace binary_io;
  ExpectMagic(in, "DPAM");
  if (Read<uint32_t>(in) != kCheckpointVersion) {
    throw InputError("LoadCheckpoint: unsupported version");
  }
  ModelConfig cfg;
  cfg.encoder.input_dim = static_cast<int>(Read<uint32_t>(in));
  cfg.encoder.hidden_dim = static_cast<int>(Read<uint32_t>(in));
  cfg.encoder.num_layers = static_cast<int>(Read<uint32_t>(in));
  cfg.num_classes = static_cast<int>(Read<uint32_t>(in));
  const bool has_adapters = Read<uint32_t>(in) != 0;
  const auto down_dim = static_cast<int>(Read<uint32_t>(in));
  const auto topology = Read<uint32_t>(in);
  if (has_adapters) {
    if (topology > static_cast<uint32_t>(Connection::kDensenet)) {
      throw InputError("LoadCheckpoint: bad topology tag");
    }
    AdapterConfig adapters;
    adapters.down_dim = down_dim;
    adapters.connection = static_cast<Connection>(topology);
    std::vector<int> dims(static_cast<size_t>(cfg.encoder.num_layers));
    for (int& d : dims) d = static_cast<int>(Read<uint32_t>(in));
    if (std::any_of(dims.begin(), dims.end(),
                    [&](int d) { return d != down_dim; })) {
      adapters.per_layer_dims = std::move(dims);
    }
    cfg.adapters = std::move(adapters);
  }
  Rng unused(0);
  Model model = Model::Create(cfg, unused);
  Eigen::VectorXd& params = model.mutable_parameters();
  for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = Read<float>(in);
  return model;
}

}  // namespace dpadapt
