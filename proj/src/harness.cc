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


#include "dpadapt/harness.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <istream>
#include <sstream>

namespace dpadapt {
namespace {

std::string Trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

double ToDouble(std::string_view key, std::string_view value) {
  try {
    size_t used = 0;
    const std::string v(value);
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" +
                      std::string(value) + "'");
  }
}

int64_t ToInt(std::string_view key, std::string_view value) {
  int64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + std::string(key) + "' expects an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

bool ToBool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("'" + std::string(key) + "' expects true/false");
}

std::string FormatDouble(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> SplitList(std::string_view value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss{std::string(value)};
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

PateConfig& EnsurePate(ExperimentConfig& c) {
  if (!c.pate) c.pate = PateConfig{.lambda = 15.0, .num_teachers = 100};
  return *c.pate;
}

DpsgdSettings& EnsureDpsgd(ExperimentConfig& c) {
  if (!c.dpsgd) c.dpsgd = DpsgdSettings{};
  return *c.dpsgd;
}

struct ConfigKey {
  std::string_view name;
  std::function<void(ExperimentConfig&, std::string_view key,
                     std::string_view value)>
      set;
  // Unset optional sections print nothing.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

void AddTrainKeys(std::vector<ConfigKey>& keys, std::string_view prefix,
                  TrainConfig ExperimentConfig::*member) {
  // Key names must outlive the table; they are interned in a static list.
  static std::vector<std::unique_ptr<std::string>> names;
  auto intern = [&](std::string_view suffix) {
    names.push_back(
        std::make_unique<std::string>(std::string(prefix) + std::string(suffix)));
    return std::string_view(*names.back());
  };
  keys.push_back({intern(".epochs"),
                  [member](ExperimentConfig& c, auto k, auto v) {
                    (c.*member).epochs = static_cast<int>(ToInt(k, v));
                  },
                  [member](const ExperimentConfig& c) {
                    return std::optional(std::to_string((c.*member).epochs));
                  }});
  keys.push_back({intern(".batch_size"),
                  [member](ExperimentConfig& c, auto k, auto v) {
                    (c.*member).batch_size = static_cast<int>(ToInt(k, v));
                  },
                  [member](const ExperimentConfig& c) {
                    return std::optional(std::to_string((c.*member).batch_size));
                  }});
  keys.push_back({intern(".lr"),
                  [member](ExperimentConfig& c, auto k, auto v) {
                    (c.*member).optimizer.learning_rate = ToDouble(k, v);
                  },
                  [member](const ExperimentConfig& c) {
                    return std::optional(
                        FormatDouble((c.*member).optimizer.learning_rate));
                  }});
  keys.push_back({intern(".weight_decay"),
                  [member](ExperimentConfig& c, auto k, auto v) {
                    (c.*member).optimizer.weight_decay = ToDouble(k, v);
                  },
                  [member](const ExperimentConfig& c) {
                    return std::optional(
                        FormatDouble((c.*member).optimizer.weight_decay));
                  }});
}

template <typename Getter, typename Setter>
ConfigKey DoubleKey(std::string_view name, Getter get, Setter set) {
  return {name,
          [set](ExperimentConfig& c, std::string_view k, std::string_view v) {
            set(c, ToDouble(k, v));
          },
          [get](const ExperimentConfig& c) -> std::optional<std::string> {
            auto v = get(c);
            if (!v) return std::nullopt;
            return FormatDouble(*v);
          }};
}

template <typename Getter, typename Setter>
ConfigKey IntKey(std::string_view name, Getter get, Setter set) {
  return {name,
          [set](ExperimentConfig& c, std::string_view k, std::string_view v) {
            set(c, ToInt(k, v));
          },
          [get](const ExperimentConfig& c) -> std::optional<std::string> {
            auto v = get(c);
            if (!v) return std::nullopt;
            return std::to_string(*v);
          }};
}

template <typename T>
std::optional<T> Some(T v) {
  return v;
}

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"label",
                 [](ExperimentConfig& c, auto, auto v) { c.label = v; },
                 [](const ExperimentConfig& c) { return Some(c.label); }});
    k.push_back({"method",
                 [](ExperimentConfig& c, auto, auto v) {
                   c.method = ParseMethod(v);
                 },
                 [](const ExperimentConfig& c) {
                   return Some(std::string(MethodName(c.method)));
                 }});
    k.push_back({"privacy",
                 [](ExperimentConfig& c, auto, auto v) {
                   c.privacy = ParsePrivacy(v);
                   if (c.privacy == Privacy::kPate) EnsurePate(c);
                   if (c.privacy == Privacy::kDpsgd) EnsureDpsgd(c);
                 },
                 [](const ExperimentConfig& c) {
                   return Some(std::string(PrivacyName(c.privacy)));
                 }});
    k.push_back({"seeds",
                 [](ExperimentConfig& c, auto key, auto v) {
                   c.seeds.clear();
                   for (const auto& s : SplitList(v)) {
                     c.seeds.push_back(static_cast<uint64_t>(ToInt(key, s)));
                   }
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (size_t i = 0; i < c.seeds.size(); ++i) {
                     if (i) out += ",";
                     out += std::to_string(c.seeds[i]);
                   }
                   return Some(out);
                 }});
    k.push_back(DoubleKey(
        "delta", [](const auto& c) { return Some(c.delta); },
        [](auto& c, double v) { c.delta = v; }));
    k.push_back(IntKey(
        "threads", [](const auto& c) { return Some(c.threads); },
        [](auto& c, int64_t v) { c.threads = static_cast<int>(v); }));

    k.push_back(IntKey(
        "adapter.d", [](const auto& c) { return Some(c.adapter.down_dim); },
        [](auto& c, int64_t v) { c.adapter.down_dim = static_cast<int>(v); }));
    k.push_back({"adapter.connection",
                 [](ExperimentConfig& c, auto, auto v) {
                   c.adapter.connection = ParseConnection(v);
                 },
                 [](const ExperimentConfig& c) {
                   return Some(std::string(ConnectionName(c.adapter.connection)));
                 }});
    k.push_back(IntKey(
        "model.hidden_dim",
        [](const auto& c) { return Some(c.encoder.hidden_dim); },
        [](auto& c, int64_t v) { c.encoder.hidden_dim = static_cast<int>(v); }));
    k.push_back(IntKey(
        "model.num_layers",
        [](const auto& c) { return Some(c.encoder.num_layers); },
        [](auto& c, int64_t v) { c.encoder.num_layers = static_cast<int>(v); }));

    k.push_back(IntKey(
        "data.num_classes", [](const auto& c) { return Some(c.data.num_classes); },
        [](auto& c, int64_t v) { c.data.num_classes = static_cast<int>(v); }));
    k.push_back(IntKey(
        "data.samples_per_class",
        [](const auto& c) { return Some(c.data.samples_per_class); },
        [](auto& c, int64_t v) {
          c.data.samples_per_class = static_cast<int>(v);
        }));
    k.push_back(IntKey(
        "data.feature_dim", [](const auto& c) { return Some(c.data.feature_dim); },
        [](auto& c, int64_t v) { c.data.feature_dim = static_cast<int>(v); }));
    k.push_back(IntKey(
        "data.clusters_per_class",
        [](const auto& c) { return Some(c.data.clusters_per_class); },
        [](auto& c, int64_t v) {
          c.data.clusters_per_class = static_cast<int>(v);
        }));
    k.push_back(DoubleKey(
        "data.class_separation",
        [](const auto& c) { return Some(c.data.class_separation); },
        [](auto& c, double v) { c.data.class_separation = v; }));
    k.push_back(DoubleKey(
        "data.domain_shift",
        [](const auto& c) { return Some(c.data.domain_shift); },
        [](auto& c, double v) { c.data.domain_shift = v; }));
    k.push_back(DoubleKey(
        "data.noise_stddev",
        [](const auto& c) { return Some(c.data.noise_stddev); },
        [](auto& c, double v) { c.data.noise_stddev = v; }));
    k.push_back(DoubleKey(
        "data.test_fraction", [](const auto& c) { return Some(c.test_fraction); },
        [](auto& c, double v) { c.test_fraction = v; }));

    AddTrainKeys(k, "pretrain", &ExperimentConfig::pretrain);
    AddTrainKeys(k, "train", &ExperimentConfig::train);
    AddTrainKeys(k, "teacher", &ExperimentConfig::teacher);

    auto pate = [](const ExperimentConfig& c) { return c.pate; };
    k.push_back(DoubleKey(
        "pate.lambda",
        [pate](const auto& c) {
          return pate(c) ? Some(pate(c)->lambda) : std::nullopt;
        },
        [](auto& c, double v) { EnsurePate(c).lambda = v; }));
    k.push_back(IntKey(
        "pate.num_teachers",
        [pate](const auto& c) {
          return pate(c) ? Some(pate(c)->num_teachers) : std::nullopt;
        },
        [](auto& c, int64_t v) {
          EnsurePate(c).num_teachers = static_cast<int>(v);
        }));
    k.push_back(IntKey(
        "pate.max_queries",
        [pate](const auto& c) {
          return pate(c) ? Some(pate(c)->max_queries) : std::nullopt;
        },
        [](auto& c, int64_t v) {
          EnsurePate(c).max_queries = static_cast<int>(v);
        }));
    k.push_back(DoubleKey(
        "pate.epsilon",
        [pate](const auto& c) {
          return pate(c) ? Some(pate(c)->target_budget.epsilon) : std::nullopt;
        },
        [](auto& c, double v) { EnsurePate(c).target_budget.epsilon = v; }));
    k.push_back({"pate.noise_free",
                 [](ExperimentConfig& c, auto key, auto v) {
                   EnsurePate(c).noise_free = ToBool(key, v);
                 },
                 [](const ExperimentConfig& c) -> std::optional<std::string> {
                   if (!c.pate) return std::nullopt;
                   return c.pate->noise_free ? "true" : "false";
                 }});

    auto dp = [](const ExperimentConfig& c) { return c.dpsgd; };
    k.push_back(DoubleKey(
        "dpsgd.clip_norm",
        [dp](const auto& c) {
          return dp(c) ? Some(dp(c)->clip_norm) : std::nullopt;
        },
        [](auto& c, double v) { EnsureDpsgd(c).clip_norm = v; }));
    k.push_back({"dpsgd.noise_multiplier",
                 [](ExperimentConfig& c, auto key, auto v) {
                   if (v == "auto") {
                     EnsureDpsgd(c).noise_multiplier.reset();
                   } else {
                     EnsureDpsgd(c).noise_multiplier = ToDouble(key, v);
                   }
                 },
                 [](const ExperimentConfig& c) -> std::optional<std::string> {
                   if (!c.dpsgd) return std::nullopt;
                   if (!c.dpsgd->noise_multiplier) return "auto";
                   return FormatDouble(*c.dpsgd->noise_multiplier);
                 }});
    k.push_back(IntKey(
        "dpsgd.batch_size",
        [dp](const auto& c) {
          return dp(c) ? Some(dp(c)->batch_size) : std::nullopt;
        },
        [](auto& c, int64_t v) {
          EnsureDpsgd(c).batch_size = static_cast<int>(v);
        }));
    k.push_back(DoubleKey(
        "dpsgd.lr",
        [dp](const auto& c) {
          return dp(c) ? Some(dp(c)->learning_rate) : std::nullopt;
        },
        [](auto& c, double v) { EnsureDpsgd(c).learning_rate = v; }));
    k.push_back(IntKey(
        "dpsgd.epochs",
        [dp](const auto& c) { return dp(c) ? Some(dp(c)->epochs) : std::nullopt; },
        [](auto& c, int64_t v) { EnsureDpsgd(c).epochs = static_cast<int>(v); }));
    k.push_back(DoubleKey(
        "dpsgd.epsilon",
        [dp](const auto& c) {
          return dp(c) ? Some(dp(c)->target_epsilon) : std::nullopt;
        },
        [](auto& c, double v) { EnsureDpsgd(c).target_epsilon = v; }));
    k.push_back({"dpsgd.noise_free",
                 [](ExperimentConfig& c, auto key, auto v) {
                   EnsureDpsgd(c).noise_free = ToBool(key, v);
                 },
                 [](const ExperimentConfig& c) -> std::optional<std::string> {
                   if (!c.dpsgd) return std::nullopt;
                   return c.dpsgd->noise_free ? "true" : "false";
                 }});
    return k;
  }();
  return keys;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

ModelConfig BaseModelConfig(const ExperimentConfig& config) {
  ModelConfig mc;
  mc.encoder = config.encoder;
  mc.encoder.input_dim = config.data.feature_dim;
  mc.num_classes = config.data.num_classes;
  return mc;
}

std::optional<AdapterConfig> AdaptersFor(const ExperimentConfig& config) {
  if (config.method != Method::kAdapters) return std::nullopt;
  return config.adapter;
}

SeedResult RunSeed(const ExperimentConfig& config, uint64_t seed,
                   PretrainCache& cache) {
  SyntheticSpec spec = config.data;
  spec.seed = seed;
  const DomainPair domains = Generate(spec);
  const Rng root = Rng(seed).Split(0x5eed);

  Rng split_rng = root.Split(10);
  const TargetSplit split =
      TargetSplits(domains.target, config.test_fraction, split_rng);

  const TrainMode mode = ModeFor(config.method);
  Model base = [&] {
    if (config.method == Method::kFromScratch) {
      Rng init = root.Split(11);
      return Model::Create(BaseModelConfig(config), init);
    }
    const auto pretrained = cache.GetOrTrain(config, seed);
    Rng head_rng = root.Split(13);
    return pretrained->WithFreshHead(config.data.num_classes,
                                     AdaptersFor(config), head_rng);
  }();

  SeedResult result;
  result.seed = seed;
  result.eval_size = split.eval.size();

  std::optional<Model> final_model;
  switch (config.privacy) {
    case Privacy::kNone: {
      const LabeledDataset data =
          Concat(split.teacher_train, split.student_public.data());
      Model model = base;
      Rng rng = root.Split(14);
      Train(model, data, mode, config.train, rng);
      final_model = std::move(model);
      break;
    }
    case Privacy::kDpsgd: {
      const DpsgdSettings& s = *config.dpsgd;
      const LabeledDataset data =
          Concat(split.teacher_train, split.student_public.data());
      DpsgdConfig dc;
      dc.clip_norm = s.clip_norm;
      dc.batch_size = std::min<int>(s.batch_size, static_cast<int>(data.size()));
      dc.dataset_size = static_cast<int>(data.size());
      dc.learning_rate = s.learning_rate;
      const int steps_per_epoch =
          (dc.dataset_size + dc.batch_size - 1) / dc.batch_size;
      dc.steps = s.epochs * steps_per_epoch;
      dc.noise_free = s.noise_free;
      dc.noise_multiplier =
          s.noise_multiplier
              ? *s.noise_multiplier
              : CalibrateNoiseMultiplier(dc.steps, s.target_epsilon,
                                         config.delta);
      const PrivacyBudget spent = DpsgdAccount(dc, config.delta);
      if (spent.epsilon > s.target_epsilon) {
        throw ConfigError("DPSGD noise multiplier " +
                          FormatDouble(dc.noise_multiplier) + " spends epsilon " +
                          FormatDouble(spent.epsilon) + " > target " +
                          FormatDouble(s.target_epsilon));
      }
      Model model = base;
      Rng rng = root.Split(15);
      TrainDpsgd(model, data, mode, dc, rng);
      result.epsilon_spent = spent.epsilon;
      result.noise_multiplier = dc.noise_multiplier;
      result.sampling_rate = dc.sampling_rate();
      result.steps = dc.steps;
      final_model = std::move(model);
      break;
    }
    case Privacy::kPate: {
      const PateConfig& pc = *config.pate;
      Rng part_rng = root.Split(16);
      const std::vector<LabeledDataset> chunks =
          PartitionDisjoint(split.teacher_train, pc.num_teachers, part_rng);
      const TeacherEnsemble ensemble = TrainTeachers(
          chunks, base, mode, config.teacher, root.Split(17), config.threads);
      double teacher_acc = 0.0;
      for (const Model& t : ensemble.teachers) {
        teacher_acc += Accuracy(t, split.eval.data());
      }
      result.teacher_mean_accuracy =
          100.0 * teacher_acc / static_cast<double>(ensemble.teachers.size());

      Rng label_rng = root.Split(18);
      LabelingResult labeled =
          LabelStudentData(ensemble, split.student_public, pc,
                           QueryLedger(PerQueryRdp(pc.lambda, pc.num_teachers)),
                           label_rng);
      Rng student_rng = root.Split(19);
      Model student =
          TrainStudent(labeled.labeled, base, mode, config.train, student_rng);
      result.epsilon_spent = labeled.ledger.Spent(config.delta).budget.epsilon;
      result.queries_answered = labeled.ledger.queries_spent();
      result.budget_exhausted = labeled.budget_exhausted;
      result.ledger = labeled.ledger.ToJson(config.delta);
      final_model = std::move(student);
      break;
    }
  }
  result.accuracy = 100.0 * Accuracy(*final_model, split.eval.data());
  return result;
}

}  // namespace

std::string_view MethodName(Method m) {
  switch (m) {
    case Method::kFromScratch:
      return "fs";
    case Method::kFineTune:
      return "ft";
    case Method::kLinearProbe:
      return "lp";
    case Method::kAdapters:
      return "adapters";
  }
  return "unknown";
}

std::string_view PrivacyName(Privacy p) {
  switch (p) {
    case Privacy::kNone:
      return "none";
    case Privacy::kDpsgd:
      return "dpsgd";
    case Privacy::kPate:
      return "pate";
  }
  return "unknown";
}

Method ParseMethod(std::string_view name) {
  for (Method m : {Method::kFromScratch, Method::kFineTune,
                   Method::kLinearProbe, Method::kAdapters}) {
    if (MethodName(m) == name) return m;
  }
  throw ConfigError("unknown method: " + std::string(name));
}

Privacy ParsePrivacy(std::string_view name) {
  for (Privacy p : {Privacy::kNone, Privacy::kDpsgd, Privacy::kPate}) {
    if (PrivacyName(p) == name) return p;
  }
  throw ConfigError("unknown privacy regime: " + std::string(name));
}

TrainMode ModeFor(Method m) {
  switch (m) {
    case Method::kFromScratch:
    case Method::kFineTune:
      return TrainMode::kFullFinetune;
    case Method::kLinearProbe:
      return TrainMode::kLinearProbe;
    case Method::kAdapters:
      return TrainMode::kAdapters;
  }
  throw ConfigError("unknown method");
}

double Utility(double accuracy_percent, int64_t trainable_params) {
  if (trainable_params < 2) {
    throw DomainError("utility needs at least 2 trainable parameters");
  }
  return (accuracy_percent - 50.0) /
         std::log(static_cast<double>(trainable_params));
}

void ExperimentConfig::Validate() const {
  if (privacy == Privacy::kPate && !pate) {
    throw ConfigError("privacy = pate requires PATE settings");
  }
  if (privacy == Privacy::kDpsgd && !dpsgd) {
    throw ConfigError("privacy = dpsgd requires DPSGD settings");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must be in (0, 1)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction must be in (0, 1)");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  try {
    data.Validate();
    ModelConfig mc;
    mc.encoder = encoder;
    mc.encoder.input_dim = data.feature_dim;
    mc.num_classes = data.num_classes;
    if (method == Method::kAdapters) mc.adapters = adapter;
    mc.Validate();
    if (pate && privacy == Privacy::kPate) {
      pate->Validate();
      if (std::fabs(pate->target_budget.delta - delta) > 0.0) {
        throw ConfigError("pate target delta must equal delta");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for (const TrainConfig* t : {&pretrain, &train, &teacher}) {
    if (t->epochs < 0 || t->batch_size < 1) {
      throw ConfigError("epochs must be >= 0 and batch_size >= 1");
    }
  }
  if (dpsgd && privacy == Privacy::kDpsgd) {
    if (!(dpsgd->clip_norm > 0.0) || dpsgd->batch_size < 1 ||
        dpsgd->epochs < 0 || !(dpsgd->learning_rate > 0.0) ||
        !(dpsgd->target_epsilon > 0.0)) {
      throw ConfigError("invalid DPSGD settings");
    }
    if (dpsgd->noise_multiplier && !(*dpsgd->noise_multiplier > 0.0)) {
      throw ConfigError("dpsgd.noise_multiplier must be positive or auto");
    }
  }
}

void SetConfigValue(ExperimentConfig& config, std::string_view key,
                    std::string_view value) {
  for (const ConfigKey& k : ConfigKeys()) {
    if (k.name == key) {
      k.set(config, key, value);
      if (config.pate) config.pate->target_budget.delta = config.delta;
      return;
    }
  }
  throw ConfigError("unknown config key: " + std::string(key));
}

ExperimentConfig ParseConfig(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    SetConfigValue(config, Trim(trimmed.substr(0, eq)),
                   Trim(trimmed.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig ParseConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return ParseConfig(in);
}

std::string FormatConfig(const ExperimentConfig& config) {
  std::string out;
  for (const ConfigKey& k : ConfigKeys()) {
    if (auto v = k.get(config)) {
      out += std::string(k.name) + " = " + *v + "\n";
    }
  }
  return out;
}

size_t ExperimentReport::eval_size() const {
  size_t n = 0;
  for (const auto& s : seeds) n += s.eval_size;
  return n;
}

nlohmann::json ExperimentReport::ToJson() const {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const SeedResult& s : seeds) {
    nlohmann::json j{{"seed", s.seed},
                     {"accuracy", s.accuracy},
                     {"eval_size", s.eval_size}};
    j["epsilon_spent"] =
        s.epsilon_spent ? nlohmann::json(*s.epsilon_spent) : nlohmann::json();
    if (privacy == Privacy::kPate) {
      j["queries_answered"] = s.queries_answered;
      j["budget_exhausted"] = s.budget_exhausted;
      j["teacher_mean_accuracy"] = s.teacher_mean_accuracy;
      if (s.ledger) j["ledger"] = *s.ledger;
    }
    if (privacy == Privacy::kDpsgd) {
      j["noise_multiplier"] = s.noise_multiplier;
      j["sampling_rate"] = s.sampling_rate;
      j["steps"] = s.steps;
    }
    per_seed.push_back(std::move(j));
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  return nlohmann::json{
      {"label", label},
      {"method", MethodName(method)},
      {"privacy", PrivacyName(privacy)},
      {"adapter_d", adapter_d},
      {"connection", ConnectionName(connection)},
      {"mean_accuracy", mean_accuracy},
      {"trainable_params", trainable_params},
      {"total_params", total_params},
      {"utility", utility},
      {"epsilon_spent", opt(epsilon_spent)},
      {"target_epsilon", opt(target_epsilon)},
      {"delta", delta},
      {"wall_time_seconds", wall_time_seconds},
      {"seeds", per_seed},
  };
}

Model Pretrain(const ExperimentConfig& config, const LabeledDataset& source,
               uint64_t seed) {
  const Rng root = Rng(seed).Split(0x5eed);
  Rng init = root.Split(11);
  Model model = Model::Create(BaseModelConfig(config), init);
  Rng rng = root.Split(12);
  Train(model, source, TrainMode::kFullFinetune, config.pretrain, rng);
  return model;
}

std::shared_ptr<const Model> PretrainCache::GetOrTrain(
    const ExperimentConfig& config, uint64_t seed) {
  // Everything Pretrain reads, in config syntax.
  ExperimentConfig key_cfg;
  key_cfg.data = config.data;
  key_cfg.encoder = config.encoder;
  key_cfg.pretrain = config.pretrain;
  const std::string key = FormatConfig(key_cfg) + "#" + std::to_string(seed);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
  }
  SyntheticSpec spec = config.data;
  spec.seed = seed;
  auto model =
      std::make_shared<const Model>(Pretrain(config, Generate(spec).source, seed));
  std::lock_guard<std::mutex> lock(mu_);
  return models_.emplace(key, std::move(model)).first->second;
}

ExperimentReport Run(const ExperimentConfig& config, PretrainCache* cache) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  PretrainCache local_cache;
  PretrainCache& pretrain_cache = cache ? *cache : local_cache;

  ExperimentReport report;
  report.label = config.label;
  report.method = config.method;
  report.privacy = config.privacy;
  report.adapter_d =
      config.method == Method::kAdapters ? config.adapter.down_dim : 0;
  report.connection = config.method == Method::kAdapters
                          ? config.adapter.connection
                          : Connection::kNone;
  report.delta = config.delta;
  if (config.privacy == Privacy::kPate) {
    report.target_epsilon = config.pate->target_budget.epsilon;
  } else if (config.privacy == Privacy::kDpsgd) {
    report.target_epsilon = config.dpsgd->target_epsilon;
  }

  ModelConfig mc = BaseModelConfig(config);
  mc.adapters = AdaptersFor(config);
  report.trainable_params = CountTrainable(mc, ModeFor(config.method));
  report.total_params = CountTrainable(mc, TrainMode::kFullFinetune);

  std::vector<double> accuracies;
  for (uint64_t seed : config.seeds) {
    report.seeds.push_back(RunSeed(config, seed, pretrain_cache));
    const SeedResult& r = report.seeds.back();
    accuracies.push_back(r.accuracy);
    if (r.epsilon_spent) {
      report.epsilon_spent =
          std::max(report.epsilon_spent.value_or(0.0), *r.epsilon_spent);
    }
  }
  report.mean_accuracy = Mean(accuracies);
  report.utility = Utility(report.mean_accuracy, report.trainable_params);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

SweepAxis ParseSweepAxis(std::string_view name) {
  for (SweepAxis a :
       {SweepAxis::kAdapterDim, SweepAxis::kTopology, SweepAxis::kLambda}) {
    if (SweepAxisName(a) == name) return a;
  }
  throw ConfigError("unknown sweep axis: " + std::string(name));
}

std::string_view SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kAdapterDim:
      return "adapter_d";
    case SweepAxis::kTopology:
      return "topology";
    case SweepAxis::kLambda:
      return "lambda";
  }
  return "unknown";
}

SweepResult Sweep(const ExperimentConfig& base, SweepAxis axis,
                  std::span<const std::string> values, PretrainCache* cache) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<std::string> ordered(values.begin(), values.end());
  if (axis != SweepAxis::kTopology) {
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const std::string& a, const std::string& b) {
                       return ToDouble("sweep", a) < ToDouble("sweep", b);
                     });
  }
  PretrainCache local_cache;
  PretrainCache& shared = cache ? *cache : local_cache;

  SweepResult result{axis, ordered, {}, {}};
  for (const std::string& v : ordered) {
    ExperimentConfig cfg = base;
    switch (axis) {
      case SweepAxis::kAdapterDim:
        SetConfigValue(cfg, "adapter.d", v);
        break;
      case SweepAxis::kTopology:
        SetConfigValue(cfg, "adapter.connection", v);
        break;
      case SweepAxis::kLambda:
        SetConfigValue(cfg, "pate.lambda", v);
        break;
    }
    if (cfg.label.empty()) cfg.label = std::string(SweepAxisName(axis));
    cfg.label += "=" + v;
    result.reports.push_back(Run(cfg, &shared));
  }
  result.summary_csv =
      SummaryCsv(result.reports, SweepAxisName(axis), result.values);
  return result;
}

std::string SummaryCsv(std::span<const ExperimentReport> reports,
                       std::string_view first_column,
                       std::span<const std::string> first_values) {
  std::ostringstream out;
  out.precision(6);
  out << first_column
      << ",method,dp,trainable_params,utility,accuracy,epsilon\n";
  for (size_t i = 0; i < reports.size(); ++i) {
    const ExperimentReport& r = reports[i];
    out << (i < first_values.size() ? first_values[i] : r.label) << ','
        << MethodName(r.method) << ',' << PrivacyName(r.privacy) << ','
        << r.trainable_params << ',' << r.utility << ',' << r.mean_accuracy
        << ',';
    if (r.epsilon_spent) out << *r.epsilon_spent;
    out << '\n';
  }
  return out.str();
}

double WeightedAccuracy(std::span<const ExperimentReport> reports) {
  double weighted = 0.0;
  double total = 0.0;
  for (const ExperimentReport& r : reports) {
    for (const SeedResult& s : r.seeds) {
      weighted += s.accuracy * static_cast<double>(s.eval_size);
      total += static_cast<double>(s.eval_size);
    }
  }
  if (total == 0.0) throw InputError("WeightedAccuracy: no evaluated samples");
  return weighted / total;
}

}  // namespace dpadapt
