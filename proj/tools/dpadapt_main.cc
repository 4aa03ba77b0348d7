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


// Command line front end: run, sweep and account.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpadapt/common.h"
#include "dpadapt/dpsgd.h"
#include "dpadapt/harness.h"
#include "dpadapt/pate.h"
#include "dpadapt/privacy.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kSeedEnv[] = "DPADAPT_SEED";

// The env seed goes in first so an explicit "seeds" line in the file wins.
dpadapt::ExperimentConfig LoadConfig(const std::string& path,
                                     const std::vector<std::string>& sets) {
  std::string text;
  if (const char* seed = std::getenv(kSeedEnv); seed && *seed) {
    text = std::string("seeds = ") + seed + "\n";
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw dpadapt::ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text += buf.str();
  }
  std::istringstream in(text);
  dpadapt::ExperimentConfig config = dpadapt::ParseConfig(in);
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw dpadapt::ConfigError("--set expects key=value, got " + s);
    }
    dpadapt::SetConfigValue(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (config.label.empty()) {
    config.label = std::string(dpadapt::MethodName(config.method)) + "/" +
                   std::string(dpadapt::PrivacyName(config.privacy));
  }
  config.Validate();
  return config;
}

void WriteFile(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw dpadapt::InputError("cannot write " + path.string());
  out << body;
}

void PrintReport(const dpadapt::ExperimentReport& r) {
  std::cout << r.label << ": acc=" << r.mean_accuracy
            << " params=" << r.trainable_params << " utility=" << r.utility;
  if (r.epsilon_spent) std::cout << " eps=" << *r.epsilon_spent;
  std::cout << " (" << r.wall_time_seconds << "s)\n";
}

int DoRun(const std::string& config_path, const std::vector<std::string>& sets,
          const std::string& out_dir) {
  const auto config = LoadConfig(config_path, sets);
  dpadapt::PretrainCache cache;
  const auto report = dpadapt::Run(config, &cache);
  PrintReport(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteFile(fs::path(out_dir) / "report.json", report.ToJson().dump(2));
    WriteFile(fs::path(out_dir) / "summary.csv",
              dpadapt::SummaryCsv({&report, 1}));
    WriteFile(fs::path(out_dir) / "config.cfg", dpadapt::FormatConfig(config));
  }
  return 0;
}

int DoSweep(const std::string& config_path,
            const std::vector<std::string>& sets, const std::string& axis,
            const std::vector<std::string>& values,
            const std::string& out_dir) {
  const auto config = LoadConfig(config_path, sets);
  dpadapt::PretrainCache cache;
  const auto result =
      dpadapt::Sweep(config, dpadapt::ParseSweepAxis(axis), values, &cache);
  for (const auto& r : result.reports) PrintReport(r);
  std::cout << result.summary_csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json all = json::array();
    for (const auto& r : result.reports) all.push_back(r.ToJson());
    WriteFile(fs::path(out_dir) / "report.json", all.dump(2));
    WriteFile(fs::path(out_dir) / "summary.csv", result.summary_csv);
    WriteFile(fs::path(out_dir) / "config.cfg", dpadapt::FormatConfig(config));
  }
  return 0;
}

struct AccountArgs {
  std::string mechanism = "pate";
  double lambda = 20.0;
  int teachers = 100;
  int64_t queries = 100;
  double noise_multiplier = 1.0;
  int steps = 100;
  double delta = 1e-5;
  double target_epsilon = 0.0;
};

int DoAccount(const AccountArgs& a) {
  json out;
  out["mechanism"] = a.mechanism;
  out["delta"] = a.delta;
  if (a.mechanism == "pate") {
    const auto per_query = dpadapt::PerQueryRdp(a.lambda, a.teachers);
    const auto total = dpadapt::ComposeN(per_query, a.queries);
    const auto best = dpadapt::BestDp(total, a.delta);
    out["lambda"] = a.lambda;
    out["queries"] = a.queries;
    out["epsilon"] = best.budget.epsilon;
    out["alpha"] = best.alpha;
    if (a.target_epsilon > 0) {
      // Queries affordable under the target, counted one at a time.
      int64_t n = 0;
      dpadapt::RdpCurve acc = dpadapt::ComposeN(per_query, 0);
      while (true) {
        auto next = dpadapt::Compose(acc, per_query);
        if (dpadapt::BestDp(next, a.delta).budget.epsilon > a.target_epsilon)
          break;
        acc = std::move(next);
        ++n;
      }
      out["max_queries"] = n;
    }
  } else if (a.mechanism == "dpsgd") {
    double z = a.noise_multiplier;
    if (a.target_epsilon > 0) {
      z = dpadapt::CalibrateNoiseMultiplier(a.steps, a.target_epsilon,
                                            a.delta);
      out["calibrated"] = true;
    }
    dpadapt::DpsgdConfig c;
    c.noise_multiplier = z;
    c.steps = a.steps;
    c.dataset_size = c.batch_size;
    const auto best = dpadapt::DpsgdAccountDetailed(c, a.delta);
    out["noise_multiplier"] = z;
    out["steps"] = a.steps;
    out["epsilon"] = best.budget.epsilon;
    out["alpha"] = best.alpha;
  } else {
    throw dpadapt::ConfigError("unknown mechanism " + a.mechanism);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private adaptation with residual adapters"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> sets;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("-c,--config", config_path, "key = value config file");
  run->add_option("-s,--set", sets, "Override, key=value (repeatable)");
  run->add_option("-o,--out", out_dir, "Directory for report.json etc.");

  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Sweep one axis");
  sweep->add_option("-c,--config", config_path, "key = value config file");
  sweep->add_option("-s,--set", sets, "Override, key=value (repeatable)");
  sweep->add_option("-a,--axis", axis, "adapter_dim, topology or lambda")
      ->required();
  sweep->add_option("-v,--values", values, "Axis values")
      ->required()
      ->delimiter(',');
  sweep->add_option("-o,--out", out_dir, "Output directory");

  AccountArgs acc;
  auto* account = app.add_subcommand("account", "Privacy cost only");
  account->add_option("-m,--mechanism", acc.mechanism, "pate or dpsgd")
      ->check(CLI::IsMember({"pate", "dpsgd"}));
  account->add_option("--lambda", acc.lambda, "Laplace scale (pate)");
  account->add_option("--teachers", acc.teachers, "Ensemble size (pate)");
  account->add_option("--queries", acc.queries, "Answered queries (pate)");
  account->add_option("-z,--noise-multiplier", acc.noise_multiplier,
                      "Noise multiplier (dpsgd)");
  account->add_option("--steps", acc.steps, "Optimizer steps (dpsgd)");
  account->add_option("--delta", acc.delta, "Target delta");
  account->add_option("--target-epsilon", acc.target_epsilon,
                      "pate: report affordable queries; dpsgd: calibrate z");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return DoRun(config_path, sets, out_dir);
    if (*sweep) return DoSweep(config_path, sets, axis, values, out_dir);
    return DoAccount(acc);
  } catch (const dpadapt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
