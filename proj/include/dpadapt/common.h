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

#ifndef DPADAPT_COMMON_H_
#define DPADAPT_COMMON_H_

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpadapt {

// Malformed arguments: shape mismatches, empty inputs, out-of-range indices.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Arguments outside a mathematical domain, e.g. alpha <= 1 or a
// non-positive noise scale.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when a privacy budget is already spent.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated internal ordering or bookkeeping invariants.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Seedable, splittable pseudo-random generator.
//
// All stochastic code in the library takes an Rng explicitly. Distributions
// are derived from raw 64-bit draws in this file rather than through
// <random> distribution objects, whose output is implementation-defined, so
// streams are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Independent child stream. Depends only on this generator's seed and
  // `stream`, never on how many numbers have been drawn.
  Rng Split(uint64_t stream) const;

  uint64_t seed() const { return seed_; }

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Uniform in (0, 1).
  double UniformOpen();
  // Uniform integer in [0, n). Requires n > 0.
  uint64_t UniformInt(uint64_t n);
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }
  // Zero-mean Laplace with the given scale.
  double Laplace(double scale);

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (size_t i = values.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(UniformInt(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// SplitMix64 finalizer; used for seed derivation.
uint64_t MixBits(uint64_t x);

// FNV-1a over raw bytes of a double array. Used to pin frozen weights.
uint64_t HashDoubles(std::span<const double> values);

}  // namespace dpadapt

#endif  // DPADAPT_COMMON_H_
