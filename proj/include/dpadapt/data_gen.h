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


#ifndef DPADAPT_DATA_GEN_H_
#define DPADAPT_DATA_GEN_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpadapt/common.h"

namespace dpadapt {

enum class Sensitivity : uint32_t { kSensitive = 0, kPublic = 1 };

// Feature matrix (one sample per row) with integer labels and an immutable
// sensitivity tag. Derived datasets inherit the tag.
class LabeledDataset {
 public:
  LabeledDataset(Eigen::MatrixXd features, std::vector<int> labels,
                 int num_classes, Sensitivity sensitivity);

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int num_classes() const { return num_classes_; }
  Sensitivity sensitivity() const { return sensitivity_; }
  size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }

  LabeledDataset Subset(std::span<const size_t> indices) const;
  // Samples with the given labels replacing the stored ones.
  LabeledDataset WithLabels(std::vector<int> labels) const;

 private:
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  int num_classes_;
  Sensitivity sensitivity_;
};

// Row concatenation. The result is sensitive if either input is.
LabeledDataset Concat(const LabeledDataset& a, const LabeledDataset& b);

// A dataset proven public at construction. Student-side APIs accept only
// this type, so sensitive data cannot reach them by accident.
class PublicDataset {
 public:
  // Throws InputError when `data` is tagged sensitive.
  explicit PublicDataset(LabeledDataset data);

  const LabeledDataset& data() const { return data_; }
  size_t size() const { return data_.size(); }

 private:
  LabeledDataset data_;
};

struct SyntheticSpec {
  int num_classes = 13;
  int samples_per_class = 100;
  int feature_dim = 40;
  double class_separation = 4.0;
  // 0 means source and target are drawn from the same distribution.
  double domain_shift = 1.0;
  // Gaussian sub-clusters per class; more than one makes classes
  // non-convex.
  int clusters_per_class = 1;
  double noise_stddev = 1.0;
  uint64_t seed = 0;

  void Validate() const;
};

struct DomainPair {
  LabeledDataset source;  // Tagged public.
  LabeledDataset target;  // Tagged sensitive.
};

// Source: Gaussian clusters around random class centres. Target: the same
// generative process followed by a rotation and a per-class translation,
// both proportional to `domain_shift`. Deterministic in `spec.seed`.
DomainPair Generate(const SyntheticSpec& spec);

// Angle (radians) of each plane rotation per unit of domain_shift.
inline constexpr double kRotationPerUnitShift = 0.3926990816987241;  // pi/8
// Class-mean translation per unit of domain_shift, relative to
// class_separation.
inline constexpr double kTranslationPerUnitShift = 0.5;

struct TargetSplit {
  LabeledDataset teacher_train;  // Train pool, keeps the sensitive tag.
  PublicDataset student_public;  // First half of the test pool.
  PublicDataset eval;            // Second half of the test pool.
};

// Stratified split: a `test_fraction` share of every class forms the test
// pool, which is halved (class by class, alternating) into the student's
// public data and the evaluation set.
TargetSplit TargetSplits(const LabeledDataset& target, double test_fraction,
                       Rng& rng);

// CSV with a header row f0,...,f{d-1},label.
void WriteCsv(const LabeledDataset& data, std::ostream& out);
LabeledDataset ReadCsv(std::istream& in, int num_classes,
                       Sensitivity sensitivity);

// Binary layout, little-endian:
//   "DPDS" | u32 version=1 | u32 sensitivity | u32 rows | u32 cols |
//   u32 num_classes | f32 features[rows*cols] (row-major) | i32 labels[rows]
void WriteBinary(const LabeledDataset& data, std::ostream& out);
LabeledDataset ReadBinary(std::istream& in);

}  // namespace dpadapt

#endif  // DPADAPT_DATA_GEN_H_
