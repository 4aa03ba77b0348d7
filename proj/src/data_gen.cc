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


#include "dpadapt/data_gen.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "binary_io.h"

namespace dpadapt {
namespace {

constexpr uint32_t kDatasetVersion = 1;

Eigen::VectorXd RandomUnitVector(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.Normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

// Draws samples_per_class points per class, rows shuffled.
LabeledDataset SampleClusters(const SyntheticSpec& spec,
                              const std::vector<Eigen::VectorXd>& centres,
                              Sensitivity tag, Rng& rng) {
  const int n = spec.num_classes * spec.samples_per_class;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(order);

  Eigen::MatrixXd features(n, spec.feature_dim);
  std::vector<int> labels(n);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int k = 0; k < spec.samples_per_class; ++k) {
      const size_t row = order[c * spec.samples_per_class + k];
      const auto& centre = centres[c * spec.clusters_per_class +
                                   k % spec.clusters_per_class];
      for (int j = 0; j < spec.feature_dim; ++j) {
        features(row, j) = centre[j] + spec.noise_stddev * rng.Normal();
      }
      labels[row] = c;
    }
  }
  return LabeledDataset(std::move(features), std::move(labels),
                        spec.num_classes, tag);
}

// Composition of plane rotations over disjoint coordinate pairs chosen by a
// random permutation, each by `angle`.
Eigen::MatrixXd PlaneRotations(int dim, double angle, Rng& rng) {
  std::vector<int> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  rng.Shuffle(perm);
  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(dim, dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (int k = 0; k + 1 < dim; k += 2) {
    const int i = perm[k];
    const int j = perm[k + 1];
    rotation(i, i) = c;
    rotation(j, j) = c;
    rotation(i, j) = -s;
    rotation(j, i) = s;
  }
  return rotation;
}

}  // namespace

LabeledDataset::LabeledDataset(Eigen::MatrixXd features,
                               std::vector<int> labels, int num_classes,
                               Sensitivity sensitivity)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      sensitivity_(sensitivity) {
  if (static_cast<size_t>(features_.rows()) != labels_.size()) {
    throw InputError("dataset: feature rows and label count differ");
  }
  if (num_classes_ < 2) throw InputError("dataset: need at least 2 classes");
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw InputError("dataset: label out of range: " + std::to_string(y));
    }
  }
}

LabeledDataset LabeledDataset::Subset(std::span<const size_t> indices) const {
  Eigen::MatrixXd features(static_cast<Eigen::Index>(indices.size()),
                           features_.cols());
  std::vector<int> labels(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw InputError("Subset: index out of range");
    features.row(static_cast<Eigen::Index>(i)) =
        features_.row(static_cast<Eigen::Index>(indices[i]));
    labels[i] = labels_[indices[i]];
  }
  return LabeledDataset(std::move(features), std::move(labels), num_classes_,
                        sensitivity_);
}

LabeledDataset LabeledDataset::WithLabels(std::vector<int> labels) const {
  return LabeledDataset(features_, std::move(labels), num_classes_,
                        sensitivity_);
}

LabeledDataset Concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.feature_dim() != b.feature_dim() ||
      a.num_classes() != b.num_classes()) {
    throw InputError("Concat: incompatible datasets");
  }
  Eigen::MatrixXd features(a.features().rows() + b.features().rows(),
                           a.feature_dim());
  features << a.features(), b.features();
  std::vector<int> labels = a.labels();
  labels.insert(labels.end(), b.labels().begin(), b.labels().end());
  const Sensitivity tag = (a.sensitivity() == Sensitivity::kSensitive ||
                           b.sensitivity() == Sensitivity::kSensitive)
                              ? Sensitivity::kSensitive
                              : Sensitivity::kPublic;
  return LabeledDataset(std::move(features), std::move(labels),
                        a.num_classes(), tag);
}

PublicDataset::PublicDataset(LabeledDataset data) : data_(std::move(data)) {
  if (data_.sensitivity() != Sensitivity::kPublic) {
    throw InputError("PublicDataset: dataset is tagged sensitive");
  }
}

void SyntheticSpec::Validate() const {
  if (num_classes < 2) throw InputError("num_classes must be >= 2");
  if (samples_per_class < 1) throw InputError("samples_per_class must be >= 1");
  if (feature_dim < 1) throw InputError("feature_dim must be >= 1");
  if (clusters_per_class < 1) {
    throw InputError("clusters_per_class must be >= 1");
  }
  if (!(class_separation > 0.0)) {
    throw DomainError("class_separation must be positive");
  }
  if (!(domain_shift >= 0.0)) {
    throw DomainError("domain_shift must be non-negative");
  }
  if (!(noise_stddev > 0.0)) throw DomainError("noise_stddev must be positive");
}

DomainPair Generate(const SyntheticSpec& spec) {
  spec.Validate();
  const Rng root(spec.seed);

  Rng centre_rng = root.Split(0);
  std::vector<Eigen::VectorXd> centres;
  centres.reserve(spec.num_classes * spec.clusters_per_class);
  for (int i = 0; i < spec.num_classes * spec.clusters_per_class; ++i) {
    centres.push_back(spec.class_separation *
                      RandomUnitVector(spec.feature_dim, centre_rng));
  }

  Rng source_rng = root.Split(1);
  LabeledDataset source =
      SampleClusters(spec, centres, Sensitivity::kPublic, source_rng);

  Rng target_rng = root.Split(2);
  LabeledDataset raw_target =
      SampleClusters(spec, centres, Sensitivity::kSensitive, target_rng);

  Rng shift_rng = root.Split(3);
  const Eigen::MatrixXd rotation = PlaneRotations(
      spec.feature_dim, spec.domain_shift * kRotationPerUnitShift, shift_rng);
  const double translation =
      spec.domain_shift * spec.class_separation * kTranslationPerUnitShift;
  Eigen::MatrixXd offsets(spec.num_classes, spec.feature_dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    offsets.row(c) =
        translation * RandomUnitVector(spec.feature_dim, shift_rng).transpose();
  }

  Eigen::MatrixXd shifted = raw_target.features() * rotation.transpose();
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) {
    shifted.row(i) += offsets.row(raw_target.labels()[i]);
  }
  LabeledDataset target(std::move(shifted), raw_target.labels(),
                        spec.num_classes, Sensitivity::kSensitive);
  return DomainPair{std::move(source), std::move(target)};
}

TargetSplit TargetSplits(const LabeledDataset& target, double test_fraction,
                       Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InputError("TargetSplits: test_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<size_t>> by_class(target.num_classes());
  for (size_t i = 0; i < target.size(); ++i) {
    by_class[target.labels()[i]].push_back(i);
  }
  std::vector<size_t> train, student, eval;
  bool to_student = true;
  for (auto& members : by_class) {
    rng.Shuffle(members);
    const auto test_count = static_cast<size_t>(
        std::llround(test_fraction * static_cast<double>(members.size())));
    const size_t train_count = members.size() - test_count;
    train.insert(train.end(), members.begin(), members.begin() + train_count);
    // Alternating assignment keeps both halves stratified and their totals
    // within one sample of each other.
    for (size_t k = train_count; k < members.size(); ++k) {
      (to_student ? student : eval).push_back(members[k]);
      to_student = !to_student;
    }
  }
  if (train.empty() || student.empty() || eval.empty()) {
    throw InputError("TargetSplits: too few samples for three non-empty parts");
  }
  std::sort(train.begin(), train.end());
  std::sort(student.begin(), student.end());
  std::sort(eval.begin(), eval.end());

  auto declassify = [&](const std::vector<size_t>& idx) {
    LabeledDataset part = target.Subset(idx);
    return PublicDataset(LabeledDataset(part.features(), part.labels(),
                                        part.num_classes(),
                                        Sensitivity::kPublic));
  };
  return TargetSplit{target.Subset(train), declassify(student),
                    declassify(eval)};
}

void WriteCsv(const LabeledDataset& data, std::ostream& out) {
  for (int j = 0; j < data.feature_dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  out.precision(17);
  for (size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.feature_dim(); ++j) {
      out << data.features()(static_cast<Eigen::Index>(i), j) << ',';
    }
    out << data.labels()[i] << '\n';
  }
}

LabeledDataset ReadCsv(std::istream& in, int num_classes,
                       Sensitivity sensitivity) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("ReadCsv: missing header");
  const auto columns = std::count(line.begin(), line.end(), ',') + 1;
  if (columns < 2) throw InputError("ReadCsv: need features and a label");
  const int dim = static_cast<int>(columns - 1);

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int col = 0;
    while (std::getline(row, cell, ',')) {
      try {
        if (col < dim) {
          values.push_back(std::stod(cell));
        } else if (col == dim) {
          labels.push_back(std::stoi(cell));
        }
      } catch (const std::exception&) {
        throw InputError("ReadCsv: bad cell '" + cell + "'");
      }
      ++col;
    }
    if (col != dim + 1) throw InputError("ReadCsv: ragged row");
  }
  Eigen::MatrixXd features(static_cast<Eigen::Index>(labels.size()), dim);
  for (size_t i = 0; i < labels.size(); ++i) {
    for (int j = 0; j < dim; ++j) {
      features(static_cast<Eigen::Index>(i), j) = values[i * dim + j];
    }
  }
  return LabeledDataset(std::move(features), std::move(labels), num_classes,
                        sensitivity);
}

void WriteBinary(const LabeledDataset& data, std::ostream& out) {
  using namespace binary_io;
  WriteMagic(out, "DPDS");
  Write<uint32_t>(out, kDatasetVersion);
  Write<uint32_t>(out, static_cast<uint32_t>(data.sensitivity()));
  Write<uint32_t>(out, static_cast<uint32_t>(data.size()));
  Write<uint32_t>(out, static_cast<uint32_t>(data.feature_dim()));
  Write<uint32_t>(out, static_cast<uint32_t>(data.num_classes()));
  for (size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.feature_dim(); ++j) {
      Write<float>(out, static_cast<float>(
                            data.features()(static_cast<Eigen::Index>(i), j)));
    }
  }
  for (int y : data.labels()) Write<int32_t>(out, y);
}

LabeledDataset ReadBinary(std::istream& in) {
  using namespace binary_io;
  ExpectMagic(in, "DPDS");
  if (Read<uint32_t>(in) != kDatasetVersion) {
    throw InputError("ReadBinary: unsupported dataset version");
  }
  const auto tag = Read<uint32_t>(in);
  if (tag > 1) throw InputError("ReadBinary: bad sensitivity tag");
  const auto rows = Read<uint32_t>(in);
  const auto cols = Read<uint32_t>(in);
  const auto classes = Read<uint32_t>(in);
  Eigen::MatrixXd features(rows, cols);
  for (uint32_t i = 0; i < rows; ++i) {
    for (uint32_t j = 0; j < cols; ++j) features(i, j) = Read<float>(in);
  }
  std::vector<int> labels(rows);
  for (int& y : labels) y = Read<int32_t>(in);
  return LabeledDataset(std::move(features), std::move(labels),
                        static_cast<int>(classes),
                        static_cast<Sensitivity>(tag));
}

}  // namespace dpadapt
