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


#ifndef DPADAPT_PRIVACY_H_
#define DPADAPT_PRIVACY_H_

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dpadapt/common.h"

namespace dpadapt {

// Order used for the max-divergence (pure DP) point of an RdpCurve.
inline constexpr double kInfiniteOrder = std::numeric_limits<double>::infinity();

// An (epsilon, delta) guarantee in nats.
struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;

  // Validating constructor: epsilon >= 0 and 0 <= delta <= 1.
  static PrivacyBudget Make(double epsilon, double delta);
};

// Finite map alpha -> epsilon_rdp(alpha) with strictly increasing orders.
//
// Orders are > 1 and may include kInfiniteOrder, whose value is the pure-DP
// epsilon of the mechanism. Epsilon values may be +infinity; an infinite
// entry stays infinite under composition.
class RdpCurve {
 public:
  struct Point {
    double alpha;
    double epsilon;
  };

  RdpCurve() = default;
  explicit RdpCurve(std::vector<Point> points);

  // All-zero curve on the given orders (the composition identity).
  static RdpCurve Zero(std::span<const double> alphas);

  std::span<const Point> points() const { return points_; }
  bool empty() const { return points_.empty(); }
  size_t size() const { return points_.size(); }
  std::vector<double> Alphas() const;

  // Value at `alpha`: exact for grid orders, linear interpolation between
  // neighbouring finite orders. Throws InputError outside the grid.
  double EpsilonAt(double alpha) const;

  bool SameGrid(const RdpCurve& other) const;

 private:
  std::vector<Point> points_;
};

// Default order grid used by the accountants.
std::span<const double> DefaultAlphaGrid();
// DefaultAlphaGrid() followed by kInfiniteOrder.
std::vector<double> DefaultAlphaGridWithInfinity();

// A probability vector; entries >= 0 and summing to 1 within 1e-9.
class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(std::vector<double> probs);
  std::span<const double> probs() const { return probs_; }
  size_t size() const { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

// D_alpha(p || q) in nats. Returns +infinity when p puts mass where q has
// none. alpha may be kInfiniteOrder (max-divergence).
double RenyiDivergence(const DiscreteDistribution& p,
                       const DiscreteDistribution& q, double alpha);

// (alpha, eps_rdp)-RDP implies (eps_rdp + log(1/delta) / (alpha - 1), delta)-DP.
// delta must lie in (0, 1]. At alpha = kInfiniteOrder the log term vanishes.
PrivacyBudget RdpToDp(double alpha, double eps_rdp, double delta);

// Pointwise sum on a common grid. Curves on different grids are re-gridded
// by linear interpolation onto the union of their orders restricted to the
// range both cover; kInfiniteOrder survives only if both curves carry it.
RdpCurve Compose(const RdpCurve& a, const RdpCurve& b);

// `count`-fold self-composition. count = 0 yields the zero curve, including a
// zero max-divergence point.
RdpCurve ComposeN(const RdpCurve& curve, int64_t count);

struct DpConversion {
  PrivacyBudget budget;
  double alpha = 0.0;  // Order attaining the minimum.
};

// Tightest conversion over the curve's grid.
DpConversion BestDp(const RdpCurve& curve, double delta);

// RDP of the Gaussian mechanism with noise stddev = multiplier x sensitivity:
// alpha / (2 multiplier^2). The max-divergence point is infinite.
RdpCurve GaussianRdp(double noise_multiplier, std::span<const double> alphas);

// RDP of the scalar Laplace mechanism whose scale is `scale_over_sensitivity`
// times the sensitivity. The max-divergence point is 1 / scale_over_sensitivity.
RdpCurve LaplaceRdp(double scale_over_sensitivity,
                    std::span<const double> alphas);

enum class NoiseKind { kLaplace, kGaussian };

// Laplace scale (lambda) or Gaussian stddev (sigma).
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kLaplace;
  double scale = 1.0;
};

// i.i.d. zero-mean samples. Throws DomainError for scale <= 0.
std::vector<double> SampleNoise(const NoiseSpec& spec, size_t count, Rng& rng);

}  // namespace dpadapt

#endif  // DPADAPT_PRIVACY_H_
