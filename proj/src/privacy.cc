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


#include "dpadapt/privacy.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace dpadapt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbabilityTolerance = 1e-9;

constexpr double kDefaultAlphas[] = {1.25, 1.5, 2,  3,  4,   5,
                                     8,    16,  32, 64, 128, 256};

void CheckOrder(double alpha) {
  if (!(alpha > 1.0)) {
    throw DomainError("Renyi order must exceed 1, got " +
                      std::to_string(alpha));
  }
}

// Infinity-poisoning addition; also guards inf + (-inf), which cannot occur
// for valid (non-negative) curves.
double AddEpsilon(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return kInf;
  return a + b;
}

double LogSumExp(double a, double b) {
  const double hi = std::max(a, b);
  if (std::isinf(hi)) return hi;
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

}  // namespace

PrivacyBudget PrivacyBudget::Make(double epsilon, double delta) {
  if (!(epsilon >= 0.0)) throw DomainError("epsilon must be non-negative");
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw DomainError("delta must lie in [0, 1]");
  }
  return PrivacyBudget{epsilon, delta};
}

RdpCurve::RdpCurve(std::vector<Point> points) : points_(std::move(points)) {
  for (size_t i = 0; i < points_.size(); ++i) {
    CheckOrder(points_[i].alpha);
    if (!(points_[i].epsilon >= 0.0)) {
      throw DomainError("RDP epsilon must be non-negative");
    }
    if (i > 0 && !(points_[i].alpha > points_[i - 1].alpha)) {
      throw InputError("RDP orders must be strictly increasing");
    }
  }
}

RdpCurve RdpCurve::Zero(std::span<const double> alphas) {
  std::vector<Point> points;
  points.reserve(alphas.size());
  for (double a : alphas) points.push_back({a, 0.0});
  return RdpCurve(std::move(points));
}

std::vector<double> RdpCurve::Alphas() const {
  std::vector<double> alphas;
  alphas.reserve(points_.size());
  for (const Point& p : points_) alphas.push_back(p.alpha);
  return alphas;
}

double RdpCurve::EpsilonAt(double alpha) const {
  auto it = std::lower_bound(
      points_.begin(), points_.end(), alpha,
      [](const Point& p, double a) { return p.alpha < a; });
  if (it != points_.end() && it->alpha == alpha) return it->epsilon;
  if (it == points_.begin() || it == points_.end() || std::isinf(it->alpha)) {
    throw InputError("order " + std::to_string(alpha) +
                     " lies outside the curve's grid");
  }
  const Point& hi = *it;
  const Point& lo = *(it - 1);
  if (std::isinf(lo.epsilon) || std::isinf(hi.epsilon)) return kInf;
  const double t = (alpha - lo.alpha) / (hi.alpha - lo.alpha);
  return lo.epsilon + t * (hi.epsilon - lo.epsilon);
}

bool RdpCurve::SameGrid(const RdpCurve& other) const {
  if (points_.size() != other.points_.size()) return false;
  for (size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].alpha != other.points_[i].alpha) return false;
  }
  return true;
}

std::span<const double> DefaultAlphaGrid() { return kDefaultAlphas; }

std::vector<double> DefaultAlphaGridWithInfinity() {
  std::vector<double> alphas(std::begin(kDefaultAlphas),
                             std::end(kDefaultAlphas));
  alphas.push_back(kInfiniteOrder);
  return alphas;
}

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("distribution must be non-empty");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw DomainError("probabilities must be non-negative");
    total += p;
  }
  if (std::fabs(total - 1.0) > kProbabilityTolerance) {
    throw DomainError("probabilities must sum to 1");
  }
}

double RenyiDivergence(const DiscreteDistribution& p,
                       const DiscreteDistribution& q, double alpha) {
  if (p.size() != q.size()) {
    throw InputError("RenyiDivergence: distributions differ in length");
  }
  CheckOrder(alpha);
  const auto pp = p.probs();
  const auto qq = q.probs();
  if (std::isinf(alpha)) {
    double worst = 0.0;
    for (size_t i = 0; i < pp.size(); ++i) {
      if (pp[i] == 0.0) continue;
      if (qq[i] == 0.0) return kInf;
      worst = std::max(worst, std::log(pp[i] / qq[i]));
    }
    return worst;
  }
  // log sum_i p_i^alpha q_i^(1 - alpha), accumulated in log space.
  double log_sum = -kInf;
  for (size_t i = 0; i < pp.size(); ++i) {
    if (pp[i] == 0.0) continue;
    if (qq[i] == 0.0) return kInf;
    const double term =
        alpha * std::log(pp[i]) + (1.0 - alpha) * std::log(qq[i]);
    log_sum = LogSumExp(log_sum, term);
  }
  // Rounding can produce tiny negatives for p == q.
  return std::max(0.0, log_sum / (alpha - 1.0));
}

PrivacyBudget RdpToDp(double alpha, double eps_rdp, double delta) {
  CheckOrder(alpha);
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw DomainError("delta must lie in (0, 1]");
  }
  if (!(eps_rdp >= 0.0)) throw DomainError("RDP epsilon must be non-negative");
  if (std::isinf(alpha)) return PrivacyBudget::Make(eps_rdp, delta);
  return PrivacyBudget::Make(eps_rdp + std::log(1.0 / delta) / (alpha - 1.0),
                             delta);
}

RdpCurve Compose(const RdpCurve& a, const RdpCurve& b) {
  if (a.empty() || b.empty()) throw InputError("Compose: empty curve");
  std::vector<RdpCurve::Point> out;
  if (a.SameGrid(b)) {
    out.reserve(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
      out.push_back({a.points()[i].alpha,
                     AddEpsilon(a.points()[i].epsilon, b.points()[i].epsilon)});
    }
    return RdpCurve(std::move(out));
  }

  auto finite_range = [](const RdpCurve& c) {
    double lo = kInf, hi = -kInf;
    for (const auto& p : c.points()) {
      if (std::isinf(p.alpha)) continue;
      lo = std::min(lo, p.alpha);
      hi = std::max(hi, p.alpha);
    }
    return std::pair{lo, hi};
  };
  const auto [lo_a, hi_a] = finite_range(a);
  const auto [lo_b, hi_b] = finite_range(b);
  const double lo = std::max(lo_a, lo_b);
  const double hi = std::min(hi_a, hi_b);

  std::vector<double> grid;
  for (const RdpCurve* c : {&a, &b}) {
    for (const auto& p : c->points()) {
      if (!std::isinf(p.alpha) && p.alpha >= lo && p.alpha <= hi) {
        grid.push_back(p.alpha);
      }
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const bool both_infinite = !a.points().empty() && !b.points().empty() &&
                             std::isinf(a.points().back().alpha) &&
                             std::isinf(b.points().back().alpha);
  if (both_infinite) grid.push_back(kInfiniteOrder);
  if (grid.empty()) throw InputError("Compose: curves share no order range");

  out.reserve(grid.size());
  for (double alpha : grid) {
    out.push_back({alpha, AddEpsilon(a.EpsilonAt(alpha), b.EpsilonAt(alpha))});
  }
  return RdpCurve(std::move(out));
}

RdpCurve ComposeN(const RdpCurve& curve, int64_t count) {
  if (count < 0) throw InputError("ComposeN: negative count");
  std::vector<RdpCurve::Point> out;
  out.reserve(curve.size());
  for (const auto& p : curve.points()) {
    double eps = 0.0;
    if (count > 0) {
      eps = std::isinf(p.epsilon) ? kInf
                                  : static_cast<double>(count) * p.epsilon;
    }
    out.push_back({p.alpha, eps});
  }
  return RdpCurve(std::move(out));
}

DpConversion BestDp(const RdpCurve& curve, double delta) {
  if (curve.empty()) throw InputError("BestDp: empty curve");
  DpConversion best{PrivacyBudget{kInf, delta}, curve.points().front().alpha};
  for (const auto& p : curve.points()) {
    if (std::isinf(p.epsilon)) continue;
    const PrivacyBudget candidate = RdpToDp(p.alpha, p.epsilon, delta);
    if (candidate.epsilon < best.budget.epsilon) {
      best = DpConversion{candidate, p.alpha};
    }
  }
  return best;
}

RdpCurve GaussianRdp(double noise_multiplier,
                     std::span<const double> alphas) {
  if (!(noise_multiplier > 0.0)) {
    throw DomainError("noise multiplier must be positive");
  }
  std::vector<RdpCurve::Point> points;
  points.reserve(alphas.size());
  for (double a : alphas) {
    const double eps =
        std::isinf(a) ? kInf : a / (2.0 * noise_multiplier * noise_multiplier);
    points.push_back({a, eps});
  }
  return RdpCurve(std::move(points));
}

RdpCurve LaplaceRdp(double scale_over_sensitivity,
                    std::span<const double> alphas) {
  const double b = scale_over_sensitivity;
  if (!(b > 0.0)) throw DomainError("Laplace scale must be positive");
  std::vector<RdpCurve::Point> points;
  points.reserve(alphas.size());
  for (double a : alphas) {
    CheckOrder(a);
    double eps;
    if (std::isinf(a)) {
      eps = 1.0 / b;
    } else {
      // (1/(a-1)) log[ a/(2a-1) e^{(a-1)/b} + (a-1)/(2a-1) e^{-a/b} ]
      const double log_first = std::log(a / (2.0 * a - 1.0)) + (a - 1.0) / b;
      const double log_second = std::log((a - 1.0) / (2.0 * a - 1.0)) - a / b;
      eps = LogSumExp(log_first, log_second) / (a - 1.0);
      eps = std::clamp(eps, 0.0, 1.0 / b);
    }
    points.push_back({a, eps});
  }
  return RdpCurve(std::move(points));
}

std::vector<double> SampleNoise(const NoiseSpec& spec, size_t count,
                                Rng& rng) {
  if (!(spec.scale > 0.0)) throw DomainError("noise scale must be positive");
  std::vector<double> out(count);
  for (double& v : out) {
    v = spec.kind == NoiseKind::kLaplace ? rng.Laplace(spec.scale)
                                         : rng.Normal(0.0, spec.scale);
  }
  return out;
}

}  // namespace dpadapt
