#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "boxloss/losses.hpp"

namespace boxloss {

enum class PairFilter {
  kMixed,        // alternates overlapping and disjoint pairs
  kOverlapOnly,
  kDisjointOnly,
};

struct GradCheckConfig {
  int cases = 1000;
  double tolerance = 1e-5;  // on the scaled error below
  double step = 1e-6;       // central-difference half step
  std::uint64_t seed = 1;
  PairFilter pairs = PairFilter::kMixed;
  double ema_mean = 1.0;  // tracker mean supplied to focusing wrappers
};

struct GradCheckReport {
  std::string loss;
  int cases = 0;
  double max_scaled_err = 0.0;
  bool all_gradients_zero = false;  // expected vanishing (plain IoU, disjoint)
  bool passed = false;
};

/// |a - b| / max(|a|, |b|, 1e-3): equals the relative error away from zero
/// and an absolute comparison at 1e-8 resolution near it (for the default
/// 1e-5 tolerance).
double scaled_error(double a, double b);

/// A random box pair away from every subgradient tie (overlap edges, equal
/// sizes, axis-aligned or diagonal centers), so central differences probe a
/// smooth neighborhood.
std::pair<BBox, BBox> random_case_pair(std::mt19937_64& rng, PairFilter filter,
                                       std::int64_t index = 0);

/// Compares backward gradients against central finite differences of the
/// recorded tape (detached quantities and focusing coefficients frozen).
GradCheckReport grad_check(const LossSpec& spec, const GradCheckConfig& config);

}  // namespace boxloss
