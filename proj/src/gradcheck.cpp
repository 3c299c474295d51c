#include "boxloss/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace boxloss {

double scaled_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3});
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Distances from the subgradient ties that central differences must not
// straddle. Center offsets get a wider berth because the angle cost's
// curvature grows as the centers approach.
constexpr double kEdgeMargin = 1e-3;
constexpr double kCenterMargin = 3e-3;

bool away_from_ties(const BBox& a, const BBox& b) {
  const double a_l = a.x - a.w / 2, a_r = a.x + a.w / 2;
  const double a_b = a.y - a.h / 2, a_t = a.y + a.h / 2;
  const double b_l = b.x - b.w / 2, b_r = b.x + b.w / 2;
  const double b_b = b.y - b.h / 2, b_t = b.y + b.h / 2;

  const double raw_ox = std::min(a_r, b_r) - std::max(a_l, b_l);
  const double raw_oy = std::min(a_t, b_t) - std::max(a_b, b_b);
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;

  return std::fabs(raw_ox) > kEdgeMargin && std::fabs(raw_oy) > kEdgeMargin &&
         std::fabs(a_r - b_r) > kEdgeMargin &&
         std::fabs(a_l - b_l) > kEdgeMargin &&
         std::fabs(a_t - b_t) > kEdgeMargin &&
         std::fabs(a_b - b_b) > kEdgeMargin &&
         std::fabs(a.w - b.w) > kEdgeMargin &&
         std::fabs(a.h - b.h) > kEdgeMargin &&
         std::fabs(dx) > kCenterMargin && std::fabs(dy) > kCenterMargin &&
         std::fabs(std::fabs(dx) - std::fabs(dy)) > kCenterMargin;
}

bool overlapping(const BBox& a, const BBox& b) {
  const Enclosure e = enclosure(a, b);
  return e.wi > 0.0 && e.hi > 0.0;
}

}  // namespace

std::pair<BBox, BBox> random_case_pair(std::mt19937_64& rng, PairFilter filter,
                                       std::int64_t index) {
  const bool want_overlap =
      filter == PairFilter::kOverlapOnly ||
      (filter == PairFilter::kMixed && index % 2 == 0);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const BBox a(uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85),
                 uniform(rng, 0.05, 0.45), uniform(rng, 0.05, 0.45));
    const BBox b(uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85),
                 uniform(rng, 0.05, 0.45), uniform(rng, 0.05, 0.45));
    if (!away_from_ties(a, b)) continue;
    if (overlapping(a, b) != want_overlap) continue;
    return {a, b};
  }
  throw std::runtime_error("random_case_pair: rejection sampling stalled");
}

GradCheckReport grad_check(const LossSpec& spec,
                           const GradCheckConfig& config) {
  if (config.cases < 1) {
    throw std::invalid_argument("grad_check: cases must be >= 1");
  }
  if (!(std::isfinite(config.step) && config.step > 0.0)) {
    throw std::invalid_argument("grad_check: step must be > 0");
  }
  spec.validate();

  std::mt19937_64 rng(config.seed);
  Tape tape;
  GradCheckReport report;
  report.loss = spec.name();
  report.cases = config.cases;
  report.all_gradients_zero = true;

  const double h = config.step;
  for (int i = 0; i < config.cases; ++i) {
    const auto [anchor, target] = random_case_pair(rng, config.pairs, i);

    tape.clear();
    const BoxNodes a = box_leaves(tape, anchor);
    const BoxNodes t = box_leaves(tape, target);
    const ComposedNodes nodes = compose(tape, spec, a, t, config.ema_mean);
    tape.backward(nodes.loss);

    const std::array<Value, 4> params = {a.x, a.y, a.w, a.h};
    for (const Value p : params) {
      const double analytic = p.adjoint();
      if (analytic != 0.0) report.all_gradients_zero = false;

      const double base = p.value();
      const std::pair<Value, double> up{p, base + h};
      const std::pair<Value, double> dn{p, base - h};
      const double f_up = tape.replay(nodes.loss, {&up, 1});
      const double f_dn = tape.replay(nodes.loss, {&dn, 1});
      const double fd = (f_up - f_dn) / (2.0 * h);

      report.max_scaled_err =
          std::max(report.max_scaled_err, scaled_error(analytic, fd));
    }
  }
  report.passed = report.max_scaled_err <= config.tolerance;
  return report;
}

}  // namespace boxloss
