#include "boxloss/focusing.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace boxloss {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

EmaTracker::EmaTracker(double momentum, double initial_mean)
    : mean_(initial_mean), momentum_(momentum) {
  require(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0,
          "EmaTracker: momentum must be in [0, 1)");
  require(std::isfinite(initial_mean) && initial_mean > 0.0,
          "EmaTracker: initial mean must be > 0");
}

void EmaTracker::update(double batch_mean_loss) {
  require(std::isfinite(batch_mean_loss) && batch_mean_loss >= 0.0 &&
              batch_mean_loss <= 1.0,
          "EmaTracker: batch mean loss must be in [0, 1]");
  mean_ = (1.0 - momentum_) * mean_ + momentum_ * batch_mean_loss;
}

double monotonic_coeff(double loss_star, double mean, double gamma) {
  require(std::isfinite(loss_star) && loss_star >= 0.0,
          "monotonic_coeff: loss must be >= 0");
  require(std::isfinite(mean) && mean > 0.0,
          "monotonic_coeff: mean must be > 0");
  require(std::isfinite(gamma) && gamma > 0.0,
          "monotonic_coeff: gamma must be > 0");
  return std::pow(loss_star / mean, gamma);
}

double outlier_degree(double loss_star, double mean) {
  require(std::isfinite(loss_star) && loss_star >= 0.0,
          "outlier_degree: loss must be >= 0");
  require(std::isfinite(mean) && mean > 0.0,
          "outlier_degree: mean must be > 0");
  return loss_star / mean;
}

double gain(double beta, double alpha, double delta) {
  require(std::isfinite(beta) && beta >= 0.0, "gain: beta must be >= 0");
  require(std::isfinite(alpha) && alpha > 1.0, "gain: alpha must be > 1");
  require(std::isfinite(delta) && delta > 0.0, "gain: delta must be > 0");
  return beta / (delta * std::pow(alpha, beta - delta));
}

double momentum_from_schedule(std::int64_t t, std::int64_t n) {
  require(t >= 1 && n >= 1, "momentum_from_schedule: t and n must be >= 1");
  // 1 - 0.05^(1/(t n)), evaluated as -expm1(ln(0.05)/(t n)) for accuracy at
  // large t n.
  return -std::expm1(std::log(0.05) / (static_cast<double>(t) *
                                       static_cast<double>(n)));
}

std::vector<GainSample> gain_curve(double alpha, double delta, double beta_max,
                                   int steps) {
  require(std::isfinite(alpha) && alpha > 1.0, "gain_curve: alpha must be > 1");
  require(std::isfinite(delta) && delta > 0.0, "gain_curve: delta must be > 0");
  require(std::isfinite(beta_max) && beta_max > 0.0,
          "gain_curve: beta_max must be > 0");
  require(steps >= 2, "gain_curve: steps must be >= 2");

  std::vector<GainSample> out;
  out.reserve(static_cast<std::size_t>(steps));
  const double dbeta = beta_max / static_cast<double>(steps - 1);
  for (int i = 0; i < steps; ++i) {
    const double beta = static_cast<double>(i) * dbeta;
    out.push_back(GainSample{beta, gain(beta, alpha, delta)});
  }
  return out;
}

}  // namespace boxloss
