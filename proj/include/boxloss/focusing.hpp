#pragma once

#include <cstdint>
#include <vector>

namespace boxloss {

/// Exponential running average of the detached IoU loss, initialized at 1.
/// Single-writer: concurrent evaluations read a snapshot of mean() and the
/// one update per iteration happens on the coordinating thread.
class EmaTracker {
 public:
  /// momentum in [0, 1); 0 keeps the mean frozen at its initial value.
  explicit EmaTracker(double momentum, double initial_mean = 1.0);

  double mean() const { return mean_; }
  double momentum() const { return momentum_; }

  /// mean <- (1 - m) * mean + m * batch_mean_loss.
  /// batch_mean_loss is a mean of detached IoU losses, so it must be in
  /// [0, 1].
  void update(double batch_mean_loss);

 private:
  double mean_;
  double momentum_;
};

/// (loss_star / mean)^gamma — the monotonic, mean-normalized focusing
/// coefficient. loss_star is a detached loss value; the result is applied
/// as a constant weight.
double monotonic_coeff(double loss_star, double mean, double gamma);

/// beta = loss_star / mean, in [0, +inf).
double outlier_degree(double loss_star, double mean);

/// Non-monotonic gradient gain r = beta / (delta * alpha^(beta - delta)).
/// r(delta) == 1; the maximum sits at beta = 1/ln(alpha).
double gain(double beta, double alpha, double delta);

/// m = 1 - 0.05^(1/(t*n)) for a training run of t epochs with n batches per
/// epoch; chosen so the running mean is 95% converged after t epochs.
double momentum_from_schedule(std::int64_t t, std::int64_t n);

struct GainSample {
  double beta;
  double r;
};

/// r(beta) sampled uniformly on [0, beta_max] (steps points, first at 0).
std::vector<GainSample> gain_curve(double alpha, double delta, double beta_max,
                                   int steps);

}  // namespace boxloss
