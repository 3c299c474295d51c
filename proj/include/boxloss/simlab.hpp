#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "boxloss/focusing.hpp"
#include "boxloss/geometry.hpp"
#include "boxloss/losses.hpp"

namespace boxloss {

/// Configuration of the gradient-descent regression benchmark: anchor
/// points sampled uniformly in a disc of the given radius around
/// (0.5, 0.5), a grid of anchor boxes per point, and fixed targets centered
/// at (0.5, 0.5).
struct SimConfig {
  double radius = 0.5;
  std::int64_t points_density = 20000;  // points = density * radius^2
  std::vector<double> scales = {1.0 / 32, 1.0 / 24, 3.0 / 64, 1.0 / 16,
                                1.0 / 12, 3.0 / 32, 1.0 / 8};
  std::vector<double> aspect_ratios = {0.25, 1.0 / 3, 0.5, 1.0, 2.0, 3.0, 4.0};
  double target_area = 1.0 / 32;
  double lr = 0.01;
  int iterations = 200;
  std::uint64_t seed = 0;
  double subsample = 1.0;          // fraction of cases kept, in (0, 1]
  double tracker_momentum = 0.01;  // 0 freezes the mean at 1
  int threads = 0;                 // 0 = hardware concurrency

  void validate() const;
  std::int64_t point_count() const;
  /// points * |scales| * |aspect_ratios|^2, before subsampling. Needs no
  /// case materialization.
  std::int64_t case_count() const;
};

struct RegressionCase {
  BBox anchor;  // descent state
  BBox target;  // fixed, centered at (0.5, 0.5)
  std::int64_t id;
};

struct CurveRecord {
  int iteration;
  double mean_iou_loss;       // mean detached IoU loss over all cases
  double mean_training_loss;  // mean of the optimized loss
  std::string loss_name;
};

/// Deterministic under seed. Subsampling keeps exactly
/// round(subsample * case_count) cases, chosen uniformly; ids always refer
/// to the position in the full (point, scale, aspect, target) grid.
std::vector<RegressionCase> generate_cases(const SimConfig& config);

/// One gradient-descent step: p <- p - lr * d loss/d p on (x, y, w, h),
/// then w and h are clamped to >= 1e-6.
void descend_case(RegressionCase& cs, const LossSpec& spec,
                  const EmaTracker& tracker, double lr, Tape& scratch);

/// Full benchmark run: per iteration, every case is evaluated against the
/// same tracker snapshot, means are recorded, the tracker is updated once
/// with the batch mean IoU loss, and all cases are stepped. Identical
/// (config, spec) inputs give bit-identical curves for any thread count.
std::vector<CurveRecord> run(const SimConfig& config, const LossSpec& spec);

struct RankingRow {
  std::string loss;
  double final_mean_iou_loss;
  int iters_to_threshold;  // first iteration at or below threshold; -1 if never
};

/// Final losses and iterations-to-threshold, sorted best-first. All curves
/// must come from runs of the same length.
std::vector<RankingRow> final_report(
    const std::vector<std::vector<CurveRecord>>& curves,
    double threshold = 0.2);

// --- CSV artifacts ---------------------------------------------------------

/// Header: loss,iteration,mean_iou_loss,mean_training_loss
void write_curve_csv(std::ostream& os, const std::vector<CurveRecord>& curve);
/// Header: id,ax,ay,aw,ah,tx,ty,tw,th
void write_cases_csv(std::ostream& os, const std::vector<RegressionCase>& cases);
/// Header: loss,final_mean_iou_loss,iters_to_threshold
void write_ranking_csv(std::ostream& os, const std::vector<RankingRow>& rows);

/// Shortest-of-17-significant-digits decimal rendering used by every CSV;
/// parses back to the identical double.
std::string format_double(double v);

}  // namespace boxloss
