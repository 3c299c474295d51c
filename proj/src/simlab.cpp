#include "boxloss/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace boxloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

/// 53-bit uniform double in [0, 1), independent of the standard library's
/// distribution implementation.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Results must be written to per-index slots to stay deterministic.
template <typename Fn>
void parallel_chunks(std::int64_t n, int threads, const Fn& fn) {
  if (threads <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  const int k = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(k - 1));
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&](std::int64_t begin, std::int64_t end) {
    try {
      fn(begin, end);
    } catch (...) {
      std::scoped_lock lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  const std::int64_t chunk = (n + k - 1) / k;
  for (int i = 1; i < k; ++i) {
    const std::int64_t begin = i * chunk;
    const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back(work, begin, end);
  }
  work(0, std::min<std::int64_t>(chunk, n));
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

void SimConfig::validate() const {
  require(std::isfinite(radius) && radius > 0.0 && radius <= 0.5,
          "SimConfig: radius must be in (0, 0.5]");
  require(points_density >= 1, "SimConfig: points_density must be >= 1");
  require(!scales.empty(), "SimConfig: scales must not be empty");
  require(!aspect_ratios.empty(), "SimConfig: aspect_ratios must not be empty");
  for (double s : scales) {
    require(std::isfinite(s) && s > 0.0, "SimConfig: scales must be > 0");
  }
  for (double ar : aspect_ratios) {
    require(std::isfinite(ar) && ar > 0.0,
            "SimConfig: aspect ratios must be > 0");
  }
  require(std::isfinite(target_area) && target_area > 0.0,
          "SimConfig: target_area must be > 0");
  require(std::isfinite(lr) && lr > 0.0, "SimConfig: lr must be > 0");
  require(iterations >= 1, "SimConfig: iterations must be >= 1");
  require(std::isfinite(subsample) && subsample > 0.0 && subsample <= 1.0,
          "SimConfig: subsample must be in (0, 1]");
  require(std::isfinite(tracker_momentum) && tracker_momentum >= 0.0 &&
              tracker_momentum < 1.0,
          "SimConfig: tracker momentum must be in [0, 1)");
  require(threads >= 0, "SimConfig: threads must be >= 0");
  require(point_count() >= 1,
          "SimConfig: points_density * radius^2 rounds to zero points");
}

std::int64_t SimConfig::point_count() const {
  return std::llround(static_cast<double>(points_density) * radius * radius);
}

std::int64_t SimConfig::case_count() const {
  return point_count() * static_cast<std::int64_t>(scales.size()) *
         static_cast<std::int64_t>(aspect_ratios.size()) *
         static_cast<std::int64_t>(aspect_ratios.size());
}

std::vector<RegressionCase> generate_cases(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  const std::int64_t npoints = config.point_count();
  std::vector<std::pair<double, double>> points;
  points.reserve(static_cast<std::size_t>(npoints));
  const double r = config.radius;
  while (points.size() < static_cast<std::size_t>(npoints)) {
    const double px = (2.0 * uniform01(rng) - 1.0) * r;
    const double py = (2.0 * uniform01(rng) - 1.0) * r;
    if (px * px + py * py <= r * r) {
      points.emplace_back(0.5 + px, 0.5 + py);
    }
  }

  const auto& ars = config.aspect_ratios;
  const std::int64_t n_scales = static_cast<std::int64_t>(config.scales.size());
  const std::int64_t n_ars = static_cast<std::int64_t>(ars.size());
  const std::int64_t total = npoints * n_scales * n_ars * n_ars;

  std::vector<std::int64_t> selected;
  if (config.subsample < 1.0) {
    const std::int64_t keep = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(total) * config.subsample));
    std::vector<std::int64_t> ids(static_cast<std::size_t>(total));
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    for (std::int64_t i = 0; i < keep; ++i) {
      const std::uint64_t span = static_cast<std::uint64_t>(total - i);
      const std::int64_t j = i + static_cast<std::int64_t>(rng() % span);
      std::swap(ids[static_cast<std::size_t>(i)],
                ids[static_cast<std::size_t>(j)]);
    }
    selected.assign(ids.begin(), ids.begin() + keep);
    std::sort(selected.begin(), selected.end());
  } else {
    selected.resize(static_cast<std::size_t>(total));
    std::iota(selected.begin(), selected.end(), std::int64_t{0});
  }

  std::vector<RegressionCase> cases;
  cases.reserve(selected.size());
  for (const std::int64_t id : selected) {
    std::int64_t rest = id;
    const std::int64_t tar_i = rest % n_ars;
    rest /= n_ars;
    const std::int64_t ar_i = rest % n_ars;
    rest /= n_ars;
    const std::int64_t scale_i = rest % n_scales;
    const std::int64_t point_i = rest / n_scales;

    const auto [px, py] = points[static_cast<std::size_t>(point_i)];
    const double area = config.scales[static_cast<std::size_t>(scale_i)];
    const double ar = ars[static_cast<std::size_t>(ar_i)];
    const double tar = ars[static_cast<std::size_t>(tar_i)];
    cases.push_back(RegressionCase{
        BBox(px, py, std::sqrt(area * ar), std::sqrt(area / ar)),
        BBox(0.5, 0.5, std::sqrt(config.target_area * tar),
             std::sqrt(config.target_area / tar)),
        id});
  }
  return cases;
}

namespace {

constexpr double kMinSize = 1e-6;

void apply_step(RegressionCase& cs, const CaseEval& eval, double lr,
                const LossSpec& spec) {
  for (double g : eval.grad) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("non-finite gradient for case " +
                               std::to_string(cs.id) + " under loss " +
                               spec.name());
    }
  }
  cs.anchor.x -= lr * eval.grad[0];
  cs.anchor.y -= lr * eval.grad[1];
  cs.anchor.w = std::max(kMinSize, cs.anchor.w - lr * eval.grad[2]);
  cs.anchor.h = std::max(kMinSize, cs.anchor.h - lr * eval.grad[3]);
}

}  // namespace

namespace {

CaseEval evaluate_case_checked(const RegressionCase& cs, const LossSpec& spec,
                               double mean, Tape& scratch) {
  try {
    return evaluate(spec, cs.anchor, cs.target, mean, scratch);
  } catch (const std::exception& e) {
    throw std::runtime_error("case " + std::to_string(cs.id) + " under loss " +
                             spec.name() + ": " + e.what());
  }
}

}  // namespace

void descend_case(RegressionCase& cs, const LossSpec& spec,
                  const EmaTracker& tracker, double lr, Tape& scratch) {
  const CaseEval eval =
      evaluate_case_checked(cs, spec, tracker.mean(), scratch);
  apply_step(cs, eval, lr, spec);
}

std::vector<CurveRecord> run(const SimConfig& config, const LossSpec& spec) {
  config.validate();
  spec.validate();

  std::vector<RegressionCase> cases = generate_cases(config);
  const std::int64_t n = static_cast<std::int64_t>(cases.size());
  const int threads = resolve_threads(config.threads);
  const std::string name = spec.name();

  EmaTracker tracker(config.tracker_momentum);
  std::vector<CaseEval> evals(cases.size());
  // Cache-line padding: the tapes' bookkeeping fields must not share lines
  // across workers.
  struct alignas(128) PaddedTape {
    Tape tape;
  };
  std::vector<PaddedTape> tapes(static_cast<std::size_t>(threads));

  std::vector<CurveRecord> curve;
  curve.reserve(static_cast<std::size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    const double mean_snapshot = tracker.mean();
    std::atomic<int> next_worker{0};
    parallel_chunks(n, threads, [&](std::int64_t begin, std::int64_t end) {
      Tape& tape = tapes[static_cast<std::size_t>(
                             next_worker.fetch_add(1,
                                                   std::memory_order_relaxed))]
                       .tape;
      for (std::int64_t i = begin; i < end; ++i) {
        const auto& cs = cases[static_cast<std::size_t>(i)];
        evals[static_cast<std::size_t>(i)] =
            evaluate_case_checked(cs, spec, mean_snapshot, tape);
      }
    });

    // Fixed-order reduction: the means do not depend on the thread count.
    double sum_iou = 0.0;
    double sum_loss = 0.0;
    for (const CaseEval& e : evals) {
      sum_iou += e.iou_loss;
      sum_loss += e.loss;
    }
    // Rounding can leave per-case IoU losses a few ulp outside [0, 1].
    const double mean_iou =
        std::clamp(sum_iou / static_cast<double>(n), 0.0, 1.0);
    curve.push_back(
        CurveRecord{it, mean_iou, sum_loss / static_cast<double>(n), name});

    tracker.update(mean_iou);

    for (std::int64_t i = 0; i < n; ++i) {
      apply_step(cases[static_cast<std::size_t>(i)],
                 evals[static_cast<std::size_t>(i)], config.lr, spec);
    }
  }
  return curve;
}

std::vector<RankingRow> final_report(
    const std::vector<std::vector<CurveRecord>>& curves, double threshold) {
  require(!curves.empty(), "final_report: no curves");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    require(!c.empty(), "final_report: empty curve");
    if (c.size() != len) {
      throw std::invalid_argument(
          "final_report: curves come from different configurations "
          "(lengths differ)");
    }
  }

  std::vector<RankingRow> rows;
  rows.reserve(curves.size());
  for (const auto& c : curves) {
    RankingRow row;
    row.loss = c.front().loss_name;
    row.final_mean_iou_loss = c.back().mean_iou_loss;
    row.iters_to_threshold = -1;
    for (const CurveRecord& rec : c) {
      if (rec.mean_iou_loss <= threshold) {
        row.iters_to_threshold = rec.iteration;
        break;
      }
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const RankingRow& a,
                                         const RankingRow& b) {
    return a.final_mean_iou_loss < b.final_mean_iou_loss;
  });
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_curve_csv(std::ostream& os, const std::vector<CurveRecord>& curve) {
  os << "loss,iteration,mean_iou_loss,mean_training_loss\n";
  for (const CurveRecord& r : curve) {
    os << r.loss_name << ',' << r.iteration << ','
       << format_double(r.mean_iou_loss) << ','
       << format_double(r.mean_training_loss) << '\n';
  }
}

void write_cases_csv(std::ostream& os,
                     const std::vector<RegressionCase>& cases) {
  os << "id,ax,ay,aw,ah,tx,ty,tw,th\n";
  for (const RegressionCase& c : cases) {
    os << c.id << ',' << format_double(c.anchor.x) << ','
       << format_double(c.anchor.y) << ',' << format_double(c.anchor.w) << ','
       << format_double(c.anchor.h) << ',' << format_double(c.target.x) << ','
       << format_double(c.target.y) << ',' << format_double(c.target.w) << ','
       << format_double(c.target.h) << '\n';
  }
}

void write_ranking_csv(std::ostream& os, const std::vector<RankingRow>& rows) {
  os << "loss,final_mean_iou_loss,iters_to_threshold\n";
  for (const RankingRow& r : rows) {
    os << r.loss << ',' << format_double(r.final_mean_iou_loss) << ','
       << r.iters_to_threshold << '\n';
  }
}

}  // namespace boxloss
