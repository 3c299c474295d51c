#include "boxloss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace boxloss {

void LossSpec::validate() const {
  if (!(std::isfinite(epsilon) && epsilon > 0.0)) {
    throw std::invalid_argument("LossSpec: epsilon must be > 0");
  }
  if (const auto* m = std::get_if<FocusMonotonic>(&fm)) {
    if (!(std::isfinite(m->gamma) && m->gamma > 0.0)) {
      throw std::invalid_argument("LossSpec: gamma must be > 0");
    }
  } else if (const auto* nm = std::get_if<FocusNonMonotonic>(&fm)) {
    if (!(std::isfinite(nm->alpha) && nm->alpha > 1.0)) {
      throw std::invalid_argument("LossSpec: alpha must be > 1");
    }
    if (!(std::isfinite(nm->delta) && nm->delta > 0.0)) {
      throw std::invalid_argument("LossSpec: delta must be > 0");
    }
  }
}

std::string_view base_loss_name(BaseLoss base) {
  switch (base) {
    case BaseLoss::kIou: return "iou";
    case BaseLoss::kGiou: return "giou";
    case BaseLoss::kDiou: return "diou";
    case BaseLoss::kEiou: return "eiou";
    case BaseLoss::kCiou: return "ciou";
    case BaseLoss::kSiou: return "siou";
    case BaseLoss::kWiouV1: return "wiou1";
  }
  return "?";
}

std::optional<BaseLoss> parse_base_loss(std::string_view name) {
  if (name == "iou") return BaseLoss::kIou;
  if (name == "giou") return BaseLoss::kGiou;
  if (name == "diou") return BaseLoss::kDiou;
  if (name == "eiou") return BaseLoss::kEiou;
  if (name == "ciou") return BaseLoss::kCiou;
  if (name == "siou") return BaseLoss::kSiou;
  if (name == "wiou1") return BaseLoss::kWiouV1;
  return std::nullopt;
}

std::string LossSpec::name() const {
  std::string n{base_loss_name(base)};
  if (std::holds_alternative<FocusMonotonic>(fm)) n += "-v2";
  if (std::holds_alternative<FocusNonMonotonic>(fm)) n += "-v3";
  return n;
}

namespace {

Value center_dist_sq(const BoxNodes& a, const BoxNodes& t) {
  return square(a.x - t.x) + square(a.y - t.y);
}

}  // namespace

Value r_diou(Tape& /*tape*/, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc) {
  return center_dist_sq(a, t) / (square(enc.wg) + square(enc.hg));
}

Value r_diou(Tape& tape, const BoxNodes& a, const BoxNodes& t) {
  return r_diou(tape, a, t, enclosure(tape, a, t));
}

Value r_eiou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc) {
  return r_diou(tape, a, t, enc) + square(a.x - t.x) / square(enc.wg) +
         square(a.y - t.y) / square(enc.hg);
}

Value r_eiou(Tape& tape, const BoxNodes& a, const BoxNodes& t) {
  return r_eiou(tape, a, t, enclosure(tape, a, t));
}

Value aspect_v(Tape& /*tape*/, const BoxNodes& a, const BoxNodes& t) {
  constexpr double kScale = 4.0 / (std::numbers::pi * std::numbers::pi);
  return square(atan(a.w / a.h) - atan(t.w / t.h)) * kScale;
}

Value r_ciou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc, Value iou) {
  const Value v = aspect_v(tape, a, t);
  const double denom = iou.value() + v.value();
  const double alpha = denom == 0.0 ? 0.0 : v.value() / denom;
  return r_diou(tape, a, t, enc) + v * alpha;
}

Value r_ciou(Tape& tape, const BoxNodes& a, const BoxNodes& t) {
  const EnclosureNodes enc = enclosure(tape, a, t);
  return r_ciou(tape, a, t, enc, iou_loss(tape, a, t, enc));
}

Value siou_angle(Tape& tape, const BoxNodes& a, const BoxNodes& t,
                 double epsilon) {
  if (!(std::isfinite(epsilon) && epsilon > 0.0)) {
    throw std::invalid_argument("siou_angle: epsilon must be > 0");
  }
  const Value dx = a.x - t.x;
  const Value dy = a.y - t.y;
  const Value dist_sq = square(dx) + square(dy);
  if (dist_sq.value() == 0.0) {
    // Coincident centers: the cost is 0 and flat along both axes.
    return tape.constant(0.0);
  }
  const Value ratio = min(abs(dx), abs(dy)) / (sqrt(dist_sq) + epsilon);
  return sin(asin(ratio) * 2.0);
}

Value siou_distance(Tape& /*tape*/, const BoxNodes& a, const BoxNodes& t,
                    const EnclosureNodes& enc, Value angle) {
  const Value gamma = 2.0 - angle;
  const Value rho_x = square((a.x - t.x) / enc.wg);
  const Value rho_y = square((a.y - t.y) / enc.hg);
  const Value term_x = 1.0 - exp(-(gamma * rho_x));
  const Value term_y = 1.0 - exp(-(gamma * rho_y));
  return (term_x + term_y) * 0.5;
}

Value siou_shape(Tape& /*tape*/, const BoxNodes& a, const BoxNodes& t) {
  const Value omega_w = abs(a.w - t.w) / max(a.w, t.w);
  const Value omega_h = abs(a.h - t.h) / max(a.h, t.h);
  const Value term_w = pow_const(1.0 - exp(-omega_w), 4.0);
  const Value term_h = pow_const(1.0 - exp(-omega_h), 4.0);
  return (term_w + term_h) * 0.5;
}

Value r_siou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc, double epsilon) {
  const Value angle = siou_angle(tape, a, t, epsilon);
  return siou_distance(tape, a, t, enc, angle) + siou_shape(tape, a, t);
}

Value r_siou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             double epsilon) {
  return r_siou(tape, a, t, enclosure(tape, a, t), epsilon);
}

Value giou_penalty(Tape& /*tape*/, const EnclosureNodes& enc) {
  const Value area = enc.wg * enc.hg;
  return (area - enc.su) / area;
}

Value giou_penalty(Tape& tape, const BoxNodes& a, const BoxNodes& t) {
  return giou_penalty(tape, enclosure(tape, a, t));
}

Value wiou_v1(Tape& tape, const BoxNodes& a, const BoxNodes& t,
              const EnclosureNodes& enc, Value iou) {
  const Value denom = tape.detach(square(enc.wg) + square(enc.hg));
  const Value attention = exp(center_dist_sq(a, t) / denom);
  return attention * iou;
}

Value wiou_v1(Tape& tape, const BoxNodes& a, const BoxNodes& t) {
  const EnclosureNodes enc = enclosure(tape, a, t);
  return wiou_v1(tape, a, t, enc, iou_loss(tape, a, t, enc));
}

ComposedNodes compose(Tape& tape, const LossSpec& spec, const BoxNodes& a,
                      const BoxNodes& t, double ema_mean) {
  spec.validate();
  const EnclosureNodes enc = enclosure(tape, a, t);
  const Value iou = iou_loss(tape, a, t, enc);

  Value loss = iou;
  switch (spec.base) {
    case BaseLoss::kIou:
      break;
    case BaseLoss::kGiou:
      loss = iou + giou_penalty(tape, enc);
      break;
    case BaseLoss::kDiou:
      loss = iou + r_diou(tape, a, t, enc);
      break;
    case BaseLoss::kEiou:
      loss = iou + r_eiou(tape, a, t, enc);
      break;
    case BaseLoss::kCiou:
      loss = iou + r_ciou(tape, a, t, enc, iou);
      break;
    case BaseLoss::kSiou:
      loss = iou + r_siou(tape, a, t, enc, spec.epsilon);
      break;
    case BaseLoss::kWiouV1:
      loss = wiou_v1(tape, a, t, enc, iou);
      break;
  }

  // The focusing coefficient is a function of the detached IoU loss, so it
  // multiplies as a plain constant and never contributes gradient. The
  // detached value is clamped to [0, 1]: rounding can leave it a few ulp
  // outside.
  if (spec.has_fm()) {
    const double iou_star = std::clamp(iou.value(), 0.0, 1.0);
    if (const auto* m = std::get_if<FocusMonotonic>(&spec.fm)) {
      loss = loss * monotonic_coeff(iou_star, ema_mean, m->gamma);
    } else if (const auto* nm = std::get_if<FocusNonMonotonic>(&spec.fm)) {
      loss = loss * gain(outlier_degree(iou_star, ema_mean), nm->alpha,
                         nm->delta);
    }
  }
  return ComposedNodes{loss, iou};
}

CaseEval evaluate(const LossSpec& spec, const BBox& anchor, const BBox& target,
                  double ema_mean, Tape& scratch) {
  scratch.clear();
  const BoxNodes a = box_leaves(scratch, anchor);
  const BoxNodes t = box_leaves(scratch, target);
  const ComposedNodes nodes = compose(scratch, spec, a, t, ema_mean);
  scratch.backward(nodes.loss);
  return CaseEval{nodes.loss.value(),
                  nodes.iou.value(),
                  {a.x.adjoint(), a.y.adjoint(), a.w.adjoint(),
                   a.h.adjoint()}};
}

CaseEval evaluate(const LossSpec& spec, const BBox& anchor, const BBox& target,
                  const EmaTracker& tracker, Tape& scratch) {
  return evaluate(spec, anchor, target, tracker.mean(), scratch);
}

}  // namespace boxloss
