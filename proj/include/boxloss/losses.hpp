#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "boxloss/focusing.hpp"
#include "boxloss/geometry.hpp"
#include "boxloss/tape.hpp"

namespace boxloss {

enum class BaseLoss {
  kIou,
  kGiou,
  kDiou,
  kEiou,
  kCiou,
  kSiou,
  kWiouV1,
};

/// No focusing: the base loss is used as-is.
struct FocusNone {};

/// Mean-normalized monotonic focusing: (L*/mean)^gamma, gamma > 0.
struct FocusMonotonic {
  double gamma = 0.5;
};

/// Dynamic non-monotonic focusing: r = beta/(delta*alpha^(beta-delta)) with
/// beta = L*/mean; alpha > 1, delta > 0.
struct FocusNonMonotonic {
  double alpha = 1.9;
  double delta = 3.0;
};

using FocusSpec = std::variant<FocusNone, FocusMonotonic, FocusNonMonotonic>;

struct LossSpec {
  BaseLoss base = BaseLoss::kIou;
  FocusSpec fm = FocusNone{};
  double epsilon = 1e-7;  // guards the angle cost at zero center distance

  void validate() const;
  bool has_fm() const { return !std::holds_alternative<FocusNone>(fm); }
  std::string name() const;
};

/// Canonical short names: iou, giou, diou, eiou, ciou, siou, wiou1.
std::string_view base_loss_name(BaseLoss base);
std::optional<BaseLoss> parse_base_loss(std::string_view name);

// --- Penalty terms -------------------------------------------------------
//
// Each builder records onto the anchor/target leaves' tape. The overloads
// taking an EnclosureNodes reuse shared geometry; the two-box overloads
// build it internally.

/// Squared center distance over squared enclosing diagonal, in [0, 1).
Value r_diou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc);
Value r_diou(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// r_diou plus per-axis center offsets normalized by the enclosing sides.
Value r_eiou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc);
Value r_eiou(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// Aspect-ratio consistency v = (4/pi^2)(atan(w/h) - atan(w_gt/h_gt))^2.
Value aspect_v(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// r_diou + alpha*v. alpha = v/(L_IoU + v) is recomputed from the current
/// values and applied as a constant, so it receives no gradient; it is 0
/// when L_IoU + v == 0 (perfect match).
Value r_ciou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc, Value iou);
Value r_ciou(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// Angle cost Lambda = sin(2 asin(min(|dx|,|dy|)/(dist + eps))); 0 when the
/// centers align with an axis, 1 at 45 degrees. Exactly-coincident centers
/// give a constant 0 (the cost is 0 there with zero subgradient).
Value siou_angle(Tape& tape, const BoxNodes& a, const BoxNodes& t,
                 double epsilon);

/// Distance cost: half-sum over axes of 1 - exp(-(2 - Lambda) * rho).
Value siou_distance(Tape& tape, const BoxNodes& a, const BoxNodes& t,
                    const EnclosureNodes& enc, Value angle);

/// Shape cost: half-sum over axes of (1 - exp(-|dw|/max))^4.
Value siou_shape(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// Distance cost + shape cost.
Value r_siou(Tape& tape, const BoxNodes& a, const BoxNodes& t,
             const EnclosureNodes& enc, double epsilon);
Value r_siou(Tape& tape, const BoxNodes& a, const BoxNodes& t, double epsilon);

/// (enclosing area - union) / enclosing area, in [0, 1).
Value giou_penalty(Tape& tape, const EnclosureNodes& enc);
Value giou_penalty(Tape& tape, const BoxNodes& a, const BoxNodes& t);

/// R_WIoU * L_IoU with R_WIoU = exp(dist^2 / detach(wg^2 + hg^2)). The
/// detached denominator keeps the enclosing box out of the gradient.
Value wiou_v1(Tape& tape, const BoxNodes& a, const BoxNodes& t,
              const EnclosureNodes& enc, Value iou);
Value wiou_v1(Tape& tape, const BoxNodes& a, const BoxNodes& t);

// --- Composition ----------------------------------------------------------

struct ComposedNodes {
  Value loss;  // the training loss, focusing coefficient included
  Value iou;   // the plain IoU loss node
};

/// Assembles the full training loss for a spec: additive penalties follow
/// L = L_IoU + R; wiou1 is multiplicative. A focusing coefficient, when
/// configured, is computed from the detached IoU loss and ema_mean and
/// multiplies the loss as a constant.
ComposedNodes compose(Tape& tape, const LossSpec& spec, const BoxNodes& a,
                      const BoxNodes& t, double ema_mean = 1.0);

struct CaseEval {
  double loss;
  double iou_loss;
  std::array<double, 4> grad;  // d loss / d {x, y, w, h} of the anchor
};

/// One full forward+backward evaluation on a scratch tape (cleared first).
CaseEval evaluate(const LossSpec& spec, const BBox& anchor, const BBox& target,
                  double ema_mean, Tape& scratch);
CaseEval evaluate(const LossSpec& spec, const BBox& anchor, const BBox& target,
                  const EmaTracker& tracker, Tape& scratch);

}  // namespace boxloss
