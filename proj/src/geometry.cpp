#include "boxloss/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxloss {

BBox::BBox(double x_, double y_, double w_, double h_)
    : x(x_), y(y_), w(w_), h(h_) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
        std::isfinite(h))) {
    throw std::invalid_argument("BBox: parameters must be finite");
  }
  if (!(w > 0.0 && h > 0.0)) {
    throw std::invalid_argument("BBox: width and height must be > 0 (got w=" +
                                std::to_string(w) + ", h=" +
                                std::to_string(h) + ")");
  }
}

BoxNodes box_leaves(Tape& tape, const BBox& b) {
  return BoxNodes{tape.leaf(b.x), tape.leaf(b.y), tape.leaf(b.w),
                  tape.leaf(b.h)};
}

EnclosureNodes enclosure(Tape& tape, const BoxNodes& a, const BoxNodes& b) {
  const Value a_half_w = a.w * 0.5;
  const Value a_half_h = a.h * 0.5;
  const Value b_half_w = b.w * 0.5;
  const Value b_half_h = b.h * 0.5;

  const Value a_l = a.x - a_half_w;
  const Value a_r = a.x + a_half_w;
  const Value a_b = a.y - a_half_h;
  const Value a_t = a.y + a_half_h;
  const Value b_l = b.x - b_half_w;
  const Value b_r = b.x + b_half_w;
  const Value b_b = b.y - b_half_h;
  const Value b_t = b.y + b_half_h;

  const Value zero = tape.constant(0.0);
  // max(0, .) first so that exact edge contact ties break toward the
  // constant and the overlap carries no gradient.
  const Value wi = max(zero, min(a_r, b_r) - max(a_l, b_l));
  const Value hi = max(zero, min(a_t, b_t) - max(a_b, b_b));

  const Value wg = max(a_r, b_r) - min(a_l, b_l);
  const Value hg = max(a_t, b_t) - min(a_b, b_b);

  const Value su = a.w * a.h + b.w * b.h - wi * hi;
  return EnclosureNodes{wi, hi, su, wg, hg};
}

Value iou_loss(Tape& /*tape*/, const BoxNodes& /*a*/, const BoxNodes& /*b*/,
               const EnclosureNodes& enc) {
  return 1.0 - (enc.wi * enc.hi) / enc.su;
}

Value iou_loss(Tape& tape, const BoxNodes& a, const BoxNodes& b) {
  return iou_loss(tape, a, b, enclosure(tape, a, b));
}

Enclosure enclosure(const BBox& a, const BBox& b) {
  const double a_l = a.x - a.w * 0.5, a_r = a.x + a.w * 0.5;
  const double a_b = a.y - a.h * 0.5, a_t = a.y + a.h * 0.5;
  const double b_l = b.x - b.w * 0.5, b_r = b.x + b.w * 0.5;
  const double b_b = b.y - b.h * 0.5, b_t = b.y + b.h * 0.5;

  Enclosure e;
  e.wi = std::max(0.0, std::min(a_r, b_r) - std::max(a_l, b_l));
  e.hi = std::max(0.0, std::min(a_t, b_t) - std::max(a_b, b_b));
  e.wg = std::max(a_r, b_r) - std::min(a_l, b_l);
  e.hg = std::max(a_t, b_t) - std::min(a_b, b_b);
  e.su = a.w * a.h + b.w * b.h - e.wi * e.hi;
  return e;
}

double iou_loss(const BBox& a, const BBox& b) {
  const Enclosure e = enclosure(a, b);
  return 1.0 - (e.wi * e.hi) / e.su;
}

}  // namespace boxloss
