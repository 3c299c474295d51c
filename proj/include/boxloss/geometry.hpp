#pragma once

#include "boxloss/tape.hpp"

namespace boxloss {

/// Axis-aligned box given by center and size, in unit-square coordinates.
struct BBox {
  double x;
  double y;
  double w;
  double h;

  BBox(double x_, double y_, double w_, double h_);
};

/// The four box parameters recorded as tape leaves.
struct BoxNodes {
  Value x;
  Value y;
  Value w;
  Value h;
};

BoxNodes box_leaves(Tape& tape, const BBox& b);

/// Overlap, union and smallest-enclosing-box geometry of a box pair.
/// Overlap widths are clamped with max(0, .), so touching boxes count as
/// disjoint and carry no gradient through the overlap.
struct EnclosureNodes {
  Value wi;  // overlap width  >= 0
  Value hi;  // overlap height >= 0
  Value su;  // union area  = w*h + w_gt*h_gt - wi*hi
  Value wg;  // enclosing width
  Value hg;  // enclosing height
};

EnclosureNodes enclosure(Tape& tape, const BoxNodes& a, const BoxNodes& b);

/// 1 - (wi*hi)/su, in [0, 1].
Value iou_loss(Tape& tape, const BoxNodes& a, const BoxNodes& b,
               const EnclosureNodes& enc);
Value iou_loss(Tape& tape, const BoxNodes& a, const BoxNodes& b);

/// Plain-value geometry for callers that do not need gradients.
struct Enclosure {
  double wi;
  double hi;
  double su;
  double wg;
  double hg;
};

Enclosure enclosure(const BBox& a, const BBox& b);
double iou_loss(const BBox& a, const BBox& b);
inline bool overlaps(const BBox& a, const BBox& b) {
  const Enclosure e = enclosure(a, b);
  return e.wi > 0.0 && e.hi > 0.0;
}

}  // namespace boxloss
