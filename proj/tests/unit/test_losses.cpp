#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "boxloss/gradcheck.hpp"
#include "boxloss/losses.hpp"
#include "oracle/reference.hpp"

using namespace boxloss;

namespace {

// Anchor crossed with a same-center target of swapped aspect.
const BBox kCrossA(0.5, 0.5, 0.4, 0.2);
const BBox kCrossT(0.5, 0.5, 0.2, 0.4);
// Touching, diagonally offset pair; IoU loss is exactly 1.
const BBox kTouchA(0.3, 0.3, 0.2, 0.2);
const BBox kTouchT(0.5, 0.5, 0.2, 0.2);

double penalty_value(Value (*builder)(Tape&, const BoxNodes&, const BoxNodes&),
                     const BBox& anchor, const BBox& target) {
  Tape tape;
  const BoxNodes a = box_leaves(tape, anchor);
  const BoxNodes t = box_leaves(tape, target);
  return builder(tape, a, t).value();
}

const std::array<BaseLoss, 7> kAllBases = {
    BaseLoss::kIou,  BaseLoss::kGiou, BaseLoss::kDiou, BaseLoss::kEiou,
    BaseLoss::kCiou, BaseLoss::kSiou, BaseLoss::kWiouV1};

const std::array<FocusSpec, 3> kAllFms = {
    FocusSpec{FocusNone{}}, FocusSpec{FocusMonotonic{0.5}},
    FocusSpec{FocusNonMonotonic{1.9, 3.0}}};

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("r_diou") {
  CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
          return r_diou(t, a, b);
        },
        kCrossA, kCrossT) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
          return r_diou(t, a, b);
        },
        kTouchA, kTouchT) == doctest::Approx(0.25).epsilon(1e-12));

  // Strictly below 1: the center offset stays inside the enclosing diagonal.
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto [a, b] = random_case_pair(rng, PairFilter::kMixed, i);
    const double v = penalty_value(
        [](Tape& t, const BoxNodes& x, const BoxNodes& y) {
          return r_diou(t, x, y);
        },
        a, b);
    CHECK(v >= -1e-12);
    CHECK(v < 1.0);
  }
}

TEST_CASE("r_eiou") {
  CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
          return r_eiou(t, a, b);
        },
        kTouchA, kTouchT) == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(22);
  Tape tape;
  for (int i = 0; i < 200; ++i) {
    const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
    tape.clear();
    const BoxNodes a = box_leaves(tape, ab);
    const BoxNodes t = box_leaves(tape, tb);
    const EnclosureNodes enc = enclosure(tape, a, t);
    CHECK(r_eiou(tape, a, t, enc).value() >=
          r_diou(tape, a, t, enc).value() - 1e-15);
  }
}

TEST_CASE("aspect_v") {
  // w/h = 2 against w/h = 0.5.
  Tape tape;
  const BoxNodes a = box_leaves(tape, BBox(0.5, 0.5, 0.4, 0.2));
  const BoxNodes t = box_leaves(tape, BBox(0.5, 0.5, 0.2, 0.4));
  CHECK(aspect_v(tape, a, t).value() ==
        doctest::Approx(0.1678258459771623).epsilon(1e-12));

  const BoxNodes same = box_leaves(tape, BBox(0.1, 0.1, 0.3, 0.15));
  const BoxNodes same2 = box_leaves(tape, BBox(0.7, 0.2, 0.1, 0.05));
  CHECK(aspect_v(tape, same, same2).value() == 0.0);

  // Extreme aspect ratios approach the arctan range bound.
  const BoxNodes wide = box_leaves(tape, BBox(0.5, 0.5, 1e8, 1.0));
  const BoxNodes tall = box_leaves(tape, BBox(0.5, 0.5, 1.0, 1e8));
  CHECK(aspect_v(tape, wide, tall).value() == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("r_ciou uses a detached trade-off weight") {
  Tape tape;
  const BoxNodes a = box_leaves(tape, kCrossA);
  const BoxNodes t = box_leaves(tape, kCrossT);
  // alpha = v/(L+v) with v ~ 0.16783, L = 2/3.
  CHECK(r_ciou(tape, a, t).value() ==
        doctest::Approx(0.033751668410680594).epsilon(1e-12));

  const BoxNodes id1 = box_leaves(tape, kCrossA);
  const BoxNodes id2 = box_leaves(tape, kCrossA);
  CHECK(r_ciou(tape, id1, id2).value() == 0.0);  // alpha defined as 0
}

TEST_CASE("aspect term gradient relation dv/dh = -(w/h) dv/dw") {
  std::mt19937_64 rng(23);
  Tape tape;
  for (int i = 0; i < 100; ++i) {
    const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
    tape.clear();
    const BoxNodes a = box_leaves(tape, ab);
    const BoxNodes t = box_leaves(tape, tb);
    const Value v = aspect_v(tape, a, t);
    tape.backward(v);
    const double lhs = a.h.adjoint();
    const double rhs = -(ab.w / ab.h) * a.w.adjoint();
    CHECK(std::fabs(lhs - rhs) <= 1e-8);
  }
}

TEST_CASE("siou_angle") {
  Tape tape;
  SUBCASE("axis-aligned centers give zero cost") {
    const BoxNodes a = box_leaves(tape, BBox(0.2, 0.5, 0.1, 0.1));
    const BoxNodes t = box_leaves(tape, BBox(0.7, 0.5, 0.1, 0.1));
    CHECK(siou_angle(tape, a, t, 1e-7).value() == 0.0);
  }
  SUBCASE("45-degree centers give cost 1 up to epsilon") {
    const BoxNodes a = box_leaves(tape, BBox(0.3, 0.3, 0.1, 0.1));
    const BoxNodes t = box_leaves(tape, BBox(0.6, 0.6, 0.1, 0.1));
    CHECK(siou_angle(tape, a, t, 1e-7).value() ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("3-4-5 offset") {
    const BoxNodes a = box_leaves(tape, BBox(0.5, 0.6, 0.1, 0.1));
    const BoxNodes t = box_leaves(tape, BBox(0.2, 0.2, 0.1, 0.1));
    CHECK(siou_angle(tape, a, t, 1e-7).value() ==
          doctest::Approx(0.9599999159999783).epsilon(1e-9));
  }
  SUBCASE("coincident centers are flat") {
    const BoxNodes a = box_leaves(tape, BBox(0.5, 0.5, 0.3, 0.1));
    const BoxNodes t = box_leaves(tape, BBox(0.5, 0.5, 0.1, 0.3));
    const Value angle = siou_angle(tape, a, t, 1e-7);
    CHECK(angle.value() == 0.0);
    tape.backward(angle);
    CHECK(a.x.adjoint() == 0.0);
    CHECK(a.y.adjoint() == 0.0);
  }
}

TEST_CASE("siou_distance") {
  Tape tape;
  SUBCASE("concentric boxes cost nothing") {
    const BoxNodes a = box_leaves(tape, BBox(0.5, 0.5, 0.4, 0.2));
    const BoxNodes t = box_leaves(tape, BBox(0.5, 0.5, 0.2, 0.4));
    const EnclosureNodes enc = enclosure(tape, a, t);
    const Value angle = siou_angle(tape, a, t, 1e-7);
    CHECK(siou_distance(tape, a, t, enc, angle).value() == 0.0);
  }
  SUBCASE("diagonal touching pair") {
    const BoxNodes a = box_leaves(tape, kTouchA);
    const BoxNodes t = box_leaves(tape, kTouchT);
    const EnclosureNodes enc = enclosure(tape, a, t);
    const Value angle = siou_angle(tape, a, t, 1e-7);
    CHECK(siou_distance(tape, a, t, enc, angle).value() ==
          doctest::Approx(0.22119921692859513).epsilon(1e-6));
  }
  SUBCASE("sensitivity to the angle cost") {
    // gamma = 2 - Lambda, so d Delta / d Lambda =
    // -(1/2) sum rho_t exp(-gamma rho_t) < 0 for nonzero offsets: a larger
    // angle cost relaxes the distance cost.
    const BoxNodes a = box_leaves(tape, kTouchA);
    const BoxNodes t = box_leaves(tape, kTouchT);
    const EnclosureNodes enc = enclosure(tape, a, t);
    const Value angle = tape.leaf(0.6);  // stand-in for the angle cost
    const Value delta = siou_distance(tape, a, t, enc, angle);
    tape.backward(delta);
    const double rho = 0.25;  // both normalized offsets for this pair
    const double expected = -rho * std::exp(-(2.0 - 0.6) * rho);
    CHECK(angle.adjoint() < 0.0);
    CHECK(angle.adjoint() == doctest::Approx(expected).epsilon(1e-12));

    // Central difference on the stand-in leaf agrees.
    const std::pair<Value, double> up{angle, 0.6 + 1e-6};
    const std::pair<Value, double> dn{angle, 0.6 - 1e-6};
    const double fd = (tape.replay(delta, {&up, 1}) -
                       tape.replay(delta, {&dn, 1})) / 2e-6;
    CHECK(angle.adjoint() == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("siou_shape") {
  Tape tape;
  SUBCASE("equal sizes cost nothing") {
    const BoxNodes a = box_leaves(tape, BBox(0.2, 0.8, 0.3, 0.4));
    const BoxNodes t = box_leaves(tape, BBox(0.6, 0.1, 0.3, 0.4));
    CHECK(siou_shape(tape, a, t).value() == 0.0);
  }
  SUBCASE("half-relative size differences") {
    const BoxNodes a = box_leaves(tape, BBox(0.5, 0.5, 0.4, 0.2));
    const BoxNodes t = box_leaves(tape, BBox(0.5, 0.5, 0.2, 0.4));
    CHECK(siou_shape(tape, a, t).value() ==
          doctest::Approx(0.023968650821013611).epsilon(1e-12));
  }
  SUBCASE("bounded in [0, 1)") {
    std::mt19937_64 rng(24);
    for (int i = 0; i < 200; ++i) {
      const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
      tape.clear();
      const BoxNodes a = box_leaves(tape, ab);
      const BoxNodes t = box_leaves(tape, tb);
      const double v = siou_shape(tape, a, t).value();
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("r_siou is the sum of its parts") {
  Tape tape;
  const BoxNodes a = box_leaves(tape, kTouchA);
  const BoxNodes t = box_leaves(tape, kTouchT);
  // Equal sizes: only the distance cost contributes.
  CHECK(r_siou(tape, a, t, 1e-7).value() ==
        doctest::Approx(0.22119921692859513).epsilon(1e-6));

  const BoxNodes i1 = box_leaves(tape, kCrossA);
  const BoxNodes i2 = box_leaves(tape, kCrossA);
  CHECK(r_siou(tape, i1, i2, 1e-7).value() == 0.0);
}

TEST_CASE("giou_penalty") {
  CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
          return giou_penalty(t, a, b);
        },
        kTouchA, kTouchT) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
          return giou_penalty(t, a, b);
        },
        kCrossA, kCrossA) == doctest::Approx(0.0).epsilon(1e-14));

  std::mt19937_64 rng(25);
  for (int i = 0; i < 200; ++i) {
    const auto [a, b] = random_case_pair(rng, PairFilter::kMixed, i);
    const double v = penalty_value(
        [](Tape& t, const BoxNodes& x, const BoxNodes& y) {
          return giou_penalty(t, x, y);
        },
        a, b);
    CHECK(v >= -1e-12);
    CHECK(v < 1.0);
  }
}

TEST_CASE("wiou_v1 attention and detach semantics") {
  SUBCASE("concentric pair reduces to the IoU loss exactly") {
    Tape tape;
    const BoxNodes a = box_leaves(tape, kCrossA);
    const BoxNodes t = box_leaves(tape, kCrossT);
    const EnclosureNodes enc = enclosure(tape, a, t);
    const Value iou = iou_loss(tape, a, t, enc);
    CHECK(wiou_v1(tape, a, t, enc, iou).value() == iou.value());
  }
  SUBCASE("diagonal touching pair") {
    CHECK(penalty_value([](Tape& t, const BoxNodes& a, const BoxNodes& b) {
            return wiou_v1(t, a, b);
          },
          kTouchA, kTouchT) ==
          doctest::Approx(1.2840254166877414).epsilon(1e-12));
  }
  SUBCASE("the enclosing box receives no adjoint through the attention") {
    std::mt19937_64 rng(26);
    Tape tape;
    for (int i = 0; i < 100; ++i) {
      const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
      tape.clear();
      const BoxNodes a = box_leaves(tape, ab);
      const BoxNodes t = box_leaves(tape, tb);
      const EnclosureNodes enc = enclosure(tape, a, t);
      const Value iou = iou_loss(tape, a, t, enc);
      const Value loss = wiou_v1(tape, a, t, enc, iou);
      tape.backward(loss);
      CHECK(enc.wg.adjoint() == 0.0);
      CHECK(enc.hg.adjoint() == 0.0);
    }
  }
  SUBCASE("attention stays in [1, e) on unit-square pairs") {
    std::mt19937_64 rng(27);
    Tape tape;
    for (int i = 0; i < 500; ++i) {
      const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
      tape.clear();
      const BoxNodes a = box_leaves(tape, ab);
      const BoxNodes t = box_leaves(tape, tb);
      const EnclosureNodes enc = enclosure(tape, a, t);
      const Value iou = iou_loss(tape, a, t, enc);
      const Value loss = wiou_v1(tape, a, t, enc, iou);
      const double attention =
          iou.value() != 0.0 ? loss.value() / iou.value()
                             : std::exp(((ab.x - tb.x) * (ab.x - tb.x) +
                                         (ab.y - tb.y) * (ab.y - tb.y)) /
                                        (enc.wg.value() * enc.wg.value() +
                                         enc.hg.value() * enc.hg.value()));
      CHECK(attention >= 1.0);
      CHECK(attention < std::numbers::e);
    }
  }
}

TEST_CASE("negative enclosing-box gradient of the distance penalty") {
  std::mt19937_64 rng(28);
  Tape tape;
  for (int i = 0; i < 100; ++i) {
    const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
    tape.clear();
    const BoxNodes a = box_leaves(tape, ab);
    const BoxNodes t = box_leaves(tape, tb);
    const EnclosureNodes enc = enclosure(tape, a, t);
    const Value penalty = r_diou(tape, a, t, enc);
    tape.backward(penalty);
    CHECK(enc.wg.adjoint() < 0.0);
    CHECK(enc.hg.adjoint() < 0.0);
  }
}

TEST_CASE("penalty-based losses keep a gradient on disjoint boxes") {
  std::mt19937_64 rng(29);
  Tape tape;
  for (const BaseLoss base :
       {BaseLoss::kGiou, BaseLoss::kDiou, BaseLoss::kEiou, BaseLoss::kCiou,
        BaseLoss::kSiou}) {
    const LossSpec spec{base, FocusNone{}};
    for (int i = 0; i < 100; ++i) {
      const auto [a, t] = random_case_pair(rng, PairFilter::kDisjointOnly, i);
      const CaseEval e = evaluate(spec, a, t, 1.0, tape);
      const bool any = e.grad[0] != 0.0 || e.grad[1] != 0.0 ||
                       e.grad[2] != 0.0 || e.grad[3] != 0.0;
      CHECK(any);
    }
  }
}

TEST_CASE("compose examples") {
  Tape tape;
  SUBCASE("plain IoU on identical boxes") {
    const LossSpec spec{BaseLoss::kIou, FocusNone{}};
    const CaseEval e = evaluate(spec, kCrossA, kCrossA, 1.0, tape);
    CHECK(e.loss == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(e.iou_loss == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(e.grad[0] == 0.0);  // centers sit on a flat tie
    CHECK(e.grad[1] == 0.0);
  }
  SUBCASE("diou on the touching pair") {
    const LossSpec spec{BaseLoss::kDiou, FocusNone{}};
    const CaseEval e = evaluate(spec, kTouchA, kTouchT, 1.0, tape);
    CHECK(e.loss == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(e.iou_loss == 1.0);
  }
  SUBCASE("wiou1 with the non-monotonic focusing wrapper") {
    const LossSpec spec{BaseLoss::kWiouV1, FocusNonMonotonic{1.9, 3.0}};
    const CaseEval e = evaluate(spec, kTouchA, kTouchT, 1.0, tape);
    // beta = 1, r = 1/(3 * 1.9^-2), base = e^0.25.
    CHECK(e.loss == doctest::Approx(1.5451105847475823).epsilon(1e-12));
  }
}

TEST_CASE("focusing coefficients scale gradients without reshaping them") {
  std::mt19937_64 rng(30);
  Tape tape;
  for (int i = 0; i < 50; ++i) {
    const auto [a, t] = random_case_pair(rng, PairFilter::kMixed, i);
    const LossSpec plain{BaseLoss::kWiouV1, FocusNone{}};
    const LossSpec wrapped{BaseLoss::kWiouV1, FocusNonMonotonic{1.9, 3.0}};
    const CaseEval pe = evaluate(plain, a, t, 1.0, tape);
    const CaseEval we = evaluate(wrapped, a, t, 1.0, tape);
    const double iou_star = std::clamp(pe.iou_loss, 0.0, 1.0);
    const double r = gain(outlier_degree(iou_star, 1.0), 1.9, 3.0);
    for (int p = 0; p < 4; ++p) {
      CHECK(scaled_error(we.grad[p], r * pe.grad[p]) <= 1e-12);
    }
  }
}

TEST_CASE("backward matches the tape-free reference oracle") {
  std::mt19937_64 rng(31);
  Tape tape;
  double worst = 0.0;
  for (const BaseLoss base : kAllBases) {
    for (const FocusSpec& fm : kAllFms) {
      const LossSpec spec{base, fm};
      for (int i = 0; i < 150; ++i) {
        const auto [a, t] = random_case_pair(rng, PairFilter::kMixed, i);
        const CaseEval e = evaluate(spec, a, t, 0.8, tape);
        for (int p = 0; p < 4; ++p) {
          const double fd = refimpl::central_diff(spec, a, t, 0.8, p, 1e-6);
          worst = std::max(worst, scaled_error(e.grad[p], fd));
        }
      }
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("tape replay agrees with the reference loss at probe points") {
  std::mt19937_64 rng(32);
  Tape tape;
  for (const BaseLoss base : kAllBases) {
    const LossSpec spec{base, FocusMonotonic{0.5}};
    for (int i = 0; i < 40; ++i) {
      const auto [ab, tb] = random_case_pair(rng, PairFilter::kMixed, i);
      tape.clear();
      const BoxNodes a = box_leaves(tape, ab);
      const BoxNodes t = box_leaves(tape, tb);
      const ComposedNodes nodes = compose(tape, spec, a, t, 0.8);
      const refimpl::Frozen frozen = refimpl::capture(spec, ab, tb, 0.8);

      BBox probe = ab;
      probe.w += 1e-6;
      const std::pair<Value, double> ov{a.w, probe.w};
      CHECK(tape.replay(nodes.loss, {&ov, 1}) ==
            doctest::Approx(refimpl::loss_value(spec, probe, tb, frozen))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("spec validation errors") {
  CHECK_THROWS_AS(LossSpec(BaseLoss::kIou, FocusMonotonic{0.0}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(LossSpec(BaseLoss::kIou, FocusNonMonotonic{1.0, 3.0}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(LossSpec(BaseLoss::kIou, FocusNonMonotonic{1.9, 0.0}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(LossSpec(BaseLoss::kIou, FocusNone{}, 0.0).validate(),
                  std::invalid_argument);
}

TEST_CASE("loss names parse and print") {
  CHECK(parse_base_loss("siou") == BaseLoss::kSiou);
  CHECK(parse_base_loss("wiou1") == BaseLoss::kWiouV1);
  CHECK(!parse_base_loss("bogus").has_value());
  for (const BaseLoss base : kAllBases) {
    CHECK(parse_base_loss(base_loss_name(base)) == base);
  }
  CHECK(LossSpec{BaseLoss::kCiou, FocusMonotonic{0.5}}.name() == "ciou-v2");
  CHECK(LossSpec{BaseLoss::kWiouV1, FocusNonMonotonic{}}.name() == "wiou1-v3");
}

}  // TEST_SUITE
