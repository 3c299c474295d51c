#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "boxloss/focusing.hpp"
#include "boxloss/geometry.hpp"
#include "boxloss/gradcheck.hpp"
#include "boxloss/losses.hpp"
#include "boxloss/simlab.hpp"

namespace py = pybind11;
using namespace boxloss;

namespace {

BaseLoss base_from_name(const std::string& name) {
  const auto base = parse_base_loss(name);
  if (!base) {
    throw std::invalid_argument(
        "unknown loss '" + name +
        "'; valid: iou, giou, diou, eiou, ciou, siou, wiou1");
  }
  return *base;
}

LossSpec make_spec(const std::string& base, const std::string& fm,
                   double gamma, double alpha, double delta, double epsilon) {
  LossSpec spec;
  spec.base = base_from_name(base);
  if (fm == "none") {
    spec.fm = FocusNone{};
  } else if (fm == "v2") {
    spec.fm = FocusMonotonic{gamma};
  } else if (fm == "v3") {
    spec.fm = FocusNonMonotonic{alpha, delta};
  } else {
    throw std::invalid_argument("fm must be one of: none, v2, v3");
  }
  spec.epsilon = epsilon;
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "IoU-family bounding-box regression losses, focusing mechanisms, "
            "and the gradient-descent regression benchmark";

  py::class_<BBox>(m, "BBox")
      .def(py::init<double, double, double, double>(), py::arg("x"),
           py::arg("y"), py::arg("w"), py::arg("h"))
      .def_readonly("x", &BBox::x)
      .def_readonly("y", &BBox::y)
      .def_readonly("w", &BBox::w)
      .def_readonly("h", &BBox::h)
      .def("__repr__", [](const BBox& b) {
        return "BBox(x=" + format_double(b.x) + ", y=" + format_double(b.y) +
               ", w=" + format_double(b.w) + ", h=" + format_double(b.h) + ")";
      });

  py::class_<EmaTracker>(m, "EmaTracker")
      .def(py::init<double, double>(), py::arg("momentum"),
           py::arg("initial_mean") = 1.0)
      .def_property_readonly("mean", &EmaTracker::mean)
      .def_property_readonly("momentum", &EmaTracker::momentum)
      .def("update", &EmaTracker::update, py::arg("batch_mean_loss"));

  m.def(
      "evaluate",
      [](const std::string& base, const BBox& anchor, const BBox& target,
         const std::string& fm, double gamma, double alpha, double delta,
         double ema_mean, double epsilon) {
        Tape tape;
        const CaseEval e =
            evaluate(make_spec(base, fm, gamma, alpha, delta, epsilon), anchor,
                     target, ema_mean, tape);
        py::dict out;
        out["loss"] = e.loss;
        out["iou_loss"] = e.iou_loss;
        out["grad"] = py::make_tuple(e.grad[0], e.grad[1], e.grad[2],
                                     e.grad[3]);
        return out;
      },
      py::arg("loss"), py::arg("anchor"), py::arg("target"),
      py::arg("fm") = "none", py::arg("gamma") = 0.5, py::arg("alpha") = 1.9,
      py::arg("delta") = 3.0, py::arg("ema_mean") = 1.0,
      py::arg("epsilon") = 1e-7,
      "Forward and backward pass of one loss on one (anchor, target) pair; "
      "returns the loss, the plain IoU loss, and d loss/d (x, y, w, h).");

  m.def("iou_loss",
        py::overload_cast<const BBox&, const BBox&>(&iou_loss),
        py::arg("anchor"), py::arg("target"));

  m.def(
      "enclosure",
      [](const BBox& a, const BBox& b) {
        const Enclosure e = enclosure(a, b);
        py::dict out;
        out["wi"] = e.wi;
        out["hi"] = e.hi;
        out["su"] = e.su;
        out["wg"] = e.wg;
        out["hg"] = e.hg;
        return out;
      },
      py::arg("anchor"), py::arg("target"),
      "Overlap, union and smallest-enclosing-box geometry.");

  m.def("monotonic_coeff", &monotonic_coeff, py::arg("loss_star"),
        py::arg("mean"), py::arg("gamma"));
  m.def("outlier_degree", &outlier_degree, py::arg("loss_star"),
        py::arg("mean"));
  m.def("gain", &gain, py::arg("beta"), py::arg("alpha"), py::arg("delta"));
  m.def("momentum_from_schedule", &momentum_from_schedule, py::arg("t"),
        py::arg("n"));
  m.def(
      "gain_curve",
      [](double alpha, double delta, double beta_max, int steps) {
        std::vector<std::pair<double, double>> out;
        for (const GainSample& s : gain_curve(alpha, delta, beta_max, steps)) {
          out.emplace_back(s.beta, s.r);
        }
        return out;
      },
      py::arg("alpha"), py::arg("delta"), py::arg("beta_max") = 10.0,
      py::arg("steps") = 1000, "(beta, r) samples of the gradient gain.");

  m.def(
      "grad_check",
      [](const std::string& base, const std::string& fm, double gamma,
         double alpha, double delta, int cases, double tolerance, double step,
         std::uint64_t seed, const std::string& pairs, double ema_mean) {
        GradCheckConfig config;
        config.cases = cases;
        config.tolerance = tolerance;
        config.step = step;
        config.seed = seed;
        config.ema_mean = ema_mean;
        if (pairs == "mixed") {
          config.pairs = PairFilter::kMixed;
        } else if (pairs == "overlap") {
          config.pairs = PairFilter::kOverlapOnly;
        } else if (pairs == "disjoint") {
          config.pairs = PairFilter::kDisjointOnly;
        } else {
          throw std::invalid_argument("pairs must be mixed, overlap, or disjoint");
        }
        const GradCheckReport r =
            grad_check(make_spec(base, fm, gamma, alpha, delta, 1e-7), config);
        py::dict out;
        out["loss"] = r.loss;
        out["cases"] = r.cases;
        out["max_scaled_err"] = r.max_scaled_err;
        out["all_gradients_zero"] = r.all_gradients_zero;
        out["passed"] = r.passed;
        return out;
      },
      py::arg("loss"), py::arg("fm") = "none", py::arg("gamma") = 0.5,
      py::arg("alpha") = 1.9, py::arg("delta") = 3.0, py::arg("cases") = 1000,
      py::arg("tolerance") = 1e-5, py::arg("step") = 1e-6, py::arg("seed") = 1,
      py::arg("pairs") = "mixed", py::arg("ema_mean") = 1.0,
      "Backward gradients vs central finite differences over random cases.");

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init([](double radius, std::int64_t points_density,
                       double target_area, double lr, int iterations,
                       std::uint64_t seed, double subsample,
                       double tracker_momentum, int threads) {
             SimConfig cfg;
             cfg.radius = radius;
             cfg.points_density = points_density;
             cfg.target_area = target_area;
             cfg.lr = lr;
             cfg.iterations = iterations;
             cfg.seed = seed;
             cfg.subsample = subsample;
             cfg.tracker_momentum = tracker_momentum;
             cfg.threads = threads;
             cfg.validate();
             return cfg;
           }),
           py::arg("radius") = 0.5, py::arg("points_density") = 20000,
           py::arg("target_area") = 1.0 / 32, py::arg("lr") = 0.01,
           py::arg("iterations") = 200, py::arg("seed") = 0,
           py::arg("subsample") = 1.0, py::arg("tracker_momentum") = 0.01,
           py::arg("threads") = 0)
      .def_readonly("radius", &SimConfig::radius)
      .def_readonly("points_density", &SimConfig::points_density)
      .def_readonly("iterations", &SimConfig::iterations)
      .def_readonly("seed", &SimConfig::seed)
      .def_readonly("subsample", &SimConfig::subsample)
      .def_property_readonly("point_count", &SimConfig::point_count)
      .def_property_readonly("case_count", &SimConfig::case_count);

  m.def(
      "run",
      [](const SimConfig& config, const std::string& base,
         const std::string& fm, double gamma, double alpha, double delta) {
        const LossSpec spec = make_spec(base, fm, gamma, alpha, delta, 1e-7);
        std::vector<CurveRecord> curve;
        {
          py::gil_scoped_release release;
          curve = run(config, spec);
        }
        std::vector<py::dict> out;
        out.reserve(curve.size());
        for (const CurveRecord& r : curve) {
          py::dict d;
          d["iteration"] = r.iteration;
          d["mean_iou_loss"] = r.mean_iou_loss;
          d["mean_training_loss"] = r.mean_training_loss;
          d["loss"] = r.loss_name;
          out.push_back(std::move(d));
        }
        return out;
      },
      py::arg("config"), py::arg("loss"), py::arg("fm") = "none",
      py::arg("gamma") = 0.5, py::arg("alpha") = 1.9, py::arg("delta") = 3.0,
      "Gradient-descent benchmark run; one record per iteration.");

  m.def(
      "generate_cases",
      [](const SimConfig& config) {
        std::vector<py::tuple> out;
        for (const RegressionCase& c : generate_cases(config)) {
          out.push_back(py::make_tuple(c.id, c.anchor.x, c.anchor.y,
                                       c.anchor.w, c.anchor.h, c.target.x,
                                       c.target.y, c.target.w, c.target.h));
        }
        return out;
      },
      py::arg("config"),
      "(id, ax, ay, aw, ah, tx, ty, tw, th) rows of the benchmark grid.");

#ifdef BOXLOSS_VERSION
  m.attr("__version__") = BOXLOSS_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
