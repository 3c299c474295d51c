#include "boxloss/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace boxloss {

namespace {

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::kLeaf: return "leaf";
    case Tape::Op::kConst: return "const";
    case Tape::Op::kAdd: return "add";
    case Tape::Op::kSub: return "sub";
    case Tape::Op::kMul: return "mul";
    case Tape::Op::kDiv: return "div";
    case Tape::Op::kAddC: return "add-const";
    case Tape::Op::kCSub: return "const-sub";
    case Tape::Op::kMulC: return "mul-const";
    case Tape::Op::kCDiv: return "const-div";
    case Tape::Op::kPowC: return "pow-const";
    case Tape::Op::kExp: return "exp";
    case Tape::Op::kLn: return "ln";
    case Tape::Op::kSqrt: return "sqrt";
    case Tape::Op::kSin: return "sin";
    case Tape::Op::kAsin: return "arcsin";
    case Tape::Op::kAtan: return "arctan";
    case Tape::Op::kAbs: return "abs";
    case Tape::Op::kMin: return "min";
    case Tape::Op::kMax: return "max";
    case Tape::Op::kSquare: return "square";
    case Tape::Op::kDetach: return "detach";
  }
  return "?";
}

[[noreturn]] void throw_domain(Tape::Op op, const char* why, double arg) {
  throw std::domain_error(std::string(op_name(op)) + ": " + why +
                          " (argument " + std::to_string(arg) + ")");
}

}  // namespace

double Value::value() const {
  if (tape_ == nullptr) throw std::logic_error("Value: empty handle");
  return tape_->value(*this);
}

double Value::adjoint() const {
  if (tape_ == nullptr) throw std::logic_error("Value: empty handle");
  return tape_->adjoint(*this);
}

void Tape::check_owned(Value v, const char* what) const {
  if (v.tape() != this || v.index() < 0 ||
      v.index() >= static_cast<std::int32_t>(nodes_.size())) {
    throw std::invalid_argument(std::string(what) +
                                ": value does not belong to this tape");
  }
}

Value Tape::emit(Op op, double value, std::int32_t p0, double d0,
                 std::int32_t p1, double aux, bool stop) {
  if (!std::isfinite(value)) {
    throw std::domain_error(std::string(op_name(op)) +
                            ": non-finite result " + std::to_string(value));
  }
  if (p0 >= 0 && !std::isfinite(d0)) {
    throw std::domain_error(std::string(op_name(op)) +
                            ": non-finite local derivative");
  }
  if (p1 >= 0 && !std::isfinite(aux)) {
    throw std::domain_error(std::string(op_name(op)) +
                            ": non-finite local derivative");
  }
  nodes_.push_back(Node{value, d0, aux, p0, p1, op, stop});
  has_adjoints_ = false;
  return Value(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Value Tape::leaf(double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("leaf: value must be finite");
  }
  return emit(Op::kLeaf, v, -1, 0.0);
}

Value Tape::constant(double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("constant: value must be finite");
  }
  return emit(Op::kConst, v, -1, 0.0);
}

Value Tape::detach(Value x) {
  check_owned(x, "detach");
  return emit(Op::kDetach, nodes_[x.index()].value, x.index(), 1.0, -1, 0.0,
              /*stop=*/true);
}

void Tape::backward(Value root) {
  check_owned(root, "backward");
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[root.index()] = 1.0;
  for (std::int32_t i = root.index(); i >= 0; --i) {
    const double a = adjoints_[i];
    if (a == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.stop) continue;
    if (n.p0 >= 0) adjoints_[n.p0] += n.d0 * a;
    if (n.p1 >= 0) adjoints_[n.p1] += n.aux * a;
  }
  has_adjoints_ = true;
}

std::vector<double> Tape::gradients(Value root, std::span<const Value> leaves) {
  for (Value l : leaves) check_owned(l, "gradients");
  backward(root);
  std::vector<double> out;
  out.reserve(leaves.size());
  for (Value l : leaves) out.push_back(adjoints_[l.index()]);
  return out;
}

double Tape::replay(Value root,
                    std::span<const std::pair<Value, double>> overrides) {
  check_owned(root, "replay");
  for (const auto& [v, x] : overrides) {
    check_owned(v, "replay override");
    if (nodes_[v.index()].op != Op::kLeaf) {
      throw std::invalid_argument("replay: overrides must target leaves");
    }
    if (!std::isfinite(x)) {
      throw std::invalid_argument("replay: override value must be finite");
    }
  }

  const std::size_t n = static_cast<std::size_t>(root.index()) + 1;
  replay_vals_.resize(n);
  auto& val = replay_vals_;
  for (std::size_t i = 0; i < n; ++i) val[i] = nodes_[i].value;
  for (const auto& [v, x] : overrides) val[v.index()] = x;
  for (std::size_t i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    if (nd.op == Op::kLeaf || nd.op == Op::kConst || nd.op == Op::kDetach) {
      continue;  // detach stays frozen at the recorded value
    }
    const double a = nd.p0 >= 0 ? val[nd.p0] : 0.0;
    const double b = nd.p1 >= 0 ? val[nd.p1] : 0.0;
    switch (nd.op) {
      case Op::kAdd: val[i] = a + b; break;
      case Op::kSub: val[i] = a - b; break;
      case Op::kMul: val[i] = a * b; break;
      case Op::kDiv: val[i] = a / b; break;
      case Op::kAddC: val[i] = a + nd.aux; break;
      case Op::kCSub: val[i] = nd.aux - a; break;
      case Op::kMulC: val[i] = a * nd.aux; break;
      case Op::kCDiv: val[i] = nd.aux / a; break;
      case Op::kPowC: val[i] = std::pow(a, nd.aux); break;
      case Op::kExp: val[i] = std::exp(a); break;
      case Op::kLn: val[i] = std::log(a); break;
      case Op::kSqrt: val[i] = std::sqrt(a); break;
      case Op::kSin: val[i] = std::sin(a); break;
      case Op::kAsin: val[i] = std::asin(a); break;
      case Op::kAtan: val[i] = std::atan(a); break;
      case Op::kAbs: val[i] = std::fabs(a); break;
      case Op::kMin: val[i] = a <= b ? a : b; break;
      case Op::kMax: val[i] = a >= b ? a : b; break;
      case Op::kSquare: val[i] = a * a; break;
      default: break;
    }
  }
  return val[root.index()];
}

double Tape::value(Value v) const {
  check_owned(v, "value");
  return nodes_[v.index()].value;
}

double Tape::adjoint(Value v) const {
  check_owned(v, "adjoint");
  if (!has_adjoints_) return 0.0;
  return adjoints_[v.index()];
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
  has_adjoints_ = false;
}

namespace {

Tape* same_tape(Value a, Value b, const char* what) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(what) +
                                ": operands must live on the same tape");
  }
  return a.tape();
}

}  // namespace

Value operator+(Value a, Value b) {
  Tape* t = same_tape(a, b, "add");
  return t->emit(Tape::Op::kAdd, a.value() + b.value(), a.index(), 1.0,
                 b.index(), 1.0);
}

Value operator-(Value a, Value b) {
  Tape* t = same_tape(a, b, "sub");
  return t->emit(Tape::Op::kSub, a.value() - b.value(), a.index(), 1.0,
                 b.index(), -1.0);
}

Value operator*(Value a, Value b) {
  Tape* t = same_tape(a, b, "mul");
  return t->emit(Tape::Op::kMul, a.value() * b.value(), a.index(), b.value(),
                 b.index(), a.value());
}

Value operator/(Value a, Value b) {
  Tape* t = same_tape(a, b, "div");
  const double bv = b.value();
  if (bv == 0.0) throw_domain(Tape::Op::kDiv, "division by zero", bv);
  return t->emit(Tape::Op::kDiv, a.value() / bv, a.index(), 1.0 / bv,
                 b.index(), -a.value() / (bv * bv));
}

Value operator+(Value a, double c) {
  return a.tape()->emit(Tape::Op::kAddC, a.value() + c, a.index(), 1.0, -1, c);
}

Value operator-(Value a, double c) { return a + (-c); }

Value operator-(double c, Value a) {
  return a.tape()->emit(Tape::Op::kCSub, c - a.value(), a.index(), -1.0, -1, c);
}

Value operator*(Value a, double c) {
  return a.tape()->emit(Tape::Op::kMulC, a.value() * c, a.index(), c, -1, c);
}

Value operator/(Value a, double c) {
  if (c == 0.0) throw_domain(Tape::Op::kDiv, "division by zero", c);
  return a * (1.0 / c);
}

Value operator/(double c, Value a) {
  const double x = a.value();
  if (x == 0.0) throw_domain(Tape::Op::kCDiv, "division by zero", x);
  return a.tape()->emit(Tape::Op::kCDiv, c / x, a.index(), -c / (x * x), -1, c);
}

Value operator-(Value a) { return 0.0 - a; }

Value pow_const(Value x, double e) {
  const double xv = x.value();
  const double v = std::pow(xv, e);
  const double d = e * std::pow(xv, e - 1.0);
  if (!std::isfinite(v) || !std::isfinite(d)) {
    throw_domain(Tape::Op::kPowC, "pow undefined or derivative unbounded here",
                 xv);
  }
  return x.tape()->emit(Tape::Op::kPowC, v, x.index(), d, -1, e);
}

Value exp(Value x) {
  const double v = std::exp(x.value());
  return x.tape()->emit(Tape::Op::kExp, v, x.index(), v);
}

Value ln(Value x) {
  const double xv = x.value();
  if (xv <= 0.0) throw_domain(Tape::Op::kLn, "argument must be > 0", xv);
  return x.tape()->emit(Tape::Op::kLn, std::log(xv), x.index(), 1.0 / xv);
}

Value sqrt(Value x) {
  const double xv = x.value();
  if (xv <= 0.0) throw_domain(Tape::Op::kSqrt, "argument must be > 0", xv);
  const double v = std::sqrt(xv);
  return x.tape()->emit(Tape::Op::kSqrt, v, x.index(), 0.5 / v);
}

Value sin(Value x) {
  return x.tape()->emit(Tape::Op::kSin, std::sin(x.value()), x.index(),
                        std::cos(x.value()));
}

Value asin(Value x) {
  const double xv = x.value();
  if (xv < -1.0 || xv > 1.0) {
    throw_domain(Tape::Op::kAsin, "argument must be in [-1, 1]", xv);
  }
  const double d = 1.0 / std::sqrt(1.0 - xv * xv);
  if (!std::isfinite(d)) {
    throw_domain(Tape::Op::kAsin, "derivative unbounded at |x| = 1", xv);
  }
  return x.tape()->emit(Tape::Op::kAsin, std::asin(xv), x.index(), d);
}

Value atan(Value x) {
  const double xv = x.value();
  return x.tape()->emit(Tape::Op::kAtan, std::atan(xv), x.index(),
                        1.0 / (1.0 + xv * xv));
}

Value abs(Value x) {
  const double xv = x.value();
  const double d = xv > 0.0 ? 1.0 : (xv < 0.0 ? -1.0 : 0.0);
  return x.tape()->emit(Tape::Op::kAbs, std::fabs(xv), x.index(), d);
}

Value min(Value a, Value b) {
  Tape* t = same_tape(a, b, "min");
  const bool first = a.value() <= b.value();
  return t->emit(Tape::Op::kMin, first ? a.value() : b.value(), a.index(),
                 first ? 1.0 : 0.0, b.index(), first ? 0.0 : 1.0);
}

Value max(Value a, Value b) {
  Tape* t = same_tape(a, b, "max");
  const bool first = a.value() >= b.value();
  return t->emit(Tape::Op::kMax, first ? a.value() : b.value(), a.index(),
                 first ? 1.0 : 0.0, b.index(), first ? 0.0 : 1.0);
}

Value square(Value x) {
  const double xv = x.value();
  return x.tape()->emit(Tape::Op::kSquare, xv * xv, x.index(), 2.0 * xv);
}

}  // namespace boxloss
