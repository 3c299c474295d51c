#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace boxloss {

class Tape;

/// Handle to one scalar recorded on a Tape. Cheap to copy; valid until the
/// owning tape is cleared or destroyed.
class Value {
 public:
  Value() = default;

  double value() const;
  /// Adjoint filled by the last Tape::backward (0 before any backward).
  double adjoint() const;

  Tape* tape() const { return tape_; }
  std::int32_t index() const { return idx_; }

 private:
  friend class Tape;
  Value(Tape* tape, std::int32_t idx) : tape_(tape), idx_(idx) {}

  Tape* tape_ = nullptr;
  std::int32_t idx_ = -1;
};

/// Append-only reverse-mode differentiation tape for scalars.
///
/// One tape owns one evaluation; it is not meant to be shared across
/// threads. clear() keeps the node storage so a tape can be reused as a
/// per-thread scratch arena.
///
/// Every operation validates its domain up front and rejects non-finite
/// results instead of letting NaN/inf propagate silently.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kConst,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kAddC,   // x + c          (c in aux)
    kCSub,   // c - x          (c in aux)
    kMulC,   // x * c          (c in aux)
    kCDiv,   // c / x          (c in aux)
    kPowC,   // x ^ c          (c in aux)
    kExp,
    kLn,
    kSqrt,
    kSin,
    kAsin,
    kAtan,
    kAbs,
    kMin,
    kMax,
    kSquare,
    kDetach,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New input node. Rejects non-finite values.
  Value leaf(double v);
  /// New constant node (never receives gradient).
  Value constant(double v);

  /// Stop-gradient: same value, but backward contributes nothing to the
  /// ancestors of x through the returned node.
  Value detach(Value x);

  /// Reverse sweep from root. Fills adjoints for every node on the tape;
  /// adjoint(root) == 1 afterwards. May be called repeatedly (adjoints are
  /// reset each time).
  void backward(Value root);

  /// d root / d leaf for each requested leaf, in order. Runs backward.
  std::vector<double> gradients(Value root, std::span<const Value> leaves);

  /// Re-evaluates the recorded graph with some leaves overridden, without
  /// touching adjoints. Detached nodes keep their recorded values, so
  /// everything behind a detach (and every constant, e.g. a focusing
  /// coefficient) stays frozen. This is what makes central finite
  /// differences probe exactly the function backward differentiates.
  double replay(Value root, std::span<const std::pair<Value, double>> overrides);

  double value(Value v) const;
  double adjoint(Value v) const;

  std::size_t size() const { return nodes_.size(); }
  /// Drops all nodes but keeps capacity.
  void clear();

 private:
  struct Node {
    double value;
    double d0;   // local derivative wrt parent p0
    double aux;  // local derivative wrt parent p1, or the constant c
    std::int32_t p0;
    std::int32_t p1;
    Op op;
    bool stop;  // detached: backward does not flow to parents
  };

  Value emit(Op op, double value, std::int32_t p0, double d0,
             std::int32_t p1 = -1, double aux = 0.0, bool stop = false);
  void check_owned(Value v, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<double> adjoints_;
  std::vector<double> replay_vals_;
  bool has_adjoints_ = false;

  friend Value operator+(Value a, Value b);
  friend Value operator-(Value a, Value b);
  friend Value operator*(Value a, Value b);
  friend Value operator/(Value a, Value b);
  friend Value operator+(Value a, double c);
  friend Value operator-(Value a, double c);
  friend Value operator-(double c, Value a);
  friend Value operator*(Value a, double c);
  friend Value operator/(Value a, double c);
  friend Value operator/(double c, Value a);
  friend Value operator-(Value a);
  friend Value pow_const(Value x, double e);
  friend Value exp(Value x);
  friend Value ln(Value x);
  friend Value sqrt(Value x);
  friend Value sin(Value x);
  friend Value asin(Value x);
  friend Value atan(Value x);
  friend Value abs(Value x);
  friend Value min(Value a, Value b);
  friend Value max(Value a, Value b);
  friend Value square(Value x);
};

Value operator+(Value a, Value b);
Value operator-(Value a, Value b);
Value operator*(Value a, Value b);
Value operator/(Value a, Value b);
Value operator+(Value a, double c);
Value operator-(Value a, double c);
Value operator-(double c, Value a);
Value operator*(Value a, double c);
Value operator/(Value a, double c);
Value operator/(double c, Value a);
Value operator-(Value a);
inline Value operator+(double c, Value a) { return a + c; }
inline Value operator*(double c, Value a) { return a * c; }

/// x^e with a constant exponent. General a^b is composed as exp(b*ln(a)).
Value pow_const(Value x, double e);
Value exp(Value x);
Value ln(Value x);
Value sqrt(Value x);
Value sin(Value x);
Value asin(Value x);
Value atan(Value x);
/// Subgradient 0 at x == 0.
Value abs(Value x);
/// On exact ties the gradient flows to the first argument.
Value min(Value a, Value b);
Value max(Value a, Value b);
Value square(Value x);
inline Value detach(Value x) { return x.tape()->detach(x); }

}  // namespace boxloss
