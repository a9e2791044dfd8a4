#pragma once

// Reverse-mode differentiation over vector-valued primitives.
//
// A Tape records a fixed, closed set of primitives in topological order and
// sweeps them once in reverse. Every node holds a dense vector; binary
// elementwise primitives broadcast a length-1 operand against the other.
// Parameter leaves reference caller-owned memory and, when given a gradient
// sink, accumulate their adjoints straight into it, so repeated per-sample
// backward passes sum into one gradient buffer.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpg_actor::ad {

enum class Primitive : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddConst,
  kMulConst,
  kSin,
  kCos,
  kExp,
  kLog,
  kTanh,
  kSoftplus,
  kMax,
  kMin,
  kClip,
  kMatVec,
  kSum,
  kMean,
  kGather,
  kScatterAdd,
  kConcat,
  kCount,
};

std::string_view primitive_name(Primitive p);

class UnsupportedPrimitive : public std::invalid_argument {
 public:
  explicit UnsupportedPrimitive(std::string_view name)
      : std::invalid_argument("unsupported primitive: " + std::string(name)) {}
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// A view onto trainable values plus an optional gradient sink of equal size.
struct ParamRef {
  std::span<const double> value;
  std::span<double> grad;

  ParamRef slice(std::size_t offset, std::size_t count) const;
};

class Tape {
 public:
  Tape() = default;

  // Drops all nodes but keeps allocated capacity.
  void clear();

  // Leaf without gradient.
  Var constant(std::span<const double> values);
  Var constant(std::initializer_list<double> values);
  Var constant(double value);
  // Leaf whose adjoint is kept on the tape (read back with adjoint()).
  Var input(std::span<const double> values);
  // Leaf referencing external memory. The referenced values must outlive
  // the tape contents; the adjoint goes to p.grad when it is non-empty.
  Var param(ParamRef p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var add(Var a, double c);
  Var mul(Var a, double c);
  Var sin(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  Var max(Var a, Var b);
  Var min(Var a, Var b);
  // Gradient passes strictly inside (lo, hi); zero outside and on the bounds.
  Var clip(Var a, double lo, double hi);
  // w holds a rows x (size(w) / rows) matrix, input-major (see matvec_kernel).
  Var matvec(Var w, std::size_t rows, Var x);
  Var sum(Var a);
  Var mean(Var a);
  Var gather(Var a, std::span<const std::size_t> indices);
  // out[indices[k]] += a[k], out has length n and starts at zero.
  Var scatter_add(Var a, std::span<const std::size_t> indices, std::size_t n);
  Var concat(Var a, Var b);

  // Name-based dispatch over the elementwise/reduction primitives; anything
  // outside the closed set raises UnsupportedPrimitive.
  Var apply(std::string_view name, std::span<const Var> operands);

  std::size_t size(Var v) const;
  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::span<const double> adjoint(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  Primitive primitive(Var v) const;

  // Seeds `output` with `seed` and sweeps every node once in reverse.
  void backward(Var output, std::span<const double> seed);
  void backward(Var output, double seed = 1.0);

  // Test hook: scales every adjoint contribution produced by `p`.
  void inject_adjoint_fault(Primitive p, double scale);

 private:
  struct Node {
    Primitive op = Primitive::kLeaf;
    bool needs_grad = false;
    std::uint32_t a = UINT32_MAX;
    std::uint32_t b = UINT32_MAX;
    std::uint32_t size = 0;
    std::uint32_t aux = 0;    // matvec rows; scatter/gather index count
    std::uint32_t val = 0;    // offset into values_
    std::uint32_t adj = 0;    // offset into adjoints_
    std::uint32_t idx = 0;    // offset into indices_
    double c0 = 0.0;
    double c1 = 0.0;
    const double* ext = nullptr;
    double* sink = nullptr;
  };

  Node& push(Primitive op, std::size_t size, bool needs_grad);
  const double* val_ptr(const Node& n) const;
  double* adj_ptr(Node& n);
  Var binary(Primitive op, Var a, Var b);
  Var unary(Primitive op, Var a);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::size_t> indices_;
  std::size_t adj_total_ = 0;
  std::array<double, static_cast<std::size_t>(Primitive::kCount)> fault_{};
  bool faults_ = false;
};

// A differentiable computation: builds its graph from one flat parameter
// point and returns a scalar node.
using TapedFn = std::function<Var(Tape&, ParamRef)>;

struct Recorded {
  Tape tape;
  Var output;
};

Recorded record_forward(const TapedFn& fn, std::span<const double> point);

// Gradient of a scalar taped function at `point`.
std::vector<double> gradient(const TapedFn& fn, std::span<const double> point,
                             Tape* tape = nullptr);

struct FdReport {
  double max_rel_err = 0.0;
  std::vector<std::size_t> failing_indices;
  std::vector<double> analytic;
  std::vector<double> numeric;

  bool passed() const { return failing_indices.empty(); }
};

// Central-difference comparison of every coordinate. The relative error
// denominator is max(|analytic|, |numeric|, floor) with
// floor = max(1e-8, rel_floor * max_i |analytic_i|); a positive rel_floor
// keeps roundoff in the differences from swamping near-zero components.
FdReport finite_diff_check(const TapedFn& fn, std::span<const double> point,
                           double h, double tol, Tape* tape = nullptr, double rel_floor = 0.0);

}  // namespace cpg_actor::ad
