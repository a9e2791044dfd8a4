#include "cpg_actor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpg_actor/numeric.hpp"

namespace cpg_actor::ad {

namespace {

constexpr std::array<std::string_view, static_cast<std::size_t>(Primitive::kCount)>
    kNames = {"leaf",  "add",     "sub",      "mul",  "div",        "neg",
              "add",   "mul",     "sin",      "cos",  "exp",        "log",
              "tanh",  "softplus", "max",     "min",  "clip",       "matvec",
              "sum",   "mean",    "gather",   "scatter_add", "concat"};

std::size_t broadcast_size(std::size_t a, std::size_t b) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError("operand lengths " + std::to_string(a) + " and " +
                   std::to_string(b) + " do not broadcast");
}

}  // namespace

std::string_view primitive_name(Primitive p) {
  return kNames.at(static_cast<std::size_t>(p));
}

ParamRef ParamRef::slice(std::size_t offset, std::size_t count) const {
  if (offset + count > value.size()) {
    throw ShapeError("parameter slice out of range");
  }
  ParamRef out;
  out.value = value.subspan(offset, count);
  if (!grad.empty()) out.grad = grad.subspan(offset, count);
  return out;
}

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  indices_.clear();
  adj_total_ = 0;
}

void Tape::inject_adjoint_fault(Primitive p, double scale) {
  if (!faults_) {
    fault_.fill(1.0);
    faults_ = true;
  }
  fault_[static_cast<std::size_t>(p)] = scale;
}

Tape::Node& Tape::push(Primitive op, std::size_t size, bool needs_grad) {
  Node n;
  n.op = op;
  n.size = static_cast<std::uint32_t>(size);
  n.needs_grad = needs_grad;
  n.val = static_cast<std::uint32_t>(values_.size());
  values_.resize(values_.size() + size);
  if (needs_grad) {
    n.adj = static_cast<std::uint32_t>(adj_total_);
    adj_total_ += size;
  }
  nodes_.push_back(n);
  return nodes_.back();
}

const double* Tape::val_ptr(const Node& n) const {
  return n.ext ? n.ext : values_.data() + n.val;
}

double* Tape::adj_ptr(Node& n) {
  return n.sink ? n.sink : adjoints_.data() + n.adj;
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw ShapeError("variable does not belong to this tape");
}

Var Tape::constant(std::span<const double> values) {
  Node& n = push(Primitive::kLeaf, values.size(), false);
  std::copy(values.begin(), values.end(), values_.begin() + n.val);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::initializer_list<double> values) {
  return constant(std::span<const double>(values.begin(), values.size()));
}

Var Tape::constant(double value) { return constant(std::span<const double>(&value, 1)); }

Var Tape::input(std::span<const double> values) {
  Node& n = push(Primitive::kLeaf, values.size(), true);
  std::copy(values.begin(), values.end(), values_.begin() + n.val);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(ParamRef p) {
  if (!p.grad.empty() && p.grad.size() != p.value.size()) {
    throw ShapeError("gradient sink length differs from parameter length");
  }
  // External leaves keep no value storage of their own.
  Node n;
  n.op = Primitive::kLeaf;
  n.size = static_cast<std::uint32_t>(p.value.size());
  n.needs_grad = true;
  n.val = static_cast<std::uint32_t>(values_.size());
  n.ext = p.value.data();
  if (p.grad.empty()) {
    n.adj = static_cast<std::uint32_t>(adj_total_);
    adj_total_ += p.value.size();
  } else {
    n.sink = p.grad.data();
  }
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::binary(Primitive op, Var a, Var b) {
  check(a);
  check(b);
  const std::size_t na = nodes_[a.id].size;
  const std::size_t nb = nodes_[b.id].size;
  const std::size_t n = broadcast_size(na, nb);
  const bool g = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Node& out = push(op, n, g);
  out.a = a.id;
  out.b = b.id;
  const double* x = val_ptr(nodes_[a.id]);
  const double* y = val_ptr(nodes_[b.id]);
  double* o = values_.data() + out.val;
  const std::size_t sa = na == 1 ? 0 : 1;
  const std::size_t sb = nb == 1 ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[i * sa];
    const double v = y[i * sb];
    switch (op) {
      case Primitive::kAdd: o[i] = u + v; break;
      case Primitive::kSub: o[i] = u - v; break;
      case Primitive::kMul: o[i] = u * v; break;
      case Primitive::kDiv: o[i] = u / v; break;
      case Primitive::kMax: o[i] = u >= v ? u : v; break;
      case Primitive::kMin: o[i] = u <= v ? u : v; break;
      default: throw UnsupportedPrimitive(primitive_name(op));
    }
  }
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::unary(Primitive op, Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].size;
  Node& out = push(op, n, nodes_[a.id].needs_grad);
  out.a = a.id;
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case Primitive::kNeg: o[i] = -x[i]; break;
      case Primitive::kSin: o[i] = std::sin(x[i]); break;
      case Primitive::kCos: o[i] = std::cos(x[i]); break;
      case Primitive::kExp: o[i] = std::exp(x[i]); break;
      case Primitive::kLog: o[i] = std::log(x[i]); break;
      case Primitive::kTanh: o[i] = std::tanh(x[i]); break;
      case Primitive::kSoftplus: o[i] = cpg_actor::softplus(x[i]); break;
      default: throw UnsupportedPrimitive(primitive_name(op));
    }
  }
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::add(Var a, Var b) { return binary(Primitive::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Primitive::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Primitive::kMul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Primitive::kDiv, a, b); }
Var Tape::max(Var a, Var b) { return binary(Primitive::kMax, a, b); }
Var Tape::min(Var a, Var b) { return binary(Primitive::kMin, a, b); }
Var Tape::neg(Var a) { return unary(Primitive::kNeg, a); }
Var Tape::sin(Var a) { return unary(Primitive::kSin, a); }
Var Tape::cos(Var a) { return unary(Primitive::kCos, a); }
Var Tape::exp(Var a) { return unary(Primitive::kExp, a); }
Var Tape::log(Var a) { return unary(Primitive::kLog, a); }
Var Tape::tanh(Var a) { return unary(Primitive::kTanh, a); }
Var Tape::softplus(Var a) { return unary(Primitive::kSoftplus, a); }

Var Tape::add(Var a, double c) {
  check(a);
  const std::size_t n = nodes_[a.id].size;
  Node& out = push(Primitive::kAddConst, n, nodes_[a.id].needs_grad);
  out.a = a.id;
  out.c0 = c;
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + c;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::mul(Var a, double c) {
  check(a);
  const std::size_t n = nodes_[a.id].size;
  Node& out = push(Primitive::kMulConst, n, nodes_[a.id].needs_grad);
  out.a = a.id;
  out.c0 = c;
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * c;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::clip(Var a, double lo, double hi) {
  check(a);
  if (!(lo <= hi)) throw ShapeError("clip requires lo <= hi");
  const std::size_t n = nodes_[a.id].size;
  Node& out = push(Primitive::kClip, n, nodes_[a.id].needs_grad);
  out.a = a.id;
  out.c0 = lo;
  out.c1 = hi;
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t i = 0; i < n; ++i) o[i] = std::clamp(x[i], lo, hi);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::matvec(Var w, std::size_t rows, Var x) {
  check(w);
  check(x);
  const std::size_t nw = nodes_[w.id].size;
  const std::size_t cols = nodes_[x.id].size;
  if (rows == 0 || nw != rows * cols) {
    throw ShapeError("matvec: matrix of " + std::to_string(nw) + " entries is not " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  const bool g = nodes_[w.id].needs_grad || nodes_[x.id].needs_grad;
  Node& out = push(Primitive::kMatVec, rows, g);
  out.a = w.id;
  out.b = x.id;
  out.aux = static_cast<std::uint32_t>(rows);
  matvec_kernel(val_ptr(nodes_[w.id]), rows, cols, val_ptr(nodes_[x.id]),
                values_.data() + out.val);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::sum(Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].size;
  Node& out = push(Primitive::kSum, 1, nodes_[a.id].needs_grad);
  out.a = a.id;
  const double* x = val_ptr(nodes_[a.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  values_[out.val] = s;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::mean(Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].size;
  if (n == 0) throw ShapeError("mean of empty vector");
  Node& out = push(Primitive::kMean, 1, nodes_[a.id].needs_grad);
  out.a = a.id;
  const double* x = val_ptr(nodes_[a.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  values_[out.val] = s / static_cast<double>(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::gather(Var a, std::span<const std::size_t> indices) {
  check(a);
  const std::size_t na = nodes_[a.id].size;
  for (std::size_t k : indices) {
    if (k >= na) throw ShapeError("gather index out of range");
  }
  const std::size_t off = indices_.size();
  indices_.insert(indices_.end(), indices.begin(), indices.end());
  Node& out = push(Primitive::kGather, indices.size(), nodes_[a.id].needs_grad);
  out.a = a.id;
  out.idx = static_cast<std::uint32_t>(off);
  out.aux = static_cast<std::uint32_t>(indices.size());
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t k = 0; k < indices.size(); ++k) o[k] = x[indices[k]];
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::scatter_add(Var a, std::span<const std::size_t> indices, std::size_t n) {
  check(a);
  if (indices.size() != nodes_[a.id].size) {
    throw ShapeError("scatter_add: index count differs from operand length");
  }
  for (std::size_t k : indices) {
    if (k >= n) throw ShapeError("scatter_add index out of range");
  }
  const std::size_t off = indices_.size();
  indices_.insert(indices_.end(), indices.begin(), indices.end());
  Node& out = push(Primitive::kScatterAdd, n, nodes_[a.id].needs_grad);
  out.a = a.id;
  out.idx = static_cast<std::uint32_t>(off);
  out.aux = static_cast<std::uint32_t>(indices.size());
  const double* x = val_ptr(nodes_[a.id]);
  double* o = values_.data() + out.val;
  for (std::size_t i = 0; i < n; ++i) o[i] = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) o[indices[k]] += x[k];
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::concat(Var a, Var b) {
  check(a);
  check(b);
  const std::size_t na = nodes_[a.id].size;
  const std::size_t nb = nodes_[b.id].size;
  const bool g = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Node& out = push(Primitive::kConcat, na + nb, g);
  out.a = a.id;
  out.b = b.id;
  const double* x = val_ptr(nodes_[a.id]);
  const double* y = val_ptr(nodes_[b.id]);
  double* o = values_.data() + out.val;
  std::copy(x, x + na, o);
  std::copy(y, y + nb, o + na);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::apply(std::string_view name, std::span<const Var> operands) {
  auto need = [&](std::size_t k) {
    if (operands.size() != k) {
      throw ShapeError(std::string(name) + " expects " + std::to_string(k) + " operands");
    }
  };
  if (name == "add") { need(2); return add(operands[0], operands[1]); }
  if (name == "sub") { need(2); return sub(operands[0], operands[1]); }
  if (name == "mul") { need(2); return mul(operands[0], operands[1]); }
  if (name == "div") { need(2); return div(operands[0], operands[1]); }
  if (name == "max") { need(2); return max(operands[0], operands[1]); }
  if (name == "min") { need(2); return min(operands[0], operands[1]); }
  if (name == "concat") { need(2); return concat(operands[0], operands[1]); }
  if (name == "neg") { need(1); return neg(operands[0]); }
  if (name == "sin") { need(1); return sin(operands[0]); }
  if (name == "cos") { need(1); return cos(operands[0]); }
  if (name == "exp") { need(1); return exp(operands[0]); }
  if (name == "log") { need(1); return log(operands[0]); }
  if (name == "tanh") { need(1); return tanh(operands[0]); }
  if (name == "softplus") { need(1); return softplus(operands[0]); }
  if (name == "sum") { need(1); return sum(operands[0]); }
  if (name == "mean") { need(1); return mean(operands[0]); }
  throw UnsupportedPrimitive(name);
}

std::size_t Tape::size(Var v) const {
  check(v);
  return nodes_[v.id].size;
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return {val_ptr(n), n.size};
}

double Tape::scalar(Var v) const {
  check(v);
  if (nodes_[v.id].size != 1) throw ShapeError("node is not scalar");
  return *val_ptr(nodes_[v.id]);
}

std::span<const double> Tape::adjoint(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (!n.needs_grad) return {};
  if (n.sink) return {n.sink, n.size};
  if (adjoints_.size() < n.adj + n.size) return {};
  return {adjoints_.data() + n.adj, n.size};
}

Primitive Tape::primitive(Var v) const {
  check(v);
  return nodes_[v.id].op;
}

void Tape::backward(Var output, double seed) {
  backward(output, std::span<const double>(&seed, 1));
}

void Tape::backward(Var output, std::span<const double> seed) {
  check(output);
  Node& root = nodes_[output.id];
  if (seed.size() != root.size) {
    throw ShapeError("seed of length " + std::to_string(seed.size()) +
                     " for output of length " + std::to_string(root.size));
  }
  if (!root.needs_grad) return;
  adjoints_.assign(adj_total_, 0.0);
  {
    double* g = adj_ptr(root);
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  }

  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.op == Primitive::kLeaf) continue;
    const double scale = faults_ ? fault_[static_cast<std::size_t>(n.op)] : 1.0;
    const double* g = adjoints_.data() + n.adj;
    const double* y = values_.data() + n.val;
    const std::size_t size = n.size;

    Node* na = n.a != UINT32_MAX ? &nodes_[n.a] : nullptr;
    Node* nb = n.b != UINT32_MAX ? &nodes_[n.b] : nullptr;
    const bool ga = na && na->needs_grad;
    const bool gb = nb && nb->needs_grad;
    double* da = ga ? adj_ptr(*na) : nullptr;
    double* db = gb ? adj_ptr(*nb) : nullptr;
    const double* x = na ? val_ptr(*na) : nullptr;
    const double* z = nb ? val_ptr(*nb) : nullptr;

    switch (n.op) {
      case Primitive::kAdd:
      case Primitive::kSub:
      case Primitive::kMul:
      case Primitive::kDiv:
      case Primitive::kMax:
      case Primitive::kMin: {
        const std::size_t sa = na->size == 1 ? 0 : 1;
        const std::size_t sb = nb->size == 1 ? 0 : 1;
        for (std::size_t i = 0; i < size; ++i) {
          const double gi = g[i] * scale;
          const double u = x[i * sa];
          const double v = z[i * sb];
          double pa = 0.0;
          double pb = 0.0;
          switch (n.op) {
            case Primitive::kAdd: pa = gi; pb = gi; break;
            case Primitive::kSub: pa = gi; pb = -gi; break;
            case Primitive::kMul: pa = gi * v; pb = gi * u; break;
            case Primitive::kDiv: pa = gi / v; pb = -gi * u / (v * v); break;
            case Primitive::kMax: (u >= v ? pa : pb) = gi; break;
            case Primitive::kMin: (u <= v ? pa : pb) = gi; break;
            default: break;
          }
          if (da) da[i * sa] += pa;
          if (db) db[i * sb] += pb;
        }
        break;
      }
      case Primitive::kNeg:
        for (std::size_t i = 0; i < size; ++i) da[i] -= g[i] * scale;
        break;
      case Primitive::kAddConst:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * scale;
        break;
      case Primitive::kMulConst:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * n.c0 * scale;
        break;
      case Primitive::kSin:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * std::cos(x[i]) * scale;
        break;
      case Primitive::kCos:
        for (std::size_t i = 0; i < size; ++i) da[i] -= g[i] * std::sin(x[i]) * scale;
        break;
      case Primitive::kExp:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * y[i] * scale;
        break;
      case Primitive::kLog:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] / x[i] * scale;
        break;
      case Primitive::kTanh:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]) * scale;
        break;
      case Primitive::kSoftplus:
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * sigmoid(x[i]) * scale;
        break;
      case Primitive::kClip:
        for (std::size_t i = 0; i < size; ++i) {
          if (x[i] > n.c0 && x[i] < n.c1) da[i] += g[i] * scale;
        }
        break;
      case Primitive::kMatVec: {
        const std::size_t rows = n.aux;
        const std::size_t cols = nb->size;
        if (da) {
          for (std::size_t c = 0; c < cols; ++c) {
            const double xc = z[c] * scale;
            double* col = da + c * rows;
            for (std::size_t r = 0; r < rows; ++r) col[r] += g[r] * xc;
          }
        }
        if (db) {
          for (std::size_t c = 0; c < cols; ++c) {
            const double* col = x + c * rows;
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) s += col[r] * g[r];
            db[c] += s * scale;
          }
        }
        break;
      }
      case Primitive::kSum:
        for (std::size_t i = 0; i < na->size; ++i) da[i] += g[0] * scale;
        break;
      case Primitive::kMean: {
        const double gi = g[0] / static_cast<double>(na->size) * scale;
        for (std::size_t i = 0; i < na->size; ++i) da[i] += gi;
        break;
      }
      case Primitive::kGather: {
        const std::size_t* ix = indices_.data() + n.idx;
        for (std::size_t k = 0; k < n.aux; ++k) da[ix[k]] += g[k] * scale;
        break;
      }
      case Primitive::kScatterAdd: {
        const std::size_t* ix = indices_.data() + n.idx;
        for (std::size_t k = 0; k < n.aux; ++k) da[k] += g[ix[k]] * scale;
        break;
      }
      case Primitive::kConcat:
        if (da) for (std::size_t i = 0; i < na->size; ++i) da[i] += g[i] * scale;
        if (db) for (std::size_t i = 0; i < nb->size; ++i) db[i] += g[na->size + i] * scale;
        break;
      default:
        throw UnsupportedPrimitive(primitive_name(n.op));
    }
  }
}

Recorded record_forward(const TapedFn& fn, std::span<const double> point) {
  Recorded rec;
  ParamRef p{point, {}};
  rec.output = fn(rec.tape, p);
  return rec;
}

std::vector<double> gradient(const TapedFn& fn, std::span<const double> point, Tape* tape) {
  Tape local;
  Tape& t = tape ? *tape : local;
  t.clear();
  std::vector<double> grad(point.size(), 0.0);
  const Var out = fn(t, ParamRef{point, grad});
  if (t.size(out) != 1) throw ShapeError("gradient requires a scalar function");
  t.backward(out, 1.0);
  return grad;
}

FdReport finite_diff_check(const TapedFn& fn, std::span<const double> point, double h,
                           double tol, Tape* tape, double rel_floor) {
  Tape local;
  Tape& t = tape ? *tape : local;
  FdReport report;
  report.analytic = gradient(fn, point, &t);
  report.numeric.resize(point.size());

  double scale = 0.0;
  for (double g : report.analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(1e-8, rel_floor * scale);

  std::vector<double> x(point.begin(), point.end());
  auto eval = [&]() {
    t.clear();
    const Var out = fn(t, ParamRef{x, {}});
    return t.scalar(out);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = eval();
    x[i] = saved - h;
    const double fm = eval();
    x[i] = saved;
    report.numeric[i] = (fp - fm) / (2.0 * h);

    const double a = report.analytic[i];
    const double num = report.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(num), floor});
    const double rel = std::abs(a - num) / denom;
    if (!(rel < tol)) report.failing_indices.push_back(i);
    if (!(rel <= report.max_rel_err)) report.max_rel_err = rel;
  }
  return report;
}

}  // namespace cpg_actor::ad
