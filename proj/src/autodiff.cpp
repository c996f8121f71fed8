#include "pcgn/autodiff.hpp"

#include <cmath>

namespace pcgn {

// ---------------------------------------------------------------- ParameterStore

ParamId ParameterStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw DomainError("parameter store: duplicate name '" + name + "'");
  const ParamId id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

// ---------------------------------------------------------------- GradientSet

void GradientSet::accumulate(ParamId id, const Tensor& grad) {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    grads_.emplace(id, grad);
    return;
  }
  if (it->second.shape() != grad.shape()) {
    throw DimensionError("gradient: shape mismatch " + shape_string(it->second.shape()) + " vs " +
                         shape_string(grad.shape()));
  }
  double* dst = it->second.data().data();
  const double* src = grad.data().data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

void GradientSet::accumulate(const GradientSet& other) {
  for (const auto& [id, g] : other) accumulate(id, g);
}

void GradientSet::scale(double factor) {
  for (auto& [id, g] : grads_)
    for (double& v : g.data()) v *= factor;
}

double GradientSet::global_norm() const {
  double sq = 0.0;
  for (const auto& [id, g] : grads_)
    for (double v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

bool GradientSet::all_finite() const {
  for (const auto& [id, g] : grads_)
    if (!g.all_finite()) return false;
  return true;
}

const Tensor* GradientSet::find(ParamId id) const {
  auto it = grads_.find(id);
  return it == grads_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------- Tape

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Hadamard: return "hadamard";
    case OpKind::Scale: return "scale";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Pick: return "pick";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::Sum: return "sum";
    case OpKind::Dot: return "dot";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(id); }

Tape::Tape() {
#if !defined(NDEBUG) || defined(PCGN_CHECK_FINITE)
  check_finite_ = true;
#else
  check_finite_ = false;
#endif
  entries_.reserve(256);
}

Var Tape::constant(Tensor value) {
  Entry e;
  e.kind = OpKind::Constant;
  e.value = std::move(value);
  return push(std::move(e));
}

Var Tape::param(const ParameterStore& store, ParamId id) {
  if (store_ == nullptr) {
    store_ = &store;
  } else if (store_ != &store) {
    throw DomainError("tape: parameters from two different stores");
  }
  if (param_nodes_.size() < store.size()) param_nodes_.resize(store.size(), kNoNode);
  if (param_nodes_.at(id) != kNoNode) return Var{this, param_nodes_[id]};
  Entry e;
  e.kind = OpKind::Parameter;
  e.external = &store.value(id);
  e.param = id;
  Var v = push(std::move(e));
  param_nodes_[id] = v.id;
  return v;
}

Var Tape::push(Entry entry) {
  for (NodeId in : entry.inputs) {
    if (in >= entries_.size()) throw DomainError("tape: input node does not precede its consumer");
  }
  if (check_finite_ && entry.kind != OpKind::Parameter && !entry.value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(entry.kind));
  }
  entries_.push_back(std::move(entry));
  return Var{this, entries_.size() - 1};
}

// ---------------------------------------------------------------- ops

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw DomainError("ops: operands live on different tapes");
  return *a.tape;
}

Var unary(OpKind kind, Var x, Tensor value) {
  Tape::Entry e;
  e.kind = kind;
  e.inputs = {x.id};
  e.value = std::move(value);
  return x.tape->push(std::move(e));
}

Var binary(OpKind kind, Var a, Var b, Tensor value) {
  Tape& tape = same_tape(a, b);
  Tape::Entry e;
  e.kind = kind;
  e.inputs = {a.id, b.id};
  e.value = std::move(value);
  return tape.push(std::move(e));
}

}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::MatMul, a, b, kernels::matmul(a.value(), b.value())); }

Var transpose(Var a) { return unary(OpKind::Transpose, a, kernels::transpose(a.value())); }

Var add(Var a, Var b) { return binary(OpKind::Add, a, b, kernels::add(a.value(), b.value())); }

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("sub: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return binary(OpKind::Sub, a, b, std::move(out));
}

Var hadamard(Var a, Var b) { return binary(OpKind::Hadamard, a, b, kernels::hadamard(a.value(), b.value())); }

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  Tape::Entry e;
  e.kind = OpKind::Scale;
  e.inputs = {a.id};
  e.value = std::move(out);
  e.scalar = factor;
  return a.tape->push(std::move(e));
}

Var sigmoid(Var x) { return unary(OpKind::Sigmoid, x, kernels::sigmoid(x.value())); }

Var tanh(Var x) { return unary(OpKind::Tanh, x, kernels::tanh(x.value())); }

Var map_activation(Activation kind, Var x) { return kind == Activation::Sigmoid ? sigmoid(x) : tanh(x); }

Var softmax(Var x) {
  if (x.value().rank() != 1) throw DimensionError("softmax: expects a vector, got " + shape_string(x.shape()));
  return unary(OpKind::Softmax, x, kernels::softmax(x.value()));
}

Var log_softmax(Var x) {
  if (x.value().rank() != 1) {
    throw DimensionError("log_softmax: expects a vector, got " + shape_string(x.shape()));
  }
  return unary(OpKind::LogSoftmax, x, kernels::log_softmax(x.value()));
}

Var pick(Var x, std::size_t index) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw DimensionError("pick: expects a vector, got " + shape_string(xv.shape()));
  if (index >= xv.size()) {
    throw IndexError("pick: index " + std::to_string(index) + " out of range " + std::to_string(xv.size()));
  }
  Tape::Entry e;
  e.kind = OpKind::Pick;
  e.inputs = {x.id};
  e.value = Tensor::scalar(xv[index]);
  e.index = index;
  return x.tape->push(std::move(e));
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DomainError("concat: no parts");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  Tape::Entry e;
  e.kind = OpKind::Concat;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    values.push_back(p.value());
    e.inputs.push_back(p.id);
  }
  e.value = kernels::concat(values);
  return parts.front().tape->push(std::move(e));
}

Var slice(Var x, std::size_t offset, std::size_t length) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || offset + length > xv.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") outside " + shape_string(xv.shape()));
  }
  const auto span = xv.data().subspan(offset, length);
  Tape::Entry e;
  e.kind = OpKind::Slice;
  e.inputs = {x.id};
  e.value = Tensor::vector(std::vector<double>(span.begin(), span.end()));
  e.index = offset;
  return x.tape->push(std::move(e));
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw DomainError("stack_rows: no rows");
  const std::size_t width = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * width);
  Tape::Entry e;
  e.kind = OpKind::StackRows;
  for (const Var& r : rows) {
    same_tape(rows.front(), r);
    if (r.value().rank() != 1 || r.size() != width) {
      throw DimensionError("stack_rows: row shape " + shape_string(r.shape()) + " vs width " + std::to_string(width));
    }
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
    e.inputs.push_back(r.id);
  }
  e.value = Tensor(Shape{rows.size(), width}, std::move(data));
  return rows.front().tape->push(std::move(e));
}

Var embedding_lookup(Var table, std::size_t index) {
  Tape::Entry e;
  e.kind = OpKind::EmbeddingLookup;
  e.inputs = {table.id};
  e.value = kernels::embedding_lookup(table.value(), index);
  e.index = index;
  return table.tape->push(std::move(e));
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return unary(OpKind::Sum, x, Tensor::scalar(total));
}

Var dot(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 1 || av.shape() != bv.shape()) {
    throw DimensionError("dot: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  return binary(OpKind::Dot, a, b, Tensor::scalar(total));
}

// ---------------------------------------------------------------- backprop

namespace {

Tensor& grad_slot(std::vector<Tensor>& grads, std::vector<bool>& live, const Tape& tape, NodeId id) {
  if (!live[id]) {
    grads[id] = Tensor::zeros(tape.value(id).shape());
    live[id] = true;
  }
  return grads[id];
}

void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  double* d = dst.data().data();
  const double* s = src.data().data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += alpha * s[i];
}

}  // namespace

GradientSet backprop(const Tape& tape, Var output) {
  if (output.tape != &tape) throw DomainError("backprop: output is not on this tape");
  if (output.value().size() != 1) {
    throw DomainError("backprop: output must be scalar, got " + shape_string(output.shape()));
  }
  const std::size_t n = tape.size();
  std::vector<Tensor> grads(n);
  std::vector<bool> live(n, false);
  grads[output.id] = Tensor(output.shape(), 1.0);
  live[output.id] = true;

  GradientSet result;
  for (NodeId id = n; id-- > 0;) {
    const Tape::Entry& e = tape.entry(id);
    if (e.kind == OpKind::Parameter) {
      result.accumulate(e.param, live[id] ? grads[id] : Tensor::zeros(e.output().shape()));
      continue;
    }
    if (!live[id] || e.kind == OpKind::Constant) continue;
    const Tensor& g = grads[id];
    const Tensor& y = e.value;
    auto slot = [&](std::size_t k) -> Tensor& { return grad_slot(grads, live, tape, e.inputs[k]); };

    switch (e.kind) {
      case OpKind::Constant:
      case OpKind::Parameter:
        break;
      case OpKind::MatMul: {
        const Tensor& a = tape.value(e.inputs[0]);
        const Tensor& b = tape.value(e.inputs[1]);
        const std::size_t m = a.shape()[0];
        const std::size_t k = a.shape()[1];
        const std::size_t cols = b.rank() == 2 ? b.shape()[1] : 1;
        Tensor& ga = slot(0);
        double* pga = ga.data().data();
        const double* pg = g.data().data();
        const double* pb = b.data().data();
        const double* pa = a.data().data();
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = pg[i * cols + j];
            if (gij == 0.0) continue;
            double* garow = pga + i * k;
            for (std::size_t p = 0; p < k; ++p) garow[p] += gij * pb[p * cols + j];
          }
        }
        // dB = A^T * G
        Tensor& gb = slot(1);
        double* pgb = gb.data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = pa + i * k;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = pg[i * cols + j];
            if (gij == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) pgb[p * cols + j] += arow[p] * gij;
          }
        }
        break;
      }
      case OpKind::Transpose:
        axpy(slot(0), kernels::transpose(g));
        break;
      case OpKind::Add:
        axpy(slot(0), g);
        axpy(slot(1), g);
        break;
      case OpKind::Sub:
        axpy(slot(0), g);
        axpy(slot(1), g, -1.0);
        break;
      case OpKind::Hadamard: {
        const Tensor& a = tape.value(e.inputs[0]);
        const Tensor& b = tape.value(e.inputs[1]);
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        Tensor& gb = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        break;
      }
      case OpKind::Scale:
        axpy(slot(0), g, e.scalar);
        break;
      case OpKind::Sigmoid: {
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::Tanh: {
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::Softmax: {
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - gy);
        break;
      }
      case OpKind::LogSoftmax: {
        double gsum = 0.0;
        for (double v : g.data()) gsum += v;
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(y[i]) * gsum;
        break;
      }
      case OpKind::Pick:
        slot(0)[e.index] += g[0];
        break;
      case OpKind::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < e.inputs.size(); ++k) {
          Tensor& gp = slot(k);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
          offset += gp.size();
        }
        break;
      }
      case OpKind::Slice: {
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[e.index + i] += g[i];
        break;
      }
      case OpKind::StackRows: {
        const std::size_t width = y.shape()[1];
        for (std::size_t k = 0; k < e.inputs.size(); ++k) {
          Tensor& gr = slot(k);
          for (std::size_t i = 0; i < width; ++i) gr[i] += g[k * width + i];
        }
        break;
      }
      case OpKind::EmbeddingLookup: {
        Tensor& gt = slot(0);
        const std::size_t d = g.size();
        double* row = gt.data().data() + e.index * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += g[i];
        break;
      }
      case OpKind::Sum: {
        Tensor& gx = slot(0);
        for (double& v : gx.data()) v += g[0];
        break;
      }
      case OpKind::Dot: {
        const Tensor& a = tape.value(e.inputs[0]);
        const Tensor& b = tape.value(e.inputs[1]);
        axpy(slot(0), b, g[0]);
        axpy(slot(1), a, g[0]);
        break;
      }
    }
  }
  return result;
}

}  // namespace pcgn
