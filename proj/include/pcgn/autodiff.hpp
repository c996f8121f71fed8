#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcgn/tensor.hpp"

namespace pcgn {

using ParamId = std::size_t;
using NodeId = std::size_t;

/// Named, ordered collection of trainable tensors. Ids are insertion indices and never change.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name).has_value(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Gradient per parameter id; every tensor has its parameter's shape.
class GradientSet {
 public:
  using Map = std::map<ParamId, Tensor>;

  void accumulate(ParamId id, const Tensor& grad);
  void accumulate(const GradientSet& other);
  void scale(double factor);
  double global_norm() const;
  bool all_finite() const;

  const Tensor* find(ParamId id) const;
  const Tensor& at(ParamId id) const { return grads_.at(id); }
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  std::size_t size() const { return grads_.size(); }
  Map::const_iterator begin() const { return grads_.begin(); }
  Map::const_iterator end() const { return grads_.end(); }

 private:
  Map grads_;
};

enum class OpKind {
  Constant,
  Parameter,
  MatMul,
  Transpose,
  Add,
  Sub,
  Hadamard,
  Scale,
  Sigmoid,
  Tanh,
  Softmax,
  LogSoftmax,
  Pick,
  Concat,
  Slice,
  StackRows,
  EmbeddingLookup,
  Sum,
  Dot,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/// Records primitive applications in topological order. Parameter leaves refer to the
/// store's tensors without copying, so the store must outlive the tape and must not be
/// mutated while the tape is in use.
class Tape {
 public:
  struct Entry {
    OpKind kind = OpKind::Constant;
    std::vector<NodeId> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    ParamId param = 0;
    std::size_t index = 0;  // Pick/EmbeddingLookup index, Slice offset
    double scalar = 0.0;    // Scale factor

    const Tensor& output() const { return external ? *external : value; }
  };

  Tape();

  Var constant(Tensor value);
  Var param(const ParameterStore& store, ParamId id);

  /// Appends an entry whose inputs are already on this tape. Used by the op implementations.
  Var push(Entry entry);

  const Entry& entry(NodeId id) const { return entries_.at(id); }
  const Tensor& value(NodeId id) const { return entries_.at(id).output(); }
  std::size_t size() const { return entries_.size(); }
  const ParameterStore* store() const { return store_; }

  /// When enabled, any op producing NaN/Inf throws NumericError. On by default in debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

 private:
  std::vector<Entry> entries_;
  const ParameterStore* store_ = nullptr;
  std::vector<NodeId> param_nodes_;
  bool check_finite_;
};

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

// Differentiable primitives. Matrix-vector products use matmul with a rank-1 right operand.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var sigmoid(Var x);
Var tanh(Var x);
Var softmax(Var x);
Var log_softmax(Var x);
Var pick(Var x, std::size_t index);
Var concat(const std::vector<Var>& parts);
Var slice(Var x, std::size_t offset, std::size_t length);
Var stack_rows(const std::vector<Var>& rows);
Var embedding_lookup(Var table, std::size_t index);
Var sum(Var x);
Var dot(Var a, Var b);

enum class Activation { Sigmoid, Tanh };
Var map_activation(Activation kind, Var x);

/// Reverse sweep from a scalar node. Every parameter leaf on the tape receives a gradient,
/// zero when the output does not depend on it; shared leaves accumulate additively.
GradientSet backprop(const Tape& tape, Var output);

}  // namespace pcgn
