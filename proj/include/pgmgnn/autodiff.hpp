#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pgmgnn::ad {

/// Dense row-major matrix of doubles. Vectors are 1×n or n×1, scalars 1×1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }
  double item() const;

  bool all_finite() const;
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
};

/// Named trainable tensors in insertion order, with Adam state.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor init);
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  Param& at(std::size_t i) { return params_.at(i); }
  const Param& at(std::size_t i) const { return params_.at(i); }
  Param& operator[](std::string_view name) { return params_[index_of(name)]; }
  const Param& operator[](std::string_view name) const { return params_[index_of(name)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Adds scale * g to the gradient of parameter i.
  void accumulate_grad(std::size_t i, const Tensor& g, double scale = 1.0);
  void mark_gradients_ready() { grads_ready_ = true; }
  bool gradients_ready() const { return grads_ready_; }
  void zero_grad();
  double grad_norm() const;
  void scale_grads(double factor);

  std::int64_t step_count() const { return steps_; }
  void increment_step() { ++steps_; }

  bool same_values(const ParamStore& other) const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::int64_t steps_ = 0;
  bool grads_ready_ = false;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update followed by zero_grad(). Throws if no backward
/// pass has populated gradients since the previous step.
void adam_step(ParamStore& store, const AdamConfig& cfg = {});

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of executed operations. backward() walks the record in
/// reverse, so execution order is the topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. All parameters on one tape must come from the same store.
  Var param(const ParamStore& store, std::size_t index);
  Var param(const ParamStore& store, std::string_view name);
  Var record(Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target; zeros for untouched values.
  const Tensor& grad(std::size_t id) const;
  /// Mutable gradient slot, allocated on first use. For backward rules.
  Tensor& grad_slot(std::size_t id);

  /// Reverse sweep from a 1×1 loss. Calling it twice without
  /// reset_gradients() is an error.
  void backward(Var loss);
  void reset_gradients();

  /// Adds scale * ∂loss/∂p into every parameter bound on this tape and marks
  /// the store's gradients as ready. Parameters not on the tape get nothing.
  void accumulate_into(ParamStore& store, double scale = 1.0) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> bound_params_;  // (node, param index)
  const ParamStore* store_ = nullptr;
  bool backward_done_ = false;
  mutable Tensor zeros_;
};

/// tape.backward(loss) followed by tape.accumulate_into(store).
void backward(Tape& tape, Var loss, ParamStore& store);

// Primitive operations. Shape mismatches throw std::invalid_argument.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// X (m×n) + b (1×n) broadcast over rows.
Var add_bias(Var x, Var bias);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
/// Column sums: m×n → 1×n.
Var sum_rows(Var x);
/// Sum of all entries → 1×1.
Var sum(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var log(Var x);
/// out[r] = x[index[r]].
Var gather_rows(Var x, std::span<const int> index);
/// out[index[r]] += x[r] over `out_rows` rows. Each output entry is summed in
/// ascending order of its addends, so the result does not depend on the order
/// of `index`.
Var scatter_add_rows(Var x, std::span<const int> index, std::size_t out_rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);
/// {name: {shape: [r, c], data: [...]}}.
nlohmann::json params_to_json(const ParamStore& store);
ParamStore params_from_json(const nlohmann::json& j);

}  // namespace pgmgnn::ad
