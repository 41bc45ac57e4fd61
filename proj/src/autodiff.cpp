#include "pgmgnn/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace pgmgnn::ad {

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw std::invalid_argument("Tensor: " + std::to_string(data_.size()) + " values for shape (" +
                                std::to_string(rows) + ", " + std::to_string(cols) + ")");
}

Tensor Tensor::column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(n, 1, std::move(v));
}

std::string Tensor::shape_string() const { return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")"; }

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- ParamStore

std::size_t ParamStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  const std::size_t i = params_.size();
  index_.emplace(name, i);
  Tensor zeros(init.rows(), init.cols());
  params_.push_back(Param{std::move(name), std::move(init), zeros, zeros, zeros});
  return i;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + std::string(name) + "'");
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::accumulate_grad(std::size_t i, const Tensor& g, double scale) {
  Param& p = params_.at(i);
  if (!g.same_shape(p.value))
    throw std::invalid_argument("ParamStore: gradient shape " + g.shape_string() + " for '" + p.name + "' of shape " +
                                p.value.shape_string());
  for (std::size_t k = 0; k < g.size(); ++k) p.grad[k] += scale * g[k];
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.values().begin(), p.grad.values().end(), 0.0);
  grads_ready_ = false;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_)
    for (double g : p.grad.values()) s += g * g;
  return std::sqrt(s);
}

void ParamStore::scale_grads(double factor) {
  for (auto& p : params_)
    for (double& g : p.grad.values()) g *= factor;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (params_[i].name != other.params_[i].name || params_[i].value != other.params_[i].value) return false;
  return true;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  if (!store.gradients_ready()) throw std::logic_error("adam_step: no gradients since the last step");
  store.increment_step();
  const double t = static_cast<double>(store.step_count());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      p.adam_m[k] = cfg.beta1 * p.adam_m[k] + (1.0 - cfg.beta1) * g;
      p.adam_v[k] = cfg.beta2 * p.adam_v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.adam_m[k] / c1;
      const double v_hat = p.adam_v[k] / c2;
      p.value[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.zero_grad();
}

// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::param(const ParamStore& store, std::size_t index) {
  if (store_ && store_ != &store) throw std::invalid_argument("Tape::param: parameters from two different stores");
  store_ = &store;
  Var v = record(store.at(index).value, nullptr);
  bound_params_.emplace_back(v.id(), index);
  return v;
}

Var Tape::param(const ParamStore& store, std::string_view name) { return param(store, store.index_of(name)); }

Var Tape::record(Tensor value, BackwardFn backward) {
  assert(value.all_finite() && "non-finite value recorded on tape");
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.empty() && !node.value.empty()) {
    if (!zeros_.same_shape(node.value)) zeros_ = Tensor(node.value.rows(), node.value.cols());
    return zeros_;
  }
  return node.grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::invalid_argument("Tape::backward: loss belongs to another tape");
  if (backward_done_) throw std::logic_error("Tape::backward: called twice without reset_gradients()");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1 || lv.rows() != 1) throw std::invalid_argument("Tape::backward: loss must be 1x1, got " + lv.shape_string());
  backward_done_ = true;
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && !node.grad.empty()) node.backward(*this, id);
  }
}

void Tape::reset_gradients() {
  for (auto& n : nodes_) n.grad = Tensor{};
  backward_done_ = false;
}

void Tape::accumulate_into(ParamStore& store, double scale) const {
  if (store_ && store_ != &store) throw std::invalid_argument("Tape::accumulate_into: parameters belong to another store");
  if (!backward_done_) throw std::logic_error("Tape::accumulate_into: backward() has not run");
  for (const auto& [node, param] : bound_params_)
    if (!nodes_[node].grad.empty()) store.accumulate_grad(param, nodes_[node].grad, scale);
  store.mark_gradients_ready();
}

void backward(Tape& tape, Var loss, ParamStore& store) {
  tape.backward(loss);
  tape.accumulate_into(store);
}

// ---------------------------------------------------------------- ops

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

void same_tape(const char* op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
}

template <class F, class G>
Var unary(Var x, F forward, G derivative) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = forward(xv[k]);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), [xi, derivative](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(xi);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * derivative(in[k], y[k]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  same_tape("add", a, b);
  const Tensor &av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : {ai, bi}) {
      Tensor& s = t.grad_slot(id);
      for (std::size_t k = 0; k < g.size(); ++k) s[k] += g[k];
    }
  });
}

Var sub(Var a, Var b) {
  same_tape("sub", a, b);
  const Tensor &av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    Tensor& gb = t.grad_slot(bi);
    for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
  });
}

Var mul(Var a, Var b) {
  same_tape("mul", a, b);
  const Tensor &av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor &av = t.value(ai), &bv = t.value(bi);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[k];
    Tensor& gb = t.grad_slot(bi);
    for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[k];
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  const std::size_t ai = a.id();
  return a.tape().record(std::move(out), [ai, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += c * g[k];
  });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  const std::size_t ai = a.id();
  return a.tape().record(std::move(out), [ai](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
  });
}

Var matmul(Var a, Var b) {
  same_tape("matmul", a, b);
  const Tensor &av = a.value(), &bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  const std::size_t m = av.rows(), kk = av.cols(), n = bv.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < kk; ++p) {
      const double aip = av(i, p);
      if (aip == 0.0) continue;
      const double* brow = bv.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), [ai, bi, m, kk, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor &av = t.value(ai), &bv = t.value(bi);
    // dA = G Bᵀ
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = g.row(i);
      for (std::size_t p = 0; p < kk; ++p) {
        const double* brow = bv.row(p);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga(i, p) += acc;
      }
    }
    // dB = Aᵀ G
    Tensor& gb = t.grad_slot(bi);
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = g.row(i);
      for (std::size_t p = 0; p < kk; ++p) {
        const double aip = av(i, p);
        if (aip == 0.0) continue;
        double* gbrow = &gb(p, 0);
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
      }
    }
  });
}

Var add_bias(Var x, Var bias) {
  same_tape("add_bias", x, bias);
  const Tensor &xv = x.value(), &bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_error("add_bias", xv, bv);
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  const std::size_t xi = x.id(), bi = bias.id();
  return x.tape().record(std::move(out), [xi, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    Tensor& gb = t.grad_slot(bi);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    same_tape("concat_cols", parts[0], p);
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape().record(std::move(out), [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t q = 0; q < ids.size(); ++q) {
      Tensor& gp = t.grad_slot(ids[q]);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offsets[q] + j);
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::span<const Var>(parts.begin(), parts.size())); }

Var sum_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor out(1, xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), [xi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t i = 0; i < gx.rows(); ++i)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += g[j];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor::scalar(s), [xi](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad_slot(xi);
    for (double& v : gx.values()) v += g;
  });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var log(Var x) {
  for (double v : x.value().values())
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
  return unary(
      x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Var gather_rows(Var x, std::span<const int> index) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  Tensor out(index.size(), cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= xv.rows())
      throw std::invalid_argument("gather_rows: row " + std::to_string(index[r]) + " out of range for " + xv.shape_string());
    std::copy_n(xv.row(static_cast<std::size_t>(index[r])), cols, &out(r, 0));
  }
  const std::size_t xi = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return x.tape().record(std::move(out), [xi, idx = std::move(idx), cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < cols; ++j) gx(static_cast<std::size_t>(idx[r]), j) += g(r, j);
  });
}

Var scatter_add_rows(Var x, std::span<const int> index, std::size_t out_rows) {
  const Tensor& xv = x.value();
  if (index.size() != xv.rows())
    throw std::invalid_argument("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + xv.shape_string());
  const std::size_t cols = xv.cols();
  std::vector<std::vector<std::size_t>> sources(out_rows);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= out_rows)
      throw std::invalid_argument("scatter_add_rows: target row " + std::to_string(index[r]) + " out of range");
    sources[static_cast<std::size_t>(index[r])].push_back(r);
  }
  Tensor out(out_rows, cols);
  std::vector<double> addends;
  for (std::size_t o = 0; o < out_rows; ++o) {
    for (std::size_t j = 0; j < cols; ++j) {
      addends.clear();
      for (std::size_t r : sources[o]) addends.push_back(xv(r, j));
      std::sort(addends.begin(), addends.end());
      double s = 0.0;
      for (double v : addends) s += v;
      out(o, j) = s;
    }
  }
  const std::size_t xi = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return x.tape().record(std::move(out), [xi, idx = std::move(idx), cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < cols; ++j) gx(r, j) += g(static_cast<std::size_t>(idx[r]), j);
  });
}

// ---------------------------------------------------------------- serialization

nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", {t.rows(), t.cols()}}, {"data", t.data()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw std::invalid_argument("tensor: shape must have two entries");
  return Tensor(shape[0], shape[1], j.at("data").get<std::vector<double>>());
}

nlohmann::json params_to_json(const ParamStore& store) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : store) out[p.name] = tensor_to_json(p.value);
  return out;
}

ParamStore params_from_json(const nlohmann::json& j) {
  ParamStore store;
  for (const auto& [name, t] : j.items()) store.add(name, tensor_from_json(t));
  return store;
}

}  // namespace pgmgnn::ad
