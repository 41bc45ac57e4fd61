#include "pgmgnn/gnn.hpp"

#include <cmath>
#include <stdexcept>

#include "pgmgnn/dataset.hpp"
#include "pgmgnn/rng.hpp"

namespace pgmgnn {

using ad::Tensor;
using ad::Var;

std::string to_string(GnnKind kind) { return kind == GnnKind::node ? "node" : "msg"; }

GnnKind parse_gnn_kind(const std::string& s) {
  if (s == "node" || s == "node-gnn") return GnnKind::node;
  if (s == "msg" || s == "msg-gnn") return GnnKind::msg;
  throw std::invalid_argument("unknown GNN kind '" + s + "' (expected node or msg)");
}

void GnnArchitecture::validate() const {
  if (hidden_dim < 1 || message_dim < 1) throw std::invalid_argument("GnnArchitecture: dimensions must be >= 1");
  if (steps < 0) throw std::invalid_argument("GnnArchitecture: steps must be >= 0");
  for (int w : mlp_widths)
    if (w < 1) throw std::invalid_argument("GnnArchitecture: MLP widths must be >= 1");
}

nlohmann::json architecture_to_json(const GnnArchitecture& arch) {
  return nlohmann::json{{"kind", to_string(arch.kind)},
                        {"D", arch.hidden_dim},
                        {"P", arch.message_dim},
                        {"T", arch.steps},
                        {"mlp_widths", arch.mlp_widths}};
}

GnnArchitecture architecture_from_json(const nlohmann::json& j) {
  GnnArchitecture a;
  a.kind = parse_gnn_kind(j.at("kind").get<std::string>());
  a.hidden_dim = j.at("D").get<int>();
  a.message_dim = j.at("P").get<int>();
  a.steps = j.at("T").get<int>();
  a.mlp_widths = j.at("mlp_widths").get<std::vector<int>>();
  a.validate();
  return a;
}

namespace {

struct Layer {
  std::string weight, bias;
  std::size_t fan_in, fan_out;
};

std::vector<Layer> mlp_layers(const std::string& prefix, int in, const std::vector<int>& widths, int out) {
  std::vector<Layer> layers;
  std::vector<int> dims{in};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(out);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    layers.push_back({prefix + ".W" + std::to_string(l), prefix + ".b" + std::to_string(l),
                      static_cast<std::size_t>(dims[l]), static_cast<std::size_t>(dims[l + 1])});
  return layers;
}

// Every (weight or bias) tensor of the architecture in canonical order.
std::vector<Layer> all_layers(const GnnArchitecture& a) {
  const auto D = static_cast<std::size_t>(a.hidden_dim);
  const auto P = static_cast<std::size_t>(a.message_dim);
  auto layers = mlp_layers("message", a.message_input_dim(), a.mlp_widths, a.message_dim);
  for (const char* gate : {"z", "r", "c"}) {
    const std::string g(gate);
    layers.push_back({"gru.W_" + g, "", P, D});
    layers.push_back({"gru.U_" + g, "gru.b_" + g, D, D});
  }
  auto readout = mlp_layers("readout", a.hidden_dim, a.mlp_widths, 1);
  layers.insert(layers.end(), readout.begin(), readout.end());
  return layers;
}

GnnWeights make_weights(const GnnArchitecture& arch, Rng* rng) {
  arch.validate();
  GnnWeights w{arch, {}};
  for (const auto& layer : all_layers(arch)) {
    Tensor W(layer.fan_in, layer.fan_out);
    if (rng) {
      const double s = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
      for (double& v : W.values()) v = -s + 2.0 * s * uniform01(*rng);
    }
    w.params.add(layer.weight, std::move(W));
    if (!layer.bias.empty()) w.params.add(layer.bias, Tensor(1, layer.fan_out));
  }
  return w;
}

struct BoundLayer {
  Var W, b;
};

std::vector<BoundLayer> bind_mlp(ad::Tape& tape, const ad::ParamStore& store, const std::string& prefix, std::size_t count) {
  std::vector<BoundLayer> out;
  for (std::size_t l = 0; l < count; ++l)
    out.push_back({tape.param(store, prefix + ".W" + std::to_string(l)), tape.param(store, prefix + ".b" + std::to_string(l))});
  return out;
}

// Hidden layers use ReLU, the output layer is linear.
Var apply_mlp(const std::vector<BoundLayer>& layers, Var x) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = ad::add_bias(ad::matmul(x, layers[l].W), layers[l].b);
    if (l + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

struct BoundGru {
  Var Wz, Uz, bz, Wr, Ur, br, Wc, Uc, bc;
};

// z = σ(x W_z + h U_z + b_z), r = σ(x W_r + h U_r + b_r),
// c = tanh(x W_c + (r ⊙ h) U_c + b_c), h' = (1 − z) ⊙ h + z ⊙ c.
Var apply_gru(const BoundGru& g, Var x, Var h) {
  Var z = ad::sigmoid(ad::add_bias(ad::matmul(x, g.Wz) + ad::matmul(h, g.Uz), g.bz));
  Var r = ad::sigmoid(ad::add_bias(ad::matmul(x, g.Wr) + ad::matmul(h, g.Ur), g.br));
  Var c = ad::tanh(ad::add_bias(ad::matmul(x, g.Wc) + ad::matmul(r * h, g.Uc), g.bc));
  return h + z * (c - h);
}

}  // namespace

GnnWeights init_weights(const GnnArchitecture& arch, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6e6e}));
  return make_weights(arch, &rng);
}

GnnWeights zero_weights(const GnnArchitecture& arch) { return make_weights(arch, nullptr); }

nlohmann::json weights_to_json(const GnnWeights& weights) {
  return nlohmann::json{{"format_version", kFormatVersion},
                        {"architecture", architecture_to_json(weights.arch)},
                        {"tensors", ad::params_to_json(weights.params)}};
}

GnnWeights weights_from_json(const nlohmann::json& j) {
  GnnWeights w = zero_weights(architecture_from_json(j.at("architecture")));
  const auto& tensors = j.at("tensors");
  for (auto& p : w.params) {
    if (!tensors.contains(p.name)) throw std::invalid_argument("weights file: missing tensor '" + p.name + "'");
    Tensor t = ad::tensor_from_json(tensors.at(p.name));
    if (!t.same_shape(p.value))
      throw std::invalid_argument("weights file: tensor '" + p.name + "' has shape " + t.shape_string() + ", expected " +
                                  p.value.shape_string());
    p.value = std::move(t);
  }
  if (tensors.size() != w.params.size()) throw std::invalid_argument("weights file: unexpected extra tensors");
  return w;
}

GnnGraph build_gnn_graph(const BinaryMRF& mrf, GnnKind kind) {
  const auto& g = mrf.topology();
  GnnGraph out;
  out.kind = kind;
  out.num_variables = mrf.num_nodes();
  const std::size_t E = g.num_edges();
  if (kind == GnnKind::node) {
    out.num_nodes = mrf.num_nodes();
    out.features = Tensor(2 * E, GnnArchitecture::kFeatureDim);
    for (std::size_t k = 0; k < E; ++k) {
      const auto [u, v] = g.edges()[k];
      const int src[2] = {u, v}, dst[2] = {v, u};
      for (int d = 0; d < 2; ++d) {
        const std::size_t row = 2 * k + static_cast<std::size_t>(d);
        out.edge_src.push_back(src[d]);
        out.edge_dst.push_back(dst[d]);
        out.features(row, 0) = mrf.coupling(k);
        out.features(row, 1) = mrf.bias(src[d]);
        out.features(row, 2) = mrf.bias(dst[d]);
      }
    }
    for (int i = 0; i < out.num_nodes; ++i) out.readout_target.push_back(i);
    return out;
  }

  out.num_nodes = static_cast<int>(2 * E);
  out.features = Tensor(2 * E, GnnArchitecture::kFeatureDim);
  for (std::size_t k = 0; k < E; ++k) {
    const auto [u, v] = g.edges()[k];
    out.messages.emplace_back(u, v);
    out.messages.emplace_back(v, u);
  }
  // Node of the message travelling along edge k into `receiver`.
  auto node_into = [&](std::size_t k, int receiver) { return static_cast<int>(g.edges()[k].v == receiver ? 2 * k : 2 * k + 1); };
  for (std::size_t node = 0; node < out.messages.size(); ++node) {
    const auto [i, j] = out.messages[node];
    const std::size_t k = node / 2;
    out.features(node, 0) = mrf.coupling(k);
    out.features(node, 1) = mrf.bias(i);
    out.features(node, 2) = mrf.bias(j);
    out.readout_target.push_back(j);
    for (const auto& inc : g.incident(i)) {
      if (inc.neighbor == j) continue;
      out.edge_src.push_back(node_into(inc.edge, i));
      out.edge_dst.push_back(static_cast<int>(node));
    }
  }
  return out;
}

std::vector<double> ForwardTrace::marginals_p1() const {
  const auto& v = predictions.value().values();
  return {v.begin(), v.end()};
}

ForwardTrace forward(const GnnGraph& graph, const GnnWeights& weights, ad::Tape& tape, std::optional<int> steps) {
  const GnnArchitecture& arch = weights.arch;
  arch.validate();
  if (arch.kind != graph.kind)
    throw std::invalid_argument("forward: " + to_string(arch.kind) + " weights applied to a " + to_string(graph.kind) + " graph");
  const int T = steps.value_or(arch.steps);
  if (T < 0) throw std::invalid_argument("forward: negative step count");
  const auto& store = weights.params;
  const std::size_t mlp_depth = arch.mlp_widths.size() + 1;
  const auto message_mlp = bind_mlp(tape, store, "message", mlp_depth);
  const auto readout_mlp = bind_mlp(tape, store, "readout", mlp_depth);
  const BoundGru gru{tape.param(store, "gru.W_z"), tape.param(store, "gru.U_z"), tape.param(store, "gru.b_z"),
                     tape.param(store, "gru.W_r"), tape.param(store, "gru.U_r"), tape.param(store, "gru.b_r"),
                     tape.param(store, "gru.W_c"), tape.param(store, "gru.U_c"), tape.param(store, "gru.b_c")};
  if (static_cast<int>(message_mlp.front().W.rows()) != arch.message_input_dim())
    throw std::invalid_argument("forward: message MLP input width does not match the architecture");

  const auto V = static_cast<std::size_t>(graph.num_nodes);
  const Var features = tape.constant(graph.features);
  Var h = tape.constant(Tensor(V, static_cast<std::size_t>(arch.hidden_dim)));
  ForwardTrace trace;
  trace.states.push_back(h.value());
  for (int t = 0; t < T; ++t) {
    Var incoming;
    if (graph.kind == GnnKind::node) {
      // m_{i→j} = M(h_i, h_j, ε_ij), m_j = Σ_i m_{i→j}
      Var x = ad::concat_cols({ad::gather_rows(h, graph.edge_src), ad::gather_rows(h, graph.edge_dst), features});
      incoming = ad::scatter_add_rows(apply_mlp(message_mlp, x), graph.edge_dst, V);
    } else {
      // m_{i→j} = M(Σ_{k∈N_i\j} h_{k→i}, ε_ij)
      Var summed = ad::scatter_add_rows(ad::gather_rows(h, graph.edge_src), graph.edge_dst, V);
      incoming = apply_mlp(message_mlp, ad::concat_cols({summed, features}));
    }
    h = apply_gru(gru, incoming, h);
    trace.states.push_back(h.value());
  }
  Var readout_in = graph.kind == GnnKind::node
                       ? h
                       : ad::scatter_add_rows(h, graph.readout_target, static_cast<std::size_t>(graph.num_variables));
  trace.logits = apply_mlp(readout_mlp, readout_in);
  trace.predictions = ad::sigmoid(trace.logits);
  return trace;
}

std::vector<double> predict(const GnnWeights& weights, const BinaryMRF& mrf) {
  ad::Tape tape;
  return forward(build_gnn_graph(mrf, weights.arch.kind), weights, tape).marginals_p1();
}

std::vector<StepStats> convergence_trace(const ForwardTrace& trace) {
  std::vector<StepStats> out;
  for (std::size_t t = 1; t < trace.states.size(); ++t) {
    const Tensor& cur = trace.states[t];
    const Tensor& prev = trace.states[t - 1];
    std::vector<double> dist(cur.rows());
    for (std::size_t v = 0; v < cur.rows(); ++v) {
      double s = 0.0;
      for (std::size_t c = 0; c < cur.cols(); ++c) {
        const double d = cur(v, c) - prev(v, c);
        s += d * d;
      }
      dist[v] = std::sqrt(s);
    }
    StepStats st;
    if (!dist.empty()) {
      for (double d : dist) st.mean += d;
      st.mean /= static_cast<double>(dist.size());
      for (double d : dist) st.stddev += (d - st.mean) * (d - st.mean);
      st.stddev = std::sqrt(st.stddev / static_cast<double>(dist.size()));
    }
    out.push_back(st);
  }
  return out;
}

}  // namespace pgmgnn
