#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pgmgnn/autodiff.hpp"
#include "pgmgnn/model.hpp"

namespace pgmgnn {

/// node: one GNN node per variable, edge features carry the couplings.
/// msg: one GNN node per directed BP message.
enum class GnnKind { node, msg };

std::string to_string(GnnKind kind);
GnnKind parse_gnn_kind(const std::string& s);

struct GnnArchitecture {
  GnnKind kind = GnnKind::node;
  int hidden_dim = 5;
  int message_dim = 5;
  int steps = 10;
  std::vector<int> mlp_widths{64, 64};

  /// (J_ij, b_source, b_dest).
  static constexpr int kFeatureDim = 3;

  int message_input_dim() const { return (kind == GnnKind::node ? 2 * hidden_dim : hidden_dim) + kFeatureDim; }
  void validate() const;
  bool operator==(const GnnArchitecture&) const = default;
};

nlohmann::json architecture_to_json(const GnnArchitecture& arch);
GnnArchitecture architecture_from_json(const nlohmann::json& j);

/// Shared parameters: message MLP ("message.*"), GRU ("gru.*") and readout
/// MLP ("readout.*").
struct GnnWeights {
  GnnArchitecture arch;
  ad::ParamStore params;
};

/// Glorot-uniform matrices, zero biases.
GnnWeights init_weights(const GnnArchitecture& arch, std::uint64_t seed);
GnnWeights zero_weights(const GnnArchitecture& arch);

/// Weights file: {format_version, architecture, tensors}.
nlohmann::json weights_to_json(const GnnWeights& weights);
GnnWeights weights_from_json(const nlohmann::json& j);

/// GNN-side graph for one MRF.
///
/// node kind: gnn-node v is variable v; every MRF edge (i, j) yields gnn-edges
/// i→j and j→i, whose feature rows are (J_ij, b_i, b_j) and (J_ij, b_j, b_i).
///
/// msg kind: gnn-node 2k is the message u→v of MRF edge k = (u, v) and 2k+1 is
/// v→u. Node (i→j) carries feature row (J_ij, b_i, b_j) and receives from every
/// (k→i) with k ≠ j. Its state is read out into variable j.
struct GnnGraph {
  GnnKind kind = GnnKind::node;
  int num_variables = 0;
  int num_nodes = 0;
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  ad::Tensor features;  // one row per gnn-edge (node) or per gnn-node (msg)
  std::vector<int> readout_target;
  std::vector<std::pair<int, int>> messages;  // msg kind: (i, j) of each gnn-node

  std::size_t num_edges() const { return edge_src.size(); }
};

GnnGraph build_gnn_graph(const BinaryMRF& mrf, GnnKind kind);

struct ForwardTrace {
  std::vector<ad::Tensor> states;  // h^0 .. h^T, one row per gnn-node
  ad::Var logits;                  // n × 1
  ad::Var predictions;             // n × 1, p̂_i(+1)

  std::vector<double> marginals_p1() const;
};

/// T synchronous rounds of message, aggregate and GRU update from h^0 = 0,
/// then the sigmoid readout. `steps` overrides arch.steps.
ForwardTrace forward(const GnnGraph& graph, const GnnWeights& weights, ad::Tape& tape,
                     std::optional<int> steps = std::nullopt);

/// Convenience: build the graph, run forward on a scratch tape, return p̂(+1).
std::vector<double> predict(const GnnWeights& weights, const BinaryMRF& mrf);

struct StepStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Entry t-1 summarizes ‖h_v^t − h_v^{t−1}‖₂ over gnn-nodes, t = 1..T.
std::vector<StepStats> convergence_trace(const ForwardTrace& trace);

}  // namespace pgmgnn
