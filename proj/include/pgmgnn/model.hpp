#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pgmgnn/rng.hpp"

namespace pgmgnn {

/// Unordered edge stored canonically with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

struct Incidence {
  int neighbor;
  std::size_t edge;
};

/// Undirected simple graph on nodes [0, n). Edges are canonicalized to
/// (min, max) and sorted; duplicates and self-loops are rejected.
class GraphTopology {
 public:
  GraphTopology() = default;
  GraphTopology(int n, std::vector<Edge> edges);

  int num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Incidence>& incident(int i) const { return adjacency_.at(static_cast<std::size_t>(i)); }
  std::size_t degree(int i) const { return incident(i).size(); }
  std::optional<std::size_t> edge_index(int i, int j) const;

  bool is_connected() const;
  bool is_tree() const { return is_connected() && num_edges() + 1 == static_cast<std::size_t>(n_); }
  /// Number of independent cycles, |E| - n + (#components).
  int cyclomatic_number() const;
  int num_components() const;

  bool operator==(const GraphTopology& other) const { return n_ == other.n_ && edges_ == other.edges_; }

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

enum class ClassicKind {
  chain,
  star,
  binary_tree,
  cycle,
  ladder,
  grid,
  barbell,
  wheel,
  random_25,
  random_45,
  random_65,
  random_85,
  complete,
};

/// The 13 training structures, ordered from trees to the complete graph.
const std::vector<ClassicKind>& classic_kinds();

struct ErdosRenyi {
  double q = 0.5;
  bool operator==(const ErdosRenyi&) const = default;
};

using StructureKind = std::variant<ClassicKind, ErdosRenyi>;

std::string structure_name(const StructureKind& kind);
/// Inverse of structure_name for classic kinds and "er_q<q>".
StructureKind parse_structure(const std::string& name);

/// Deterministic topology of the given family on n nodes.
GraphTopology build_topology(ClassicKind kind, int n);

inline constexpr int kDefaultErdosRenyiRetries = 10'000;

/// G(n, q) conditioned on connectivity by rejection sampling.
GraphTopology sample_erdos_renyi_connected(int n, double q, Rng& rng, int max_retries = kDefaultErdosRenyiRetries);

/// Binary pairwise MRF p(x) ∝ exp(b·x + Σ_{(i,j)∈E} J_ij x_i x_j), x ∈ {+1,-1}^n.
/// Couplings are aligned with topology().edges().
class BinaryMRF {
 public:
  BinaryMRF() = default;
  BinaryMRF(GraphTopology topology, std::vector<double> couplings, std::vector<double> biases);

  const GraphTopology& topology() const { return topology_; }
  int num_nodes() const { return topology_.num_nodes(); }
  const std::vector<double>& couplings() const { return couplings_; }
  const std::vector<double>& biases() const { return biases_; }
  double coupling(std::size_t edge) const { return couplings_[edge]; }
  double bias(int i) const { return biases_[static_cast<std::size_t>(i)]; }

  bool operator==(const BinaryMRF&) const = default;

 private:
  GraphTopology topology_;
  std::vector<double> couplings_;
  std::vector<double> biases_;
};

inline constexpr double kCouplingStd = 1.0;
inline constexpr double kBiasStd = 0.25;

/// J_ij ~ N(0, 1) per edge, b_i ~ N(0, 1/16).
BinaryMRF sample_mrf(const GraphTopology& topology, Rng& rng);

/// Relabels variables: node i of `mrf` becomes node perm[i].
BinaryMRF relabel(const BinaryMRF& mrf, std::span<const int> perm);

}  // namespace pgmgnn
