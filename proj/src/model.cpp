#include "pgmgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace pgmgnn {

GraphTopology::GraphTopology(int n, std::vector<Edge> edges) : n_(n) {
  if (n < 1) throw std::invalid_argument("GraphTopology: node count must be >= 1, got " + std::to_string(n));
  for (auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw std::invalid_argument("GraphTopology: edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                  ") out of range for n=" + std::to_string(n));
    if (e.u == e.v) throw std::invalid_argument("GraphTopology: self-loop on node " + std::to_string(e.u));
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw std::invalid_argument("GraphTopology: duplicate edge");
  edges_ = std::move(edges);
  adjacency_.assign(static_cast<std::size_t>(n), {});
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    adjacency_[static_cast<std::size_t>(edges_[k].u)].push_back({edges_[k].v, k});
    adjacency_[static_cast<std::size_t>(edges_[k].v)].push_back({edges_[k].u, k});
  }
  for (auto& list : adjacency_)
    std::sort(list.begin(), list.end(), [](const Incidence& a, const Incidence& b) { return a.neighbor < b.neighbor; });
}

std::optional<std::size_t> GraphTopology::edge_index(int i, int j) const {
  Edge key{std::min(i, j), std::max(i, j)};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - edges_.begin());
}

int GraphTopology::num_components() const {
  std::vector<char> seen(static_cast<std::size_t>(n_), 0);
  std::vector<int> stack;
  int components = 0;
  for (int s = 0; s < n_; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++components;
    seen[static_cast<std::size_t>(s)] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (const auto& inc : incident(u)) {
        if (!seen[static_cast<std::size_t>(inc.neighbor)]) {
          seen[static_cast<std::size_t>(inc.neighbor)] = 1;
          stack.push_back(inc.neighbor);
        }
      }
    }
  }
  return components;
}

bool GraphTopology::is_connected() const { return n_ >= 1 && num_components() == 1; }

int GraphTopology::cyclomatic_number() const {
  return static_cast<int>(edges_.size()) - n_ + num_components();
}

const std::vector<ClassicKind>& classic_kinds() {
  static const std::vector<ClassicKind> kinds = {
      ClassicKind::chain,     ClassicKind::star,      ClassicKind::binary_tree, ClassicKind::cycle,
      ClassicKind::ladder,    ClassicKind::grid,      ClassicKind::barbell,     ClassicKind::wheel,
      ClassicKind::random_25, ClassicKind::random_45, ClassicKind::random_65,   ClassicKind::random_85,
      ClassicKind::complete,
  };
  return kinds;
}

namespace {

const std::map<ClassicKind, std::string>& kind_names() {
  static const std::map<ClassicKind, std::string> names = {
      {ClassicKind::chain, "chain"},         {ClassicKind::star, "star"},
      {ClassicKind::binary_tree, "binary_tree"}, {ClassicKind::cycle, "cycle"},
      {ClassicKind::ladder, "ladder"},       {ClassicKind::grid, "grid"},
      {ClassicKind::barbell, "barbell"},     {ClassicKind::wheel, "wheel"},
      {ClassicKind::random_25, "random_25"}, {ClassicKind::random_45, "random_45"},
      {ClassicKind::random_65, "random_65"}, {ClassicKind::random_85, "random_85"},
      {ClassicKind::complete, "complete"},
  };
  return names;
}

[[noreturn]] void construction_error(ClassicKind kind, int n, const std::string& why) {
  throw std::invalid_argument("build_topology: cannot build " + kind_names().at(kind) + " on n=" +
                              std::to_string(n) + ": " + why);
}

// Path 0-1-...-(n-1) plus each remaining pair with probability `density`,
// drawn from a generator seeded only by (template id, n).
std::vector<Edge> random_template(int n, double density, std::uint64_t template_id) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  Rng rng(derive_seed(0x7e3a1c55ULL, {template_id, static_cast<std::uint64_t>(n)}));
  for (int i = 0; i < n; ++i)
    for (int j = i + 2; j < n; ++j)
      if (uniform01(rng) < density) edges.push_back({i, j});
  return edges;
}

}  // namespace

std::string structure_name(const StructureKind& kind) {
  if (const auto* c = std::get_if<ClassicKind>(&kind)) return kind_names().at(*c);
  char buf[32];
  std::snprintf(buf, sizeof buf, "er_q%.2f", std::get<ErdosRenyi>(kind).q);
  return buf;
}

StructureKind parse_structure(const std::string& name) {
  for (const auto& [k, s] : kind_names())
    if (s == name) return k;
  if (name.rfind("er_q", 0) == 0) {
    try {
      return ErdosRenyi{std::stod(name.substr(4))};
    } catch (const std::logic_error&) {
    }
  }
  throw std::invalid_argument("unknown structure name '" + name + "'");
}

GraphTopology build_topology(ClassicKind kind, int n) {
  if (n < 2) construction_error(kind, n, "need at least 2 nodes");
  std::vector<Edge> edges;
  switch (kind) {
    case ClassicKind::chain:
      for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
      break;
    case ClassicKind::star:
      for (int i = 1; i < n; ++i) edges.push_back({0, i});
      break;
    case ClassicKind::binary_tree:
      for (int i = 1; i < n; ++i) edges.push_back({(i - 1) / 2, i});
      break;
    case ClassicKind::cycle:
      if (n < 3) construction_error(kind, n, "a cycle needs at least 3 nodes");
      for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
      break;
    case ClassicKind::ladder:
      // Rails on even and odd nodes, rungs (2k, 2k+1). Odd n leaves node n-1
      // as a pendant on the even rail.
      if (n < 4) construction_error(kind, n, "a ladder needs at least 4 nodes");
      for (int i = 0; i + 2 < n; ++i) edges.push_back({i, i + 2});
      for (int i = 0; i + 1 < n; i += 2) edges.push_back({i, i + 1});
      break;
    case ClassicKind::grid: {
      int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
      if (side * side != n) construction_error(kind, n, "grid requires a perfect-square node count");
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          int v = r * side + c;
          if (c + 1 < side) edges.push_back({v, v + 1});
          if (r + 1 < side) edges.push_back({v, v + side});
        }
      break;
    }
    case ClassicKind::barbell: {
      // Two cliques of size (n-1)/2 joined through the one or two leftover nodes.
      if (n < 5) construction_error(kind, n, "a barbell needs at least 5 nodes");
      int k = (n - 1) / 2;
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
          edges.push_back({i, j});
          edges.push_back({n - k + i, n - k + j});
        }
      for (int i = k - 1; i < n - k; ++i) edges.push_back({i, i + 1});
      break;
    }
    case ClassicKind::wheel:
      if (n < 4) construction_error(kind, n, "a wheel needs at least 4 nodes");
      for (int i = 1; i < n; ++i) {
        edges.push_back({0, i});
        edges.push_back({i, i + 1 < n ? i + 1 : 1});
      }
      break;
    case ClassicKind::random_25:
      edges = random_template(n, 0.25, 25);
      break;
    case ClassicKind::random_45:
      edges = random_template(n, 0.45, 45);
      break;
    case ClassicKind::random_65:
      edges = random_template(n, 0.65, 65);
      break;
    case ClassicKind::random_85:
      edges = random_template(n, 0.85, 85);
      break;
    case ClassicKind::complete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
      break;
  }
  return GraphTopology(n, std::move(edges));
}

GraphTopology sample_erdos_renyi_connected(int n, double q, Rng& rng, int max_retries) {
  if (n < 2) throw std::invalid_argument("sample_erdos_renyi_connected: n must be >= 2");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("sample_erdos_renyi_connected: q must lie in (0, 1]");
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (uniform01(rng) < q) edges.push_back({i, j});
    GraphTopology g(n, std::move(edges));
    if (g.is_connected()) return g;
  }
  throw std::runtime_error("sample_erdos_renyi_connected: no connected G(n=" + std::to_string(n) +
                           ", q=" + std::to_string(q) + ") within " + std::to_string(max_retries) + " draws");
}

BinaryMRF::BinaryMRF(GraphTopology topology, std::vector<double> couplings, std::vector<double> biases)
    : topology_(std::move(topology)), couplings_(std::move(couplings)), biases_(std::move(biases)) {
  if (couplings_.size() != topology_.num_edges())
    throw std::invalid_argument("BinaryMRF: " + std::to_string(couplings_.size()) + " couplings for " +
                                std::to_string(topology_.num_edges()) + " edges");
  if (biases_.size() != static_cast<std::size_t>(topology_.num_nodes()))
    throw std::invalid_argument("BinaryMRF: " + std::to_string(biases_.size()) + " biases for " +
                                std::to_string(topology_.num_nodes()) + " nodes");
  for (double v : couplings_)
    if (!std::isfinite(v)) throw std::invalid_argument("BinaryMRF: non-finite coupling");
  for (double v : biases_)
    if (!std::isfinite(v)) throw std::invalid_argument("BinaryMRF: non-finite bias");
}

BinaryMRF sample_mrf(const GraphTopology& topology, Rng& rng) {
  std::normal_distribution<double> coupling(0.0, kCouplingStd);
  std::normal_distribution<double> bias(0.0, kBiasStd);
  std::vector<double> J(topology.num_edges());
  for (auto& v : J) v = coupling(rng);
  std::vector<double> b(static_cast<std::size_t>(topology.num_nodes()));
  for (auto& v : b) v = bias(rng);
  return BinaryMRF(topology, std::move(J), std::move(b));
}

BinaryMRF relabel(const BinaryMRF& mrf, std::span<const int> perm) {
  const int n = mrf.num_nodes();
  if (perm.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("relabel: permutation size mismatch");
  std::vector<char> hit(static_cast<std::size_t>(n), 0);
  for (int p : perm) {
    if (p < 0 || p >= n || hit[static_cast<std::size_t>(p)]) throw std::invalid_argument("relabel: not a permutation");
    hit[static_cast<std::size_t>(p)] = 1;
  }
  std::vector<Edge> edges;
  for (const auto& e : mrf.topology().edges()) edges.push_back({perm[e.u], perm[e.v]});
  GraphTopology topo(n, edges);
  std::vector<double> J(topo.num_edges());
  for (std::size_t k = 0; k < edges.size(); ++k) J[*topo.edge_index(edges[k].u, edges[k].v)] = mrf.coupling(k);
  std::vector<double> b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(perm[i])] = mrf.bias(i);
  return BinaryMRF(std::move(topo), std::move(J), std::move(b));
}

}  // namespace pgmgnn
