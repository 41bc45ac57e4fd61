#include "pgmgnn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pgmgnn {

namespace {

constexpr double kMessageFloor = 1e-300;
constexpr double kSpin[2] = {1.0, -1.0};

// Slot of the message travelling along edge k into `receiver`.
inline std::size_t slot_into(const GraphTopology& g, std::size_t k, int receiver) {
  return g.edges()[k].v == receiver ? 2 * k : 2 * k + 1;
}

inline double log_add(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline std::array<double, 2> normalize_log(double l0, double l1) {
  const double m = std::max(l0, l1);
  const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

enum class Semiring { sum, max };

// Log of b_i(x_i) ∝ exp(b_i x_i) Π_k μ_ki(x_i)^{ρ_ki}.
std::array<double, 2> log_belief(const BinaryMRF& mrf, std::span<const double> rho, const MessageSet& msgs, int i) {
  const auto& g = mrf.topology();
  std::array<double, 2> lb{};
  for (int s = 0; s < 2; ++s) {
    double acc = mrf.bias(i) * kSpin[s];
    for (const auto& inc : g.incident(i)) acc += rho[inc.edge] * std::log(msgs[slot_into(g, inc.edge, i)][s]);
    lb[s] = acc;
  }
  return lb;
}

// Shared synchronous message-passing engine. Sum-product BP is the ρ ≡ 1 case
// of the tree-reweighted update
//   μ_ij(x_j) ∝ Σ_{x_i} exp(J_ij x_i x_j / ρ_ij + b_i x_i) Π_{k∈N_i\j} μ_ki(x_i)^{ρ_ki} / μ_ji(x_i)^{1-ρ_ij},
// and max-product replaces the sum by a max.
BaselineResult run_messages(const BinaryMRF& mrf, std::span<const double> rho, Semiring semiring,
                            const FixedPointConfig& cfg, MessageSet msgs) {
  cfg.validate();
  const auto& g = mrf.topology();
  const double damping = cfg.damping_for(g);
  const std::size_t num_messages = 2 * g.num_edges();
  if (msgs.messages.size() != num_messages) throw std::invalid_argument("message set does not match topology");

  BaselineResult out;
  MessageSet next = msgs;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    double residual = 0.0;
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
      for (int dir = 0; dir < 2; ++dir) {
        const int sender = dir == 0 ? g.edges()[k].u : g.edges()[k].v;
        const int receiver = dir == 0 ? g.edges()[k].v : g.edges()[k].u;
        const std::size_t d = 2 * k + static_cast<std::size_t>(dir);
        const std::size_t reverse = 2 * k + static_cast<std::size_t>(1 - dir);

        std::array<double, 2> log_pre{};
        for (int s = 0; s < 2; ++s) {
          double acc = mrf.bias(sender) * kSpin[s];
          for (const auto& inc : g.incident(sender)) {
            if (inc.neighbor == receiver) continue;
            acc += rho[inc.edge] * std::log(msgs[slot_into(g, inc.edge, sender)][s]);
          }
          if (rho[k] != 1.0) acc += (rho[k] - 1.0) * std::log(msgs[reverse][s]);
          log_pre[s] = acc;
        }

        const double coupling = mrf.coupling(k) / rho[k];
        std::array<double, 2> log_msg{};
        for (int t = 0; t < 2; ++t) {
          const double a = coupling * kSpin[0] * kSpin[t] + log_pre[0];
          const double b = coupling * kSpin[1] * kSpin[t] + log_pre[1];
          log_msg[t] = semiring == Semiring::sum ? log_add(a, b) : std::max(a, b);
        }
        const auto fresh = normalize_log(log_msg[0], log_msg[1]);

        std::array<double, 2> v{};
        for (int t = 0; t < 2; ++t) v[t] = (1.0 - damping) * fresh[t] + damping * msgs[d][t];
        const double sum = v[0] + v[1];
        for (int t = 0; t < 2; ++t) {
          v[t] = std::max(v[t] / sum, kMessageFloor);
          if (!std::isfinite(v[t]))
            throw std::runtime_error("message passing: non-finite message at iteration " + std::to_string(iter));
          residual = std::max(residual, std::abs(v[t] - msgs[d][t]));
        }
        next.messages[d] = v;
      }
    }
    std::swap(msgs, next);
    out.residuals.push_back(residual);
    out.iterations = iter;
    if (residual < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (out.residuals.empty()) out.residuals.push_back(0.0);

  const int n = mrf.num_nodes();
  out.marginals_p1.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto lb = log_belief(mrf, rho, msgs, i);
    out.marginals_p1[static_cast<std::size_t>(i)] = normalize_log(lb[0], lb[1])[0];
  }
  out.messages = std::move(msgs);
  return out;
}

// Sequential decoding from max-product messages: nodes are fixed in BFS order
// and each choice conditions on already-decoded neighbors, with messages
// standing in for the undecoded ones. On a tree with exact messages this
// yields a MAP state even when max-marginals are tied; ties go to +1.
std::vector<int> decode_max_product(const BinaryMRF& mrf, const MessageSet& msgs) {
  const auto& g = mrf.topology();
  const int n = mrf.num_nodes();
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  std::vector<char> queued(static_cast<std::size_t>(n), 0);
  std::vector<int> order;
  for (int root = 0; root < n; ++root) {
    if (queued[static_cast<std::size_t>(root)]) continue;
    queued[static_cast<std::size_t>(root)] = 1;
    std::size_t head = order.size();
    order.push_back(root);
    while (head < order.size()) {
      const int u = order[head++];
      for (const auto& inc : g.incident(u)) {
        if (!queued[static_cast<std::size_t>(inc.neighbor)]) {
          queued[static_cast<std::size_t>(inc.neighbor)] = 1;
          order.push_back(inc.neighbor);
        }
      }
    }
  }
  for (int i : order) {
    double score[2];
    for (int s = 0; s < 2; ++s) {
      double acc = mrf.bias(i) * kSpin[s];
      for (const auto& inc : g.incident(i)) {
        const int x = state[static_cast<std::size_t>(inc.neighbor)];
        if (x != 0)
          acc += mrf.coupling(inc.edge) * kSpin[s] * x;
        else
          acc += std::log(msgs[slot_into(g, inc.edge, i)][s]);
      }
      score[s] = acc;
    }
    state[static_cast<std::size_t>(i)] = score[0] >= score[1] ? 1 : -1;
  }
  return state;
}

}  // namespace

MessageSet MessageSet::uniform(const GraphTopology& topology) {
  MessageSet m;
  m.messages.assign(2 * topology.num_edges(), {0.5, 0.5});
  return m;
}

double FixedPointConfig::damping_for(const GraphTopology& topology) const {
  if (damping) return *damping;
  return topology.cyclomatic_number() == 0 ? 0.0 : 0.5;
}

void FixedPointConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("FixedPointConfig: max_iters must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("FixedPointConfig: tolerance must be > 0");
  if (damping && !(*damping >= 0.0 && *damping < 1.0))
    throw std::invalid_argument("FixedPointConfig: damping must lie in [0, 1)");
}

BaselineResult bp_sum_product(const BinaryMRF& mrf, const FixedPointConfig& cfg) {
  return bp_sum_product(mrf, cfg, MessageSet::uniform(mrf.topology()));
}

BaselineResult bp_sum_product(const BinaryMRF& mrf, const FixedPointConfig& cfg, const MessageSet& init) {
  const std::vector<double> ones(mrf.topology().num_edges(), 1.0);
  return run_messages(mrf, ones, Semiring::sum, cfg, init);
}

BaselineResult bp_max_product(const BinaryMRF& mrf, const FixedPointConfig& cfg) {
  const std::vector<double> ones(mrf.topology().num_edges(), 1.0);
  BaselineResult r = run_messages(mrf, ones, Semiring::max, cfg, MessageSet::uniform(mrf.topology()));
  r.map_state = decode_max_product(mrf, r.messages);
  return r;
}

BaselineResult trbp(const BinaryMRF& mrf, std::span<const double> rho, const FixedPointConfig& cfg) {
  if (rho.size() != mrf.topology().num_edges())
    throw std::invalid_argument("trbp: " + std::to_string(rho.size()) + " edge weights for " +
                                std::to_string(mrf.topology().num_edges()) + " edges");
  for (double r : rho)
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("trbp: edge appearance probability " + std::to_string(r) +
                                                             " outside (0, 1]");
  return run_messages(mrf, rho, Semiring::sum, cfg, MessageSet::uniform(mrf.topology()));
}

BaselineResult mean_field(const BinaryMRF& mrf, const FixedPointConfig& cfg) {
  cfg.validate();
  const auto& g = mrf.topology();
  const int n = mrf.num_nodes();
  const double damping = cfg.damping_for(g);
  // Start from the uncoupled solution, so J = 0 is exact from the first sweep.
  std::vector<double> m(static_cast<std::size_t>(n)), next(m.size());
  for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = std::tanh(mrf.bias(i));
  BaselineResult out;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    double residual = 0.0;
    for (int i = 0; i < n; ++i) {
      double field = mrf.bias(i);
      for (const auto& inc : g.incident(i)) field += mrf.coupling(inc.edge) * m[static_cast<std::size_t>(inc.neighbor)];
      const double old = m[static_cast<std::size_t>(i)];
      const double v = (1.0 - damping) * std::tanh(field) + damping * old;
      if (!std::isfinite(v)) throw std::runtime_error("mean_field: non-finite magnetization at iteration " + std::to_string(iter));
      next[static_cast<std::size_t>(i)] = v;
      residual = std::max(residual, std::abs(v - old));
    }
    std::swap(m, next);
    out.residuals.push_back(residual);
    out.iterations = iter;
    if (residual < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.marginals_p1.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out.marginals_p1[i] = 0.5 * (1.0 + m[i]);
  return out;
}

std::vector<double> edge_appearance_uniform(const GraphTopology& topology) {
  if (!topology.is_connected()) throw std::invalid_argument("edge_appearance_uniform: topology is disconnected");
  if (topology.num_edges() == 0) return {};
  const double r = static_cast<double>(topology.num_nodes() - 1) / static_cast<double>(topology.num_edges());
  return std::vector<double>(topology.num_edges(), r);
}

std::vector<double> edge_appearance_spanning_trees(const GraphTopology& topology, int count, Rng& rng) {
  if (!topology.is_connected()) throw std::invalid_argument("edge_appearance_spanning_trees: topology is disconnected");
  if (count < 1) throw std::invalid_argument("edge_appearance_spanning_trees: count must be >= 1");
  const int n = topology.num_nodes();
  std::vector<double> freq(topology.num_edges(), 0.0);
  std::vector<char> visited(static_cast<std::size_t>(n));
  for (int t = 0; t < count; ++t) {
    std::fill(visited.begin(), visited.end(), 0);
    int current = std::uniform_int_distribution<int>(0, n - 1)(rng);
    visited[static_cast<std::size_t>(current)] = 1;
    int remaining = n - 1;
    while (remaining > 0) {
      const auto& inc = topology.incident(current);
      const auto& step = inc[std::uniform_int_distribution<std::size_t>(0, inc.size() - 1)(rng)];
      if (!visited[static_cast<std::size_t>(step.neighbor)]) {
        visited[static_cast<std::size_t>(step.neighbor)] = 1;
        freq[step.edge] += 1.0;
        --remaining;
      }
      current = step.neighbor;
    }
  }
  for (auto& f : freq) f = std::max(f / count, 1e-3);
  return freq;
}

std::vector<int> decode_marginals(std::span<const double> marginals_p1) {
  std::vector<int> x(marginals_p1.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = marginals_p1[i] >= 0.5 ? 1 : -1;
  return x;
}

}  // namespace pgmgnn
