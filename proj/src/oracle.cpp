#include "pgmgnn/oracle.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pgmgnn {

double unnormalized_log_prob(const BinaryMRF& mrf, std::span<const int> x) {
  const int n = mrf.num_nodes();
  if (x.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("unnormalized_log_prob: state has " + std::to_string(x.size()) +
                                " entries, model has " + std::to_string(n));
  double score = 0.0;
  for (int i = 0; i < n; ++i) {
    if (x[i] != 1 && x[i] != -1)
      throw std::invalid_argument("unnormalized_log_prob: entry " + std::to_string(i) + " is " +
                                  std::to_string(x[i]) + ", expected +1 or -1");
    score += mrf.bias(i) * x[i];
  }
  const auto& edges = mrf.topology().edges();
  for (std::size_t k = 0; k < edges.size(); ++k) score += mrf.coupling(k) * (x[edges[k].u] * x[edges[k].v]);
  return score;
}

namespace {

// Spin of node i in state index s: bit (n-1-i) clear means +1.
inline int spin(std::uint32_t s, int i, int n) { return ((s >> (n - 1 - i)) & 1U) ? -1 : 1; }

}  // namespace

OracleResult enumerate(const BinaryMRF& mrf, int max_nodes) {
  const int n = mrf.num_nodes();
  if (n > max_nodes)
    throw std::runtime_error("enumerate: n=" + std::to_string(n) + " exceeds the enumeration cap of " +
                             std::to_string(max_nodes));
  if (n > 30) throw std::runtime_error("enumerate: n=" + std::to_string(n) + " is beyond 32-bit state indexing");

  const std::uint32_t count = 1U << n;
  const std::uint32_t mask = count - 1;
  const auto& edges = mrf.topology().edges();

  std::vector<double> score(count);
  std::vector<int> x(static_cast<std::size_t>(n));
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t best_state = 0;
  for (std::uint32_t s = 0; s < count; ++s) {
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = spin(s, i, n);
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += mrf.bias(i) * x[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < edges.size(); ++k)
      v += mrf.coupling(k) * (x[static_cast<std::size_t>(edges[k].u)] * x[static_cast<std::size_t>(edges[k].v)]);
    score[s] = v;
    if (v > best) {
      best = v;
      best_state = s;
    }
  }

  std::vector<double> plus(static_cast<std::size_t>(n), 0.0), minus(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  // s ranges over states with node 0 at +1; its complement has node 0 at -1.
  for (std::uint32_t s = 0; s < count / 2; ++s) {
    const std::uint32_t t = mask ^ s;
    const double ws = std::exp(score[s] - best);
    const double wt = std::exp(score[t] - best);
    total += ws + wt;
    for (int i = 0; i < n; ++i) {
      if (spin(s, i, n) == 1) {
        plus[static_cast<std::size_t>(i)] += ws;
        minus[static_cast<std::size_t>(i)] += wt;
      } else {
        plus[static_cast<std::size_t>(i)] += wt;
        minus[static_cast<std::size_t>(i)] += ws;
      }
    }
  }

  OracleResult out;
  out.log_z = best + std::log(total);
  out.marginals_p1.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < out.marginals_p1.size(); ++i) out.marginals_p1[i] = plus[i] / (plus[i] + minus[i]);
  out.map_state.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.map_state[static_cast<std::size_t>(i)] = spin(best_state, i, n);
  out.map_log_score = best;
  return out;
}

}  // namespace pgmgnn
