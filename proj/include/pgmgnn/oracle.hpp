#pragma once

#include <span>
#include <vector>

#include "pgmgnn/model.hpp"

namespace pgmgnn {

inline constexpr int kDefaultEnumerationCap = 20;

struct OracleResult {
  double log_z = 0.0;
  std::vector<double> marginals_p1;  // p_i(x_i = +1)
  std::vector<int> map_state;        // entries in {+1, -1}
  double map_log_score = 0.0;
};

/// b·x + Σ_{(i,j)∈E} J_ij x_i x_j. Each unordered edge counts once.
double unnormalized_log_prob(const BinaryMRF& mrf, std::span<const int> x);

/// Exact inference by summing over all 2^n states.
///
/// States are visited in lexicographic order with +1 before -1 (node 0 most
/// significant), and the first maximizer wins, so MAP ties resolve to the
/// lexicographically smallest state. Weights are accumulated in complementary
/// pairs (x, -x): when b = 0 the +1 and -1 masses of every node are summed from
/// bitwise identical terms and the marginals come out exactly 0.5.
///
/// Throws std::runtime_error if n exceeds `max_nodes`.
OracleResult enumerate(const BinaryMRF& mrf, int max_nodes = kDefaultEnumerationCap);

}  // namespace pgmgnn
