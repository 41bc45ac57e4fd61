#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "pgmgnn/model.hpp"

namespace pgmgnn {

/// One normalized message per directed edge. For edge k = (u, v) with u < v,
/// slot 2k holds u→v and slot 2k+1 holds v→u. Entry 0 is x = +1, entry 1 is x = -1.
struct MessageSet {
  std::vector<std::array<double, 2>> messages;

  static MessageSet uniform(const GraphTopology& topology);
  const std::array<double, 2>& operator[](std::size_t d) const { return messages[d]; }
};

struct FixedPointConfig {
  int max_iters = 200;
  double tolerance = 1e-8;
  /// Unset picks 0 on trees and 0.5 on loopy graphs.
  std::optional<double> damping;

  double damping_for(const GraphTopology& topology) const;
  void validate() const;
};

struct BaselineResult {
  std::vector<double> marginals_p1;
  std::vector<int> map_state;  // filled by max-product and by decode()
  bool converged = false;
  int iterations = 0;
  std::vector<double> residuals;  // max absolute change, one entry per iteration
  MessageSet messages;            // final iterate; empty for mean field
};

/// Sum-product BP with synchronous damped updates.
BaselineResult bp_sum_product(const BinaryMRF& mrf, const FixedPointConfig& cfg = {});
/// Same, starting from the given messages instead of uniform ones.
BaselineResult bp_sum_product(const BinaryMRF& mrf, const FixedPointConfig& cfg, const MessageSet& init);

/// Max-product BP (belief revision). map_state is decoded from the
/// max-marginals; marginals_p1 holds the normalized max-marginals.
BaselineResult bp_max_product(const BinaryMRF& mrf, const FixedPointConfig& cfg = {});

/// Naive mean field: m_i <- tanh(b_i + Σ_j J_ij m_j) from m_i = tanh(b_i),
/// p_i(+1) = (1 + m_i) / 2.
BaselineResult mean_field(const BinaryMRF& mrf, const FixedPointConfig& cfg = {});

/// Tree-reweighted sum-product with edge appearance probabilities `rho`
/// aligned with topology().edges(). With rho == 1 everywhere this runs the
/// exact same arithmetic as bp_sum_product.
BaselineResult trbp(const BinaryMRF& mrf, std::span<const double> rho, const FixedPointConfig& cfg = {});

/// rho_ij = (n - 1) / |E| on every edge.
std::vector<double> edge_appearance_uniform(const GraphTopology& topology);

/// Empirical edge frequencies over `count` uniform spanning trees drawn with
/// the Aldous-Broder random walk, clamped below at 1e-3.
std::vector<double> edge_appearance_spanning_trees(const GraphTopology& topology, int count, Rng& rng);

/// x_i = +1 iff p_i(+1) >= 0.5.
std::vector<int> decode_marginals(std::span<const double> marginals_p1);

}  // namespace pgmgnn
