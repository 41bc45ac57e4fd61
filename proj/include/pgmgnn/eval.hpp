#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgmgnn/dataset.hpp"
#include "pgmgnn/gnn.hpp"
#include "pgmgnn/inference.hpp"

namespace pgmgnn {

/// Generalization grid: {structured, random} × {n = 9, n = 16}.
enum class ConditionId { I, II, III, IV };

std::string to_string(ConditionId id);
ConditionId parse_condition(const std::string& s);

struct Condition {
  ConditionId id = ConditionId::I;
  int n = 9;
  bool structured = true;
  std::vector<ClassicKind> structures;  // structured conditions
  std::vector<double> edge_probs;       // random conditions
  int models_per_cell = 100;

  static Condition make(ConditionId id, int models_per_cell = 100);
  std::size_t num_cells() const { return structured ? structures.size() : edge_probs.size(); }
};

struct Cell {
  std::string name;
  std::vector<LabeledModel> models;
};

/// Model m of cell c is drawn from derive_seed(seed, {condition, c, m}); random
/// conditions draw a fresh connected G(n, q) per model.
std::vector<Cell> generate_condition(const Condition& cond, std::uint64_t seed);

enum class Method { oracle, mf, bp, trbp, msg_gnn, node_gnn };

std::string to_string(Method m);
Method parse_method(const std::string& s);
const std::vector<Method>& all_methods();

inline constexpr double kPredictionClamp = 1e-7;

/// KL between Bernoulli(p) and Bernoulli(p̂), with p̂ clamped to [1e-7, 1 − 1e-7].
double kl_per_node(double p, double p_hat);

struct CellMetrics {
  double mean_kl = 0.0;
  double std_kl = 0.0;
  double map_var_acc = 0.0;
  double map_state_acc = 0.0;
  int n_models = 0;
  int n_failures = 0;
  int n_unconverged = 0;  // fixed-point runs that hit the iteration cap; still scored
};

struct MarginalEstimate {
  std::vector<double> marginals_p1;
  bool converged = true;
};

using MarginalMethod = std::function<MarginalEstimate(const LabeledModel&)>;
using MapMethod = std::function<std::vector<int>(const LabeledModel&)>;

/// Per-node KL averaged over nodes, then mean/std over models. Models on which
/// the method throws count as failures and are left out of the averages.
CellMetrics eval_marginals(const MarginalMethod& method, const std::vector<LabeledModel>& models);
/// Fraction of variables and of whole states matching the exact MAP.
CellMetrics eval_map(const MapMethod& method, const std::vector<LabeledModel>& models);

struct Checkpoints {
  std::optional<GnnWeights> node;
  std::optional<GnnWeights> msg;
};

struct BaselineOptions {
  FixedPointConfig fixed_point;
};

MarginalMethod marginal_method(Method m, const Checkpoints& ckpt, const BaselineOptions& opts = {});
/// BP decodes with max-product; MF, TRBP and the GNNs threshold their marginals at 0.5.
MapMethod map_method(Method m, const Checkpoints& ckpt, const BaselineOptions& opts = {});

struct ReportRow {
  std::string condition;
  std::string cell;
  std::string method;
  double mean_kl = 0.0;
  double std_kl = 0.0;
  double map_var_acc = 0.0;
  double map_state_acc = 0.0;
  int n_models = 0;
  int n_failures = 0;
  int n_unconverged = 0;  // JSON only
  bool operator==(const ReportRow&) const = default;
};

struct TracePoint {
  std::string condition;
  int step = 0;
  double mean = 0.0;
  double stddev = 0.0;
  bool operator==(const TracePoint&) const = default;
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  std::vector<TracePoint> trace;
  nlohmann::json manifest = nlohmann::json::object();

  const ReportRow* find(const std::string& cell, const std::string& method) const;
  bool operator==(const MetricsReport&) const = default;
};

MetricsReport run_condition(const Condition& cond, const std::vector<Method>& methods, const Checkpoints& ckpt,
                            std::uint64_t seed, const BaselineOptions& opts = {});
/// Same, on an already generated model set.
MetricsReport run_condition(const Condition& cond, const std::vector<Cell>& cells, const std::vector<Method>& methods,
                            const Checkpoints& ckpt, std::uint64_t seed, const BaselineOptions& opts = {});

/// ‖Δh_v^t‖ pooled over all gnn-nodes of all models, for t = 2..T_max. The
/// first step is left out: it only measures the distance from the zero
/// initial state.
std::vector<TracePoint> trace_convergence(const GnnWeights& weights, const std::vector<LabeledModel>& models, int t_max,
                                          const std::string& condition = "");

std::string report_csv(const MetricsReport& report);
std::string trace_csv(const std::vector<TracePoint>& trace);
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// Writes <dir>/report.csv, <dir>/report.json and, when present, <dir>/trace.csv.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);

/// Fingerprint of a weights file for run manifests.
std::string weights_hash(const GnnWeights& weights);

}  // namespace pgmgnn
