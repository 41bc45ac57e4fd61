#include "pgmgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pgmgnn {

std::string to_string(ConditionId id) {
  switch (id) {
    case ConditionId::I: return "I";
    case ConditionId::II: return "II";
    case ConditionId::III: return "III";
    case ConditionId::IV: return "IV";
  }
  return "?";
}

ConditionId parse_condition(const std::string& s) {
  if (s == "I") return ConditionId::I;
  if (s == "II") return ConditionId::II;
  if (s == "III") return ConditionId::III;
  if (s == "IV") return ConditionId::IV;
  throw std::invalid_argument("unknown condition '" + s + "' (expected I, II, III or IV)");
}

Condition Condition::make(ConditionId id, int models_per_cell) {
  if (models_per_cell < 1) throw std::invalid_argument("Condition: models per cell must be >= 1");
  Condition c;
  c.id = id;
  c.n = (id == ConditionId::I || id == ConditionId::III) ? 9 : 16;
  c.structured = id == ConditionId::I || id == ConditionId::II;
  if (c.structured)
    c.structures = classic_kinds();
  else
    c.edge_probs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  c.models_per_cell = models_per_cell;
  return c;
}

std::vector<Cell> generate_condition(const Condition& cond, std::uint64_t seed) {
  std::vector<Cell> cells;
  const auto cid = static_cast<std::uint64_t>(cond.id) + 1;
  for (std::size_t c = 0; c < cond.num_cells(); ++c) {
    Cell cell;
    const StructureKind kind = cond.structured ? StructureKind{cond.structures[c]} : StructureKind{ErdosRenyi{cond.edge_probs[c]}};
    cell.name = structure_name(kind);
    std::optional<GraphTopology> fixed;
    if (cond.structured) fixed = build_topology(cond.structures[c], cond.n);
    for (int m = 0; m < cond.models_per_cell; ++m) {
      Rng rng(derive_seed(seed, {cid, c, static_cast<std::uint64_t>(m)}));
      const GraphTopology topo = fixed ? *fixed : sample_erdos_renyi_connected(cond.n, cond.edge_probs[c], rng);
      cell.models.push_back(label_with_oracle(cell.name, sample_mrf(topo, rng)));
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::oracle: return "oracle";
    case Method::mf: return "MF";
    case Method::bp: return "BP";
    case Method::trbp: return "TRBP";
    case Method::msg_gnn: return "msg-GNN";
    case Method::node_gnn: return "node-GNN";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : all_methods()) {
    std::string name = to_string(m);
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == name || s == lower) return m;
  }
  throw std::invalid_argument("unknown method '" + s + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::oracle, Method::mf,      Method::bp,
                                              Method::trbp,   Method::msg_gnn, Method::node_gnn};
  return methods;
}

double kl_per_node(double p, double p_hat) {
  const double q = std::clamp(p_hat, kPredictionClamp, 1.0 - kPredictionClamp);
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return std::max(kl, 0.0);
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& stddev) {
  mean = stddev = 0.0;
  if (v.empty()) {
    mean = stddev = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) stddev += (x - mean) * (x - mean);
  stddev = std::sqrt(stddev / static_cast<double>(v.size()));
}

}  // namespace

CellMetrics eval_marginals(const MarginalMethod& method, const std::vector<LabeledModel>& models) {
  CellMetrics out;
  out.n_models = static_cast<int>(models.size());
  std::vector<double> per_model;
  for (const auto& m : models) {
    MarginalEstimate est;
    try {
      est = method(m);
    } catch (const std::exception&) {
      ++out.n_failures;
      continue;
    }
    const auto& p_hat = est.marginals_p1;
    if (p_hat.size() != m.truth.marginals_p1.size()) {
      ++out.n_failures;
      continue;
    }
    out.n_unconverged += !est.converged;
    double s = 0.0;
    for (std::size_t i = 0; i < p_hat.size(); ++i) s += kl_per_node(m.truth.marginals_p1[i], p_hat[i]);
    per_model.push_back(s / static_cast<double>(p_hat.size()));
  }
  mean_std(per_model, out.mean_kl, out.std_kl);
  return out;
}

CellMetrics eval_map(const MapMethod& method, const std::vector<LabeledModel>& models) {
  CellMetrics out;
  out.n_models = static_cast<int>(models.size());
  std::size_t vars = 0, vars_right = 0, states = 0, states_right = 0;
  for (const auto& m : models) {
    std::vector<int> x;
    try {
      x = method(m);
    } catch (const std::exception&) {
      ++out.n_failures;
      continue;
    }
    if (x.size() != m.truth.map_state.size()) {
      ++out.n_failures;
      continue;
    }
    std::size_t right = 0;
    for (std::size_t i = 0; i < x.size(); ++i) right += x[i] == m.truth.map_state[i];
    vars += x.size();
    vars_right += right;
    ++states;
    states_right += right == x.size();
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.map_var_acc = vars ? static_cast<double>(vars_right) / static_cast<double>(vars) : nan;
  out.map_state_acc = states ? static_cast<double>(states_right) / static_cast<double>(states) : nan;
  return out;
}

namespace {

const GnnWeights& require(const std::optional<GnnWeights>& w, GnnKind kind) {
  if (!w) throw std::invalid_argument("no " + to_string(kind) + "-GNN checkpoint supplied");
  if (w->arch.kind != kind)
    throw std::invalid_argument("checkpoint is a " + to_string(w->arch.kind) + "-GNN, expected " + to_string(kind));
  return *w;
}

}  // namespace

MarginalMethod marginal_method(Method m, const Checkpoints& ckpt, const BaselineOptions& opts) {
  const FixedPointConfig cfg = opts.fixed_point;
  switch (m) {
    case Method::oracle:
      return [](const LabeledModel& x) { return MarginalEstimate{x.truth.marginals_p1, true}; };
    case Method::mf:
      return [cfg](const LabeledModel& x) {
        auto r = mean_field(x.mrf, cfg);
        return MarginalEstimate{std::move(r.marginals_p1), r.converged};
      };
    case Method::bp:
      return [cfg](const LabeledModel& x) {
        auto r = bp_sum_product(x.mrf, cfg);
        return MarginalEstimate{std::move(r.marginals_p1), r.converged};
      };
    case Method::trbp:
      return [cfg](const LabeledModel& x) {
        const auto rho = edge_appearance_uniform(x.mrf.topology());
        auto r = trbp(x.mrf, rho, cfg);
        return MarginalEstimate{std::move(r.marginals_p1), r.converged};
      };
    case Method::msg_gnn:
    case Method::node_gnn: {
      const GnnKind kind = m == Method::node_gnn ? GnnKind::node : GnnKind::msg;
      const GnnWeights* w = &require(kind == GnnKind::node ? ckpt.node : ckpt.msg, kind);
      return [w](const LabeledModel& x) { return MarginalEstimate{predict(*w, x.mrf), true}; };
    }
  }
  throw std::invalid_argument("marginal_method: unknown method");
}

MapMethod map_method(Method m, const Checkpoints& ckpt, const BaselineOptions& opts) {
  const FixedPointConfig cfg = opts.fixed_point;
  switch (m) {
    case Method::oracle:
      return [](const LabeledModel& x) { return x.truth.map_state; };
    case Method::bp:
      return [cfg](const LabeledModel& x) { return bp_max_product(x.mrf, cfg).map_state; };
    default: {
      MarginalMethod marg = marginal_method(m, ckpt, opts);
      return [marg](const LabeledModel& x) { return decode_marginals(marg(x).marginals_p1); };
    }
  }
}

const ReportRow* MetricsReport::find(const std::string& cell, const std::string& method) const {
  for (const auto& r : rows)
    if (r.cell == cell && r.method == method) return &r;
  return nullptr;
}

std::string weights_hash(const GnnWeights& weights) { return fnv1a_hex(weights_to_json(weights).dump()); }

MetricsReport run_condition(const Condition& cond, const std::vector<Method>& methods, const Checkpoints& ckpt,
                            std::uint64_t seed, const BaselineOptions& opts) {
  return run_condition(cond, generate_condition(cond, seed), methods, ckpt, seed, opts);
}

MetricsReport run_condition(const Condition& cond, const std::vector<Cell>& cells, const std::vector<Method>& methods,
                            const Checkpoints& ckpt, std::uint64_t seed, const BaselineOptions& opts) {
  MetricsReport report;
  // Resolve every method first so a missing checkpoint fails before any work.
  std::vector<std::pair<MarginalMethod, MapMethod>> runners;
  for (Method m : methods) runners.emplace_back(marginal_method(m, ckpt, opts), map_method(m, ckpt, opts));

  std::vector<LabeledModel> all;
  for (const auto& cell : cells) {
    all.insert(all.end(), cell.models.begin(), cell.models.end());
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const CellMetrics marg = eval_marginals(runners[k].first, cell.models);
      const CellMetrics map = eval_map(runners[k].second, cell.models);
      ReportRow row;
      row.condition = to_string(cond.id);
      row.cell = cell.name;
      row.method = to_string(methods[k]);
      row.mean_kl = marg.mean_kl;
      row.std_kl = marg.std_kl;
      row.map_var_acc = map.map_var_acc;
      row.map_state_acc = map.map_state_acc;
      row.n_models = static_cast<int>(cell.models.size());
      row.n_failures = std::max(marg.n_failures, map.n_failures);
      row.n_unconverged = marg.n_unconverged;
      report.rows.push_back(row);
    }
  }

  nlohmann::json ck = nlohmann::json::object();
  if (ckpt.node) ck["node"] = weights_hash(*ckpt.node);
  if (ckpt.msg) ck["msg"] = weights_hash(*ckpt.msg);
  const auto& fp = opts.fixed_point;
  report.manifest = nlohmann::json{
      {"format_version", kFormatVersion},
      {"condition", to_string(cond.id)},
      {"n", cond.n},
      {"seed", seed},
      {"models_per_cell", cond.models_per_cell},
      {"prediction_clamp", kPredictionClamp},
      {"corpus_hash", corpus_hash(all)},
      {"checkpoints", ck},
      {"fixed_point", {{"max_iters", fp.max_iters},
                       {"tolerance", fp.tolerance},
                       {"damping", fp.damping ? nlohmann::json(*fp.damping) : nlohmann::json("auto")}}},
      {"trbp_rho", "uniform"},
  };
  return report;
}

std::vector<TracePoint> trace_convergence(const GnnWeights& weights, const std::vector<LabeledModel>& models, int t_max,
                                          const std::string& condition) {
  if (t_max < 0) throw std::invalid_argument("trace_convergence: negative step count");
  std::vector<std::vector<double>> per_step(static_cast<std::size_t>(t_max));
  for (const auto& m : models) {
    ad::Tape tape;
    const ForwardTrace tr = forward(build_gnn_graph(m.mrf, weights.arch.kind), weights, tape, t_max);
    for (std::size_t t = 1; t < tr.states.size(); ++t) {
      const auto& cur = tr.states[t];
      const auto& prev = tr.states[t - 1];
      for (std::size_t v = 0; v < cur.rows(); ++v) {
        double s = 0.0;
        for (std::size_t c = 0; c < cur.cols(); ++c) s += (cur(v, c) - prev(v, c)) * (cur(v, c) - prev(v, c));
        per_step[t - 1].push_back(std::sqrt(s));
      }
    }
  }
  std::vector<TracePoint> out;
  for (int t = 2; t <= t_max; ++t) {
    TracePoint p;
    p.condition = condition;
    p.step = t;
    mean_std(per_step[static_cast<std::size_t>(t - 1)], p.mean, p.stddev);
    out.push_back(p);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double num_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

std::string report_csv(const MetricsReport& report) {
  std::string s = "condition,cell,method,mean_kl,std_kl,map_var_acc,map_state_acc,n_models,n_failures\n";
  for (const auto& r : report.rows) {
    s += r.condition + "," + r.cell + "," + r.method + "," + fmt(r.mean_kl) + "," + fmt(r.std_kl) + "," + fmt(r.map_var_acc) +
         "," + fmt(r.map_state_acc) + "," + std::to_string(r.n_models) + "," + std::to_string(r.n_failures) + "\n";
  }
  return s;
}

std::string trace_csv(const std::vector<TracePoint>& trace) {
  std::string s = "condition,step,mean_delta,std_delta\n";
  for (const auto& p : trace) s += p.condition + "," + std::to_string(p.step) + "," + fmt(p.mean) + "," + fmt(p.stddev) + "\n";
  return s;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"condition", r.condition},
                    {"cell", r.cell},
                    {"method", r.method},
                    {"mean_kl", num(r.mean_kl)},
                    {"std_kl", num(r.std_kl)},
                    {"map_var_acc", num(r.map_var_acc)},
                    {"map_state_acc", num(r.map_state_acc)},
                    {"n_models", r.n_models},
                    {"n_failures", r.n_failures},
                    {"n_unconverged", r.n_unconverged}});
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& p : report.trace)
    trace.push_back({{"condition", p.condition}, {"step", p.step}, {"mean", num(p.mean)}, {"std", num(p.stddev)}});
  return nlohmann::json{{"format_version", kFormatVersion}, {"manifest", report.manifest}, {"rows", rows}, {"trace", trace}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.manifest = j.at("manifest");
  for (const auto& x : j.at("rows")) {
    ReportRow row;
    row.condition = x.at("condition").get<std::string>();
    row.cell = x.at("cell").get<std::string>();
    row.method = x.at("method").get<std::string>();
    row.mean_kl = num_from(x.at("mean_kl"));
    row.std_kl = num_from(x.at("std_kl"));
    row.map_var_acc = num_from(x.at("map_var_acc"));
    row.map_state_acc = num_from(x.at("map_state_acc"));
    row.n_models = x.at("n_models").get<int>();
    row.n_failures = x.at("n_failures").get<int>();
    row.n_unconverged = x.value("n_unconverged", 0);
    r.rows.push_back(row);
  }
  for (const auto& x : j.value("trace", nlohmann::json::array())) {
    TracePoint p;
    p.condition = x.at("condition").get<std::string>();
    p.step = x.at("step").get<int>();
    p.mean = num_from(x.at("mean"));
    p.stddev = num_from(x.at("std"));
    r.trace.push_back(p);
  }
  return r;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory '" + dir.string() + "': " + ec.message());
  write_text(dir / "report.csv", report_csv(report));
  write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
  if (!report.trace.empty()) write_text(dir / "trace.csv", trace_csv(report.trace));
}

}  // namespace pgmgnn
