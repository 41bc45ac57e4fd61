// pgmgnn: corpus generation, training, evaluation and inspection.
//
//   pgmgnn generate --out data/ --seed 1
//   pgmgnn train --data data/ --arch node --out node.json
//   pgmgnn eval --condition II --node node.json --msg msg.json --out report/
//   pgmgnn trace --checkpoint node.json --condition I --out trace/
//   pgmgnn oracle --structure grid --n 9 --seed 3
//
// Every flag can also come from --config <file> (TOML/INI, one section per verb).
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pgmgnn/dataset.hpp"
#include "pgmgnn/eval.hpp"
#include "pgmgnn/inference.hpp"
#include "pgmgnn/oracle.hpp"
#include "pgmgnn/training.hpp"

using namespace pgmgnn;

namespace {

GnnWeights load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)).weights; }

struct GenerateArgs {
  std::string out;
  std::uint64_t seed = 0;
  int n = 9;
  int train = 100, val = 20, test = 10;
  std::string condition;
  int models_per_cell = 100;
};

int run_generate(const GenerateArgs& a) {
  if (!a.condition.empty()) {
    const Condition cond = Condition::make(parse_condition(a.condition), a.models_per_cell);
    const auto cells = generate_condition(cond, a.seed);
    nlohmann::json manifest{{"format_version", kFormatVersion},
                            {"condition", a.condition},
                            {"n", cond.n},
                            {"seed", a.seed},
                            {"models_per_cell", a.models_per_cell},
                            {"cells", nlohmann::json::array()}};
    for (const auto& cell : cells) {
      Dataset d;
      d.spec.n = cond.n;
      d.spec.seed = a.seed;
      d.test = cell.models;
      save_dataset(d, std::filesystem::path(a.out) / cell.name);
      manifest["cells"].push_back(cell.name);
    }
    write_json_file(std::filesystem::path(a.out) / "condition.json", manifest);
    std::printf("wrote condition %s: %zu cells x %d models to %s\n", a.condition.c_str(), cells.size(), a.models_per_cell,
                a.out.c_str());
    return 0;
  }
  DatasetSpec spec;
  spec.n = a.n;
  spec.seed = a.seed;
  spec.train_per_structure = a.train;
  spec.val_per_structure = a.val;
  spec.test_per_structure = a.test;
  const Dataset d = generate_dataset(spec);
  save_dataset(d, a.out);
  std::printf("wrote %zu/%zu/%zu models to %s\n", d.train.size(), d.validation.size(), d.test.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, out, arch = "node", task = "marginals";
  std::uint64_t seed = 0;
  int epochs = 500, window = 20, batch = 10, steps = 10;
  double lr = 1e-3;
  double clip = 0.0;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const Dataset d = load_dataset(a.data);
  GnnArchitecture arch;
  arch.kind = parse_gnn_kind(a.arch);
  arch.steps = a.steps;
  TrainConfig cfg;
  cfg.task = parse_task(a.task);
  cfg.seed = a.seed;
  cfg.max_epochs = a.epochs;
  cfg.early_stop_window = a.window;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  if (a.clip > 0.0) cfg.clip_norm = a.clip;
  const bool quiet = a.quiet;
  const TrainResult r = train(d, arch, cfg, [quiet](int epoch, double tl, double vl) {
    if (!quiet) std::printf("epoch %4d  train %.6f  val %.6f\n", epoch, tl, vl);
    std::fflush(stdout);
  });
  write_json_file(a.out, checkpoint_to_json(r, cfg));
  std::printf("best epoch %d (val %.6f), %s; wrote %s\n", r.history.best_epoch, r.history.best_val_loss,
              r.history.stop_reason.c_str(), a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string condition = "I", out, node, msg;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  int models_per_cell = 100;
};

int run_eval(const EvalArgs& a) {
  const Condition cond = Condition::make(parse_condition(a.condition), a.models_per_cell);
  Checkpoints ck;
  if (!a.node.empty()) ck.node = load_checkpoint(a.node);
  if (!a.msg.empty()) ck.msg = load_checkpoint(a.msg);
  std::vector<Method> methods;
  if (a.methods.empty()) {
    for (Method m : all_methods()) {
      if (m == Method::node_gnn && !ck.node) continue;
      if (m == Method::msg_gnn && !ck.msg) continue;
      methods.push_back(m);
    }
  } else {
    for (const auto& s : a.methods) methods.push_back(parse_method(s));
  }
  const MetricsReport report = run_condition(cond, methods, ck, a.seed);
  if (a.out.empty())
    std::cout << report_csv(report);
  else
    emit_report(report, a.out);
  return 0;
}

struct TraceArgs {
  std::string condition = "I", out, checkpoint;
  std::uint64_t seed = 0;
  int models_per_cell = 100;
  int steps = 10;
};

int run_trace(const TraceArgs& a) {
  const Condition cond = Condition::make(parse_condition(a.condition), a.models_per_cell);
  const GnnWeights w = load_checkpoint(a.checkpoint);
  std::vector<LabeledModel> models;
  for (auto& cell : generate_condition(cond, a.seed))
    for (auto& m : cell.models) models.push_back(std::move(m));
  MetricsReport report;
  report.trace = trace_convergence(w, models, a.steps, a.condition);
  report.manifest = {{"format_version", kFormatVersion}, {"condition", a.condition},      {"seed", a.seed},
                     {"models_per_cell", a.models_per_cell}, {"checkpoint", weights_hash(w)}, {"corpus_hash", corpus_hash(models)}};
  if (a.out.empty())
    std::cout << trace_csv(report.trace);
  else
    emit_report(report, a.out);
  return 0;
}

struct OracleArgs {
  std::string model, structure = "chain";
  int n = 9;
  std::uint64_t seed = 0;
  bool baselines = false;
};

int run_oracle(const OracleArgs& a) {
  LabeledModel m;
  if (!a.model.empty()) {
    m = model_from_json(read_json_file(a.model));
  } else {
    const StructureKind kind = parse_structure(a.structure);
    Rng rng(a.seed);
    const GraphTopology topo = std::holds_alternative<ClassicKind>(kind)
                                   ? build_topology(std::get<ClassicKind>(kind), a.n)
                                   : sample_erdos_renyi_connected(a.n, std::get<ErdosRenyi>(kind).q, rng);
    m.structure = structure_name(kind);
    m.mrf = sample_mrf(topo, rng);
  }
  const OracleResult r = enumerate(m.mrf);
  nlohmann::json out = model_to_json(label_with_oracle(m.structure, m.mrf));
  out["log_z"] = r.log_z;
  out["map_log_score"] = r.map_log_score;
  if (a.baselines) {
    const FixedPointConfig cfg;
    const auto bp = bp_sum_product(m.mrf, cfg);
    const auto mf = mean_field(m.mrf, cfg);
    const auto tr = trbp(m.mrf, edge_appearance_uniform(m.mrf.topology()), cfg);
    out["baselines"] = {{"BP", {{"marginals_p1", bp.marginals_p1}, {"converged", bp.converged}, {"iterations", bp.iterations}}},
                        {"BP_max", {{"map_state", bp_max_product(m.mrf, cfg).map_state}}},
                        {"MF", {{"marginals_p1", mf.marginals_p1}, {"converged", mf.converged}, {"iterations", mf.iterations}}},
                        {"TRBP", {{"marginals_p1", tr.marginals_p1}, {"converged", tr.converged}, {"iterations", tr.iterations}}}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned and classical inference in binary pairwise MRFs"};
  app.set_config("--config", "", "Read flags from a TOML/INI file");
  app.require_subcommand(1);

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "Generate a training corpus or a condition's model set");
  gen->add_option("--out", g.out, "Output directory")->required();
  gen->add_option("--seed", g.seed, "Corpus seed");
  gen->add_option("--n", g.n, "Variables per model (training corpus)");
  gen->add_option("--train", g.train, "Training models per structure");
  gen->add_option("--val", g.val, "Validation models per structure");
  gen->add_option("--test", g.test, "Test models per structure");
  gen->add_option("--condition", g.condition, "Generate condition I, II, III or IV instead")
      ->check(CLI::IsMember({"I", "II", "III", "IV"}));
  gen->add_option("--models-per-cell", g.models_per_cell, "Models per condition cell");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train a GNN on a saved corpus");
  tr->add_option("--data", t.data, "Corpus directory")->required();
  tr->add_option("--out", t.out, "Checkpoint file")->required();
  tr->add_option("--arch", t.arch, "node or msg")->check(CLI::IsMember({"node", "msg"}));
  tr->add_option("--task", t.task, "marginals or map")->check(CLI::IsMember({"marginals", "map"}));
  tr->add_option("--seed", t.seed, "Initialization and shuffle seed");
  tr->add_option("--epochs", t.epochs, "Maximum epochs");
  tr->add_option("--window", t.window, "Early-stopping window (epochs)");
  tr->add_option("--batch", t.batch, "Graphs per batch");
  tr->add_option("--lr", t.lr, "Adam learning rate");
  tr->add_option("--steps", t.steps, "Propagation steps T");
  tr->add_option("--clip", t.clip, "Gradient-norm clip (0 = off)");
  tr->add_flag("--quiet", t.quiet, "No per-epoch output");

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Evaluate methods on a condition");
  ev->add_option("--condition", e.condition, "I, II, III or IV")->check(CLI::IsMember({"I", "II", "III", "IV"}));
  ev->add_option("--out", e.out, "Report directory (CSV to stdout if omitted)");
  ev->add_option("--seed", e.seed, "Condition seed");
  ev->add_option("--node", e.node, "node-GNN checkpoint");
  ev->add_option("--msg", e.msg, "msg-GNN checkpoint");
  ev->add_option("--methods", e.methods, "Comma-separated subset of oracle,MF,BP,TRBP,msg-GNN,node-GNN")->delimiter(',');
  ev->add_option("--models-per-cell", e.models_per_cell, "Models per cell");

  TraceArgs c;
  auto* trc = app.add_subcommand("trace", "Hidden-state convergence trace");
  trc->add_option("--checkpoint", c.checkpoint, "GNN checkpoint")->required();
  trc->add_option("--condition", c.condition, "I, II, III or IV")->check(CLI::IsMember({"I", "II", "III", "IV"}));
  trc->add_option("--out", c.out, "Report directory (CSV to stdout if omitted)");
  trc->add_option("--seed", c.seed, "Condition seed");
  trc->add_option("--steps", c.steps, "T_max");
  trc->add_option("--models-per-cell", c.models_per_cell, "Models per cell");

  OracleArgs o;
  auto* orc = app.add_subcommand("oracle", "Exact marginals and MAP of one model");
  orc->add_option("--model", o.model, "Model file (otherwise sampled)");
  orc->add_option("--structure", o.structure, "Structure name, e.g. grid or er_q0.30");
  orc->add_option("--n", o.n, "Variables");
  orc->add_option("--seed", o.seed, "Sampling seed");
  orc->add_flag("--baselines", o.baselines, "Also run BP, max-product, MF and TRBP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return run_generate(g);
    if (*tr) return run_train(t);
    if (*ev) return run_eval(e);
    if (*trc) return run_trace(c);
    if (*orc) return run_oracle(o);
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 1;
}
