#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "pgmgnn/eval.hpp"

using namespace pgmgnn;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<LabeledModel> models_of(ClassicKind k, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledModel> out;
  const auto topo = build_topology(k, 9);
  for (int i = 0; i < count; ++i) out.push_back(label_with_oracle(structure_name(k), sample_mrf(topo, rng)));
  return out;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("per-node KL") {
    CHECK(kl_per_node(0.3, 0.3) == 0.0);
    CHECK(std::abs(kl_per_node(0.5, 0.75) - 0.1438410362258904) < 1e-15);
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
      const double p = uniform01(rng), q = uniform01(rng);
      CHECK_MESSAGE(kl_per_node(p, q) >= 0.0, p << " " << q);
    }
    // The clamp bounds the worst case at log(1 / 1e-7).
    CHECK(kl_per_node(1.0, 0.0) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
    CHECK(kl_per_node(1.0, 0.0) < 16.12);
  }

  TEST_CASE("condition grid") {
    const auto I = Condition::make(ConditionId::I);
    CHECK(I.n == 9);
    CHECK(I.num_cells() == 13);
    CHECK(I.models_per_cell == 100);
    CHECK(Condition::make(ConditionId::II).n == 16);
    const auto III = Condition::make(ConditionId::III);
    CHECK(III.n == 9);
    REQUIRE(III.num_cells() == 9);
    CHECK(III.edge_probs.front() == 0.1);
    CHECK(III.edge_probs.back() == 0.9);
    CHECK(Condition::make(ConditionId::IV).n == 16);
    CHECK_THROWS_AS(parse_condition("V"), std::invalid_argument);
    CHECK_THROWS_AS(Condition::make(ConditionId::I, 0), std::invalid_argument);

    const auto cells = generate_condition(Condition::make(ConditionId::II, 2), 3);
    REQUIRE(cells.size() == 13);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      CHECK(cells[c].models.size() == 2);
      CHECK(cells[c].models[0].mrf.topology() == build_topology(classic_kinds()[c], 16));
    }
    const auto rnd = generate_condition(Condition::make(ConditionId::III, 3), 3);
    CHECK(rnd[4].name == "er_q0.50");
    for (const auto& cell : rnd)
      for (const auto& m : cell.models) CHECK(m.mrf.topology().is_connected());
  }

  TEST_CASE("oracle method scores perfectly") {
    const auto models = models_of(ClassicKind::wheel, 5, 2);
    const Checkpoints none;
    const auto marg = eval_marginals(marginal_method(Method::oracle, none), models);
    CHECK(marg.mean_kl == 0.0);
    CHECK(marg.n_models == 5);
    const auto map = eval_map(map_method(Method::oracle, none), models);
    CHECK(map.map_var_acc == 1.0);
    CHECK(map.map_state_acc == 1.0);
  }

  TEST_CASE("BP is exact on tree cells") {
    const Checkpoints none;
    for (ClassicKind k : {ClassicKind::chain, ClassicKind::star, ClassicKind::binary_tree}) {
      const auto models = models_of(k, 10, 3);
      CHECK(eval_marginals(marginal_method(Method::bp, none), models).mean_kl < 1e-8);
      CHECK(eval_map(map_method(Method::bp, none), models).map_state_acc == 1.0);
    }
  }

  TEST_CASE("coin-flip predictor scores about one half per variable") {
    Rng rng(4);
    std::vector<LabeledModel> models;
    for (ClassicKind k : classic_kinds()) {
      auto more = models_of(k, 40, 5 + static_cast<std::uint64_t>(k));
      models.insert(models.end(), more.begin(), more.end());
    }
    const auto r = eval_map(
        [&rng](const LabeledModel& m) {
          std::vector<int> x(static_cast<std::size_t>(m.mrf.num_nodes()));
          for (int& v : x) v = uniform01(rng) < 0.5 ? 1 : -1;
          return x;
        },
        models);
    // 4680 fair coins: standard error ≈ 0.0073.
    CHECK(std::abs(r.map_var_acc - 0.5) < 0.03);
  }

  TEST_CASE("failures are counted and excluded") {
    const auto models = models_of(ClassicKind::cycle, 6, 6);
    int calls = 0;
    const auto r = eval_marginals(
        [&calls](const LabeledModel& m) {
          if (calls++ % 3 == 0) throw std::runtime_error("boom");
          return MarginalEstimate{m.truth.marginals_p1, true};
        },
        models);
    CHECK(r.n_failures == 2);
    CHECK(r.n_models == 6);
    CHECK(r.mean_kl == 0.0);
    const auto all_fail = eval_map([](const LabeledModel&) -> std::vector<int> { throw std::runtime_error("no"); }, models);
    CHECK(all_fail.n_failures == 6);
    CHECK(std::isnan(all_fail.map_var_acc));
  }

  TEST_CASE("GNN methods need a matching checkpoint") {
    Checkpoints ck;
    CHECK_THROWS_AS(marginal_method(Method::node_gnn, ck), std::invalid_argument);
    GnnArchitecture msg;
    msg.kind = GnnKind::msg;
    ck.node = init_weights(msg, 1);
    CHECK_THROWS_AS(marginal_method(Method::node_gnn, ck), std::invalid_argument);
    CHECK_THROWS_AS(run_condition(Condition::make(ConditionId::I, 1), {Method::node_gnn}, ck, 0), std::invalid_argument);
  }

  TEST_CASE("run_condition rows, invariants and determinism") {
    GnnArchitecture a;
    Checkpoints ck;
    ck.node = init_weights(a, 3);
    const std::vector<Method> methods = {Method::oracle, Method::mf, Method::bp, Method::trbp, Method::node_gnn};
    const auto cond = Condition::make(ConditionId::III, 3);
    const auto r1 = run_condition(cond, methods, ck, 12);
    const auto r2 = run_condition(cond, methods, ck, 12);
    CHECK(r1 == r2);
    CHECK(report_csv(r1) == report_csv(r2));
    REQUIRE(r1.rows.size() == 9 * methods.size());
    for (const auto& row : r1.rows) {
      CAPTURE(row.cell);
      CAPTURE(row.method);
      CHECK(row.n_models == 3);
      CHECK(row.n_failures == 0);
      CHECK(row.mean_kl >= 0.0);
      CHECK(row.mean_kl < 16.12);
      CHECK(row.map_var_acc >= 0.0);
      CHECK(row.map_var_acc <= 1.0);
      CHECK(row.map_state_acc >= 0.0);
      CHECK(row.map_state_acc <= 1.0);
      if (row.method == "oracle") {
        CHECK(row.mean_kl == 0.0);
        CHECK(row.map_var_acc == 1.0);
      }
    }
    CHECK(r1.manifest.at("prediction_clamp") == kPredictionClamp);
    CHECK(r1.manifest.at("checkpoints").contains("node"));
    CHECK(r1.find("er_q0.90", "BP") != nullptr);
    CHECK(run_condition(cond, methods, ck, 13).manifest.at("corpus_hash") != r1.manifest.at("corpus_hash"));
  }

  TEST_CASE("convergence trace bounds") {
    const auto models = models_of(ClassicKind::grid, 3, 7);
    GnnArchitecture a;
    const auto zero = trace_convergence(zero_weights(a), models, 10);
    REQUIRE(zero.size() == 9);
    CHECK(zero.front().step == 2);
    CHECK(zero.back().step == 10);
    for (const auto& p : zero) {
      CHECK(p.mean == 0.0);
      CHECK(p.stddev == 0.0);
    }
    CHECK(trace_convergence(init_weights(a, 1), models, 1).empty());
    for (const auto& p : trace_convergence(init_weights(a, 1), models, 5)) CHECK(std::isfinite(p.mean));
  }

  TEST_CASE("report files are stable and round-trip") {
    MetricsReport r;
    r.rows.push_back({"I", "chain", "BP", 1e-17, 2e-17, 1.0, 1.0, 10, 0, 0});
    r.rows.push_back({"I", "complete", "MF", 0.1 + 0.2, 0.5, 0.75, 0.125, 10, 1, 3});
    r.trace.push_back({"I", 2, 0.3, 0.01});
    r.manifest = {{"seed", 1}};
    const auto dir = std::filesystem::temp_directory_path() / "pgmgnn_test_report";
    std::filesystem::remove_all(dir);
    emit_report(r, dir);
    const std::string csv = slurp(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.rfind("condition,cell,method,mean_kl,std_kl,map_var_acc,map_state_acc,n_models,n_failures\n", 0) == 0);
    const std::string json = slurp(dir / "report.json");
    emit_report(r, dir);
    CHECK(slurp(dir / "report.csv") == csv);
    CHECK(slurp(dir / "report.json") == json);
    CHECK(report_from_json(nlohmann::json::parse(json)) == r);
    CHECK(std::filesystem::exists(dir / "trace.csv"));
    std::filesystem::remove_all(dir);

    const auto blocker = std::filesystem::temp_directory_path() / "pgmgnn_test_blocker";
    std::ofstream(blocker) << "x";
    CHECK_THROWS_AS(emit_report(r, blocker / "sub"), std::runtime_error);
    std::filesystem::remove(blocker);
  }

  TEST_CASE("method names") {
    for (Method m : all_methods()) CHECK(parse_method(to_string(m)) == m);
    CHECK(parse_method("node-gnn") == Method::node_gnn);
    CHECK_THROWS_AS(parse_method("gibbs"), std::invalid_argument);
  }
}
