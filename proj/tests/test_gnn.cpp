#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "gradcheck.hpp"
#include "pgmgnn/gnn.hpp"

using namespace pgmgnn;

namespace {

GnnArchitecture arch_of(GnnKind kind) {
  GnnArchitecture a;
  a.kind = kind;
  return a;
}

BinaryMRF chain3() { return BinaryMRF(GraphTopology(3, {{0, 1}, {1, 2}}), {0.9, -0.6}, {0.2, -0.1, 0.35}); }

std::vector<double> run(const GnnWeights& w, const BinaryMRF& m, std::optional<int> steps = std::nullopt) {
  ad::Tape tape;
  return forward(build_gnn_graph(m, w.arch.kind), w, tape, steps).marginals_p1();
}

}  // namespace

TEST_SUITE("gnn") {
  TEST_CASE("node mapping on a single edge") {
    BinaryMRF m(GraphTopology(2, {{0, 1}}), {0.7}, {0.1, -0.3});
    const auto g = build_gnn_graph(m, GnnKind::node);
    CHECK(g.num_nodes == 2);
    CHECK(g.num_edges() == 2);
    CHECK(g.readout_target == std::vector<int>{0, 1});
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(g.features(e, 0) == 0.7);
      CHECK(g.features(e, 1) == m.bias(g.edge_src[e]));
      CHECK(g.features(e, 2) == m.bias(g.edge_dst[e]));
    }
  }

  TEST_CASE("message mapping on a 3-chain") {
    const auto g = build_gnn_graph(chain3(), GnnKind::msg);
    REQUIRE(g.num_nodes == 4);
    std::map<std::pair<int, int>, int> id;
    for (int v = 0; v < g.num_nodes; ++v) id[g.messages[static_cast<std::size_t>(v)]] = v;
    std::set<std::pair<int, int>> links;
    for (std::size_t e = 0; e < g.num_edges(); ++e) links.insert({g.edge_src[e], g.edge_dst[e]});
    const std::set<std::pair<int, int>> expected = {{id[{0, 1}], id[{1, 2}]}, {id[{2, 1}], id[{1, 0}]}};
    CHECK(links == expected);
    // Readout of variable i gathers the messages j→i.
    for (int v = 0; v < 4; ++v) CHECK(g.readout_target[static_cast<std::size_t>(v)] == g.messages[static_cast<std::size_t>(v)].second);
    const int v01 = id[{0, 1}];
    CHECK(g.features(static_cast<std::size_t>(v01), 0) == 0.9);
    CHECK(g.features(static_cast<std::size_t>(v01), 1) == 0.2);
    CHECK(g.features(static_cast<std::size_t>(v01), 2) == -0.1);
  }

  TEST_CASE("message mapping on K9 and graph sizes across the corpus") {
    Rng rng(1);
    const auto k9 = sample_mrf(build_topology(ClassicKind::complete, 9), rng);
    const auto g = build_gnn_graph(k9, GnnKind::msg);
    CHECK(g.num_nodes == 72);
    std::vector<int> in_degree(72, 0);
    for (int d : g.edge_dst) ++in_degree[static_cast<std::size_t>(d)];
    for (int d : in_degree) CHECK(d == 7);

    for (ClassicKind k : classic_kinds())
      for (int n : {9, 16}) {
        const auto m = sample_mrf(build_topology(k, n), rng);
        const std::size_t E = m.topology().num_edges();
        CHECK(static_cast<std::size_t>(build_gnn_graph(m, GnnKind::msg).num_nodes) == 2 * E);
        CHECK(build_gnn_graph(m, GnnKind::node).num_edges() == 2 * E);
      }
  }

  TEST_CASE("zero weights keep every state at zero") {
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      const auto w = zero_weights(arch_of(kind));
      ad::Tape tape;
      Rng rng(2);
      const auto tr = forward(build_gnn_graph(sample_mrf(build_topology(ClassicKind::wheel, 9), rng), kind), w, tape);
      CHECK(tr.states.size() == 11);
      for (const auto& h : tr.states)
        for (double v : h.values()) CHECK(v == 0.0);
      for (double p : tr.marginals_p1()) CHECK(p == 0.5);
      for (const auto& s : convergence_trace(tr)) {
        CHECK(s.mean == 0.0);
        CHECK(s.stddev == 0.0);
      }
    }
  }

  TEST_CASE("predictions are probabilities, one per variable") {
    Rng rng(3);
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      const auto w = init_weights(arch_of(kind), 7);
      for (ClassicKind k : {ClassicKind::chain, ClassicKind::grid, ClassicKind::complete}) {
        const auto p = run(w, sample_mrf(build_topology(k, 9), rng));
        CHECK(p.size() == 9);
        for (double x : p) {
          CHECK(x > 0.0);
          CHECK(x < 1.0);
        }
      }
      ad::Tape tape;
      const auto tr = forward(build_gnn_graph(sample_mrf(build_topology(ClassicKind::barbell, 9), rng), kind), w, tape);
      const auto trace = convergence_trace(tr);
      CHECK(trace.size() == 10);
      for (const auto& s : trace) {
        CHECK(std::isfinite(s.mean));
        CHECK(std::isfinite(s.stddev));
      }
    }
  }

  TEST_CASE("relabeling variables permutes predictions exactly") {
    Rng rng(4);
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      const auto w = init_weights(arch_of(kind), 11);
      for (ClassicKind k : {ClassicKind::ladder, ClassicKind::random_45, ClassicKind::complete}) {
        const auto m = sample_mrf(build_topology(k, 9), rng);
        std::vector<int> perm(9);
        for (int i = 0; i < 9; ++i) perm[static_cast<std::size_t>(i)] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto p = run(w, m);
        const auto pp = run(w, relabel(m, perm));
        for (std::size_t i = 0; i < 9; ++i) CHECK(pp[static_cast<std::size_t>(perm[i])] == p[i]);
      }
    }
  }

  TEST_CASE("zero steps read out the zero state") {
    Rng rng(5);
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      const auto w = init_weights(arch_of(kind), 3);
      const auto p = run(w, sample_mrf(build_topology(ClassicKind::grid, 9), rng), 0);
      for (double x : p) CHECK(x == p[0]);
    }
  }

  TEST_CASE("initialization") {
    const auto a = init_weights(arch_of(GnnKind::msg), 42);
    const auto b = init_weights(arch_of(GnnKind::msg), 42);
    CHECK(a.params.same_values(b.params));
    const auto c = init_weights(arch_of(GnnKind::msg), 43);
    CHECK_FALSE(a.params.same_values(c.params));

    // Glorot uniform on [-s, s] has std s / sqrt(3); pool entries scaled by s.
    double sum_sq = 0.0;
    std::size_t count = 0;
    std::vector<ad::Param> pooled(a.params.begin(), a.params.end());
    pooled.insert(pooled.end(), c.params.begin(), c.params.end());
    for (const auto& p : pooled) {
      const bool bias = p.name.find(".b") != std::string::npos;
      if (bias) {
        for (double v : p.value.values()) CHECK(v == 0.0);
        continue;
      }
      const double s = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
      for (double v : p.value.values()) {
        CHECK(std::abs(v) <= s);
        sum_sq += (v / s) * (v / s);
        ++count;
      }
    }
    CHECK(count >= 10000);
    const double ratio = std::sqrt(sum_sq / static_cast<double>(count)) * std::sqrt(3.0);
    CHECK(ratio > 0.85);
    CHECK(ratio < 1.15);
  }

  TEST_CASE("architecture validation and weights JSON") {
    GnnArchitecture bad;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.steps = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    const auto w = init_weights(arch_of(GnnKind::node), 9);
    const auto back = weights_from_json(weights_to_json(w));
    CHECK(back.arch == w.arch);
    CHECK(back.params.same_values(w.params));
    auto j = weights_to_json(w);
    j["architecture"]["D"] = 6;
    CHECK_THROWS(weights_from_json(j));
    CHECK(parse_gnn_kind("node-gnn") == GnnKind::node);
    CHECK(parse_gnn_kind("msg") == GnnKind::msg);
    CHECK_THROWS_AS(parse_gnn_kind("edge"), std::invalid_argument);
  }

  TEST_CASE("every parameter receives gradient") {
    Rng rng(6);
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      auto w = init_weights(arch_of(kind), 21);
      std::vector<bool> touched(w.params.size(), false);
      for (int t = 0; t < 5; ++t) {
        const auto m = sample_mrf(build_topology(ClassicKind::grid, 9), rng);
        ad::Tape tape;
        const auto tr = forward(build_gnn_graph(m, kind), w, tape);
        tape.backward(ad::sum(ad::log(tr.predictions)));
        w.params.zero_grad();
        tape.accumulate_into(w.params);
        for (std::size_t i = 0; i < w.params.size(); ++i)
          for (double g : w.params.at(i).grad.values()) touched[i] = touched[i] || g != 0.0;
      }
      for (std::size_t i = 0; i < touched.size(); ++i) {
        CAPTURE(w.params.at(i).name);
        CHECK(touched[i]);
      }
    }
  }

  TEST_CASE("unrolled gradients match central differences on a 3-chain") {
    const auto m = chain3();
    const std::vector<double> q = {0.6, 0.3, 0.55};
    for (GnnKind kind : {GnnKind::node, GnnKind::msg}) {
      auto w = init_weights(arch_of(kind), 5);
      const auto graph = build_gnn_graph(m, kind);
      const auto r = testing::grad_check(w.params, [&](ad::Tape& t, const ad::ParamStore&) {
        const auto tr = forward(graph, w, t);
        const auto target = t.constant(ad::Tensor::column(q));
        return ad::sum(target * ad::log(tr.predictions));
      });
      CAPTURE(to_string(kind));
      CAPTURE(r.worst);
      CHECK(r.max_rel_err < 1e-4);
      CHECK(r.kinks <= 2);
    }
  }
}
