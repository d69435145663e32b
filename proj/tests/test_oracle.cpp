#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "diffmg/errors.hpp"
#include "diffmg/oracle.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace diffmg;

TEST_SUITE("oracle") {

TEST_CASE("finite_diff recovers the gradient of a quadratic") {
  auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const std::vector<double> x = {1.0, -2.0, 0.5};
  const auto g = finite_diff(f, x, 1e-6);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(-4.0).epsilon(1e-8));
  CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-8));

  SUBCASE("step must be positive") {
    CHECK_THROWS_AS(finite_diff(f, x, 0.0), ConfigError);
    CHECK_THROWS_AS(finite_diff(f, x, -1e-6), ConfigError);
  }
  SUBCASE("non-finite values are reported") {
    auto bad = [](const std::vector<double>&) {
      return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(finite_diff(bad, x, 1e-6), std::runtime_error);
  }
}

TEST_CASE("brute force ranks every assignment of a small space") {
  HinDataset ds = testutil::tiny_nodeclass();
  EvalConfig cfg;
  cfg.hidden = 3;
  cfg.epochs = 2;
  cfg.seed = 4;

  // Target A, K=1: the single link offers the two edge types into A.
  std::vector<RankedEntry> ranking = brute_force_search(ds, 1, cfg, 100);
  REQUIRE(ranking.size() == 2);
  CHECK(ranking[0].val_metric >= ranking[1].val_metric);
  std::set<std::size_t> seen;
  for (const auto& e : ranking) {
    REQUIRE(e.meta_graphs.size() == 1);
    CHECK(e.meta_graphs[0].K == 1);
    CHECK(e.meta_graphs[0].target_type == "A");
    seen.insert(e.meta_graphs[0].assignment[0].etype);
  }
  CHECK(seen == std::set<std::size_t>{0, 2});  // BA and CA

  SUBCASE("positions are exact-match lookups") {
    CHECK(ranking_position(ranking, ranking[0].meta_graphs) == 0);
    CHECK(ranking_position(ranking, ranking[1].meta_graphs) == 1);
    MetaGraph foreign;
    foreign.K = 1;
    foreign.target_type = "A";
    foreign.assignment = {Choice::edge(1)};
    CHECK_THROWS_AS(ranking_position(ranking, {foreign}), std::runtime_error);
  }
  SUBCASE("the K=2 space has 32 assignments") {
    // links: (1,0) -> 4 candidates, (2,0) -> 4, (2,1) -> 2.
    std::vector<RankedEntry> big = brute_force_search(ds, 2, cfg, 100);
    CHECK(big.size() == 32);
    for (std::size_t r = 1; r < big.size(); ++r) {
      CHECK(big[r - 1].val_metric >= big[r].val_metric);
    }
  }
  SUBCASE("the cap aborts with the exact cardinality") {
    try {
      brute_force_search(ds, 2, cfg, 10);
      FAIL("expected CapExceededError");
    } catch (const CapExceededError& e) {
      CHECK(e.cardinality() == "32");
      CHECK(std::string(e.what()).find("32") != std::string::npos);
    }
  }
}

TEST_CASE("brute force crosses both endpoint spaces for recommendation") {
  HinDataset ds = testutil::tiny_rec();
  EvalConfig cfg;
  cfg.hidden = 3;
  cfg.epochs = 2;
  cfg.seed = 1;

  // K=1: target U offers {IU}, target I offers {UI, TI}; the product has 2.
  std::vector<RankedEntry> ranking = brute_force_search(ds, 1, cfg, 100);
  REQUIRE(ranking.size() == 2);
  std::set<std::pair<std::size_t, std::size_t>> combos;
  for (const auto& e : ranking) {
    REQUIRE(e.meta_graphs.size() == 2);
    CHECK(e.meta_graphs[0].target_type == "U");
    CHECK(e.meta_graphs[1].target_type == "I");
    combos.emplace(e.meta_graphs[0].assignment[0].etype,
                   e.meta_graphs[1].assignment[0].etype);
  }
  CHECK(combos.size() == 2);
}

TEST_CASE("rankings serialize as one JSON object per line") {
  HinDataset ds = testutil::tiny_nodeclass();
  EvalConfig cfg;
  cfg.hidden = 3;
  cfg.epochs = 2;
  std::vector<RankedEntry> ranking = brute_force_search(ds, 1, cfg, 100);

  const std::string text = ranking_jsonl(ranking, ds.graph.registry);
  std::istringstream lines(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j["rank"] == n + 1);
    CHECK(j.contains("metric"));
    CHECK(j.contains("meta_graph"));
    ++n;
  }
  CHECK(n == ranking.size());
}

TEST_CASE("the relaxed gradient collapses onto the hard selection as t -> 0") {
  HinDataset ds = testutil::tiny_nodeclass();
  SearchConfig cfg;
  cfg.K = 2;
  cfg.hidden = 5;
  const std::vector<double> ts = {1.0, 0.1, 0.01, 0.001};

  Rng rng(31);
  SearchState st = init_search_state(ds, cfg, rng);
  spread_lambda(st.archs[0], rng);

  for (std::size_t l = 0; l < st.specs[0].links.size(); ++l) {
    Prop1Report rep = prop1_numeric_check(ds, st, 0, l, ts);
    CAPTURE(l);
    CHECK(rep.nonselected_vanish);
    CHECK(rep.selected_converges);
    CHECK(rep.pass());
    CHECK(rep.link_index == l);
    CHECK(rep.t_values == ts);
    REQUIRE(rep.alpha_grads.size() == ts.size());
    // The selected entry's trajectory ends within the convergence band.
    const double last = rep.alpha_grads.back()[rep.m_star];
    CHECK(std::abs(last - rep.hard_grad) <=
          1e-3 * std::max(std::abs(rep.hard_grad), 1e-12));
  }

  SUBCASE("a tied argmax is rejected as ill-defined") {
    for (auto& lam : st.archs[0].lambda()) {
      std::fill(lam.begin(), lam.end(), 0.0);
    }
    CHECK_THROWS_WITH_AS(
        prop1_numeric_check(ds, st, 0, 0, ts),
        "argmax tie at the link; the t -> 0 limit is ill-defined",
        ConfigError);
  }
  SUBCASE("the temperature sequence is validated") {
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 0, 0, {}), ConfigError);
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 0, 0, {1.0, 1.0}),
                    ConfigError);
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 0, 0, {0.1, 1.0}),
                    ConfigError);
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 0, 0, {1.0, -0.5}),
                    ConfigError);
  }
  SUBCASE("indices are bounds-checked") {
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 7, 0, ts), ConfigError);
    CHECK_THROWS_AS(prop1_numeric_check(ds, st, 0, 99, ts), ConfigError);
  }
}

TEST_CASE("spread_lambda assigns each link a permuted ladder") {
  HinDataset ds = testutil::tiny_nodeclass();
  SearchSpaceSpec spec = build_space(ds.graph, "A", 2);
  Rng rng(3);
  ArchParams arch(spec, rng);
  spread_lambda(arch, rng, 0.5);

  for (const auto& lam : arch.lambda()) {
    std::vector<double> sorted = lam;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j < sorted.size(); ++j) {
      CHECK(sorted[j] == doctest::Approx(0.5 * static_cast<double>(j)));
    }
  }
}

TEST_CASE("the full-mixture forward matches dag_forward on the mixture") {
  HinDataset ds = testutil::tiny_nodeclass();
  SearchSpaceSpec spec = build_space(ds.graph, "A", 2);
  Rng rng(13);
  ArchParams arch(spec, rng);
  spread_lambda(arch, rng);

  DenseMatrix h0(ds.graph.n_nodes, 3);
  for (double& v : h0.values()) v = rng.uniform(-1.0, 1.0);

  DagTrace a = darts_reference_forward(h0, arch, spec, ds.graph);
  DagTrace b = dag_forward(h0, spec, full_mixture(arch, spec), ds.graph);
  REQUIRE(a.h.size() == b.h.size());
  for (std::size_t k = 0; k < a.h.size(); ++k) {
    CHECK(a.h[k].values() == b.h[k].values());
  }
  CHECK(a.z.values() == b.z.values());
}

TEST_CASE("analytic model gradients agree with central differences") {
  SUBCASE("classification") {
    HinDataset ds = testutil::tiny_nodeclass();
    for (std::uint64_t seed : {0ull, 1ull}) {
      GradCheckReport rep = gradcheck_model(ds, 2, seed);
      CAPTURE(seed);
      CAPTURE(rep.failures);
      CHECK(rep.pass());
      CHECK(rep.n_compared > 0);
      CHECK(rep.max_rel_err <= 1e-4);
    }
  }
  SUBCASE("recommendation") {
    HinDataset ds = testutil::tiny_rec();
    GradCheckReport rep = gradcheck_model(ds, 2, 5);
    CAPTURE(rep.failures);
    CHECK(rep.pass());
    CHECK(rep.n_compared > 0);
  }
}

TEST_CASE("analytic lambda gradients agree with central differences") {
  SUBCASE("classification") {
    HinDataset ds = testutil::tiny_nodeclass();
    for (std::uint64_t seed : {0ull, 3ull}) {
      GradCheckReport rep = gradcheck_lambda(ds, 2, seed);
      CAPTURE(seed);
      CAPTURE(rep.failures);
      CHECK(rep.pass());
      CHECK(rep.n_compared > 0);
    }
  }
  SUBCASE("recommendation") {
    HinDataset ds = testutil::tiny_rec();
    GradCheckReport rep = gradcheck_lambda(ds, 2, 7);
    CAPTURE(rep.failures);
    CHECK(rep.pass());
    CHECK(rep.n_compared > 0);
  }
}

}  // TEST_SUITE
