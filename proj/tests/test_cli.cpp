#include <sys/wait.h>

#include <cstdlib>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

// Drives the installed binary end to end through a shell. DIFFMG_CLI_PATH and
// DIFFMG_DATA_DIR are injected by the build so the suite can run from any
// working directory.

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = testutil::fresh_dir("cli_io_" + std::to_string(counter++));
  const fs::path out_path = dir / "stdout.txt";
  const fs::path err_path = dir / "stderr.txt";
  const std::string cmd = std::string(DIFFMG_CLI_PATH) + " " + args + " > " +
                          out_path.string() + " 2> " + err_path.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = testutil::slurp(out_path);
  r.err = testutil::slurp(err_path);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

const std::string kNodeclassDir = std::string(DIFFMG_DATA_DIR "/toy_nodeclass");
const std::string kRecDir = std::string(DIFFMG_DATA_DIR "/toy_rec");
const std::string kSynthConfig = std::string(DIFFMG_DATA_DIR "/synth_toy.json");

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and argument guards") {
  RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("search") != std::string::npos);
  CHECK(help.out.find("eval") != std::string::npos);
  CHECK(help.out.find("enumerate") != std::string::npos);

  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("search").code == 2);  // --data and --out are required
}

TEST_CASE("search produces a report, a meta graph, and a dot rendering") {
  const fs::path out = testutil::fresh_dir("cli_search");
  const std::string flags = "search --data " + kNodeclassDir +
                            " --K 2 --hidden 8 --epochs 3 --restarts 2"
                            " --seed 5 --out " +
                            out.string();
  RunResult r = run_cli(flags);
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(std::regex_match(
      r.out, std::regex(R"(best_restart=[01] val=[01]\.\d{6}\n)")));

  const nlohmann::json report =
      nlohmann::json::parse(testutil::slurp(out / "report.json"));
  CHECK(report["mode"] == "sampled");
  CHECK(report["restarts"].size() == 2);

  const nlohmann::json mg =
      nlohmann::json::parse(testutil::slurp(out / "meta_graph.json"));
  CHECK(mg["K"] == 2);
  CHECK(mg["target_type"] == "A");
  CHECK(mg["links"].size() == 3);

  const std::string dot = testutil::slurp(out / "meta_graph.dot");
  CHECK(dot.find("digraph") != std::string::npos);

  SUBCASE("a second run with the same seed is byte-identical") {
    const fs::path out2 = testutil::fresh_dir("cli_search2");
    RunResult r2 = run_cli("search --data " + kNodeclassDir +
                           " --K 2 --hidden 8 --epochs 3 --restarts 2"
                           " --seed 5 --out " +
                           out2.string());
    REQUIRE(r2.code == 0);
    CHECK(r2.out == r.out);
    CHECK(testutil::slurp(out2 / "report.json") ==
          testutil::slurp(out / "report.json"));
    CHECK(testutil::slurp(out2 / "meta_graph.json") ==
          testutil::slurp(out / "meta_graph.json"));
  }
}

TEST_CASE("search rejects bad configurations with exit 2") {
  const fs::path out = testutil::fresh_dir("cli_search_bad");
  RunResult k0 = run_cli("search --data " + kNodeclassDir +
                         " --K 0 --epochs 2 --out " + out.string());
  CHECK(k0.code == 2);
  CHECK(k0.err.find("K must be ≥ 1") != std::string::npos);

  RunResult mismatch = run_cli("search --data " + kNodeclassDir +
                               " --task rec --epochs 2 --out " + out.string());
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("does not match the dataset") != std::string::npos);

  RunResult nodata =
      run_cli("search --data /nonexistent/nowhere --epochs 2 --out " +
              out.string());
  CHECK(nodata.code == 3);
}

TEST_CASE("eval retrains a stored meta graph across seeds") {
  const fs::path sdir = testutil::fresh_dir("cli_eval_search");
  REQUIRE(run_cli("search --data " + kNodeclassDir +
                  " --K 2 --hidden 8 --epochs 3 --restarts 1 --seed 1 --out " +
                  sdir.string())
              .code == 0);

  const fs::path edir = testutil::fresh_dir("cli_eval_out");
  const std::string flags = "eval --data " + kNodeclassDir + " --meta-graph " +
                            (sdir / "meta_graph.json").string() +
                            " --epochs 4 --hidden 8 --seeds 0..2 --out " +
                            edir.string();
  RunResult r = run_cli(flags);
  CAPTURE(r.err);
  REQUIRE(r.code == 0);

  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 3);
  const std::regex line_re(
      R"(task=nodeclass seed=\d+ val=[01]\.\d{6} test=[01]\.\d{6})");
  for (std::size_t i = 0; i < 3; ++i) {
    CAPTURE(lines[i]);
    CHECK(std::regex_match(lines[i], line_re));
    CHECK(lines[i].find("seed=" + std::to_string(i)) != std::string::npos);
    CHECK(fs::exists(edir / ("eval_seed" + std::to_string(i) + ".json")));
  }

  const nlohmann::json summary =
      nlohmann::json::parse(testutil::slurp(edir / "summary.json"));
  CHECK(summary["n_runs"] == 3);
  CHECK(summary["per_seed"].size() == 3);

  SUBCASE("re-running the evaluation reproduces every artifact") {
    const fs::path edir2 = testutil::fresh_dir("cli_eval_out2");
    RunResult r2 = run_cli("eval --data " + kNodeclassDir + " --meta-graph " +
                           (sdir / "meta_graph.json").string() +
                           " --epochs 4 --hidden 8 --seeds 0..2 --out " +
                           edir2.string());
    REQUIRE(r2.code == 0);
    CHECK(r2.out == r.out);
    CHECK(testutil::slurp(edir2 / "summary.json") ==
          testutil::slurp(edir / "summary.json"));
    CHECK(testutil::slurp(edir2 / "eval_seed1.json") ==
          testutil::slurp(edir / "eval_seed1.json"));
  }
}

TEST_CASE("eval separates config errors from schema errors") {
  const fs::path dir = testutil::fresh_dir("cli_eval_errors");

  SUBCASE("recommendation needs both endpoint meta graphs") {
    testutil::put(dir / "any.json", "{}");
    RunResult r = run_cli("eval --data " + kRecDir + " --meta-graph " +
                          (dir / "any.json").string() + " --out " +
                          dir.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("recommendation requires two meta graphs "
                     "(one per endpoint type)") != std::string::npos);
  }
  SUBCASE("unparseable meta graph file exits 2") {
    testutil::put(dir / "broken.json", "this is not json");
    RunResult r = run_cli("eval --data " + kNodeclassDir + " --meta-graph " +
                          (dir / "broken.json").string() + " --epochs 2 --out " +
                          dir.string());
    CHECK(r.code == 2);
  }
  SUBCASE("well-formed meta graph outside the space exits 3") {
    testutil::put(dir / "foreign.json", R"({
      "K": 1,
      "target_type": "A",
      "links": [{"k": 1, "i": 0, "choice": "ZZ"}]
    })");
    RunResult r = run_cli("eval --data " + kNodeclassDir + " --meta-graph " +
                          (dir / "foreign.json").string() +
                          " --epochs 2 --out " + dir.string());
    CHECK(r.code == 3);
    CHECK(r.err.find("ZZ") != std::string::npos);
  }
  SUBCASE("missing dataset exits 3") {
    testutil::put(dir / "any.json", "{}");
    RunResult r = run_cli("eval --data /nonexistent --meta-graph " +
                          (dir / "any.json").string() + " --out " +
                          dir.string());
    CHECK(r.code == 3);
  }
  SUBCASE("malformed seed ranges exit 2") {
    testutil::put(dir / "any.json", "{}");
    RunResult r = run_cli("eval --data " + kNodeclassDir + " --meta-graph " +
                          (dir / "any.json").string() + " --seeds 5..3 --out " +
                          dir.string());
    CHECK(r.code == 2);
  }
}

TEST_CASE("enumerate ranks the space or reports the exceeded cap") {
  RunResult small = run_cli("enumerate --data " + kNodeclassDir +
                            " --K 1 --epochs 2 --hidden 8 --seed 0");
  CAPTURE(small.err);
  REQUIRE(small.code == 0);
  const auto lines = lines_of(small.out);
  REQUIRE(lines.size() == 2);  // two edge types reach the target type
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const nlohmann::json j = nlohmann::json::parse(lines[i]);
    CHECK(j["rank"] == i + 1);
    CHECK(j.contains("metric"));
    CHECK(j["meta_graph"]["K"] == 1);
  }

  SUBCASE("--out redirects the ranking to a file") {
    const fs::path out = testutil::fresh_dir("cli_enum");
    RunResult r = run_cli("enumerate --data " + kNodeclassDir +
                          " --K 1 --epochs 2 --hidden 8 --out " + out.string());
    REQUIRE(r.code == 0);
    CHECK(r.out == "ranked 2 assignments\n");
    CHECK(lines_of(testutil::slurp(out / "ranking.jsonl")).size() == 2);
  }
  SUBCASE("a cap below the cardinality reports and exits cleanly") {
    RunResult r = run_cli("enumerate --data " + kNodeclassDir +
                          " --K 2 --cap 10");
    CHECK(r.code == 0);
    CHECK(r.out == "40 meta graphs (cap exceeded)\n");
  }
}

TEST_CASE("gradcheck exercises model, lambda, and temperature checks") {
  RunResult r = run_cli("gradcheck --data " + kNodeclassDir +
                        " --K 1 --rounds 1 --seed 0");
  CAPTURE(r.out);
  CAPTURE(r.err);
  CHECK(r.code == 0);
  CHECK(r.out.find("model gradients, round 0:") != std::string::npos);
  CHECK(r.out.find("lambda gradients, round 0:") != std::string::npos);
  CHECK(r.out.find("temperature limit, round 0") != std::string::npos);
  CHECK(r.out.find("temperature limit, round 1") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("synth writes a loadable dataset and is seed-deterministic") {
  const fs::path d1 = testutil::fresh_dir("cli_synth1");
  RunResult r1 = run_cli("synth --config " + kSynthConfig + " --seed 7 --out " +
                         d1.string());
  CAPTURE(r1.err);
  REQUIRE(r1.code == 0);
  CHECK(r1.out == "wrote 18 nodes to " + d1.string() + "\n");
  for (const char* name : {"node_types.tsv", "edge_types.tsv", "edges.tsv",
                           "labels.tsv", "split_train.txt",
                           "planted_meta_graph.json"}) {
    CHECK(fs::exists(d1 / name));
  }

  const fs::path d2 = testutil::fresh_dir("cli_synth2");
  REQUIRE(run_cli("synth --config " + kSynthConfig + " --seed 7 --out " +
                  d2.string())
              .code == 0);
  for (const char* name : {"edges.tsv", "labels.tsv", "split_val.txt"}) {
    CHECK(testutil::slurp(d1 / name) == testutil::slurp(d2 / name));
  }

  SUBCASE("the generated directory feeds straight back into the tools") {
    RunResult r = run_cli("enumerate --data " + d1.string() +
                          " --K 1 --epochs 2 --hidden 4");
    CAPTURE(r.err);
    CHECK(r.code == 0);
    CHECK_FALSE(lines_of(r.out).empty());
  }
  SUBCASE("a broken config exits 2") {
    const fs::path cfg = d1 / "bad_config.json";
    testutil::put(cfg, "{\"node_types\": []}");
    RunResult r = run_cli("synth --config " + cfg.string() + " --out " +
                          (d1 / "x").string());
    CHECK(r.code == 2);
  }
}

TEST_CASE("recommendation search and eval round trip through files") {
  const fs::path sdir = testutil::fresh_dir("cli_rec_search");
  RunResult search = run_cli("search --data " + kRecDir +
                             " --K 1 --hidden 8 --epochs 3 --restarts 1"
                             " --seed 2 --out " +
                             sdir.string());
  CAPTURE(search.err);
  REQUIRE(search.code == 0);
  REQUIRE(fs::exists(sdir / "meta_graph_source.json"));
  REQUIRE(fs::exists(sdir / "meta_graph_target.json"));

  const nlohmann::json src =
      nlohmann::json::parse(testutil::slurp(sdir / "meta_graph_source.json"));
  const nlohmann::json dst =
      nlohmann::json::parse(testutil::slurp(sdir / "meta_graph_target.json"));
  CHECK(src["target_type"] == "U");
  CHECK(dst["target_type"] == "I");

  const fs::path edir = testutil::fresh_dir("cli_rec_eval");
  RunResult eval = run_cli(
      "eval --data " + kRecDir + " --meta-graph " +
      (sdir / "meta_graph_source.json").string() + " --meta-graph2 " +
      (sdir / "meta_graph_target.json").string() +
      " --epochs 3 --hidden 8 --seeds 0..1 --out " + edir.string());
  CAPTURE(eval.err);
  REQUIRE(eval.code == 0);
  const auto lines = lines_of(eval.out);
  REQUIRE(lines.size() == 2);
  const std::regex line_re(
      R"(task=rec seed=\d+ val=[01]\.\d{6} test=[01]\.\d{6})");
  for (const auto& line : lines) {
    CAPTURE(line);
    CHECK(std::regex_match(line, line_re));
  }
  CHECK(fs::exists(edir / "summary.json"));
}

}  // TEST_SUITE
