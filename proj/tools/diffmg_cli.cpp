#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "diffmg/errors.hpp"
#include "diffmg/evaluate.hpp"
#include "diffmg/hin.hpp"
#include "diffmg/oracle.hpp"
#include "diffmg/parallel.hpp"
#include "diffmg/rng.hpp"
#include "diffmg/search.hpp"
#include "diffmg/search_space.hpp"
#include "diffmg/synth.hpp"

namespace fs = std::filesystem;

namespace {

using namespace diffmg;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw ConfigError("cannot write " + path.string());
}

std::string fmt_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& tok) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad seed '" + tok + "'");
  }
  if (pos != tok.size()) throw ConfigError("bad seed '" + tok + "'");
  return v;
}

// "0..9", "3", "1,4,7..9"
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto dots = tok.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_u64(tok));
      continue;
    }
    const std::uint64_t lo = parse_u64(tok.substr(0, dots));
    const std::uint64_t hi = parse_u64(tok.substr(dots + 2));
    if (hi < lo || hi - lo > 100000) {
      throw ConfigError("bad seed range '" + tok + "'");
    }
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("empty --seeds list");
  return out;
}

// Structural problems (bad JSON, missing fields) stay ParseError; content
// that is well-formed but does not fit this dataset's space becomes a
// SchemaError so the eval command exits 3 on it.
MetaGraph load_meta_graph_file(const std::string& path, const HinGraph& graph,
                               const std::string& target_type,
                               std::size_t* K_out) {
  const std::string text = read_file(path);
  std::size_t K = 0;
  try {
    const auto j = nlohmann::json::parse(text);
    K = j.at("K").get<std::size_t>();
    (void)j.at("target_type").get<std::string>();
    if (!j.contains("links") || !j["links"].is_array()) {
      throw ParseError(path + ": missing 'links' array");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SearchSpaceSpec spec = build_space(graph, target_type, K);
  try {
    MetaGraph mg = meta_graph_from_json(text, spec, graph.registry);
    if (K_out) *K_out = K;
    return mg;
  } catch (const ParseError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

struct SearchArgs {
  std::string data, out;
  std::string task;
  std::string mode = "sampled";
  std::size_t K = 4;
  std::size_t hidden = 64;
  std::size_t epochs = 0;  // 0 = task default (50 nodeclass, 100 rec)
  double epsilon0 = 0.0;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
};

int do_search(const SearchArgs& a) {
  HinDataset ds = load_hin(a.data);
  const bool rec = !is_nodeclass(ds.task);
  if (!a.task.empty()) {
    const std::string actual = rec ? "rec" : "nodeclass";
    if (a.task != actual) {
      throw ConfigError("--task " + a.task + " does not match the dataset (" +
                        actual + ")");
    }
  }
  SearchConfig cfg;
  cfg.K = a.K;
  cfg.hidden = a.hidden;
  cfg.epochs = a.epochs != 0 ? a.epochs : (rec ? 100 : 50);
  cfg.epsilon0 = a.epsilon0;
  cfg.n_restarts = a.restarts;
  cfg.seed = a.seed;
  if (a.mode == "sampled") {
    cfg.mode = SearchMode::Sampled;
  } else if (a.mode == "darts") {
    cfg.mode = SearchMode::DartsReference;
  } else {
    cfg.mode = SearchMode::SingleLevel;
  }
  SearchOutcome outcome = run_search(ds, cfg);

  fs::create_directories(a.out);
  const auto& registry = ds.graph.registry;
  write_file(fs::path(a.out) / "report.json",
             search_report_json(outcome, registry));
  const std::vector<std::string> names =
      outcome.meta_graphs.size() == 2
          ? std::vector<std::string>{"meta_graph_source", "meta_graph_target"}
          : std::vector<std::string>{"meta_graph"};
  for (std::size_t i = 0; i < outcome.meta_graphs.size(); ++i) {
    write_file(fs::path(a.out) / (names[i] + ".json"),
               meta_graph_to_json(outcome.meta_graphs[i], registry));
    write_file(fs::path(a.out) / (names[i] + ".dot"),
               export_dot(outcome.meta_graphs[i], registry));
  }
  const RestartRecord& best = outcome.restarts[outcome.best_restart];
  std::cout << "best_restart=" << outcome.best_restart
            << " val=" << fmt_metric(best.final_val_metric) << "\n";
  return 0;
}

struct EvalArgs {
  std::string data, out;
  std::string meta_graph, meta_graph2;
  std::size_t epochs = 0;  // 0 = task default (100 nodeclass, 200 rec)
  std::size_t hidden = 64;
  std::string seeds = "0..9";
};

int do_eval(const EvalArgs& a) {
  HinDataset ds = load_hin(a.data);
  const bool rec = !is_nodeclass(ds.task);
  std::vector<std::string> files{a.meta_graph};
  if (!a.meta_graph2.empty()) files.push_back(a.meta_graph2);
  if (rec && files.size() != 2) {
    throw ConfigError(
        "recommendation requires two meta graphs (one per endpoint type)");
  }
  if (!rec && files.size() != 1) {
    throw ConfigError("node classification takes exactly one meta graph");
  }
  const auto targets = task_target_types(ds.task);
  std::vector<MetaGraph> mgs;
  for (std::size_t i = 0; i < files.size(); ++i) {
    mgs.push_back(load_meta_graph_file(files[i], ds.graph, targets[i],
                                       nullptr));
  }

  const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
  std::vector<EvalReport> reports(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    EvalConfig cfg;
    cfg.hidden = a.hidden;
    cfg.epochs = a.epochs;
    cfg.seed = seeds[i];
    reports[i] = train_eval(ds, mgs, cfg);
  });

  fs::create_directories(a.out);
  const char* task_name = rec ? "rec" : "nodeclass";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    write_file(
        fs::path(a.out) / ("eval_seed" + std::to_string(seeds[i]) + ".json"),
        eval_report_json(reports[i], ds.graph.registry));
    std::cout << "task=" << task_name << " seed=" << seeds[i]
              << " val=" << fmt_metric(reports[i].val_metric_at_best)
              << " test=" << fmt_metric(reports[i].best_test_metric) << "\n";
  }
  write_file(fs::path(a.out) / "summary.json", aggregate_json(reports));
  return 0;
}

struct EnumArgs {
  std::string data, out;
  std::size_t K = 4;
  std::uint64_t cap = 4096;
  std::size_t epochs = 0;  // 0 = reduced 30-epoch budget
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
};

int do_enumerate(const EnumArgs& a) {
  HinDataset ds = load_hin(a.data);
  EvalConfig cfg;
  cfg.hidden = a.hidden;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  std::vector<RankedEntry> ranking;
  try {
    ranking = brute_force_search(ds, a.K, cfg, a.cap);
  } catch (const CapExceededError& e) {
    std::cout << e.cardinality() << " meta graphs (cap exceeded)\n";
    return 0;
  }
  const std::string jsonl = ranking_jsonl(ranking, ds.graph.registry);
  if (a.out.empty()) {
    std::cout << jsonl;
  } else {
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "ranking.jsonl", jsonl);
    std::cout << "ranked " << ranking.size() << " assignments\n";
  }
  return 0;
}

struct GradCheckArgs {
  std::string data;
  std::size_t K = 2;
  std::size_t rounds = 3;
  std::uint64_t seed = 0;
};

int do_gradcheck(const GradCheckArgs& a) {
  HinDataset ds = load_hin(a.data);
  bool ok = true;
  const auto emit = [&ok](const std::string& name, const GradCheckReport& r) {
    char err[64];
    std::snprintf(err, sizeof err, "%.3g", r.max_rel_err);
    std::cout << name << ": " << r.n_compared << " gradients, max rel err "
              << err << (r.pass() ? " ok" : " FAIL") << "\n";
    for (std::size_t i = 0; i < r.failures.size() && i < 5; ++i) {
      std::cerr << "  " << r.failures[i] << "\n";
    }
    ok = ok && r.pass();
  };
  for (std::uint64_t i = 0; i < a.rounds; ++i) {
    emit("model gradients, round " + std::to_string(i),
         gradcheck_model(ds, a.K, derive_seed(a.seed, i)));
    emit("lambda gradients, round " + std::to_string(i),
         gradcheck_lambda(ds, a.K, derive_seed(a.seed, 1000 + i)));
  }
  const std::vector<double> ts{1.0, 0.1, 0.01, 0.001};
  for (std::uint64_t i = 0; i < 2 * a.rounds; ++i) {
    Rng rng(derive_seed(a.seed, 2000 + i));
    SearchConfig scfg;
    scfg.K = a.K;
    scfg.hidden = 8;
    SearchState st = init_search_state(ds, scfg, rng);
    for (auto& arch : st.archs) spread_lambda(arch, rng);
    const std::size_t d = rng.uniform_index(st.specs.size());
    const std::size_t l = rng.uniform_index(st.specs[d].links.size());
    const Prop1Report rep = prop1_numeric_check(ds, st, d, l, ts);
    std::cout << "temperature limit, round " << i << " (dag " << d << ", link "
              << l << "): " << (rep.pass() ? "ok" : "FAIL") << "\n";
    ok = ok && rep.pass();
  }
  return ok ? 0 : 1;
}

struct SynthArgs {
  std::string config, out;
  std::uint64_t seed = 0;
};

int do_synth(const SynthArgs& a) {
  const SynthConfig cfg = parse_synth_config(read_file(a.config));
  HinDataset ds = synth_planted(cfg, a.seed);
  fs::create_directories(a.out);
  save_hin(a.out, ds.graph, nullptr, ds.task);
  const MetaGraph planted = planted_meta_graph(cfg, ds.graph.registry);
  write_file(fs::path(a.out) / "planted_meta_graph.json",
             meta_graph_to_json(planted, ds.graph.registry));
  std::cout << "wrote " << ds.graph.n_nodes << " nodes to " << a.out << "\n";
  return 0;
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable meta-graph search over heterogeneous graphs"};
  app.require_subcommand(1);

  SearchArgs sa;
  CLI::App* search = app.add_subcommand(
      "search", "run the architecture search and derive meta graph(s)");
  search->add_option("--data", sa.data, "dataset directory")->required();
  search->add_option("--task", sa.task, "nodeclass or rec (default: inferred)")
      ->check(CLI::IsMember({"nodeclass", "rec"}));
  search->add_option("--K", sa.K, "DAG depth (default 4)");
  search->add_option("--hidden", sa.hidden, "hidden width (default 64)");
  search->add_option("--epochs", sa.epochs,
                     "search epochs (default: 50 nodeclass, 100 rec)");
  search->add_option("--epsilon0", sa.epsilon0,
                     "initial exploration rate (default 0)");
  search->add_option("--restarts", sa.restarts, "restarts (default 3)");
  search->add_option("--mode", sa.mode,
                     "sampled, darts, or single-level (default sampled)")
      ->check(CLI::IsMember({"sampled", "darts", "single-level"}));
  search->add_option("--seed", sa.seed, "random seed (default 0)");
  search->add_option("--out", sa.out, "output directory")->required();

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand(
      "eval", "retrain and evaluate fixed meta graph(s) over several seeds");
  eval->add_option("--data", ea.data, "dataset directory")->required();
  eval->add_option("--meta-graph", ea.meta_graph, "meta graph JSON file")
      ->required();
  eval->add_option("--meta-graph2", ea.meta_graph2,
                   "second meta graph (recommendation source side pairs with "
                   "--meta-graph; target side here)");
  eval->add_option("--epochs", ea.epochs,
                   "training epochs (default: 100 nodeclass, 200 rec)");
  eval->add_option("--hidden", ea.hidden, "hidden width (default 64)");
  eval->add_option("--seeds", ea.seeds,
                   "seed list, e.g. 0..9 or 1,3,5 (default 0..9)");
  eval->add_option("--out", ea.out, "output directory")->required();

  EnumArgs na;
  CLI::App* enumerate = app.add_subcommand(
      "enumerate", "rank every assignment by brute force, capped");
  enumerate->add_option("--data", na.data, "dataset directory")->required();
  enumerate->add_option("--K", na.K, "DAG depth (default 4)");
  enumerate->add_option("--cap", na.cap,
                        "refuse above this many assignments (default 4096)");
  enumerate->add_option("--epochs", na.epochs,
                        "training epochs per assignment (default 30)");
  enumerate->add_option("--hidden", na.hidden, "hidden width (default 64)");
  enumerate->add_option("--seed", na.seed, "random seed (default 0)");
  enumerate->add_option("--out", na.out,
                        "write ranking.jsonl here instead of stdout");

  GradCheckArgs ga;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck",
      "finite-difference and temperature-limit checks; nonzero exit on any "
      "violation");
  gradcheck->add_option("--data", ga.data, "dataset directory")->required();
  gradcheck->add_option("--K", ga.K, "DAG depth (default 2)");
  gradcheck->add_option("--rounds", ga.rounds,
                        "independent rounds per suite (default 3)");
  gradcheck->add_option("--seed", ga.seed, "random seed (default 0)");

  SynthArgs ya;
  CLI::App* synth = app.add_subcommand(
      "synth", "generate a planted dataset in the ingestion format");
  synth->add_option("--config", ya.config, "synth config JSON")->required();
  synth->add_option("--seed", ya.seed, "random seed (default 0)");
  synth->add_option("--out", ya.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand(search)) return guarded([&] { return do_search(sa); });
  if (app.got_subcommand(eval)) return guarded([&] { return do_eval(ea); });
  if (app.got_subcommand(enumerate)) {
    return guarded([&] { return do_enumerate(na); });
  }
  if (app.got_subcommand(gradcheck)) {
    return guarded([&] { return do_gradcheck(ga); });
  }
  if (app.got_subcommand(synth)) return guarded([&] { return do_synth(ya); });
  return 2;
}
