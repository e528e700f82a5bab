// Command-line front end: dataset generation, statistics, splits, training,
// evaluation, proof synthesis, benchmarking and the line protocol.

#include <chrono>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "proofgym/agent.hpp"
#include "proofgym/corpus.hpp"
#include "proofgym/models.hpp"
#include "proofgym/rewrite.hpp"
#include "proofgym/trace.hpp"

using namespace proofgym;
using json = nlohmann::ordered_json;

namespace {

struct Parts {
  std::vector<TraceRecord> train, valid, test;
};

std::array<int, 3> parse_ratio(const std::string& text) {
  std::array<int, 3> r{};
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> r[0] >> c1 >> r[1] >> c2 >> r[2]) || c1 != ':' || c2 != ':' || !in.eof())
    throw CLI::ValidationError("--ratio", "expected A:B:C");
  return r;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::string> symbols_of(const TermStore& store) {
  std::vector<std::string> out;
  for (const auto& [name, arity] : store.declarations()) out.push_back(name);
  return out;
}

bool is_toy(const Dataset& d) { return d.manifest.value("kind", "") == "toy"; }

Split load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file " + path);
  const json j = json::parse(in);
  Split s;
  for (std::size_t p = 0; p < Split::kParts; ++p) s.lemmas[p] = j.at(Split::kNames[p]).get<std::vector<std::string>>();
  return s;
}

json split_json(const Split& s) {
  json j;
  for (std::size_t p = 0; p < Split::kParts; ++p) j[Split::kNames[p]] = s.lemmas[p];
  json counts;
  for (std::size_t p = 0; p < Split::kParts; ++p) counts[Split::kNames[p]] = s.records[p];
  j["records"] = counts;
  return j;
}

// Toy datasets carry their own train/test partition in the lemma names;
// other corpora are split by lemma.
Parts partition(const Dataset& d, const std::string& split_file, const std::string& ratio, std::uint64_t seed) {
  Parts parts;
  if (split_file.empty() && is_toy(d)) {
    for (const auto& r : d.records) (r.lemma.rfind("test/", 0) == 0 ? parts.test : parts.train).push_back(r);
    return parts;
  }
  const Split s = split_file.empty() ? split_by_lemma(d.records, parse_ratio(ratio), seed) : load_split(split_file);
  parts.train = select_records(d.records, s, 0);
  parts.valid = select_records(d.records, s, 1);
  parts.test = select_records(d.records, s, 2);
  return parts;
}

std::vector<TheoremSpec> toy_theorems(TermStore& store, const std::vector<TraceRecord>& records) {
  std::vector<TheoremSpec> out;
  for (const auto& r : records) {
    if (r.state_id != 0 || store.kind(r.goal) != TermKind::Prod) continue;
    const auto lhs = goal_lhs(store, store.prod_body(r.goal));
    if (!lhs) throw std::runtime_error("lemma " + r.lemma + " is not a rewrite theorem");
    out.push_back(make_theorem(store, *lhs, r.lemma));
  }
  return out;
}

void print_steps(const SynthesisResult& r) {
  for (const auto& s : r.steps)
    std::cout << "  state " << s.state << ": " << s.tactic << (s.fallback ? " [oracle]" : "")
              << (s.accepted ? "" : " [rejected]") << "\n";
  std::cout << to_string(r.outcome) << " (fallback uses " << r.fallback_uses << ")"
            << (r.error.empty() ? "" : ": " + r.error) << "\n";
}

json baselines(const TermStore& store, const std::vector<Example>& train, const std::vector<Example>& test,
               int classes, std::uint64_t seed) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& ex : train) {
    const auto f = extract_features(store, ex.ctx, ex.goal).values();
    x.emplace_back(f.begin(), f.end());
    y.push_back(ex.label);
  }
  const auto linear = train_linear_baseline(x, y, classes, LinearConfig{.seed = seed});
  const int constant = constant_baseline(y);
  std::vector<int> truth, lin, con;
  for (const auto& ex : test) {
    const auto f = extract_features(store, ex.ctx, ex.goal).values();
    truth.push_back(ex.label);
    lin.push_back(linear.predict({f.begin(), f.end()}));
    con.push_back(constant);
  }
  return {{"constant", score(truth, con, classes).accuracy}, {"linear", score(truth, lin, classes).accuracy}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proof-state learning environment: rewrite-domain theorem prover, trace datasets and models"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  std::string kind = "toy", out_path;
  DatasetSpec toy_spec;
  GenericCorpusSpec generic_spec;
  gen->add_option("--kind", kind, "toy or generic")->check(CLI::IsMember({"toy", "generic"}));
  gen->add_option("--train", toy_spec.n_train, "toy training theorems");
  gen->add_option("--test", toy_spec.n_test, "toy test theorems");
  gen->add_option("--length", toy_spec.length, "toy expression leaves");
  gen->add_option("--lemmas", generic_spec.lemmas, "generic lemmas");
  gen->add_option("--implicit-rate", generic_spec.implicit_rate, "generic implicit argument rate");
  std::uint64_t gen_seed = 0;
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", out_path)->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Print AST node and tactic histograms");
  std::string in_path;
  stats->add_option("--in", in_path)->required();

  // split
  auto* split = app.add_subcommand("split", "Lemma-level split");
  std::string ratio = "8:1:1";
  std::uint64_t split_seed = 0;
  std::string split_out;
  split->add_option("--in", in_path)->required();
  split->add_option("--ratio", ratio);
  split->add_option("--seed", split_seed);
  split->add_option("--out", split_out, "write the assignment as JSON");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string task = "tac", level = "kernel", cell = "gru", ckpt, split_file, metrics_out, classes_file;
  ModelConfig mcfg;
  TrainConfig tcfg;
  std::uint64_t seed = 0;
  train->add_option("--in", in_path)->required();
  train->add_option("--task", task)->check(CLI::IsMember({"pos", "tac", "gtac", "arg"}));
  train->add_option("--level", level)->check(CLI::IsMember({"kernel", "mid"}));
  train->add_option("--cell", cell)->check(CLI::IsMember({"gru", "treelstm", "tanh"}));
  train->add_option("--dim", mcfg.dim)->check(CLI::PositiveNumber);
  train->add_option("--batch", tcfg.batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--epochs", tcfg.max_epochs);
  train->add_option("--patience", tcfg.patience);
  train->add_option("--dropout", tcfg.input_dropout, "input dropout rate");
  train->add_option("--seed", seed);
  train->add_option("--split", split_file, "split JSON from `split --out`");
  train->add_option("--ratio", ratio);
  train->add_option("--split-seed", split_seed);
  train->add_option("--classes", classes_file, "tactic class map (raw<TAB>class)");
  train->add_option("--metrics", metrics_out, "write test metrics JSON");
  train->add_option("--out", ckpt)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string pr_out;
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--in", in_path)->required();
  eval->add_option("--split", split_file);
  eval->add_option("--ratio", ratio);
  eval->add_option("--split-seed", split_seed);
  eval->add_option("--classes", classes_file);
  eval->add_option("--pr", pr_out, "write the precision-recall curve (argument task)");

  // prove
  auto* prove = app.add_subcommand("prove", "Synthesize a proof greedily");
  std::string theorem;
  bool fallback = false, interactive = false;
  prove->add_option("--ckpt", ckpt)->required();
  prove->add_option("--theorem", theorem)->required();
  prove->add_flag("--fallback", fallback, "substitute oracle steps for failed predictions");
  prove->add_flag("--interactive", interactive, "step through the proof by hand");

  // bench
  auto* bench = app.add_subcommand("bench", "Greedy synthesis over the test theorems");
  std::string report_path;
  bench->add_option("--ckpt", ckpt)->required();
  bench->add_option("--in", in_path)->required();
  bench->add_option("--report", report_path);

  // serve
  auto* serve = app.add_subcommand("serve", "Line protocol on stdin/stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      TermStore store = TermStore::with_rewrite_signature();
      if (kind == "toy") {
        toy_spec.seed = gen_seed;
        const auto data = gen_dataset(store, toy_spec);
        json manifest{{"kind", "toy"},
                      {"n_train", toy_spec.n_train},
                      {"n_test", toy_spec.n_test},
                      {"length", toy_spec.length},
                      {"seed", gen_seed}};
        const auto records = dataset_records(store, data);
        save_dataset(out_path, store, records, manifest);
        std::cout << "wrote " << records.size() << " records of " << data.train.size() + data.test.size()
                  << " theorems to " << out_path << "\n";
      } else {
        TermStore gstore;
        declare_generic_signature(gstore);
        generic_spec.seed = gen_seed;
        const auto records = gen_generic_corpus(gstore, generic_spec);
        json manifest{{"kind", "generic"}, {"lemmas", generic_spec.lemmas}, {"seed", gen_seed}};
        save_dataset(out_path, gstore, records, manifest);
        std::cout << "wrote " << records.size() << " records of " << generic_spec.lemmas << " lemmas to " << out_path
                  << "\n";
      }
      return 0;
    }

    if (*stats) {
      const Dataset d = load_dataset(in_path);
      const auto h = histograms(d.store, d.records);
      std::cout << "# ast nodes\n" << format_table(h.ast_nodes) << "# tactics\n" << format_table(h.tactics);
      return 0;
    }

    if (*split) {
      const Dataset d = load_dataset(in_path);
      const Split s = split_by_lemma(d.records, parse_ratio(ratio), split_seed);
      for (std::size_t p = 0; p < Split::kParts; ++p)
        std::printf("%s\t%zu lemmas\t%zu records\t%.2f%%\n", Split::kNames[p], s.lemmas[p].size(), s.records[p],
                    100 * s.share(p));
      if (!split_out.empty()) write_file(split_out, split_json(s).dump(2) + "\n");
      return 0;
    }

    if (*serve) {
      TermStore store = TermStore::with_rewrite_signature();
      serve_protocol(std::cin, std::cout, store);
      return 0;
    }

    const TacticClassMap class_map = classes_file.empty() ? TacticClassMap::defaults() : TacticClassMap::load(classes_file);

    if (*train) {
      Dataset d = load_dataset(in_path);
      mcfg.task = task_from_string(task);
      mcfg.cell = cell_from_string(cell);
      mcfg.drop_implicit = level == "mid";
      mcfg.seed = seed;
      tcfg.seed = seed;
      tcfg.log = [](const std::string& line) { std::cerr << line << "\n"; };
      const Parts parts = partition(d, split_file, ratio, split_seed);
      ExampleStats skipped;
      auto train_ex = make_examples(parts.train, mcfg.task, class_map, {}, &skipped);
      if (skipped.skipped > 0) std::cerr << "skipped " << skipped.skipped << " training records without a label\n";
      auto valid_ex = make_examples(parts.valid, mcfg.task, class_map);
      if (valid_ex.empty()) std::tie(train_ex, valid_ex) = carve_by_lemma(train_ex, 0.1, seed);
      const auto test_ex = make_examples(parts.test, mcfg.task, class_map);
      Model m = Model::create(mcfg, ClassSpace::for_task(mcfg.task, class_map), symbols_of(d.store));
      std::cerr << "train " << train_ex.size() << " / valid " << valid_ex.size() << " / test " << test_ex.size()
                << " states\n";
      const auto report = train_classifier(m, d.store, train_ex, valid_ex, tcfg);
      m.save(ckpt);
      json result;
      if (mcfg.task == Task::Argument) {
        const auto a = evaluate_arguments(m, d.store, test_ex);
        result = {{"task", "arg"},         {"pairs", a.pairs},
                  {"positives", a.positives}, {"recall_at_precision_0.1", a.recall_at_10},
                  {"average_precision", a.average_precision}};
      } else {
        result = metrics_json(evaluate(m, d.store, test_ex), m.space());
        result["baselines"] = baselines(d.store, train_ex, test_ex, m.space().size(), seed);
      }
      result["best_epoch"] = report.best_epoch;
      result["best_valid"] = report.best_valid;
      std::cout << result.dump() << "\n";
      if (!metrics_out.empty()) write_file(metrics_out, result.dump(2) + "\n");
      return 0;
    }

    if (*eval) {
      Dataset d = load_dataset(in_path);
      Model m = Model::load(ckpt);
      const Parts parts = partition(d, split_file, ratio, split_seed);
      const auto test_ex = make_examples(parts.test, m.config().task, class_map);
      if (test_ex.empty()) throw std::runtime_error("no test states for this task");
      if (m.config().task == Task::Argument) {
        const auto a = evaluate_arguments(m, d.store, test_ex);
        std::cout << json{{"task", "arg"},
                          {"pairs", a.pairs},
                          {"positives", a.positives},
                          {"recall_at_precision_0.1", a.recall_at_10},
                          {"average_precision", a.average_precision}}
                         .dump()
                  << "\n";
        if (!pr_out.empty()) write_file(pr_out, pr_csv(a.curve));
      } else {
        std::cout << metrics_json(evaluate(m, d.store, test_ex), m.space()).dump() << "\n";
      }
      return 0;
    }

    if (*prove) {
      Model m = Model::load(ckpt);
      TermStore store = TermStore::with_rewrite_signature();
      const TermId t = parse_sexpr(store, theorem);
      if (!interactive) {
        const auto r = fallback ? synthesize_with_fallback(store, t, m) : synthesize_greedy(store, t, m);
        print_steps(r);
        return r.outcome == Outcome::Completed ? 0 : 1;
      }
      ProtocolServer server(store);
      std::cout << server.handle("THEOREM " + theorem) << "\n"
                << "commands: TACTIC rewrite <pos> <left|right>, TACTIC reflexivity, STATE, UNDO, SUGGEST, QUIT\n";
      const Policy policy = model_policy(m);
      for (std::string line; !server.finished() && (std::cout << "> " << std::flush, std::getline(std::cin, line));) {
        if (line == "SUGGEST") {
          const std::string state = server.handle("STATE");
          std::cout << state << "\n";
          if (state.rfind("OK", 0) != 0) continue;
          // the protocol only shows text; rebuild the goal from it
          const auto at = state.find(" goal=");
          const TermId goal = parse_sexpr(store, state.substr(at + 6));
          const auto p = m.predict(store, {{"b", store.constant(sym::carrier)}}, goal);
          std::cout << "suggest " << tactic_text(toy_action(argmax(p) + 1)) << " (p=" << p[static_cast<std::size_t>(argmax(p))]
                    << ")\n";
          continue;
        }
        std::cout << server.handle(line) << "\n";
      }
      return 0;
    }

    if (*bench) {
      Dataset d = load_dataset(in_path);
      if (!is_toy(d)) throw std::runtime_error("bench needs a toy dataset");
      Model m = Model::load(ckpt);
      const Parts parts = partition(d, "", ratio, 0);
      const auto theorems = toy_theorems(d.store, parts.test);
      const auto r = run_benchmark(d.store, theorems, m);
      std::printf("theorems %zu\nstrict completed %zu\nfallback completed %zu\nmean fallback uses %.3f\n"
                  "tactic accuracy %.4f (%zu states)\ntime %.1fs\n",
                  r.n, r.strict_completed, r.fallback_completed, r.mean_fallback_uses, r.tactic_accuracy, r.states,
                  r.seconds);
      if (!report_path.empty()) write_file(report_path, report_json(r).dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
