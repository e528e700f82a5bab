// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "proofgym/agent.hpp"
#include "proofgym/corpus.hpp"
#include "proofgym/embed.hpp"
#include "proofgym/models.hpp"
#include "proofgym/rewrite.hpp"
#include "proofgym/trace.hpp"

using namespace proofgym;

#ifndef PROOFGYM_TEST_DATA
#define PROOFGYM_TEST_DATA "tests/data"
#endif

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::vector<std::string> symbol_names(const TermStore& store) {
  std::vector<std::string> out;
  for (const auto& [name, arity] : store.declarations()) out.push_back(name);
  return out;
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<double> all_grads(const ParamStore& params) {
  std::vector<double> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& g = params[static_cast<ParamId>(p)].grad;
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Toy data with the default spec and fixed seeds, shared by 2 and 3.
struct ToyData {
  TermStore store = TermStore::with_rewrite_signature();
  RewriteDataset data;
  std::vector<TraceRecord> train_records, test_records;

  ToyData() {
    DatasetSpec spec;
    spec.seed = 1;
    data = gen_dataset(store, spec);
    RewriteDataset train = data, test = data;
    train.test.clear();
    test.train.clear();
    train_records = dataset_records(store, train);
    test_records = dataset_records(store, test);
  }
};

Model train_toy(ToyData& toy, Task task, double& test_accuracy, int& best_epoch) {
  const auto examples = make_examples(toy.train_records, task);
  const auto [train, valid] = carve_by_lemma(examples, 0.1, 7);
  Model m = Model::create(ModelConfig{.task = task, .seed = 3}, ClassSpace::for_task(task), symbol_names(toy.store));
  const auto report = train_classifier(m, toy.store, train, valid, TrainConfig{.seed = 5});
  best_epoch = report.best_epoch;
  test_accuracy = evaluate(m, toy.store, make_examples(toy.test_records, task)).accuracy;
  return m;
}

// ---------------------------------------------------------------------------

Verdict proof_length_law() {
  const auto t0 = Clock::now();
  TermStore store = TermStore::with_rewrite_signature();
  Rng rng(2024);
  std::size_t bad = 0, total = 0;
  for (int length = 2; length <= 10; ++length) {
    for (int i = 0; i < 1000; ++i, ++total) {
      const TermId expr = gen_expression(store, rng, length);
      const TheoremSpec thm = make_theorem(store, expr, "law");
      std::size_t rewrites = 0;
      for (const auto& t : thm.proof) rewrites += std::holds_alternative<RewriteTactic>(t);
      const ProofSession s = replay(store, thm);
      if (rewrites != static_cast<std::size_t>(length - 1) || !s.complete()) ++bad;
    }
  }
  const double secs = since(t0);
  return {bad == 0 && secs < 30, fmt("%zu theorems over L=2..10, %zu violations, %.1fs", total, bad, secs)};
}

Verdict toy_benchmark() {
  const auto t0 = Clock::now();
  ToyData toy;
  double accuracy = 0;
  int best_epoch = 0;
  Model m = train_toy(toy, Task::ToyTactic, accuracy, best_epoch);
  const auto r = run_benchmark(toy.store, toy.data.test, m);
  const double secs = since(t0);
  const bool pass = r.tactic_accuracy >= 0.85 && r.strict_completed >= 5 && r.fallback_completed == r.n && r.n == 50 &&
                    r.mean_fallback_uses <= 3 && secs < 1800;
  return {pass, fmt("accuracy %.4f (%zu states), strict %zu/%zu, fallback %zu/%zu, mean fallback uses %.2f "
                    "(rejections %.2f), best epoch %d, %.0fs",
                    r.tactic_accuracy, r.states, r.strict_completed, r.n, r.fallback_completed, r.n,
                    r.mean_fallback_uses, r.mean_rejections, best_epoch, secs)};
}

Verdict baseline_ordering() {
  const auto t0 = Clock::now();
  ToyData toy;
  double model_acc = 0;
  int best_epoch = 0;
  train_toy(toy, Task::PosEval, model_acc, best_epoch);

  const auto train = make_examples(toy.train_records, Task::PosEval);
  const auto test = make_examples(toy.test_records, Task::PosEval);
  const int classes = ClassSpace::for_task(Task::PosEval).size();
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& ex : train) {
    const auto f = extract_features(toy.store, ex.ctx, ex.goal).values();
    x.emplace_back(f.begin(), f.end());
    y.push_back(ex.label);
  }
  const auto linear = train_linear_baseline(x, y, classes, LinearConfig{.seed = 5});
  const int constant = constant_baseline(y);
  std::vector<int> truth, lin, con;
  for (const auto& ex : test) {
    const auto f = extract_features(toy.store, ex.ctx, ex.goal).values();
    truth.push_back(ex.label);
    lin.push_back(linear.predict({f.begin(), f.end()}));
    con.push_back(constant);
  }
  const double lin_acc = score(truth, lin, classes).accuracy;
  const double con_acc = score(truth, con, classes).accuracy;
  const bool pass = con_acc <= lin_acc && lin_acc <= model_acc && model_acc >= con_acc + 0.10;
  return {pass, fmt("constant %.4f <= linear %.4f <= GRU %.4f, margin %.1f points, %zu test states, %.0fs", con_acc,
                    lin_acc, model_acc, 100 * (model_acc - con_acc), test.size(), since(t0))};
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  auto record = [&](const std::string& what, const GradCheck& c) {
    checked += c.checked;
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      where = what + " " + c.worst;
    }
  };

  // one graph per op kind
  ParamStore ps;
  Rng rng(3);
  const ParamId W = ps.add("W", 4, 4, rng, 0.8), V = ps.add("V", 3, 4, rng, 0.8), b = ps.add("b", 4, 1, rng, 0.5),
                T = ps.add("table", 5, 4, rng, 1.0);
  const std::vector<double> in{0.3, -0.2, 0.1, 0.7};
  const std::vector<std::pair<std::string, std::function<NodeId(Graph&)>>> ops{
      {"param", [&](Graph& g) { return g.sum_all(g.mul(g.param(b), g.param(b))); }},
      {"gather", [&](Graph& g) { return g.sum_all(g.mul(g.gather(T, 2), g.gather(T, 4))); }},
      {"matvec", [&](Graph& g) { return g.sum_all(g.tanh(g.matvec(W, g.gather(T, 1)))); }},
      {"add", [&](Graph& g) { return g.sum_all(g.tanh(g.add(std::vector<NodeId>{g.param(b), g.gather(T, 0), g.input(in)}))); }},
      {"mul", [&](Graph& g) { return g.sum_all(g.mul(g.gather(T, 1), g.param(b))); }},
      {"sigmoid", [&](Graph& g) { return g.sum_all(g.sigmoid(g.matvec(W, g.param(b)))); }},
      {"tanh", [&](Graph& g) { return g.sum_all(g.tanh(g.matvec(W, g.gather(T, 3)))); }},
      {"one_minus", [&](Graph& g) { return g.sum_all(g.mul(g.one_minus(g.gather(T, 1)), g.gather(T, 2))); }},
      {"concat", [&](Graph& g) { return g.sum_all(g.tanh(g.concat(std::vector<NodeId>{g.param(b), g.gather(T, 4)}))); }},
      {"dropout", [&](Graph& g) { return g.sum_all(g.tanh(g.matvec(W, g.dropout(g.gather(T, 0), 0.5)))); }},
      {"softmax_xent", [&](Graph& g) { return g.softmax_xent(g.matvec(V, g.gather(T, 2)), 1, 1.5); }},
      {"sum_all", [&](Graph& g) { return g.sum_all(g.tanh(g.param(b))); }},
      {"weighted_sum",
       [&](Graph& g) {
         return g.weighted_sum(std::vector<NodeId>{g.softmax_xent(g.matvec(V, g.param(b)), 0), g.sum_all(g.gather(T, 1))},
                               0.7);
       }},
  };
  for (const auto& [name, build] : ops)
    for (bool batched : {false, true}) record(name, check_gradients(ps, build, 1e-5, 500, batched));

  // full proof-state losses for each cell and the argument head
  TermStore store = TermStore::with_rewrite_signature();
  const TermId goal = parse_sexpr(store, "(app eq (app f (app f (c e) (v b)) (app f (v b) (c m))) (v b))");
  std::size_t largest = 0;
  for (CellKind cell : {CellKind::Tanh, CellKind::GRU, CellKind::TreeLSTM}) {
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .cell = cell, .dim = 4, .seed = 11},
                            ClassSpace::for_task(Task::ToyTactic), symbol_names(store));
    largest = std::max(largest, m.params().scalar_count());
    Example ex{.lemma = "g", .state = 1, .ctx = {{"b", store.constant("G")}}, .goal = goal, .label = 3, .arg_flags = {}};
    const std::vector<const Example*> batch{&ex};
    auto build = [&](Graph& g) { return m.batch_loss(g, store, batch, 9, 0); };
    record(std::string("state loss ") + to_string(cell), check_gradients(m.params(), build));
  }
  const bool pass = worst < 1e-4 && largest <= 500 && since(t0) < 60;
  return {pass, fmt("%zu op kinds + 3 proof-state losses (<= %zu params), %zu derivatives, max rel error %.2e at %s, "
                    "%.1fs",
                    ops.size(), largest, checked, worst, where.c_str(), since(t0))};
}

// Product-free goal whose left side doubles the same subterm at each level,
// under a context of two hypotheses built from it.
struct Duplicated {
  TermStore store = TermStore::with_rewrite_signature();
  std::vector<ContextEntry> ctx;
  TermId goal;
  std::size_t expanded = 0, distinct = 0;

  Duplicated() {
    store.declare("P", 1);
    TermId t = store.app("f", {store.var("b"), store.constant("e")});
    TermId u = store.app("f", {store.constant("m"), store.var("b")});
    for (int i = 0; i < 7; ++i) {
      const TermId next = store.app("f", {t, u});
      u = store.app("f", {u, t});
      t = next;
    }
    ctx = {{"b", store.constant("G")}, {"h", store.app("P", {t})}};
    goal = store.app("eq", {store.app("f", {t, u}), store.var("b")});
    std::set<TermId> seen;
    std::function<void(TermId)> walk = [&](TermId x) {
      if (!seen.insert(x).second) return;
      for (TermId k : store.node(x).kids) walk(k);
    };
    for (const auto& e : ctx) {
      expanded += expanded_size(store, e.type);
      walk(e.type);
    }
    expanded += expanded_size(store, goal);
    walk(goal);
    distinct = seen.size();
  }
};

Verdict sharing_and_batching() {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;

  // memoized vs naive values, bitwise, for every cell
  {
    Duplicated d;
    for (CellKind cell : {CellKind::Tanh, CellKind::GRU, CellKind::TreeLSTM}) {
      ParamStore ps;
      Rng rng(5);
      const EmbedNet net = EmbedNet::create(ps, cell, 16, symbol_names(d.store), rng);
      std::vector<std::vector<double>> values;
      for (bool memo : {true, false}) {
        Graph g(ps, GraphOptions{.share = memo});
        Embedder e(g, net, d.store, EmbedConfig{.pass_seed = 3, .memo = memo});
        const auto st = e.embed_state(d.ctx, d.goal);
        g.forward(false);
        values.push_back(copy(g.value(st.state)));
      }
      if (values[0] != values[1]) {
        pass = false;
        detail += fmt("memo differs for %s; ", to_string(cell));
      }
    }
  }

  // batched vs naive on a 32-state toy batch
  double value_err = 0, grad_err = 0;
  {
    TermStore store = TermStore::with_rewrite_signature();
    const auto data = gen_dataset(store, DatasetSpec{32, 1, 10, 4});
    RewriteDataset train = data;
    train.test.clear();
    auto examples = make_examples(dataset_records(store, train), Task::ToyTactic);
    examples.resize(32);
    std::vector<const Example*> batch;
    for (const auto& ex : examples) batch.push_back(&ex);
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .dim = 32, .seed = 2},
                            ClassSpace::for_task(Task::ToyTactic), symbol_names(store));
    std::vector<double> loss, grads[2];
    for (bool batched : {false, true}) {
      m.params().zero_grad();
      Graph g(m.params());
      const NodeId l = m.batch_loss(g, store, batch, 17, 0.1);
      g.forward(batched);
      g.backward(l, batched);
      loss.push_back(g.scalar(l));
      grads[batched] = all_grads(m.params());
    }
    value_err = std::abs(loss[0] - loss[1]);
    for (std::size_t i = 0; i < grads[0].size(); ++i) grad_err = std::max(grad_err, std::abs(grads[0][i] - grads[1][i]));
    if (value_err > 1e-9 || grad_err > 1e-7) pass = false;
  }

  // speed on a heavily duplicated state
  Duplicated d;
  const double duplication = static_cast<double>(d.expanded) / static_cast<double>(d.distinct);
  ParamStore ps;
  Rng rng(6);
  const EmbedNet net = EmbedNet::create(ps, CellKind::GRU, 128, symbol_names(d.store), rng);
  auto run = [&](bool fast) {
    double best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = Clock::now();
      Graph g(ps, GraphOptions{.share = fast});
      Embedder e(g, net, d.store, EmbedConfig{.pass_seed = 1, .memo = fast});
      const NodeId loss = g.sum_all(e.embed_state(d.ctx, d.goal).state);
      g.forward(fast);
      g.backward(loss, fast);
      best = std::min(best, since(start));
    }
    return best;
  };
  const double fast = run(true), naive = run(false);
  const double speedup = naive / fast;
  if (d.expanded < 2000 || duplication < 4 || speedup < 2) pass = false;
  pass = pass && since(t0) < 120;
  detail += fmt("memo bitwise for 3 cells, batched error %.1e (values) / %.1e (grads), %zu expanded nodes, "
                "%.1fx duplication, speedup %.1fx (%.3fs vs %.3fs), %.1fs",
                value_err, grad_err, d.expanded, duplication, speedup, fast, naive, since(t0));
  return {pass, detail};
}

Verdict alpha_invariance() {
  TermStore store = TermStore::with_rewrite_signature();
  ParamStore ps;
  Rng rng(8);
  const EmbedNet net = EmbedNet::create(ps, CellKind::GRU, 32, symbol_names(store), rng);
  bool pass = true;
  std::string detail;

  auto embed = [&](const std::string& text, std::uint64_t seed, bool memo) {
    Graph g(ps, GraphOptions{.share = memo});
    Embedder e(g, net, store, EmbedConfig{.pass_seed = seed, .memo = memo});
    Env env;
    const NodeId n = e.embed_term(parse_sexpr(store, text), env);
    g.forward();
    return copy(g.value(n));
  };
  for (bool memo : {true, false}) {
    const auto x = embed("(prod x (c G) (v x))", 42, memo);
    const auto y = embed("(prod y (c G) (v y))", 42, memo);
    if (x != y) pass = false;
    const auto nested_x = embed("(prod x (c G) (prod z (c G) (app f (v x) (v z))))", 42, memo);
    const auto nested_y = embed("(prod y (c G) (prod w (c G) (app f (v y) (v w))))", 42, memo);
    if (nested_x != nested_y) pass = false;
  }
  detail += pass ? "renamed products bitwise equal; " : "renamed products differ; ";

  // every occurrence of a bound variable reads the one binder vector: with
  // memo and sharing off, the pass creates one input node per binder and
  // all occurrences consume it
  bool one_vector = true;
  for (const auto& [text, binders, uses] : std::vector<std::tuple<std::string, int, int>>{
           {"(prod x (c G) (app f (app f (v x) (c e)) (app f (c m) (v x))))", 1, 2},
           {"(prod x (c G) (prod y (c G) (app f (app f (v x) (v y)) (app f (v y) (v x)))))", 2, 4}}) {
    Graph g(ps, GraphOptions{.share = false});
    Embedder e(g, net, store, EmbedConfig{.pass_seed = 5, .memo = false});
    Env env;
    const std::size_t before = g.size();
    e.embed_term(parse_sexpr(store, text), env);
    std::vector<NodeId> inputs;
    for (std::size_t i = before; i < g.size(); ++i)
      if (g.node(static_cast<NodeId>(i)).op == Op::Input) inputs.push_back(static_cast<NodeId>(i));
    int consumers = 0;
    for (std::size_t i = before; i < g.size(); ++i)
      for (NodeId in : g.node(static_cast<NodeId>(i)).ins)
        consumers += std::count(inputs.begin(), inputs.end(), in) > 0;
    if (static_cast<int>(inputs.size()) != binders || consumers < uses) one_vector = false;
  }
  detail += one_vector ? "one vector per binder; " : "binder vectors duplicated; ";

  const auto s1 = embed("(prod x (c G) (app f (v x) (c e)))", 1, true);
  const auto s2 = embed("(prod x (c G) (app f (v x) (c e)))", 2, true);
  const bool seeds_differ = s1 != s2;
  detail += seeds_differ ? "different seeds differ" : "different seeds agree";
  return {pass && one_vector && seeds_differ, detail};
}

bool same_records(const TermStore& sa, const std::vector<TraceRecord>& a, const TermStore& sb,
                  const std::vector<TraceRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.lemma != y.lemma || x.state_id != y.state_id || x.parent_id != y.parent_id) return false;
    if (!(x.tactic == y.tactic) || x.children != y.children || x.ctx.size() != y.ctx.size()) return false;
    if (print_sexpr(sa, x.goal) != print_sexpr(sb, y.goal)) return false;
    for (std::size_t k = 0; k < x.ctx.size(); ++k)
      if (x.ctx[k].name != y.ctx[k].name || print_sexpr(sa, x.ctx[k].type) != print_sexpr(sb, y.ctx[k].type))
        return false;
  }
  return true;
}

Verdict data_plumbing() {
  std::string detail;
  bool round_trip = true;
  {
    TermStore store = TermStore::with_rewrite_signature();
    const auto records = dataset_records(store, gen_dataset(store, DatasetSpec{40, 10, 10, 3}));
    const Dataset d = read_dataset(write_dataset(store, records));
    round_trip = round_trip && same_records(store, records, d.store, d.records);
  }
  TermStore gstore;
  const auto generic = gen_generic_corpus(gstore, GenericCorpusSpec{.lemmas = 60, .seed = 4});
  {
    const Dataset d = read_dataset(write_dataset(gstore, generic));
    round_trip = round_trip && same_records(gstore, generic, d.store, d.records);
  }
  detail += round_trip ? "round trip identical; " : "round trip differs; ";

  const Split a = split_by_lemma(generic, {8, 1, 1}, 9), b = split_by_lemma(generic, {8, 1, 1}, 9);
  std::set<std::string> all;
  std::size_t count = 0;
  for (const auto& part : a.lemmas) {
    count += part.size();
    all.insert(part.begin(), part.end());
  }
  const auto names = lemma_names(generic);
  const bool split_ok = a.lemmas == b.lemmas && count == all.size() &&
                        all == std::set<std::string>(names.begin(), names.end()) &&
                        a.records[0] + a.records[1] + a.records[2] == generic.size();
  detail += split_ok ? "split deterministic, disjoint, exhaustive; " : "split invariants broken; ";

  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (int i = 0; i < 100; ++i) sizes.emplace_back(fmt("lemma/%04d", i), 12);
  const Split u = split_by_lemma(sizes, {8, 1, 1}, 0);
  double dev = 0;
  const double target[] = {0.8, 0.1, 0.1};
  for (std::size_t p = 0; p < 3; ++p) dev = std::max(dev, std::abs(u.share(p) - target[p]));
  detail += fmt("uniform shares %.1f/%.1f/%.1f; ", 100 * u.share(0), 100 * u.share(1), 100 * u.share(2));

  const DepthBin bins;
  const bool bins_ok = bin_depth(0, bins) == 1 && bin_depth(5, bins) == 1 && bin_depth(6, bins) == 2 &&
                       bin_depth(19, bins) == 2 && bin_depth(20, bins) == 3;
  detail += bins_ok ? "bin goldens hold" : "bin goldens fail";
  return {round_trip && split_ok && dev <= 0.02 + 1e-12 && bins_ok, detail};
}

Verdict protocol_replay() {
  std::ifstream in(std::string(PROOFGYM_TEST_DATA) + "/protocol_golden.txt");
  if (!in) return {false, "golden transcript missing"};
  std::string requests, expected;
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("> ", 0) == 0) requests += line.substr(2) + "\n", ++n;
    if (line.rfind("< ", 0) == 0) expected += line.substr(2) + "\n";
  }
  TermStore store = TermStore::with_rewrite_signature();
  std::istringstream req(requests);
  std::ostringstream resp;
  serve_protocol(req, resp, store);
  const bool same = resp.str() == expected;
  return {same && n > 0, fmt("%zu requests, responses %s", n, same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"proof-length law", proof_length_law},
      {"toy benchmark", toy_benchmark},
      {"baseline ordering", baseline_ordering},
      {"gradient correctness", gradient_correctness},
      {"sharing and batching", sharing_and_batching},
      {"alpha invariance", alpha_invariance},
      {"data plumbing", data_plumbing},
      {"protocol replay", protocol_replay},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
