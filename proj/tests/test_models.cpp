#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "proofgym/corpus.hpp"
#include "proofgym/models.hpp"
#include "proofgym/rewrite.hpp"
#include "test_util.hpp"

using namespace proofgym;

namespace {

std::vector<std::string> symbol_names(const TermStore& store) {
  std::vector<std::string> out;
  for (const auto& [name, arity] : store.declarations()) out.push_back(name);
  return out;
}

struct Toy {
  TermStore store = TermStore::with_rewrite_signature();
  RewriteDataset data;
  std::vector<TraceRecord> train, test;

  Toy(int n_train, int n_test, int length, std::uint64_t seed) {
    data = gen_dataset(store, DatasetSpec{n_train, n_test, length, seed});
    RewriteDataset a = data, b = data;
    a.test.clear();
    b.train.clear();
    train = dataset_records(store, a);
    test = dataset_records(store, b);
  }
};

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("toy class encoding is a bijection") {
    std::set<int> seen;
    for (int pos = 1; pos <= kToyMaxPosition; ++pos) {
      for (Law law : {Law::LeftId, Law::RightId}) {
        const RewriteTactic t{Position{pos}, law};
        const int c = toy_class(t);
        CHECK(c >= 1);
        CHECK(c <= kToyClasses);
        CHECK(toy_action(c) == t);
        seen.insert(c);
      }
    }
    CHECK(seen.size() == 18);
    CHECK(toy_class({Position{1}, Law::LeftId}) == 1);
    CHECK(toy_class({Position{1}, Law::RightId}) == 2);
    CHECK(toy_class({Position{9}, Law::RightId}) == 18);
    CHECK_THROWS_AS(toy_class({Position{10}, Law::LeftId}), ModelError);
    CHECK_THROWS_AS(toy_action(0), ModelError);
  }

  TEST_CASE("class spaces") {
    CHECK(ClassSpace::for_task(Task::PosEval).size() == 3);
    CHECK(ClassSpace::for_task(Task::ToyTactic).size() == 18);
    CHECK(ClassSpace::for_task(Task::GenericTactic).size() == 23);
    CHECK(ClassSpace::for_task(Task::Argument).size() == 2);
    CHECK(ClassSpace::for_task(Task::ToyTactic).names[1] == "rewrite 1 right");
    for (Task t : {Task::PosEval, Task::ToyTactic, Task::GenericTactic, Task::Argument})
      CHECK(task_from_string(to_string(t)) == t);
  }

  TEST_CASE("steps below from records agree with the proof tree") {
    Toy toy(6, 1, 7, 3);
    const auto below = record_steps_below(toy.train);
    for (const auto& thm : toy.data.train) {
      const auto session = replay(toy.store, thm);
      for (const auto& [id, st] : session.tree().nodes)
        CHECK(below.at({thm.name, id}) == steps_below(toy.store, session.tree(), id));
    }
  }

  TEST_CASE("examples per task") {
    Toy toy(5, 1, 6, 1);
    const auto pos = make_examples(toy.train, Task::PosEval);
    CHECK(pos.size() == toy.train.size());
    // 7 steps below the root and 6 below the introduced state: medium
    for (const auto& ex : pos) CHECK(ex.label == (ex.state <= 1 ? 1 : 0));

    ExampleStats stats;
    const auto tac = make_examples(toy.train, Task::ToyTactic, TacticClassMap::defaults(), {}, &stats);
    CHECK(tac.size() == 5 * 5);
    CHECK(stats.skipped == 5 * 2);  // intro and reflexivity
    std::size_t k = 0;
    for (const auto& thm : toy.data.train)
      for (const auto& label : thm.labels) {
        CHECK(tac[k].goal == label.goal);
        CHECK(toy_action(tac[k].label + 1) == label.action);
        ++k;
      }
  }

  TEST_CASE("argument flags follow the recorded local arguments") {
    TermStore store;
    declare_generic_signature(store);
    const auto records = gen_generic_corpus(store, GenericCorpusSpec{.lemmas = 10, .seed = 6});
    const auto ex = make_examples(records, Task::Argument);
    std::size_t with_arg = 0;
    for (const auto& e : ex) {
      const auto n = std::count(e.arg_flags.begin(), e.arg_flags.end(), true);
      CHECK(n <= 1);
      with_arg += static_cast<std::size_t>(n);
      for (std::size_t j = 0; j < e.ctx.size(); ++j) CHECK(e.arg_flags[j] == store.is_app_of(e.ctx[j].type, "P"));
    }
    CHECK(with_arg > 0);
  }

  TEST_CASE("validation carve-out is by lemma and deterministic") {
    Toy toy(20, 1, 5, 2);
    const auto ex = make_examples(toy.train, Task::ToyTactic);
    const auto [a, b] = carve_by_lemma(ex, 0.1, 9);
    const auto [c, d] = carve_by_lemma(ex, 0.1, 9);
    CHECK(a.size() + b.size() == ex.size());
    CHECK(b.size() == d.size());
    std::set<std::string> la, lb;
    for (const auto& e : a) la.insert(e.lemma);
    for (const auto& e : b) lb.insert(e.lemma);
    CHECK(lb.size() == 2);
    for (const auto& l : lb) CHECK_FALSE(la.contains(l));
  }

  TEST_CASE("heuristic features") {
    TermStore store = TermStore::with_rewrite_signature();
    store.declare("b", 0);
    const auto empty = extract_features(store, {}, store.constant("b"));
    CHECK(empty.values() == std::array<double, 4>{0, 1, 0, kNoHypothesisDistance});

    const TermId goal = store.app("eq", {store.var("b"), store.var("b")});
    const std::vector<ContextEntry> ctx{{"b", store.constant("G")}};
    CHECK(extract_features(store, ctx, goal).hyp_count == 1);
    CHECK(extract_features(store, ctx, goal).goal_size == 4);
    CHECK(extract_features(store, {{"h", goal}}, goal).min_edit_distance == 0);

    CHECK(token_edit_distance("a b c", "a x c") == 1);
    CHECK(token_edit_distance("", "a b") == 2);
    CHECK(token_edit_distance("a b c d", "b c d a") == 2);
  }

  TEST_CASE("linear baseline separates separable data") {
    Rng rng(4);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
      if (std::abs(a + 0.5 * b - 1) < 0.3) continue;  // margin
      x.push_back({a, b, 100 + rng.uniform()});
      y.push_back(a + 0.5 * b > 1 ? 1 : 0);
    }
    const auto m = train_linear_baseline(x, y, 2);
    std::size_t right = 0;
    for (std::size_t i = 0; i < x.size(); ++i) right += m.predict(x[i]) == y[i];
    CHECK(right == x.size());
  }

  TEST_CASE("constant baseline picks the modal class") {
    CHECK(constant_baseline({1, 1, 2}) == 1);
    CHECK(constant_baseline({2, 1}) == 1);
    CHECK_THROWS_AS(constant_baseline({}), ModelError);
  }

  TEST_CASE("metrics") {
    std::vector<int> truth{0, 1, 2, 2, 1, 0, 0, 1, 2, 2};
    const auto perfect = score(truth, truth, 3);
    CHECK(perfect.accuracy == 1.0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) CHECK(perfect.confusion[i][j] == 0);
    const auto modal = score(truth, std::vector<int>(truth.size(), 2), 3);
    CHECK(modal.accuracy == doctest::Approx(0.4));
    CHECK(modal.per_class[2] == 1.0);
    const auto j = metrics_json(modal, ClassSpace::for_task(Task::PosEval));
    CHECK(j["per_class"][2]["name"] == "far");
    CHECK(j["confusion"][0][2] == 3);
  }

  TEST_CASE("precision-recall curve") {
    CHECK(pr_curve({0.2, 0.4}, {false, false}).empty());
    const std::vector<double> s{0.9, 0.8, 0.7, 0.3, 0.3, 0.1};
    const std::vector<bool> l{true, false, true, false, true, false};
    const auto curve = pr_curve(s, l);
    REQUIRE(curve.size() == 6);
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[0].recall == doctest::Approx(1.0 / 3));
    CHECK(curve[3].threshold == 0.3);
    CHECK(curve[3].recall == 1.0);
    CHECK(curve.back().threshold == 0.0);
    CHECK(curve.back().recall == 1.0);
    CHECK(curve.back().precision == doctest::Approx(0.5));
    CHECK(recall_at_precision(curve, 0.9) == doctest::Approx(1.0 / 3));
    CHECK(recall_at_precision(curve, 0.6) == 1.0);
    CHECK(pr_csv(curve).rfind("precision,recall\n1.000000,0.333333\n", 0) == 0);
  }

  TEST_CASE("zero head gives a uniform distribution") {
    Toy toy(3, 1, 4, 1);
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .dim = 8}, ClassSpace::for_task(Task::ToyTactic),
                            symbol_names(toy.store));
    for (const char* name : {"head.W", "head.b"}) {
      auto& t = m.params()[m.params().find(name)];
      std::fill(t.value.begin(), t.value.end(), 0.0);
    }
    const auto ex = make_examples(toy.train, Task::ToyTactic);
    for (const auto& p : m.predict(toy.store, ex))
      for (double v : p) CHECK(v == doctest::Approx(1.0 / 18).epsilon(1e-12));
  }

  TEST_CASE("predictions are distributions and do not depend on batching") {
    Toy toy(12, 1, 6, 5);
    Model m = Model::create(ModelConfig{.task = Task::PosEval, .dim = 8, .seed = 2},
                            ClassSpace::for_task(Task::PosEval), symbol_names(toy.store));
    const auto ex = make_examples(toy.train, Task::PosEval);
    REQUIRE(ex.size() > 64);
    const auto all = m.predict(toy.store, ex);
    for (const auto& p : all) {
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
      for (double v : p) CHECK(v >= 0);
    }
    for (std::size_t i : {0, 40, 70}) CHECK(m.predict(toy.store, ex[i].ctx, ex[i].goal) == all[i]);
  }

  TEST_CASE("zero epochs keep the initialization") {
    Toy toy(8, 2, 5, 6);
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .dim = 8}, ClassSpace::for_task(Task::ToyTactic),
                            symbol_names(toy.store));
    const std::string before = m.serialize();
    const auto ex = make_examples(toy.train, Task::ToyTactic);
    const auto test = make_examples(toy.test, Task::ToyTactic);
    const double untrained = evaluate(m, toy.store, test).accuracy;
    const auto report = train_classifier(m, toy.store, ex, {}, TrainConfig{.max_epochs = 0});
    CHECK(report.epochs.empty());
    CHECK(m.serialize() == before);
    CHECK(evaluate(m, toy.store, test).accuracy == untrained);
  }

  TEST_CASE("training rejects overlapping or empty splits") {
    Toy toy(4, 1, 4, 7);
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .dim = 8}, ClassSpace::for_task(Task::ToyTactic),
                            symbol_names(toy.store));
    const auto ex = make_examples(toy.train, Task::ToyTactic);
    CHECK_THROWS_AS(train_classifier(m, toy.store, ex, ex, {}), ModelError);
    CHECK_THROWS_AS(train_classifier(m, toy.store, {}, {}, {}), ModelError);
    CHECK_THROWS_AS(m.argument_scores(toy.store, ex), ModelError);
  }

  TEST_CASE("toy tactic training learns and checkpoints round-trip") {
    Toy toy(120, 20, 5, 11);
    const auto all = make_examples(toy.train, Task::ToyTactic);
    const auto [train, valid] = carve_by_lemma(all, 0.1, 1);
    const auto test = make_examples(toy.test, Task::ToyTactic);
    Model m = Model::create(ModelConfig{.task = Task::ToyTactic, .dim = 24, .seed = 4},
                            ClassSpace::for_task(Task::ToyTactic), symbol_names(toy.store));
    const auto report =
        train_classifier(m, toy.store, train, valid, TrainConfig{.lr = 0.005, .max_epochs = 20, .seed = 2});
    CHECK(report.best_epoch > 0);
    const auto metrics = evaluate(m, toy.store, test);
    CHECK(metrics.accuracy > 0.6);

    const Model copy = Model::parse(m.serialize());
    Model again = copy;
    const auto m2 = evaluate(again, toy.store, test);
    CHECK(m2.accuracy == metrics.accuracy);
    CHECK(m2.confusion == metrics.confusion);
    CHECK(again.serialize() == m.serialize());
    CHECK_THROWS_AS(Model::parse("{\"format\":\"other\"}\n"), ModelError);
  }

  TEST_CASE("argument model recovers the constructed rule") {
    TermStore store;
    declare_generic_signature(store);
    const auto records = gen_generic_corpus(store, GenericCorpusSpec{.lemmas = 40, .max_steps = 20, .seed = 3});
    const Split split = split_by_lemma(records, {8, 1, 1}, 5);
    const auto train = make_examples(select_records(records, split, 0), Task::Argument);
    const auto valid = make_examples(select_records(records, split, 1), Task::Argument);
    const auto test = make_examples(select_records(records, split, 2), Task::Argument);
    Model m = Model::create(ModelConfig{.task = Task::Argument, .dim = 16, .seed = 1},
                            ClassSpace::for_task(Task::Argument), symbol_names(store));
    train_classifier(m, store, train, valid, TrainConfig{.lr = 0.005, .max_epochs = 15, .seed = 3});
    const auto eval = evaluate_arguments(m, store, test);
    REQUIRE(eval.positives > 0);
    double best = 0;
    for (const auto& p : eval.curve)
      if (p.precision >= 0.9) best = std::max(best, p.recall);
    CHECK(best >= 0.95);
    CHECK(eval.curve.back().recall == 1.0);
  }
}
