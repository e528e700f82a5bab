#include <set>

#include "doctest.h"
#include "proofgym/rewrite.hpp"
#include "test_util.hpp"

using namespace proofgym;

namespace {

// Every term reachable from `lhs` by any sequence of rewrites; true when
// `target` is among them. Independent of the oracle's search order.
bool reachable(TermStore& store, TermId lhs, TermId target, std::set<TermId>& visited) {
  if (lhs == target) return true;
  if (!visited.insert(lhs).second) return false;
  for (const auto& [pos, node] : op_positions(store, lhs)) {
    for (Law law : {Law::LeftId, Law::RightId}) {
      if (const auto next = try_rewrite_expr(store, lhs, pos, law)) {
        if (reachable(store, *next, target, visited)) return true;
      }
    }
  }
  return false;
}

}  // namespace

TEST_SUITE("rewrite") {
  TEST_CASE("expression base cases") {
    auto store = TermStore::with_rewrite_signature();
    Rng rng(1);
    CHECK(gen_expression(store, rng, 1) == store.var("b"));
    std::set<std::string> shapes;
    for (int i = 0; i < 200; ++i) shapes.insert(print_sexpr(store, gen_expression(store, rng, 2)));
    CHECK(shapes == std::set<std::string>{"(app f (v b) (c m))", "(app f (c e) (v b))"});
    CHECK_THROWS_AS(gen_expression(store, rng, 0), std::invalid_argument);
  }

  TEST_CASE("expression space sizes") {
    CHECK(count_expressions(1, 100) == 1);
    CHECK(count_expressions(2, 100) == 2);
    // enumerated by hand: b(mm) b(em) e(bm) e(eb) (bm)m (eb)m (em)b (ee)b
    CHECK(count_expressions(3, 100) == 8);
    CHECK(count_expressions(10, 450) == 450);

    // the sampler reaches exactly the counted space at length 4
    auto store = TermStore::with_rewrite_signature();
    Rng rng(5);
    std::set<TermId> seen;
    for (int i = 0; i < 20000; ++i) seen.insert(gen_expression(store, rng, 4));
    CHECK(seen.size() == count_expressions(4, 100000));
  }

  TEST_CASE("oracle proofs of the worked examples") {
    auto store = TermStore::with_rewrite_signature();
    const auto p1 = oracle_proof(store, testutil::theorem(store, "b+m"));
    REQUIRE(p1.size() == 2);
    CHECK(p1[0] == Tactic{RewriteTactic{Position{1}, Law::RightId}});
    CHECK(p1[1] == Tactic{Reflexivity{}});

    const auto p2 = oracle_proof(store, testutil::theorem(store, "b+(e+m)"));
    REQUIRE(p2.size() == 3);
    CHECK(p2[0] == Tactic{RewriteTactic{Position{2}, Law::LeftId}});
    CHECK(p2[1] == Tactic{RewriteTactic{Position{1}, Law::RightId}});
    CHECK(p2[2] == Tactic{Reflexivity{}});

    // the greedy right-identity rewrite at position 2 leads to a dead end
    const auto stuck = oracle_rewrites(store, testutil::expr(store, "b+e"), store.var("b"));
    CHECK_FALSE(stuck.has_value());
    CHECK_THROWS_AS(oracle_proof(store, testutil::theorem(store, "b+e")), ProofError);
  }

  TEST_CASE("the oracle backtracks out of greedy dead ends") {
    auto store = TermStore::with_rewrite_signature();
    // (e+m) at position 2 must lose its e, but position 1 sees (e+m)+... first
    const TermId x = testutil::expr(store, "(e+m)+(b+(e+m))");
    const auto proof = oracle_rewrites(store, x, store.var("b"));
    REQUIRE(proof);
    CHECK(proof->size() == 4);
    TermId cur = x;
    for (const auto& rw : *proof) cur = rewrite_expr(store, cur, rw.pos, rw.law);
    CHECK(cur == store.var("b"));
  }

  TEST_CASE("generated theorems: length law and reducibility") {
    for (int length = 2; length <= 10; ++length) {
      auto store = TermStore::with_rewrite_signature();
      Rng rng(static_cast<std::uint64_t>(length) * 17);
      for (int i = 0; i < 100; ++i) {
        const TermId x = gen_expression(store, rng, length);
        CHECK(leaf_count(store, x) == static_cast<std::size_t>(length));
        const auto thm = make_theorem(store, x, "t");
        CHECK(thm.proof.size() == static_cast<std::size_t>(length));  // L-1 rewrites + reflexivity
        CHECK(thm.labels.size() == static_cast<std::size_t>(length - 1));
        const auto session = replay(store, thm);
        CHECK(session.complete());
        CHECK(steps_below(store, session.tree(), 1) == length);
        CHECK(steps_below(store, session.tree(), 0) == length + 1);
      }
    }
  }

  TEST_CASE("every intermediate goal still reduces to b") {
    auto store = TermStore::with_rewrite_signature();
    const TermId b = store.var("b");
    Rng rng(23);
    for (int length = 2; length <= 6; ++length) {
      for (int i = 0; i < 40; ++i) {
        const auto thm = make_theorem(store, gen_expression(store, rng, length), "t");
        for (const auto& label : thm.labels) {
          std::set<TermId> visited;
          CHECK(reachable(store, *goal_lhs(store, label.goal), b, visited));
        }
      }
    }
  }

  TEST_CASE("both redex shapes occur at length 4") {
    auto store = TermStore::with_rewrite_signature();
    Rng rng(99);
    bool left_shape = false, right_shape = false;
    for (int i = 0; i < 1000; ++i) {
      const TermId x = gen_expression(store, rng, 4);
      for (const auto& [pos, node] : op_positions(store, x)) {
        left_shape |= store.is_const(store.args(node)[0], "e");
        right_shape |= store.is_const(store.args(node)[1], "m");
      }
    }
    CHECK(left_shape);
    CHECK(right_shape);
  }

  TEST_CASE("labels follow the oracle trace") {
    auto store = TermStore::with_rewrite_signature();
    const auto thm = make_theorem(store, testutil::expr(store, "b+(e+m)"), "t");
    REQUIRE(thm.labels.size() == 2);
    CHECK(thm.labels[0].goal == testutil::goal(store, "b+(e+m)"));
    CHECK(thm.labels[0].action == RewriteTactic{Position{2}, Law::LeftId});
    CHECK(thm.labels[0].rewrites_remaining == 2);
    CHECK(thm.labels[1].goal == testutil::goal(store, "b+m"));
    CHECK(thm.labels[1].rewrites_remaining == 1);
  }

  TEST_CASE("datasets are distinct, disjoint and reproducible") {
    auto store = TermStore::with_rewrite_signature();
    const auto data = gen_dataset(store, DatasetSpec{400, 50, 10, 2024});
    CHECK(data.train.size() == 400);
    CHECK(data.test.size() == 50);
    std::set<TermId> all;
    for (const auto& t : data.train) all.insert(t.expr);
    for (const auto& t : data.test) all.insert(t.expr);
    CHECK(all.size() == 450);

    auto other_store = TermStore::with_rewrite_signature();
    const auto again = gen_dataset(other_store, DatasetSpec{400, 50, 10, 2024});
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      CHECK(print_sexpr(store, data.test[i].expr) == print_sexpr(other_store, again.test[i].expr));
    }
    const auto different = gen_dataset(other_store, DatasetSpec{400, 50, 10, 2025});
    int same = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      same += print_sexpr(store, data.test[i].expr) == print_sexpr(other_store, different.test[i].expr);
    }
    CHECK(same < 5);
  }

  TEST_CASE("tiny datasets") {
    auto store = TermStore::with_rewrite_signature();
    const auto data = gen_dataset(store, DatasetSpec{1, 1, 2, 7});
    std::set<std::string> exprs{print_sexpr(store, data.train[0].expr), print_sexpr(store, data.test[0].expr)};
    CHECK(exprs == std::set<std::string>{"(app f (v b) (c m))", "(app f (c e) (v b))"});
    CHECK_THROWS_AS(gen_dataset(store, DatasetSpec{2, 1, 2, 7}), std::invalid_argument);
    CHECK_THROWS_AS(gen_dataset(store, DatasetSpec{8, 1, 3, 7}), std::invalid_argument);
    CHECK_NOTHROW(gen_dataset(store, DatasetSpec{7, 1, 3, 7}));
    CHECK_THROWS_AS(gen_dataset(store, DatasetSpec{0, 1, 5, 7}), std::invalid_argument);
    CHECK_THROWS_AS(gen_dataset(store, DatasetSpec{1, 1, 1, 7}), std::invalid_argument);
  }
}
