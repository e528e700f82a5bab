#include "proofgym/rewrite.hpp"

#include <array>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

namespace proofgym {

namespace {

TermId leaf(TermStore& store, Value v) {
  switch (v) {
    case Value::B: return store.var("b");
    case Value::E: return store.constant(sym::left_id);
    case Value::M: return store.constant(sym::right_id);
  }
  return store.var("b");
}

}  // namespace

TermId gen_expression(TermStore& store, Rng& rng, int length, Value target) {
  if (length < 1) throw std::invalid_argument("expression length must be at least 1");
  if (length == 1) return leaf(store, target);
  const bool value_on_left = rng.coin();
  const int left_budget = static_cast<int>(rng.range(1, length - 1));
  const Value left_target = value_on_left ? target : Value::E;
  const Value right_target = value_on_left ? Value::M : target;
  const TermId lhs = gen_expression(store, rng, left_budget, left_target);
  const TermId rhs = gen_expression(store, rng, length - left_budget, right_target);
  return store.app(sym::op, {lhs, rhs});
}

std::uint64_t count_expressions(int length, std::uint64_t cap, Value target) {
  if (length < 1 || cap == 0) return 0;
  // sets[v][l]: distinct trees (as compact strings) with l leaves that the
  // generator can emit for target v, truncated at `cap`. Every set feeds
  // into larger ones with the other side fixed, so a truncated set forces
  // every larger set to reach the cap too.
  std::array<std::vector<std::vector<std::string>>, 3> sets;
  for (auto& s : sets) s.resize(static_cast<std::size_t>(length) + 1);
  sets[0][1] = {"b"};
  sets[1][1] = {"e"};
  sets[2][1] = {"m"};
  for (int l = 2; l <= length; ++l) {
    for (std::size_t v = 0; v < 3; ++v) {
      std::unordered_set<std::string> seen;
      auto& out = sets[v][static_cast<std::size_t>(l)];
      for (int k = 1; k < l && out.size() < cap; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto ur = static_cast<std::size_t>(l - k);
        for (const auto& [lhs_set, rhs_set] : {std::pair{&sets[v][uk], &sets[2][ur]}, std::pair{&sets[1][uk], &sets[v][ur]}}) {
          for (const auto& a : *lhs_set) {
            for (const auto& b : *rhs_set) {
              if (out.size() >= cap) break;
              std::string t = "(" + a + " " + b + ")";
              if (seen.insert(t).second) out.push_back(std::move(t));
            }
          }
        }
      }
    }
  }
  return sets[static_cast<std::size_t>(target)][static_cast<std::size_t>(length)].size();
}

TermId rewrite_statement(TermStore& store, TermId expr) {
  return store.prod("b", store.constant(sym::carrier), store.app(sym::eq, {expr, store.var("b")}));
}

namespace {

struct OracleSearch {
  TermStore& store;
  TermId rhs;
  std::unordered_set<TermId> dead;
  std::vector<RewriteTactic> path;

  bool run(TermId lhs) {
    if (lhs == rhs) return true;
    if (dead.contains(lhs)) return false;
    const auto ops = op_positions(store, lhs);
    for (const auto& [pos, node] : ops) {
      for (Law law : {Law::LeftId, Law::RightId}) {
        const auto next = try_rewrite_expr(store, lhs, pos, law);
        if (!next) continue;
        path.push_back({pos, law});
        if (run(*next)) return true;
        path.pop_back();
      }
    }
    dead.insert(lhs);
    return false;
  }
};

}  // namespace

std::optional<std::vector<RewriteTactic>> oracle_rewrites(TermStore& store, TermId lhs, TermId rhs) {
  OracleSearch search{store, rhs, {}, {}};
  if (!search.run(lhs)) return std::nullopt;
  return std::move(search.path);
}

std::vector<Tactic> oracle_proof(TermStore& store, TermId statement) {
  TermId goal = statement;
  if (store.kind(goal) == TermKind::Prod) goal = store.prod_body(goal);
  const auto lhs = goal_lhs(store, goal);
  if (!lhs) throw ProofError(ProofErrorCode::Incomplete, "statement is not an equality");
  const TermId rhs = store.args(goal)[store.args(goal).size() - 1];
  const auto rewrites = oracle_rewrites(store, *lhs, rhs);
  if (!rewrites) throw ProofError(ProofErrorCode::Incomplete, "no rewrite proof exists");
  std::vector<Tactic> proof(rewrites->begin(), rewrites->end());
  proof.emplace_back(Reflexivity{});
  return proof;
}

TheoremSpec make_theorem(TermStore& store, TermId expr, std::string name) {
  TheoremSpec spec;
  spec.name = std::move(name);
  spec.expr = expr;
  spec.statement = rewrite_statement(store, expr);
  spec.proof = oracle_proof(store, spec.statement);
  TermId goal = store.prod_body(spec.statement);
  const int rewrites = static_cast<int>(spec.proof.size()) - 1;
  for (int i = 0; i < rewrites; ++i) {
    const auto& rw = std::get<RewriteTactic>(spec.proof[static_cast<std::size_t>(i)]);
    spec.labels.push_back({goal, rw, rewrites - i});
    const TermId lhs = rewrite_expr(store, *goal_lhs(store, goal), rw.pos, rw.law);
    goal = store.app(sym::eq, {lhs, store.var("b")});
  }
  return spec;
}

RewriteDataset gen_dataset(TermStore& store, const DatasetSpec& spec) {
  if (spec.n_train < 1 || spec.n_test < 1) throw std::invalid_argument("n_train and n_test must be at least 1");
  if (spec.length < 2) throw std::invalid_argument("length must be at least 2");
  const double wanted = static_cast<double>(spec.n_train) + static_cast<double>(spec.n_test);
  if (const auto available = count_expressions(spec.length, static_cast<std::uint64_t>(wanted)); available < wanted) {
    throw std::invalid_argument("only " + std::to_string(available) + " distinct expressions of length " +
                                std::to_string(spec.length) + " exist");
  }
  RewriteDataset data;
  data.spec = spec;
  std::unordered_set<TermId> seen;
  const auto total = static_cast<std::size_t>(spec.n_train + spec.n_test);
  std::vector<TermId> picked;
  std::uint64_t attempt = 0;
  const std::uint64_t budget = 10'000 + 10'000 * total;
  while (picked.size() < total) {
    if (attempt == budget) throw std::runtime_error("rejection sampling did not find enough distinct expressions");
    Rng rng(mix64(spec.seed, attempt++));
    const TermId expr = gen_expression(store, rng, spec.length);
    if (seen.insert(expr).second) picked.push_back(expr);
  }
  char name[32];
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const bool train = i < static_cast<std::size_t>(spec.n_train);
    const std::size_t index = train ? i : i - static_cast<std::size_t>(spec.n_train);
    std::snprintf(name, sizeof name, "%s/%04zu", train ? "train" : "test", index);
    (train ? data.train : data.test).push_back(make_theorem(store, picked[i], name));
  }
  return data;
}

ProofSession replay(TermStore& store, const TheoremSpec& theorem) {
  auto session = ProofSession::start(store, theorem.statement, theorem.name);
  for (const Tactic& tactic : theorem.proof) {
    const auto cur = session.current();
    if (!cur) throw ProofError(ProofErrorCode::StateClosed, "oracle proof is longer than needed");
    session.apply(*cur, tactic);
  }
  if (!session.complete()) throw ProofError(ProofErrorCode::Incomplete, "oracle proof did not close the goal");
  return session;
}

std::vector<TraceRecord> dataset_records(TermStore& store, const RewriteDataset& data) {
  std::vector<TraceRecord> out;
  for (const auto* split : {&data.train, &data.test}) {
    for (const auto& thm : *split) {
      const auto session = replay(store, thm);
      const auto& recs = session.export_tree();
      out.insert(out.end(), recs.begin(), recs.end());
    }
  }
  return out;
}

}  // namespace proofgym
