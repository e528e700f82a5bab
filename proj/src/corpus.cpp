#include "proofgym/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "proofgym/proof.hpp"
#include "proofgym/rng.hpp"
#include "proofgym/tactic_classes.hpp"

namespace proofgym {

namespace {

enum class Shape { Terminal, Single, Intro, Split, Branch };

struct TacticKind {
  const char* raw;
  double weight;
  Shape shape;
  bool local_arg;
};

// Rough usage profile of a tactic-heavy development.
constexpr TacticKind kTactics[] = {
    {"rewrite", 10, Shape::Single, false}, {"rewrite", 4, Shape::Single, true},
    {"have", 8, Shape::Split, false},      {"apply", 10, Shape::Single, true},
    {"exact", 8, Shape::Terminal, true},   {"by", 2, Shape::Terminal, false},
    {"move", 9, Shape::Intro, false},      {"case", 4, Shape::Branch, false},
    {"destruct", 2, Shape::Branch, false}, {"elim", 3, Shape::Branch, true},
    {"split", 3, Shape::Split, false},     {"constructor", 1, Shape::Split, false},
    {"left", 1, Shape::Single, false},     {"right", 1, Shape::Single, false},
    {"exists", 1, Shape::Single, false},   {"intro", 3, Shape::Intro, false},
    {"intros", 1, Shape::Intro, false},    {"reflexivity", 2, Shape::Terminal, false},
    {"done", 5, Shape::Terminal, false},   {"trivial", 1, Shape::Terminal, false},
    {"simpl", 2, Shape::Single, false},    {"unfold", 2, Shape::Single, false},
    {"congr", 1, Shape::Single, false},    {"induction", 1, Shape::Branch, false},
    {"suff", 1, Shape::Split, false},      {"suffices", 1, Shape::Split, false},
    {"wlog", 0.5, Shape::Split, false},    {"pose", 1, Shape::Intro, false},
    {"set", 1, Shape::Intro, false},       {"symmetry", 1, Shape::Single, false},
    {"transitivity", 1, Shape::Split, false},
};

constexpr int kTypes = 4;
constexpr int kConsts = 6;

struct LemmaBuilder {
  TermStore& store;
  Rng& rng;
  double implicit_rate;
  int hyp_counter = 0;

  std::size_t draw_tactic(bool terminal_only, bool allow_local) {
    double total = 0;
    for (const auto& t : kTactics) {
      if (ok(t, terminal_only, allow_local)) total += t.weight;
    }
    double u = rng.uniform() * total;
    std::size_t last = 0;
    for (std::size_t i = 0; i < std::size(kTactics); ++i) {
      if (!ok(kTactics[i], terminal_only, allow_local)) continue;
      last = i;
      u -= kTactics[i].weight;
      if (u < 0) return i;
    }
    return last;
  }

  static bool ok(const TacticKind& t, bool terminal_only, bool allow_local) {
    if (terminal_only && t.shape != Shape::Terminal) return false;
    return allow_local || !t.local_arg;
  }

  TermId type_const() { return store.constant("T" + std::to_string(rng.below(kTypes))); }

  // Application with an optional leading implicit type argument.
  TermId apply(const std::string& head, std::vector<TermId> explicit_args) {
    std::vector<TermId> args;
    std::vector<bool> implicit;
    if (rng.uniform() < implicit_rate) {
      args.push_back(type_const());
      implicit.push_back(true);
    }
    for (TermId a : explicit_args) {
      args.push_back(a);
      implicit.push_back(false);
    }
    return store.app(store.constant(head), args, implicit);
  }

  TermId value(int depth, const std::vector<std::string>& vars) {
    if (depth == 0 || rng.uniform() < 0.35) {
      if (!vars.empty() && rng.coin()) return store.var(vars[rng.below(vars.size())]);
      return store.constant("c" + std::to_string(rng.below(kConsts)));
    }
    std::vector<TermId> args{value(depth - 1, vars)};
    if (rng.coin()) args.push_back(value(depth - 1, vars));
    return apply(rng.coin() ? "g" : "h", args);
  }

  TermId predicate(TermId left, const std::vector<std::string>& vars) {
    static const char* kPreds[] = {"Q", "R", "S", "le"};
    return apply(kPreds[rng.below(4)], {left, value(3, vars)});
  }

  static std::vector<std::string> var_names(const std::vector<ContextEntry>& ctx) {
    std::vector<std::string> out;
    for (const auto& e : ctx) {
      if (e.name[0] == 'x') out.push_back(e.name);
    }
    return out;
  }

  std::string fresh_hyp() { return "H" + std::to_string(hyp_counter++); }

  // Context and goal of a state whose next tactic is `plan`. P-headed
  // entries only survive into the state they were added for.
  std::pair<std::vector<ContextEntry>, TermId> make_state(std::vector<ContextEntry> ctx, std::size_t plan,
                                                          bool add_hyp) {
    std::erase_if(ctx, [&](const ContextEntry& e) { return store.is_app_of(e.type, "P"); });
    const auto vars = var_names(ctx);
    if (add_hyp) ctx.push_back({fresh_hyp(), rng.coin() ? predicate(value(2, vars), vars) : value(3, vars)});
    if (!kTactics[plan].local_arg) return {ctx, predicate(value(3, vars), vars)};
    const TermId left = apply("P", {value(2, vars)});
    // after the variables the new entry may mention
    std::size_t lo = 0;
    for (std::size_t i = 0; i < ctx.size(); ++i)
      if (ctx[i].name[0] == 'x') lo = i + 1;
    const std::size_t at = lo + rng.below(ctx.size() - lo + 1);
    ctx.insert(ctx.begin() + static_cast<std::ptrdiff_t>(at), ContextEntry{fresh_hyp(), left});
    return {ctx, predicate(left, vars)};
  }

  std::vector<TacticArg> args_for(std::size_t plan, const ProofState& st) {
    if (!kTactics[plan].local_arg) return {};
    const TermId left = store.args(st.goal)[store.is_implicit(st.goal, 0) ? 1 : 0];
    for (const auto& e : st.ctx) {
      if (e.type == left) return {{ArgKind::Local, e.name}};
    }
    throw std::logic_error("argument entry missing from context");
  }
};

}  // namespace

void declare_generic_signature(TermStore& store) {
  auto declare = [&](const std::string& s, int arity) {
    if (!store.is_declared(s)) store.declare(s, arity);
  };
  for (int i = 0; i < kTypes; ++i) declare("T" + std::to_string(i), 0);
  for (int i = 0; i < kConsts; ++i) declare("c" + std::to_string(i), 0);
  for (const char* s : {"g", "h", "P", "Q", "R", "S", "le"}) declare(s, TermStore::kVariadic);
}

std::vector<TraceRecord> gen_generic_corpus(TermStore& store, const GenericCorpusSpec& spec) {
  if (spec.lemmas < 0 || spec.min_steps < 1 || spec.max_steps < spec.min_steps) {
    throw std::invalid_argument("invalid corpus spec");
  }
  declare_generic_signature(store);
  const auto classes = TacticClassMap::defaults();
  std::vector<TraceRecord> out;
  for (int li = 0; li < spec.lemmas; ++li) {
    Rng rng(mix64(spec.seed, static_cast<std::uint64_t>(li)));
    LemmaBuilder b{store, rng, spec.implicit_rate};
    const double u = rng.uniform();
    const int target = spec.min_steps + static_cast<int>(std::floor((spec.max_steps - spec.min_steps) * u * u * u));

    // forall x0 : T, ..., goal
    const int binders = 1 + static_cast<int>(rng.below(3));
    std::vector<ContextEntry> scope;
    for (int k = 0; k < binders; ++k) scope.push_back({"x" + std::to_string(k), b.type_const()});
    std::map<StateId, std::size_t> plan;
    const std::size_t first = b.draw_tactic(false, false);
    TermId statement = b.make_state(scope, first, false).second;
    for (int k = binders - 1; k >= 0; --k) statement = store.prod(scope[k].name, scope[k].type, statement);

    char name[32];
    std::snprintf(name, sizeof name, "lemma/%04d", li);
    auto session = ProofSession::start(store, statement, name);
    while (store.kind(session.state(*session.current()).goal) == TermKind::Prod) {
      const ProofState& st = session.state(*session.current());
      auto ctx = st.ctx;
      ctx.push_back({store.name_text(store.node(st.goal).name), store.prod_type(st.goal)});
      session.apply_external(st.id, GenericTactic{"intro", {}}, {{ctx, store.prod_body(st.goal)}});
    }
    plan[*session.current()] = first;

    int steps = 0;
    while (const auto cur = session.current()) {
      const ProofState st = session.state(*cur);
      std::size_t p = plan.at(st.id);
      const bool wind_down = steps >= target;
      if (wind_down && kTactics[p].shape != Shape::Terminal) {
        p = kTactics[p].local_arg ? 4 : 18;  // "exact H" / "done"
      }
      const TacticKind& tac = kTactics[p];
      int n_children = 0;
      switch (tac.shape) {
        case Shape::Terminal: n_children = 0; break;
        case Shape::Single:
        case Shape::Intro: n_children = 1; break;
        case Shape::Split: n_children = 2; break;
        case Shape::Branch: n_children = 2 + static_cast<int>(rng.below(4) == 0); break;
      }
      const bool crowded = session.open_goals().size() > 4;
      std::vector<std::size_t> child_plans;
      std::vector<std::pair<std::vector<ContextEntry>, TermId>> children;
      for (int c = 0; c < n_children; ++c) {
        const std::size_t cp = b.draw_tactic(wind_down || (crowded && c > 0), true);
        const bool add_hyp = tac.shape == Shape::Intro || (tac.shape == Shape::Split && c == 1);
        children.push_back(b.make_state(st.ctx, cp, add_hyp));
        child_plans.push_back(cp);
      }
      const auto outcome = session.apply_external(st.id, GenericTactic{tac.raw, b.args_for(p, st)}, children);
      for (std::size_t c = 0; c < outcome.children.size(); ++c) plan[outcome.children[c]] = child_plans[c];
      ++steps;
    }
    for (TraceRecord r : session.export_tree()) {
      r.tactic.cls = *classes.class_of(r.tactic.raw);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace proofgym
