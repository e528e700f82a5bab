#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "proofgym/rng.hpp"
#include "proofgym/term.hpp"

namespace testutil {

using proofgym::Rng;
using proofgym::TermId;
using proofgym::TermKind;
using proofgym::TermStore;

namespace detail {

inline TermId parse_infix(TermStore& store, std::string_view text, std::size_t& pos);

inline TermId parse_atom(TermStore& store, std::string_view text, std::size_t& pos) {
  const char c = text[pos];
  if (c == '(') {
    ++pos;
    const TermId inner = parse_infix(store, text, pos);
    if (text[pos] != ')') throw std::invalid_argument("expected ')'");
    ++pos;
    return inner;
  }
  ++pos;
  if (c == 'b') return store.var("b");
  if (c == 'e') return store.constant("e");
  if (c == 'm') return store.constant("m");
  throw std::invalid_argument(std::string("bad leaf ") + c);
}

// Right-nested is written with parentheses; '+' associates to the left.
inline TermId parse_infix(TermStore& store, std::string_view text, std::size_t& pos) {
  TermId lhs = parse_atom(store, text, pos);
  while (pos < text.size() && text[pos] == '+') {
    ++pos;
    const TermId rhs = parse_atom(store, text, pos);
    lhs = store.app("f", {lhs, rhs});
  }
  return lhs;
}

}  // namespace detail

/// Builds a rewrite-domain expression from infix text like "b+(e+m)".
inline TermId expr(TermStore& store, std::string_view text) {
  std::string compact;
  for (char c : text) {
    if (c != ' ') compact += c;
  }
  std::size_t pos = 0;
  const TermId t = detail::parse_infix(store, compact, pos);
  if (pos != compact.size()) throw std::invalid_argument("trailing text in expression");
  return t;
}

/// Goal Eq(X, b).
inline TermId goal(TermStore& store, std::string_view text) {
  return store.app("eq", {expr(store, text), store.var("b")});
}

/// Theorem forall b : G, X = b.
inline TermId theorem(TermStore& store, std::string_view text) {
  return store.prod("b", store.constant("G"), goal(store, text));
}

/// Random expression over {b, e, m, +} (not necessarily reducible).
inline TermId random_expr(TermStore& store, Rng& rng, int depth) {
  if (depth == 0 || rng.below(3) == 0) {
    switch (rng.below(3)) {
      case 0: return store.var("b");
      case 1: return store.constant("e");
      default: return store.constant("m");
    }
  }
  const TermId l = random_expr(store, rng, depth - 1);
  const TermId r = random_expr(store, rng, depth - 1);
  return store.app("f", {l, r});
}

/// Random term mixing products, variables, implicit arguments and the
/// operator. Requires a variadic symbol "P" to be declared.
inline TermId random_term(TermStore& store, Rng& rng, int depth) {
  static const char* kVars[] = {"x", "y", "z"};
  if (depth == 0) {
    switch (rng.below(4)) {
      case 0: return store.var(kVars[rng.below(3)]);
      case 1: return store.constant("e");
      case 2: return store.constant("m");
      default: return store.constant("G");
    }
  }
  switch (rng.below(4)) {
    case 0: return store.app("f", {random_term(store, rng, depth - 1), random_term(store, rng, depth - 1)});
    case 1: {
      const auto n = 1 + rng.below(3);
      std::vector<TermId> args;
      std::vector<bool> implicit;
      for (std::uint64_t i = 0; i < n; ++i) {
        args.push_back(random_term(store, rng, depth - 1));
        implicit.push_back(rng.below(3) == 0);
      }
      return store.app(store.constant("P"), args, implicit);
    }
    case 2:
      return store.prod(kVars[rng.below(3)], random_term(store, rng, depth - 1), random_term(store, rng, depth - 1));
    default: return random_term(store, rng, 0);
  }
}

/// Renames every binder (and its bound occurrences) by appending `suffix`.
inline TermId rename_binders(TermStore& store, TermId t, const std::string& suffix,
                             std::vector<std::string> scope = {}) {
  const proofgym::Term node = store.node(t);
  switch (node.kind) {
    case TermKind::Var: {
      const std::string& name = store.name_text(node.name);
      for (auto it = scope.rbegin(); it != scope.rend(); ++it) {
        if (*it == name) return store.var(name + suffix);
      }
      return t;
    }
    case TermKind::Const: return t;
    case TermKind::App: {
      std::vector<TermId> args;
      for (std::size_t i = 1; i < node.kids.size(); ++i) args.push_back(rename_binders(store, node.kids[i], suffix, scope));
      return store.app(rename_binders(store, node.kids[0], suffix, scope), args, node.implicit);
    }
    case TermKind::Prod: {
      const std::string binder = store.name_text(node.name);
      const TermId ty = rename_binders(store, node.kids[0], suffix, scope);
      scope.push_back(binder);
      const TermId body = rename_binders(store, node.kids[1], suffix, scope);
      return store.prod(binder + suffix, ty, body);
    }
  }
  return t;
}

inline void collect_subtree_texts(const TermStore& store, TermId t, std::set<std::string>& out) {
  out.insert(proofgym::print_sexpr(store, t));
  for (TermId kid : store.node(t).kids) collect_subtree_texts(store, kid, out);
}

}  // namespace testutil
