#include "proofgym/term.hpp"

#include <algorithm>
#include <cctype>

#include "proofgym/rng.hpp"

namespace proofgym {

const char* to_string(TermKind kind) {
  switch (kind) {
    case TermKind::Var: return "Var";
    case TermKind::Const: return "Const";
    case TermKind::App: return "App";
    case TermKind::Prod: return "Prod";
  }
  return "?";
}

std::size_t TermHash::operator()(const Term& t) const {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(t.kind), t.name.value);
  for (std::size_t i = 0; i < t.kids.size(); ++i) {
    const bool impl = i > 0 && i - 1 < t.implicit.size() && t.implicit[i - 1];
    h = mix64(h, (static_cast<std::uint64_t>(t.kids[i].value) << 1) | (impl ? 1u : 0u));
  }
  return static_cast<std::size_t>(h);
}

TermStore TermStore::with_rewrite_signature() {
  TermStore store;
  store.declare(sym::op, 2);
  store.declare(sym::eq, 2);
  store.declare(sym::left_id, 0);
  store.declare(sym::right_id, 0);
  store.declare(sym::carrier, 0);
  return store;
}

NameId TermStore::intern_name(std::string_view name) {
  if (auto it = name_index_.find(std::string(name)); it != name_index_.end()) return it->second;
  const NameId id{static_cast<std::uint32_t>(names_.size())};
  names_.emplace_back(name);
  name_index_.emplace(std::string(name), id);
  return id;
}

std::optional<NameId> TermStore::find_name(std::string_view name) const {
  if (auto it = name_index_.find(std::string(name)); it != name_index_.end()) return it->second;
  return std::nullopt;
}

void TermStore::declare(std::string_view symbol, int arity) {
  const NameId id = intern_name(symbol);
  if (auto it = arity_.find(id.value); it != arity_.end()) {
    if (it->second != arity) throw TermError("conflicting arity for symbol '" + std::string(symbol) + "'");
    return;
  }
  arity_.emplace(id.value, arity);
  declared_.emplace_back(id, arity);
}

bool TermStore::is_declared(std::string_view symbol) const { return arity(symbol).has_value(); }

std::optional<int> TermStore::arity(std::string_view symbol) const {
  const auto id = find_name(symbol);
  if (!id) return std::nullopt;
  if (auto it = arity_.find(id->value); it != arity_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::pair<std::string, int>> TermStore::declarations() const {
  std::vector<std::pair<std::string, int>> out;
  out.reserve(declared_.size());
  for (const auto& [id, ar] : declared_) out.emplace_back(names_[id.value], ar);
  return out;
}

const Term& TermStore::node(TermId id) const {
  if (!contains(id)) throw TermError("dangling term id " + std::to_string(id.value));
  return nodes_[id.value];
}

TermId TermStore::intern(Term term) {
  for (TermId kid : term.kids) {
    if (!contains(kid)) throw TermError("dangling child id " + std::to_string(kid.value));
  }
  switch (term.kind) {
    case TermKind::Var:
    case TermKind::Const:
      if (!term.kids.empty()) throw TermError("leaf term with children");
      term.implicit.clear();
      if (term.kind == TermKind::Const && !arity_.contains(term.name.value)) {
        throw TermError("undeclared constant '" + name_text(term.name) + "'");
      }
      break;
    case TermKind::App: {
      if (term.kids.size() < 2) throw TermError("application needs at least one argument");
      term.name = NameId{};
      term.implicit.resize(term.kids.size() - 1, false);
      // Flatten nested heads: (M a) b == M a b.
      const Term& head = nodes_[term.kids[0].value];
      if (head.kind == TermKind::App) {
        std::vector<TermId> kids(head.kids);
        std::vector<bool> implicit(head.implicit);
        kids.insert(kids.end(), term.kids.begin() + 1, term.kids.end());
        implicit.insert(implicit.end(), term.implicit.begin(), term.implicit.end());
        term.kids = std::move(kids);
        term.implicit = std::move(implicit);
      }
      const Term& h = nodes_[term.kids[0].value];
      if (h.kind == TermKind::Const) {
        const int ar = arity_.at(h.name.value);
        const auto nargs = static_cast<int>(term.kids.size() - 1);
        if (ar != kVariadic && ar != nargs) {
          throw TermError("symbol '" + name_text(h.name) + "' expects " + std::to_string(ar) + " arguments, got " +
                          std::to_string(nargs));
        }
      }
      break;
    }
    case TermKind::Prod:
      if (term.kids.size() != 2) throw TermError("product needs a type and a body");
      term.implicit.clear();
      break;
  }
  if (auto it = index_.find(term); it != index_.end()) return it->second;
  const TermId id{static_cast<std::uint32_t>(nodes_.size())};
  nodes_.push_back(term);
  index_.emplace(std::move(term), id);
  return id;
}

TermId TermStore::var(std::string_view name) { return intern(Term{TermKind::Var, intern_name(name), {}, {}}); }

TermId TermStore::constant(std::string_view symbol) {
  return intern(Term{TermKind::Const, intern_name(symbol), {}, {}});
}

TermId TermStore::app(TermId head, std::span<const TermId> args, const std::vector<bool>& implicit) {
  Term t{TermKind::App, NameId{}, {}, {}};
  t.kids.reserve(args.size() + 1);
  t.kids.push_back(head);
  t.kids.insert(t.kids.end(), args.begin(), args.end());
  t.implicit = implicit;
  return intern(std::move(t));
}

TermId TermStore::app(std::string_view head_symbol, std::initializer_list<TermId> args) {
  const TermId head = constant(head_symbol);
  return app(head, std::span<const TermId>(args.begin(), args.size()));
}

TermId TermStore::prod(std::string_view binder, TermId type, TermId body) {
  return intern(Term{TermKind::Prod, intern_name(binder), {type, body}, {}});
}

TermId TermStore::head(TermId app) const {
  const Term& t = node(app);
  if (t.kind != TermKind::App) throw TermError("not an application");
  return t.kids[0];
}

std::span<const TermId> TermStore::args(TermId app) const {
  const Term& t = node(app);
  if (t.kind != TermKind::App) throw TermError("not an application");
  return std::span<const TermId>(t.kids).subspan(1);
}

bool TermStore::is_implicit(TermId app, std::size_t arg) const {
  const Term& t = node(app);
  return t.kind == TermKind::App && arg < t.implicit.size() && t.implicit[arg];
}

TermId TermStore::prod_type(TermId prod) const {
  const Term& t = node(prod);
  if (t.kind != TermKind::Prod) throw TermError("not a product");
  return t.kids[0];
}

TermId TermStore::prod_body(TermId prod) const {
  const Term& t = node(prod);
  if (t.kind != TermKind::Prod) throw TermError("not a product");
  return t.kids[1];
}

bool TermStore::is_const(TermId id, std::string_view symbol) const {
  const Term& t = node(id);
  return t.kind == TermKind::Const && names_[t.name.value] == symbol;
}

bool TermStore::is_app_of(TermId id, std::string_view symbol) const {
  const Term& t = node(id);
  return t.kind == TermKind::App && is_const(t.kids[0], symbol);
}

// ---------------------------------------------------------------------------
// Positions and rewriting

namespace {

void collect_ops(const TermStore& store, TermId t, std::vector<std::pair<Position, TermId>>& out) {
  const Term& n = store.node(t);
  if (n.kind == TermKind::App && store.is_const(n.kids[0], sym::op)) {
    out.emplace_back(Position{static_cast<int>(out.size()) + 1}, t);
  }
  for (TermId kid : n.kids) collect_ops(store, kid, out);
}

TermId rebuild(TermStore& store, TermId t, int target, int& seen, TermId replacement) {
  if (seen >= target) return t;
  Term n = store.node(t);
  if (n.kind == TermKind::App && store.is_const(n.kids[0], sym::op)) {
    if (++seen == target) return replacement;
  }
  bool changed = false;
  for (TermId& kid : n.kids) {
    const TermId next = rebuild(store, kid, target, seen, replacement);
    changed |= next != kid;
    kid = next;
    if (seen >= target && !changed) break;
  }
  return changed ? store.intern(std::move(n)) : t;
}

}  // namespace

std::vector<std::pair<Position, TermId>> op_positions(const TermStore& store, TermId t) {
  std::vector<std::pair<Position, TermId>> out;
  collect_ops(store, t, out);
  return out;
}

std::size_t op_count(const TermStore& store, TermId t) { return op_positions(store, t).size(); }

TermId subterm_at(const TermStore& store, TermId t, Position p) {
  const auto ops = op_positions(store, t);
  if (p.rank < 1 || static_cast<std::size_t>(p.rank) > ops.size()) {
    throw TermError("position " + std::to_string(p.rank) + " out of range (" + std::to_string(ops.size()) +
                    " operator nodes)");
  }
  return ops[static_cast<std::size_t>(p.rank - 1)].second;
}

TermId replace_at(TermStore& store, TermId t, Position p, TermId replacement) {
  subterm_at(store, t, p);  // range check
  if (!store.contains(replacement)) throw TermError("dangling replacement id");
  int seen = 0;
  return rebuild(store, t, p.rank, seen, replacement);
}

namespace {

template <typename F>
std::size_t fold_count(const TermStore& store, TermId t, std::unordered_map<TermId, std::size_t>& memo, F&& per_node) {
  if (auto it = memo.find(t); it != memo.end()) return it->second;
  const std::size_t value = per_node(store.node(t), [&](TermId kid) { return fold_count(store, kid, memo, per_node); });
  memo.emplace(t, value);
  return value;
}

}  // namespace

std::size_t leaf_count(const TermStore& store, TermId t) {
  std::unordered_map<TermId, std::size_t> memo;
  return fold_count(store, t, memo, [](const Term& n, auto&& rec) -> std::size_t {
    switch (n.kind) {
      case TermKind::Var:
      case TermKind::Const: return 1;
      case TermKind::App: {
        std::size_t sum = 0;
        for (std::size_t i = 1; i < n.kids.size(); ++i) sum += rec(n.kids[i]);
        return sum;
      }
      case TermKind::Prod: return rec(n.kids[0]) + rec(n.kids[1]);
    }
    return 0;
  });
}

std::size_t expanded_size(const TermStore& store, TermId t) {
  std::unordered_map<TermId, std::size_t> memo;
  return fold_count(store, t, memo, [](const Term& n, auto&& rec) -> std::size_t {
    std::size_t sum = 1;
    for (TermId kid : n.kids) sum += rec(kid);
    return sum;
  });
}

// ---------------------------------------------------------------------------
// Alpha equivalence and free variables

namespace {

int bound_index(const std::vector<NameId>& scope, NameId name) {
  for (std::size_t i = scope.size(); i-- > 0;) {
    if (scope[i] == name) return static_cast<int>(i);
  }
  return -1;
}

bool alpha_rec(const TermStore& store, TermId a, TermId b, std::vector<NameId>& sa, std::vector<NameId>& sb) {
  if (a == b && sa == sb) return true;
  const Term& x = store.node(a);
  const Term& y = store.node(b);
  if (x.kind != y.kind || x.kids.size() != y.kids.size()) return false;
  switch (x.kind) {
    case TermKind::Const: return x.name == y.name;
    case TermKind::Var: {
      const int ia = bound_index(sa, x.name);
      const int ib = bound_index(sb, y.name);
      if (ia < 0 && ib < 0) return x.name == y.name;
      return ia == ib;
    }
    case TermKind::App:
      if (x.implicit != y.implicit) return false;
      for (std::size_t i = 0; i < x.kids.size(); ++i) {
        if (!alpha_rec(store, x.kids[i], y.kids[i], sa, sb)) return false;
      }
      return true;
    case TermKind::Prod: {
      if (!alpha_rec(store, x.kids[0], y.kids[0], sa, sb)) return false;
      sa.push_back(x.name);
      sb.push_back(y.name);
      const bool ok = alpha_rec(store, x.kids[1], y.kids[1], sa, sb);
      sa.pop_back();
      sb.pop_back();
      return ok;
    }
  }
  return false;
}

void free_rec(const TermStore& store, TermId t, std::vector<NameId>& scope, std::vector<NameId>& out) {
  const Term& n = store.node(t);
  switch (n.kind) {
    case TermKind::Var:
      if (bound_index(scope, n.name) < 0 && std::find(out.begin(), out.end(), n.name) == out.end()) {
        out.push_back(n.name);
      }
      return;
    case TermKind::Const: return;
    case TermKind::App:
      for (TermId kid : n.kids) free_rec(store, kid, scope, out);
      return;
    case TermKind::Prod:
      free_rec(store, n.kids[0], scope, out);
      scope.push_back(n.name);
      free_rec(store, n.kids[1], scope, out);
      scope.pop_back();
      return;
  }
}

}  // namespace

bool alpha_eq(const TermStore& store, TermId a, TermId b) {
  std::vector<NameId> sa, sb;
  return alpha_rec(store, a, b, sa, sb);
}

std::vector<std::string> free_vars(const TermStore& store, TermId t) {
  std::vector<NameId> scope, found;
  free_rec(store, t, scope, found);
  std::vector<std::string> out;
  out.reserve(found.size());
  for (NameId n : found) out.push_back(store.name_text(n));
  return out;
}

// ---------------------------------------------------------------------------
// S-expressions

namespace {

void print_rec(const TermStore& store, TermId t, std::string& out) {
  const Term& n = store.node(t);
  switch (n.kind) {
    case TermKind::Var:
      out += "(v ";
      out += store.name_text(n.name);
      out += ')';
      return;
    case TermKind::Const:
      out += "(c ";
      out += store.name_text(n.name);
      out += ')';
      return;
    case TermKind::App: {
      out += "(app ";
      const Term& head = store.node(n.kids[0]);
      if (head.kind == TermKind::Const) {
        out += store.name_text(head.name);
      } else {
        print_rec(store, n.kids[0], out);
      }
      for (std::size_t i = 1; i < n.kids.size(); ++i) {
        out += ' ';
        if (n.implicit[i - 1]) {
          out += "(impl ";
          print_rec(store, n.kids[i], out);
          out += ')';
        } else {
          print_rec(store, n.kids[i], out);
        }
      }
      out += ')';
      return;
    }
    case TermKind::Prod:
      out += "(prod ";
      out += store.name_text(n.name);
      out += ' ';
      print_rec(store, n.kids[0], out);
      out += ' ';
      print_rec(store, n.kids[1], out);
      out += ')';
      return;
  }
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'' || c == '.';
}

class SexprParser {
 public:
  SexprParser(TermStore& store, std::string_view text, ParseOptions options)
      : store_(store), text_(text), options_(options) {}

  TermId parse_top() {
    const TermId t = parse_term();
    skip_ws();
    if (pos_ < text_.size()) fail("trailing input after term");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_, col_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  bool at(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size()) fail(std::string("unexpected end of input, expected '") + c + "'");
    if (text_[pos_] != c) fail(std::string("expected '") + c + "', found '" + text_[pos_] + "'");
    advance();
  }

  std::string ident() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input, expected identifier");
    if (!ident_start(text_[pos_])) fail(std::string("expected identifier, found '") + text_[pos_] + "'");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) advance();
    return std::string(text_.substr(start, pos_ - start));
  }

  TermId constant(const std::string& symbol) {
    if (!store_.is_declared(symbol)) {
      if (!options_.declare_unknown) fail("undeclared constant '" + symbol + "'");
      store_.declare(symbol);
    }
    return store_.constant(symbol);
  }

  TermId checked(auto&& build) {
    const int line = line_, col = col_;
    try {
      return build();
    } catch (const ParseError&) {
      throw;
    } catch (const TermError& e) {
      throw ParseError(e.what(), line, col);
    }
  }

  TermId parse_term() {
    expect('(');
    const std::string keyword = ident();
    TermId result;
    if (keyword == "v") {
      const std::string name = ident();
      result = store_.var(name);
    } else if (keyword == "c") {
      result = constant(ident());
    } else if (keyword == "app") {
      TermId head;
      if (at('(')) {
        head = parse_term();
      } else {
        head = constant(ident());
      }
      std::vector<TermId> args;
      std::vector<bool> implicit;
      while (!at(')')) {
        if (pos_ >= text_.size()) fail("unbalanced parentheses: missing ')'");
        const auto [arg, impl] = parse_arg();
        args.push_back(arg);
        implicit.push_back(impl);
      }
      if (args.empty()) fail("application without arguments");
      result = checked([&] { return store_.app(head, args, implicit); });
    } else if (keyword == "t" && options_.table != nullptr) {
      result = table_ref();
    } else if (keyword == "prod") {
      const std::string binder = ident();
      const TermId ty = parse_term();
      const TermId body = parse_term();
      result = store_.prod(binder, ty, body);
    } else {
      fail("unknown head keyword '" + keyword + "'");
    }
    expect(')');
    return result;
  }

  TermId table_ref() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
    if (start == pos_) fail("expected a term table index");
    const std::string digits(text_.substr(start, pos_ - start));
    if (digits.size() > 9) fail("term table index out of range");
    const auto index = static_cast<std::size_t>(std::stoul(digits));
    if (index >= options_.table->size()) fail("dangling term reference " + digits);
    return (*options_.table)[index];
  }

  std::pair<TermId, bool> parse_arg() {
    // Look ahead for "(impl".
    skip_ws();
    const std::size_t save_pos = pos_;
    const int save_line = line_, save_col = col_;
    expect('(');
    skip_ws();
    if (pos_ < text_.size() && ident_start(text_[pos_])) {
      const std::string kw = ident();
      if (kw == "impl") {
        const TermId inner = parse_term();
        expect(')');
        return {inner, true};
      }
    }
    pos_ = save_pos;
    line_ = save_line;
    col_ = save_col;
    return {parse_term(), false};
  }

  TermStore& store_;
  std::string_view text_;
  ParseOptions options_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::string print_sexpr(const TermStore& store, TermId t) {
  std::string out;
  print_rec(store, t, out);
  return out;
}

TermId parse_sexpr(TermStore& store, std::string_view text, ParseOptions options) {
  return SexprParser(store, text, options).parse_top();
}

}  // namespace proofgym
