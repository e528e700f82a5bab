#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace proofgym {

// Symbols of the algebraic rewrite signature.
namespace sym {
inline constexpr std::string_view op = "f";       // binary operator (the "plus" node)
inline constexpr std::string_view eq = "eq";      // propositional equality
inline constexpr std::string_view left_id = "e";  // left identity
inline constexpr std::string_view right_id = "m"; // right identity
inline constexpr std::string_view carrier = "G";  // carrier type
}  // namespace sym

class TermError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public TermError {
 public:
  ParseError(const std::string& what, int line, int column)
      : TermError(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Dense handle into a TermStore.
struct TermId {
  std::uint32_t value = 0;

  constexpr TermId() = default;
  constexpr explicit TermId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const TermId&) const = default;
};

/// Interned identifier / symbol.
struct NameId {
  std::uint32_t value = 0;

  constexpr NameId() = default;
  constexpr explicit NameId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const NameId&) const = default;
};

/// 1-based preorder rank of an operator node.
struct Position {
  int rank = 1;

  constexpr Position() = default;
  constexpr explicit Position(int r) : rank(r) {}
  constexpr auto operator<=>(const Position&) const = default;
};

enum class TermKind : std::uint8_t { Var, Const, App, Prod };

const char* to_string(TermKind kind);

/// One hash-consed node. App: kids = [head, args...] with one implicit flag
/// per arg. Prod: kids = [type, body] and `name` is the binder.
struct Term {
  TermKind kind = TermKind::Const;
  NameId name{};
  std::vector<TermId> kids;
  std::vector<bool> implicit;

  bool operator==(const Term&) const = default;
};

struct TermHash {
  std::size_t operator()(const Term& t) const;
};

/// Hash-consed term DAG. Structurally equal terms get the same id, so term
/// equality is id equality.
///
/// Concurrency: const member functions may be called from many threads as
/// long as no thread is interning at the same time (single writer).
class TermStore {
 public:
  static constexpr int kVariadic = -1;

  TermStore() = default;

  /// Store with the rewrite signature (f/2, eq/2, e, m, G) declared.
  static TermStore with_rewrite_signature();

  // Names and symbols.
  NameId intern_name(std::string_view name);
  std::optional<NameId> find_name(std::string_view name) const;
  const std::string& name_text(NameId id) const { return names_.at(id.value); }

  void declare(std::string_view symbol, int arity = kVariadic);
  bool is_declared(std::string_view symbol) const;
  std::optional<int> arity(std::string_view symbol) const;
  /// Declared symbols in declaration order.
  std::vector<std::pair<std::string, int>> declarations() const;

  // Interning. All of these return the existing id when the structure is
  // already present.
  TermId intern(Term term);
  TermId var(std::string_view name);
  TermId constant(std::string_view symbol);
  TermId app(TermId head, std::span<const TermId> args, const std::vector<bool>& implicit = {});
  TermId app(std::string_view head_symbol, std::initializer_list<TermId> args);
  TermId prod(std::string_view binder, TermId type, TermId body);

  // Accessors.
  std::size_t size() const { return nodes_.size(); }
  bool contains(TermId id) const { return id.value < nodes_.size(); }
  const Term& node(TermId id) const;
  TermKind kind(TermId id) const { return node(id).kind; }
  const std::string& name(TermId id) const { return name_text(node(id).name); }
  TermId head(TermId app) const;
  std::span<const TermId> args(TermId app) const;
  bool is_implicit(TermId app, std::size_t arg) const;
  TermId prod_type(TermId prod) const;
  TermId prod_body(TermId prod) const;

  /// True when `id` is the constant `symbol`.
  bool is_const(TermId id, std::string_view symbol) const;
  /// True when `id` is an App whose head is the constant `symbol`.
  bool is_app_of(TermId id, std::string_view symbol) const;

 private:
  std::vector<Term> nodes_;
  std::unordered_map<Term, TermId, TermHash> index_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, NameId> name_index_;
  std::vector<std::pair<NameId, int>> declared_;
  std::unordered_map<std::uint32_t, int> arity_;
};

/// Operator nodes of `t` in preorder, paired with their 1-based rank.
std::vector<std::pair<Position, TermId>> op_positions(const TermStore& store, TermId t);
std::size_t op_count(const TermStore& store, TermId t);

/// The operator node at rank `p`. Throws TermError when out of range.
TermId subterm_at(const TermStore& store, TermId t, Position p);
/// Persistent replacement of the operator node at rank `p` by `replacement`.
TermId replace_at(TermStore& store, TermId t, Position p, TermId replacement);

/// Leaf occurrences (Var/Const arguments), counted with multiplicity.
/// Application heads are not leaves of the expression.
std::size_t leaf_count(const TermStore& store, TermId t);
/// Nodes of the expanded tree (every occurrence counted).
std::size_t expanded_size(const TermStore& store, TermId t);

bool alpha_eq(const TermStore& store, TermId a, TermId b);
/// Free variables in first-occurrence (preorder) order.
std::vector<std::string> free_vars(const TermStore& store, TermId t);

/// Canonical s-expression text.
std::string print_sexpr(const TermStore& store, TermId t);

struct ParseOptions {
  /// Declare unknown constants (variadic) instead of failing.
  bool declare_unknown = false;
  /// When set, `(t k)` refers to table[k]. Used by the dataset term table.
  const std::vector<TermId>* table = nullptr;
};

TermId parse_sexpr(TermStore& store, std::string_view text, ParseOptions options = {});

}  // namespace proofgym

template <>
struct std::hash<proofgym::TermId> {
  std::size_t operator()(proofgym::TermId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};

template <>
struct std::hash<proofgym::NameId> {
  std::size_t operator()(proofgym::NameId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
