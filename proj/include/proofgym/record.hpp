#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proofgym/term.hpp"

namespace proofgym {

using StateId = int;

enum class ArgKind { Local, Global, Term };

const char* to_string(ArgKind kind);
ArgKind arg_kind_from_string(const std::string& text);

/// Argument descriptor of a tactic call: a local hypothesis name, a global
/// lemma name, or a free-form term (printed s-expression).
struct TacticArg {
  ArgKind kind = ArgKind::Local;
  std::string value;

  bool operator==(const TacticArg&) const = default;
};

struct TacticInfo {
  std::string cls;  // equivalence class name
  std::string raw;  // tactic as written
  std::vector<TacticArg> args;

  bool operator==(const TacticInfo&) const = default;
};

struct ContextEntry {
  std::string name;
  TermId type;

  bool operator==(const ContextEntry&) const = default;
};

/// One proof-tree edge together with the state it was applied to.
struct TraceRecord {
  std::string lemma;
  StateId state_id = 0;
  std::optional<StateId> parent_id;
  std::vector<ContextEntry> ctx;
  TermId goal;
  TacticInfo tactic;
  std::vector<StateId> children;
};

}  // namespace proofgym
