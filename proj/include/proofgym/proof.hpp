#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "proofgym/record.hpp"
#include "proofgym/term.hpp"

namespace proofgym {

enum class Law : std::uint8_t { LeftId, RightId };

const char* to_string(Law law);  // "left" / "right"

struct RewriteTactic {
  Position pos;
  Law law = Law::LeftId;

  bool operator==(const RewriteTactic&) const = default;
};

struct Reflexivity {
  bool operator==(const Reflexivity&) const = default;
};

/// Tactics coming from ingested traces; the engine records them but does
/// not interpret them.
struct GenericTactic {
  std::string name;
  std::vector<TacticArg> args;

  bool operator==(const GenericTactic&) const = default;
};

using Tactic = std::variant<RewriteTactic, Reflexivity, GenericTactic>;

/// "rewrite 2 left", "reflexivity", or the generic name followed by args.
std::string tactic_text(const Tactic& tactic);
TacticInfo tactic_info(const Tactic& tactic);
/// Inverse of tactic_info for the rewrite domain; anything else becomes a
/// GenericTactic carrying the recorded args.
Tactic tactic_from_info(const TacticInfo& info);

struct ProofState {
  std::vector<ContextEntry> ctx;
  TermId goal;
  StateId id = 0;
};

struct ProofEdge {
  StateId parent = 0;
  Tactic tactic;
  std::vector<StateId> children;
};

struct ProofTree {
  std::map<StateId, ProofState> nodes;
  std::vector<ProofEdge> edges;
  StateId root = 0;
  std::set<StateId> finals;

  /// Index into `edges` of the tactic applied at `id`, if any.
  std::optional<std::size_t> outgoing(StateId id) const;
  std::optional<StateId> parent(StateId id) const;
};

enum class ProofErrorCode {
  InvalidPosition,
  PatternMismatch,
  NotTrivial,
  StateClosed,
  UnknownState,
  OpenTerm,
  Unsupported,
  Incomplete,
};

const char* to_string(ProofErrorCode code);

class ProofError : public std::runtime_error {
 public:
  ProofError(ProofErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ProofErrorCode code() const { return code_; }

 private:
  ProofErrorCode code_;
};

/// Left-hand side of an equality goal (first explicit argument of `eq`).
std::optional<TermId> goal_lhs(const TermStore& store, TermId goal);

/// Applies one identity law at an operator position of `expr`. Throws
/// ProofError (InvalidPosition / PatternMismatch).
TermId rewrite_expr(TermStore& store, TermId expr, Position pos, Law law);
/// Non-throwing variant.
std::optional<TermId> try_rewrite_expr(TermStore& store, TermId expr, Position pos, Law law);

/// Goal is Eq(t, t) with identical operands.
bool goal_is_trivial(const TermStore& store, TermId goal);

struct TacticOutcome {
  bool closed = false;
  std::vector<StateId> children;
};

/// The game loop: proof tree, open goals and trace log over a shared term
/// store. A session is confined to one thread at a time.
class ProofSession {
 public:
  /// Starts a proof of `theorem`. A leading product is introduced into the
  /// context as one recorded "intro" step.
  static ProofSession start(TermStore& store, TermId theorem, std::string lemma = "theorem");

  TacticOutcome apply(StateId state, const Tactic& tactic);
  /// Records an externally computed step (ingested traces). An empty child
  /// list closes the state.
  TacticOutcome apply_external(StateId state, const GenericTactic& tactic,
                               const std::vector<std::pair<std::vector<ContextEntry>, TermId>>& children);
  /// Reverts the last tactic. Returns false when only the initial intro
  /// step (or nothing) has been recorded.
  bool undo();

  bool is_final(StateId state) const;
  bool is_open(StateId state) const;
  bool complete() const { return open_.empty(); }
  std::optional<StateId> current() const;
  const ProofState& state(StateId id) const;

  const ProofTree& tree() const { return tree_; }
  const std::vector<StateId>& open_goals() const { return open_; }
  /// One record per edge, in application order.
  const std::vector<TraceRecord>& export_tree() const { return trace_; }
  const std::string& lemma() const { return lemma_; }
  StateId next_id() const { return next_id_; }
  TermStore& store() const { return *store_; }

 private:
  ProofSession(TermStore& store, std::string lemma) : store_(&store), lemma_(std::move(lemma)) {}

  struct UndoEntry {
    StateId parent;
    std::size_t open_index;
    bool closed;
  };

  StateId add_state(std::vector<ContextEntry> ctx, TermId goal);
  TacticOutcome record(StateId parent, Tactic tactic, std::vector<StateId> children, bool undoable);
  std::size_t open_index(StateId state) const;

  TermStore* store_;
  std::string lemma_;
  ProofTree tree_;
  std::vector<StateId> open_;
  StateId next_id_ = 0;
  std::vector<TraceRecord> trace_;
  std::vector<UndoEntry> undo_;
};

/// Edges in the subtree below `state`, closing edges included. A leaf
/// without an edge counts as complete when its goal is trivially true;
/// any other open leaf throws ProofError(Incomplete).
int steps_below(const TermStore& store, const ProofTree& tree, StateId state);

}  // namespace proofgym
