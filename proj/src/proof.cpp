#include "proofgym/proof.hpp"

#include <algorithm>
#include <sstream>

namespace proofgym {

const char* to_string(ArgKind kind) {
  switch (kind) {
    case ArgKind::Local: return "local";
    case ArgKind::Global: return "global";
    case ArgKind::Term: return "term";
  }
  return "?";
}

ArgKind arg_kind_from_string(const std::string& text) {
  if (text == "local") return ArgKind::Local;
  if (text == "global") return ArgKind::Global;
  if (text == "term") return ArgKind::Term;
  throw std::invalid_argument("unknown argument kind '" + text + "'");
}

const char* to_string(Law law) { return law == Law::LeftId ? "left" : "right"; }

const char* to_string(ProofErrorCode code) {
  switch (code) {
    case ProofErrorCode::InvalidPosition: return "InvalidPosition";
    case ProofErrorCode::PatternMismatch: return "PatternMismatch";
    case ProofErrorCode::NotTrivial: return "NotTrivial";
    case ProofErrorCode::StateClosed: return "StateClosed";
    case ProofErrorCode::UnknownState: return "UnknownState";
    case ProofErrorCode::OpenTerm: return "OpenTerm";
    case ProofErrorCode::Unsupported: return "Unsupported";
    case ProofErrorCode::Incomplete: return "Incomplete";
  }
  return "?";
}

std::string tactic_text(const Tactic& tactic) {
  if (const auto* rw = std::get_if<RewriteTactic>(&tactic)) {
    return "rewrite " + std::to_string(rw->pos.rank) + " " + to_string(rw->law);
  }
  if (std::holds_alternative<Reflexivity>(tactic)) return "reflexivity";
  const auto& gen = std::get<GenericTactic>(tactic);
  std::string out = gen.name;
  for (const auto& arg : gen.args) {
    out += ' ';
    out += arg.value;
  }
  return out;
}

TacticInfo tactic_info(const Tactic& tactic) {
  TacticInfo info;
  info.raw = tactic_text(tactic);
  if (const auto* rw = std::get_if<RewriteTactic>(&tactic)) {
    info.cls = "rewrite";
    info.args.push_back({ArgKind::Global, rw->law == Law::LeftId ? "left_id" : "right_id"});
  } else if (std::holds_alternative<Reflexivity>(tactic)) {
    info.cls = "reflexivity";
  } else {
    const auto& gen = std::get<GenericTactic>(tactic);
    info.cls = gen.name;
    info.args = gen.args;
  }
  return info;
}

Tactic tactic_from_info(const TacticInfo& info) {
  std::istringstream in(info.raw);
  std::string word;
  in >> word;
  if (word == "reflexivity" && info.args.empty()) return Reflexivity{};
  if (word == "rewrite") {
    int pos = 0;
    std::string law;
    if (in >> pos >> law && (law == "left" || law == "right")) {
      std::string rest;
      if (!(in >> rest)) return RewriteTactic{Position{pos}, law == "left" ? Law::LeftId : Law::RightId};
    }
  }
  return GenericTactic{word, info.args};
}

std::optional<std::size_t> ProofTree::outgoing(StateId id) const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].parent == id) return i;
  }
  return std::nullopt;
}

std::optional<StateId> ProofTree::parent(StateId id) const {
  for (const auto& edge : edges) {
    if (std::find(edge.children.begin(), edge.children.end(), id) != edge.children.end()) return edge.parent;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

/// Indices of the explicit arguments of an `eq` application.
std::optional<std::pair<std::size_t, std::size_t>> eq_operands(const TermStore& store, TermId goal) {
  if (!store.is_app_of(goal, sym::eq)) return std::nullopt;
  const auto args = store.args(goal);
  std::vector<std::size_t> explicit_args;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!store.is_implicit(goal, i)) explicit_args.push_back(i);
  }
  if (explicit_args.size() != 2) return std::nullopt;
  return std::pair{explicit_args[0], explicit_args[1]};
}

}  // namespace

std::optional<TermId> goal_lhs(const TermStore& store, TermId goal) {
  const auto ops = eq_operands(store, goal);
  if (!ops) return std::nullopt;
  return store.args(goal)[ops->first];
}

bool goal_is_trivial(const TermStore& store, TermId goal) {
  const auto ops = eq_operands(store, goal);
  if (!ops) return false;
  const auto args = store.args(goal);
  return args[ops->first] == args[ops->second];
}

TermId rewrite_expr(TermStore& store, TermId expr, Position pos, Law law) {
  const auto ops = op_positions(store, expr);
  if (pos.rank < 1 || static_cast<std::size_t>(pos.rank) > ops.size()) {
    throw ProofError(ProofErrorCode::InvalidPosition, "position " + std::to_string(pos.rank) + " out of range 1.." +
                                                          std::to_string(ops.size()));
  }
  const TermId redex = ops[static_cast<std::size_t>(pos.rank - 1)].second;
  const auto operands = store.args(redex);
  TermId result;
  if (law == Law::LeftId) {
    if (!store.is_const(operands[0], sym::left_id)) {
      throw ProofError(ProofErrorCode::PatternMismatch,
                       "left identity needs e at the left of position " + std::to_string(pos.rank));
    }
    result = operands[1];
  } else {
    if (!store.is_const(operands[1], sym::right_id)) {
      throw ProofError(ProofErrorCode::PatternMismatch,
                       "right identity needs m at the right of position " + std::to_string(pos.rank));
    }
    result = operands[0];
  }
  return replace_at(store, expr, pos, result);
}

std::optional<TermId> try_rewrite_expr(TermStore& store, TermId expr, Position pos, Law law) {
  const auto ops = op_positions(store, expr);
  if (pos.rank < 1 || static_cast<std::size_t>(pos.rank) > ops.size()) return std::nullopt;
  const auto operands = store.args(ops[static_cast<std::size_t>(pos.rank - 1)].second);
  if (law == Law::LeftId && !store.is_const(operands[0], sym::left_id)) return std::nullopt;
  if (law == Law::RightId && !store.is_const(operands[1], sym::right_id)) return std::nullopt;
  return replace_at(store, expr, pos, law == Law::LeftId ? operands[1] : operands[0]);
}

// ---------------------------------------------------------------------------

ProofSession ProofSession::start(TermStore& store, TermId theorem, std::string lemma) {
  if (const auto fv = free_vars(store, theorem); !fv.empty()) {
    throw ProofError(ProofErrorCode::OpenTerm, "theorem has free variable '" + fv.front() + "'");
  }
  ProofSession session(store, std::move(lemma));
  const StateId root = session.add_state({}, theorem);
  session.tree_.root = root;
  session.open_.push_back(root);
  if (store.kind(theorem) == TermKind::Prod) {
    const std::string binder = store.name_text(store.node(theorem).name);
    const StateId child = session.add_state({{binder, store.prod_type(theorem)}}, store.prod_body(theorem));
    session.record(root, GenericTactic{"intro", {}}, {child}, false);
  }
  return session;
}

StateId ProofSession::add_state(std::vector<ContextEntry> ctx, TermId goal) {
  const StateId id = next_id_++;
  tree_.nodes.emplace(id, ProofState{std::move(ctx), goal, id});
  return id;
}

std::size_t ProofSession::open_index(StateId state) const {
  const auto it = std::find(open_.begin(), open_.end(), state);
  if (it == open_.end()) {
    if (!tree_.nodes.contains(state)) {
      throw ProofError(ProofErrorCode::UnknownState, "no proof state " + std::to_string(state));
    }
    throw ProofError(ProofErrorCode::StateClosed, "proof state " + std::to_string(state) + " is not open");
  }
  return static_cast<std::size_t>(it - open_.begin());
}

TacticOutcome ProofSession::record(StateId parent, Tactic tactic, std::vector<StateId> children, bool undoable) {
  const std::size_t idx = open_index(parent);
  const ProofState& ps = tree_.nodes.at(parent);

  TraceRecord rec;
  rec.lemma = lemma_;
  rec.state_id = parent;
  rec.parent_id = tree_.parent(parent);
  rec.ctx = ps.ctx;
  rec.goal = ps.goal;
  rec.tactic = tactic_info(tactic);
  rec.children = children;
  trace_.push_back(std::move(rec));

  const bool closed = children.empty();
  open_.erase(open_.begin() + static_cast<std::ptrdiff_t>(idx));
  open_.insert(open_.begin() + static_cast<std::ptrdiff_t>(idx), children.begin(), children.end());
  if (closed) tree_.finals.insert(parent);
  tree_.edges.push_back(ProofEdge{parent, std::move(tactic), children});
  undo_.push_back(UndoEntry{parent, idx, closed});
  if (!undoable) undo_.clear();
  return TacticOutcome{closed, std::move(children)};
}

TacticOutcome ProofSession::apply(StateId state, const Tactic& tactic) {
  open_index(state);
  const ProofState ps = tree_.nodes.at(state);
  if (std::holds_alternative<Reflexivity>(tactic)) {
    if (!goal_is_trivial(*store_, ps.goal)) {
      throw ProofError(ProofErrorCode::NotTrivial, "goal of state " + std::to_string(state) + " is not trivial");
    }
    return record(state, tactic, {}, true);
  }
  if (const auto* rw = std::get_if<RewriteTactic>(&tactic)) {
    const auto lhs = goal_lhs(*store_, ps.goal);
    if (!lhs) throw ProofError(ProofErrorCode::InvalidPosition, "goal is not an equality");
    const TermId rewritten = rewrite_expr(*store_, *lhs, rw->pos, rw->law);
    Term goal = store_->node(ps.goal);
    for (std::size_t i = 1; i < goal.kids.size(); ++i) {
      if (goal.kids[i] == *lhs && !goal.implicit[i - 1]) {
        goal.kids[i] = rewritten;
        break;
      }
    }
    const TermId new_goal = store_->intern(std::move(goal));
    const StateId child = add_state(ps.ctx, new_goal);
    return record(state, tactic, {child}, true);
  }
  throw ProofError(ProofErrorCode::Unsupported,
                   "tactic '" + std::get<GenericTactic>(tactic).name + "' has no built-in semantics");
}

TacticOutcome ProofSession::apply_external(
    StateId state, const GenericTactic& tactic,
    const std::vector<std::pair<std::vector<ContextEntry>, TermId>>& children) {
  open_index(state);
  std::vector<StateId> ids;
  ids.reserve(children.size());
  for (const auto& [ctx, goal] : children) ids.push_back(add_state(ctx, goal));
  return record(state, tactic, std::move(ids), true);
}

bool ProofSession::undo() {
  if (undo_.empty()) return false;
  const UndoEntry entry = undo_.back();
  undo_.pop_back();
  const ProofEdge edge = tree_.edges.back();
  tree_.edges.pop_back();
  trace_.pop_back();
  if (entry.closed) tree_.finals.erase(entry.parent);
  const auto first = open_.begin() + static_cast<std::ptrdiff_t>(entry.open_index);
  open_.erase(first, first + static_cast<std::ptrdiff_t>(edge.children.size()));
  open_.insert(open_.begin() + static_cast<std::ptrdiff_t>(entry.open_index), entry.parent);
  for (StateId child : edge.children) tree_.nodes.erase(child);
  return true;
}

bool ProofSession::is_final(StateId state) const { return goal_is_trivial(*store_, this->state(state).goal); }

bool ProofSession::is_open(StateId state) const {
  return std::find(open_.begin(), open_.end(), state) != open_.end();
}

std::optional<StateId> ProofSession::current() const {
  if (open_.empty()) return std::nullopt;
  return open_.front();
}

const ProofState& ProofSession::state(StateId id) const {
  const auto it = tree_.nodes.find(id);
  if (it == tree_.nodes.end()) throw ProofError(ProofErrorCode::UnknownState, "no proof state " + std::to_string(id));
  return it->second;
}

int steps_below(const TermStore& store, const ProofTree& tree, StateId state) {
  const auto node = tree.nodes.find(state);
  if (node == tree.nodes.end()) {
    throw ProofError(ProofErrorCode::UnknownState, "no proof state " + std::to_string(state));
  }
  const auto out = tree.outgoing(state);
  if (!out) {
    if (!tree.finals.contains(state) && !goal_is_trivial(store, node->second.goal)) {
      throw ProofError(ProofErrorCode::Incomplete, "proof state " + std::to_string(state) + " is still open");
    }
    return 0;
  }
  int total = 1;
  for (StateId child : tree.edges[*out].children) total += steps_below(store, tree, child);
  return total;
}

}  // namespace proofgym
