#include "proofgym/agent.hpp"

#include <charconv>
#include <chrono>
#include <istream>
#include <ostream>
#include <sstream>

namespace proofgym {

namespace {

std::pair<TermId, TermId> sides(const TermStore& store, TermId goal) {
  const auto lhs = goal_lhs(store, goal);
  if (!lhs) throw ProofError(ProofErrorCode::InvalidPosition, "goal is not an equality");
  const auto args = store.args(goal);
  return {*lhs, args[args.size() - 1]};
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string err(const std::string& code, const std::string& message) { return "ERR " + code + " " + one_line(message); }

}  // namespace

Policy model_policy(Model& model) {
  if (model.config().task != Task::ToyTactic) throw ModelError("synthesis needs a toy tactic model");
  return [&model](const TermStore& store, const ProofState& st) {
    return toy_action(argmax(model.predict(store, st.ctx, st.goal)) + 1);
  };
}

Policy oracle_policy(TermStore& store) {
  return [&store](const TermStore&, const ProofState& st) {
    const auto [lhs, rhs] = sides(store, st.goal);
    const auto steps = oracle_rewrites(store, lhs, rhs);
    if (!steps || steps->empty()) throw ProofError(ProofErrorCode::Incomplete, "oracle has no rewrite for this goal");
    return steps->front();
  };
}

const char* to_string(Outcome outcome) { return outcome == Outcome::Completed ? "completed" : "failed"; }

SynthesisResult synthesize(TermStore& store, TermId statement, const Policy& policy, bool fallback,
                           const std::string& name) {
  SynthesisResult out;
  out.theorem = name;
  ProofSession session = ProofSession::start(store, statement, name);
  int budget = 0;
  if (const auto s = session.current(); s && !session.is_final(*s))
    budget = static_cast<int>(leaf_count(store, sides(store, session.state(*s).goal).first));
  int rewrites = 0;

  while (const auto cur = session.current()) {
    const StateId s = *cur;
    if (session.is_final(s)) {
      session.apply(s, Reflexivity{});
      out.steps.push_back({s, "reflexivity", true, false});
      continue;
    }
    if (rewrites >= budget) {
      out.error = "step budget exhausted";
      return out;
    }
    const ProofState st = session.state(s);
    const RewriteTactic action = policy(store, st);
    std::string problem;
    try {
      const auto result = session.apply(s, action);
      if (fallback) {
        const auto [lhs, rhs] = sides(store, session.state(result.children.front()).goal);
        if (!oracle_rewrites(store, lhs, rhs)) {
          session.undo();
          problem = "leads to an unprovable goal";
        }
      }
    } catch (const ProofError& e) {
      problem = std::string(to_string(e.code())) + ": " + e.what();
    }
    if (problem.empty()) {
      out.steps.push_back({s, tactic_text(action), true, false});
      ++rewrites;
      continue;
    }
    out.steps.push_back({s, tactic_text(action), false, false});
    if (!fallback) {
      out.error = problem;
      return out;
    }
    ++out.rejections;
    const auto [lhs, rhs] = sides(store, st.goal);
    const auto oracle = oracle_rewrites(store, lhs, rhs);
    if (!oracle || oracle->empty()) throw std::logic_error("oracle cannot prove a goal reached by sound rewrites");
    session.apply(s, oracle->front());
    out.steps.push_back({s, tactic_text(oracle->front()), true, true});
    ++out.fallback_uses;
    ++rewrites;
  }
  out.outcome = Outcome::Completed;
  return out;
}

SynthesisResult synthesize_greedy(TermStore& store, TermId statement, Model& model) {
  return synthesize(store, statement, model_policy(model), false);
}

SynthesisResult synthesize_with_fallback(TermStore& store, TermId statement, Model& model) {
  return synthesize(store, statement, model_policy(model), true);
}

BenchmarkReport run_benchmark(TermStore& store, const std::vector<TheoremSpec>& theorems, const Policy& policy) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport r;
  r.n = theorems.size();
  std::size_t correct = 0;
  for (const auto& thm : theorems) {
    r.strict.push_back(synthesize(store, thm.statement, policy, false, thm.name));
    r.with_fallback.push_back(synthesize(store, thm.statement, policy, true, thm.name));
    if (r.strict.back().outcome == Outcome::Completed) ++r.strict_completed;
    if (r.with_fallback.back().outcome == Outcome::Completed) ++r.fallback_completed;
    r.mean_fallback_uses += r.with_fallback.back().fallback_uses;
    r.mean_rejections += r.with_fallback.back().rejections;
    std::vector<ContextEntry> ctx;
    if (store.kind(thm.statement) == TermKind::Prod)
      ctx.push_back({store.name(thm.statement), store.prod_type(thm.statement)});
    for (const auto& label : thm.labels) {
      ++r.states;
      if (policy(store, ProofState{ctx, label.goal, 0}) == label.action) ++correct;
    }
  }
  if (r.n > 0) {
    r.mean_fallback_uses /= static_cast<double>(r.n);
    r.mean_rejections /= static_cast<double>(r.n);
  }
  r.tactic_accuracy = r.states == 0 ? 0 : static_cast<double>(correct) / static_cast<double>(r.states);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

BenchmarkReport run_benchmark(TermStore& store, const std::vector<TheoremSpec>& theorems, Model& model) {
  return run_benchmark(store, theorems, model_policy(model));
}

nlohmann::ordered_json report_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["strict_completed"] = r.strict_completed;
  j["fallback_completed"] = r.fallback_completed;
  j["mean_fallback_uses"] = r.mean_fallback_uses;
  j["mean_rejections"] = r.mean_rejections;
  j["states"] = r.states;
  j["tactic_accuracy"] = r.tactic_accuracy;
  auto& proofs = j["proofs"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.strict.size(); ++i) {
    nlohmann::ordered_json p;
    p["theorem"] = r.strict[i].theorem;
    p["strict"] = to_string(r.strict[i].outcome);
    if (!r.strict[i].error.empty()) p["strict_error"] = r.strict[i].error;
    p["strict_steps"] = r.strict[i].steps.size();
    p["fallback"] = to_string(r.with_fallback[i].outcome);
    p["fallback_uses"] = r.with_fallback[i].fallback_uses;
    p["rejections"] = r.with_fallback[i].rejections;
    proofs.push_back(std::move(p));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Protocol

std::string ProtocolServer::describe(StateId id) const {
  return "state=" + std::to_string(id) + " goal=" + print_sexpr(store_, session_->state(id).goal);
}

std::string ProtocolServer::handle(const std::string& raw) {
  std::string line = raw;
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
  std::istringstream in(line);
  std::string cmd;
  in >> cmd;
  std::string rest;
  std::getline(in, rest);
  rest.erase(0, rest.find_first_not_of(" \t"));

  try {
    if (cmd.empty()) return err("BadRequest", "empty request");
    if (cmd == "QUIT") {
      finished_ = true;
      return "OK bye";
    }
    if (cmd == "THEOREM") {
      if (rest.empty()) return err("BadRequest", "THEOREM needs an s-expression");
      TermId t;
      try {
        t = parse_sexpr(store_, rest);
      } catch (const ParseError& e) {
        return err("ParseError", e.what());
      }
      session_.emplace(ProofSession::start(store_, t));
      const auto cur = session_->current();
      if (!cur) return "OK closed=true";
      return "OK " + describe(*cur);
    }
    if (cmd != "TACTIC" && cmd != "STATE" && cmd != "UNDO") return err("BadRequest", "unknown command '" + cmd + "'");
    if (!session_) return err("NoSession", "no theorem loaded");

    if (cmd == "UNDO") {
      if (!rest.empty()) return err("BadRequest", "UNDO takes no arguments");
      if (!session_->undo()) return err("NothingToUndo", "no tactic to undo");
      return "OK " + describe(*session_->current());
    }
    const auto cur = session_->current();
    if (!cur) return err("NoOpenGoal", "the proof is complete");
    if (cmd == "STATE") {
      if (!rest.empty()) return err("BadRequest", "STATE takes no arguments");
      const ProofState& st = session_->state(*cur);
      std::string ctx;
      for (const auto& e : st.ctx) {
        if (!ctx.empty()) ctx += ", ";
        ctx += e.name + ":" + print_sexpr(store_, e.type);
      }
      return "OK state=" + std::to_string(*cur) + " ctx=[" + ctx + "] goal=" + print_sexpr(store_, st.goal);
    }

    std::istringstream words(rest);
    std::vector<std::string> w;
    for (std::string s; words >> s;) w.push_back(s);
    if (w.size() == 1 && w[0] == "reflexivity") {
      session_->apply(*cur, Reflexivity{});
      const auto next = session_->current();
      return next ? "OK closed=true next " + describe(*next) : "OK closed=true";
    }
    if (w.size() == 3 && w[0] == "rewrite") {
      int pos = 0;
      const auto [end, ec] = std::from_chars(w[1].data(), w[1].data() + w[1].size(), pos);
      if (ec != std::errc{} || end != w[1].data() + w[1].size()) return err("BadRequest", "bad position '" + w[1] + "'");
      if (w[2] != "left" && w[2] != "right") return err("BadRequest", "law must be left or right");
      const auto result =
          session_->apply(*cur, RewriteTactic{Position{pos}, w[2] == "left" ? Law::LeftId : Law::RightId});
      const StateId child = result.children.front();
      return "OK " + describe(child) + " final=" + (session_->complete() ? "true" : "false");
    }
    return err("BadRequest", "unknown tactic '" + rest + "'");
  } catch (const ProofError& e) {
    return err(to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return err("Internal", e.what());
  }
}

void serve_protocol(std::istream& in, std::ostream& out, TermStore& store) {
  ProtocolServer server(store);
  for (std::string line; !server.finished() && std::getline(in, line);) out << server.handle(line) << '\n' << std::flush;
}

}  // namespace proofgym
