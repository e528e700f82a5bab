#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "proofgym/models.hpp"
#include "proofgym/proof.hpp"
#include "proofgym/rewrite.hpp"

namespace proofgym {

/// Chooses the next rewrite for a non-final toy state.
using Policy = std::function<RewriteTactic(const TermStore&, const ProofState&)>;

/// argmax of a toy tactic model's prediction, decoded to a rewrite.
Policy model_policy(Model& model);
/// First step of the oracle proof of the state's goal.
Policy oracle_policy(TermStore& store);

enum class Outcome { Completed, Failed };

const char* to_string(Outcome outcome);

struct SynthesisStep {
  StateId state = 0;
  std::string tactic;
  bool accepted = false;
  bool fallback = false;  // supplied by the oracle
};

struct SynthesisResult {
  std::string theorem;
  Outcome outcome = Outcome::Failed;
  std::vector<SynthesisStep> steps;
  int fallback_uses = 0;  // oracle substitutions
  int rejections = 0;     // model steps that failed or led to an unprovable goal
  std::string error;      // reason of a strict failure
};

/// Greedy proof search without backtracking. Reflexivity fires as soon as
/// the goal is trivial. Strict mode stops at the first tactic error or when
/// the step budget (leaf count of the left-hand side) runs out.
///
/// With fallback, a predicted step is rejected when it fails or leaves a
/// goal the oracle cannot prove; the oracle's first step for the current
/// goal is applied instead.
SynthesisResult synthesize(TermStore& store, TermId statement, const Policy& policy, bool fallback,
                           const std::string& name = "theorem");
SynthesisResult synthesize_greedy(TermStore& store, TermId statement, Model& model);
SynthesisResult synthesize_with_fallback(TermStore& store, TermId statement, Model& model);

struct BenchmarkReport {
  std::size_t n = 0;
  std::size_t strict_completed = 0;
  std::size_t fallback_completed = 0;
  double mean_fallback_uses = 0;
  double mean_rejections = 0;
  std::size_t states = 0;  // oracle rewrite states of the test theorems
  double tactic_accuracy = 0;
  double seconds = 0;
  std::vector<SynthesisResult> strict, with_fallback;
};

BenchmarkReport run_benchmark(TermStore& store, const std::vector<TheoremSpec>& theorems, const Policy& policy);
BenchmarkReport run_benchmark(TermStore& store, const std::vector<TheoremSpec>& theorems, Model& model);
nlohmann::ordered_json report_json(const BenchmarkReport& report);

/// Line protocol over one proof session at a time. Each request yields
/// exactly one response line (without the newline).
class ProtocolServer {
 public:
  explicit ProtocolServer(TermStore& store) : store_(store) {}

  std::string handle(const std::string& line);
  bool finished() const { return finished_; }

 private:
  std::string describe(StateId id) const;

  TermStore& store_;
  std::optional<ProofSession> session_;
  bool finished_ = false;
};

/// Reads requests until QUIT or end of input.
void serve_protocol(std::istream& in, std::ostream& out, TermStore& store);

}  // namespace proofgym
