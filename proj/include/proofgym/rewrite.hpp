#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "proofgym/proof.hpp"
#include "proofgym/record.hpp"
#include "proofgym/rng.hpp"
#include "proofgym/term.hpp"

namespace proofgym {

/// Target value of a generated subexpression.
enum class Value : std::uint8_t { B, E, M };

/// Random expression with exactly `length` leaves that reduces to `target`.
/// Each operator node sends its value down one side, chosen by a fair coin;
/// the other side gets the matching identity. The leaf budget is split
/// uniformly among valid split points.
TermId gen_expression(TermStore& store, Rng& rng, int length, Value target = Value::B);

/// Number of distinct expressions gen_expression can produce, truncated at
/// `cap`. Exact whenever the result is below `cap`.
std::uint64_t count_expressions(int length, std::uint64_t cap, Value target = Value::B);

/// forall b : G, expr = b
TermId rewrite_statement(TermStore& store, TermId expr);

/// Depth-first search over applicable rewrites of `lhs` until it equals
/// `rhs`: smaller positions first, LeftId before RightId, backtracking out
/// of dead ends. Returns nullopt when no rewrite sequence exists.
std::optional<std::vector<RewriteTactic>> oracle_rewrites(TermStore& store, TermId lhs, TermId rhs);

/// Oracle proof of a statement (a product over an equality, or a bare
/// equality goal): the rewrites followed by Reflexivity. Throws
/// ProofError(Incomplete) when no proof exists.
std::vector<Tactic> oracle_proof(TermStore& store, TermId statement);

struct StepLabel {
  TermId goal;
  RewriteTactic action;
  int rewrites_remaining = 0;
};

struct TheoremSpec {
  std::string name;
  TermId expr;
  TermId statement;
  std::vector<Tactic> proof;
  std::vector<StepLabel> labels;
};

struct DatasetSpec {
  int n_train = 400;
  int n_test = 50;
  int length = 10;
  std::uint64_t seed = 0;
};

struct RewriteDataset {
  DatasetSpec spec;
  std::vector<TheoremSpec> train;
  std::vector<TheoremSpec> test;
};

/// Builds a theorem from an expression, with its oracle proof and labels.
TheoremSpec make_theorem(TermStore& store, TermId expr, std::string name);

/// Rejection-samples n_train + n_test distinct expressions. Attempt i draws
/// from the stream derived from (seed, i). Throws std::invalid_argument
/// when the requested count exceeds the expression space.
RewriteDataset gen_dataset(TermStore& store, const DatasetSpec& spec);

/// Replays a theorem's oracle proof in a fresh session.
ProofSession replay(TermStore& store, const TheoremSpec& theorem);

/// Trace records of every theorem (train first, then test).
std::vector<TraceRecord> dataset_records(TermStore& store, const RewriteDataset& data);

}  // namespace proofgym
