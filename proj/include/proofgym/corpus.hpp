#pragma once

#include <cstdint>
#include <vector>

#include "proofgym/record.hpp"
#include "proofgym/term.hpp"

namespace proofgym {

/// Synthetic traces in the shape of a large formalization: multi-child
/// edges, implicit arguments, a skewed lemma-size distribution, raw tactic
/// names from the default class map and local-hypothesis arguments.
///
/// Argument rule: whenever a tactic takes a local argument, the goal's left
/// operand is an application of P and the argument is the context entry
/// whose type is exactly that operand. No other entry type is headed by P.
struct GenericCorpusSpec {
  int lemmas = 100;
  int min_steps = 3;
  int max_steps = 60;
  double implicit_rate = 0.3;
  std::uint64_t seed = 0;
};

/// Declares the symbols used by the generator (idempotent).
void declare_generic_signature(TermStore& store);

/// Records of all lemmas ("lemma/%04d"), tactic classes set from the
/// default class map.
std::vector<TraceRecord> gen_generic_corpus(TermStore& store, const GenericCorpusSpec& spec);

}  // namespace proofgym
