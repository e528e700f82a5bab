#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "proofgym/autodiff.hpp"
#include "proofgym/record.hpp"
#include "proofgym/term.hpp"

namespace proofgym {

class EmbedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CellKind : std::uint8_t { Tanh, GRU, TreeLSTM };

const char* to_string(CellKind kind);
CellKind cell_from_string(const std::string& text);

/// Gate weights of one recurrent cell: W (dim x dim) on the input, U on the
/// hidden state, b the bias, one triple per gate.
struct CellParams {
  CellKind kind = CellKind::GRU;
  bool sequence = true;  // false: TreeLSTM child-sum composition
  std::vector<ParamId> W, U, b;
};

/// Parameters of the term and proof-state embedding.
struct EmbedNet {
  CellKind cell = CellKind::GRU;
  int dim = 128;
  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> symbol_index;
  ParamId kind_table = -1;    // rows: App, Prod
  ParamId symbol_table = -1;  // one row per constant symbol
  CellParams term;            // folds over applications and products
  CellParams context;         // folds over context entries and the goal

  static EmbedNet create(ParamStore& params, CellKind cell, int dim, std::vector<std::string> symbols, Rng& rng,
                         const std::string& prefix = "embed");
  /// Rebinds to tensors created earlier under `prefix`.
  static EmbedNet attach(const ParamStore& params, CellKind cell, int dim, std::vector<std::string> symbols,
                         const std::string& prefix = "embed");
};

/// Variable environment: identifier -> (vector node, stream key, depth).
/// Bindings are scoped; popping restores the shadowed binding.
class Env {
 public:
  struct Binding {
    NodeId vec = kNoNode;
    std::uint64_t key = 0;
    int depth = 0;
  };

  void push(const std::string& name, NodeId vec, std::uint64_t key);
  void pop(const std::string& name);
  const Binding* lookup(const std::string& name) const;
  int depth() const { return depth_; }

 private:
  std::map<std::string, std::vector<Binding>> scopes_;
  int depth_ = 0;
};

struct EmbedConfig {
  bool drop_implicit = false;
  std::uint64_t pass_seed = 0;
  double input_dropout = 0;
  /// Memoize subterm embeddings on (term, bindings of its free variables).
  bool memo = true;
};

struct StateEmbedding {
  NodeId state = kNoNode;
  std::vector<NodeId> entries;  // embedding of each context entry's type
  NodeId goal = kNoNode;
};

/// Builds embedding subgraphs for terms and proof states within one pass.
///
/// Binder vectors are drawn from a stream keyed by (pass seed, structural
/// hash of the product with bound names erased and free variables replaced
/// by their own stream keys), so alpha-equivalent products under the same
/// environment see the same vector whether or not the memo is on.
class Embedder {
 public:
  Embedder(Graph& graph, const EmbedNet& net, const TermStore& store, EmbedConfig config);

  NodeId embed_term(TermId t, Env& env);
  StateEmbedding embed_state(const std::vector<ContextEntry>& ctx, TermId goal);

  std::size_t memo_hits() const { return memo_hits_; }
  /// Every term whose embedding was requested (instrumentation).
  const std::unordered_set<TermId>& visited() const { return visited_; }

 private:
  struct Result {
    NodeId h = kNoNode;
    NodeId c = kNoNode;
  };
  struct MemoKey {
    TermId term;
    std::vector<std::uint64_t> keys;
    bool operator==(const MemoKey&) const = default;
  };
  struct MemoKeyHash {
    std::size_t operator()(const MemoKey& k) const noexcept;
  };

  Result embed(TermId t, Env& env);
  Result embed_uncached(TermId t, Env& env);
  Result step(const CellParams& cell, Result state, NodeId x);
  Result compose(const CellParams& cell, NodeId x, const std::vector<Result>& kids);
  NodeId gates(const CellParams& cell, std::size_t gate, NodeId x, NodeId h);
  NodeId input_dropout(NodeId x);
  NodeId binder_vector(std::uint64_t key);
  const std::vector<std::string>& free_var_names(TermId t);
  MemoKey memo_key(TermId t, const Env& env);
  std::uint64_t alpha_hash(TermId t, Env& env);
  std::uint64_t name_hash(NameId name);

  Graph& graph_;
  const EmbedNet& net_;
  const TermStore& store_;
  EmbedConfig config_;
  std::unordered_map<MemoKey, Result, MemoKeyHash> memo_;
  std::unordered_map<MemoKey, std::uint64_t, MemoKeyHash> hash_memo_;
  std::unordered_map<TermId, std::vector<std::string>> free_vars_;
  std::unordered_map<std::uint64_t, NodeId> binder_vectors_;
  std::unordered_map<std::uint32_t, std::uint64_t> name_hashes_;
  std::unordered_set<TermId> visited_;
  std::size_t memo_hits_ = 0;
};

}  // namespace proofgym
