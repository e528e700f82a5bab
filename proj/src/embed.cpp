#include "proofgym/embed.hpp"

#include <algorithm>
#include <cmath>

namespace proofgym {

namespace {

constexpr std::uint64_t kVarTag = 0x5641520000000001ULL;
constexpr std::uint64_t kConstTag = 0x434f4e5300000002ULL;
constexpr std::uint64_t kAppTag = 0x4150500000000003ULL;
constexpr std::uint64_t kProdTag = 0x50524f4400000004ULL;
constexpr std::uint64_t kPlaceholderTag = 0x504c414300000005ULL;
constexpr std::uint64_t kContextTag = 0x4354580000000006ULL;
constexpr std::uint64_t kUnboundTag = 0x554e424400000007ULL;

constexpr int kKindApp = 0;
constexpr int kKindProd = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t gate_count(const CellParams& cell) {
  if (cell.kind == CellKind::Tanh) return 1;
  if (cell.kind == CellKind::GRU) return 3;
  return 4;  // LSTM / TreeLSTM: i, f, o, u
}

std::vector<std::string> gate_names(const CellParams& cell) {
  switch (gate_count(cell)) {
    case 1: return {"h"};
    case 3: return {"z", "r", "n"};
    default: return {"i", "f", "o", "u"};
  }
}

template <typename Make>
CellParams make_cell(CellKind kind, bool sequence, Make&& make) {
  CellParams cell;
  cell.kind = kind;
  cell.sequence = sequence;
  for (const auto& g : gate_names(cell)) {
    cell.W.push_back(make("W" + g, true));
    cell.U.push_back(make("U" + g, true));
    cell.b.push_back(make("b" + g, false));
  }
  return cell;
}

std::unordered_map<std::string, int> index_symbols(const std::vector<std::string>& symbols) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < symbols.size(); ++i) index.emplace(symbols[i], static_cast<int>(i));
  return index;
}

}  // namespace

const char* to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Tanh: return "tanh";
    case CellKind::GRU: return "gru";
    case CellKind::TreeLSTM: return "treelstm";
  }
  return "?";
}

CellKind cell_from_string(const std::string& text) {
  if (text == "tanh") return CellKind::Tanh;
  if (text == "gru") return CellKind::GRU;
  if (text == "treelstm") return CellKind::TreeLSTM;
  throw EmbedError("unknown cell kind: " + text);
}

EmbedNet EmbedNet::create(ParamStore& params, CellKind cell, int dim, std::vector<std::string> symbols, Rng& rng,
                          const std::string& prefix) {
  EmbedNet net;
  net.cell = cell;
  net.dim = dim;
  net.symbols = std::move(symbols);
  net.symbol_index = index_symbols(net.symbols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  net.kind_table = params.add(prefix + ".kind", 2, dim, rng, 1.0);
  net.symbol_table =
      params.add(prefix + ".symbols", std::max<int>(1, static_cast<int>(net.symbols.size())), dim, rng, 1.0);
  auto maker = [&](const std::string& part) {
    return [&, part](const std::string& name, bool matrix) {
      return params.add(prefix + "." + part + "." + name, dim, matrix ? dim : 1, rng, scale);
    };
  };
  net.term = make_cell(cell, cell != CellKind::TreeLSTM, maker("term"));
  net.context = make_cell(cell, true, maker("context"));
  return net;
}

EmbedNet EmbedNet::attach(const ParamStore& params, CellKind cell, int dim, std::vector<std::string> symbols,
                          const std::string& prefix) {
  EmbedNet net;
  net.cell = cell;
  net.dim = dim;
  net.symbols = std::move(symbols);
  net.symbol_index = index_symbols(net.symbols);
  net.kind_table = params.find(prefix + ".kind");
  net.symbol_table = params.find(prefix + ".symbols");
  auto finder = [&](const std::string& part) {
    return [&, part](const std::string& name, bool) { return params.find(prefix + "." + part + "." + name); };
  };
  net.term = make_cell(cell, cell != CellKind::TreeLSTM, finder("term"));
  net.context = make_cell(cell, true, finder("context"));
  if (params[net.kind_table].cols != dim) throw EmbedError("embedding width mismatch in parameters");
  return net;
}

void Env::push(const std::string& name, NodeId vec, std::uint64_t key) {
  scopes_[name].push_back(Binding{vec, key, depth_});
  ++depth_;
}

void Env::pop(const std::string& name) {
  auto it = scopes_.find(name);
  if (it == scopes_.end() || it->second.empty()) throw EmbedError("pop of unbound variable: " + name);
  it->second.pop_back();
  if (it->second.empty()) scopes_.erase(it);
  --depth_;
}

const Env::Binding* Env::lookup(const std::string& name) const {
  auto it = scopes_.find(name);
  if (it == scopes_.end()) return nullptr;
  return &it->second.back();
}

std::size_t Embedder::MemoKeyHash::operator()(const MemoKey& k) const noexcept {
  std::uint64_t h = mix64(k.term.value);
  for (auto key : k.keys) h = mix64(h, key);
  return static_cast<std::size_t>(h);
}

Embedder::Embedder(Graph& graph, const EmbedNet& net, const TermStore& store, EmbedConfig config)
    : graph_(graph), net_(net), store_(store), config_(config) {}

NodeId Embedder::embed_term(TermId t, Env& env) { return embed(t, env).h; }

StateEmbedding Embedder::embed_state(const std::vector<ContextEntry>& ctx, TermId goal) {
  StateEmbedding out;
  Env env;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    out.entries.push_back(embed(ctx[i].type, env).h);
    const std::uint64_t key = mix64(config_.pass_seed, mix64(kContextTag, i));
    env.push(ctx[i].name, binder_vector(key), key);
  }
  out.goal = embed(goal, env).h;
  Result state;
  for (NodeId x : out.entries) state = step(net_.context, state, x);
  state = step(net_.context, state, out.goal);
  out.state = state.h;
  return out;
}

Embedder::Result Embedder::embed(TermId t, Env& env) {
  visited_.insert(t);
  if (!config_.memo) return embed_uncached(t, env);
  MemoKey key = memo_key(t, env);
  if (auto it = memo_.find(key); it != memo_.end()) {
    ++memo_hits_;
    return it->second;
  }
  const Result r = embed_uncached(t, env);
  memo_.emplace(std::move(key), r);
  return r;
}

Embedder::Result Embedder::embed_uncached(TermId t, Env& env) {
  const Term& term = store_.node(t);
  switch (term.kind) {
    case TermKind::Var: {
      const auto* b = env.lookup(store_.name_text(term.name));
      if (b == nullptr) throw EmbedError("unbound variable: " + store_.name_text(term.name));
      return Result{b->vec, kNoNode};
    }
    case TermKind::Const: {
      const auto& name = store_.name_text(term.name);
      auto it = net_.symbol_index.find(name);
      if (it == net_.symbol_index.end()) throw EmbedError("unknown symbol: " + name);
      return Result{graph_.gather(net_.symbol_table, it->second), kNoNode};
    }
    case TermKind::App: {
      std::vector<Result> kids;
      kids.push_back(embed(term.kids[0], env));
      for (std::size_t i = 1; i < term.kids.size(); ++i) {
        if (config_.drop_implicit && term.implicit[i - 1]) continue;
        kids.push_back(embed(term.kids[i], env));
      }
      const NodeId kind = graph_.gather(net_.kind_table, kKindApp);
      if (!net_.term.sequence) return compose(net_.term, kind, kids);
      Result state = step(net_.term, Result{}, kind);
      for (const auto& k : kids) state = step(net_.term, state, k.h);
      return state;
    }
    case TermKind::Prod: {
      const Result type = embed(term.kids[0], env);
      const std::uint64_t key = mix64(config_.pass_seed, alpha_hash(t, env));
      const std::string& binder = store_.name_text(term.name);
      env.push(binder, binder_vector(key), key);
      const Result body = embed(term.kids[1], env);
      env.pop(binder);
      const NodeId kind = graph_.gather(net_.kind_table, kKindProd);
      if (!net_.term.sequence) return compose(net_.term, kind, {type, body});
      Result state = step(net_.term, Result{}, kind);
      state = step(net_.term, state, type.h);
      return step(net_.term, state, body.h);
    }
  }
  throw EmbedError("bad term kind");
}

NodeId Embedder::gates(const CellParams& cell, std::size_t gate, NodeId x, NodeId h) {
  std::vector<NodeId> parts{graph_.matvec(cell.W[gate], x)};
  if (h != kNoNode) parts.push_back(graph_.matvec(cell.U[gate], h));
  parts.push_back(graph_.param(cell.b[gate]));
  return graph_.add(parts);
}

NodeId Embedder::input_dropout(NodeId x) {
  return config_.input_dropout > 0 ? graph_.dropout(x, config_.input_dropout) : x;
}

// One recurrent step. A missing state (first step) drops the U terms.
Embedder::Result Embedder::step(const CellParams& cell, Result s, NodeId x) {
  x = input_dropout(x);
  switch (cell.kind) {
    case CellKind::Tanh: return Result{graph_.tanh(gates(cell, 0, x, s.h)), kNoNode};
    case CellKind::GRU: {
      const NodeId z = graph_.sigmoid(gates(cell, 0, x, s.h));
      if (s.h == kNoNode) {
        const NodeId n = graph_.tanh(gates(cell, 2, x, kNoNode));
        return Result{graph_.mul(graph_.one_minus(z), n), kNoNode};
      }
      const NodeId r = graph_.sigmoid(gates(cell, 1, x, s.h));
      const NodeId n = graph_.tanh(gates(cell, 2, x, graph_.mul(r, s.h)));
      return Result{graph_.add(graph_.mul(graph_.one_minus(z), n), graph_.mul(z, s.h)), kNoNode};
    }
    case CellKind::TreeLSTM: {
      const NodeId i = graph_.sigmoid(gates(cell, 0, x, s.h));
      const NodeId o = graph_.sigmoid(gates(cell, 2, x, s.h));
      const NodeId u = graph_.tanh(gates(cell, 3, x, s.h));
      NodeId c = graph_.mul(i, u);
      if (s.c != kNoNode) {
        const NodeId f = graph_.sigmoid(gates(cell, 1, x, s.h));
        c = graph_.add(c, graph_.mul(f, s.c));
      }
      return Result{graph_.mul(o, graph_.tanh(c)), c};
    }
  }
  throw EmbedError("bad cell kind");
}

// Child-sum TreeLSTM node over the kind vector and the children.
Embedder::Result Embedder::compose(const CellParams& cell, NodeId x, const std::vector<Result>& kids) {
  x = input_dropout(x);
  std::vector<NodeId> hs;
  for (const auto& k : kids) hs.push_back(k.h);
  const NodeId hsum = hs.empty() ? kNoNode : (hs.size() == 1 ? hs[0] : graph_.add(hs));
  const NodeId i = graph_.sigmoid(gates(cell, 0, x, hsum));
  const NodeId o = graph_.sigmoid(gates(cell, 2, x, hsum));
  const NodeId u = graph_.tanh(gates(cell, 3, x, hsum));
  std::vector<NodeId> cs{graph_.mul(i, u)};
  for (const auto& k : kids) {
    if (k.c == kNoNode) continue;
    const NodeId f = graph_.sigmoid(gates(cell, 1, x, k.h));
    cs.push_back(graph_.mul(f, k.c));
  }
  const NodeId c = cs.size() == 1 ? cs[0] : graph_.add(cs);
  return Result{graph_.mul(o, graph_.tanh(c)), c};
}

NodeId Embedder::binder_vector(std::uint64_t key) {
  if (auto it = binder_vectors_.find(key); it != binder_vectors_.end()) return it->second;
  Rng rng(key);
  std::vector<double> v(static_cast<std::size_t>(net_.dim));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  const NodeId id = graph_.input(v);
  binder_vectors_.emplace(key, id);
  return id;
}

const std::vector<std::string>& Embedder::free_var_names(TermId t) {
  if (auto it = free_vars_.find(t); it != free_vars_.end()) return it->second;
  const Term& term = store_.node(t);
  std::vector<std::string> out;
  switch (term.kind) {
    case TermKind::Var: out.push_back(store_.name_text(term.name)); break;
    case TermKind::Const: break;
    case TermKind::App:
      for (std::size_t i = 0; i < term.kids.size(); ++i) {
        if (i > 0 && config_.drop_implicit && term.implicit[i - 1]) continue;
        const auto& kid = free_var_names(term.kids[i]);
        out.insert(out.end(), kid.begin(), kid.end());
      }
      break;
    case TermKind::Prod: {
      out = free_var_names(term.kids[0]);
      const auto& body = free_var_names(term.kids[1]);
      const auto& binder = store_.name_text(term.name);
      for (const auto& v : body)
        if (v != binder) out.push_back(v);
      break;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return free_vars_.emplace(t, std::move(out)).first->second;
}

Embedder::MemoKey Embedder::memo_key(TermId t, const Env& env) {
  MemoKey key{t, {}};
  for (const auto& v : free_var_names(t)) {
    const auto* b = env.lookup(v);
    key.keys.push_back(b != nullptr ? b->key : mix64(kUnboundTag, fnv1a(v)));
  }
  return key;
}

std::uint64_t Embedder::name_hash(NameId name) {
  if (auto it = name_hashes_.find(name.value); it != name_hashes_.end()) return it->second;
  const std::uint64_t h = fnv1a(store_.name_text(name));
  name_hashes_.emplace(name.value, h);
  return h;
}

// Structural hash with bound variables replaced by their binding level and
// free variables by the stream key of their current binding.
std::uint64_t Embedder::alpha_hash(TermId t, Env& env) {
  MemoKey key = memo_key(t, env);
  if (auto it = hash_memo_.find(key); it != hash_memo_.end()) return it->second;
  const Term& term = store_.node(t);
  std::uint64_t h = 0;
  switch (term.kind) {
    case TermKind::Var: {
      const auto* b = env.lookup(store_.name_text(term.name));
      h = b != nullptr ? mix64(kVarTag, b->key) : mix64(kUnboundTag, name_hash(term.name));
      break;
    }
    case TermKind::Const: h = mix64(kConstTag, name_hash(term.name)); break;
    case TermKind::App:
      h = kAppTag;
      for (std::size_t i = 0; i < term.kids.size(); ++i) {
        if (i > 0 && config_.drop_implicit && term.implicit[i - 1]) continue;
        h = mix64(h, alpha_hash(term.kids[i], env));
      }
      break;
    case TermKind::Prod: {
      h = mix64(kProdTag, alpha_hash(term.kids[0], env));
      const std::string& binder = store_.name_text(term.name);
      env.push(binder, kNoNode, mix64(kPlaceholderTag, static_cast<std::uint64_t>(env.depth())));
      h = mix64(h, alpha_hash(term.kids[1], env));
      env.pop(binder);
      break;
    }
  }
  hash_memo_.emplace(std::move(key), h);
  return h;
}

}  // namespace proofgym
