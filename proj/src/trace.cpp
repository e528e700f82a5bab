#include "proofgym/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "proofgym/rng.hpp"

namespace proofgym {

using nlohmann::ordered_json;

namespace {

// Dense renumbering of every node reachable from the records, children
// before parents.
struct TableBuilder {
  const TermStore& store;
  std::unordered_map<TermId, std::uint32_t> ids;
  std::vector<TermId> order;

  std::uint32_t add(TermId root) {
    if (const auto it = ids.find(root); it != ids.end()) return it->second;
    // iterative postorder so deep terms do not overflow the stack
    std::vector<std::pair<TermId, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
      auto& [t, next] = stack.back();
      const Term& n = store.node(t);
      if (next < n.kids.size()) {
        const TermId kid = n.kids[next++];
        if (!ids.contains(kid)) stack.push_back({kid, 0});
        continue;
      }
      if (!ids.contains(t)) {
        ids.emplace(t, static_cast<std::uint32_t>(order.size()));
        order.push_back(t);
      }
      stack.pop_back();
    }
    return ids.at(root);
  }

  std::string line(TermId t) const {
    const Term& n = store.node(t);
    auto ref = [&](TermId kid) { return "(t " + std::to_string(ids.at(kid)) + ")"; };
    switch (n.kind) {
      case TermKind::Var: return "(v " + store.name_text(n.name) + ")";
      case TermKind::Const: return "(c " + store.name_text(n.name) + ")";
      case TermKind::Prod: return "(prod " + store.name_text(n.name) + " " + ref(n.kids[0]) + " " + ref(n.kids[1]) + ")";
      case TermKind::App: {
        const Term& head = store.node(n.kids[0]);
        std::string out = "(app " + (head.kind == TermKind::Const ? store.name_text(head.name) : ref(n.kids[0]));
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          out += n.implicit[i - 1] ? " (impl " + ref(n.kids[i]) + ")" : " " + ref(n.kids[i]);
        }
        return out + ")";
      }
    }
    return {};
  }
};

ordered_json record_json(const TraceRecord& r, const TableBuilder& table) {
  ordered_json j;
  j["lemma"] = r.lemma;
  j["state_id"] = r.state_id;
  j["parent_id"] = r.parent_id ? ordered_json(*r.parent_id) : ordered_json(nullptr);
  ordered_json ctx = ordered_json::array();
  for (const auto& e : r.ctx) ctx.push_back({e.name, table.ids.at(e.type)});
  j["ctx"] = std::move(ctx);
  j["goal"] = table.ids.at(r.goal);
  ordered_json args = ordered_json::array();
  for (const auto& a : r.tactic.args) args.push_back({{"kind", to_string(a.kind)}, {"value", a.value}});
  j["tactic"] = {{"class", r.tactic.cls}, {"raw", r.tactic.raw}, {"args", std::move(args)}};
  j["children"] = r.children;
  return j;
}

}  // namespace

std::string write_dataset(const TermStore& store, const std::vector<TraceRecord>& records,
                          const ordered_json& manifest) {
  TableBuilder table{store, {}, {}};
  for (const auto& r : records) {
    for (const auto& e : r.ctx) table.add(e.type);
    table.add(r.goal);
  }
  std::map<std::string, int> symbols;
  for (TermId t : table.order) {
    if (store.kind(t) == TermKind::Const) symbols[store.name(t)] = *store.arity(store.name(t));
  }
  ordered_json head = ordered_json::object();
  head["version"] = 1;
  for (const auto& [k, v] : manifest.items()) {
    if (k != "version" && k != "symbols" && k != "terms" && k != "records") head[k] = v;
  }
  ordered_json syms = ordered_json::array();
  for (const auto& [name, arity] : symbols) syms.push_back({name, arity});
  head["symbols"] = std::move(syms);
  head["terms"] = table.order.size();
  head["records"] = records.size();

  std::string out = "#manifest " + head.dump() + "\n";
  for (std::size_t i = 0; i < table.order.size(); ++i) {
    out += "#term " + std::to_string(i) + " " + table.line(table.order[i]) + "\n";
  }
  for (const auto& r : records) out += record_json(r, table).dump() + "\n";
  return out;
}

namespace {

class DatasetReader {
 public:
  explicit DatasetReader(std::string_view bytes) : bytes_(bytes) {}

  Dataset run() {
    std::string_view line;
    if (!next(line) || !line.starts_with("#manifest ")) fail("expected '#manifest {...}' header");
    try {
      data_.manifest = ordered_json::parse(line.substr(10));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad manifest: ") + e.what());
    }
    if (!data_.manifest.is_object()) fail("manifest is not an object");
    if (data_.manifest.value("version", 0) != 1) fail("unsupported dataset version");
    declare_symbols();
    while (next(line)) {
      if (line.empty()) continue;
      if (line.starts_with("#term ")) {
        if (!data_.records.empty()) fail("term line after records");
        term_line(line.substr(6));
      } else if (line.starts_with("#")) {
        fail("unknown directive");
      } else {
        record_line(line);
      }
    }
    if (data_.manifest.contains("terms") && data_.manifest["terms"] != table_.size()) {
      throw DatasetError("manifest term count does not match the table", 0);
    }
    if (data_.manifest.contains("records") && data_.manifest["records"] != data_.records.size()) {
      throw DatasetError("manifest record count does not match the records", 0);
    }
    return std::move(data_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw DatasetError(what, line_no_); }

  bool next(std::string_view& line) {
    if (pos_ >= bytes_.size()) return false;
    const std::size_t end = std::min(bytes_.find('\n', pos_), bytes_.size());
    line = bytes_.substr(pos_, end - pos_);
    if (line.ends_with('\r')) line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  void declare_symbols() {
    const auto it = data_.manifest.find("symbols");
    if (it == data_.manifest.end()) return;
    try {
      for (const auto& entry : *it) data_.store.declare(entry.at(0).get<std::string>(), entry.at(1).get<int>());
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad symbol list: ") + e.what());
    } catch (const TermError& e) {
      fail(std::string("bad symbol list: ") + e.what());
    }
  }

  void term_line(std::string_view rest) {
    const std::size_t space = rest.find(' ');
    if (space == std::string_view::npos) fail("malformed term line");
    std::size_t id = 0;
    try {
      id = std::stoul(std::string(rest.substr(0, space)));
    } catch (const std::exception&) {
      fail("malformed term id");
    }
    if (id != table_.size()) fail("term ids must be dense and increasing");
    try {
      table_.push_back(parse_sexpr(data_.store, rest.substr(space + 1), ParseOptions{.table = &table_}));
    } catch (const ParseError& e) {
      fail(std::string("bad term: ") + e.what());
    }
  }

  TermId term_ref(const ordered_json& j) {
    if (!j.is_number_unsigned()) fail("term reference must be a non-negative integer");
    const auto id = j.get<std::size_t>();
    if (id >= table_.size()) fail("dangling term reference " + std::to_string(id));
    return table_[id];
  }

  void record_line(std::string_view line) {
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    TraceRecord r;
    try {
      r.lemma = j.at("lemma").get<std::string>();
      r.state_id = j.at("state_id").get<StateId>();
      if (!j.at("parent_id").is_null()) r.parent_id = j["parent_id"].get<StateId>();
      for (const auto& e : j.at("ctx")) {
        if (!e.is_array() || e.size() != 2) fail("context entries are [ident, term_id] pairs");
        r.ctx.push_back({e[0].get<std::string>(), term_ref(e[1])});
      }
      r.goal = term_ref(j.at("goal"));
      const auto& tac = j.at("tactic");
      r.tactic.cls = tac.at("class").get<std::string>();
      r.tactic.raw = tac.at("raw").get<std::string>();
      for (const auto& a : tac.at("args")) {
        r.tactic.args.push_back({arg_kind_from_string(a.at("kind").get<std::string>()), a.at("value").get<std::string>()});
      }
      r.children = j.at("children").get<std::vector<StateId>>();
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    } catch (const std::invalid_argument& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    if (!seen_.insert({r.lemma, r.state_id}).second) {
      fail("duplicate state id " + std::to_string(r.state_id) + " in lemma " + r.lemma);
    }
    data_.records.push_back(std::move(r));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
  Dataset data_;
  std::vector<TermId> table_;
  std::set<std::pair<std::string, StateId>> seen_;
};

}  // namespace

Dataset read_dataset(std::string_view bytes) { return DatasetReader(bytes).run(); }

void save_dataset(const std::string& path, const TermStore& store, const std::vector<TraceRecord>& records,
                  const ordered_json& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << write_dataset(store, records, manifest);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return read_dataset(buf.str());
}

std::vector<std::string> lemma_names(const std::vector<TraceRecord>& records) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.lemma).second) out.push_back(r.lemma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::size_t Split::part_of(const std::string& lemma) const {
  for (std::size_t p = 0; p < kParts; ++p) {
    if (std::find(lemmas[p].begin(), lemmas[p].end(), lemma) != lemmas[p].end()) return p;
  }
  return kParts;
}

double Split::share(std::size_t part) const {
  const std::size_t total = std::accumulate(records.begin(), records.end(), std::size_t{0});
  return total == 0 ? 0.0 : static_cast<double>(records[part]) / static_cast<double>(total);
}

namespace {

constexpr std::size_t kParts = Split::kParts;

struct Cost {
  double worst = 0;
  double squares = 0;

  bool operator<(const Cost& o) const {
    constexpr double eps = 1e-12;
    if (worst < o.worst - eps) return true;
    if (worst > o.worst + eps) return false;
    return squares < o.squares - eps;
  }
};

Cost cost_of(const std::array<double, kParts>& counts, const std::array<double, kParts>& target, double total) {
  Cost c;
  for (std::size_t p = 0; p < kParts; ++p) {
    const double d = counts[p] / total - target[p] / total;
    c.worst = std::max(c.worst, std::abs(d));
    c.squares += d * d;
  }
  return c;
}

constexpr std::uint64_t kRestarts = 8;

struct Assignment {
  std::vector<std::size_t> part;
  Cost cost;
};

// Greedy pass, then first-improvement moves and swaps. An empty part has
// relative deficit 1, so the first three lemmas land in distinct parts.
Assignment assign(const std::vector<std::pair<std::string, std::size_t>>& sizes, const std::array<double, kParts>& target,
                  double total, const std::vector<std::size_t>& order) {
  std::vector<std::size_t> part(sizes.size());
  std::array<double, kParts> counts{};
  std::array<std::size_t, kParts> members{};
  for (std::size_t i : order) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t p = 0; p < kParts; ++p) {
      const double deficit = (target[p] - counts[p]) / target[p];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = p;
      }
    }
    part[i] = best;
    counts[best] += static_cast<double>(sizes[i].second);
    ++members[best];
  }

  Cost current = cost_of(counts, target, total);
  for (int pass = 0; pass < 200; ++pass) {
    bool improved = false;
    for (std::size_t a = 0; a < order.size() && !improved; ++a) {
      const std::size_t i = order[a];
      const double wi = static_cast<double>(sizes[i].second);
      const std::size_t pi = part[i];
      if (members[pi] > 1) {
        for (std::size_t q = 0; q < kParts && !improved; ++q) {
          if (q == pi) continue;
          auto trial = counts;
          trial[pi] -= wi;
          trial[q] += wi;
          if (const Cost c = cost_of(trial, target, total); c < current) {
            counts = trial;
            current = c;
            part[i] = q;
            --members[pi];
            ++members[q];
            improved = true;
          }
        }
      }
      for (std::size_t b = a + 1; b < order.size() && !improved; ++b) {
        const std::size_t j = order[b];
        const std::size_t pj = part[j];
        if (pj == pi) continue;
        const double wj = static_cast<double>(sizes[j].second);
        auto trial = counts;
        trial[pi] += wj - wi;
        trial[pj] += wi - wj;
        if (const Cost c = cost_of(trial, target, total); c < current) {
          counts = trial;
          current = c;
          std::swap(part[i], part[j]);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return {std::move(part), current};
}

}  // namespace

Split split_by_lemma(const std::vector<TraceRecord>& records, std::array<int, kParts> ratio, std::uint64_t seed) {
  std::vector<std::pair<std::string, std::size_t>> sizes;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : records) {
    const auto [it, fresh] = index.emplace(r.lemma, sizes.size());
    if (fresh) sizes.emplace_back(r.lemma, 0);
    ++sizes[it->second].second;
  }
  return split_by_lemma(sizes, ratio, seed);
}

Split split_by_lemma(const std::vector<std::pair<std::string, std::size_t>>& sizes, std::array<int, kParts> ratio,
                     std::uint64_t seed) {
  if (sizes.size() < kParts) throw std::invalid_argument("need at least 3 lemmas to split");
  for (int r : ratio) {
    if (r <= 0) throw std::invalid_argument("split ratios must be positive");
  }
  const double ratio_sum = std::accumulate(ratio.begin(), ratio.end(), 0.0);
  double total = 0;
  for (const auto& [name, n] : sizes) total += static_cast<double>(n);
  if (total == 0) total = 1;
  std::array<double, kParts> target{};
  for (std::size_t p = 0; p < kParts; ++p) target[p] = total * ratio[p] / ratio_sum;

  // Several shuffles of the same seed; the best balanced one wins.
  Assignment best;
  std::vector<std::size_t> best_order;
  for (std::uint64_t restart = 0; restart < kRestarts; ++restart) {
    std::vector<std::size_t> order(sizes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(restart == 0 ? seed : mix64(seed, restart));
    rng.shuffle(order.begin(), order.end());
    Assignment a = assign(sizes, target, total, order);
    if (restart == 0 || a.cost < best.cost) {
      best = std::move(a);
      best_order = std::move(order);
    }
  }
  const auto& order = best_order;
  const auto& part = best.part;

  Split split;
  for (std::size_t i : order) {
    split.lemmas[part[i]].push_back(sizes[i].first);
    split.records[part[i]] += sizes[i].second;
  }
  return split;
}

std::vector<TraceRecord> select_records(const std::vector<TraceRecord>& records, const Split& split, std::size_t part) {
  const std::set<std::string> keep(split.lemmas.at(part).begin(), split.lemmas.at(part).end());
  std::vector<TraceRecord> out;
  for (const auto& r : records) {
    if (keep.contains(r.lemma)) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

int bin_depth(int steps, const DepthBin& bins) {
  for (std::size_t k = 0; k < bins.upper.size(); ++k) {
    if (steps <= bins.upper[k]) return static_cast<int>(k) + 1;
  }
  return bins.classes();
}

Histograms histograms(const TermStore& store, const std::vector<TraceRecord>& records) {
  using Counts = std::array<std::size_t, 4>;
  std::unordered_map<TermId, Counts> memo;
  std::function<const Counts&(TermId)> count = [&](TermId t) -> const Counts& {
    if (const auto it = memo.find(t); it != memo.end()) return it->second;
    Counts c{};
    const Term& n = store.node(t);
    ++c[static_cast<std::size_t>(n.kind)];
    for (TermId kid : n.kids) {
      const Counts& k = count(kid);
      for (std::size_t i = 0; i < 4; ++i) c[i] += k[i];
    }
    return memo.emplace(t, c).first->second;
  };

  Counts total{};
  Histograms h;
  auto add = [&](TermId t) {
    const Counts& c = count(t);
    for (std::size_t i = 0; i < 4; ++i) total[i] += c[i];
  };
  for (const auto& r : records) {
    for (const auto& e : r.ctx) add(e.type);
    add(r.goal);
    ++h.tactics[r.tactic.cls];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (total[i] > 0) h.ast_nodes[to_string(static_cast<TermKind>(i))] = total[i];
  }
  return h;
}

std::string format_table(const std::map<std::string, std::size_t>& counts) {
  std::string out;
  for (const auto& [k, v] : counts) out += k + "\t" + std::to_string(v) + "\n";
  return out;
}

}  // namespace proofgym
