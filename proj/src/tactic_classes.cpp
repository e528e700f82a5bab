#include "proofgym/tactic_classes.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace proofgym {

TacticClassMap TacticClassMap::defaults() {
  static const char* const kEntries[][2] = {
      {"rewrite", "rewrite"},   {"have", "have"},           {"apply", "apply"},
      {"exact", "exact"},       {"by", "exact"},            {"move", "move"},
      {"case", "case"},         {"destruct", "case"},       {"elim", "elim"},
      {"split", "split"},       {"constructor", "split"},   {"left", "left"},
      {"right", "right"},       {"exists", "exists"},       {"intro", "intro"},
      {"intros", "intro"},      {"reflexivity", "reflexivity"}, {"done", "reflexivity"},
      {"trivial", "reflexivity"}, {"simpl", "simpl"},       {"unfold", "unfold"},
      {"congr", "congr"},       {"induction", "induction"}, {"suff", "suff"},
      {"suffices", "suff"},     {"wlog", "wlog"},           {"pose", "pose"},
      {"set", "set"},           {"symmetry", "symmetry"},   {"transitivity", "transitivity"},
  };
  TacticClassMap map;
  for (const auto& [raw, cls] : kEntries) map.add(raw, cls);
  return map;
}

void TacticClassMap::add(const std::string& raw, const std::string& cls) {
  if (raw.empty() || cls.empty()) throw std::invalid_argument("empty tactic or class name");
  if (const auto it = raw_to_class_.find(raw); it != raw_to_class_.end()) {
    if (it->second != cls) throw std::invalid_argument("tactic '" + raw + "' mapped to two classes");
    return;
  }
  raw_to_class_.emplace(raw, cls);
  entries_.emplace_back(raw, cls);
  if (std::find(classes_.begin(), classes_.end(), cls) == classes_.end()) classes_.push_back(cls);
}

TacticClassMap TacticClassMap::parse(std::string_view text) {
  TacticClassMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw std::invalid_argument("class map line " + std::to_string(line_no) + ": expected raw<TAB>class");
    }
    map.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return map;
}

TacticClassMap TacticClassMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string TacticClassMap::format() const {
  std::string out;
  for (const auto& [raw, cls] : entries_) out += raw + "\t" + cls + "\n";
  return out;
}

std::optional<std::string> TacticClassMap::class_of(std::string_view raw) const {
  const auto space = raw.find(' ');
  const std::string_view word = raw.substr(0, space);
  const auto it = raw_to_class_.find(word);
  if (it == raw_to_class_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> TacticClassMap::class_id(std::string_view raw) const {
  const auto cls = class_of(raw);
  if (!cls) return std::nullopt;
  return id_of_class(*cls);
}

int TacticClassMap::id_of_class(const std::string& cls) const {
  const auto it = std::find(classes_.begin(), classes_.end(), cls);
  if (it == classes_.end()) throw std::invalid_argument("unknown tactic class '" + cls + "'");
  return static_cast<int>(it - classes_.begin());
}

}  // namespace proofgym
