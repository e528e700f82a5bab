#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "proofgym/record.hpp"
#include "proofgym/term.hpp"

namespace proofgym {

/// Malformed dataset file. `line()` is 1-based; 0 when not tied to a line.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Serializes records with their term table. `manifest` is merged into the
/// header object; "version", "symbols", "terms" and "records" are filled in.
/// Output is a pure function of (store contents reachable from the records,
/// records, manifest).
std::string write_dataset(const TermStore& store, const std::vector<TraceRecord>& records,
                          const nlohmann::ordered_json& manifest = nlohmann::ordered_json::object());

struct Dataset {
  nlohmann::ordered_json manifest;
  TermStore store;
  std::vector<TraceRecord> records;
};

/// Throws DatasetError on malformed lines, dangling term references and
/// duplicate state ids within a lemma.
Dataset read_dataset(std::string_view bytes);

void save_dataset(const std::string& path, const TermStore& store, const std::vector<TraceRecord>& records,
                  const nlohmann::ordered_json& manifest = nlohmann::ordered_json::object());
Dataset load_dataset(const std::string& path);

/// Lemma names in first-appearance order.
std::vector<std::string> lemma_names(const std::vector<TraceRecord>& records);

// ---------------------------------------------------------------------------
// Splits

struct Split {
  static constexpr std::size_t kParts = 3;
  static constexpr std::array<const char*, kParts> kNames{"train", "valid", "test"};

  std::array<std::vector<std::string>, kParts> lemmas;
  std::array<std::size_t, kParts> records{};

  /// Index of the part holding `lemma`, or kParts when absent.
  std::size_t part_of(const std::string& lemma) const;
  double share(std::size_t part) const;
};

/// Lemma-level split balancing record counts against `ratio`. Lemmas are
/// shuffled by `seed` and assigned greedily to the part whose record count
/// is relatively furthest below its target, then refined by single moves
/// and swaps while that lowers the worst share deviation. Every part gets
/// at least one lemma. Throws std::invalid_argument with fewer lemmas than
/// parts or a non-positive ratio entry.
Split split_by_lemma(const std::vector<TraceRecord>& records, std::array<int, Split::kParts> ratio = {8, 1, 1},
                     std::uint64_t seed = 0);
/// Same, over explicit (lemma, record count) pairs.
Split split_by_lemma(const std::vector<std::pair<std::string, std::size_t>>& sizes,
                     std::array<int, Split::kParts> ratio = {8, 1, 1}, std::uint64_t seed = 0);

std::vector<TraceRecord> select_records(const std::vector<TraceRecord>& records, const Split& split,
                                        std::size_t part);

// ---------------------------------------------------------------------------
// Position-evaluation bins

/// Upper bounds (inclusive) of all but the last class; K = bounds + 1.
struct DepthBin {
  std::vector<int> upper{5, 19};
  std::vector<std::string> names{"close", "medium", "far"};

  int classes() const { return static_cast<int>(upper.size()) + 1; }
};

/// Class in 1..K.
int bin_depth(int steps, const DepthBin& bins = {});

// ---------------------------------------------------------------------------
// Statistics

struct Histograms {
  std::map<std::string, std::size_t> ast_nodes;  // term kind -> expanded occurrences
  std::map<std::string, std::size_t> tactics;    // tactic class -> edges
};

/// AST nodes are counted over goal and context types of every record, in
/// the expanded tree view.
Histograms histograms(const TermStore& store, const std::vector<TraceRecord>& records);

/// "key<TAB>count" lines, sorted by key.
std::string format_table(const std::map<std::string, std::size_t>& counts);

}  // namespace proofgym
