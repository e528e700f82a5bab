#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proofgym {

/// Raw tactic name -> equivalence class. Classes keep their first-seen
/// order, which fixes the class ids.
class TacticClassMap {
 public:
  /// 23 classes; terminal tactics (done, trivial) share the reflexivity class.
  static TacticClassMap defaults();
  /// "raw_name<TAB>class_name" lines; '#' starts a comment line.
  static TacticClassMap parse(std::string_view text);
  static TacticClassMap load(const std::string& path);
  std::string format() const;

  void add(const std::string& raw, const std::string& cls);

  /// Class of a raw tactic text, looked up by its first word.
  std::optional<std::string> class_of(std::string_view raw) const;
  std::optional<int> class_id(std::string_view raw) const;
  int id_of_class(const std::string& cls) const;

  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::string, std::less<>> raw_to_class_;
  std::vector<std::string> classes_;
};

}  // namespace proofgym
