#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eagle {

/// Flat key/value view of a TOML-style file: `[section]` headers, `key = value`
/// lines, `#` comments. Keys are stored as "section.key". Values may be
/// numbers, booleans, quoted strings, or flat arrays of those.
class KeyValueConfig {
public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Keys under `section`, without the prefix.
  std::vector<std::string> keys_in(const std::string& section) const;

  /// Applies "key=value" overrides (e.g. from the command line).
  void set(const std::string& key, const std::string& raw_value);

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
  std::map<std::string, std::string> values_;
};

}  // namespace eagle
