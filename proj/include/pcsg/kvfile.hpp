#pragma once

// Line-oriented "key = value" text shared by scenario and run-config files.
// Blank lines and '#' comments are ignored; keys may repeat.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcsg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KvEntry {
  std::string key;
  std::string value;
  int line = 0;
};

class KvFile {
 public:
  /// Parses text. If `header` is non-empty the first non-blank line must equal it.
  static KvFile parse(const std::string& text, const std::string& header = {});
  static KvFile load(const std::filesystem::path& path, const std::string& header = {});

  const std::vector<KvEntry>& entries() const { return entries_; }
  std::vector<const KvEntry*> all(const std::string& key) const;
  const KvEntry* find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  std::vector<KvEntry> entries_;
};

double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);
std::vector<std::string> split_ws(const std::string& s);
/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace pcsg
