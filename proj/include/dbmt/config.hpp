#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dbmt {

/// Sectioned key = value configuration:
///
///   # comment
///   [sampler]
///   T = 1024
///
/// Keys outside the known schema are rejected. Every getter records the value it
/// resolved (including defaults), so `resolved_text()` reproduces the run.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key,
                            const std::vector<int>& fallback) const;

  /// Explicit values plus every default a getter resolved, in INI form.
  std::string resolved_text() const;
  void write_resolved(const std::filesystem::path& path) const;

 private:
  using Table = std::map<std::string, std::map<std::string, std::string>>;
  const std::string* find(const std::string& section, const std::string& key) const;
  void remember(const std::string& section, const std::string& key, const std::string& value) const;

  Table values_;
  mutable Table resolved_;
};

/// Known sections and keys.
const std::map<std::string, std::vector<std::string>>& config_schema();

}  // namespace dbmt
