#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace ptoc {

// Flat "key = value" text with '#' comments. Readers pull the keys they know
// and then call reject_unknown() so typos surface as ParseError.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  std::string get_string(const std::string& key, const std::string& fallback);

  void reject_unknown() const;

 private:
  const std::string* lookup(const std::string& key);

  std::map<std::string, std::string> entries_;
  std::set<std::string> used_;
};

// FNV-1a, stable across platforms; used for run manifests.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace ptoc
