#include "ptocluster/kv_config.hpp"

#include "ptocluster/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ptoc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!cfg.entries_.emplace(key, value).second) {
      throw ParseError("config key '" + key + "' given twice");
    }
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string* KvConfig::lookup(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

int KvConfig::get_int(const std::string& key, int fallback) {
  const auto* v = lookup(key);
  return v ? parse_number<int>(key, *v) : fallback;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  const auto* v = lookup(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double KvConfig::get_double(const std::string& key, double fallback) {
  const auto* v = lookup(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

void KvConfig::reject_unknown() const {
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) throw ParseError("unknown config key '" + key + "'");
  }
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ptoc
