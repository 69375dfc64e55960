#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace frost {

// Flat key/value configuration. File syntax is one `key = value` per line,
// `#` starts a comment. Later assignments win.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Canonical sorted "key = value" dump; hash of it goes in run manifests.
  std::string dump() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace frost
