#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lk {

// Flat key-value configuration file.  Lines are "key = value", '#' starts a
// comment.  Every key read is tracked; load() rejects keys the caller never
// declared so unit mistakes in parameter files fail loudly.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }

  // Keys present in the file that were never queried.
  std::vector<std::string> unknown_keys() const;

  // Fails if the file contains keys outside the declared set.
  void require_known(const std::set<std::string>& allowed) const;

  // Stable hash over sorted key=value pairs.
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> queried_;
};

}  // namespace lk
