#include "lk/config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lk/common.hpp"

namespace lk {

namespace {
std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key at line " +
                               std::to_string(lineno));
    if (cfg.kv_.count(key))
      throw std::runtime_error("config: duplicate key '" + key + "'");
    cfg.kv_[key] = val;
  }
  return cfg;
}

double Config::get_double(const std::string& key) const {
  queried_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::runtime_error("config: missing key '" + key + "'");
  size_t pos = 0;
  double v = std::stod(it->second, &pos);
  if (pos != it->second.size())
    throw std::runtime_error("config: bad number for '" + key + "'");
  return v;
}

double Config::get_double(const std::string& key, double fallback) const {
  queried_.insert(key);
  return kv_.count(key) ? get_double(key) : fallback;
}

int Config::get_int(const std::string& key) const {
  queried_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::runtime_error("config: missing key '" + key + "'");
  size_t pos = 0;
  int v = std::stoi(it->second, &pos);
  if (pos != it->second.size())
    throw std::runtime_error("config: bad integer for '" + key + "'");
  return v;
}

int Config::get_int(const std::string& key, int fallback) const {
  queried_.insert(key);
  return kv_.count(key) ? get_int(key) : fallback;
}

std::string Config::get_string(const std::string& key) const {
  queried_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::runtime_error("config: missing key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  queried_.insert(key);
  return kv_.count(key) ? kv_.at(key) : fallback;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::string s = get_string(key);
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

std::vector<std::string> Config::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_)
    if (!queried_.count(k)) out.push_back(k);
  return out;
}

void Config::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : kv_)
    if (!allowed.count(k))
      throw std::runtime_error("config: unknown key '" + k + "'");
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : kv_) h = fnv1a(k + "=" + v + "\n", h);
  return h;
}

}  // namespace lk
