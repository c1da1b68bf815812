#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crbm/data.hpp"
#include "crbm/learning.hpp"

namespace crbm {

/// Raised for malformed or unknown configuration entries.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
  std::string name;
  std::string defaultValue;
  std::string help;
};

/// Every key accepted by a config file or a command-line flag.
const std::vector<ConfigKey>& known_config_keys();
bool is_known_key(const std::string& key);

/// Flat key = value settings. Later sources override earlier ones.
class RunConfig {
 public:
  /// Built-in defaults for every known key.
  static RunConfig defaults();

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;

  std::string get_string(const std::string& key) const { return get(key); }
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Copies every entry of `other` over this one.
  void merge(const RunConfig& other);

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Parses `key = value` lines; `#` starts a comment; blank lines are skipped.
RunConfig parse_config(std::istream& in, const std::string& source = "<stream>");
RunConfig load_config(const std::string& path);

/// Writes `key = value` lines in key order.
void write_config(std::ostream& out, const RunConfig& cfg);

TrainConfig to_train_config(const RunConfig& cfg);
CorruptionSpec to_corruption_spec(const RunConfig& cfg);
SyntheticSpec to_synthetic_spec(const RunConfig& cfg);

/// Inverse of to_train_config for the training keys.
RunConfig from_train_config(const TrainConfig& cfg);

}  // namespace crbm
