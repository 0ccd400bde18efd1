#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "btm/common.hpp"

namespace btm {

/// Line-oriented run configuration: "section.key = value" per line, '#'
/// comments. Every value can be overridden with a "--set section.key=value"
/// flag; the canonical snapshot is written into run manifests.
class RunConfig {
 public:
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  /// Applies one "section.key=value" override.
  void set(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;

  std::uint64_t seed() const;  // model.seed, mandatory

  /// Sorted "key = value" lines.
  std::string snapshot() const;

  /// Rejects keys outside the known surface (catches typos).
  void validate_keys() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Writes command, version, seed, wall time and the config snapshot to
/// <output_dir>/manifest-<command>.txt.
void write_manifest(const std::string& output_dir, const std::string& command,
                    const RunConfig& config, double wall_seconds);

}  // namespace btm
