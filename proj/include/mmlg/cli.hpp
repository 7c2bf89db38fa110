#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmlg/util.hpp"

namespace mmlg::cli {

// Flat key=value run configuration: loaded from a text file, overridden by
// command-line flags, archived verbatim (canonical form) beside every run's
// outputs.
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get(const std::string& key) const;  // throws ConfigError when absent
  std::string get(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys "task.<name>.<field>" grouped by task name (sorted).
  std::map<std::string, std::map<std::string, std::string>> task_defs() const;

  // Canonical serialization: sorted key=value lines.
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> kv_;
};

// Throwing command bodies (unit-testable); exit-code wrappers below.
void run_preprocess(const RunConfig& cfg);
void run_train(const RunConfig& cfg);
void run_evaluate(const RunConfig& cfg);
void run_decode(const RunConfig& cfg);
void run_report(const std::vector<std::filesystem::path>& csv_paths,
                const std::filesystem::path& out_path);

int cmd_preprocess(const RunConfig& cfg) noexcept;
int cmd_train(const RunConfig& cfg) noexcept;
int cmd_evaluate(const RunConfig& cfg) noexcept;
int cmd_decode(const RunConfig& cfg) noexcept;
int cmd_report(const std::vector<std::filesystem::path>& csv_paths,
               const std::filesystem::path& out_path) noexcept;

}  // namespace mmlg::cli
