#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qmtot/backend.hpp"
#include "qmtot/difficulty.hpp"
#include "qmtot/domain.hpp"
#include "qmtot/pipeline.hpp"

namespace qmtot::cli {

/// Invalid configuration file or flag combination (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Environment variable read for the bearer token when a remote backend names none.
inline constexpr const char* kDefaultAuthEnv = "QMTOT_API_KEY";

struct CliConfig {
  RunConfig run;
  DifficultyConfig difficulty;
  std::filesystem::path store_dir = "qmtot-store";
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> templates_dir;
  // Relative fixture, store, cache and template paths resolve against this.
  std::filesystem::path base_dir = ".";
  int max_in_flight = 4;
  int workers = 1;
  RetryPolicy retry;
  std::optional<std::string> fixed_timestamp;
};

/// Parses a config file. `roles` values may be inline backend objects or
/// names of entries in `backends`; a top-level `backend` serves every role
/// not listed. Throws ConfigError with the offending field path.
CliConfig load_config(const std::filesystem::path& path);
CliConfig config_from_json(const Json& j, const std::filesystem::path& base_dir);

/// Field-path violations of the merged config; empty when valid.
std::vector<std::string> validate_config(const CliConfig& cfg);

/// Backends for every role of `run`, sharing one cache and one limiter.
RoleBackends build_backends(const CliConfig& cfg, const RunConfig& run, bool offline);

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 run error, 2 usage or config error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qmtot::cli
