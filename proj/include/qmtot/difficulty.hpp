#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qmtot/domain.hpp"
#include "qmtot/session.hpp"

namespace qmtot {

struct DifficultyConfig {
  double k1 = 0.9;
  // Unset means 1 / number of options, per question.
  std::optional<double> omega;
};

enum class Level { easy, medium, hard };

inline constexpr Level kAllLevels[] = {Level::easy, Level::medium, Level::hard};

std::string_view to_string(Level l);
std::optional<Level> level_from_string(std::string_view s);

struct DifficultyLabel {
  Level level = Level::medium;
  double acc = 0.0;
  int samples = 0;

  bool operator==(const DifficultyLabel&) const = default;
};

/// Accuracy of uniform guessing over the question's options.
double default_omega(const Question& q);

/// Bias boundary in effect for `q` under `cfg`.
double omega_for(const Question& q, const DifficultyConfig& cfg);

/// easy iff acc >= k1, hard iff acc <= omega, medium otherwise.
DifficultyLabel classify(double acc, double k1, double omega, int samples = 0);

/// Fraction of `n` CoT samples answering the gold option; unanswered or
/// failed samples count as wrong.
double measure_accuracy(const Question& q, int n, CallSession& session);

struct ManifestEntry {
  std::string question_id;
  DifficultyLabel label;

  bool operator==(const ManifestEntry&) const = default;
};

Json to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const Json& j);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

}  // namespace qmtot
