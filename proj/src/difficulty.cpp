#include "qmtot/difficulty.hpp"

#include <fstream>

#include "qmtot/engine.hpp"

namespace qmtot {

std::string_view to_string(Level l) {
  switch (l) {
    case Level::easy:
      return "easy";
    case Level::medium:
      return "medium";
    case Level::hard:
      return "hard";
  }
  return "medium";
}

std::optional<Level> level_from_string(std::string_view s) {
  for (Level l : kAllLevels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

double default_omega(const Question& q) {
  if (q.options.empty()) throw RangeError("question " + q.id + " has no options");
  return 1.0 / static_cast<double>(q.options.size());
}

double omega_for(const Question& q, const DifficultyConfig& cfg) {
  return cfg.omega ? *cfg.omega : default_omega(q);
}

DifficultyLabel classify(double acc, double k1, double omega, int samples) {
  if (!(acc >= 0.0 && acc <= 1.0)) throw RangeError("accuracy must lie in [0,1]");
  if (!(k1 > 0.0 && k1 <= 1.0)) throw RangeError("k1 must lie in (0,1]");
  if (!(omega > 0.0 && omega < 1.0)) throw RangeError("omega must lie in (0,1)");
  if (!(omega < k1)) throw RangeError("omega must be below k1");
  Level level = Level::medium;
  if (acc >= k1) {
    level = Level::easy;
  } else if (acc <= omega) {
    level = Level::hard;
  }
  return DifficultyLabel{level, acc, samples};
}

double measure_accuracy(const Question& q, int n, CallSession& session) {
  if (!q.gold) throw Error("question " + q.id + " has no gold answer to measure against");
  if (n < 1) throw RangeError("measure_accuracy needs n >= 1");
  int correct = 0;
  for (const auto& chain : run_cot(q, n, session)) {
    if (chain.answer && *chain.answer == *q.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Json to_json(const ManifestEntry& e) {
  return Json{{"question_id", e.question_id},
              {"acc", e.label.acc},
              {"samples", e.label.samples},
              {"level", to_string(e.label.level)}};
}

ManifestEntry manifest_entry_from_json(const Json& j) {
  ManifestEntry e;
  try {
    e.question_id = j.at("question_id").get<std::string>();
    e.label.acc = j.at("acc").get<double>();
    e.label.samples = j.at("samples").get<int>();
    auto level = level_from_string(j.at("level").get<std::string>());
    if (!level) throw SchemaError("unknown level " + j.at("level").dump());
    e.label.level = *level;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("manifest entry: ") + ex.what());
  }
  return e;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& e : entries) out << to_json(e).dump() << '\n';
  if (!out) throw Error("failed writing manifest " + path.string());
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      entries.push_back(manifest_entry_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return entries;
}

}  // namespace qmtot
