#include "qmtot/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "qmtot/distill.hpp"
#include "qmtot/store.hpp"

namespace qmtot::cli {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

template <typename T>
T field(const Json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

BackendRef backend_from(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected a backend object");
  BackendRef ref;
  try {
    ref = backend_ref_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (ref.kind != BackendKind::scripted && !ref.auth_env) ref.auth_env = kDefaultAuthEnv;
  return ref;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "alpha", "max_depth", "branching", "max_chains", "node_budget", "cot_samples", "seed",
      "generation_temperature", "scoring_temperature", "max_tokens", "retry_on_parse_failure",
      "backend", "backends", "roles", "store_dir", "cache_dir", "templates_dir", "max_in_flight",
      "workers", "retry", "difficulty", "fixed_timestamp"};
  return keys;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

CliConfig config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().contains(key)) throw ConfigError(key + ": unknown config field");
  }

  std::map<std::string, BackendRef> named;
  if (j.contains("backends")) {
    const Json& b = j.at("backends");
    if (!b.is_object()) throw ConfigError("backends: expected an object");
    for (const auto& [name, ref] : b.items()) named[name] = backend_from(ref, "backends." + name);
  }
  auto lookup = [&](const Json& v, const std::string& path) {
    if (v.is_string()) {
      const auto name = v.get<std::string>();
      auto it = named.find(name);
      if (it == named.end()) throw ConfigError(path + ": no backend named '" + name + "'");
      return it->second;
    }
    return backend_from(v, path);
  };

  // Roles are resolved here; the rest of the run fields go through the
  // domain parser so the two stay in step.
  Json run = Json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "alpha" || key == "max_depth" || key == "branching" || key == "max_chains" ||
        key == "node_budget" || key == "cot_samples" || key == "seed" ||
        key == "generation_temperature" || key == "scoring_temperature" || key == "max_tokens" ||
        key == "retry_on_parse_failure") {
      run[key] = value;
    }
  }
  CliConfig cfg;
  cfg.base_dir = base_dir;
  try {
    cfg.run = run_config_from_json(run);
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("roles")) {
    const Json& roles = j.at("roles");
    if (!roles.is_object()) throw ConfigError("roles: expected an object");
    for (const auto& [name, v] : roles.items()) {
      const auto role = role_from_string(name);
      if (!role) throw ConfigError("roles." + name + ": unknown role");
      cfg.run.roles[*role] = lookup(v, "roles." + name);
    }
  }
  if (j.contains("backend")) {
    const BackendRef all = lookup(j.at("backend"), "backend");
    for (Role r : kAllRoles) cfg.run.roles.try_emplace(r, all);
  }

  if (j.contains("store_dir")) {
    cfg.store_dir = resolve(base_dir, field<std::string>(j.at("store_dir"), "store_dir"));
  } else {
    cfg.store_dir = resolve(base_dir, cfg.store_dir);
  }
  if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) {
    cfg.cache_dir = resolve(base_dir, field<std::string>(j.at("cache_dir"), "cache_dir"));
  }
  if (j.contains("templates_dir") && !j.at("templates_dir").is_null()) {
    cfg.templates_dir =
        resolve(base_dir, field<std::string>(j.at("templates_dir"), "templates_dir"));
  }
  if (j.contains("max_in_flight")) {
    cfg.max_in_flight = field<int>(j.at("max_in_flight"), "max_in_flight");
  }
  if (j.contains("workers")) cfg.workers = field<int>(j.at("workers"), "workers");
  if (j.contains("fixed_timestamp") && !j.at("fixed_timestamp").is_null()) {
    cfg.fixed_timestamp = field<std::string>(j.at("fixed_timestamp"), "fixed_timestamp");
  }
  if (j.contains("retry")) {
    const Json& r = j.at("retry");
    if (!r.is_object()) throw ConfigError("retry: expected an object");
    for (const auto& [key, v] : r.items()) {
      const std::string path = "retry." + key;
      if (key == "max_attempts") {
        cfg.retry.max_attempts = field<int>(v, path);
      } else if (key == "base_delay_ms") {
        cfg.retry.base_delay = std::chrono::milliseconds(field<std::int64_t>(v, path));
      } else if (key == "max_delay_ms") {
        cfg.retry.max_delay = std::chrono::milliseconds(field<std::int64_t>(v, path));
      } else if (key == "timeout_ms") {
        cfg.retry.timeout = std::chrono::milliseconds(field<std::int64_t>(v, path));
      } else {
        throw ConfigError(path + ": unknown config field");
      }
    }
  }
  if (j.contains("difficulty")) {
    const Json& d = j.at("difficulty");
    if (!d.is_object()) throw ConfigError("difficulty: expected an object");
    for (const auto& [key, v] : d.items()) {
      const std::string path = "difficulty." + key;
      if (key == "k1") {
        cfg.difficulty.k1 = field<double>(v, path);
      } else if (key == "omega") {
        if (!v.is_null()) cfg.difficulty.omega = field<double>(v, path);
      } else {
        throw ConfigError(path + ": unknown config field");
      }
    }
  }
  return cfg;
}

CliConfig load_config(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::vector<std::string> validate_config(const CliConfig& cfg) {
  std::vector<std::string> v = validate_run_config(cfg.run);
  for (const auto& [role, ref] : cfg.run.roles) {
    for (const auto& msg : validate_backend_ref(ref)) {
      v.push_back("roles." + std::string(to_string(role)) + ": " + msg);
    }
  }
  if (!(cfg.difficulty.k1 > 0.0 && cfg.difficulty.k1 <= 1.0)) {
    v.emplace_back("difficulty.k1: must be within (0,1]");
  }
  if (cfg.difficulty.omega &&
      !(*cfg.difficulty.omega > 0.0 && *cfg.difficulty.omega < cfg.difficulty.k1)) {
    v.emplace_back("difficulty.omega: must be within (0,k1)");
  }
  if (cfg.max_in_flight < 1) v.emplace_back("max_in_flight: must be >= 1");
  if (cfg.workers < 1) v.emplace_back("workers: must be >= 1");
  if (cfg.retry.max_attempts < 1) v.emplace_back("retry.max_attempts: must be >= 1");
  return v;
}

RoleBackends build_backends(const CliConfig& cfg, const RunConfig& run, bool offline) {
  BackendOptions options;
  options.retry = cfg.retry;
  options.offline = offline;
  options.limiter = std::make_shared<RequestLimiter>(cfg.max_in_flight);
  if (cfg.cache_dir) {
    options.cache = std::make_shared<ResponseCache>(*cfg.cache_dir);
  } else if (offline) {
    throw ConfigError("cache_dir: required for replay");
  }

  RoleBackends backends;
  std::map<std::string, std::shared_ptr<Backend>> built;
  for (const auto& [role, ref] : run.roles) {
    BackendRef resolved = ref;
    if (!resolved.fixture.empty()) resolved.fixture = resolve(cfg.base_dir, ref.fixture).string();
    const std::string key = to_json(resolved).dump();
    auto it = built.find(key);
    if (it == built.end()) it = built.emplace(key, make_backend(resolved, options)).first;
    backends.set(role, it->second);
  }
  return backends;
}

namespace {

struct Options {
  std::string config;
  std::string store;
  std::string cache;
  std::string templates;
  std::string dataset;
  std::vector<std::string> run_ids;
  std::string manifest;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<int> max_depth;
  std::optional<int> branching;
  std::optional<int> max_chains;
  std::optional<int> node_budget;
  std::optional<int> cot_samples;
  std::optional<double> k1;
  std::optional<double> omega;
  std::optional<std::size_t> subset;
  std::optional<std::uint64_t> subset_seed;
};

CliConfig merged_config(const Options& o) {
  CliConfig cfg = o.config.empty() ? config_from_json(Json::object(), ".") : load_config(o.config);
  if (!o.store.empty()) cfg.store_dir = o.store;
  if (!o.cache.empty()) cfg.cache_dir = o.cache;
  if (!o.templates.empty()) cfg.templates_dir = o.templates;
  if (o.workers) cfg.workers = *o.workers;
  if (o.seed) cfg.run.seed = *o.seed;
  if (o.alpha) cfg.run.alpha = *o.alpha;
  if (o.max_depth) cfg.run.max_depth = *o.max_depth;
  if (o.branching) cfg.run.branching = *o.branching;
  if (o.max_chains) cfg.run.max_chains = *o.max_chains;
  if (o.node_budget) cfg.run.node_budget = *o.node_budget;
  if (o.cot_samples) cfg.run.cot_samples = *o.cot_samples;
  if (o.k1) cfg.difficulty.k1 = *o.k1;
  if (o.omega) cfg.difficulty.omega = *o.omega;
  return cfg;
}

void require_valid(const CliConfig& cfg) {
  const auto v = validate_config(cfg);
  if (v.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

TemplateSet templates_for(const CliConfig& cfg) {
  return cfg.templates_dir ? TemplateSet::with_overrides(*cfg.templates_dir)
                           : TemplateSet::builtin();
}

Services services_for(const CliConfig& cfg) {
  require_valid(cfg);
  Services s;
  s.config = cfg.run;
  s.templates = templates_for(cfg);
  s.backends = build_backends(cfg, cfg.run, false);
  s.difficulty = cfg.difficulty;
  s.fixed_timestamp = cfg.fixed_timestamp;
  return s;
}

std::vector<Question> questions_for(const Options& o, const CliConfig& cfg) {
  std::vector<Question> questions;
  if (!o.dataset.empty()) {
    questions = ingest_dataset(o.dataset);
  } else {
    const fs::path stored = cfg.store_dir / "dataset.jsonl";
    if (!fs::exists(stored)) {
      throw ConfigError("dataset: none given and " + stored.string() + " does not exist");
    }
    questions = load_questions(stored);
  }
  if (o.subset) questions = subsample(questions, *o.subset, o.subset_seed.value_or(cfg.run.seed));
  return questions;
}

std::string single_run_id(const Options& o, const std::string& fallback) {
  if (o.run_ids.size() > 1) throw ConfigError("run-id: give exactly one");
  if (!o.run_ids.empty()) return o.run_ids.front();
  if (fallback.empty()) throw ConfigError("run-id: required");
  return fallback;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  if (o.dataset.empty()) throw ConfigError("dataset: required");
  const CliConfig cfg = merged_config(o);
  auto questions = ingest_dataset(o.dataset);
  if (o.subset) questions = subsample(questions, *o.subset, o.subset_seed.value_or(cfg.run.seed));
  const fs::path path = o.out.empty() ? cfg.store_dir / "dataset.jsonl" : fs::path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_questions(path, questions);
  out << "ingested " << questions.size() << " questions into " << path.string() << "\n";
  return 0;
}

int cmd_run(Method method, const Options& o, std::ostream& out) {
  const CliConfig cfg = merged_config(o);
  const Services s = services_for(cfg);
  const auto questions = questions_for(o, cfg);
  const std::string run_id = single_run_id(o, std::string(to_string(method)));

  RunStore store(cfg.store_dir);
  store.repair_tail(run_id);
  for (const auto& r : store.load_records(run_id)) {
    if (r.method != method) {
      throw ConfigError("run-id: run " + run_id + " already holds " +
                        std::string(to_string(r.method)) + " records");
    }
  }
  const BatchResult result = run_batch(method, questions, s, store, run_id, cfg.workers);
  out << "run " << run_id << ": " << result.executed << " executed, " << result.skipped
      << " already recorded\n";
  return 0;
}

int cmd_classify(const Options& o, std::ostream& out) {
  const CliConfig cfg = merged_config(o);
  const Services s = services_for(cfg);
  const auto questions = questions_for(o, cfg);
  std::vector<ManifestEntry> entries;
  ordered_parallel<Question, ManifestEntry>(
      questions, cfg.workers, [&](const Question& q) { return classify_question(q, s); },
      [&](ManifestEntry&& e) { entries.push_back(std::move(e)); });
  const fs::path path = o.out.empty() ? cfg.store_dir / "difficulty.jsonl" : fs::path(o.out);
  write_manifest(path, entries);
  std::map<Level, int> counts;
  for (const auto& e : entries) ++counts[e.label.level];
  out << "classified " << entries.size() << " questions:";
  for (Level l : kAllLevels) out << " " << to_string(l) << "=" << counts[l];
  out << "\n";
  return 0;
}

int cmd_distill(const Options& o, std::ostream& out) {
  const CliConfig cfg = merged_config(o);
  const Services s = services_for(cfg);
  const std::string run_id = single_run_id(o, "");
  RunStore store(cfg.store_dir);
  const auto records = store.load_records(run_id);

  std::vector<LongCoT> longs;
  ordered_parallel<RunRecord, std::vector<LongCoT>>(
      records, cfg.workers, [&](const RunRecord& r) { return reflect_record(r, s); },
      [&](std::vector<LongCoT>&& batch) {
        for (auto& l : batch) longs.push_back(std::move(l));
      });
  const auto pairs = match_pairs(longs, cfg.run.seed);
  if (const auto v = check_pairs(pairs); !v.empty()) throw Error("pair invariant: " + v.front());
  const fs::path path =
      o.out.empty() ? cfg.store_dir / "dpo" / (run_id + ".jsonl") : fs::path(o.out);
  export_dpo(pairs, path);
  out << "distilled " << longs.size() << " long chains into " << pairs.size() << " pairs at "
      << path.string() << "\n";
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  const CliConfig cfg = merged_config(o);
  RunStore store(cfg.store_dir);
  std::vector<std::string> run_ids = o.run_ids;
  if (run_ids.empty()) {
    for (const auto& entry : fs::directory_iterator(cfg.store_dir / "runs")) {
      if (entry.path().extension() == ".jsonl") run_ids.push_back(entry.path().stem().string());
    }
    std::sort(run_ids.begin(), run_ids.end());
  }
  std::vector<RunRecord> records;
  for (const auto& id : run_ids) {
    auto batch = store.load_records(id);
    records.insert(records.end(), batch.begin(), batch.end());
  }
  std::vector<ManifestEntry> manifest;
  const fs::path manifest_path =
      o.manifest.empty() ? cfg.store_dir / "difficulty.jsonl" : fs::path(o.manifest);
  if (fs::exists(manifest_path)) {
    manifest = load_manifest(manifest_path);
  } else if (!o.manifest.empty()) {
    throw ConfigError("manifest: " + manifest_path.string() + " does not exist");
  }

  const Report report = build_report(records, manifest);
  const std::string table = render_report_table(report);
  const fs::path dir = o.out.empty() ? cfg.store_dir / "reports" : fs::path(o.out);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  write_text(dir / "report.txt", table);
  out << table;
  return 0;
}

int cmd_replay(const Options& o, std::ostream& out) {
  const CliConfig cfg = merged_config(o);
  require_valid(cfg);
  const std::string run_id = single_run_id(o, "");
  RunStore store(cfg.store_dir);
  const auto records = store.load_records(run_id);
  const TemplateSet templates = templates_for(cfg);

  // Backends are built per distinct recorded config, always offline.
  std::map<std::string, std::shared_ptr<Services>> services;
  auto services_of = [&](const RunRecord& r) {
    const std::string key = to_json(r.config).dump();
    auto it = services.find(key);
    if (it == services.end()) {
      auto s = std::make_shared<Services>();
      s->config = r.config;
      s->templates = templates;
      s->backends = build_backends(cfg, r.config, true);
      s->difficulty = cfg.difficulty;
      it = services.emplace(key, std::move(s)).first;
    }
    return it->second;
  };
  std::vector<std::shared_ptr<Services>> per_record;
  for (const auto& r : records) per_record.push_back(services_of(r));

  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::string replayed;
  int mismatches = 0;
  std::size_t next = 0;
  ordered_parallel<std::size_t, RunRecord>(
      idx, cfg.workers,
      [&](const std::size_t& i) {
        const RunRecord& orig = records[i];
        RunRecord r = run_question(orig.method, orig.question, *per_record[i], orig.run_id);
        r.started_at = orig.started_at;
        r.finished_at = orig.finished_at;
        return r;
      },
      [&](RunRecord&& r) {
        const std::string line = to_json(r).dump();
        if (line != to_json(records[next]).dump()) {
          ++mismatches;
          out << "mismatch: question " << r.question.id << "\n";
        }
        replayed += line + "\n";
        ++next;
      });
  const fs::path path =
      o.out.empty() ? cfg.store_dir / "replays" / (run_id + ".jsonl") : fs::path(o.out);
  write_text(path, replayed);
  out << "replayed " << records.size() << " records of " << run_id << ": " << mismatches
      << " mismatches\n";
  return mismatches == 0 ? 0 : 1;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--store", o.store, "Store directory (overrides config)");
  cmd->add_option("--cache", o.cache, "Response cache directory (overrides config)");
  cmd->add_option("--templates", o.templates, "Directory of template overrides");
  cmd->add_option("--seed", o.seed, "Run seed");
}

void add_run_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--dataset", o.dataset, "MedQA-format JSONL (default: the ingested dataset)");
  cmd->add_option("--workers", o.workers, "Questions processed concurrently");
  cmd->add_option("--alpha", o.alpha, "Weight of the reasoning score");
  cmd->add_option("--max-depth", o.max_depth, "Deepest step below the root (root is depth 0)");
  cmd->add_option("--branching", o.branching, "Children generated per expansion");
  cmd->add_option("--max-chains", o.max_chains, "Chains collected per question");
  cmd->add_option("--node-budget", o.node_budget, "Generation attempts per question");
  cmd->add_option("--cot-samples", o.cot_samples, "CoT samples per question");
  cmd->add_option("--subset", o.subset, "Run on N questions drawn by a seeded shuffle");
  cmd->add_option("--subset-seed", o.subset_seed, "Seed of the subset draw (default: --seed)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-of-thoughts reasoning and benchmark harness for multiple-choice QA", "qmtot"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Validate a MedQA JSONL file into the store");
  add_common(ingest, o);
  ingest->add_option("--dataset", o.dataset, "MedQA-format JSONL")->required();
  ingest->add_option("--subset", o.subset, "Keep N questions drawn by a seeded shuffle");
  ingest->add_option("--subset-seed", o.subset_seed, "Seed of the subset draw");
  ingest->add_option("--out", o.out, "Output path (default: <store>/dataset.jsonl)");

  const std::pair<const char*, Method> run_cmds[] = {{"run-cot", Method::cot},
                                                     {"run-cotsc", Method::cotsc},
                                                     {"run-tot", Method::tot},
                                                     {"run-qmtot", Method::qmtot}};
  std::map<CLI::App*, Method> methods;
  for (const auto& [name, method] : run_cmds) {
    auto* cmd = app.add_subcommand(name, "Run " + std::string(to_string(method)) +
                                             " over the dataset");
    add_common(cmd, o);
    add_run_flags(cmd, o);
    cmd->add_option("--run-id", o.run_ids, "Run identifier (default: the method name)")
        ->expected(1);
    methods[cmd] = method;
  }

  auto* classify = app.add_subcommand("classify", "Label question difficulty from CoT accuracy");
  add_common(classify, o);
  add_run_flags(classify, o);
  classify->add_option("--k1", o.k1, "Easy threshold");
  classify->add_option("--omega", o.omega, "Bias boundary (default: 1/options)");
  classify->add_option("--out", o.out, "Output path (default: <store>/difficulty.jsonl)");

  auto* distill = app.add_subcommand("distill", "Reflect a run's chains into DPO pairs");
  add_common(distill, o);
  distill->add_option("--run-id", o.run_ids, "Run to distill")->required()->expected(1);
  distill->add_option("--workers", o.workers, "Records processed concurrently");
  distill->add_option("--out", o.out, "Output path (default: <store>/dpo/<run-id>.jsonl)");

  auto* report = app.add_subcommand("report", "Accuracy tables from recorded runs");
  add_common(report, o);
  report->add_option("--run-id", o.run_ids, "Runs to include (default: all)");
  report->add_option("--manifest", o.manifest, "Difficulty manifest");
  report->add_option("--out", o.out, "Output directory (default: <store>/reports)");

  auto* replay = app.add_subcommand("replay", "Re-execute a run from the response cache");
  add_common(replay, o);
  replay->add_option("--run-id", o.run_ids, "Run to replay")->required()->expected(1);
  replay->add_option("--workers", o.workers, "Questions processed concurrently");
  replay->add_option("--out", o.out, "Output path (default: <store>/replays/<run-id>.jsonl)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  set_log_sink([&err](std::string_view msg) { err << "warning: " << msg << "\n"; });
  int code = 0;
  try {
    if (ingest->parsed()) {
      code = cmd_ingest(o, out);
    } else if (classify->parsed()) {
      code = cmd_classify(o, out);
    } else if (distill->parsed()) {
      code = cmd_distill(o, out);
    } else if (report->parsed()) {
      code = cmd_report(o, out);
    } else if (replay->parsed()) {
      code = cmd_replay(o, out);
    } else {
      for (const auto& [cmd, method] : methods) {
        if (cmd->parsed()) code = cmd_run(method, o, out);
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    code = 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = 1;
  }
  set_log_sink([](std::string_view msg) { std::cerr << "warning: " << msg << "\n"; });
  return code;
}

}  // namespace qmtot::cli
