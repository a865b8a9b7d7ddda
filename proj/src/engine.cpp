#include "qmtot/engine.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "qmtot/promptkit.hpp"

namespace qmtot {

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

class TreeSearch {
 public:
  TreeSearch(const Question& q, CallSession& session)
      : q_(q), session_(session), cfg_(session.config()), labels_(q.labels()) {}

  TreeRun run() {
    const auto calls_before = session_.totals().calls;
    attempts_ = 1;
    try {
      ReasoningStep root = initial_step(q_, session_);
      const int id = add_node(std::nullopt, std::move(root));
      settle(id);
    } catch (const EmptyGeneration& e) {
      log_warning("question " + q_.id + ": " + e.what() + "; tree produced no chains");
    }
    run_.stats.llm_calls = static_cast<int>(session_.totals().calls - calls_before);
    run_.stats.chains_collected = static_cast<int>(run_.chains.size());
    run_.stats.paths_per_question = run_.stats.chains_collected + run_.stats.nodes_pruned;
    return std::move(run_);
  }

 private:
  int add_node(std::optional<int> parent, ReasoningStep step) {
    TreeNode node;
    node.id = static_cast<int>(run_.nodes.size());
    node.parent = parent;
    node.depth = parent ? run_.nodes[*parent].depth + 1 : 0;
    step.index = node.depth;
    node.step = std::move(step);
    if (parent) run_.nodes[*parent].children.push_back(node.id);
    run_.nodes.push_back(std::move(node));
    ++run_.stats.nodes_created;
    return run_.nodes.back().id;
  }

  std::vector<ReasoningStep> path_to(int id) const {
    std::vector<ReasoningStep> path;
    for (std::optional<int> cur = id; cur; cur = run_.nodes[*cur].parent) {
      path.push_back(run_.nodes[*cur].step);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  bool enough_chains() const {
    return static_cast<int>(run_.chains.size()) >= cfg_.max_chains;
  }

  void prune(int id) {
    run_.nodes[id].status = NodeStatus::pruned;
    ++run_.stats.nodes_pruned;
  }

  void settle(int id) {
    switch (run_.nodes[id].step.verdict) {
      case Verdict::solved:
        run_.nodes[id].status = NodeStatus::terminal;
        collect(id);
        return;
      case Verdict::dead_end:
        prune(id);
        return;
      case Verdict::promising:
        // The root is depth 0, so a promising step at max_depth has no room left.
        if (run_.nodes[id].depth >= cfg_.max_depth) {
          prune(id);
          return;
        }
        expand(id);
        return;
    }
  }

  void expand(int id) {
    if (enough_chains()) return;
    const int remaining = cfg_.node_budget - attempts_;
    if (remaining <= 0) return;
    const int count = std::min(cfg_.branching, remaining);
    attempts_ += count;

    Expansion expansion = extend_step(q_, path_to(id), session_, count);
    if (expansion.children.empty()) {
      prune(id);
      return;
    }
    run_.nodes[id].status = NodeStatus::expanded;
    std::vector<int> ids;
    for (auto& child : expansion.children) ids.push_back(add_node(id, std::move(child)));
    for (int child : ids) {
      if (enough_chains()) break;
      run_.nodes[child].step.verdict = validate_path(q_, path_to(child), session_);
      settle(child);
    }
  }

  void collect(int id) {
    ChainRecord chain;
    chain.question_id = q_.id;
    chain.steps = path_to(id);
    Bindings b = question_bindings(q_);
    b["history"] = format_history(chain.steps);
    const ChatResponse readout = session_.call(Role::validator, Purpose::readout,
                                               TemplateName::readout, b, cfg_.scoring_temperature);
    chain.answer = extract_answer(readout.text, labels_);
    grade_chain(chain, q_.gold);
    run_.chains.push_back(std::move(chain));
    run_.chain_leaves.push_back(id);
  }

  const Question& q_;
  CallSession& session_;
  const RunConfig& cfg_;
  std::vector<OptionLabel> labels_;
  int attempts_ = 0;
  TreeRun run_;
};

}  // namespace

std::string_view to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::open:
      return "open";
    case NodeStatus::expanded:
      return "expanded";
    case NodeStatus::pruned:
      return "pruned";
    case NodeStatus::terminal:
      return "terminal";
  }
  return "open";
}

Json to_json(const TreeRunStats& s) {
  return Json{{"nodes_created", s.nodes_created},
              {"nodes_pruned", s.nodes_pruned},
              {"chains_collected", s.chains_collected},
              {"llm_calls", s.llm_calls},
              {"paths_per_question", s.paths_per_question}};
}

TreeRunStats tree_run_stats_from_json(const Json& j) {
  TreeRunStats s;
  try {
    s.nodes_created = j.at("nodes_created").get<int>();
    s.nodes_pruned = j.at("nodes_pruned").get<int>();
    s.chains_collected = j.at("chains_collected").get<int>();
    s.llm_calls = j.at("llm_calls").get<int>();
    s.paths_per_question = j.at("paths_per_question").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("tree stats: ") + e.what());
  }
  return s;
}

ReasoningStep initial_step(const Question& q, CallSession& session) {
  const ChatResponse resp =
      session.call(Role::generator, Purpose::decompose, TemplateName::decompose,
                   question_bindings(q), session.config().generation_temperature);
  std::string text = trimmed(resp.text);
  if (text.empty()) throw EmptyGeneration("decompose returned blank text for " + q.id);
  ReasoningStep step{0, std::move(text), Verdict::promising};
  step.verdict = validate_path(q, {step}, session);
  return step;
}

Expansion extend_step(const Question& q, const std::vector<ReasoningStep>& history,
                      CallSession& session, int count) {
  if (history.empty()) throw Error("extend_step needs a non-empty history");
  if (history.back().verdict != Verdict::promising) {
    throw Error("extend_step expands only promising steps");
  }
  Bindings b = question_bindings(q);
  b["history"] = format_history(history);
  Expansion out;
  const int depth = static_cast<int>(history.size());
  for (int i = 0; i < count; ++i) {
    const ChatResponse resp = session.call(Role::generator, Purpose::extend, TemplateName::extend,
                                           b, session.config().generation_temperature);
    std::string text = trimmed(resp.text);
    if (text.empty()) {
      ++out.empty_generations;
      log_warning("question " + q.id + ": EmptyGeneration for candidate " + std::to_string(i) +
                  " at depth " + std::to_string(depth));
      continue;
    }
    out.children.push_back(ReasoningStep{depth, std::move(text), Verdict::promising});
  }
  return out;
}

Verdict validate_path(const Question& q, const std::vector<ReasoningStep>& path,
                      CallSession& session) {
  Bindings b = question_bindings(q);
  b["history"] = format_history(path);
  const ChatResponse resp = session.call(Role::validator, Purpose::validate, TemplateName::validate,
                                         b, session.config().scoring_temperature);
  return extract_verdict(resp.text);
}

TreeRun run_tree(const Question& q, CallSession& session) {
  if (auto errors = validate_run_config(session.config(), false); !errors.empty()) {
    throw Error("invalid run config: " + errors.front());
  }
  return TreeSearch(q, session).run();
}

std::vector<ChainRecord> run_cot(const Question& q, int n, CallSession& session) {
  if (n < 1) throw RangeError("run_cot needs n >= 1");
  const auto labels = q.labels();
  std::vector<ChainRecord> chains;
  for (int i = 0; i < n; ++i) {
    ChatResponse resp;
    try {
      resp = session.call(Role::generator, Purpose::cot, TemplateName::cot, question_bindings(q),
                          session.config().generation_temperature);
    } catch (const TransportError& e) {
      log_warning("question " + q.id + ": CoT sample " + std::to_string(i) + " skipped: " +
                  e.what());
      continue;
    } catch (const ProtocolError& e) {
      log_warning("question " + q.id + ": CoT sample " + std::to_string(i) + " skipped: " +
                  e.what());
      continue;
    }
    std::string text = trimmed(resp.text);
    if (text.empty()) {
      log_warning("question " + q.id + ": CoT sample " + std::to_string(i) + " was blank");
      continue;
    }
    ChainRecord chain;
    chain.question_id = q.id;
    chain.answer = extract_answer(text, labels);
    chain.steps.push_back(ReasoningStep{0, std::move(text), Verdict::solved});
    grade_chain(chain, q.gold);
    chains.push_back(std::move(chain));
  }
  return chains;
}

std::optional<OptionLabel> majority_vote(const std::vector<ChainRecord>& chains) {
  std::map<OptionLabel, int> votes;
  for (const auto& c : chains) {
    if (c.answer) ++votes[*c.answer];
  }
  std::optional<OptionLabel> best;
  int best_count = 0;
  for (const auto& [label, count] : votes) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

std::vector<std::string> check_tree(const TreeRun& run, int max_depth) {
  std::vector<std::string> v;
  const auto& nodes = run.nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::string tag = "node " + std::to_string(i);
    if (n.id != static_cast<int>(i)) v.push_back(tag + ": id mismatch");
    if (!n.parent) {
      if (i != 0) v.push_back(tag + ": second root");
      if (n.depth != 0) v.push_back(tag + ": root depth is not 0");
    } else {
      const int p = *n.parent;
      // Parents are always created before children, which rules out cycles.
      if (p < 0 || p >= static_cast<int>(i)) {
        v.push_back(tag + ": parent link does not point to an earlier node");
      } else {
        if (n.depth != nodes[p].depth + 1) v.push_back(tag + ": depth != parent depth + 1");
        const auto& siblings = nodes[p].children;
        if (std::find(siblings.begin(), siblings.end(), n.id) == siblings.end()) {
          v.push_back(tag + ": missing from parent's children");
        }
      }
    }
    if (n.depth > max_depth) v.push_back(tag + ": deeper than max_depth");
    if (n.step.index != n.depth) v.push_back(tag + ": step index != depth");
    if ((n.status == NodeStatus::pruned || n.status == NodeStatus::terminal) &&
        !n.children.empty()) {
      v.push_back(tag + ": " + std::string(to_string(n.status)) + " node has children");
    }
    for (int c : n.children) {
      if (c <= n.id || c >= static_cast<int>(nodes.size()) || nodes[c].parent != n.id) {
        v.push_back(tag + ": child link " + std::to_string(c) + " is inconsistent");
      }
    }
  }
  if (run.chain_leaves.size() != run.chains.size()) {
    v.emplace_back("chain_leaves not parallel to chains");
    return v;
  }
  for (std::size_t c = 0; c < run.chains.size(); ++c) {
    const int leaf = run.chain_leaves[c];
    if (leaf < 0 || leaf >= static_cast<int>(nodes.size())) {
      v.push_back("chain " + std::to_string(c) + ": leaf out of range");
      continue;
    }
    if (nodes[leaf].status != NodeStatus::terminal) {
      v.push_back("chain " + std::to_string(c) + ": leaf is not terminal");
    }
    std::vector<ReasoningStep> path;
    for (std::optional<int> cur = leaf; cur; cur = nodes[*cur].parent) {
      path.push_back(nodes[*cur].step);
    }
    std::reverse(path.begin(), path.end());
    if (path != run.chains[c].steps) {
      v.push_back("chain " + std::to_string(c) + ": steps do not replay the tree path");
    }
  }
  return v;
}

}  // namespace qmtot
