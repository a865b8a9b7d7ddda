#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmtot/domain.hpp"
#include "qmtot/session.hpp"

namespace qmtot {

/// The generator returned only whitespace for a step.
class EmptyGeneration : public Error {
 public:
  using Error::Error;
};

enum class NodeStatus { open, expanded, pruned, terminal };

std::string_view to_string(NodeStatus s);

struct TreeNode {
  int id = 0;
  std::optional<int> parent;
  ReasoningStep step;
  int depth = 0;
  NodeStatus status = NodeStatus::open;
  std::vector<int> children;
};

struct TreeRunStats {
  int nodes_created = 0;
  int nodes_pruned = 0;
  int chains_collected = 0;
  int llm_calls = 0;
  // Root-to-leaf paths that reached a verdict: terminal plus pruned leaves.
  int paths_per_question = 0;

  bool operator==(const TreeRunStats&) const = default;
};

Json to_json(const TreeRunStats& s);
TreeRunStats tree_run_stats_from_json(const Json& j);

struct TreeRun {
  std::vector<ChainRecord> chains;
  TreeRunStats stats;
  std::vector<TreeNode> nodes;
  // Node id of the leaf each chain was read from, parallel to `chains`.
  std::vector<int> chain_leaves;
};

/// First reasoning step plus its validity verdict.
ReasoningStep initial_step(const Question& q, CallSession& session);

struct Expansion {
  std::vector<ReasoningStep> children;
  int empty_generations = 0;
};

/// Up to `count` candidate next steps, each generated from the question and
/// the whole history. Children come back unvalidated (verdict promising).
Expansion extend_step(const Question& q, const std::vector<ReasoningStep>& history,
                      CallSession& session, int count);

/// Validity verdict for a path whose last element is the candidate step.
Verdict validate_path(const Question& q, const std::vector<ReasoningStep>& path,
                      CallSession& session);

/// Depth-first tree search with validity gating and backtracking.
///
/// Solved steps become terminal chains (answer read out by a separate call),
/// dead ends are pruned, promising steps are expanded in generation order.
/// Depths run from 0 to max_depth; a promising step at max_depth is pruned. Stops after
/// `max_chains` chains, when the node budget is spent, or when the tree is
/// exhausted.
TreeRun run_tree(const Question& q, CallSession& session);

/// `n` independent single-prompt chain-of-thought samples.
std::vector<ChainRecord> run_cot(const Question& q, int n, CallSession& session);

/// Most frequent answer; ties go to the alphabetically first label.
std::optional<OptionLabel> majority_vote(const std::vector<ChainRecord>& chains);

/// Checks parent links, depths, and childless pruned/terminal nodes.
std::vector<std::string> check_tree(const TreeRun& run, int max_depth);

}  // namespace qmtot
