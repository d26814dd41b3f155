#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topodiff/graph.hpp"
#include "topodiff/query.hpp"

namespace topodiff {

enum class Difficulty { easy, hard };

std::string to_string(Difficulty d);
Difficulty parse_difficulty(const std::string& name);

// Number of required roles per difficulty level.
std::size_t required_role_count(Difficulty d);

struct SyntheticTask {
  std::string task_id;
  std::string query;
  std::vector<RoleId> required_roles;  // multiset
  std::pair<RoleId, RoleId> required_path;
  Difficulty difficulty = Difficulty::easy;

  friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

struct UtilityWeights {
  double coverage = 0.5;
  double path = 0.5;
};

/// coverage * (matched required roles / required roles)
///   + path * [some source-role agent reaches some sink-role agent].
/// Only non-isolated agents count, so an edgeless graph scores 0.
double synthetic_utility(const CommGraph& g, const SyntheticTask& task, const UtilityWeights& weights = {});

// (edges + participating agents) / normalizer.
double synthetic_cost(const CommGraph& g, double normalizer);

// Minimised quantity: -u + alpha * c.
inline double objective(double utility, double cost, double alpha) { return -utility + alpha * cost; }

// Tasks are hard with probability `hard_fraction`.
std::vector<SyntheticTask> generate_task_suite(std::size_t n, double hard_fraction, const RoleVocab& vocab,
                                               std::uint64_t seed);

QueryContext task_query(const SyntheticTask& task, std::size_t dim = kDefaultQueryDim,
                        const EmbeddingTable* table = nullptr);

nlohmann::json task_to_json(const SyntheticTask& task);
SyntheticTask task_from_json(const nlohmann::json& doc, const RoleVocab& vocab);
nlohmann::json suite_to_json(const std::vector<SyntheticTask>& suite);
std::vector<SyntheticTask> suite_from_json(const nlohmann::json& doc, const RoleVocab& vocab);

}  // namespace topodiff
