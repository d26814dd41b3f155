#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace topodiff {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when no topological order exists; carries one directed cycle.
class CycleError : public GraphError {
 public:
  explicit CycleError(std::vector<std::size_t> cycle);
  const std::vector<std::size_t>& cycle() const { return cycle_; }

 private:
  std::vector<std::size_t> cycle_;
};

class VocabularyError : public GraphError {
 public:
  using GraphError::GraphError;
};

class FormatError : public GraphError {
 public:
  using GraphError::GraphError;
};

struct RoleId {
  std::size_t index = 0;
  std::string label;

  friend bool operator==(const RoleId&, const RoleId&) = default;
};

class RoleVocab {
 public:
  RoleVocab() = default;
  explicit RoleVocab(std::vector<std::string> labels);

  // Solver, Critic, Verifier, Planner, Decider.
  static RoleVocab standard();

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  RoleId at(std::size_t index) const;
  RoleId find(const std::string& label) const;  // throws VocabularyError
  std::optional<RoleId> try_find(const std::string& label) const;

  friend bool operator==(const RoleVocab&, const RoleVocab&) = default;

 private:
  std::vector<std::string> labels_;
};

struct AgentSpec {
  std::size_t id = 0;
  std::string base = "mock";
  RoleId role;
  std::string state;
  std::vector<std::string> plugins;

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

// Directed agent graph. adjacency(a, b) means a sends to b.
class CommGraph {
 public:
  CommGraph() = default;
  explicit CommGraph(std::vector<AgentSpec> agents);
  CommGraph(std::size_t n, const RoleVocab& vocab, const std::vector<std::size_t>& roles);

  std::size_t size() const { return agents_.size(); }
  const std::vector<AgentSpec>& agents() const { return agents_; }
  const AgentSpec& agent(std::size_t v) const { return agents_.at(v); }
  AgentSpec& agent(std::size_t v) { return agents_.at(v); }
  std::size_t role(std::size_t v) const { return agents_.at(v).role.index; }

  bool has_edge(std::size_t from, std::size_t to) const;
  void add_edge(std::size_t from, std::size_t to);
  void remove_edge(std::size_t from, std::size_t to);

  std::size_t edge_count() const;
  std::vector<Edge> edges() const;  // lexicographic order
  std::vector<std::size_t> in_neighbors(std::size_t v) const;
  std::vector<std::size_t> out_neighbors(std::size_t v) const;
  bool is_isolated(std::size_t v) const;

  nlohmann::json meta = nlohmann::json::object();

  friend bool operator==(const CommGraph& a, const CommGraph& b) {
    return a.agents_ == b.agents_ && a.adjacency_ == b.adjacency_ && a.meta == b.meta;
  }

 private:
  void check_index(std::size_t v) const;

  std::vector<AgentSpec> agents_;
  std::vector<std::uint8_t> adjacency_;
};

// Graph with the same nodes but only the edges whose endpoints are both visible.
CommGraph visible_subgraph(const CommGraph& g, const std::vector<bool>& visible);

// Kahn's algorithm, ties broken by ascending node index.
std::vector<std::size_t> topological_sort(const CommGraph& g);
std::optional<std::vector<std::size_t>> find_cycle(const CommGraph& g);
bool is_acyclic(const CommGraph& g);

enum class Direction { in, out };

/// Redundancy-discounted neighbourhood size of `node`:
///   |N| - (sum over ordered pairs j != q in N of A_jq * [role(j) == role(q)]) / |N|
/// where N is the in- or out-neighbourhood. Zero for an empty neighbourhood.
double effective_size(const CommGraph& g, std::size_t node, Direction direction);

/// (1 - beta) * in-size + beta * out-size.
double combined_effective_size(const CommGraph& g, std::size_t node, double beta);

std::vector<double> combined_effective_sizes(const CommGraph& g, double beta);

enum class TopologyFamily { fully_connected, mesh, star, layered, random };

std::string to_string(TopologyFamily family);
TopologyFamily parse_family(const std::string& name);
const std::vector<TopologyFamily>& all_families();

// Every family is emitted as a DAG oriented from lower to higher index.
CommGraph baseline_topology(TopologyFamily family, std::size_t n, const RoleVocab& role_pool,
                            std::uint64_t seed, double edge_probability = 0.3);

using EdgeScores = std::map<Edge, double>;

struct DagProjection {
  CommGraph graph;
  std::vector<Edge> removed;
};

// Breaks cycles by removing the lowest-scored edge of each detected cycle, then
// restores any removed edge (highest score first) that no longer closes a cycle.
DagProjection dag_project(const CommGraph& g, const EdgeScores& scores);

struct GraphStats {
  std::size_t active_size = 0;
  double density = 0.0;
  double mean_effective_size = 0.0;
};

GraphStats graph_stats(const CommGraph& g, double beta);

// Nodes that take part in execution: the non-isolated ones, or every node when
// the graph has no edges at all.
std::vector<std::size_t> participating_agents(const CommGraph& g);

// Directed reachability over paths of length >= 1.
std::vector<std::vector<bool>> reachability(const CommGraph& g);

// Graphviz digraph over the non-isolated agents, matching GraphStats::active_size.
std::string to_dot(const CommGraph& g, const std::string& name = "topology");

nlohmann::json serialize(const CommGraph& g);
CommGraph deserialize(const nlohmann::json& doc, const RoleVocab& vocab);

}  // namespace topodiff
