#include "topodiff/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "topodiff/rng.hpp"

namespace topodiff {

std::string to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

Difficulty parse_difficulty(const std::string& name) {
  if (name == "easy") return Difficulty::easy;
  if (name == "hard") return Difficulty::hard;
  throw std::invalid_argument("unknown difficulty: " + name);
}

std::size_t required_role_count(Difficulty d) { return d == Difficulty::easy ? 2 : 4; }

double synthetic_utility(const CommGraph& g, const SyntheticTask& task, const UtilityWeights& weights) {
  // Strictly the non-isolated agents, so that adding an edge to an edgeless
  // graph cannot shrink the covered role multiset.
  std::vector<std::size_t> agents;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!g.is_isolated(v)) agents.push_back(v);
  std::map<std::size_t, std::size_t> present;
  for (auto v : agents) ++present[g.role(v)];

  double coverage = 0.0;
  if (!task.required_roles.empty()) {
    std::map<std::size_t, std::size_t> needed;
    for (const auto& r : task.required_roles) ++needed[r.index];
    std::size_t matched = 0;
    for (auto [role, count] : needed) {
      auto it = present.find(role);
      if (it != present.end()) matched += std::min(count, it->second);
    }
    coverage = static_cast<double>(matched) / static_cast<double>(task.required_roles.size());
  }

  bool path = false;
  if (g.edge_count() > 0) {
    const auto reach = reachability(g);
    for (auto a : agents) {
      if (g.role(a) != task.required_path.first.index) continue;
      for (auto b : agents)
        if (g.role(b) == task.required_path.second.index && reach[a][b]) path = true;
    }
  }
  return weights.coverage * coverage + weights.path * (path ? 1.0 : 0.0);
}

double synthetic_cost(const CommGraph& g, double normalizer) {
  if (!(normalizer > 0.0)) throw std::invalid_argument("cost normalizer must be positive");
  return static_cast<double>(g.edge_count() + participating_agents(g).size()) / normalizer;
}

namespace {

const char* count_word(std::size_t k) {
  static const char* words[] = {"zero", "one", "two", "three", "four", "five", "six"};
  return k < 7 ? words[k] : "many";
}

std::string join_roles(const std::vector<RoleId>& roles) {
  std::string out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (i > 0) out += i + 1 == roles.size() ? " and " : ", ";
    out += "a " + roles[i].label;
  }
  return out;
}

}  // namespace

std::vector<SyntheticTask> generate_task_suite(std::size_t n, double hard_fraction, const RoleVocab& vocab,
                                               std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("task suite needs at least one task");
  if (hard_fraction < 0.0 || hard_fraction > 1.0) throw std::invalid_argument("hard fraction must be in [0, 1]");
  if (vocab.size() < required_role_count(Difficulty::hard))
    throw std::invalid_argument("role vocabulary too small for hard tasks");
  Rng rng = derive_rng(seed, {0x7A5C});
  std::vector<SyntheticTask> suite;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticTask t;
    t.difficulty = uniform01(rng) < hard_fraction ? Difficulty::hard : Difficulty::easy;
    std::vector<std::size_t> pool(vocab.size());
    for (std::size_t r = 0; r < pool.size(); ++r) pool[r] = r;
    const auto k = required_role_count(t.difficulty);
    for (std::size_t j = 0; j < k; ++j) std::swap(pool[j], pool[j + uniform_index(rng, pool.size() - j)]);
    for (std::size_t j = 0; j < k; ++j) t.required_roles.push_back(vocab.at(pool[j]));
    const auto src = uniform_index(rng, k);
    auto dst = uniform_index(rng, k - 1);
    if (dst >= src) ++dst;
    t.required_path = {t.required_roles[src], t.required_roles[dst]};
    char id[32];
    std::snprintf(id, sizeof id, "task-%03zu", i);
    t.task_id = id;
    t.query = "Assemble " + std::string(count_word(k)) + " specialists: " + join_roles(t.required_roles) +
              ". The " + t.required_path.first.label + " must hand its findings to the " +
              t.required_path.second.label + ".";
    suite.push_back(std::move(t));
  }
  return suite;
}

QueryContext task_query(const SyntheticTask& task, std::size_t dim, const EmbeddingTable* table) {
  return make_query(task.task_id, task.query, dim, table);
}

nlohmann::json task_to_json(const SyntheticTask& task) {
  nlohmann::json roles = nlohmann::json::array();
  for (const auto& r : task.required_roles) roles.push_back(r.label);
  return {{"task_id", task.task_id},
          {"query", task.query},
          {"required_roles", roles},
          {"required_path", {task.required_path.first.label, task.required_path.second.label}},
          {"difficulty", to_string(task.difficulty)}};
}

SyntheticTask task_from_json(const nlohmann::json& doc, const RoleVocab& vocab) {
  try {
    SyntheticTask t;
    t.task_id = doc.at("task_id").get<std::string>();
    t.query = doc.at("query").get<std::string>();
    for (const auto& r : doc.at("required_roles")) t.required_roles.push_back(vocab.find(r.get<std::string>()));
    const auto& path = doc.at("required_path");
    if (!path.is_array() || path.size() != 2) throw FormatError("required_path must be a pair of role labels");
    t.required_path = {vocab.find(path[0].get<std::string>()), vocab.find(path[1].get<std::string>())};
    t.difficulty = parse_difficulty(doc.at("difficulty").get<std::string>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed task record: ") + e.what());
  }
}

nlohmann::json suite_to_json(const std::vector<SyntheticTask>& suite) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : suite) out.push_back(task_to_json(t));
  return out;
}

std::vector<SyntheticTask> suite_from_json(const nlohmann::json& doc, const RoleVocab& vocab) {
  if (!doc.is_array()) throw FormatError("task suite must be an array of task records");
  std::vector<SyntheticTask> out;
  for (const auto& rec : doc) out.push_back(task_from_json(rec, vocab));
  return out;
}

}  // namespace topodiff
