#include "topodiff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "topodiff/rng.hpp"

namespace topodiff {

namespace {

std::string describe_cycle(const std::vector<std::size_t>& cycle) {
  std::ostringstream os;
  os << "communication graph has a cycle:";
  for (auto v : cycle) os << ' ' << v;
  if (!cycle.empty()) os << ' ' << cycle.front();
  return os.str();
}

}  // namespace

CycleError::CycleError(std::vector<std::size_t> cycle)
    : GraphError(describe_cycle(cycle)), cycle_(std::move(cycle)) {}

RoleVocab::RoleVocab(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw VocabularyError("role label must not be empty");
    if (!seen.insert(l).second) throw VocabularyError("duplicate role label: " + l);
  }
}

RoleVocab RoleVocab::standard() {
  return RoleVocab({"Solver", "Critic", "Verifier", "Planner", "Decider"});
}

RoleId RoleVocab::at(std::size_t index) const {
  if (index >= labels_.size()) {
    throw VocabularyError("role index " + std::to_string(index) + " outside vocabulary of size " +
                          std::to_string(labels_.size()));
  }
  return RoleId{index, labels_[index]};
}

std::optional<RoleId> RoleVocab::try_find(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return RoleId{i, label};
  }
  return std::nullopt;
}

RoleId RoleVocab::find(const std::string& label) const {
  if (auto r = try_find(label)) return *r;
  throw VocabularyError("unknown role label: " + label);
}

CommGraph::CommGraph(std::vector<AgentSpec> agents)
    : agents_(std::move(agents)), adjacency_(agents_.size() * agents_.size(), 0) {
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (agents_[i].id != i) throw FormatError("agent ids must equal their node index");
  }
}

CommGraph::CommGraph(std::size_t n, const RoleVocab& vocab, const std::vector<std::size_t>& roles) {
  if (roles.size() != n) throw FormatError("role list length differs from node count");
  agents_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    AgentSpec a;
    a.id = i;
    a.role = vocab.at(roles[i]);
    agents_.push_back(std::move(a));
  }
  adjacency_.assign(n * n, 0);
}

void CommGraph::check_index(std::size_t v) const {
  if (v >= size()) {
    throw std::out_of_range("node " + std::to_string(v) + " outside graph of size " +
                            std::to_string(size()));
  }
}

bool CommGraph::has_edge(std::size_t from, std::size_t to) const {
  check_index(from);
  check_index(to);
  return adjacency_[from * size() + to] != 0;
}

void CommGraph::add_edge(std::size_t from, std::size_t to) {
  check_index(from);
  check_index(to);
  if (from == to) throw FormatError("self-loop on node " + std::to_string(from));
  adjacency_[from * size() + to] = 1;
}

void CommGraph::remove_edge(std::size_t from, std::size_t to) {
  check_index(from);
  check_index(to);
  adjacency_[from * size() + to] = 0;
}

std::size_t CommGraph::edge_count() const {
  return static_cast<std::size_t>(std::count(adjacency_.begin(), adjacency_.end(), 1));
}

std::vector<Edge> CommGraph::edges() const {
  std::vector<Edge> out;
  const auto n = size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (adjacency_[a * n + b]) out.emplace_back(a, b);
  return out;
}

std::vector<std::size_t> CommGraph::in_neighbors(std::size_t v) const {
  check_index(v);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < size(); ++j)
    if (adjacency_[j * size() + v]) out.push_back(j);
  return out;
}

std::vector<std::size_t> CommGraph::out_neighbors(std::size_t v) const {
  check_index(v);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < size(); ++j)
    if (adjacency_[v * size() + j]) out.push_back(j);
  return out;
}

bool CommGraph::is_isolated(std::size_t v) const {
  check_index(v);
  for (std::size_t j = 0; j < size(); ++j)
    if (adjacency_[v * size() + j] || adjacency_[j * size() + v]) return false;
  return true;
}

CommGraph visible_subgraph(const CommGraph& g, const std::vector<bool>& visible) {
  if (visible.size() != g.size()) throw std::invalid_argument("visibility mask size mismatch");
  CommGraph out(g.agents());
  out.meta = g.meta;
  for (auto [a, b] : g.edges())
    if (visible[a] && visible[b]) out.add_edge(a, b);
  return out;
}

std::optional<std::vector<std::size_t>> find_cycle(const CommGraph& g) {
  const auto n = g.size();
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> color(n, 0);
  std::vector<std::size_t> stack;
  std::optional<std::vector<std::size_t>> found;

  std::function<bool(std::size_t)> dfs = [&](std::size_t v) {
    color[v] = 1;
    stack.push_back(v);
    for (auto w : g.out_neighbors(v)) {
      if (color[w] == 1) {
        auto it = std::find(stack.begin(), stack.end(), w);
        found = std::vector<std::size_t>(it, stack.end());
        return true;
      }
      if (color[w] == 0 && dfs(w)) return true;
    }
    stack.pop_back();
    color[v] = 2;
    return false;
  };

  for (std::size_t v = 0; v < n; ++v) {
    if (color[v] == 0 && dfs(v)) return found;
  }
  return std::nullopt;
}

std::vector<std::size_t> topological_sort(const CommGraph& g) {
  const auto n = g.size();
  std::vector<std::size_t> indegree(n, 0);
  for (auto [a, b] : g.edges()) ++indegree[b];

  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push(v);

  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto w : g.out_neighbors(v))
      if (--indegree[w] == 0) ready.push(w);
  }
  if (order.size() != n) {
    auto cycle = find_cycle(g);
    throw CycleError(cycle.value_or(std::vector<std::size_t>{}));
  }
  return order;
}

bool is_acyclic(const CommGraph& g) { return !find_cycle(g).has_value(); }

double effective_size(const CommGraph& g, std::size_t node, Direction direction) {
  if (node >= g.size()) throw std::out_of_range("effective_size: node index out of range");
  const auto hood = direction == Direction::in ? g.in_neighbors(node) : g.out_neighbors(node);
  if (hood.empty()) return 0.0;
  std::size_t redundant = 0;
  for (auto j : hood)
    for (auto q : hood)
      if (j != q && g.has_edge(j, q) && g.role(j) == g.role(q)) ++redundant;
  const auto size = static_cast<double>(hood.size());
  return size - static_cast<double>(redundant) / size;
}

double combined_effective_size(const CommGraph& g, std::size_t node, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
  return effective_size(g, node, Direction::in) * (1.0 - beta) +
         effective_size(g, node, Direction::out) * beta;
}

std::vector<double> combined_effective_sizes(const CommGraph& g, double beta) {
  std::vector<double> out(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) out[v] = combined_effective_size(g, v, beta);
  return out;
}

std::string to_string(TopologyFamily family) {
  switch (family) {
    case TopologyFamily::fully_connected: return "fully_connected";
    case TopologyFamily::mesh: return "mesh";
    case TopologyFamily::star: return "star";
    case TopologyFamily::layered: return "layered";
    case TopologyFamily::random: return "random";
  }
  return "unknown";
}

TopologyFamily parse_family(const std::string& name) {
  for (auto f : all_families())
    if (to_string(f) == name) return f;
  throw std::invalid_argument("unknown topology family: " + name);
}

const std::vector<TopologyFamily>& all_families() {
  static const std::vector<TopologyFamily> families{
      TopologyFamily::fully_connected, TopologyFamily::mesh, TopologyFamily::star,
      TopologyFamily::layered, TopologyFamily::random};
  return families;
}

CommGraph baseline_topology(TopologyFamily family, std::size_t n, const RoleVocab& role_pool,
                            std::uint64_t seed, double edge_probability) {
  if (n < 2) throw std::invalid_argument("baseline topologies need at least 2 agents");
  if (role_pool.size() == 0) throw VocabularyError("empty role pool");
  Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(family), n});

  std::vector<std::size_t> roles(n);
  for (auto& r : roles) r = uniform_index(rng, role_pool.size());
  CommGraph g(n, role_pool, roles);
  g.meta["family"] = to_string(family);

  switch (family) {
    case TopologyFamily::fully_connected:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) g.add_edge(a, b);
      break;
    case TopologyFamily::mesh: {
      // Row-major grid, neighbours joined right and down.
      const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      for (std::size_t v = 0; v < n; ++v) {
        if ((v + 1) % cols != 0 && v + 1 < n) g.add_edge(v, v + 1);
        if (v + cols < n) g.add_edge(v, v + cols);
      }
      break;
    }
    case TopologyFamily::star:
      for (std::size_t v = 1; v < n; ++v) g.add_edge(0, v);
      break;
    case TopologyFamily::layered: {
      // Layers of width two, fully connected between consecutive layers.
      constexpr std::size_t width = 2;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          if (b / width == a / width + 1) g.add_edge(a, b);
      break;
    }
    case TopologyFamily::random:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
          if (uniform01(rng) < edge_probability) g.add_edge(a, b);
      break;
  }
  return g;
}

DagProjection dag_project(const CommGraph& g, const EdgeScores& scores) {
  DagProjection out{g, {}};
  auto score_of = [&](const Edge& e) {
    auto it = scores.find(e);
    if (it == scores.end()) {
      throw std::invalid_argument("dag_project: no score for edge " + std::to_string(e.first) +
                                  "->" + std::to_string(e.second));
    }
    return it->second;
  };
  for (const auto& e : g.edges()) score_of(e);

  while (auto cycle = find_cycle(out.graph)) {
    const auto& c = *cycle;
    Edge weakest{c.back(), c.front()};
    for (std::size_t i = 0; i < c.size(); ++i) {
      Edge e{c[i], c[(i + 1) % c.size()]};
      const double s = score_of(e);
      const double w = score_of(weakest);
      if (s < w || (s == w && e < weakest)) weakest = e;
    }
    out.graph.remove_edge(weakest.first, weakest.second);
    out.removed.push_back(weakest);
  }

  // Greedy removal can over-cut; put back whatever no longer closes a cycle.
  auto candidates = out.removed;
  std::stable_sort(candidates.begin(), candidates.end(), [&](const Edge& a, const Edge& b) {
    return score_of(a) > score_of(b);
  });
  std::vector<Edge> kept_removed;
  for (const auto& e : candidates) {
    out.graph.add_edge(e.first, e.second);
    if (!is_acyclic(out.graph)) {
      out.graph.remove_edge(e.first, e.second);
      kept_removed.push_back(e);
    }
  }
  std::sort(kept_removed.begin(), kept_removed.end());
  out.removed = std::move(kept_removed);
  return out;
}

std::vector<std::size_t> participating_agents(const CommGraph& g) {
  std::vector<std::size_t> out;
  if (g.edge_count() == 0) {
    for (std::size_t v = 0; v < g.size(); ++v) out.push_back(v);
    return out;
  }
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!g.is_isolated(v)) out.push_back(v);
  return out;
}

GraphStats graph_stats(const CommGraph& g, double beta) {
  GraphStats s;
  const auto n = g.size();
  if (n >= 2) {
    s.density = static_cast<double>(g.edge_count()) / static_cast<double>(n * (n - 1));
  }
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (g.is_isolated(v)) continue;
    ++s.active_size;
    total += combined_effective_size(g, v, beta);
  }
  if (s.active_size > 0) s.mean_effective_size = total / static_cast<double>(s.active_size);
  return s;
}

std::vector<std::vector<bool>> reachability(const CommGraph& g) {
  const auto n = g.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> frontier = g.out_neighbors(s);
    while (!frontier.empty()) {
      const auto v = frontier.back();
      frontier.pop_back();
      if (reach[s][v]) continue;
      reach[s][v] = true;
      for (auto w : g.out_neighbors(v))
        if (!reach[s][w]) frontier.push_back(w);
    }
  }
  return reach;
}

std::string to_dot(const CommGraph& g, const std::string& name) {
  std::string out = "digraph \"" + name + "\" {\n  rankdir=LR;\n";
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!g.is_isolated(v)) out += "  a" + std::to_string(v) + " [label=\"" + std::to_string(v) + ": " + g.agent(v).role.label + "\"];\n";
  for (auto [a, b] : g.edges()) out += "  a" + std::to_string(a) + " -> a" + std::to_string(b) + ";\n";
  return out + "}\n";
}

nlohmann::json serialize(const CommGraph& g) {
  nlohmann::json doc;
  doc["n"] = g.size();
  auto roles = nlohmann::json::array();
  auto agents = nlohmann::json::array();
  for (const auto& a : g.agents()) {
    roles.push_back(a.role.label);
    agents.push_back({{"id", a.id}, {"base", a.base}, {"state", a.state}, {"plugins", a.plugins}});
  }
  doc["roles"] = roles;
  auto edges = nlohmann::json::array();
  for (auto [a, b] : g.edges()) edges.push_back({a, b});
  doc["edges"] = edges;
  doc["meta"] = g.meta;
  doc["meta"]["agents"] = agents;
  return doc;
}

CommGraph deserialize(const nlohmann::json& doc, const RoleVocab& vocab) {
  if (!doc.is_object()) throw FormatError("topology document must be an object");
  for (const char* key : {"n", "roles", "edges"}) {
    if (!doc.contains(key)) throw FormatError(std::string("topology document missing field '") + key + "'");
  }
  if (!doc["n"].is_number_unsigned() && !(doc["n"].is_number_integer() && doc["n"].get<long long>() >= 0)) {
    throw FormatError("field 'n' must be a non-negative integer");
  }
  const auto n = doc["n"].get<std::size_t>();
  const auto& roles = doc["roles"];
  if (!roles.is_array() || roles.size() != n) throw FormatError("field 'roles' must be an array of length n");

  nlohmann::json meta = doc.value("meta", nlohmann::json::object());
  if (!meta.is_object()) throw FormatError("field 'meta' must be an object");
  nlohmann::json agent_meta = meta.contains("agents") ? meta["agents"] : nlohmann::json();
  meta.erase("agents");
  if (!agent_meta.is_null() && (!agent_meta.is_array() || agent_meta.size() != n)) {
    throw FormatError("meta.agents must be an array of length n");
  }

  std::vector<AgentSpec> agents(n);
  std::set<long long> ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (!roles[i].is_string()) throw FormatError("role labels must be strings");
    agents[i].id = i;
    agents[i].role = vocab.find(roles[i].get<std::string>());
    if (!agent_meta.is_null()) {
      const auto& am = agent_meta[i];
      if (am.contains("id")) {
        const auto id = am["id"].get<long long>();
        if (!ids.insert(id).second) throw FormatError("duplicate agent id " + std::to_string(id));
        if (id != static_cast<long long>(i)) throw FormatError("agent id must equal its position");
      }
      agents[i].base = am.value("base", agents[i].base);
      agents[i].state = am.value("state", std::string{});
      agents[i].plugins = am.value("plugins", std::vector<std::string>{});
    }
  }
  CommGraph g(std::move(agents));
  g.meta = std::move(meta);

  const auto& edges = doc["edges"];
  if (!edges.is_array()) throw FormatError("field 'edges' must be an array");
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw FormatError("each edge must be a [from, to] integer pair");
    }
    const auto a = e[0].get<long long>();
    const auto b = e[1].get<long long>();
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
      throw FormatError("edge endpoint out of range");
    }
    if (a == b) throw FormatError("self-loop on node " + std::to_string(a));
    if (g.has_edge(a, b)) throw FormatError("duplicate edge");
    g.add_edge(a, b);
  }
  return g;
}

}  // namespace topodiff
