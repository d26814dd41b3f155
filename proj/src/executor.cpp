#include "topodiff/executor.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace topodiff {

std::size_t whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string word;
  while (in >> word) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Answers

namespace {

std::string trim(const std::string& s) {
  const auto* ws = " \t\r\n\f\v";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

// "Answer:" lines of a text, in order of appearance.
std::vector<std::string> answer_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.rfind("Answer:", 0) == 0) out.push_back(trim(t.substr(7)));
  }
  return out;
}

// Modal normalised value; ties go to the earliest first occurrence.
std::optional<std::string> modal(const std::vector<std::string>& values) {
  if (values.empty()) return std::nullopt;
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> count;
  for (const auto& v : values) {
    const auto k = normalize_answer(v);
    if (count[k]++ == 0) keys.push_back(k);
  }
  std::string best = keys.front();
  for (const auto& k : keys)
    if (count[k] > count[best]) best = k;
  return best;
}

}  // namespace

std::string normalize_answer(const std::string& text) {
  auto t = trim(text);
  while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back()))) t.pop_back();
  t = trim(t);
  for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return t;
}

std::string extract_answer(const std::string& response) {
  const auto lines = answer_lines(response);
  return lines.empty() ? response : lines.back();
}

std::string aggregate(const std::vector<AgentAnswer>& responses, Aggregation strategy) {
  if (responses.empty()) throw ExecutionError("aggregation over an empty response set");
  switch (strategy) {
    case Aggregation::majority_vote: {
      std::vector<std::string> answers;
      for (const auto& r : responses) answers.push_back(extract_answer(r.response));
      return *modal(answers);
    }
    case Aggregation::last_agent:
      return responses.back().response;
    case Aggregation::consolidate:
      break;
  }
  throw ExecutionError("consolidate aggregation needs a decider backend; run it through execute()");
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::majority_vote: return "majority_vote";
    case Aggregation::consolidate: return "consolidate";
    case Aggregation::last_agent: return "last_agent";
  }
  return "?";
}

Aggregation parse_aggregation(const std::string& name) {
  if (name == "majority_vote") return Aggregation::majority_vote;
  if (name == "consolidate") return Aggregation::consolidate;
  if (name == "last_agent") return Aggregation::last_agent;
  throw std::invalid_argument("unknown aggregation '" + name + "' (majority_vote, consolidate, last_agent)");
}

// ---------------------------------------------------------------------------
// Mocks

std::string to_string(MockMode m) {
  switch (m) {
    case MockMode::echo: return "echo";
    case MockMode::role_scripted: return "role_scripted";
    case MockMode::liar: return "liar";
  }
  return "?";
}

MockMode parse_mock_mode(const std::string& name) {
  if (name == "echo") return MockMode::echo;
  if (name == "role_scripted") return MockMode::role_scripted;
  if (name == "liar") return MockMode::liar;
  throw std::invalid_argument("unknown mock mode '" + name + "' (echo, role_scripted, liar)");
}

std::string MockScript::answer_for(const std::string& role) const {
  auto it = answers.find(role);
  return it == answers.end() ? fallback : it->second;
}

nlohmann::json to_json(const MockScript& s) { return {{"answers", s.answers}, {"fallback", s.fallback}}; }

MockScript mock_script_from_json(const nlohmann::json& doc) {
  try {
    MockScript s;
    s.answers = doc.at("answers").get<std::map<std::string, std::string>>();
    s.fallback = doc.value("fallback", std::string{});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed mock script: ") + e.what());
  }
}

std::string lie_about(const std::string& answer, std::uint64_t seed) {
  const auto t = trim(answer);
  const bool numeric = !t.empty() && (std::isdigit(static_cast<unsigned char>(t[0])) || (t[0] == '-' && t.size() > 1)) &&
                       std::all_of(t.begin() + 1, t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  if (numeric) {
    try {
      return std::to_string(std::stoll(t) + 1 + static_cast<long long>(seed % 9));
    } catch (const std::out_of_range&) {
    }
  }
  return "not " + t;
}

MockBackend::MockBackend(MockMode mode, std::string role, MockScript script, std::uint64_t seed)
    : mode_(mode), role_(std::move(role)), script_(std::move(script)), seed_(seed) {}

std::string MockBackend::identifier() const { return "mock:" + to_string(mode_) + ":" + role_; }

AgentResponse MockBackend::invoke(const std::string& system_prompt, const std::string& user_prompt) {
  if (system_prompt.empty() && user_prompt.empty()) throw ExecutionError("mock invoked with empty prompts");
  AgentResponse r;
  if (mode_ == MockMode::echo) {
    r.text = user_prompt;
  } else {
    auto answer = script_.answer_for(role_);
    if (answer == kFollowMajority) answer = modal(answer_lines(user_prompt)).value_or(script_.fallback);
    if (mode_ == MockMode::liar) answer = lie_about(answer, seed_);
    r.text = "Answer: " + answer;
  }
  r.prompt_tokens = whitespace_tokens(system_prompt) + whitespace_tokens(user_prompt);
  r.completion_tokens = whitespace_tokens(r.text);
  return r;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') throw ExecutionError(config_.api_key_env + " is not set");
  api_key_ = key;
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw ExecutionError("base URL needs a scheme: " + config_.base_url);
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  origin_ = config_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/v1/chat/completions";
  if (config_.model.empty()) throw ExecutionError("HTTP backend needs a model name");
}

nlohmann::json HttpBackend::request_body(const std::string& system_prompt, const std::string& user_prompt) const {
  return {{"model", config_.model},
          {"messages",
           {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_prompt}}}},
          {"temperature", settings.temperature},
          {"max_tokens", settings.max_tokens}};
}

AgentResponse HttpBackend::parse_response(const std::string& body) {
  try {
    const auto doc = nlohmann::json::parse(body);
    AgentResponse r;
    r.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    const auto& usage = doc.at("usage");
    const auto p = usage.at("prompt_tokens").get<long long>();
    const auto c = usage.at("completion_tokens").get<long long>();
    if (p < 0 || c < 0) throw ExecutionError("provider reported negative token counts");
    r.prompt_tokens = static_cast<std::size_t>(p);
    r.completion_tokens = static_cast<std::size_t>(c);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ExecutionError(std::string("malformed provider payload: ") + e.what());
  }
}

AgentResponse HttpBackend::invoke(const std::string& system_prompt, const std::string& user_prompt) {
  if (system_prompt.empty() && user_prompt.empty()) throw ExecutionError("empty prompts");
  const auto body = request_body(system_prompt, user_prompt).dump();
  httplib::Client client(origin_);
  client.set_bearer_token_auth(api_key_);
  client.set_connection_timeout(static_cast<time_t>(config_.timeout_s));
  client.set_read_timeout(static_cast<time_t>(config_.timeout_s));

  std::string last_error;
  std::size_t delay = config_.backoff_ms;
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw BackendError("HTTP " + std::to_string(res->status) + " from " + origin_ + path_);
    return parse_response(res->body);
  }
  throw BackendError("request to " + origin_ + path_ + " failed after " + std::to_string(config_.max_retries + 1) +
                     " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Scheduling and prompts

Schedule plan_schedule(const CommGraph& g) {
  Schedule s;
  const auto order = topological_sort(g);
  s.depth.assign(g.size(), 0);
  s.active.assign(g.size(), false);
  for (auto v : participating_agents(g)) s.active[v] = true;
  for (auto v : order) {
    if (!s.active[v]) continue;
    s.order.push_back(v);
    for (auto u : g.in_neighbors(v)) s.depth[v] = std::max(s.depth[v], s.depth[u] + 1);
  }
  for (auto v : s.order) {
    if (s.levels.size() <= s.depth[v]) s.levels.resize(s.depth[v] + 1);
    s.levels[s.depth[v]].push_back(v);
  }
  return s;
}

std::string role_instruction(const std::string& role) {
  static const std::map<std::string, std::string> text{
      {"Solver", "Work through the task step by step and commit to a final answer."},
      {"Critic", "Look for mistakes in the answers you receive and give a corrected final answer."},
      {"Verifier", "Check the answers you receive against the task and keep only what holds up."},
      {"Planner", "Break the task into steps and say how the team should approach it."},
      {"Decider", "Weigh the answers you receive and settle on one final answer."},
  };
  auto it = text.find(role);
  return it == text.end() ? "Contribute your expertise to the task." : it->second;
}

Prompts assemble_prompt(const AgentSpec& agent, const QueryContext& q, const std::vector<NeighborMessage>& messages,
                        std::size_t round) {
  Prompts p;
  p.system = "You are the " + agent.role.label + " agent of a collaborating team. " +
             role_instruction(agent.role.label) + " End with a line of the form 'Answer: <answer>'.";
  if (!agent.state.empty()) p.system += "\nState: " + agent.state;
  p.user = q.text;
  if (!messages.empty()) {
    p.user += "\n\nMessages from your teammates (round " + std::to_string(round) + "):";
    for (const auto& m : messages)
      p.user += "\n\n[Agent " + std::to_string(m.agent) + ", " + m.role + "]\n" + m.text;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Job {
  std::size_t agent;
  Prompts prompts;
  AgentResponse response;
  std::string error;
};

void run_jobs(std::vector<Job>& jobs, const std::vector<BackendPtr>& backends, bool parallel) {
  auto run = [&](Job& j) {
    try {
      j.response = backends[j.agent]->invoke(j.prompts.system, j.prompts.user);
    } catch (const std::exception& e) {
      j.error = e.what();
    }
  };
  bool concurrent = parallel && jobs.size() > 1;
  for (const auto& j : jobs)
    if (backends[j.agent]->single_flight()) concurrent = false;
  if (!concurrent) {
    for (auto& j : jobs) run(j);
    return;
  }
  std::vector<std::future<void>> pending;
  for (auto& j : jobs) pending.push_back(std::async(std::launch::async, [&run, &j] { run(j); }));
  for (auto& f : pending) f.get();
}

Invocation record(const Job& j, std::size_t round, std::size_t index, const BackendPtr& backend) {
  Invocation inv;
  inv.round = round;
  inv.agent = j.agent;
  inv.index = index;
  inv.backend = backend->identifier();
  inv.system_prompt = j.prompts.system;
  inv.user_prompt = j.prompts.user;
  inv.error = j.error;
  if (j.error.empty()) {
    inv.response = j.response.text;
    inv.prompt_tokens = j.response.prompt_tokens;
    inv.completion_tokens = j.response.completion_tokens;
  }
  return inv;
}

}  // namespace

ExecutionTrace execute(const CommGraph& g, const QueryContext& q, const std::vector<BackendPtr>& backends,
                       const ExecutionConfig& config) {
  if (config.rounds == 0) throw ExecutionError("execution needs at least one round");
  if (backends.size() != g.size())
    throw ExecutionError("expected " + std::to_string(g.size()) + " backends, got " + std::to_string(backends.size()));
  for (std::size_t v = 0; v < backends.size(); ++v)
    if (!backends[v]) throw ExecutionError("no backend for agent " + std::to_string(v));
  const auto schedule = plan_schedule(g);

  ExecutionTrace trace;
  trace.aggregation = to_string(config.aggregation);
  if (schedule.order.empty()) {
    trace.error = "graph has no agents";
    throw ExecutionFailure(trace.error, trace);
  }
  std::vector<std::size_t> position(g.size(), 0);
  for (std::size_t i = 0; i < schedule.order.size(); ++i) position[schedule.order[i]] = i;

  std::vector<std::optional<std::string>> previous(g.size()), current(g.size());
  std::size_t next_index = 0;
  for (std::size_t round = 1; round <= config.rounds; ++round) {
    trace.schedule.push_back(schedule.order);
    current.assign(g.size(), std::nullopt);
    std::vector<Invocation> round_records(schedule.order.size());
    for (const auto& level : schedule.levels) {
      std::vector<Job> jobs;
      for (auto v : level) {
        auto sources = g.in_neighbors(v);
        std::sort(sources.begin(), sources.end(), [&](auto a, auto b) { return position[a] < position[b]; });
        std::vector<NeighborMessage> messages;
        const auto& pool = config.stale_neighbors ? previous : current;
        if (!(config.stale_neighbors && round == 1)) {
          for (auto u : sources) {
            if (!pool[u]) throw ExecutionError("missing response from agent " + std::to_string(u) + " for agent " +
                                               std::to_string(v) + " in round " + std::to_string(round));
            messages.push_back({u, g.agent(u).role.label, *pool[u]});
          }
        }
        jobs.push_back({v, assemble_prompt(g.agent(v), q, messages, round), {}, {}});
      }
      run_jobs(jobs, backends, config.parallel);
      std::string failure;
      for (const auto& j : jobs) {
        const auto pos = position[j.agent];
        round_records[pos] = record(j, round, next_index + pos, backends[j.agent]);
        if (j.error.empty()) current[j.agent] = j.response.text;
        else if (failure.empty())
          failure = "agent " + std::to_string(j.agent) + " failed in round " + std::to_string(round) + ": " + j.error;
      }
      if (!failure.empty()) {
        for (auto& r : round_records)
          if (!r.backend.empty()) trace.invocations.push_back(r);
        trace.error = failure;
        throw ExecutionFailure(failure, trace);
      }
    }
    for (auto& r : round_records) trace.invocations.push_back(std::move(r));
    next_index += schedule.order.size();
    previous = current;
  }

  std::vector<AgentAnswer> finals;
  for (auto v : schedule.order) finals.push_back({v, *current[v]});
  if (config.aggregation != Aggregation::consolidate) {
    trace.solution = aggregate(finals, config.aggregation);
    return trace;
  }

  // Consolidation: the last Decider in schedule order, else the last agent, reads every final response.
  std::size_t decider = schedule.order.back();
  for (auto v : schedule.order)
    if (g.agent(v).role.label == "Decider") decider = v;
  std::vector<NeighborMessage> all;
  for (const auto& f : finals) all.push_back({f.agent, g.agent(f.agent).role.label, f.response});
  std::vector<Job> jobs{{decider, assemble_prompt(g.agent(decider), q, all, config.rounds + 1), {}, {}}};
  run_jobs(jobs, backends, false);
  trace.invocations.push_back(record(jobs[0], config.rounds + 1, next_index, backends[decider]));
  if (!jobs[0].error.empty()) {
    trace.error = "consolidation by agent " + std::to_string(decider) + " failed: " + jobs[0].error;
    throw ExecutionFailure(trace.error, trace);
  }
  trace.solution = jobs[0].response.text;
  return trace;
}

TokenTotals account_tokens(const ExecutionTrace& trace) {
  TokenTotals t;
  for (const auto& inv : trace.invocations) {
    t.prompt += inv.prompt_tokens;
    t.completion += inv.completion_tokens;
    auto& a = t.per_agent[inv.agent];
    a.first += inv.prompt_tokens;
    a.second += inv.completion_tokens;
  }
  return t;
}

nlohmann::json trace_to_json(const ExecutionTrace& trace) {
  nlohmann::json inv = nlohmann::json::array();
  for (const auto& i : trace.invocations) {
    inv.push_back({{"round", i.round},
                   {"agent", i.agent},
                   {"index", i.index},
                   {"backend", i.backend},
                   {"system_prompt", i.system_prompt},
                   {"user_prompt", i.user_prompt},
                   {"response", i.response},
                   {"prompt_tokens", i.prompt_tokens},
                   {"completion_tokens", i.completion_tokens},
                   {"error", i.error}});
  }
  const auto totals = account_tokens(trace);
  return {{"schedule", trace.schedule},
          {"invocations", inv},
          {"solution", trace.solution},
          {"aggregation", trace.aggregation},
          {"error", trace.error},
          {"tokens", {{"prompt", totals.prompt}, {"completion", totals.completion}}}};
}

ExecutionTrace trace_from_json(const nlohmann::json& doc) {
  try {
    ExecutionTrace t;
    t.schedule = doc.at("schedule").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& i : doc.at("invocations")) {
      Invocation inv;
      inv.round = i.at("round").get<std::size_t>();
      inv.agent = i.at("agent").get<std::size_t>();
      inv.index = i.at("index").get<std::size_t>();
      inv.backend = i.at("backend").get<std::string>();
      inv.system_prompt = i.at("system_prompt").get<std::string>();
      inv.user_prompt = i.at("user_prompt").get<std::string>();
      inv.response = i.at("response").get<std::string>();
      inv.prompt_tokens = i.at("prompt_tokens").get<std::size_t>();
      inv.completion_tokens = i.at("completion_tokens").get<std::size_t>();
      inv.error = i.at("error").get<std::string>();
      t.invocations.push_back(std::move(inv));
    }
    t.solution = doc.at("solution").get<std::string>();
    t.aggregation = doc.at("aggregation").get<std::string>();
    t.error = doc.at("error").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trace: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenarios and attacks

std::vector<std::size_t> liar_targets(const CommGraph& g, std::size_t count) {
  const auto schedule = plan_schedule(g);
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < g.size() && out.size() < count; ++v)
    if (schedule.active[v] && g.agent(v).role.label != "Decider") out.push_back(v);
  return out;
}

std::vector<BackendPtr> scripted_backends(const CommGraph& g, const MockScript& script,
                                          const std::vector<std::size_t>& liars, std::uint64_t seed) {
  std::vector<BackendPtr> out;
  for (std::size_t v = 0; v < g.size(); ++v) {
    const bool liar = std::find(liars.begin(), liars.end(), v) != liars.end();
    out.push_back(std::make_shared<MockBackend>(liar ? MockMode::liar : MockMode::role_scripted,
                                                g.agent(v).role.label, script, seed));
  }
  return out;
}

nlohmann::json scenario_to_json(const MockScenario& s) {
  return {{"scenario_id", s.scenario_id},
          {"query", s.query},
          {"truth", s.truth},
          {"graph", serialize(s.graph)},
          {"script", to_json(s.script)}};
}

MockScenario scenario_from_json(const nlohmann::json& doc, const RoleVocab& vocab) {
  try {
    MockScenario s;
    s.scenario_id = doc.at("scenario_id").get<std::string>();
    s.query = doc.at("query").get<std::string>();
    s.truth = doc.at("truth").get<std::string>();
    s.graph = deserialize(doc.at("graph"), vocab);
    s.script = mock_script_from_json(doc.at("script"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scenario: ") + e.what());
  }
}

std::vector<MockScenario> liar_scenarios(std::size_t count, std::uint64_t seed) {
  const RoleVocab vocab = RoleVocab::standard();
  const std::vector<std::string> workers{"Solver", "Critic", "Verifier", "Planner"};
  Rng rng = derive_rng(seed, {0x11A5});
  std::vector<MockScenario> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto roles = workers;
    for (std::size_t k = roles.size(); k > 1; --k) std::swap(roles[k - 1], roles[uniform_index(rng, k)]);
    std::vector<std::size_t> ids;
    for (const auto& r : roles) ids.push_back(vocab.find(r).index);
    ids.push_back(vocab.find("Decider").index);

    MockScenario s;
    s.scenario_id = "liar-" + std::to_string(i);
    const auto a = 2 + uniform_index(rng, 20), b = 2 + uniform_index(rng, 20);
    s.query = "What is " + std::to_string(a) + " times " + std::to_string(b) + "?";
    s.truth = std::to_string(a * b);
    s.graph = CommGraph(5, vocab, ids);
    s.graph.add_edge(0, 2);
    s.graph.add_edge(1, 2);
    s.graph.add_edge(3, 4);
    if (uniform01(rng) < 0.5) s.graph.add_edge(3, 2);  // outvoted two to one
    s.script.fallback = s.truth;
    for (std::size_t v = 0; v < 4; ++v) s.script.answers[roles[v]] = v == 2 ? kFollowMajority : s.truth;
    s.script.answers["Decider"] = kFollowMajority;
    out.push_back(std::move(s));
  }
  return out;
}

NoisyGraph add_structure_noise(const CommGraph& g, double fraction, Rng& rng) {
  if (!(fraction >= 0.0)) throw std::invalid_argument("noise fraction must be non-negative");
  NoisyGraph out;
  out.noisy = g;
  const auto original = g.edges();
  std::size_t target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(original.size())));
  if (target == 0 && fraction > 0.0 && !original.empty()) target = 1;
  std::vector<Edge> candidates;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = 0; b < g.size(); ++b)
      if (a != b && !g.has_edge(a, b)) candidates.push_back({a, b});
  for (std::size_t k = 0; k < target && k < candidates.size(); ++k) {
    std::swap(candidates[k], candidates[k + uniform_index(rng, candidates.size() - k)]);
    out.noisy.add_edge(candidates[k].first, candidates[k].second);
    ++out.added;
  }
  EdgeScores scores;
  for (const auto& e : out.noisy.edges()) scores[e] = g.has_edge(e.first, e.second) ? 1.0 : 0.5;
  auto projection = dag_project(out.noisy, scores);
  out.projected = std::move(projection.graph);
  out.removed = std::move(projection.removed);
  return out;
}

double scenario_utility(const std::string& solution, const std::string& truth) {
  return normalize_answer(extract_answer(solution)) == normalize_answer(truth) ? 1.0 : 0.0;
}

double mock_token_cost(const CommGraph& g, const QueryContext& q, double budget, std::size_t rounds) {
  if (!(budget > 0.0)) throw std::invalid_argument("token budget must be positive");
  if (g.size() == 0) return 0.0;
  MockScript script;
  script.fallback = "done";
  ExecutionConfig config;
  config.rounds = rounds;
  config.parallel = false;
  const auto trace = execute(g, q, scripted_backends(g, script), config);
  return static_cast<double>(account_tokens(trace).total()) / budget;
}

}  // namespace topodiff
