#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "topodiff/graph.hpp"
#include "topodiff/query.hpp"
#include "topodiff/rng.hpp"

namespace topodiff {

class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport-level failure of a remote backend, after retries.
class BackendError : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
};

struct AgentResponse {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct GenerationSettings {
  double temperature = 0.2;
  std::size_t max_tokens = 1000;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual AgentResponse invoke(const std::string& system_prompt, const std::string& user_prompt) = 0;
  virtual std::string identifier() const = 0;
  // True when concurrent invoke() calls are unsafe; the executor then serialises.
  virtual bool single_flight() const { return false; }

  GenerationSettings settings;
};

using BackendPtr = std::shared_ptr<AgentBackend>;

std::size_t whitespace_tokens(const std::string& text);

// ---------------------------------------------------------------------------
// Mock backends

enum class MockMode { echo, role_scripted, liar };
std::string to_string(MockMode m);
MockMode parse_mock_mode(const std::string& name);

// Scripted answers per role label. The special answer "@majority" makes the
// agent repeat the most common "Answer:" line among the messages it receives,
// falling back to `fallback` when it receives none.
struct MockScript {
  std::map<std::string, std::string> answers;
  std::string fallback;

  std::string answer_for(const std::string& role) const;
  friend bool operator==(const MockScript&, const MockScript&) = default;
};

nlohmann::json to_json(const MockScript& s);
MockScript mock_script_from_json(const nlohmann::json& doc);

inline constexpr const char* kFollowMajority = "@majority";

// A liar's version of a truthful answer: integers are shifted by 1 + seed % 9,
// anything else is prefixed with "not ".
std::string lie_about(const std::string& answer, std::uint64_t seed = 0);

class MockBackend : public AgentBackend {
 public:
  MockBackend(MockMode mode, std::string role, MockScript script = {}, std::uint64_t seed = 0);

  AgentResponse invoke(const std::string& system_prompt, const std::string& user_prompt) override;
  std::string identifier() const override;

  MockMode mode() const { return mode_; }

 private:
  MockMode mode_;
  std::string role_;
  MockScript script_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible chat-completions backend

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string model;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 500;  // doubled after each failed attempt
  std::size_t timeout_s = 60;
  std::string api_key_env = "RADAR_API_KEY";
};

class HttpBackend : public AgentBackend {
 public:
  // Throws ExecutionError when the API key variable is unset or the URL is malformed.
  explicit HttpBackend(HttpBackendConfig config);

  AgentResponse invoke(const std::string& system_prompt, const std::string& user_prompt) override;
  std::string identifier() const override { return "http:" + config_.model; }

  // Request body for one invocation.
  nlohmann::json request_body(const std::string& system_prompt, const std::string& user_prompt) const;
  // Parses a provider response; throws ExecutionError on a malformed payload.
  static AgentResponse parse_response(const std::string& body);

 private:
  HttpBackendConfig config_;
  std::string api_key_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // prefix + /v1/chat/completions
};

// ---------------------------------------------------------------------------
// Scheduling and prompts

struct Schedule {
  std::vector<std::size_t> order;               // topological order of the active agents
  std::vector<std::size_t> depth;               // per node; 0 for inactive nodes
  std::vector<std::vector<std::size_t>> levels;  // active agents grouped by depth, each in order
  std::vector<bool> active;
};

// Throws CycleError on a cyclic graph. Isolated nodes are inactive unless
// the graph has no edges at all.
Schedule plan_schedule(const CommGraph& g);

struct Prompts {
  std::string system;
  std::string user;
};

struct NeighborMessage {
  std::size_t agent = 0;
  std::string role;
  std::string text;
};

std::string role_instruction(const std::string& role);

/// System prompt: role instruction plus the agent's state. User prompt: the
/// query text, followed by one headed block per received message in the
/// given order.
Prompts assemble_prompt(const AgentSpec& agent, const QueryContext& q, const std::vector<NeighborMessage>& messages,
                        std::size_t round);

// ---------------------------------------------------------------------------
// Execution

enum class Aggregation { majority_vote, consolidate, last_agent };
std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& name);

struct ExecutionConfig {
  std::size_t rounds = 1;  // K
  Aggregation aggregation = Aggregation::majority_vote;
  bool stale_neighbors = false;  // read in-neighbours' round k-1 responses instead of round k
  bool parallel = true;          // invoke agents of equal depth concurrently
};

struct Invocation {
  std::size_t round = 0;  // 1-based; rounds + 1 marks the consolidation call
  std::size_t agent = 0;
  std::size_t index = 0;  // global invocation index, assigned in schedule order
  std::string backend;
  std::string system_prompt;
  std::string user_prompt;
  std::string response;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::string error;
};

struct ExecutionTrace {
  std::vector<std::vector<std::size_t>> schedule;  // per round
  std::vector<Invocation> invocations;
  std::string solution;
  std::string aggregation;
  std::string error;  // empty on success
};

class ExecutionFailure : public ExecutionError {
 public:
  ExecutionFailure(const std::string& what, ExecutionTrace trace)
      : ExecutionError(what), trace_(std::move(trace)) {}
  const ExecutionTrace& trace() const { return trace_; }

 private:
  ExecutionTrace trace_;
};

// Backends are indexed by node. A backend failure is recorded in the trace
// and rethrown as ExecutionFailure carrying the partial trace.
ExecutionTrace execute(const CommGraph& g, const QueryContext& q, const std::vector<BackendPtr>& backends,
                       const ExecutionConfig& config = {});

// Trim, case-fold and strip trailing punctuation.
std::string normalize_answer(const std::string& text);
// Text after the last "Answer:" line, or the whole response.
std::string extract_answer(const std::string& response);

struct AgentAnswer {
  std::size_t agent = 0;
  std::string response;
};

/// Responses are in schedule order. majority_vote returns the normalised
/// modal answer, ties to the earliest; last_agent returns the final
/// response; consolidate needs the decider and is handled by execute().
std::string aggregate(const std::vector<AgentAnswer>& responses, Aggregation strategy);

struct TokenTotals {
  std::size_t prompt = 0;
  std::size_t completion = 0;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_agent;

  std::size_t total() const { return prompt + completion; }
};

TokenTotals account_tokens(const ExecutionTrace& trace);

nlohmann::json trace_to_json(const ExecutionTrace& trace);
ExecutionTrace trace_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Mock scenarios and attacks

// Lowest-index active agents whose role is not Decider.
std::vector<std::size_t> liar_targets(const CommGraph& g, std::size_t count = 2);

// One role-scripted mock per node; nodes in `liars` get liar mocks.
std::vector<BackendPtr> scripted_backends(const CommGraph& g, const MockScript& script,
                                          const std::vector<std::size_t>& liars = {}, std::uint64_t seed = 0);

struct MockScenario {
  std::string scenario_id;
  std::string query;
  std::string truth;
  CommGraph graph;
  MockScript script;
};

nlohmann::json scenario_to_json(const MockScenario& s);
MockScenario scenario_from_json(const nlohmann::json& doc, const RoleVocab& vocab);

// 1 when the normalised solution equals the normalised truth.
double scenario_utility(const std::string& solution, const std::string& truth);

/// Five-agent relay scenarios built so that the two liar targets (agents 0
/// and 1) feed a majority-following agent 2, while the Decider (agent 4,
/// last in schedule order) only hears the truthful agent 3.
std::vector<MockScenario> liar_scenarios(std::size_t count, std::uint64_t seed);

struct NoisyGraph {
  CommGraph noisy;      // with the extra edges, possibly cyclic
  CommGraph projected;  // after cycle removal
  std::size_t added = 0;
  std::vector<Edge> removed;
};

// Adds round(fraction * |E|) new directed edges between random distinct
// agents (at least one when the graph has edges), then removes cycles,
// dropping added edges before original ones.
NoisyGraph add_structure_noise(const CommGraph& g, double fraction, Rng& rng);

// Total tokens of one role-scripted mock execution divided by `budget`.
double mock_token_cost(const CommGraph& g, const QueryContext& q, double budget, std::size_t rounds = 1);

}  // namespace topodiff
