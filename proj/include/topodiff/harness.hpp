#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "topodiff/executor.hpp"
#include "topodiff/synthetic.hpp"
#include "topodiff/trainer.hpp"

namespace topodiff {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat TOML-style `key = value` text: quoted strings, integers, floats,
// booleans and single-line arrays; `#` starts a comment.
nlohmann::json parse_config_text(const std::string& text);
nlohmann::json load_config_file(const std::string& path);

// Everything a command needs beyond TrainConfig. Config files mix both sets
// of keys in one flat namespace.
struct RunConfig {
  TrainConfig train;

  std::size_t tasks = 50;
  double hard_fraction = 0.5;
  std::vector<std::size_t> sizes{3, 4};
  std::vector<std::string> families;  // empty selects every family
  double threshold = 0.5;             // dataset label: utility >= threshold

  std::string cost_model = "proxy";  // proxy: (|E| + active) / cost_normalizer; tokens: mock tokens / token_budget
  double token_budget = 1000.0;

  std::size_t rounds = 1;
  std::string aggregation = "majority_vote";
  bool stale_neighbors = false;
  std::string backend = "mock";  // mock or http
  std::string mock_mode = "role_scripted";
  std::string base_url = "https://api.openai.com";
  std::string model = "gpt-4o-mini";
  std::size_t max_retries = 3;

  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 keeps only the final one
  std::size_t samples = 4;           // generations per query for generate and evaluate
  double noise_fraction = 0.5;       // extra edges added by the structure_noise attack
  std::string embedding_table;       // optional precomputed query embeddings

  void validate() const;  // throws ConfigError naming the field
};

nlohmann::json to_json(const RunConfig& c);
// Unknown keys are rejected with the key named.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = {});

std::vector<TopologyFamily> resolved_families(const RunConfig& c);
ExecutionConfig execution_config(const RunConfig& c);

// Scores a graph against the synthetic task whose id matches the query.
Oracle make_task_oracle(const std::vector<SyntheticTask>& suite, const RunConfig& c);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);  // throws std::runtime_error if unreadable

}  // namespace topodiff
