#include "topodiff/harness.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

namespace topodiff {

// ---------------------------------------------------------------------------
// Config text

namespace {

std::string strip(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

// Removes a trailing comment that is not inside a quoted string.
std::string drop_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

nlohmann::json parse_scalar(const std::string& raw, const std::string& where) {
  const auto v = strip(raw);
  if (v.empty()) throw ConfigError(where + ": missing value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"' || v.front() == '\'') {
    if (v.size() < 2 || v.back() != v.front()) throw ConfigError(where + ": unterminated string");
    if (v.front() == '\'') return v.substr(1, v.size() - 2);
    try {
      return nlohmann::json::parse(v).get<std::string>();  // basic strings share JSON escapes
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where + ": bad string escape");
    }
  }
  std::string digits;
  for (char c : v)
    if (c != '_') digits += c;
  try {
    std::size_t used = 0;
    if (digits.find_first_of(".eE") == std::string::npos || digits.find_first_of("xX") != std::string::npos) {
      if (digits.front() == '-') {
        const long long x = std::stoll(digits, &used, 0);
        if (used == digits.size()) return x;
      } else {
        const unsigned long long x = std::stoull(digits, &used, 0);
        if (used == digits.size() && digits.front() != '+') return x;
        if (used == digits.size()) return x;
      }
    } else {
      const double x = std::stod(digits, &used);
      if (used == digits.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(where + ": cannot parse value '" + v + "'");
}

std::vector<std::string> split_array(const std::string& body, const std::string& where) {
  std::vector<std::string> parts;
  std::string cur;
  char quote = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (quote) {
      cur += c;
      if (c == '\\' && quote == '"' && i + 1 < body.size()) cur += body[++i];
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
      cur += c;
    } else if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c == '[' || c == ']') {
      throw ConfigError(where + ": nested arrays are not supported");
    } else {
      cur += c;
    }
  }
  if (quote) throw ConfigError(where + ": unterminated string");
  if (!strip(cur).empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

nlohmann::json parse_config_text(const std::string& text) {
  nlohmann::json doc = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto body = strip(drop_comment(line));
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(number);
    if (body.front() == '[') throw ConfigError(where + ": tables are not supported; use flat keys");
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = strip(body.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        throw ConfigError(where + ": invalid key '" + key + "'");
    if (doc.contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    const auto value = strip(body.substr(eq + 1));
    const auto field = where + " ('" + key + "')";
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ConfigError(field + ": arrays must close on the same line");
      auto arr = nlohmann::json::array();
      for (const auto& part : split_array(value.substr(1, value.size() - 2), field))
        arr.push_back(parse_scalar(part, field));
      doc[key] = arr;
    } else {
      doc[key] = parse_scalar(value, field);
    }
  }
  return doc;
}

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse_config_text(s.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid config field '" + field + "': " + why);
  };
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (tasks < 1) fail("tasks", "must be at least 1");
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) fail("hard_fraction", "must lie in [0, 1]");
  if (sizes.empty()) fail("sizes", "must list at least one size");
  for (auto s : sizes)
    if (s < 1) fail("sizes", "sizes must be positive");
  for (const auto& f : families) {
    try {
      parse_family(f);
    } catch (const std::exception&) {
      fail("families", "unknown family '" + f + "'");
    }
  }
  if (cost_model != "proxy" && cost_model != "tokens") fail("cost_model", "must be 'proxy' or 'tokens'");
  if (!(token_budget > 0.0)) fail("token_budget", "must be positive");
  if (rounds < 1) fail("rounds", "must be at least 1");
  try {
    parse_aggregation(aggregation);
  } catch (const std::exception&) {
    fail("aggregation", "must be majority_vote, consolidate or last_agent");
  }
  if (backend != "mock" && backend != "http") fail("backend", "must be 'mock' or 'http'");
  try {
    parse_mock_mode(mock_mode);
  } catch (const std::exception&) {
    fail("mock_mode", "must be echo, role_scripted or liar");
  }
  if (samples < 1) fail("samples", "must be at least 1");
  if (!(noise_fraction >= 0.0)) fail("noise_fraction", "must be non-negative");
}

nlohmann::json to_json(const RunConfig& c) {
  auto doc = to_json(c.train);
  doc.update(nlohmann::json{
      {"tasks", c.tasks},
      {"hard_fraction", c.hard_fraction},
      {"sizes", c.sizes},
      {"families", c.families},
      {"threshold", c.threshold},
      {"cost_model", c.cost_model},
      {"token_budget", c.token_budget},
      {"rounds", c.rounds},
      {"aggregation", c.aggregation},
      {"stale_neighbors", c.stale_neighbors},
      {"backend", c.backend},
      {"mock_mode", c.mock_mode},
      {"base_url", c.base_url},
      {"model", c.model},
      {"max_retries", c.max_retries},
      {"checkpoint_every", c.checkpoint_every},
      {"samples", c.samples},
      {"noise_fraction", c.noise_fraction},
      {"embedding_table", c.embedding_table},
  });
  return doc;
}

namespace {

[[noreturn]] void type_error(const std::string& key, const std::string& expected) {
  throw ConfigError("invalid config field '" + key + "': expected " + expected);
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) type_error(key, "true or false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) type_error(key, "a string");
    return v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    return v.get<T>();
  } else {
    if (!v.is_number()) type_error(key, "a number");
    return v.get<T>();
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig c) {
  if (!doc.is_object()) throw ConfigError("config must be a table of key = value pairs");
  const auto train_keys = to_json(TrainConfig{});
  nlohmann::json train_part = nlohmann::json::object();
  for (const auto& [key, v] : doc.items()) {
    if (train_keys.contains(key)) {
      train_part[key] = v;
      continue;
    }
    if (key == "tasks") c.tasks = get_as<std::size_t>(v, key);
    else if (key == "hard_fraction") c.hard_fraction = get_as<double>(v, key);
    else if (key == "sizes") {
      if (!v.is_array()) type_error(key, "an array of sizes");
      c.sizes.clear();
      for (const auto& s : v) c.sizes.push_back(get_as<std::size_t>(s, key));
    } else if (key == "families") {
      if (!v.is_array()) type_error(key, "an array of family names");
      c.families.clear();
      for (const auto& s : v) c.families.push_back(get_as<std::string>(s, key));
    } else if (key == "threshold") c.threshold = get_as<double>(v, key);
    else if (key == "cost_model") c.cost_model = get_as<std::string>(v, key);
    else if (key == "token_budget") c.token_budget = get_as<double>(v, key);
    else if (key == "rounds") c.rounds = get_as<std::size_t>(v, key);
    else if (key == "aggregation") c.aggregation = get_as<std::string>(v, key);
    else if (key == "stale_neighbors") c.stale_neighbors = get_as<bool>(v, key);
    else if (key == "backend") c.backend = get_as<std::string>(v, key);
    else if (key == "mock_mode") c.mock_mode = get_as<std::string>(v, key);
    else if (key == "base_url") c.base_url = get_as<std::string>(v, key);
    else if (key == "model") c.model = get_as<std::string>(v, key);
    else if (key == "max_retries") c.max_retries = get_as<std::size_t>(v, key);
    else if (key == "checkpoint_every") c.checkpoint_every = get_as<std::size_t>(v, key);
    else if (key == "samples") c.samples = get_as<std::size_t>(v, key);
    else if (key == "noise_fraction") c.noise_fraction = get_as<double>(v, key);
    else if (key == "embedding_table") c.embedding_table = get_as<std::string>(v, key);
    else throw ConfigError("unknown config field '" + key + "'");
  }
  try {
    c.train = train_config_from_json(train_part, c.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

std::vector<TopologyFamily> resolved_families(const RunConfig& c) {
  if (c.families.empty()) return all_families();
  std::vector<TopologyFamily> out;
  for (const auto& f : c.families) out.push_back(parse_family(f));
  return out;
}

ExecutionConfig execution_config(const RunConfig& c) {
  ExecutionConfig e;
  e.rounds = c.rounds;
  e.aggregation = parse_aggregation(c.aggregation);
  e.stale_neighbors = c.stale_neighbors;
  return e;
}

Oracle make_task_oracle(const std::vector<SyntheticTask>& suite, const RunConfig& c) {
  auto tasks = std::make_shared<std::map<std::string, SyntheticTask>>();
  for (const auto& t : suite) (*tasks)[t.task_id] = t;
  const bool tokens = c.cost_model == "tokens";
  const double normalizer = c.train.cost_normalizer, budget = c.token_budget;
  const auto rounds = c.rounds;
  return [tasks, tokens, normalizer, budget, rounds](const CommGraph& g, const QueryContext& q) {
    auto it = tasks->find(q.task_id);
    if (it == tasks->end()) throw std::invalid_argument("no synthetic task with id '" + q.task_id + "'");
    OracleResult r;
    r.utility = synthetic_utility(g, it->second);
    r.cost = tokens ? mock_token_cost(g, q, budget, rounds) : synthetic_cost(g, normalizer);
    return r;
  };
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "' for hashing");
  std::ostringstream s;
  s << in.rdbuf();
  return sha256_hex(s.str());
}

}  // namespace topodiff
