#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topodiff/executor.hpp"
#include "topodiff/graph.hpp"
#include "topodiff/harness.hpp"
#include "topodiff/synthetic.hpp"
#include "topodiff/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace topodiff;

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool no_es = false, no_utility = false, no_query = false, phi_on_g0 = false, stale_neighbors = false;
  std::optional<double> beta;
  std::optional<std::string> reward_sign;

  std::string dataset, suite, checkpoint, resume, task, query, graph, script, scenarios;
  std::string mode = "prompt_liar";
  std::optional<std::size_t> samples;
  std::optional<std::size_t> nodes;  // overrides the sampled node count
  std::size_t count = 12;
};

// Records inputs, outputs and the outcome of one command.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv) {
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }

  void set_config(const RunConfig& c) { doc_["config"] = to_json(c); }
  void input(const std::string& path) { doc_["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
  void output(const std::string& path) { doc_["outputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
  json& extra() { return doc_["details"]; }
  void fail(const std::string& message) { doc_["error"] = {{"message", message}}; }
  bool failed() const { return doc_.contains("error"); }
  const json& doc() const { return doc_; }

 private:
  json doc_ = json::object();
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text, Manifest& manifest) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write output file '" + path + "'");
    out << text;
    if (!out.flush()) throw std::runtime_error("failed writing output file '" + path + "'");
  }
  manifest.output(path);
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

RunConfig resolve_config(const Flags& f) {
  RunConfig c;
  if (!f.config_path.empty()) c = run_config_from_json(load_config_file(f.config_path));
  if (f.seed) c.train.seed = *f.seed;
  if (f.no_es) c.train.use_es = false;
  if (f.no_utility) c.train.use_utility = false;
  if (f.no_query) c.train.use_query = false;
  if (f.phi_on_g0) c.train.phi_on_g0 = true;
  if (f.stale_neighbors) c.stale_neighbors = true;
  if (f.beta) c.train.beta = *f.beta;
  if (f.reward_sign) {
    try {
      c.train.reward_sign = parse_reward_sign(*f.reward_sign);
    } catch (const std::exception&) {
      throw ConfigError("invalid config field 'reward_sign': must be 'pos' or 'neg'");
    }
  }
  if (f.samples) c.samples = *f.samples;
  c.validate();
  return c;
}

std::string out_path(const Flags& f, const std::string& name) { return (fs::path(f.out) / name).string(); }

std::string default_input(const std::string& given, const Flags& f, const std::string& name) {
  return given.empty() ? out_path(f, name) : given;
}

std::optional<EmbeddingTable> load_table(const RunConfig& c, Manifest& manifest) {
  if (c.embedding_table.empty()) return std::nullopt;
  manifest.input(c.embedding_table);
  return EmbeddingTable::load(c.embedding_table);
}

std::vector<SyntheticTask> load_suite(const std::string& path, Manifest& manifest) {
  manifest.input(path);
  return suite_from_json(read_json(path), RoleVocab::standard());
}

Model load_model(const std::string& path, Manifest& manifest) {
  manifest.input(path);
  return checkpoint_from_json(read_json(path));
}

std::size_t mock_tokens(const CommGraph& g, const QueryContext& q, const RunConfig& c) {
  MockScript script;
  script.fallback = "done";
  auto exec = execution_config(c);
  exec.parallel = false;
  return account_tokens(execute(g, q, scripted_backends(g, script), exec)).total();
}

// ---------------------------------------------------------------------------
// Commands

void cmd_build_dataset(const Flags& f, const RunConfig& c, Manifest& manifest) {
  const auto vocab = RoleVocab::standard();
  auto table = load_table(c, manifest);
  std::vector<SyntheticTask> suite;
  if (f.suite.empty()) suite = generate_task_suite(c.tasks, c.hard_fraction, vocab, c.train.seed);
  else suite = load_suite(f.suite, manifest);
  std::vector<QueryContext> queries;
  for (const auto& t : suite) queries.push_back(task_query(t, c.train.query_dim, table ? &*table : nullptr));
  const auto dataset = build_diffusion_dataset(resolved_families(c), c.sizes, vocab, make_task_oracle(suite, c), queries,
                                               c.threshold, c.train.seed);
  write_text(out_path(f, "suite.json"), suite_to_json(suite).dump(1) + "\n", manifest);
  write_text(out_path(f, "dataset.json"), dataset_to_json(dataset).dump(1) + "\n", manifest);
  manifest.extra() = {{"tasks", suite.size()},
                      {"records", dataset.records.size()},
                      {"correct", dataset.correct_indices().size()}};
}

void cmd_train(const Flags& f, const RunConfig& c, Manifest& manifest) {
  const auto vocab = RoleVocab::standard();
  auto table = load_table(c, manifest);
  const auto dataset_path = default_input(f.dataset, f, "dataset.json");
  manifest.input(dataset_path);
  const auto dataset =
      dataset_from_json(read_json(dataset_path), vocab, c.train.query_dim, table ? &*table : nullptr);
  const auto suite = load_suite(default_input(f.suite, f, "suite.json"), manifest);

  Model model = Model::initialize(c.train, vocab);
  if (!f.resume.empty()) {
    model = load_model(f.resume, manifest);
    auto stored = to_json(model.config), wanted = to_json(c.train);
    stored.erase("epochs");
    wanted.erase("epochs");
    for (const auto& [key, v] : wanted.items())
      if (stored.at(key) != v) throw ConfigError("config field '" + key + "' differs from the resumed checkpoint");
    model.config.epochs = c.train.epochs;
  }

  std::ostringstream metrics;
  write_metrics_header(metrics);
  const auto on_epoch = [&](const Model& m, const EpochMetrics& row) {
    write_metrics_row(metrics, row);
    if (c.checkpoint_every > 0 && row.epoch % c.checkpoint_every == 0)
      write_text(out_path(f, "checkpoint_epoch_" + std::to_string(row.epoch) + ".json"),
                 checkpoint_to_json(m).dump(1) + "\n", manifest);
  };
  try {
    if (model.epoch < model.config.epochs) train(model, dataset, make_task_oracle(suite, c), on_epoch);
  } catch (...) {
    write_text(out_path(f, "metrics.csv"), metrics.str(), manifest);
    throw;
  }
  write_text(out_path(f, "metrics.csv"), metrics.str(), manifest);
  write_text(out_path(f, "checkpoint.json"), checkpoint_to_json(model).dump(1) + "\n", manifest);
  manifest.extra() = {{"start_epoch", f.resume.empty() ? 0 : model.epoch}, {"final_epoch", model.epoch}};
}

QueryContext resolve_query(const Flags& f, const RunConfig& c, Manifest& manifest, std::size_t dim,
                           const EmbeddingTable* table) {
  if (!f.task.empty()) {
    const auto suite = load_suite(default_input(f.suite, f, "suite.json"), manifest);
    for (const auto& t : suite)
      if (t.task_id == f.task) return task_query(t, dim, table);
    throw std::runtime_error("task '" + f.task + "' is not in the suite");
  }
  if (!f.query.empty()) return make_query("query", f.query, dim, table);
  (void)c;
  throw std::runtime_error("one of --task or --query is required");
}

void cmd_generate(const Flags& f, const RunConfig& c, Manifest& manifest) {
  auto table = load_table(c, manifest);
  Model model = load_model(default_input(f.checkpoint, f, "checkpoint.json"), manifest);
  const auto q = resolve_query(f, c, manifest, model.config.query_dim, table ? &*table : nullptr);
  std::ostringstream summary;
  summary << "sample,nodes,active_size,edges,density,mean_effective_size,log_prob\n";
  for (std::size_t i = 0; i < c.samples; ++i) {
    Rng rng = derive_rng(c.train.seed, {0x6E, fnv1a(q.task_id), i});
    const auto n = f.nodes ? *f.nodes : model.sample_size(rng);
    auto gen = model.denoiser.generate_topology(q, n, rng);
    const auto stats = graph_stats(gen.graph, model.config.beta);
    json removed = json::array();
    for (const auto& [a, b] : gen.removed) removed.push_back({a, b});
    const json doc{{"query", {{"task_id", q.task_id}, {"text", q.text}}},
                   {"sample", i},
                   {"topology", serialize(gen.graph)},
                   {"removed_edges", removed},
                   {"log_prob", gen.log_prob},
                   {"stats",
                    {{"active_size", stats.active_size},
                     {"density", stats.density},
                     {"mean_effective_size", stats.mean_effective_size}}}};
    const auto stem = "topology_" + std::to_string(i);
    write_text(out_path(f, stem + ".json"), doc.dump(1) + "\n", manifest);
    write_text(out_path(f, stem + ".dot"), to_dot(gen.graph, stem), manifest);
    summary << i << ',' << gen.graph.size() << ',' << stats.active_size << ',' << gen.graph.edge_count() << ','
            << fmt(stats.density) << ',' << fmt(stats.mean_effective_size) << ',' << fmt(gen.log_prob) << '\n';
  }
  write_text(out_path(f, "generated.csv"), summary.str(), manifest);
}

CommGraph load_graph(const std::string& path, Manifest& manifest) {
  manifest.input(path);
  const auto doc = read_json(path);
  return deserialize(doc.contains("topology") ? doc.at("topology") : doc, RoleVocab::standard());
}

std::vector<BackendPtr> make_backends(const CommGraph& g, const RunConfig& c, const MockScript& script) {
  if (c.backend == "http") {
    HttpBackendConfig hc;
    hc.base_url = c.base_url;
    hc.model = c.model;
    hc.max_retries = c.max_retries;
    auto shared = std::make_shared<HttpBackend>(hc);
    return std::vector<BackendPtr>(g.size(), shared);
  }
  const auto mode = parse_mock_mode(c.mock_mode);
  if (mode == MockMode::role_scripted) return scripted_backends(g, script, {}, c.train.seed);
  if (mode == MockMode::liar) return scripted_backends(g, script, liar_targets(g), c.train.seed);
  std::vector<BackendPtr> out;
  for (std::size_t v = 0; v < g.size(); ++v)
    out.push_back(std::make_shared<MockBackend>(MockMode::echo, g.agent(v).role.label, script, c.train.seed));
  return out;
}

json backend_ids(const std::vector<BackendPtr>& backends) {
  json ids = json::array();
  for (const auto& b : backends) ids.push_back(b->identifier());
  return ids;
}

void cmd_execute(const Flags& f, const RunConfig& c, Manifest& manifest) {
  if (f.graph.empty()) throw std::runtime_error("--graph is required");
  auto table = load_table(c, manifest);
  const auto g = load_graph(f.graph, manifest);
  const auto q = resolve_query(f, c, manifest, c.train.query_dim, table ? &*table : nullptr);
  MockScript script;
  script.fallback = "done";
  if (!f.script.empty()) {
    manifest.input(f.script);
    script = mock_script_from_json(read_json(f.script));
  }
  const auto backends = make_backends(g, c, script);
  manifest.extra()["backends"] = backend_ids(backends);
  ExecutionTrace trace;
  try {
    trace = execute(g, q, backends, execution_config(c));
  } catch (const ExecutionFailure& e) {
    write_text(out_path(f, "trace.json"), trace_to_json(e.trace()).dump(1) + "\n", manifest);
    throw;
  }
  write_text(out_path(f, "trace.json"), trace_to_json(trace).dump(1) + "\n", manifest);
  manifest.extra()["solution"] = trace.solution;
  manifest.extra()["tokens"] = account_tokens(trace).total();
}

void cmd_evaluate(const Flags& f, const RunConfig& c, Manifest& manifest) {
  auto table = load_table(c, manifest);
  Model model = load_model(default_input(f.checkpoint, f, "checkpoint.json"), manifest);
  auto suite = load_suite(default_input(f.suite, f, "suite.json"), manifest);
  std::sort(suite.begin(), suite.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  const auto oracle = make_task_oracle(suite, c);

  static const std::vector<std::string> columns{"utility", "cost",    "objective",          "active_size",
                                                "density", "mean_effective_size", "tokens"};
  std::ostringstream csv;
  csv << "task_id,difficulty,samples";
  for (const auto& col : columns) csv << ',' << col;
  csv << '\n';

  std::vector<std::vector<double>> rows;
  for (const auto& task : suite) {
    const auto q = task_query(task, model.config.query_dim, table ? &*table : nullptr);
    std::vector<double> sum(columns.size(), 0.0);
    for (std::size_t i = 0; i < c.samples; ++i) {
      Rng rng = derive_rng(c.train.seed, {0xEA, fnv1a(task.task_id), i});
      const auto n = f.nodes ? *f.nodes : model.sample_size(rng);
      const auto gen = model.denoiser.generate_topology(q, n, rng);
      const auto scored = oracle(gen.graph, q);
      const auto stats = graph_stats(gen.graph, model.config.beta);
      const std::vector<double> values{scored.utility,
                                       scored.cost,
                                       objective(scored.utility, scored.cost, c.train.alpha),
                                       static_cast<double>(stats.active_size),
                                       stats.density,
                                       stats.mean_effective_size,
                                       static_cast<double>(mock_tokens(gen.graph, q, c))};
      for (std::size_t k = 0; k < values.size(); ++k) sum[k] += values[k];
    }
    for (auto& s : sum) s /= static_cast<double>(c.samples);
    csv << csv_field(task.task_id) << ',' << to_string(task.difficulty) << ',' << c.samples;
    for (double v : sum) csv << ',' << fmt(v);
    csv << '\n';
    rows.push_back(sum);
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    std::vector<double> mean(columns.size(), 0.0), var(columns.size(), 0.0);
    for (const auto& r : rows)
      for (std::size_t k = 0; k < r.size(); ++k) mean[k] += r[k];
    for (auto& m : mean) m /= n;
    for (const auto& r : rows)
      for (std::size_t k = 0; k < r.size(); ++k) var[k] += (r[k] - mean[k]) * (r[k] - mean[k]) / n;
    csv << "mean,all," << c.samples;
    for (double v : mean) csv << ',' << fmt(v);
    csv << "\nstd,all," << c.samples;
    for (double v : var) csv << ',' << fmt(std::sqrt(v));
    csv << '\n';
  }
  write_text(out_path(f, "report.csv"), csv.str(), manifest);
  manifest.extra() = {{"tasks", rows.size()}};
}

void cmd_attack(const Flags& f, const RunConfig& c, Manifest& manifest) {
  if (f.mode != "prompt_liar" && f.mode != "structure_noise" && f.mode != "both" && f.mode != "none")
    throw std::runtime_error("--mode must be prompt_liar, structure_noise, both or none");
  const auto vocab = RoleVocab::standard();
  std::vector<MockScenario> scenarios;
  if (!f.scenarios.empty()) {
    manifest.input(f.scenarios);
    const auto doc = read_json(f.scenarios);
    if (doc.is_array())
      for (const auto& s : doc) scenarios.push_back(scenario_from_json(s, vocab));
    else
      scenarios.push_back(scenario_from_json(doc, vocab));
  } else {
    scenarios = liar_scenarios(f.count, c.train.seed);
  }
  std::optional<Model> model;
  if (!f.checkpoint.empty()) model = load_model(f.checkpoint, manifest);

  const bool liars = f.mode == "prompt_liar" || f.mode == "both";
  const bool noise = f.mode == "structure_noise" || f.mode == "both";
  auto exec = execution_config(c);
  exec.parallel = false;

  std::ostringstream csv;
  csv << "scenario_id,mode,aggregation,edges_before,edges_noisy,edges_after,liars,utility_before,utility_after,"
         "solution_before,solution_after\n";
  json details = json::array();
  double before_sum = 0.0, after_sum = 0.0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& sc = scenarios[s];
    const auto q = make_query(sc.scenario_id, sc.query, model ? model->config.query_dim : c.train.query_dim);
    CommGraph g = sc.graph;
    if (model) {
      Rng rng = derive_rng(c.train.seed, {0xA7, s});
      g = model->denoiser.generate_topology(q, model->sample_size(rng), rng).graph;
    }
    const auto clean = scripted_backends(g, sc.script, {}, c.train.seed);
    const auto before = execute(g, q, clean, exec);

    CommGraph attacked = g;
    std::size_t noisy_edges = g.edge_count();
    if (noise) {
      Rng rng = derive_rng(c.train.seed, {0x4E, s});
      const auto n = add_structure_noise(g, c.noise_fraction, rng);
      attacked = n.projected;
      noisy_edges = n.noisy.edge_count();
    }
    const auto targets = liars ? liar_targets(attacked) : std::vector<std::size_t>{};
    const auto after_backends = scripted_backends(attacked, sc.script, targets, c.train.seed);
    const auto after = execute(attacked, q, after_backends, exec);

    const double ub = scenario_utility(before.solution, sc.truth), ua = scenario_utility(after.solution, sc.truth);
    before_sum += ub;
    after_sum += ua;
    csv << csv_field(sc.scenario_id) << ',' << f.mode << ',' << to_string(exec.aggregation) << ',' << g.edge_count()
        << ',' << noisy_edges << ',' << attacked.edge_count() << ',' << targets.size() << ',' << fmt(ub) << ','
        << fmt(ua) << ',' << csv_field(before.solution) << ',' << csv_field(after.solution) << '\n';

    const auto ids_before = backend_ids(clean), ids_after = backend_ids(after_backends);
    std::size_t changed = 0;
    for (std::size_t v = 0; v < std::min(ids_before.size(), ids_after.size()); ++v)
      if (ids_before[v] != ids_after[v]) ++changed;
    details.push_back({{"scenario_id", sc.scenario_id},
                       {"backends_before", ids_before},
                       {"backends_after", ids_after},
                       {"changed_backends", changed}});
  }
  const double n = scenarios.empty() ? 1.0 : static_cast<double>(scenarios.size());
  if (!scenarios.empty())
    csv << "mean," << f.mode << ',' << to_string(exec.aggregation) << ",,,,," << fmt(before_sum / n) << ','
        << fmt(after_sum / n) << ",,\n";
  write_text(out_path(f, "attack.csv"), csv.str(), manifest);
  manifest.extra() = {{"mode", f.mode}, {"scenarios", details}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-conditioned topology generation for multi-agent teams"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--out", f.out, "Output directory")->capture_default_str();
  app.add_flag("--no-es", f.no_es, "Disable the effective-size attention bias");
  app.add_flag("--no-utility", f.no_utility, "Disable utility policy updates");
  app.add_flag("--no-query", f.no_query, "Disable query conditioning");
  app.add_option("--beta", f.beta, "Effective-size mixing weight");
  app.add_flag("--phi-on-g0", f.phi_on_g0, "Condition the ordering bias on the clean graph");
  app.add_option("--reward-sign", f.reward_sign, "Ordering reward sign")->check(CLI::IsMember({"pos", "neg"}));
  app.add_flag("--stale-neighbors", f.stale_neighbors, "Agents read previous-round neighbour messages");

  auto* build = app.add_subcommand("build-dataset", "Score baseline topologies into a training dataset");
  build->add_option("--suite", f.suite, "Existing task suite instead of a generated one");

  auto* trn = app.add_subcommand("train", "Train the ordering network and denoiser");
  trn->add_option("--dataset", f.dataset, "Dataset file (default <out>/dataset.json)");
  trn->add_option("--suite", f.suite, "Task suite (default <out>/suite.json)");
  trn->add_option("--resume", f.resume, "Checkpoint to continue from");

  auto* gen = app.add_subcommand("generate", "Sample topologies for a query");
  gen->add_option("--checkpoint", f.checkpoint, "Checkpoint (default <out>/checkpoint.json)");
  gen->add_option("--suite", f.suite, "Task suite (default <out>/suite.json)");
  gen->add_option("--task", f.task, "Task id from the suite");
  gen->add_option("--query", f.query, "Free-text query");
  gen->add_option("--samples", f.samples, "Number of samples");
  gen->add_option("--nodes", f.nodes, "Fixed node count")->check(CLI::PositiveNumber);

  auto* exe = app.add_subcommand("execute", "Run a topology with agent backends");
  exe->add_option("--graph", f.graph, "Topology JSON")->required();
  exe->add_option("--suite", f.suite, "Task suite (default <out>/suite.json)");
  exe->add_option("--task", f.task, "Task id from the suite");
  exe->add_option("--query", f.query, "Free-text query");
  exe->add_option("--script", f.script, "Mock script JSON");

  auto* eval = app.add_subcommand("evaluate", "Score generated topologies over a task suite");
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint (default <out>/checkpoint.json)");
  eval->add_option("--suite", f.suite, "Task suite (default <out>/suite.json)");
  eval->add_option("--samples", f.samples, "Generations per task");
  eval->add_option("--nodes", f.nodes, "Fixed node count")->check(CLI::PositiveNumber);

  auto* atk = app.add_subcommand("attack", "Compare scenario utility before and after an attack");
  atk->add_option("--mode", f.mode, "prompt_liar, structure_noise, both or none")->capture_default_str();
  atk->add_option("--scenarios", f.scenarios, "Scenario JSON (default: generated liar scenarios)");
  atk->add_option("--count", f.count, "Generated scenario count")->capture_default_str();
  atk->add_option("--checkpoint", f.checkpoint, "Generate scenario graphs from this checkpoint");

  CLI11_PARSE(app, argc, argv);

  const auto* sub = app.get_subcommands().front();
  Manifest manifest(sub->get_name(), std::vector<std::string>(argv + 1, argv + argc));
  try {
    fs::create_directories(f.out);
  } catch (const std::exception& e) {
    std::cerr << "error: cannot create output directory '" << f.out << "': " << e.what() << "\n";
    return 2;
  }
  try {
    const auto config = resolve_config(f);
    manifest.set_config(config);
    if (sub == build) cmd_build_dataset(f, config, manifest);
    else if (sub == trn) cmd_train(f, config, manifest);
    else if (sub == gen) cmd_generate(f, config, manifest);
    else if (sub == exe) cmd_execute(f, config, manifest);
    else if (sub == eval) cmd_evaluate(f, config, manifest);
    else cmd_attack(f, config, manifest);
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    std::cerr << "error: " << e.what() << "\n";
  }
  const auto manifest_path = out_path(f, sub->get_name() + ".manifest.json");
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  out << manifest.doc().dump(1) << "\n";
  if (!out.flush()) {
    std::cerr << "error: cannot write manifest '" << manifest_path << "'\n";
    return 2;
  }
  return manifest.failed() ? 1 : 0;
}
