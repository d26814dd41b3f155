#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "test_support.hpp"
#include "topodiff/synthetic.hpp"
#include "topodiff/trainer.hpp"

using namespace topodiff;

namespace {

const RoleVocab kVocab = RoleVocab::standard();

TrainConfig small_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.seed = seed;
  c.hidden = 8;
  c.layers = 2;
  c.components = 2;
  c.pe_dim = 4;
  c.mlp_hidden = 8;
  c.query_dim = 16;
  c.trajectories = 2;
  c.batch_size = 4;
  c.eval_samples = 4;
  return c;
}

QueryContext query(const std::string& text = "Assemble two specialists: a Solver and a Critic.") {
  return make_query("q0", text, 16);
}

CommGraph chain4() {
  CommGraph g(4, kVocab, {0, 1, 2, 4});
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 3);
  g.add_edge(0, 3);
  return g;
}

// Flattened copy of every gradient entry in a parameter set.
std::vector<double> grads(const nn::ParamSet& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.grad.begin(), t.grad.end());
  return out;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(b[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  CHECK(worst <= tol * std::max(1.0, scale));
}

std::map<std::string, SyntheticTask> task_map(const std::vector<SyntheticTask>& suite) {
  std::map<std::string, SyntheticTask> out;
  for (const auto& t : suite) out[t.task_id] = t;
  return out;
}

Oracle synthetic_oracle(const std::vector<SyntheticTask>& suite, double normalizer = 10.0) {
  auto tasks = task_map(suite);
  return [tasks, normalizer](const CommGraph& g, const QueryContext& q) {
    const auto& t = tasks.at(q.task_id);
    return OracleResult{synthetic_utility(g, t), synthetic_cost(g, normalizer)};
  };
}

}  // namespace

// ---------------------------------------------------------------------------
// Reward

TEST_CASE("ordering reward examples") {
  CHECK(ordering_reward({0.5, 0.25}, {0.0, 0.0}, RewardSign::neg) == 0.0);
  CHECK(ordering_reward({1.0}, {-2.0}, RewardSign::neg) == 2.0);
  CHECK(ordering_reward({1.0}, {-2.0}, RewardSign::pos) == -2.0);
  Rng rng = derive_rng(3, {});
  std::vector<double> w(4), ll(4);
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    w[i] = 0.05 + uniform01(rng) * 0.95;
    ll[i] = -5.0 * uniform01(rng);
    expected -= w[i] * ll[i];
  }
  CHECK(ordering_reward(w, ll, RewardSign::neg) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(ordering_reward(w, ll, RewardSign::pos) == doctest::Approx(-expected).epsilon(1e-15));
  CHECK_THROWS_AS(ordering_reward({1.0, 0.5}, {-1.0}, RewardSign::neg), std::invalid_argument);
}

TEST_CASE("reward sign parsing") {
  CHECK(parse_reward_sign("pos") == RewardSign::pos);
  CHECK(parse_reward_sign("neg") == RewardSign::neg);
  CHECK(to_string(RewardSign::neg) == "neg");
  CHECK_THROWS_AS(parse_reward_sign("plus"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Config

TEST_CASE("config validation names the field") {
  auto expect_field = [](TrainConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL("accepted invalid " << field);
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("'" + field + "'") != std::string::npos);
    }
  };
  TrainConfig c;
  c.trajectories = 0;
  expect_field(c, "trajectories");
  c = {};
  c.batch_size = 0;
  expect_field(c, "batch_size");
  c = {};
  c.utility_period = 0;
  expect_field(c, "utility_period");
  c = {};
  c.utility_fraction = 0.0;
  expect_field(c, "utility_fraction");
  c.utility_fraction = 1.5;
  expect_field(c, "utility_fraction");
  c = {};
  c.lr_denoiser = -1;
  expect_field(c, "lr_denoiser");
  c = {};
  c.beta = 1.5;
  expect_field(c, "beta");
  c = {};
  c.pe_dim = 3;
  expect_field(c, "pe_dim");
  TrainConfig{}.validate();
}

TEST_CASE("config json round trip and rejection") {
  auto c = small_config(42);
  c.reward_sign = RewardSign::neg;
  c.use_es = false;
  c.alpha = 0.25;
  const auto doc = to_json(c);
  CHECK(to_json(train_config_from_json(doc)) == doc);

  auto bad = doc;
  bad["lr_ordering"] = "fast";
  CHECK_THROWS_WITH_AS(train_config_from_json(bad), doctest::Contains("'lr_ordering'"), std::invalid_argument);
  bad = doc;
  bad["epochs"] = -3;
  CHECK_THROWS_WITH_AS(train_config_from_json(bad), doctest::Contains("'epochs'"), std::invalid_argument);
  bad = doc;
  bad["unknown_knob"] = 1;
  CHECK_THROWS_WITH_AS(train_config_from_json(bad), doctest::Contains("'unknown_knob'"), std::invalid_argument);
  bad = doc;
  bad["reward_sign"] = "up";
  CHECK_THROWS_WITH_AS(train_config_from_json(bad), doctest::Contains("'reward_sign'"), std::invalid_argument);
  // Partial documents override only the given fields.
  const auto partial = train_config_from_json({{"epochs", 7}}, c);
  CHECK(partial.epochs == 7);
  CHECK(partial.seed == 42);
}

// ---------------------------------------------------------------------------
// Dataset

TEST_CASE("dataset cardinality, determinism and labels") {
  const auto suite = generate_task_suite(1, 0.0, kVocab, 9);
  const auto oracle = synthetic_oracle(suite);
  const std::vector<QueryContext> queries{task_query(suite[0], 16)};
  const auto a = build_diffusion_dataset(all_families(), {3, 4}, kVocab, oracle, queries, 0.5, 77);
  const auto b = build_diffusion_dataset(all_families(), {3, 4}, kVocab, oracle, queries, 0.5, 77);
  CHECK(a.records.size() == 10);
  CHECK(dataset_to_json(a) == dataset_to_json(b));
  CHECK(dataset_to_json(a) != dataset_to_json(build_diffusion_dataset(all_families(), {3, 4}, kVocab, oracle,
                                                                      queries, 0.5, 78)));
  for (const auto& r : a.records) {
    CHECK(is_acyclic(r.graph));
    const double u = synthetic_utility(r.graph, suite[0]);
    CHECK(r.correct == (u >= 0.5));
    CHECK(r.utility == u);
    CHECK(r.cost == synthetic_cost(r.graph, 10.0));
  }
  std::vector<std::size_t> support;
  for (auto i : a.correct_indices()) support.push_back(a.records[i].graph.size());
  CHECK(a.size_support() == support);
}

TEST_CASE("dataset json round trip recomputes embeddings") {
  const auto suite = generate_task_suite(2, 0.5, kVocab, 10);
  std::vector<QueryContext> queries;
  for (const auto& t : suite) queries.push_back(task_query(t, 16));
  const auto d = build_diffusion_dataset(all_families(), {3}, kVocab, synthetic_oracle(suite), queries, 0.5, 1);
  const auto back = dataset_from_json(dataset_to_json(d), kVocab, 16);
  REQUIRE(back.records.size() == d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    CHECK(back.records[i].graph == d.records[i].graph);
    CHECK(back.records[i].query == d.records[i].query);
    CHECK(back.records[i].correct == d.records[i].correct);
  }
  CHECK_THROWS_AS(dataset_from_json({{"records", {{{"graph", 1}}}}}, kVocab, 16), FormatError);
}

TEST_CASE("dataset oracle failure names the record") {
  const std::vector<QueryContext> queries{make_query("bad-task", "x", 16)};
  int calls = 0;
  Oracle oracle = [&](const CommGraph&, const QueryContext&) -> OracleResult {
    if (++calls == 4) throw std::runtime_error("backend down");
    return {1.0, 0.0};
  };
  CHECK_THROWS_WITH_AS(build_diffusion_dataset(all_families(), {3, 4}, kVocab, oracle, queries, 0.5, 1),
                       doctest::Contains("record 3 (task bad-task, family mesh, n=4): backend down"), TrainError);
}

// ---------------------------------------------------------------------------
// Checkpoint

TEST_CASE("checkpoint round trip") {
  auto m = Model::initialize(small_config(5), kVocab);
  m.size_support = {3, 4, 4};
  m.epoch = 3;
  m.reward_baseline = {1.5, 7};
  Rng rng = derive_rng(1, {});
  denoiser_vlb_update(m, chain4(), query(), rng);
  const auto doc = checkpoint_to_json(m);
  const auto back = checkpoint_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(checkpoint_to_json(back) == doc);
  CHECK(back.denoiser.params() == m.denoiser.params());
  CHECK(back.epoch == 3);

  auto tampered = doc;
  tampered["config"]["alpha"] = 0.9;
  CHECK_THROWS_AS(checkpoint_from_json(tampered), FormatError);
  tampered = doc;
  tampered.erase("denoiser_adam");
  CHECK_THROWS_AS(checkpoint_from_json(tampered), FormatError);
}

// ---------------------------------------------------------------------------
// Variational bound

TEST_CASE("single-node vlb loss is the role negative log-likelihood") {
  auto m = Model::initialize(small_config(), kVocab);
  auto before = m;
  const CommGraph g(1, kVocab, {3});
  const auto q = query();
  Rng rng = derive_rng(2, {});
  const auto res = denoiser_vlb_update(m, g, q, rng);

  nn::Tape tape;
  auto h = before.denoiser.embed_masked_graph(tape, MaskedGraph::from_prefix(g, {0}), q);
  const double lp = before.denoiser.role_log_probs(tape, h[0]).value()[3];
  CHECK(res.loss == doctest::Approx(-lp).epsilon(1e-12));
  CHECK(!(m.denoiser.params() == before.denoiser.params()));
  for (const auto& r : res.records) CHECK(r.weights == std::vector<double>{1.0});
}

TEST_CASE("vlb loss and gradient match recomputation from the recorded trajectories") {
  auto m = Model::initialize(small_config(11), kVocab);
  m.config.trajectories = 2;
  auto before = m;
  const auto g = chain4();
  const auto q = query();
  Rng rng = derive_rng(4, {});
  const auto res = denoiser_vlb_update(m, g, q, rng);
  REQUIRE(res.records.size() == 2);

  // Same stream, same ordering net: the recorded orderings are reproduced.
  Rng replay = derive_rng(4, {});
  auto& p = before.denoiser.params();
  std::vector<double> expected(grads(p).size(), 0.0);
  double loss = 0.0;
  for (const auto& rec : res.records) {
    const auto traj = before.ordering.sample_forward_trajectory(g, replay);
    CHECK(traj.ordering == rec.ordering);
    CHECK(traj.selection_probs == rec.weights);
    for (std::size_t t = 0; t < g.size(); ++t) {
      const std::vector<std::size_t> prefix(rec.ordering.begin(), rec.ordering.begin() + t + 1);
      p.zero_grad();
      nn::Tape tape;
      auto ll = before.denoiser.step_log_likelihood(tape, MaskedGraph::from_prefix(g, prefix), q);
      tape.backward(ll);
      CHECK(rec.step_logliks[t] == doctest::Approx(ll.scalar()).epsilon(1e-12));
      loss -= rec.weights[t] * ll.scalar() / 2.0;
      const auto step_grad = grads(p);
      for (std::size_t i = 0; i < expected.size(); ++i) expected[i] -= rec.weights[t] / 2.0 * step_grad[i];
    }
    CHECK(rec.reward == doctest::Approx(ordering_reward(rec.weights, rec.step_logliks, RewardSign::pos)));
  }
  CHECK(res.loss == doctest::Approx(loss).epsilon(1e-12));
  check_close(grads(m.denoiser.params()), expected, 1e-10);
}

TEST_CASE("vlb update rejects cyclic or empty graphs") {
  auto m = Model::initialize(small_config(), kVocab);
  Rng rng = derive_rng(1, {});
  CHECK_THROWS_AS(denoiser_vlb_update(m, CommGraph{}, query(), rng), std::invalid_argument);
  CommGraph cyc(2, kVocab, {0, 1});
  cyc.add_edge(0, 1);
  cyc.add_edge(1, 0);
  CHECK_THROWS_AS(denoiser_vlb_update(m, cyc, query(), rng), std::invalid_argument);
}

TEST_CASE("repeated vlb updates on one graph raise its likelihood by at least two nats") {
  auto c = small_config(21);
  c.lr_denoiser = 1e-2;
  auto m = Model::initialize(c, kVocab);
  const auto g = chain4();
  const auto q = query();
  const double start = teacher_forced_log_likelihood(m, g, q, 16, 99);
  Rng rng = derive_rng(5, {});
  for (int i = 0; i < 200; ++i) denoiser_vlb_update(m, g, q, rng);
  const double end = teacher_forced_log_likelihood(m, g, q, 16, 99);
  MESSAGE("teacher-forced log-likelihood " << start << " -> " << end);
  CHECK(end - start >= 2.0);
}

// ---------------------------------------------------------------------------
// Ordering REINFORCE

TEST_CASE("identical rewards leave the ordering net unchanged") {
  auto m = Model::initialize(small_config(), kVocab);
  const auto before = m.ordering.params();
  const auto adam_before = m.ordering_adam.step;
  const auto res = ordering_reinforce_update(m, chain4(), {{0, 1, 2, 3}, {3, 2, 1, 0}, {1, 0, 3, 2}}, {0.7, 0.7, 0.7});
  CHECK(!res.stepped);
  CHECK(m.ordering.params() == before);
  CHECK(m.ordering_adam.step == adam_before);
  CHECK(m.reward_baseline.count == 3);
  CHECK(m.reward_baseline.mean == doctest::Approx(0.7));
}

TEST_CASE("two-sample reinforce gradient algebra") {
  auto m = Model::initialize(small_config(12), kVocab);
  auto before = m;
  const auto g = chain4();
  const std::vector<std::size_t> pi1{0, 1, 2, 3}, pi2{2, 0, 3, 1};
  const auto res = ordering_reinforce_update(m, g, {pi1, pi2}, {1.0, 3.0});
  CHECK(res.baseline == 2.0);
  CHECK(res.stepped);

  auto grad_of = [&](const std::vector<std::size_t>& pi) {
    auto& p = before.ordering.params();
    p.zero_grad();
    nn::Tape tape;
    tape.backward(before.ordering.trajectory_log_prob(tape, g, pi));
    return grads(p);
  };
  const auto g1 = grad_of(pi1), g2 = grad_of(pi2);
  // Ascent direction +1 * grad log q(pi2) - 1 * grad log q(pi1); stored as a loss gradient.
  std::vector<double> expected(g1.size());
  for (std::size_t i = 0; i < g1.size(); ++i) expected[i] = -(g2[i] - g1[i]);
  check_close(grads(m.ordering.params()), expected, 1e-12);
  CHECK(!(m.ordering.params() == before.ordering.params()));
}

TEST_CASE("reinforce preconditions") {
  auto m = Model::initialize(small_config(), kVocab);
  CHECK_THROWS_AS(ordering_reinforce_update(m, chain4(), {{0, 1, 2, 3}}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ordering_reinforce_update(m, chain4(), {{0, 1, 2, 3}, {1, 0, 2, 3}}, {1.0, NAN}),
                  nn::NonFiniteError);
  CHECK_THROWS_AS(ordering_reinforce_update(m, chain4(), {{0, 1, 2, 3}, {1, 0, 2, 3}}, {1.0}),
                  std::invalid_argument);
}

TEST_CASE("sampled reinforce update runs and records rewards") {
  auto m = Model::initialize(small_config(), kVocab);
  m.config.trajectories = 3;
  Rng rng = derive_rng(8, {});
  ordering_reinforce_update(m, chain4(), query(), rng);
  CHECK(m.reward_baseline.count == 3);
  CHECK(std::isfinite(m.reward_baseline.mean));
}

TEST_CASE("score function has zero mean under the ordering policy") {
  auto m = Model::initialize(small_config(13), kVocab);
  const auto g = chain4();
  auto& p = m.ordering.params();
  const auto dim = grads(p).size();
  std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
  Rng rng = derive_rng(14, {});
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const auto traj = m.ordering.sample_forward_trajectory(g, rng);
    p.zero_grad();
    nn::Tape tape;
    tape.backward(m.ordering.trajectory_log_prob(tape, g, traj.ordering));
    const auto s = grads(p);
    for (std::size_t i = 0; i < dim; ++i) {
      sum[i] += s[i];
      sum2[i] += s[i] * s[i];
    }
  }
  double norm2 = 0.0, var_of_mean = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double mean = sum[i] / n;
    norm2 += mean * mean;
    var_of_mean += (sum2[i] / n - mean * mean) / n;
  }
  MESSAGE("mean score norm " << std::sqrt(norm2) << ", estimator std " << std::sqrt(var_of_mean));
  CHECK(std::sqrt(norm2) < 3.0 * std::sqrt(var_of_mean));
}

// ---------------------------------------------------------------------------
// Utility policy gradient

TEST_CASE("equal centred returns leave the denoiser unchanged") {
  auto m = Model::initialize(small_config(), kVocab);
  m.utility_baseline = {0.4, 3};
  const auto before = m.denoiser.params();
  Oracle oracle = [](const CommGraph&, const QueryContext&) { return OracleResult{0.5, 1.0}; };
  Rng rng = derive_rng(3, {});
  const auto res = utility_policy_update(m, query(), oracle, rng, 3);
  CHECK(!res.stepped);
  CHECK(res.baseline == 0.4);
  CHECK(res.mean_return == doctest::Approx(0.4));
  CHECK(m.denoiser.params() == before);
  CHECK(m.utility_adam.step == 0);
  CHECK(m.utility_baseline.count == 4);
}

TEST_CASE("single sample with unit return follows grad log p") {
  auto c = small_config(15);
  c.batch_size = 1;
  c.alpha = 0.0;
  auto m = Model::initialize(c, kVocab);
  auto before = m;
  Oracle oracle = [](const CommGraph&, const QueryContext&) { return OracleResult{1.0, 0.0}; };
  Rng rng = derive_rng(6, {});
  const auto res = utility_policy_update(m, query(), oracle, rng, 4);
  CHECK(res.stepped);
  CHECK(res.baseline == 0.0);
  CHECK(m.utility_baseline.mean == 1.0);

  Rng replay = derive_rng(6, {});
  auto& p = before.denoiser.params();
  p.zero_grad();
  nn::Tape tape;
  const auto gen = before.denoiser.generate_topology(query(), 4, replay, &tape);
  CHECK(gen.graph == res.samples[0].graph);
  tape.backward(*gen.log_prob_var);
  auto expected = grads(p);
  for (auto& x : expected) x = -x;
  check_close(grads(m.denoiser.params()), expected, 1e-12);
}

TEST_CASE("oracle failure aborts the batch without touching parameters") {
  auto m = Model::initialize(small_config(), kVocab);
  const auto before = m.denoiser.params();
  int calls = 0;
  Oracle oracle = [&](const CommGraph&, const QueryContext&) -> OracleResult {
    if (++calls == 3) throw std::runtime_error("timeout");
    return {1.0, 0.0};
  };
  Rng rng = derive_rng(3, {});
  CHECK_THROWS_WITH_AS(utility_policy_update(m, query(), oracle, rng, 3), doctest::Contains("sample 2"),
                       TrainError);
  CHECK(m.denoiser.params() == before);
  CHECK(m.utility_baseline.count == 0);
}

TEST_CASE("utility updates drive generations toward a rewarded role") {
  const auto decider = kVocab.find("Decider").index;
  Oracle oracle = [decider](const CommGraph& g, const QueryContext&) {
    for (auto v : participating_agents(g))
      if (g.role(v) == decider) return OracleResult{1.0, 0.0};
    return OracleResult{0.0, 0.0};
  };
  auto fraction = [&](Model& m, std::uint64_t stream) {
    Rng rng = derive_rng(stream, {0xF});
    int hits = 0;
    for (int i = 0; i < 200; ++i) hits += oracle(m.denoiser.generate_topology(query(), 3, rng).graph, query()).utility > 0;
    return hits / 200.0;
  };
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = small_config(seed);
    c.lr_utility = 1e-2;
    c.batch_size = 8;
    auto m = Model::initialize(c, kVocab);
    const double base = fraction(m, seed);
    Rng rng = derive_rng(seed, {0xA});
    for (int i = 0; i < 300; ++i) utility_policy_update(m, query(), oracle, rng, 3);
    const double after = fraction(m, seed);
    MESSAGE("seed " << seed << ": Decider fraction " << base << " -> " << after);
    if (after >= 0.9 && after > base) ++passed;
  }
  CHECK(passed >= 4);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Fixture {
  std::vector<SyntheticTask> suite = generate_task_suite(3, 0.3, kVocab, 17);
  Oracle oracle = synthetic_oracle(suite);
  DiffusionDataset data;

  Fixture() {
    std::vector<QueryContext> queries;
    for (const auto& t : suite) queries.push_back(task_query(t, 16));
    data = build_diffusion_dataset(all_families(), {3, 4}, kVocab, oracle, queries, 0.5, 4);
  }
};

TrainConfig loop_config(std::size_t epochs) {
  auto c = small_config(23);
  c.epochs = epochs;
  c.utility_period = 2;
  c.utility_fraction = 0.5;
  return c;
}

std::string csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream out;
  write_metrics_header(out);
  for (const auto& r : rows) write_metrics_row(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("zero epochs leaves the initialisation untouched") {
  Fixture f;
  REQUIRE(!f.data.correct_indices().empty());
  auto m = Model::initialize(loop_config(0), kVocab);
  const auto init = Model::initialize(loop_config(0), kVocab);
  const auto rows = train(m, f.data, f.oracle);
  CHECK(rows.empty());
  CHECK(m.ordering.params() == init.ordering.params());
  CHECK(m.denoiser.params() == init.denoiser.params());
}

TEST_CASE("training is reproducible and logs one row per epoch") {
  Fixture f;
  auto a = Model::initialize(loop_config(4), kVocab);
  auto b = Model::initialize(loop_config(4), kVocab);
  std::size_t callbacks = 0;
  const auto ra = train(a, f.data, f.oracle, [&](const Model&, const EpochMetrics&) { ++callbacks; });
  const auto rb = train(b, f.data, f.oracle);
  CHECK(callbacks == 4);
  REQUIRE(ra.size() == 4);
  CHECK(csv(ra) == csv(rb));
  CHECK(checkpoint_to_json(a) == checkpoint_to_json(b));
  CHECK(std::isnan(ra[0].mean_utility));
  CHECK(std::isfinite(ra[1].mean_utility));
  CHECK(ra[3].wall_ms == 0.0);
  const auto text = csv(ra);
  CHECK(text.rfind("epoch,vlb_loss,mean_reward,mean_utility,mean_effective_size,wall_ms\n1,", 0) == 0);
  CHECK(text.find("\n2,") != std::string::npos);
}

TEST_CASE("resuming from a checkpoint continues the uninterrupted run") {
  Fixture f;
  auto full = Model::initialize(loop_config(4), kVocab);
  const auto continuous = train(full, f.data, f.oracle);

  auto first = Model::initialize(loop_config(2), kVocab);
  const auto head = train(first, f.data, f.oracle);
  auto resumed = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(first).dump()));
  resumed.config.epochs = 4;
  const auto tail = train(resumed, f.data, f.oracle);
  auto joined = head;
  joined.insert(joined.end(), tail.begin(), tail.end());
  CHECK(csv(joined) == csv(continuous));
  CHECK(resumed.denoiser.params() == full.denoiser.params());
  CHECK(resumed.ordering.params() == full.ordering.params());
}

TEST_CASE("training rejects datasets without correct records") {
  Fixture f;
  auto m = Model::initialize(loop_config(1), kVocab);
  CHECK_THROWS_AS(train(m, DiffusionDataset{}, f.oracle), TrainError);
  auto none = f.data;
  for (auto& r : none.records) r.correct = false;
  CHECK_THROWS_AS(train(m, none, f.oracle), TrainError);
}

TEST_CASE("metrics rows format nan and numbers stably") {
  std::ostringstream out;
  write_metrics_row(out, {3, 1.25, -0.5, std::nan(""), 2.0, 0.0});
  CHECK(out.str() == "3,1.25,-0.5,nan,2,0\n");
}
