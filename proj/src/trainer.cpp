#include "topodiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <set>

namespace topodiff {

std::string to_string(RewardSign s) { return s == RewardSign::pos ? "pos" : "neg"; }

RewardSign parse_reward_sign(const std::string& name) {
  if (name == "pos") return RewardSign::pos;
  if (name == "neg") return RewardSign::neg;
  throw std::invalid_argument("reward_sign must be 'pos' or 'neg', got '" + name + "'");
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("invalid config field '" + field + "': " + why);
  };
  if (trajectories < 1) fail("trajectories", "must be at least 1");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (!(lr_ordering > 0.0)) fail("lr_ordering", "must be positive");
  if (!(lr_denoiser > 0.0)) fail("lr_denoiser", "must be positive");
  if (!(lr_utility > 0.0)) fail("lr_utility", "must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta", "must lie in [0, 1]");
  if (!(alpha >= 0.0)) fail("alpha", "must be non-negative");
  if (utility_period < 1) fail("utility_period", "must be at least 1");
  if (!(utility_fraction > 0.0 && utility_fraction <= 1.0)) fail("utility_fraction", "must lie in (0, 1]");
  if (hidden < 1) fail("hidden", "must be at least 1");
  if (layers < 1) fail("layers", "must be at least 1");
  if (components < 1) fail("components", "must be at least 1");
  if (pe_dim % 2 != 0) fail("pe_dim", "must be even");
  if (mlp_hidden < 1) fail("mlp_hidden", "must be at least 1");
  if (query_dim < 1) fail("query_dim", "must be at least 1");
  if (!(cost_normalizer > 0.0)) fail("cost_normalizer", "must be positive");
}

OrderingConfig TrainConfig::ordering_config(std::size_t num_roles) const {
  OrderingConfig c;
  c.num_roles = num_roles;
  c.hidden = hidden;
  c.layers = layers;
  c.pe_dim = pe_dim;
  c.beta = beta;
  c.use_es = use_es;
  c.phi_on_g0 = phi_on_g0;
  return c;
}

DenoiserConfig TrainConfig::denoiser_config(std::size_t num_roles) const {
  DenoiserConfig c;
  c.num_roles = num_roles;
  c.query_dim = query_dim;
  c.hidden = hidden;
  c.layers = layers;
  c.components = components;
  c.pe_dim = pe_dim;
  c.mlp_hidden = mlp_hidden;
  c.beta = beta;
  c.use_es = use_es;
  c.use_query = use_query;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"trajectories", c.trajectories},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"lr_ordering", c.lr_ordering},
      {"lr_denoiser", c.lr_denoiser},
      {"lr_utility", c.lr_utility},
      {"beta", c.beta},
      {"alpha", c.alpha},
      {"utility_period", c.utility_period},
      {"utility_fraction", c.utility_fraction},
      {"seed", c.seed},
      {"reward_sign", to_string(c.reward_sign)},
      {"use_es", c.use_es},
      {"use_query", c.use_query},
      {"use_utility", c.use_utility},
      {"phi_on_g0", c.phi_on_g0},
      {"train_ordering", c.train_ordering},
      {"hidden", c.hidden},
      {"layers", c.layers},
      {"components", c.components},
      {"pe_dim", c.pe_dim},
      {"mlp_hidden", c.mlp_hidden},
      {"query_dim", c.query_dim},
      {"cost_normalizer", c.cost_normalizer},
      {"eval_samples", c.eval_samples},
      {"record_wall_time", c.record_wall_time},
  };
}

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const std::string& key, T& out) {
  const auto& v = doc.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw std::invalid_argument("invalid config field '" + key + "': expected true/false");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw std::invalid_argument("invalid config field '" + key + "': expected a non-negative integer");
    out = v.get<T>();
  } else {
    if (!v.is_number()) throw std::invalid_argument("invalid config field '" + key + "': expected a number");
    out = v.get<T>();
  }
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig c) {
  if (!doc.is_object()) throw std::invalid_argument("train config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "trajectories") read_field(doc, key, c.trajectories);
    else if (key == "batch_size") read_field(doc, key, c.batch_size);
    else if (key == "epochs") read_field(doc, key, c.epochs);
    else if (key == "lr_ordering") read_field(doc, key, c.lr_ordering);
    else if (key == "lr_denoiser") read_field(doc, key, c.lr_denoiser);
    else if (key == "lr_utility") read_field(doc, key, c.lr_utility);
    else if (key == "beta") read_field(doc, key, c.beta);
    else if (key == "alpha") read_field(doc, key, c.alpha);
    else if (key == "utility_period") read_field(doc, key, c.utility_period);
    else if (key == "utility_fraction") read_field(doc, key, c.utility_fraction);
    else if (key == "seed") read_field(doc, key, c.seed);
    else if (key == "reward_sign") {
      if (!value.is_string()) throw std::invalid_argument("invalid config field 'reward_sign': expected pos or neg");
      try {
        c.reward_sign = parse_reward_sign(value.get<std::string>());
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument("invalid config field 'reward_sign': expected pos or neg");
      }
    }
    else if (key == "use_es") read_field(doc, key, c.use_es);
    else if (key == "use_query") read_field(doc, key, c.use_query);
    else if (key == "use_utility") read_field(doc, key, c.use_utility);
    else if (key == "phi_on_g0") read_field(doc, key, c.phi_on_g0);
    else if (key == "train_ordering") read_field(doc, key, c.train_ordering);
    else if (key == "hidden") read_field(doc, key, c.hidden);
    else if (key == "layers") read_field(doc, key, c.layers);
    else if (key == "components") read_field(doc, key, c.components);
    else if (key == "pe_dim") read_field(doc, key, c.pe_dim);
    else if (key == "mlp_hidden") read_field(doc, key, c.mlp_hidden);
    else if (key == "query_dim") read_field(doc, key, c.query_dim);
    else if (key == "cost_normalizer") read_field(doc, key, c.cost_normalizer);
    else if (key == "eval_samples") read_field(doc, key, c.eval_samples);
    else if (key == "record_wall_time") read_field(doc, key, c.record_wall_time);
    else throw std::invalid_argument("unknown config field '" + key + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<std::size_t> DiffusionDataset::correct_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].correct) out.push_back(i);
  return out;
}

std::vector<std::size_t> DiffusionDataset::size_support() const {
  std::vector<std::size_t> out;
  for (const auto& r : records)
    if (r.correct) out.push_back(r.graph.size());
  return out;
}

DiffusionDataset build_diffusion_dataset(const std::vector<TopologyFamily>& families,
                                         const std::vector<std::size_t>& sizes, const RoleVocab& role_pool,
                                         const Oracle& oracle, const std::vector<QueryContext>& queries,
                                         double threshold, std::uint64_t seed) {
  if (!oracle) throw std::invalid_argument("dataset construction needs an oracle");
  DiffusionDataset d;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (std::size_t fi = 0; fi < families.size(); ++fi) {
      for (std::size_t si = 0; si < sizes.size(); ++si) {
        Rng seeder = derive_rng(seed, {qi, fi, si});
        DatasetRecord r;
        r.graph = baseline_topology(families[fi], sizes[si], role_pool, seeder());
        r.query = queries[qi];
        r.family = to_string(families[fi]);
        OracleResult score;
        try {
          score = oracle(r.graph, r.query);
        } catch (const std::exception& e) {
          throw TrainError("oracle failed on record " + std::to_string(d.records.size()) + " (task " +
                           r.query.task_id + ", family " + r.family + ", n=" + std::to_string(sizes[si]) +
                           "): " + e.what());
        }
        r.utility = score.utility;
        r.cost = score.cost;
        r.correct = score.utility >= threshold;
        d.records.push_back(std::move(r));
      }
    }
  }
  return d;
}

nlohmann::json dataset_to_json(const DiffusionDataset& d) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : d.records) {
    recs.push_back({{"graph", serialize(r.graph)},
                    {"task_id", r.query.task_id},
                    {"query", r.query.text},
                    {"family", r.family},
                    {"correct", r.correct},
                    {"utility", r.utility},
                    {"cost", r.cost}});
  }
  return {{"records", recs}};
}

DiffusionDataset dataset_from_json(const nlohmann::json& doc, const RoleVocab& vocab, std::size_t query_dim,
                                   const EmbeddingTable* table) {
  DiffusionDataset d;
  try {
    for (const auto& rec : doc.at("records")) {
      DatasetRecord r;
      r.graph = deserialize(rec.at("graph"), vocab);
      r.query = make_query(rec.at("task_id").get<std::string>(), rec.at("query").get<std::string>(), query_dim, table);
      r.family = rec.at("family").get<std::string>();
      r.correct = rec.at("correct").get<bool>();
      r.utility = rec.at("utility").get<double>();
      r.cost = rec.at("cost").get<double>();
      d.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset document: ") + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(TrainConfig c, RoleVocab v)
    : config(c),
      vocab(std::move(v)),
      ordering(c.ordering_config(vocab.size())),
      denoiser(c.denoiser_config(vocab.size()), vocab) {
  config.validate();
}

Model Model::initialize(const TrainConfig& config, const RoleVocab& vocab) {
  Model m(config, vocab);
  Rng r1 = derive_rng(config.seed, {0x0D});
  m.ordering.init(r1);
  Rng r2 = derive_rng(config.seed, {0x0E});
  m.denoiser.init(r2);
  return m;
}

std::size_t Model::sample_size(Rng& rng) const {
  if (size_support.empty()) return 4;
  return size_support[uniform_index(rng, size_support.size())];
}

namespace {

std::string config_hash(const TrainConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace

nlohmann::json checkpoint_to_json(const Model& m) {
  return {
      {"header",
       {{"format", "topodiff-checkpoint"},
        {"version", 1},
        {"seed", m.config.seed},
        {"step", m.epoch},
        {"config_hash", config_hash(m.config)}}},
      {"config", to_json(m.config)},
      {"roles", m.vocab.labels()},
      {"ordering", nn::params_to_json(m.ordering.params())},
      {"denoiser", nn::params_to_json(m.denoiser.params())},
      {"ordering_adam", nn::adam_to_json(m.ordering_adam)},
      {"denoiser_adam", nn::adam_to_json(m.denoiser_adam)},
      {"utility_adam", nn::adam_to_json(m.utility_adam)},
      {"reward_baseline", {m.reward_baseline.mean, m.reward_baseline.count}},
      {"utility_baseline", {m.utility_baseline.mean, m.utility_baseline.count}},
      {"size_support", m.size_support},
  };
}

Model checkpoint_from_json(const nlohmann::json& doc) {
  try {
    const auto& header = doc.at("header");
    if (header.at("format") != "topodiff-checkpoint") throw FormatError("not a checkpoint document");
    const auto config = train_config_from_json(doc.at("config"));
    if (header.at("config_hash").get<std::string>() != config_hash(config))
      throw FormatError("checkpoint config hash does not match its config");
    Model m(config, RoleVocab(doc.at("roles").get<std::vector<std::string>>()));
    nn::params_from_json(doc.at("ordering"), m.ordering.params());
    nn::params_from_json(doc.at("denoiser"), m.denoiser.params());
    m.ordering_adam = nn::adam_from_json(doc.at("ordering_adam"));
    m.denoiser_adam = nn::adam_from_json(doc.at("denoiser_adam"));
    m.utility_adam = nn::adam_from_json(doc.at("utility_adam"));
    m.reward_baseline = {doc.at("reward_baseline")[0].get<double>(), doc.at("reward_baseline")[1].get<std::uint64_t>()};
    m.utility_baseline = {doc.at("utility_baseline")[0].get<double>(),
                          doc.at("utility_baseline")[1].get<std::uint64_t>()};
    m.epoch = header.at("step").get<std::size_t>();
    m.size_support = doc.at("size_support").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Updates

VlbResult denoiser_vlb_update(Model& m, const CommGraph& g0, const QueryContext& q, Rng& rng) {
  if (g0.size() == 0) throw std::invalid_argument("vlb update on an empty graph");
  if (!is_acyclic(g0)) throw std::invalid_argument("vlb update needs an acyclic training graph");
  const auto M = m.config.trajectories;
  auto& params = m.denoiser.params();
  params.zero_grad();

  VlbResult out;
  for (std::size_t k = 0; k < M; ++k) {
    auto traj = m.ordering.sample_forward_trajectory(g0, rng);
    RewardRecord rec;
    rec.ordering = traj.ordering;
    rec.weights = traj.selection_probs;
    for (std::size_t t = 1; t <= g0.size(); ++t) {
      nn::Tape tape;
      auto ll = m.denoiser.step_log_likelihood(tape, traj.masked_graphs[t], q);
      const double w = traj.selection_probs[t - 1];
      const double value = ll.scalar();
      if (!std::isfinite(value)) throw nn::NonFiniteError("non-finite step log-likelihood; denoiser update skipped");
      rec.step_logliks.push_back(value);
      out.loss -= w * value / static_cast<double>(M);
      tape.backward(nn::scale(ll, -w / static_cast<double>(M)));
    }
    rec.reward = ordering_reward(rec.weights, rec.step_logliks, m.config.reward_sign);
    out.records.push_back(std::move(rec));
  }
  if (!std::isfinite(out.loss)) throw nn::NonFiniteError("non-finite VLB loss; denoiser update skipped");
  nn::adam_step(params, m.denoiser_adam, {m.config.lr_denoiser});
  return out;
}

double ordering_reward(const std::vector<double>& weights, const std::vector<double>& step_logliks, RewardSign sign) {
  if (weights.size() != step_logliks.size())
    throw std::invalid_argument("ordering reward: " + std::to_string(weights.size()) + " weights vs " +
                                std::to_string(step_logliks.size()) + " log-likelihoods");
  double s = 0.0;
  for (std::size_t t = 0; t < weights.size(); ++t) s += weights[t] * step_logliks[t];
  return sign == RewardSign::neg ? -s : s;
}

ReinforceResult ordering_reinforce_update(Model& m, const CommGraph& g0,
                                          const std::vector<std::vector<std::size_t>>& orderings,
                                          const std::vector<double>& rewards) {
  if (orderings.size() != rewards.size()) throw std::invalid_argument("one reward per ordering required");
  if (orderings.size() < 2) throw std::invalid_argument("REINFORCE with a batch-mean baseline needs M >= 2");
  double b = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw nn::NonFiniteError("non-finite ordering reward");
    b += r;
  }
  b /= static_cast<double>(rewards.size());
  // Identical rewards must cancel exactly; the rounded mean need not equal them.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) b = rewards.front();

  auto& params = m.ordering.params();
  params.zero_grad();
  ReinforceResult res;
  res.mean_reward = b;
  res.baseline = b;
  for (std::size_t k = 0; k < orderings.size(); ++k) {
    const double advantage = rewards[k] - b;
    m.reward_baseline.update(rewards[k]);
    if (advantage == 0.0) continue;
    res.stepped = true;
    nn::Tape tape;
    auto lp = m.ordering.trajectory_log_prob(tape, g0, orderings[k]);
    tape.backward(nn::scale(lp, -advantage));
  }
  if (res.stepped) nn::adam_step(params, m.ordering_adam, {m.config.lr_ordering});
  return res;
}

ReinforceResult ordering_reinforce_update(Model& m, const CommGraph& g0, const QueryContext& q, Rng& rng) {
  std::vector<std::vector<std::size_t>> orderings;
  std::vector<double> rewards;
  for (std::size_t k = 0; k < m.config.trajectories; ++k) {
    auto traj = m.ordering.sample_forward_trajectory(g0, rng);
    std::vector<double> lls;
    for (std::size_t t = 1; t <= g0.size(); ++t) {
      nn::Tape tape;
      lls.push_back(m.denoiser.step_log_likelihood(tape, traj.masked_graphs[t], q).scalar());
    }
    rewards.push_back(ordering_reward(traj.selection_probs, lls, m.config.reward_sign));
    orderings.push_back(std::move(traj.ordering));
  }
  return ordering_reinforce_update(m, g0, orderings, rewards);
}

UtilityResult utility_policy_update(Model& m, const QueryContext& q, const Oracle& oracle, Rng& rng,
                                    std::optional<std::size_t> n_target) {
  if (!oracle) throw std::invalid_argument("utility update needs an oracle");
  const auto B = m.config.batch_size;
  std::vector<std::unique_ptr<nn::Tape>> tapes;
  std::vector<double> returns;
  UtilityResult res;
  for (std::size_t k = 0; k < B; ++k) {
    tapes.push_back(std::make_unique<nn::Tape>());
    const auto n = n_target ? *n_target : m.sample_size(rng);
    auto gen = m.denoiser.generate_topology(q, n, rng, tapes.back().get());
    OracleResult score;
    try {
      score = oracle(gen.graph, q);
    } catch (const std::exception& e) {
      throw TrainError("oracle failed on utility sample " + std::to_string(k) + " for task " + q.task_id + ": " +
                       e.what());
    }
    if (!std::isfinite(score.utility) || !std::isfinite(score.cost))
      throw TrainError("oracle returned a non-finite score for task " + q.task_id);
    const double ret = score.utility - m.config.alpha * score.cost;
    res.mean_utility += score.utility / static_cast<double>(B);
    res.mean_return += ret / static_cast<double>(B);
    returns.push_back(ret);
    res.samples.push_back(std::move(gen));
  }

  res.baseline = m.utility_baseline.mean;
  auto& params = m.denoiser.params();
  params.zero_grad();
  for (std::size_t k = 0; k < B; ++k) {
    const double advantage = returns[k] - res.baseline;
    if (advantage == 0.0) continue;
    res.stepped = true;
    tapes[k]->backward(nn::scale(*res.samples[k].log_prob_var, -advantage / static_cast<double>(B)));
  }
  if (res.stepped) nn::adam_step(params, m.utility_adam, {m.config.lr_utility});
  m.utility_baseline.update(res.mean_return);
  return res;
}

// ---------------------------------------------------------------------------
// Training loop

void write_metrics_header(std::ostream& out) {
  out << "epoch,vlb_loss,mean_reward,mean_utility,mean_effective_size,wall_ms\n";
}

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

void write_metrics_row(std::ostream& out, const EpochMetrics& r) {
  out << r.epoch << ',' << fmt(r.vlb_loss) << ',' << fmt(r.mean_reward) << ',' << fmt(r.mean_utility) << ','
      << fmt(r.mean_effective_size) << ',' << fmt(r.wall_ms) << '\n';
}

double teacher_forced_log_likelihood(Model& m, const CommGraph& g0, const QueryContext& q, std::size_t samples,
                                     std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("teacher-forced log-likelihood needs at least one ordering");
  Rng rng = derive_rng(seed, {0x7F});
  double total = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto traj = m.ordering.sample_forward_trajectory(g0, rng);
    for (std::size_t t = 1; t <= g0.size(); ++t) {
      nn::Tape tape;
      total += m.denoiser.step_log_likelihood(tape, traj.masked_graphs[t], q).scalar();
    }
  }
  return total / static_cast<double>(samples);
}

double mean_generated_effective_size(Model& m, const std::vector<QueryContext>& queries, std::size_t count,
                                     Rng& rng) {
  if (count == 0 || queries.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& q = queries[i % queries.size()];
    auto gen = m.denoiser.generate_topology(q, m.sample_size(rng), rng);
    total += graph_stats(gen.graph, m.config.beta).mean_effective_size;
  }
  return total / static_cast<double>(count);
}

std::vector<EpochMetrics> train(Model& m, const DiffusionDataset& dataset, const Oracle& oracle,
                                const EpochCallback& on_epoch) {
  m.config.validate();
  if (dataset.records.empty()) throw TrainError("training dataset is empty");
  const auto correct = dataset.correct_indices();
  if (correct.empty()) throw TrainError("training dataset has no correct-labelled records");
  if (m.size_support.empty()) m.size_support = dataset.size_support();

  // Distinct queries in first-appearance order.
  std::vector<QueryContext> queries;
  std::set<std::string> seen;
  for (const auto& r : dataset.records)
    if (seen.insert(r.query.task_id).second) queries.push_back(r.query);

  std::vector<EpochMetrics> log;
  for (std::size_t e = m.epoch + 1; e <= m.config.epochs; ++e) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics row;
    row.epoch = e;
    Rng rng = derive_rng(m.config.seed, {e});

    auto order = correct;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_sum = 0.0, reward_sum = 0.0;
    for (std::size_t idx : order) {
      const auto& rec = dataset.records[idx];
      try {
        auto vlb = denoiser_vlb_update(m, rec.graph, rec.query, rng);
        loss_sum += vlb.loss;
        std::vector<std::vector<std::size_t>> orderings;
        std::vector<double> rewards;
        for (auto& r : vlb.records) {
          orderings.push_back(r.ordering);
          rewards.push_back(r.reward);
        }
        double mean = 0.0;
        for (double r : rewards) mean += r / static_cast<double>(rewards.size());
        if (m.config.train_ordering && orderings.size() >= 2) ordering_reinforce_update(m, rec.graph, orderings, rewards);
        reward_sum += mean;
      } catch (const std::exception& ex) {
        throw TrainError("epoch " + std::to_string(e) + ", record " + std::to_string(idx) + ": " + ex.what());
      }
    }
    row.vlb_loss = loss_sum / static_cast<double>(order.size());
    row.mean_reward = reward_sum / static_cast<double>(order.size());

    row.mean_utility = std::numeric_limits<double>::quiet_NaN();
    if (m.config.use_utility && oracle && e % m.config.utility_period == 0) {
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(m.config.utility_fraction * static_cast<double>(queries.size()))));
      std::vector<std::size_t> pick(queries.size());
      for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
      for (std::size_t i = 0; i < k; ++i) std::swap(pick[i], pick[i + uniform_index(rng, pick.size() - i)]);
      double util = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        try {
          util += utility_policy_update(m, queries[pick[i]], oracle, rng).mean_utility;
        } catch (const std::exception& ex) {
          throw TrainError("epoch " + std::to_string(e) + ", utility update: " + ex.what());
        }
      }
      row.mean_utility = util / static_cast<double>(k);
    }

    Rng eval = derive_rng(m.config.seed, {e, 0xE7A1});
    row.mean_effective_size = mean_generated_effective_size(m, queries, m.config.eval_samples, eval);
    m.epoch = e;
    if (m.config.record_wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    log.push_back(row);
    if (on_epoch) on_epoch(m, row);
  }
  return log;
}

}  // namespace topodiff
