#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topodiff/denoiser.hpp"
#include "topodiff/graph.hpp"
#include "topodiff/nn.hpp"
#include "topodiff/ordering.hpp"
#include "topodiff/query.hpp"
#include "topodiff/rng.hpp"

namespace topodiff {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleResult {
  double utility = 0.0;
  double cost = 0.0;
};

// Scores a graph for a query. Must be deterministic for reproducible runs.
using Oracle = std::function<OracleResult(const CommGraph&, const QueryContext&)>;

// pos: reward = +weighted reconstruction log-likelihood.
// neg: reward = -weighted reconstruction log-likelihood.
enum class RewardSign { pos, neg };
std::string to_string(RewardSign s);
RewardSign parse_reward_sign(const std::string& name);

struct TrainConfig {
  std::size_t trajectories = 4;  // M, forward trajectories per graph
  std::size_t batch_size = 8;    // B, generations per utility update
  std::size_t epochs = 20;
  double lr_ordering = 5e-4;
  double lr_denoiser = 1e-4;
  double lr_utility = 1e-4;
  double beta = 0.7;
  double alpha = 0.1;
  std::size_t utility_period = 5;
  double utility_fraction = 0.2;
  std::uint64_t seed = 0;
  RewardSign reward_sign = RewardSign::pos;

  bool use_es = true;
  bool use_query = true;
  bool use_utility = true;
  bool phi_on_g0 = false;
  bool train_ordering = true;

  std::size_t hidden = 32;
  std::size_t layers = 3;
  std::size_t components = 3;
  std::size_t pe_dim = 16;
  std::size_t mlp_hidden = 32;
  std::size_t query_dim = kDefaultQueryDim;

  double cost_normalizer = 10.0;
  std::size_t eval_samples = 8;    // generations per epoch for the effective-size metric
  bool record_wall_time = false;   // wall_ms stays 0 unless set, keeping metrics byte-stable

  void validate() const;  // throws std::invalid_argument naming the field
  OrderingConfig ordering_config(std::size_t num_roles) const;
  DenoiserConfig denoiser_config(std::size_t num_roles) const;
};

nlohmann::json to_json(const TrainConfig& c);
// Unknown keys and wrongly typed values are rejected with the key named.
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

struct RunningMean {
  double mean = 0.0;
  std::uint64_t count = 0;

  void update(double x) {
    ++count;
    mean += (x - mean) / static_cast<double>(count);
  }
  friend bool operator==(const RunningMean&, const RunningMean&) = default;
};

// ---------------------------------------------------------------------------
// Dataset

struct DatasetRecord {
  CommGraph graph;
  QueryContext query;
  std::string family;
  bool correct = false;
  double utility = 0.0;
  double cost = 0.0;
};

struct DiffusionDataset {
  std::vector<DatasetRecord> records;

  std::vector<std::size_t> correct_indices() const;
  // Node counts of the correct records, in record order.
  std::vector<std::size_t> size_support() const;
};

// One record per query x family x size; label = utility >= threshold.
DiffusionDataset build_diffusion_dataset(const std::vector<TopologyFamily>& families,
                                         const std::vector<std::size_t>& sizes, const RoleVocab& role_pool,
                                         const Oracle& oracle, const std::vector<QueryContext>& queries,
                                         double threshold, std::uint64_t seed);

nlohmann::json dataset_to_json(const DiffusionDataset& d);
// Embeddings are recomputed from the stored query text (or looked up in `table`).
DiffusionDataset dataset_from_json(const nlohmann::json& doc, const RoleVocab& vocab,
                                   std::size_t query_dim = kDefaultQueryDim, const EmbeddingTable* table = nullptr);

// ---------------------------------------------------------------------------
// Model state

struct Model {
  TrainConfig config;
  RoleVocab vocab;
  OrderingNet ordering;
  Denoiser denoiser;
  nn::AdamState ordering_adam;
  nn::AdamState denoiser_adam;
  nn::AdamState utility_adam;  // separate moments for the utility gradient on the same tensors
  RunningMean reward_baseline;
  RunningMean utility_baseline;
  std::size_t epoch = 0;                 // completed epochs
  std::vector<std::size_t> size_support;  // empirical node counts for generation

  Model(TrainConfig config, RoleVocab vocab);
  static Model initialize(const TrainConfig& config, const RoleVocab& vocab);

  // Node count drawn from the empirical support (4 when empty).
  std::size_t sample_size(Rng& rng) const;
};

nlohmann::json checkpoint_to_json(const Model& m);
Model checkpoint_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Updates

// Per-trajectory record of one forward ordering and its reverse-step
// reconstruction log-likelihoods; step_logliks[t] scores recovering ordering[t].
struct RewardRecord {
  std::vector<std::size_t> ordering;
  std::vector<double> weights;  // selection probability of each draw
  std::vector<double> step_logliks;
  double reward = 0.0;
};

struct VlbResult {
  double loss = 0.0;  // (1/M) sum_m sum_t -w_t log p(step t)
  std::vector<RewardRecord> records;
};

/// Samples M orderings, accumulates the weighted teacher-forced step
/// gradients and applies one Adam step to the denoiser. The reported
/// log-likelihoods are those before the step.
VlbResult denoiser_vlb_update(Model& m, const CommGraph& g0, const QueryContext& q, Rng& rng);

// sign neg: -sum_t w_t * loglik_t; sign pos: the negation.
double ordering_reward(const std::vector<double>& weights, const std::vector<double>& step_logliks, RewardSign sign);

struct ReinforceResult {
  double mean_reward = 0.0;
  double baseline = 0.0;
  bool stepped = false;
};

/// grad_psi = -sum_m (R_m - b) grad log q(pi_m) with b the batch mean; the
/// gradient is left in the ordering tensors' grad fields. No optimiser step
/// is taken when every centred reward is zero.
ReinforceResult ordering_reinforce_update(Model& m, const CommGraph& g0,
                                          const std::vector<std::vector<std::size_t>>& orderings,
                                          const std::vector<double>& rewards);

// Samples M orderings, scores them with the current denoiser and updates.
ReinforceResult ordering_reinforce_update(Model& m, const CommGraph& g0, const QueryContext& q, Rng& rng);

struct UtilityResult {
  double mean_utility = 0.0;
  double mean_return = 0.0;
  double baseline = 0.0;  // baseline used for this batch
  bool stepped = false;
  std::vector<GeneratedTopology> samples;
};

/// Generates B topologies, scores u - alpha * c and applies
/// grad_theta = -(1/B) sum_k (return_k - b) grad log p(G_k | Q) with b the
/// running mean of earlier batch returns. Any oracle failure aborts before
/// parameters change.
UtilityResult utility_policy_update(Model& m, const QueryContext& q, const Oracle& oracle, Rng& rng,
                                    std::optional<std::size_t> n_target = std::nullopt);

// ---------------------------------------------------------------------------
// Training loop

struct EpochMetrics {
  std::size_t epoch = 0;
  double vlb_loss = 0.0;
  double mean_reward = 0.0;
  double mean_utility = 0.0;  // NaN when no utility update ran
  double mean_effective_size = 0.0;
  double wall_ms = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& row);

// Epoch e draws from derive_rng(seed, {e, ...}), so a run resumed from the
// checkpoint of epoch e continues exactly as an uninterrupted one.
using EpochCallback = std::function<void(const Model&, const EpochMetrics&)>;
std::vector<EpochMetrics> train(Model& m, const DiffusionDataset& dataset, const Oracle& oracle,
                                const EpochCallback& on_epoch = {});

// Mean over `samples` orderings drawn from the ordering net (stream `seed`)
// of the summed teacher-forced step log-likelihoods of g0.
double teacher_forced_log_likelihood(Model& m, const CommGraph& g0, const QueryContext& q, std::size_t samples,
                                     std::uint64_t seed);

// Mean combined effective size (over active nodes) of `count` generations.
double mean_generated_effective_size(Model& m, const std::vector<QueryContext>& queries, std::size_t count,
                                     Rng& rng);

}  // namespace topodiff
