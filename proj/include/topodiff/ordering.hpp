#pragma once

#include <cstddef>
#include <vector>

#include "topodiff/graph.hpp"
#include "topodiff/nn.hpp"
#include "topodiff/rng.hpp"

namespace topodiff {

// A graph part-way through the forward masking process. `prefix` lists the
// masked nodes in the order they were masked; edges touching a masked node
// are hidden.
struct MaskedGraph {
  CommGraph base;
  std::vector<bool> masked;
  std::vector<std::size_t> prefix;

  static MaskedGraph unmasked(CommGraph g);
  static MaskedGraph from_prefix(CommGraph g, std::vector<std::size_t> prefix);

  std::size_t step() const { return prefix.size(); }
  std::size_t masked_count() const;
  bool fully_masked() const { return prefix.size() == base.size(); }
  void mask(std::size_t v);
  CommGraph visible() const;
  std::vector<bool> visible_mask() const;
  void validate() const;

  friend bool operator==(const MaskedGraph&, const MaskedGraph&) = default;
};

struct OrderingConfig {
  std::size_t num_roles = 5;
  std::size_t hidden = 32;
  std::size_t layers = 3;
  std::size_t pe_dim = 16;
  double beta = 0.7;
  bool use_es = true;
  bool phi_on_g0 = false;
};

struct ForwardTrajectory {
  std::vector<std::size_t> ordering;
  std::vector<MaskedGraph> masked_graphs;  // [t] has the first t entries of ordering masked
  std::vector<double> selection_probs;     // probability of each draw when it was made
};

// Relational message-passing ordering policy. Node features are role one-hot,
// mask flag and a sinusoidal encoding of the masking step; relations are
// in-edge, out-edge and self.
class OrderingNet {
 public:
  explicit OrderingNet(OrderingConfig config);

  const OrderingConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  void init(Rng& rng) { params_.init_uniform(rng); }

  std::size_t feature_dim() const { return config_.num_roles + 1 + config_.pe_dim; }
  std::vector<double> node_features(const CommGraph& g0, const std::vector<std::size_t>& prefix,
                                    std::size_t node) const;

  nn::Var node_scores(nn::Tape& tape, const CommGraph& g0, const std::vector<std::size_t>& prefix);
  std::vector<double> node_scores(const CommGraph& g0, const std::vector<std::size_t>& prefix);

  // Redundancy bias added to each candidate's score.
  std::vector<double> phi(const CommGraph& g0, const std::vector<std::size_t>& prefix) const;

  nn::Var log_selection(nn::Tape& tape, const CommGraph& g0, const std::vector<std::size_t>& prefix);
  std::vector<double> selection_distribution(const CommGraph& g0, const std::vector<std::size_t>& prefix);

  ForwardTrajectory sample_forward_trajectory(const CommGraph& g0, Rng& rng);
  nn::Var trajectory_log_prob(nn::Tape& tape, const CommGraph& g0, const std::vector<std::size_t>& ordering);

 private:
  void check_prefix(const CommGraph& g0, const std::vector<std::size_t>& prefix) const;

  OrderingConfig config_;
  nn::ParamSet params_;
};

}  // namespace topodiff
