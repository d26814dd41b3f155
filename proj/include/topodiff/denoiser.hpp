#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "topodiff/graph.hpp"
#include "topodiff/nn.hpp"
#include "topodiff/ordering.hpp"
#include "topodiff/query.hpp"
#include "topodiff/rng.hpp"

namespace topodiff {

// Connection between the node being recovered and one already-visible node.
enum class EdgeCategory : std::size_t { none = 0, fwd = 1, rev = 2, both = 3 };
inline constexpr std::size_t kEdgeCategories = 4;

struct DenoiserConfig {
  std::size_t num_roles = 5;
  std::size_t query_dim = kDefaultQueryDim;
  std::size_t hidden = 32;
  std::size_t layers = 3;
  std::size_t components = 3;
  std::size_t pe_dim = 16;
  std::size_t mlp_hidden = 32;
  double beta = 0.7;
  bool use_es = true;
  bool use_query = true;
};

struct AttentionResult {
  std::vector<nn::Var> h;
  // alphas[i][k] weights the k-th entry of in_neighbors[i].
  std::vector<std::vector<double>> alphas;
};

/// One graph-attention round over directed edges:
///   alpha_ij = softmax_j( ReLU(a^T [W h_i || W h_j]) ) over in-neighbours j of i
///   h_i'     = ReLU( sum_j alpha_ij W h_j )
/// Nodes without in-neighbours get ReLU(0) = 0. Entries of `h` for nodes not
/// listed in `active` are ignored and returned unchanged.
AttentionResult attention_propagate(nn::Tape& tape, nn::Var w, nn::Var a, const std::vector<nn::Var>& h,
                                    const std::vector<std::vector<std::size_t>>& in_neighbors,
                                    const std::vector<std::size_t>& active);

// Joint distribution over the edge categories between a new node and the
// existing nodes: sum_c pi_c prod_j p_c(cat_j).
struct EdgeMixture {
  nn::Var log_weights;                          // size C
  std::vector<std::vector<nn::Var>> log_probs;  // [c][j], each size 4

  std::size_t components() const { return log_probs.size(); }
  std::size_t existing() const { return log_probs.empty() ? 0 : log_probs.front().size(); }

  nn::Var log_likelihood(nn::Tape& tape, const std::vector<EdgeCategory>& assignment) const;
  double log_likelihood_value(const std::vector<EdgeCategory>& assignment) const;
  // P(category | mixture), marginalised over components, for pair j.
  std::array<double, kEdgeCategories> marginal(std::size_t j) const;
  std::vector<EdgeCategory> sample(Rng& rng) const;
};

struct DenoiseStep {
  MaskedGraph graph;
  std::size_t node = 0;
  std::size_t role = 0;
  std::vector<std::size_t> existing;
  std::vector<EdgeCategory> categories;
  nn::Var log_likelihood;
  double role_log_prob = 0.0;
  double edge_log_prob = 0.0;
  EdgeScores edge_scores;  // marginal probability of each added edge
};

struct GeneratedTopology {
  CommGraph graph;      // execution-ready (acyclic)
  CommGraph raw;        // as sampled, before cycle removal
  EdgeScores edge_scores;
  std::vector<Edge> removed;
  std::vector<std::size_t> roles;
  double log_prob = 0.0;
  std::optional<nn::Var> log_prob_var;
};

// Query-conditioned reverse process p(G_t | G_{t+1}, Q).
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, RoleVocab vocab);

  const DenoiserConfig& config() const { return config_; }
  const RoleVocab& vocab() const { return vocab_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  void init(Rng& rng) { params_.init_uniform(rng); }

  std::size_t feature_dim() const { return config_.num_roles + 1 + config_.pe_dim; }

  // Node the next reverse step recovers: the last node masked.
  static std::size_t next_node(const MaskedGraph& g);

  /// Final per-node vectors for the visible nodes plus the node being
  /// recovered. Every visible node additionally sends to the recovered node
  /// so its embedding reads the partial graph; each round is residual.
  std::vector<nn::Var> embed_masked_graph(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q,
                                          bool apply_bias = true);

  nn::Var role_log_probs(nn::Tape& tape, nn::Var h_new);
  std::vector<double> predict_role(nn::Tape& tape, nn::Var h_new);

  // Edge-head input for the new node once its role is known.
  nn::Var edge_input(nn::Tape& tape, nn::Var h_new, std::size_t role);
  EdgeMixture predict_edges_mixture(nn::Tape& tape, nn::Var h_new, const std::vector<nn::Var>& h_existing);

  // Log-likelihood of recovering next_node(g) with its true role and its true
  // connections to the visible nodes, read from g.base.
  nn::Var step_log_likelihood(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q);

  // Samples the next node's role and connections and unmasks it.
  DenoiseStep denoise_step(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q, Rng& rng);

  // Fully masked graph of n slots; slot 0 is recovered first.
  MaskedGraph empty_canvas(std::size_t n) const;

  // With a tape, the summed step log-likelihood is also returned as a node.
  GeneratedTopology generate_topology(const QueryContext& q, std::size_t n_target, Rng& rng,
                                      nn::Tape* tape = nullptr);

 private:
  void check_query(const QueryContext& q) const;
  std::vector<double> node_features(const MaskedGraph& g, std::size_t node) const;

  DenoiserConfig config_;
  RoleVocab vocab_;
  nn::ParamSet params_;
};

EdgeCategory category_between(const CommGraph& g, std::size_t new_node, std::size_t existing);

}  // namespace topodiff
