#include "topodiff/ordering.hpp"

#include <algorithm>
#include <stdexcept>

namespace topodiff {

MaskedGraph MaskedGraph::unmasked(CommGraph g) {
  MaskedGraph m;
  m.masked.assign(g.size(), false);
  m.base = std::move(g);
  return m;
}

MaskedGraph MaskedGraph::from_prefix(CommGraph g, std::vector<std::size_t> prefix) {
  MaskedGraph m = unmasked(std::move(g));
  for (auto v : prefix) m.mask(v);
  return m;
}

std::size_t MaskedGraph::masked_count() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

void MaskedGraph::mask(std::size_t v) {
  if (v >= base.size()) throw std::out_of_range("mask: node " + std::to_string(v) + " not in graph");
  if (masked[v]) throw std::invalid_argument("mask: node " + std::to_string(v) + " already masked");
  masked[v] = true;
  prefix.push_back(v);
}

std::vector<bool> MaskedGraph::visible_mask() const {
  std::vector<bool> vis(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) vis[i] = !masked[i];
  return vis;
}

CommGraph MaskedGraph::visible() const { return visible_subgraph(base, visible_mask()); }

void MaskedGraph::validate() const {
  if (masked.size() != base.size()) throw std::logic_error("masked graph: mask length differs from node count");
  if (prefix.size() != masked_count()) throw std::logic_error("masked graph: prefix length differs from masked count");
  std::vector<bool> seen(base.size(), false);
  for (auto v : prefix) {
    if (v >= base.size() || seen[v] || !masked[v]) throw std::logic_error("masked graph: inconsistent prefix");
    seen[v] = true;
  }
}

OrderingNet::OrderingNet(OrderingConfig config) : config_(config) {
  if (config_.pe_dim % 2 != 0) throw std::invalid_argument("ordering net: pe_dim must be even");
  if (config_.layers == 0) throw std::invalid_argument("ordering net: needs at least one layer");
  const auto H = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto in_dim = l == 0 ? feature_dim() : H;
    const auto p = "ord.l" + std::to_string(l) + ".";
    params_.add(p + "self", {H, in_dim}, in_dim);
    params_.add(p + "in", {H, in_dim}, in_dim);
    params_.add(p + "out", {H, in_dim}, in_dim);
    params_.add(p + "b", {H}, in_dim);
  }
  params_.add("ord.score.w", {1, H}, H);
  params_.add("ord.score.b", {1}, H);
}

void OrderingNet::check_prefix(const CommGraph& g0, const std::vector<std::size_t>& prefix) const {
  std::vector<bool> seen(g0.size(), false);
  for (auto v : prefix) {
    if (v >= g0.size()) throw std::out_of_range("ordering prefix references unknown node " + std::to_string(v));
    if (seen[v]) throw std::invalid_argument("ordering prefix repeats node " + std::to_string(v));
    seen[v] = true;
  }
}

std::vector<double> OrderingNet::node_features(const CommGraph& g0, const std::vector<std::size_t>& prefix,
                                               std::size_t node) const {
  std::vector<double> f(feature_dim(), 0.0);
  f[g0.role(node)] = 1.0;
  std::size_t position = prefix.size() + 1;
  bool is_masked = false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (prefix[i] == node) {
      position = i + 1;
      is_masked = true;
      break;
    }
  }
  f[config_.num_roles] = is_masked ? 1.0 : 0.0;
  const auto pe = nn::positional_encoding(position, config_.pe_dim);
  std::copy(pe.begin(), pe.end(), f.begin() + static_cast<std::ptrdiff_t>(config_.num_roles + 1));
  return f;
}

nn::Var OrderingNet::node_scores(nn::Tape& tape, const CommGraph& g0, const std::vector<std::size_t>& prefix) {
  check_prefix(g0, prefix);
  const auto n = g0.size();
  std::vector<std::vector<std::size_t>> ins(n), outs(n);
  for (std::size_t v = 0; v < n; ++v) {
    ins[v] = g0.in_neighbors(v);
    outs[v] = g0.out_neighbors(v);
  }

  std::vector<nn::Var> h(n);
  for (std::size_t v = 0; v < n; ++v) h[v] = tape.constant(node_features(g0, prefix, v));

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto p = "ord.l" + std::to_string(l) + ".";
    auto w_self = tape.param(params_.get(p + "self"));
    auto w_in = tape.param(params_.get(p + "in"));
    auto w_out = tape.param(params_.get(p + "out"));
    auto bias = tape.param(params_.get(p + "b"));

    // Message along j -> v uses W_in h_j at v; along v -> j uses W_out h_j at v.
    std::vector<nn::Var> via_in(n), via_out(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (!outs[j].empty()) via_in[j] = nn::matvec(w_in, h[j]);
      if (!ins[j].empty()) via_out[j] = nn::matvec(w_out, h[j]);
    }
    std::vector<nn::Var> next(n);
    for (std::size_t v = 0; v < n; ++v) {
      auto acc = nn::affine(h[v], w_self, bias);
      if (!ins[v].empty()) {
        auto s = via_in[ins[v][0]];
        for (std::size_t k = 1; k < ins[v].size(); ++k) s = nn::add(s, via_in[ins[v][k]]);
        acc = nn::add(acc, nn::scale(s, 1.0 / static_cast<double>(ins[v].size())));
      }
      if (!outs[v].empty()) {
        auto s = via_out[outs[v][0]];
        for (std::size_t k = 1; k < outs[v].size(); ++k) s = nn::add(s, via_out[outs[v][k]]);
        acc = nn::add(acc, nn::scale(s, 1.0 / static_cast<double>(outs[v].size())));
      }
      next[v] = nn::relu(acc);
    }
    h = std::move(next);
  }

  auto w = tape.param(params_.get("ord.score.w"));
  auto b = tape.param(params_.get("ord.score.b"));
  std::vector<nn::Var> scores(n);
  for (std::size_t v = 0; v < n; ++v) scores[v] = nn::affine(h[v], w, b);
  return nn::concat(scores);
}

std::vector<double> OrderingNet::node_scores(const CommGraph& g0, const std::vector<std::size_t>& prefix) {
  nn::Tape tape;
  auto s = node_scores(tape, g0, prefix);
  return {s.value().begin(), s.value().end()};
}

std::vector<double> OrderingNet::phi(const CommGraph& g0, const std::vector<std::size_t>& prefix) const {
  if (!config_.use_es) return std::vector<double>(g0.size(), 0.0);
  if (config_.phi_on_g0) return combined_effective_sizes(g0, config_.beta);
  std::vector<bool> visible(g0.size(), true);
  for (auto v : prefix) visible[v] = false;
  return combined_effective_sizes(visible_subgraph(g0, visible), config_.beta);
}

nn::Var OrderingNet::log_selection(nn::Tape& tape, const CommGraph& g0, const std::vector<std::size_t>& prefix) {
  if (prefix.size() >= g0.size()) throw std::invalid_argument("selection: every node is already masked");
  auto scores = node_scores(tape, g0, prefix);
  auto logits = nn::add(scores, tape.constant(phi(g0, prefix)));
  std::vector<bool> masked(g0.size(), false);
  for (auto v : prefix) masked[v] = true;
  return nn::log_softmax(logits, masked);
}

std::vector<double> OrderingNet::selection_distribution(const CommGraph& g0, const std::vector<std::size_t>& prefix) {
  if (prefix.size() >= g0.size()) throw std::invalid_argument("selection: every node is already masked");
  check_prefix(g0, prefix);
  auto logits = node_scores(g0, prefix);
  const auto bias = phi(g0, prefix);
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += bias[i];
  std::vector<bool> masked(g0.size(), false);
  for (auto v : prefix) masked[v] = true;
  return nn::softmax_normalize(logits, masked);
}

ForwardTrajectory OrderingNet::sample_forward_trajectory(const CommGraph& g0, Rng& rng) {
  if (g0.size() == 0) throw std::invalid_argument("forward trajectory of an empty graph");
  ForwardTrajectory traj;
  MaskedGraph current = MaskedGraph::unmasked(g0);
  traj.masked_graphs.push_back(current);
  for (std::size_t t = 0; t < g0.size(); ++t) {
    const auto probs = selection_distribution(g0, current.prefix);
    const auto pick = sample_categorical(rng, probs);
    traj.ordering.push_back(pick);
    traj.selection_probs.push_back(probs[pick]);
    current.mask(pick);
    traj.masked_graphs.push_back(current);
  }
  return traj;
}

nn::Var OrderingNet::trajectory_log_prob(nn::Tape& tape, const CommGraph& g0,
                                         const std::vector<std::size_t>& ordering) {
  if (ordering.size() != g0.size()) throw std::invalid_argument("ordering must cover every node");
  std::vector<nn::Var> terms;
  std::vector<std::size_t> prefix;
  for (auto v : ordering) {
    auto logp = log_selection(tape, g0, prefix);
    terms.push_back(nn::element(logp, v));
    prefix.push_back(v);
  }
  return nn::sum(nn::concat(terms));
}

}  // namespace topodiff
