#include "topodiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace topodiff {

namespace {

std::vector<double> one_hot(std::size_t size, std::size_t index) {
  std::vector<double> v(size, 0.0);
  v.at(index) = 1.0;
  return v;
}

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

EdgeCategory category_between(const CommGraph& g, std::size_t new_node, std::size_t existing) {
  const bool out = g.has_edge(new_node, existing);
  const bool in = g.has_edge(existing, new_node);
  if (out && in) return EdgeCategory::both;
  if (out) return EdgeCategory::fwd;
  if (in) return EdgeCategory::rev;
  return EdgeCategory::none;
}

AttentionResult attention_propagate(nn::Tape& tape, nn::Var w, nn::Var a, const std::vector<nn::Var>& h,
                                    const std::vector<std::vector<std::size_t>>& in_neighbors,
                                    const std::vector<std::size_t>& active) {
  const std::size_t hidden = tape.rows(w.id());
  if (a.size() != 2 * hidden) throw nn::ShapeError("attention vector must have size 2 * hidden");
  AttentionResult out;
  out.h = h;
  out.alphas.assign(h.size(), {});

  auto a_dst = nn::slice(a, 0, hidden);
  auto a_src = nn::slice(a, hidden, hidden);
  std::vector<nn::Var> z(h.size()), s_dst(h.size()), s_src(h.size());
  for (auto i : active) {
    z[i] = nn::matvec(w, h[i]);
    s_dst[i] = nn::dot(a_dst, z[i]);
    s_src[i] = nn::dot(a_src, z[i]);
  }
  for (auto i : active) {
    const auto& hood = in_neighbors[i];
    if (hood.empty()) {
      out.h[i] = tape.constant(std::vector<double>(hidden, 0.0));
      continue;
    }
    std::vector<nn::Var> scores;
    scores.reserve(hood.size());
    for (auto j : hood) scores.push_back(nn::relu(nn::add(s_dst[i], s_src[j])));
    auto alpha = nn::softmax(nn::concat(scores), std::vector<bool>(hood.size(), false));
    out.alphas[i].assign(alpha.value().begin(), alpha.value().end());
    nn::Var agg = nn::scale(z[hood[0]], nn::element(alpha, 0));
    for (std::size_t k = 1; k < hood.size(); ++k) agg = nn::add(agg, nn::scale(z[hood[k]], nn::element(alpha, k)));
    out.h[i] = nn::relu(agg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EdgeMixture

nn::Var EdgeMixture::log_likelihood(nn::Tape& tape, const std::vector<EdgeCategory>& assignment) const {
  if (assignment.size() != existing()) throw std::invalid_argument("edge assignment length mismatch");
  (void)tape;
  std::vector<nn::Var> terms;
  for (std::size_t c = 0; c < components(); ++c) {
    nn::Var acc = nn::element(log_weights, c);
    for (std::size_t j = 0; j < assignment.size(); ++j)
      acc = nn::add(acc, nn::element(log_probs[c][j], static_cast<std::size_t>(assignment[j])));
    terms.push_back(acc);
  }
  return nn::logsumexp(nn::concat(terms));
}

double EdgeMixture::log_likelihood_value(const std::vector<EdgeCategory>& assignment) const {
  if (assignment.size() != existing()) throw std::invalid_argument("edge assignment length mismatch");
  std::vector<double> terms;
  for (std::size_t c = 0; c < components(); ++c) {
    double acc = log_weights.value()[c];
    for (std::size_t j = 0; j < assignment.size(); ++j)
      acc += log_probs[c][j].value()[static_cast<std::size_t>(assignment[j])];
    terms.push_back(acc);
  }
  return log_sum_exp(terms);
}

std::array<double, kEdgeCategories> EdgeMixture::marginal(std::size_t j) const {
  std::array<double, kEdgeCategories> p{};
  for (std::size_t c = 0; c < components(); ++c) {
    const double w = std::exp(log_weights.value()[c]);
    for (std::size_t k = 0; k < kEdgeCategories; ++k) p[k] += w * std::exp(log_probs[c][j].value()[k]);
  }
  return p;
}

std::vector<EdgeCategory> EdgeMixture::sample(Rng& rng) const {
  std::vector<double> w(components());
  for (std::size_t c = 0; c < components(); ++c) w[c] = std::exp(log_weights.value()[c]);
  const auto c = sample_categorical(rng, w);
  std::vector<EdgeCategory> out(existing());
  for (std::size_t j = 0; j < existing(); ++j) {
    std::vector<double> p(kEdgeCategories);
    for (std::size_t k = 0; k < kEdgeCategories; ++k) p[k] = std::exp(log_probs[c][j].value()[k]);
    out[j] = static_cast<EdgeCategory>(sample_categorical(rng, p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(DenoiserConfig config, RoleVocab vocab) : config_(config), vocab_(std::move(vocab)) {
  if (vocab_.size() != config_.num_roles) throw std::invalid_argument("denoiser: role vocabulary size mismatch");
  if (config_.pe_dim % 2 != 0) throw std::invalid_argument("denoiser: pe_dim must be even");
  if (config_.components == 0) throw std::invalid_argument("denoiser: needs at least one mixture component");
  const auto H = config_.hidden;
  const auto M = config_.mlp_hidden;
  const auto R = config_.num_roles;
  const auto C = config_.components;
  const auto F = feature_dim();

  params_.add("den.in.W", {H, F}, F);
  params_.add("den.in.b", {H}, F);
  params_.add("den.query.W", {H, config_.query_dim}, config_.query_dim);
  params_.add("den.query.b", {H}, config_.query_dim);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    params_.add("den.gat" + std::to_string(l) + ".W", {H, H}, H);
    params_.add("den.gat" + std::to_string(l) + ".a", {2 * H}, 2 * H);
  }
  params_.add("den.role.W1", {M, H}, H);
  params_.add("den.role.b1", {M}, H);
  params_.add("den.role.W2", {R, M}, M);
  params_.add("den.role.b2", {R}, M);

  params_.add("den.edge.role", {H, R}, R);
  params_.add("den.mix.W1", {M, H}, H);
  params_.add("den.mix.b1", {M}, H);
  params_.add("den.mix.W2", {C, M}, M);
  params_.add("den.mix.b2", {C}, M);
  params_.add("den.edge.comp", {C, H}, H);
  params_.add("den.edge.W1_new", {M, H}, 3 * H);
  params_.add("den.edge.W1_old", {M, H}, 3 * H);
  params_.add("den.edge.W1_comp", {M, H}, 3 * H);
  params_.add("den.edge.b1", {M}, 3 * H);
  params_.add("den.edge.W2", {kEdgeCategories, M}, M);
  params_.add("den.edge.b2", {kEdgeCategories}, M);
}

void Denoiser::check_query(const QueryContext& q) const {
  if (q.embedding.size() != config_.query_dim) {
    throw nn::ShapeError("query embedding has dimension " + std::to_string(q.embedding.size()) +
                         ", denoiser expects " + std::to_string(config_.query_dim));
  }
}

std::size_t Denoiser::next_node(const MaskedGraph& g) {
  if (g.prefix.empty()) throw std::invalid_argument("denoise: no masked nodes remain");
  return g.prefix.back();
}

std::vector<double> Denoiser::node_features(const MaskedGraph& g, std::size_t node) const {
  std::vector<double> f(feature_dim(), 0.0);
  std::size_t position = g.prefix.size() + 1;
  if (g.masked[node]) {
    const auto it = std::find(g.prefix.begin(), g.prefix.end(), node);
    position = static_cast<std::size_t>(it - g.prefix.begin()) + 1;
    f[config_.num_roles] = 1.0;
  } else {
    f[g.base.role(node)] = 1.0;
  }
  const auto pe = nn::positional_encoding(position, config_.pe_dim);
  std::copy(pe.begin(), pe.end(), f.begin() + static_cast<std::ptrdiff_t>(config_.num_roles + 1));
  return f;
}

std::vector<nn::Var> Denoiser::embed_masked_graph(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q,
                                                  bool apply_bias) {
  check_query(q);
  g.validate();
  const auto n = g.base.size();
  const auto target = next_node(g);

  std::vector<std::size_t> active;
  for (std::size_t v = 0; v < n; ++v)
    if (!g.masked[v]) active.push_back(v);
  const auto visible_nodes = active;
  active.push_back(target);

  const CommGraph visible = g.visible();
  std::vector<std::vector<std::size_t>> hood(n);
  for (auto v : visible_nodes) hood[v] = visible.in_neighbors(v);
  hood[target] = visible_nodes;

  auto w_in = tape.param(params_.get("den.in.W"));
  auto b_in = tape.param(params_.get("den.in.b"));
  std::optional<nn::Var> query_vec;
  if (config_.use_query) {
    query_vec = nn::affine(tape.constant(q.embedding), tape.param(params_.get("den.query.W")),
                           tape.param(params_.get("den.query.b")));
  }

  std::vector<nn::Var> h(n);
  for (auto v : active) {
    h[v] = nn::affine(tape.constant(node_features(g, v)), w_in, b_in);
    if (query_vec) h[v] = nn::add(h[v], *query_vec);
  }

  for (std::size_t l = 0; l < config_.layers; ++l) {
    auto w = tape.param(params_.get("den.gat" + std::to_string(l) + ".W"));
    auto a = tape.param(params_.get("den.gat" + std::to_string(l) + ".a"));
    auto step = attention_propagate(tape, w, a, h, hood, active);
    for (auto v : active) h[v] = nn::add(h[v], step.h[v]);
  }

  if (apply_bias && config_.use_es) {
    const auto phi = combined_effective_sizes(visible, config_.beta);
    for (auto v : active) {
      if (phi[v] == 0.0) continue;
      h[v] = nn::add(h[v], tape.constant(std::vector<double>(config_.hidden, phi[v])));
    }
  }
  return h;
}

nn::Var Denoiser::role_log_probs(nn::Tape& tape, nn::Var h_new) {
  auto hidden = nn::relu(nn::affine(h_new, tape.param(params_.get("den.role.W1")),
                                    tape.param(params_.get("den.role.b1"))));
  auto logits = nn::affine(hidden, tape.param(params_.get("den.role.W2")), tape.param(params_.get("den.role.b2")));
  return nn::log_softmax(logits, std::vector<bool>(config_.num_roles, false));
}

std::vector<double> Denoiser::predict_role(nn::Tape& tape, nn::Var h_new) {
  auto lp = role_log_probs(tape, h_new);
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lp.value()[i]);
  return p;
}

nn::Var Denoiser::edge_input(nn::Tape& tape, nn::Var h_new, std::size_t role) {
  auto emb = nn::matvec(tape.param(params_.get("den.edge.role")), tape.constant(one_hot(config_.num_roles, role)));
  return nn::add(h_new, emb);
}

EdgeMixture Denoiser::predict_edges_mixture(nn::Tape& tape, nn::Var h_new, const std::vector<nn::Var>& h_existing) {
  EdgeMixture mix;
  auto m_hidden = nn::relu(nn::affine(h_new, tape.param(params_.get("den.mix.W1")),
                                      tape.param(params_.get("den.mix.b1"))));
  auto m_logits = nn::affine(m_hidden, tape.param(params_.get("den.mix.W2")), tape.param(params_.get("den.mix.b2")));
  mix.log_weights = nn::log_softmax(m_logits, std::vector<bool>(config_.components, false));

  // The first layer acts on [h_new || h_j || e_c]; its three column blocks are
  // applied separately so each part is computed once.
  auto from_new = nn::matvec(tape.param(params_.get("den.edge.W1_new")), h_new);
  auto w_old = tape.param(params_.get("den.edge.W1_old"));
  auto w_comp = tape.param(params_.get("den.edge.W1_comp"));
  auto comp = tape.param(params_.get("den.edge.comp"));
  auto b1 = tape.param(params_.get("den.edge.b1"));
  auto w2 = tape.param(params_.get("den.edge.W2"));
  auto b2 = tape.param(params_.get("den.edge.b2"));

  std::vector<nn::Var> from_old;
  from_old.reserve(h_existing.size());
  for (const auto& hj : h_existing) from_old.push_back(nn::matvec(w_old, hj));

  const std::vector<bool> none_masked(kEdgeCategories, false);
  mix.log_probs.resize(config_.components);
  for (std::size_t c = 0; c < config_.components; ++c) {
    auto base = nn::add(nn::add(from_new, nn::matvec(w_comp, nn::row(comp, c))), b1);
    for (const auto& fo : from_old) {
      auto hidden = nn::relu(nn::add(base, fo));
      mix.log_probs[c].push_back(nn::log_softmax(nn::affine(hidden, w2, b2), none_masked));
    }
  }
  return mix;
}

nn::Var Denoiser::step_log_likelihood(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q) {
  const auto target = next_node(g);
  auto h = embed_masked_graph(tape, g, q);
  const auto role = g.base.role(target);
  auto lp_role = nn::element(role_log_probs(tape, h[target]), role);

  std::vector<std::size_t> existing;
  std::vector<nn::Var> h_existing;
  std::vector<EdgeCategory> cats;
  for (std::size_t v = 0; v < g.base.size(); ++v) {
    if (g.masked[v]) continue;
    existing.push_back(v);
    h_existing.push_back(h[v]);
    cats.push_back(category_between(g.base, target, v));
  }
  auto mix = predict_edges_mixture(tape, edge_input(tape, h[target], role), h_existing);
  return nn::add(lp_role, mix.log_likelihood(tape, cats));
}

DenoiseStep Denoiser::denoise_step(nn::Tape& tape, const MaskedGraph& g, const QueryContext& q, Rng& rng) {
  const auto target = next_node(g);
  auto h = embed_masked_graph(tape, g, q);
  auto lp_roles = role_log_probs(tape, h[target]);

  DenoiseStep step;
  step.node = target;
  std::vector<double> role_p(config_.num_roles);
  for (std::size_t r = 0; r < role_p.size(); ++r) role_p[r] = std::exp(lp_roles.value()[r]);
  step.role = sample_categorical(rng, role_p);
  auto lp_role = nn::element(lp_roles, step.role);
  step.role_log_prob = lp_role.scalar();

  std::vector<nn::Var> h_existing;
  for (std::size_t v = 0; v < g.base.size(); ++v) {
    if (g.masked[v]) continue;
    step.existing.push_back(v);
    h_existing.push_back(h[v]);
  }
  auto mix = predict_edges_mixture(tape, edge_input(tape, h[target], step.role), h_existing);
  step.categories = mix.sample(rng);
  auto lp_edges = mix.log_likelihood(tape, step.categories);
  step.edge_log_prob = lp_edges.scalar();
  step.log_likelihood = nn::add(lp_role, lp_edges);

  step.graph = g;
  step.graph.base.agent(target).role = vocab_.at(step.role);
  for (std::size_t k = 0; k < step.existing.size(); ++k) {
    const auto j = step.existing[k];
    const auto cat = step.categories[k];
    const auto p = mix.marginal(k);
    const double p_both = p[static_cast<std::size_t>(EdgeCategory::both)];
    if (cat == EdgeCategory::fwd || cat == EdgeCategory::both) {
      step.graph.base.add_edge(target, j);
      step.edge_scores[{target, j}] = p[static_cast<std::size_t>(EdgeCategory::fwd)] + p_both;
    }
    if (cat == EdgeCategory::rev || cat == EdgeCategory::both) {
      step.graph.base.add_edge(j, target);
      step.edge_scores[{j, target}] = p[static_cast<std::size_t>(EdgeCategory::rev)] + p_both;
    }
  }
  step.graph.masked[target] = false;
  step.graph.prefix.pop_back();
  return step;
}

MaskedGraph Denoiser::empty_canvas(std::size_t n) const {
  CommGraph g(n, vocab_, std::vector<std::size_t>(n, 0));
  std::vector<std::size_t> prefix(n);
  for (std::size_t i = 0; i < n; ++i) prefix[i] = n - 1 - i;
  return MaskedGraph::from_prefix(std::move(g), std::move(prefix));
}

GeneratedTopology Denoiser::generate_topology(const QueryContext& q, std::size_t n_target, Rng& rng,
                                              nn::Tape* tape) {
  if (n_target == 0) throw std::invalid_argument("generate_topology: n_target must be at least 1");
  check_query(q);
  GeneratedTopology out;
  MaskedGraph current = empty_canvas(n_target);
  std::vector<nn::Var> terms;
  while (!current.prefix.empty()) {
    if (tape != nullptr) {
      auto step = denoise_step(*tape, current, q, rng);
      terms.push_back(step.log_likelihood);
      out.log_prob += step.log_likelihood.scalar();
      out.edge_scores.insert(step.edge_scores.begin(), step.edge_scores.end());
      current = std::move(step.graph);
    } else {
      nn::Tape local;
      auto step = denoise_step(local, current, q, rng);
      out.log_prob += step.log_likelihood.scalar();
      out.edge_scores.insert(step.edge_scores.begin(), step.edge_scores.end());
      current = std::move(step.graph);
    }
  }
  if (tape != nullptr) out.log_prob_var = nn::sum(nn::concat(terms));
  out.raw = current.base;
  auto projected = dag_project(out.raw, out.edge_scores);
  out.graph = std::move(projected.graph);
  out.removed = std::move(projected.removed);
  for (std::size_t v = 0; v < out.graph.size(); ++v) out.roles.push_back(out.graph.role(v));
  return out;
}

}  // namespace topodiff
