#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "topodiff/denoiser.hpp"

using namespace topodiff;

namespace {

CommGraph make(std::size_t n, const std::vector<std::size_t>& roles, const std::vector<Edge>& edges) {
  CommGraph g(n, RoleVocab::standard(), roles);
  for (auto [a, b] : edges) g.add_edge(a, b);
  return g;
}

DenoiserConfig small_config(std::size_t components = 3) {
  DenoiserConfig cfg;
  cfg.query_dim = 8;
  cfg.hidden = 6;
  cfg.mlp_hidden = 5;
  cfg.layers = 2;
  cfg.pe_dim = 4;
  cfg.components = components;
  return cfg;
}

Denoiser random_denoiser(std::uint64_t seed, DenoiserConfig cfg = small_config()) {
  Denoiser d(cfg, RoleVocab::standard());
  Rng rng(seed);
  d.init(rng);
  return d;
}

QueryContext query_for(const Denoiser& d, const std::string& text) {
  return make_query("t", text, d.config().query_dim);
}

std::vector<double> vals(nn::Var v) { return {v.value().begin(), v.value().end()}; }

std::vector<double> mv(const nn::ParamTensor& w, const std::vector<double>& x) {
  std::vector<double> y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) y[r] += w.values[r * w.cols() + c] * x[c];
  return y;
}

std::vector<double> plus(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

std::vector<double> relu(std::vector<double> a) {
  for (auto& x : a) x = std::max(0.0, x);
  return a;
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
  for (auto& x : p) x /= s;
  return p;
}

// Mixture head recomputed from raw parameter values: weights pi[c] and
// per-pair category probabilities p[c][j][k].
struct ManualMixture {
  std::vector<double> pi;
  std::vector<std::vector<std::vector<double>>> p;

  double probability(const std::vector<std::size_t>& cats) const {
    double total = 0.0;
    for (std::size_t c = 0; c < pi.size(); ++c) {
      double prod = pi[c];
      for (std::size_t j = 0; j < cats.size(); ++j) prod *= p[c][j][cats[j]];
      total += prod;
    }
    return total;
  }
};

ManualMixture manual_mixture(const Denoiser& d, const std::vector<double>& h_new,
                             const std::vector<std::vector<double>>& h_old) {
  const auto& ps = d.params();
  ManualMixture m;
  auto hid = relu(plus(mv(ps.get("den.mix.W1"), h_new), ps.get("den.mix.b1").values));
  m.pi = softmax(plus(mv(ps.get("den.mix.W2"), hid), ps.get("den.mix.b2").values));
  const auto& comp = ps.get("den.edge.comp");
  for (std::size_t c = 0; c < m.pi.size(); ++c) {
    std::vector<double> e(comp.values.begin() + static_cast<std::ptrdiff_t>(c * comp.cols()),
                          comp.values.begin() + static_cast<std::ptrdiff_t>((c + 1) * comp.cols()));
    m.p.emplace_back();
    for (const auto& hj : h_old) {
      auto pre = mv(ps.get("den.edge.W1_new"), h_new);
      pre = plus(pre, mv(ps.get("den.edge.W1_old"), hj));
      pre = plus(pre, mv(ps.get("den.edge.W1_comp"), e));
      pre = plus(pre, ps.get("den.edge.b1").values);
      m.p.back().push_back(softmax(plus(mv(ps.get("den.edge.W2"), relu(pre)), ps.get("den.edge.b2").values)));
    }
  }
  return m;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

}  // namespace

TEST_CASE("attention propagation") {
  const std::size_t H = 3;
  nn::ParamSet ps;
  ps.add("W", {H, H}, H);
  ps.add("a", {2 * H}, 2 * H);
  Rng rng(4);
  ps.init_uniform(rng);

  SUBCASE("single in-neighbour") {
    nn::Tape tape;
    std::vector<nn::Var> h{tape.constant(random_vec(rng, H)), tape.constant(random_vec(rng, H))};
    auto r = attention_propagate(tape, tape.param(ps.get("W")), tape.param(ps.get("a")), h, {{}, {0}}, {0, 1});
    CHECK(r.alphas[1] == std::vector<double>{1.0});
    CHECK(vals(r.h[0]) == std::vector<double>(H, 0.0));
  }
  SUBCASE("identical neighbours share attention") {
    nn::Tape tape;
    const auto x = random_vec(rng, H);
    std::vector<nn::Var> h{tape.constant(x), tape.constant(x), tape.constant(random_vec(rng, H))};
    auto r = attention_propagate(tape, tape.param(ps.get("W")), tape.param(ps.get("a")), h, {{}, {}, {0, 1}},
                                 {0, 1, 2});
    CHECK(r.alphas[2] == std::vector<double>{0.5, 0.5});
  }
  SUBCASE("three nodes by hand") {
    // Edges 0->1, 0->2, 1->2.
    const std::vector<std::vector<double>> x{random_vec(rng, H), random_vec(rng, H), random_vec(rng, H)};
    nn::Tape tape;
    std::vector<nn::Var> h;
    for (const auto& xi : x) h.push_back(tape.constant(xi));
    auto r = attention_propagate(tape, tape.param(ps.get("W")), tape.param(ps.get("a")), h, {{}, {0}, {0, 1}},
                                 {0, 1, 2});

    const auto& a = ps.get("a").values;
    std::vector<std::vector<double>> z;
    for (const auto& xi : x) z.push_back(mv(ps.get("W"), xi));
    auto logit = [&](std::size_t i, std::size_t j) {
      double s = 0.0;
      for (std::size_t k = 0; k < H; ++k) s += a[k] * z[i][k] + a[H + k] * z[j][k];
      return std::max(0.0, s);
    };
    const double e0 = std::exp(logit(2, 0)), e1 = std::exp(logit(2, 1));
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    CHECK(r.alphas[2][0] == doctest::Approx(a0).epsilon(1e-14));
    CHECK(r.alphas[2][1] == doctest::Approx(a1).epsilon(1e-14));
    for (std::size_t k = 0; k < H; ++k) {
      CHECK(r.h[0].value()[k] == 0.0);
      CHECK(r.h[1].value()[k] == doctest::Approx(std::max(0.0, z[0][k])).epsilon(1e-14));
      CHECK(r.h[2].value()[k] == doctest::Approx(std::max(0.0, a0 * z[0][k] + a1 * z[1][k])).epsilon(1e-14));
    }
  }
  SUBCASE("gradient check") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng local(seed + 50);
      ps.init_uniform(local);
      const std::vector<std::vector<double>> x{random_vec(local, H), random_vec(local, H), random_vec(local, H)};
      auto f = [&](nn::Tape& tape) {
        std::vector<nn::Var> h;
        for (const auto& xi : x) h.push_back(tape.constant(xi));
        auto r = attention_propagate(tape, tape.param(ps.get("W")), tape.param(ps.get("a")), h, {{}, {0}, {0, 1}},
                                     {0, 1, 2});
        return nn::add(nn::sum(r.h[2]), nn::sum(r.h[1]));
      };
      CHECK(nn::grad_check(f, ps) < 1e-4);
    }
  }
}

TEST_CASE("masked graph embedding") {
  auto d = random_denoiser(7);
  auto g = make(4, {0, 1, 1, 4}, {{0, 1}, {0, 2}, {1, 2}, {2, 3}});
  const auto m = MaskedGraph::from_prefix(g, {3});

  SUBCASE("zero query and no redundancy reduce to the plain pass") {
    auto cfg = small_config();
    cfg.use_query = false;
    Denoiser plain(cfg, RoleVocab::standard());
    plain.params() = d.params();
    for (auto& x : d.params().get("den.query.b").values) x = 0.0;
    QueryContext zero{"z", "", std::vector<double>(8, 0.0)};
    // Edgeless visible graph: phi is zero everywhere.
    const auto edgeless = MaskedGraph::from_prefix(make(3, {0, 2, 3}, {}), {1});
    nn::Tape t1, t2, t3;
    auto a = d.embed_masked_graph(t1, edgeless, zero, true);
    auto b = d.embed_masked_graph(t2, edgeless, zero, false);
    auto c = plain.embed_masked_graph(t3, edgeless, zero, true);
    for (std::size_t v = 0; v < 3; ++v) {
      CHECK(vals(a[v]) == vals(b[v]));
      CHECK(vals(a[v]) == vals(c[v]));
    }
  }
  SUBCASE("the query reaches the node vectors") {
    nn::Tape t1, t2;
    auto a = d.embed_masked_graph(t1, m, query_for(d, "plan the proof"), true);
    auto b = d.embed_masked_graph(t2, m, query_for(d, "verify the sum"), true);
    bool differs = false;
    for (std::size_t v = 0; v < 4; ++v) differs = differs || vals(a[v]) != vals(b[v]);
    CHECK(differs);
  }
  SUBCASE("bias adds phi to every coordinate") {
    const auto q = query_for(d, "bias");
    nn::Tape t1, t2;
    auto with = d.embed_masked_graph(t1, m, q, true);
    auto without = d.embed_masked_graph(t2, m, q, false);
    const auto phi = combined_effective_sizes(m.visible(), d.config().beta);
    CHECK(phi[0] > 0.0);
    for (std::size_t v = 0; v < 4; ++v)
      for (std::size_t k = 0; k < d.config().hidden; ++k)
        CHECK(with[v].value()[k] - without[v].value()[k] == doctest::Approx(phi[v]).epsilon(1e-12));
  }
  SUBCASE("query dimension mismatch") {
    nn::Tape tape;
    CHECK_THROWS_AS(d.embed_masked_graph(tape, m, make_query("t", "x", 5)), nn::ShapeError);
  }
}

TEST_CASE("role head") {
  const auto cfg = small_config();
  SUBCASE("zero head is uniform") {
    auto d = random_denoiser(3);
    for (const auto* name : {"den.role.W1", "den.role.b1", "den.role.W2", "den.role.b2"})
      for (auto& x : d.params().get(name).values) x = 0.0;
    nn::Tape tape;
    Rng rng(1);
    for (double p : d.predict_role(tape, tape.constant(random_vec(rng, cfg.hidden))))
      CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("valid distribution") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      auto d = random_denoiser(100 + trial);
      nn::Tape tape;
      auto p = d.predict_role(tape, tape.constant(random_vec(rng, cfg.hidden)));
      double s = 0.0;
      for (double x : p) s += x;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("gradient check") {
    Rng rng(3);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto d = random_denoiser(seed);
      const auto h = random_vec(rng, cfg.hidden);
      auto f = [&](nn::Tape& tape) { return nn::element(d.role_log_probs(tape, tape.constant(h)), 2); };
      CHECK(nn::grad_check(f, d.params()) < 1e-4);
    }
  }
}

TEST_CASE("edge mixture") {
  Rng rng(5);
  const auto H = small_config().hidden;
  SUBCASE("no existing nodes") {
    auto d = random_denoiser(1);
    nn::Tape tape;
    auto mix = d.predict_edges_mixture(tape, tape.constant(random_vec(rng, H)), {});
    CHECK(std::abs(mix.log_likelihood_value({})) < 1e-15);
    CHECK(mix.sample(rng).empty());
  }
  SUBCASE("one component factorises") {
    auto d = random_denoiser(2, small_config(1));
    nn::Tape tape;
    auto mix = d.predict_edges_mixture(tape, tape.constant(random_vec(rng, H)),
                                       {tape.constant(random_vec(rng, H)), tape.constant(random_vec(rng, H))});
    const std::vector<EdgeCategory> cats{EdgeCategory::rev, EdgeCategory::both};
    const double product = mix.log_probs[0][0].value()[2] + mix.log_probs[0][1].value()[3];
    CHECK(mix.log_likelihood_value(cats) == doctest::Approx(product).epsilon(1e-14));
  }
  SUBCASE("two components, two pairs, all sixteen assignments") {
    auto d = random_denoiser(3, small_config(2));
    const auto hn = random_vec(rng, H);
    const std::vector<std::vector<double>> ho{random_vec(rng, H), random_vec(rng, H)};
    const auto oracle = manual_mixture(d, hn, ho);
    nn::Tape tape;
    auto mix = d.predict_edges_mixture(tape, tape.constant(hn), {tape.constant(ho[0]), tape.constant(ho[1])});
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        const std::vector<EdgeCategory> cats{static_cast<EdgeCategory>(a), static_cast<EdgeCategory>(b)};
        const double want = oracle.probability({a, b});
        CHECK(std::exp(mix.log_likelihood_value(cats)) == doctest::Approx(want).epsilon(1e-12));
        CHECK(mix.log_likelihood(tape, cats).scalar() == doctest::Approx(std::log(want)).epsilon(1e-12));
      }
  }
  SUBCASE("exhaustive mass is one") {
    for (std::size_t c = 1; c <= 3; ++c)
      for (std::size_t k = 0; k <= 3; ++k) {
        auto d = random_denoiser(10 * c + k, small_config(c));
        nn::Tape tape;
        std::vector<nn::Var> old;
        for (std::size_t j = 0; j < k; ++j) old.push_back(tape.constant(random_vec(rng, H)));
        auto mix = d.predict_edges_mixture(tape, tape.constant(random_vec(rng, H)), old);
        std::size_t total_assignments = 1;
        for (std::size_t j = 0; j < k; ++j) total_assignments *= 4;
        double total = 0.0;
        for (std::size_t code = 0; code < total_assignments; ++code) {
          std::vector<EdgeCategory> cats(k);
          auto rest = code;
          for (std::size_t j = 0; j < k; ++j, rest /= 4) cats[j] = static_cast<EdgeCategory>(rest % 4);
          total += std::exp(mix.log_likelihood_value(cats));
        }
        CHECK(std::abs(total - 1.0) < 1e-8);
        for (std::size_t j = 0; j < k; ++j) {
          const auto marg = mix.marginal(j);
          CHECK(std::abs(marg[0] + marg[1] + marg[2] + marg[3] - 1.0) < 1e-12);
        }
      }
  }
  SUBCASE("gradient check") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto d = random_denoiser(seed + 30);
      const auto hn = random_vec(rng, H);
      const std::vector<std::vector<double>> ho{random_vec(rng, H), random_vec(rng, H)};
      auto f = [&](nn::Tape& tape) {
        auto mix = d.predict_edges_mixture(tape, d.edge_input(tape, tape.constant(hn), 1),
                                           {tape.constant(ho[0]), tape.constant(ho[1])});
        return mix.log_likelihood(tape, {EdgeCategory::fwd, EdgeCategory::none});
      };
      CHECK(nn::grad_check(f, d.params()) < 1e-4);
    }
  }
}

TEST_CASE("denoise step") {
  SUBCASE("single fully masked node") {
    auto d = random_denoiser(4);
    auto canvas = d.empty_canvas(1);
    const auto q = query_for(d, "one");
    nn::Tape tape;
    Rng rng(2);
    auto step = d.denoise_step(tape, canvas, q, rng);
    CHECK(step.graph.masked_count() == 0);
    CHECK(step.graph.base.edge_count() == 0);
    CHECK(step.existing.empty());
    nn::Tape check;
    auto h = d.embed_masked_graph(check, canvas, q);
    const auto p = d.predict_role(check, h[0]);
    CHECK(step.log_likelihood.scalar() == doctest::Approx(std::log(p[step.role])).epsilon(1e-12));
    CHECK(step.graph.base.role(0) == step.role);
  }
  SUBCASE("sampled steps are compositionally consistent") {
    auto d = random_denoiser(6);
    const auto q = query_for(d, "compose");
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      auto g = d.empty_canvas(4);
      while (!g.prefix.empty()) {
        nn::Tape tape;
        auto step = d.denoise_step(tape, g, q, rng);
        CHECK(step.graph.masked_count() + 1 == g.masked_count());

        nn::Tape check;
        auto h = d.embed_masked_graph(check, g, q);
        const auto p_role = d.predict_role(check, h[step.node]);
        std::vector<std::vector<double>> h_old;
        for (auto j : step.existing) h_old.emplace_back(h[j].value().begin(), h[j].value().end());
        auto hn = d.edge_input(check, h[step.node], step.role);
        const auto oracle = manual_mixture(d, vals(hn), h_old);
        std::vector<std::size_t> cats;
        for (auto c : step.categories) cats.push_back(static_cast<std::size_t>(c));
        const double p_edges = oracle.probability(cats);
        CHECK(p_role[step.role] > 0.0);
        CHECK(p_edges > 0.0);
        CHECK(std::abs(step.log_likelihood.scalar() - (std::log(p_role[step.role]) + std::log(p_edges))) < 1e-10);

        for (std::size_t k = 0; k < step.existing.size(); ++k)
          CHECK(category_between(step.graph.base, step.node, step.existing[k]) == step.categories[k]);
        g = step.graph;
      }
    }
  }
  SUBCASE("teacher-forced likelihood on a four-node graph") {
    auto d = random_denoiser(9);
    const auto q = query_for(d, "teacher");
    auto g = make(4, {0, 3, 1, 4}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    const std::vector<std::size_t> order{2, 0, 3, 1};
    for (std::size_t t = 1; t <= 4; ++t) {
      auto m = MaskedGraph::from_prefix(g, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t)});
      nn::Tape tape;
      const double got = d.step_log_likelihood(tape, m, q).scalar();

      nn::Tape check;
      const auto v = order[t - 1];
      auto h = d.embed_masked_graph(check, m, q);
      const auto p_role = d.predict_role(check, h[v]);
      std::vector<std::vector<double>> h_old;
      std::vector<std::size_t> cats;
      for (std::size_t j = 0; j < 4; ++j) {
        if (m.masked[j]) continue;
        h_old.emplace_back(h[j].value().begin(), h[j].value().end());
        cats.push_back(static_cast<std::size_t>(g.has_edge(v, j)) + 2 * static_cast<std::size_t>(g.has_edge(j, v)));
      }
      const auto oracle = manual_mixture(d, vals(d.edge_input(check, h[v], g.role(v))), h_old);
      CHECK(got == doctest::Approx(std::log(p_role[g.role(v)]) + std::log(oracle.probability(cats))).epsilon(1e-11));
    }
  }
  SUBCASE("no masked node left") {
    auto d = random_denoiser(1);
    nn::Tape tape;
    Rng rng(1);
    CHECK_THROWS_AS(d.denoise_step(tape, MaskedGraph::unmasked(make(2, {0, 1}, {})), query_for(d, "x"), rng),
                    std::invalid_argument);
  }
  SUBCASE("gradient check of the step log-likelihood") {
    auto g = make(4, {0, 3, 1, 4}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto d = random_denoiser(seed + 60);
      const auto q = query_for(d, "gradient");
      const auto m = MaskedGraph::from_prefix(g, {3, 1});
      auto f = [&](nn::Tape& tape) { return d.step_log_likelihood(tape, m, q); };
      CHECK(nn::grad_check(f, d.params(), {1e-5, 0, seed}) < 1e-4);
    }
  }
  SUBCASE("default-size network gradient check on sampled entries") {
    Denoiser d({}, RoleVocab::standard());
    Rng rng(12);
    d.init(rng);
    const auto q = make_query("t", "default width");
    auto g = make(3, {0, 1, 4}, {{0, 1}, {1, 2}});
    const auto m = MaskedGraph::from_prefix(g, {1});
    auto f = [&](nn::Tape& tape) { return d.step_log_likelihood(tape, m, q); };
    CHECK(nn::grad_check(f, d.params(), {1e-5, 25, 3}) < 1e-4);
  }
}

TEST_CASE("topology generation") {
  SUBCASE("single agent") {
    auto d = random_denoiser(2);
    Rng rng(1);
    auto t = d.generate_topology(query_for(d, "solo"), 1, rng);
    CHECK(t.graph.size() == 1);
    CHECK(t.graph.edge_count() == 0);
  }
  SUBCASE("deterministic per seed and query") {
    auto d = random_denoiser(2);
    const auto q = query_for(d, "same");
    Rng a(5), b(5);
    auto ta = d.generate_topology(q, 5, a);
    auto tb = d.generate_topology(q, 5, b);
    CHECK(ta.graph == tb.graph);
    CHECK(ta.log_prob == tb.log_prob);
  }
  SUBCASE("output is acyclic and scores cover the raw edges") {
    auto d = random_denoiser(3);
    const auto q = query_for(d, "acyclic");
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      auto t = d.generate_topology(q, 5, rng);
      CHECK(is_acyclic(t.graph));
      CHECK(t.raw.edge_count() == t.graph.edge_count() + t.removed.size());
      for (auto e : t.raw.edges()) CHECK(t.edge_scores.count(e) == 1);
    }
  }
  SUBCASE("taped log-probability matches the value") {
    auto d = random_denoiser(4);
    Rng rng(7);
    nn::Tape tape;
    auto t = d.generate_topology(query_for(d, "tape"), 4, rng, &tape);
    REQUIRE(t.log_prob_var.has_value());
    CHECK(t.log_prob_var->scalar() == doctest::Approx(t.log_prob).epsilon(1e-12));
  }
  SUBCASE("second-step category frequencies") {
    // Two slots: slot 0 is recovered first, then slot 1 picks its role and
    // its connection to slot 0. Exact category probabilities marginalise
    // both sampled roles.
    auto d = random_denoiser(5);
    const auto q = query_for(d, "frequency");
    const auto canvas = d.empty_canvas(2);
    std::array<double, 4> exact{};
    nn::Tape t0;
    const auto p0 = d.predict_role(t0, d.embed_masked_graph(t0, canvas, q)[0]);
    for (std::size_t r0 = 0; r0 < 5; ++r0) {
      auto state = canvas;
      state.base.agent(0).role = RoleVocab::standard().at(r0);
      state.masked[0] = false;
      state.prefix.pop_back();
      nn::Tape t1;
      auto h = d.embed_masked_graph(t1, state, q);
      const auto p1 = d.predict_role(t1, h[1]);
      for (std::size_t r1 = 0; r1 < 5; ++r1) {
        auto mix = d.predict_edges_mixture(t1, d.edge_input(t1, h[1], r1), {h[0]});
        const auto marg = mix.marginal(0);
        for (std::size_t k = 0; k < 4; ++k) exact[k] += p0[r0] * p1[r1] * marg[k];
      }
    }
    const int draws = 1000;
    std::array<int, 4> counts{};
    Rng rng(10);
    for (int i = 0; i < draws; ++i) {
      auto t = d.generate_topology(q, 2, rng);
      ++counts[static_cast<std::size_t>(category_between(t.raw, 1, 0))];
    }
    for (std::size_t k = 0; k < 4; ++k) {
      const double sigma = std::sqrt(exact[k] * (1.0 - exact[k]) / draws);
      CHECK(std::abs(counts[k] / static_cast<double>(draws) - exact[k]) <= 3.0 * sigma);
    }
  }
}
