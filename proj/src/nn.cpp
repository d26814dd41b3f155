#include "topodiff/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace topodiff::nn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw std::logic_error("operands live on different tapes");
  return *a.tape();
}

void require_same_size(Var a, Var b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": size mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamSet

ParamTensor& ParamSet::add(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  ParamTensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.values.assign(n, 0.0);
  t.grad.assign(n, 0.0);
  t.fan_in = std::max<std::size_t>(1, fan_in);
  index_[name] = tensors_.size();
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

ParamTensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

const ParamTensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

void ParamSet::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void ParamSet::fill(double value) {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), value);
}

void ParamSet::init_uniform(Rng& rng) {
  for (auto& t : tensors_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.fan_in));
    for (auto& v : t.values) v = (2.0 * uniform01(rng) - 1.0) * bound;
  }
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.name != y.name || x.shape != y.shape || x.values != y.values) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Var / Tape

std::size_t Var::size() const { return tape_->value(id_).size(); }
std::span<const double> Var::value() const { return tape_->value(id_); }
double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a node of size " + std::to_string(v.size()));
  return v[0];
}
std::span<const double> Var::grad() const { return tape_->grad(id_); }

std::vector<double>& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  const auto n = node.external != nullptr ? node.external->size() : node.value.size();
  if (node.grad.size() != n) node.grad.assign(n, 0.0);
  return node.grad;
}

Var Tape::constant(std::vector<double> value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, 1, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamTensor& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  ParamTensor* target = &p;
  Node node{{}, &p.values, {}, nullptr, p.rows(), true};
  node.backward = [target](Tape& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) target->grad[i] += g[i];
  };
  nodes_.push_back(std::move(node));
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(std::vector<double> value, std::vector<std::size_t> parents, Backward backward,
               std::size_t rows) {
  bool needs = false;
  for (auto p : parents) needs = needs || nodes_[p].needs_grad;
  nodes_.push_back(Node{std::move(value), nullptr, {}, needs ? std::move(backward) : nullptr, rows, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw std::logic_error("backward: output belongs to another tape");
  if (backward_done_) throw std::logic_error("backward already run on this tape; record a new forward pass");
  if (output.size() != 1) throw ShapeError("backward needs a scalar output");
  backward_done_ = true;
  grad(output.id())[0] = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.needs_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matvec(Var w, Var x) {
  Tape& t = same_tape(w, x);
  const std::size_t rows = t.rows(w.id());
  const std::size_t cols = x.size();
  if (rows * cols != w.size()) {
    throw ShapeError("matvec: matrix of " + std::to_string(w.size()) + " entries with " +
                     std::to_string(rows) + " rows cannot multiply a vector of size " + std::to_string(cols));
  }
  const auto W = w.value();
  const auto X = x.value();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = W.data() + r * cols;
    // Four partial sums keep the multiply-adds independent.
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      acc[0] += wr[c] * X[c];
      acc[1] += wr[c + 1] * X[c + 1];
      acc[2] += wr[c + 2] * X[c + 2];
      acc[3] += wr[c + 3] * X[c + 3];
    }
    for (; c < cols; ++c) acc[0] += wr[c] * X[c];
    out[r] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }
  const auto wi = w.id(), xi = x.id();
  return t.push(std::move(out), {wi, xi}, [wi, xi, rows, cols](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (tape.needs_grad(wi)) {
      auto& gw = tape.grad(wi);
      const auto X = tape.value(xi);
      for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] == 0.0) continue;
        double* gwr = gw.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gwr[c] += g[r] * X[c];
      }
    }
    if (tape.needs_grad(xi)) {
      auto& gx = tape.grad(xi);
      const auto W = tape.value(wi);
      for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] == 0.0) continue;
        const double* wr = W.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r] * wr[c];
      }
    }
  });
}

Var affine(Var x, Var w, Var b) {
  auto y = matvec(w, x);
  require_same_size(y, b, "affine");
  return add(y, b);
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_size(a, b, "add");
  std::vector<double> out(a.value().begin(), a.value().end());
  const auto B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  const auto ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    for (auto p : {ai, bi}) {
      if (!tape.needs_grad(p)) continue;
      auto& gp = tape.grad(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_size(a, b, "mul");
  std::vector<double> out(a.size());
  const auto A = a.value();
  const auto B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const auto ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (tape.needs_grad(ai)) {
      auto& ga = tape.grad(ai);
      const auto B = tape.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (tape.needs_grad(bi)) {
      auto& gb = tape.grad(bi);
      const auto A = tape.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double k) {
  Tape& t = *a.tape();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= k;
  const auto ai = a.id();
  return t.push(std::move(out), {ai}, [ai, k](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
  });
}

Var scale(Var a, Var k) {
  Tape& t = same_tape(a, k);
  if (k.size() != 1) throw ShapeError("scale: factor must be a scalar node");
  const double kv = k.scalar();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= kv;
  const auto ai = a.id(), ki = k.id();
  return t.push(std::move(out), {ai, ki}, [ai, ki](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    const double kv = tape.value(ki)[0];
    if (tape.needs_grad(ai)) {
      auto& ga = tape.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kv * g[i];
    }
    if (tape.needs_grad(ki)) {
      const auto A = tape.value(ai);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * A[i];
      tape.grad(ki)[0] += acc;
    }
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  const auto ai = a.id();
  return t.push(std::move(out), {ai}, [ai](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    const auto A = tape.value(ai);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

Var exp(Var a) {
  Tape& t = *a.tape();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (auto& v : out) v = std::exp(v);
  const auto ai = a.id();
  return t.push(std::move(out), {ai}, [ai](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    const auto y = tape.value(self);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  Tape& t = *a.tape();
  std::vector<double> out(a.value().begin(), a.value().end());
  for (auto& v : out) v = std::log(v);
  const auto ai = a.id();
  return t.push(std::move(out), {ai}, [ai](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    const auto A = tape.value(ai);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const auto A = a.value();
  const double s = std::accumulate(A.begin(), A.end(), 0.0);
  const auto ai = a.id();
  return t.push({s}, {ai}, [ai](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    for (auto& v : tape.grad(ai)) v += g;
  });
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  Tape& t = *parts.front().tape();
  std::vector<double> out;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw std::logic_error("concat: operands live on different tapes");
    offsets.push_back(out.size());
    ids.push_back(p.id());
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  auto parents = ids;
  return t.push(std::move(out), std::move(parents),
                [ids = std::move(ids), offsets = std::move(offsets)](Tape& tape, std::size_t self) {
                  const auto g = tape.grad(self);
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!tape.needs_grad(ids[k])) continue;
                    auto& gp = tape.grad(ids[k]);
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
                  }
                });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  if (offset + length > a.size()) throw ShapeError("slice out of range");
  Tape& t = *a.tape();
  const auto A = a.value();
  std::vector<double> out(A.begin() + static_cast<std::ptrdiff_t>(offset),
                          A.begin() + static_cast<std::ptrdiff_t>(offset + length));
  const auto ai = a.id();
  return t.push(std::move(out), {ai}, [ai, offset](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var element(Var a, std::size_t index) { return slice(a, index, 1); }

Var row(Var matrix, std::size_t r) {
  const std::size_t rows = matrix.tape()->rows(matrix.id());
  if (r >= rows) throw ShapeError("row index out of range");
  const std::size_t cols = matrix.size() / rows;
  return slice(matrix, r * cols, cols);
}

Var logsumexp(Var a) {
  Tape& t = *a.tape();
  const auto A = a.value();
  if (A.empty()) throw ShapeError("logsumexp of an empty vector");
  const double m = *std::max_element(A.begin(), A.end());
  double s = 0.0;
  if (m == kNegInf) {
    s = 0.0;
  } else {
    for (double v : A) s += std::exp(v - m);
  }
  const double out = m == kNegInf ? kNegInf : m + std::log(s);
  const auto ai = a.id();
  return t.push({out}, {ai}, [ai](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    const double y = tape.value(self)[0];
    if (y == kNegInf) return;
    const auto A = tape.value(ai);
    auto& ga = tape.grad(ai);
    for (std::size_t i = 0; i < A.size(); ++i) ga[i] += g * std::exp(A[i] - y);
  });
}

std::vector<double> softmax_normalize(std::span<const double> logits, const std::vector<bool>& masked) {
  if (masked.size() != logits.size()) throw ShapeError("softmax: mask size mismatch");
  double m = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked[i]) m = std::max(m, logits[i]);
  if (m == kNegInf) throw std::invalid_argument("softmax: every entry is masked");
  std::vector<double> p(logits.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (masked[i]) continue;
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

Var log_softmax(Var logits, const std::vector<bool>& masked) {
  Tape& t = *logits.tape();
  const auto L = logits.value();
  const auto p = softmax_normalize(L, masked);
  double m = kNegInf;
  for (std::size_t i = 0; i < L.size(); ++i)
    if (!masked[i]) m = std::max(m, L[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < L.size(); ++i)
    if (!masked[i]) s += std::exp(L[i] - m);
  const double lse = m + std::log(s);
  std::vector<double> out(L.size(), kNegInf);
  for (std::size_t i = 0; i < L.size(); ++i)
    if (!masked[i]) out[i] = L[i] - lse;
  const auto li = logits.id();
  return t.push(std::move(out), {li}, [li, p, masked](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!masked[i]) total += g[i];
    auto& gl = tape.grad(li);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!masked[i]) gl[i] += g[i] - p[i] * total;
  });
}

Var softmax(Var logits, const std::vector<bool>& masked) {
  Tape& t = *logits.tape();
  auto p = softmax_normalize(logits.value(), masked);
  const auto li = logits.id();
  return t.push(p, {li}, [li, masked](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    const auto p = tape.value(self);
    double inner = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * p[i];
    auto& gl = tape.grad(li);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!masked[i]) gl[i] += p[i] * (g[i] - inner);
  });
}

std::vector<double> positional_encoding(std::size_t t, std::size_t dim) {
  if (dim % 2 != 0) throw std::invalid_argument("positional encoding dimension must be even");
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    const double angle = static_cast<double>(t) / freq;
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config) {
  for (const auto& t : params.tensors()) {
    for (double g : t.grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in tensor '" + t.name + "'");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& t : params.tensors()) {
    auto& m = state.m[t.name];
    auto& v = state.v[t.name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

double grad_check(const std::function<Var(Tape&)>& f, ParamSet& params, const GradCheckOptions& options) {
  params.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  auto evaluate = [&] {
    Tape tape;
    return f(tape).scalar();
  };

  Rng rng = derive_rng(options.seed, {0x6772616463ULL});
  double worst = 0.0;
  for (auto& t : params.tensors()) {
    std::vector<std::size_t> entries(t.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_tensor != 0 && entries.size() > options.max_entries_per_tensor) {
      for (std::size_t i = 0; i < options.max_entries_per_tensor; ++i) {
        const auto j = i + uniform_index(rng, entries.size() - i);
        std::swap(entries[i], entries[j]);
      }
      entries.resize(options.max_entries_per_tensor);
    }
    for (auto i : entries) {
      const double saved = t.values[i];
      t.values[i] = saved + options.perturbation;
      const double up = evaluate();
      t.values[i] = saved - options.perturbation;
      const double down = evaluate();
      t.values[i] = saved;
      const double fd = (up - down) / (2.0 * options.perturbation);
      const double err = std::abs(t.grad[i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& t : params.tensors()) {
    doc[t.name] = {{"shape", t.shape}, {"values", t.values}};
  }
  return doc;
}

void params_from_json(const nlohmann::json& doc, ParamSet& params) {
  for (auto& t : params.tensors()) {
    if (!doc.contains(t.name)) throw std::runtime_error("checkpoint is missing tensor '" + t.name + "'");
    const auto& entry = doc.at(t.name);
    if (entry.at("shape").get<std::vector<std::size_t>>() != t.shape) {
      throw ShapeError("checkpoint tensor '" + t.name + "' has a different shape");
    }
    auto values = entry.at("values").get<std::vector<double>>();
    if (values.size() != t.size()) throw ShapeError("checkpoint tensor '" + t.name + "' has wrong length");
    t.values = std::move(values);
  }
}

nlohmann::json adam_to_json(const AdamState& state) {
  return {{"step", state.step}, {"m", state.m}, {"v", state.v}};
}

AdamState adam_from_json(const nlohmann::json& doc) {
  AdamState s;
  s.step = doc.at("step").get<std::uint64_t>();
  s.m = doc.at("m").get<std::map<std::string, std::vector<double>>>();
  s.v = doc.at("v").get<std::map<std::string, std::vector<double>>>();
  return s;
}

}  // namespace topodiff::nn
