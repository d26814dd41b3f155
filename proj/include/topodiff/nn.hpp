#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "topodiff/rng.hpp"

namespace topodiff::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  std::size_t fan_in = 1;

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
};

// Named parameter bundle; element addresses stay valid as tensors are added.
class ParamSet {
 public:
  ParamTensor& add(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in);
  ParamTensor& get(const std::string& name);
  const ParamTensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::deque<ParamTensor>& tensors() { return tensors_; }
  const std::deque<ParamTensor>& tensors() const { return tensors_; }

  void zero_grad();
  void fill(double value);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  void init_uniform(Rng& rng);
  std::size_t parameter_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::deque<ParamTensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a vector-valued node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  std::size_t size() const;
  std::span<const double> value() const;
  double scalar() const;
  std::span<const double> grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records vector operations for one forward pass and replays them backwards.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(512); }

  Var constant(std::vector<double> value);
  Var scalar(double value) { return constant({value}); }
  // Leaf bound to a parameter tensor; backward accumulates into p.grad.
  // Repeated calls with the same tensor reuse one node. The leaf reads the
  // tensor's values in place, so the tensor must not change before backward.
  Var param(ParamTensor& p);

  Var push(std::vector<double> value, std::vector<std::size_t> parents, Backward backward,
           std::size_t rows = 1);

  void backward(Var output);
  bool backward_done() const { return backward_done_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::span<const double> value(std::size_t id) const {
    const auto& node = nodes_[id];
    return node.external != nullptr ? std::span<const double>(*node.external) : std::span<const double>(node.value);
  }
  std::vector<double>& grad(std::size_t id);
  std::size_t rows(std::size_t id) const { return nodes_[id].rows; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    std::vector<double> value;
    const std::vector<double>* external = nullptr;  // parameter leaves read in place
    std::vector<double> grad;
    Backward backward;
    std::size_t rows = 1;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::map<const ParamTensor*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// Element-wise and linear-algebra ops. All operands must share one tape.
Var matvec(Var w, Var x);
Var affine(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
Var scale(Var a, Var k);   // k is a scalar node
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var dot(Var a, Var b);
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
Var element(Var a, std::size_t index);
Var row(Var matrix, std::size_t r);
Var logsumexp(Var a);

// masked[i] == true excludes entry i; masked log-probabilities are -inf.
Var log_softmax(Var logits, const std::vector<bool>& masked);
Var softmax(Var logits, const std::vector<bool>& masked);

// Plain-value softmax used outside of tapes.
std::vector<double> softmax_normalize(std::span<const double> logits, const std::vector<bool>& masked);

// entry 2i = sin(t / 10000^(2i/dim)), entry 2i+1 = cos(same).
std::vector<double> positional_encoding(std::size_t t, std::size_t dim);

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Rejects the whole update if any gradient is non-finite.
void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config);

struct GradCheckOptions {
  double perturbation = 1e-5;
  // 0 checks every entry; otherwise a seeded random subset per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Compares tape gradients of `f` with central finite differences and returns
/// max |g_tape - g_fd| / max(1, |g_fd|) over the checked entries.
double grad_check(const std::function<Var(Tape&)>& f, ParamSet& params,
                  const GradCheckOptions& options = {});

nlohmann::json params_to_json(const ParamSet& params);
void params_from_json(const nlohmann::json& doc, ParamSet& params);
nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& doc);

}  // namespace topodiff::nn
