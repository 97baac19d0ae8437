#pragma once

// Feed-forward network substrate shared by every actor and critic.
//
// Parameter layout (ParamVector): layers in input-to-output order; for each
// layer the weight matrix in row-major order (out x in), followed by the
// bias vector (out). Hidden layers always use tanh.

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "merl/rng.hpp"

namespace merl {

enum class Activation { Tanh, Linear };

// Aligned storage keeps Eigen's vectorized reductions independent of where the
// heap happens to place a parameter block, so results are reproducible.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation output_activation = Activation::Tanh;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t layer_input(std::size_t layer) const;
  std::size_t layer_output(std::size_t layer) const;
  Activation layer_activation(std::size_t layer) const;
  /// Offset of the layer's weight block inside the ParamVector.
  std::size_t layer_offset(std::size_t layer) const;
  std::size_t param_count() const;

  /// Throws std::invalid_argument if any dimension is zero.
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
ParamVector init_params(const MlpSpec& spec, RngStream& rng);

std::vector<double> forward(const MlpSpec& spec, std::span<const double> params,
                            std::span<const double> input);

struct Gradients {
  ParamVector params;
  std::vector<double> input;
};

/// Gradient of dot(upstream, forward(input)) with respect to params and input.
Gradients backward(const MlpSpec& spec, std::span<const double> params,
                   std::span<const double> input, std::span<const double> upstream);

// Batched evaluation. Samples are matrix columns.

/// Post-activation outputs of every layer; activations[0] is the input batch.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

Eigen::MatrixXd forward_batch(const MlpSpec& spec, std::span<const double> params,
                              const Eigen::MatrixXd& inputs);

void forward_batch(const MlpSpec& spec, std::span<const double> params,
                   const Eigen::MatrixXd& inputs, ForwardTape& tape);

/// Accumulates (adds) the batch-summed parameter gradient into grad_out and,
/// if input_grad is non-null, writes the per-sample input gradients.
void backward_batch(const MlpSpec& spec, std::span<const double> params, const ForwardTape& tape,
                    const Eigen::MatrixXd& upstream, std::span<double> grad_out,
                    Eigen::MatrixXd* input_grad = nullptr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

  void save(std::ostream& os) const;
  void load(std::istream& is);
};

/// Bias-corrected Adam step in place. Throws on length mismatch or a
/// non-finite gradient entry.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

/// target <- tau * source + (1 - tau) * target, in place.
void soft_update(std::span<double> target, std::span<const double> source, double tau);

ParamVector soft_updated(std::span<const double> target, std::span<const double> source, double tau);

/// A network value: topology plus weights.
struct Network {
  MlpSpec spec;
  ParamVector params;

  Network() = default;
  Network(MlpSpec s, ParamVector p);
  Network(MlpSpec s, RngStream& rng) : spec(std::move(s)), params(init_params(spec, rng)) {}
  static Network zeros(MlpSpec s);

  std::vector<double> operator()(std::span<const double> input) const {
    return forward(spec, params, input);
  }

  friend bool operator==(const Network&, const Network&) = default;
};

void write_params(std::ostream& os, std::span<const double> params);
ParamVector read_params(std::istream& is);

void write_spec(std::ostream& os, const MlpSpec& spec);
MlpSpec read_spec(std::istream& is);

void write_network(std::ostream& os, const Network& net);
Network read_network(std::istream& is);

}  // namespace merl
