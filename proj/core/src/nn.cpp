#include "merl/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "merl/binary_io.hpp"

namespace merl {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMutMap = Eigen::Map<Eigen::VectorXd>;

void check_params(const MlpSpec& spec, std::span<const double> params) {
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("mlp: parameter vector has length " + std::to_string(params.size()) +
                                ", spec requires " + std::to_string(spec.param_count()));
  }
}

// tanh via exp(-2|x|) so Eigen vectorizes it; libm tanh dominated profiles.
template <class Derived>
void tanh_inplace(Eigen::MatrixBase<Derived>& z) {
  auto a = z.array();
  const Eigen::ArrayXXd t = (-2.0 * a.abs()).exp();
  a = a.sign() * (1.0 - t) / (1.0 + t);
}

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  if (act == Activation::Tanh) tanh_inplace(z);
}

}  // namespace

std::size_t MlpSpec::layer_input(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::layer_output(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : output_dim;
}

Activation MlpSpec::layer_activation(std::size_t layer) const {
  return layer + 1 < num_layers() ? Activation::Tanh : output_activation;
}

std::size_t MlpSpec::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += layer_output(l) * (layer_input(l) + 1);
  return off;
}

std::size_t MlpSpec::param_count() const { return layer_offset(num_layers()); }

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("mlp: input/output dims must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("mlp: hidden dims must be >= 1");
  }
}

ParamVector init_params(const MlpSpec& spec, RngStream& rng) {
  spec.validate();
  ParamVector p(spec.param_count());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_input(l), out = spec.layer_output(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const std::size_t off = spec.layer_offset(l);
    for (std::size_t i = 0; i < out * (in + 1); ++i) p[off + i] = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<double> forward(const MlpSpec& spec, std::span<const double> params,
                            std::span<const double> input) {
  check_params(spec, params);
  if (input.size() != spec.input_dim) {
    throw std::invalid_argument("mlp: input has length " + std::to_string(input.size()) + ", expected " +
                                std::to_string(spec.input_dim));
  }
  Eigen::VectorXd a = VecMap(input.data(), static_cast<Eigen::Index>(input.size()));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_input(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_output(l));
    const double* base = params.data() + spec.layer_offset(l);
    RowMajorMap w(base, out, in);
    VecMap b(base + out * in, out);
    Eigen::VectorXd z = w * a + b;
    if (spec.layer_activation(l) == Activation::Tanh) tanh_inplace(z);
    a = std::move(z);
  }
  return {a.data(), a.data() + a.size()};
}

Gradients backward(const MlpSpec& spec, std::span<const double> params,
                   std::span<const double> input, std::span<const double> upstream) {
  check_params(spec, params);
  if (input.size() != spec.input_dim || upstream.size() != spec.output_dim) {
    throw std::invalid_argument("mlp backward: input/upstream shape mismatch");
  }
  Eigen::MatrixXd x = VecMap(input.data(), static_cast<Eigen::Index>(input.size()));
  Eigen::MatrixXd up = VecMap(upstream.data(), static_cast<Eigen::Index>(upstream.size()));
  ForwardTape tape;
  forward_batch(spec, params, x, tape);
  Gradients g;
  g.params.assign(spec.param_count(), 0.0);
  Eigen::MatrixXd input_grad;
  backward_batch(spec, params, tape, up, g.params, &input_grad);
  g.input.assign(input_grad.data(), input_grad.data() + input_grad.size());
  return g;
}

Eigen::MatrixXd forward_batch(const MlpSpec& spec, std::span<const double> params,
                              const Eigen::MatrixXd& inputs) {
  check_params(spec, params);
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim) {
    throw std::invalid_argument("mlp forward_batch: input rows " + std::to_string(inputs.rows()) +
                                " != input_dim " + std::to_string(spec.input_dim));
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_input(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_output(l));
    const double* base = params.data() + spec.layer_offset(l);
    RowMajorMap w(base, out, in);
    VecMap b(base + out * in, out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    apply_activation(spec.layer_activation(l), z);
    a = std::move(z);
  }
  return a;
}

void forward_batch(const MlpSpec& spec, std::span<const double> params,
                   const Eigen::MatrixXd& inputs, ForwardTape& tape) {
  check_params(spec, params);
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim) {
    throw std::invalid_argument("mlp forward_batch: input rows " + std::to_string(inputs.rows()) +
                                " != input_dim " + std::to_string(spec.input_dim));
  }
  tape.activations.resize(spec.num_layers() + 1);
  tape.activations[0] = inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_input(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_output(l));
    const double* base = params.data() + spec.layer_offset(l);
    RowMajorMap w(base, out, in);
    VecMap b(base + out * in, out);
    auto& z = tape.activations[l + 1];
    z.noalias() = w * tape.activations[l];
    z.colwise() += b;
    apply_activation(spec.layer_activation(l), z);
  }
}

void backward_batch(const MlpSpec& spec, std::span<const double> params, const ForwardTape& tape,
                    const Eigen::MatrixXd& upstream, std::span<double> grad_out,
                    Eigen::MatrixXd* input_grad) {
  check_params(spec, params);
  if (grad_out.size() != params.size()) throw std::invalid_argument("mlp backward_batch: gradient length mismatch");
  if (tape.activations.size() != spec.num_layers() + 1) throw std::invalid_argument("mlp backward_batch: tape/spec mismatch");
  const auto& out_act = tape.output();
  if (upstream.rows() != out_act.rows() || upstream.cols() != out_act.cols()) {
    throw std::invalid_argument("mlp backward_batch: upstream shape mismatch");
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(spec.layer_input(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_output(l));
    if (spec.layer_activation(l) == Activation::Tanh) {
      const auto& y = tape.activations[l + 1];
      delta = (delta.array() * (1.0 - y.array().square())).matrix();
    }
    const std::size_t off = spec.layer_offset(l);
    RowMajorMutMap gw(grad_out.data() + off, out, in);
    VecMutMap gb(grad_out.data() + off + out * in, out);
    gw.noalias() += delta * tape.activations[l].transpose();
    gb += delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      RowMajorMap w(params.data() + off, out, in);
      Eigen::MatrixXd prev = w.transpose() * delta;
      if (l == 0) {
        *input_grad = std::move(prev);
      } else {
        delta = std::move(prev);
      }
    }
  }
}

void AdamState::save(std::ostream& os) const {
  io::write_f64_array(os, m);
  io::write_f64_array(os, v);
  io::write_u64(os, t);
  io::write_f64(os, lr);
  io::write_f64(os, beta1);
  io::write_f64(os, beta2);
  io::write_f64(os, eps);
}

void AdamState::load(std::istream& is) {
  m = io::read_f64_array(is);
  v = io::read_f64_array(is);
  t = io::read_u64(is);
  lr = io::read_f64(is);
  beta1 = io::read_f64(is);
  beta2 = io::read_f64(is);
  eps = io::read_f64(is);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void soft_update(std::span<double> target, std::span<const double> source, double tau) {
  if (target.size() != source.size()) throw std::invalid_argument("soft_update: length mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  if (tau == 0.0) return;
  if (tau == 1.0) {
    std::copy(source.begin(), source.end(), target.begin());
    return;
  }
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = tau * source[i] + (1.0 - tau) * target[i];
}

ParamVector soft_updated(std::span<const double> target, std::span<const double> source, double tau) {
  ParamVector out(target.begin(), target.end());
  soft_update(out, source, tau);
  return out;
}

Network::Network(MlpSpec s, ParamVector p) : spec(std::move(s)), params(std::move(p)) {
  spec.validate();
  check_params(spec, params);
}

Network Network::zeros(MlpSpec s) {
  s.validate();
  ParamVector p(s.param_count(), 0.0);
  return Network(std::move(s), std::move(p));
}

void write_params(std::ostream& os, std::span<const double> params) { io::write_f64_array(os, params); }

ParamVector read_params(std::istream& is) {
  auto p = io::read_f64_array(is);
  for (double x : p) {
    if (!std::isfinite(x)) throw std::runtime_error("read_params: non-finite entry");
  }
  return ParamVector(p.begin(), p.end());
}

void write_spec(std::ostream& os, const MlpSpec& spec) {
  io::write_u64(os, spec.input_dim);
  io::write_u64(os, spec.hidden_dims.size());
  for (auto h : spec.hidden_dims) io::write_u64(os, h);
  io::write_u64(os, spec.output_dim);
  io::write_u64(os, spec.output_activation == Activation::Tanh ? 0 : 1);
}

MlpSpec read_spec(std::istream& is) {
  MlpSpec s;
  s.input_dim = io::read_u64(is);
  const auto n = io::read_u64(is);
  if (n > 64) throw std::runtime_error("read_spec: implausible layer count");
  s.hidden_dims.resize(n);
  for (auto& h : s.hidden_dims) h = io::read_u64(is);
  s.output_dim = io::read_u64(is);
  s.output_activation = io::read_u64(is) == 0 ? Activation::Tanh : Activation::Linear;
  s.validate();
  return s;
}

void write_network(std::ostream& os, const Network& net) {
  write_spec(os, net.spec);
  write_params(os, net.params);
}

Network read_network(std::istream& is) {
  auto spec = read_spec(is);
  auto params = read_params(is);
  return Network(std::move(spec), std::move(params));
}

}  // namespace merl
