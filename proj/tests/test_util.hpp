#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "merl/nn.hpp"
#include "merl/rng.hpp"

namespace merl::test {

/// Random topology with 1..max_layers layers (hidden + output) and widths in [1, max_units].
inline MlpSpec random_spec(RngStream& rng, std::size_t max_layers, std::size_t max_units) {
  MlpSpec s;
  s.input_dim = 1 + rng.uniform_index(max_units);
  const std::size_t hidden = rng.uniform_index(max_layers);
  for (std::size_t i = 0; i < hidden; ++i) s.hidden_dims.push_back(1 + rng.uniform_index(max_units));
  s.output_dim = 1 + rng.uniform_index(max_units);
  s.output_activation = rng.bernoulli(0.5) ? Activation::Tanh : Activation::Linear;
  return s;
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

using Objective = std::function<double(const ParamVector&, const std::vector<double>&)>;

inline double max_rel_error_params(const Objective& f, ParamVector p, const std::vector<double>& x,
                                   std::span<const double> analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double fp = f(p, x);
    p[i] = keep - h;
    const double fm = f(p, x);
    p[i] = keep;
    worst = std::max(worst, rel_error((fp - fm) / (2 * h), analytic[i]));
  }
  return worst;
}

inline double max_rel_error_input(const Objective& f, const ParamVector& p, std::vector<double> x,
                                  std::span<const double> analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(p, x);
    x[i] = keep - h;
    const double fm = f(p, x);
    x[i] = keep;
    worst = std::max(worst, rel_error((fp - fm) / (2 * h), analytic[i]));
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("merl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) out.push_back(line);
  return out;
}

}  // namespace merl::test
