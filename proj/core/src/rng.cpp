#include "merl/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "merl/binary_io.hpp"

namespace merl {

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Reject the tail of the 64-bit range that would bias the modulo.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t x = engine_();
  while (x > limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

double RngStream::normal() {
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

void RngStream::save(std::ostream& os) const {
  std::ostringstream text;
  text << engine_;
  io::write_u64(os, seed_);
  io::write_string(os, text.str());
}

void RngStream::load(std::istream& is) {
  seed_ = io::read_u64(is);
  std::istringstream text(io::read_string(is));
  text >> engine_;
  if (!text) throw std::runtime_error("RngStream: corrupt engine state");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix_seed(parent);
  for (auto t : tags) s = mix_seed(s ^ mix_seed(t + 0x632BE59BD9B4E019ULL));
  return s;
}

std::vector<double> gaussian(RngStream& rng, double sigma, std::size_t n) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian: sigma must be >= 0");
  std::vector<double> out(n, 0.0);
  if (sigma == 0.0) return out;
  for (auto& x : out) x = rng.normal(sigma);
  return out;
}

}  // namespace merl
