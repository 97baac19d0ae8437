#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "merl/rng.hpp"

using namespace merl;

TEST_SUITE("rng") {
  TEST_CASE("same seed, same stream") {
    RngStream a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      (void)c.next_u64();
    }
    CHECK(a == b);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("uniform stays in [0, 1)") {
    RngStream r(1);
    double lo = 1, hi = 0;
    for (int i = 0; i < 100000; ++i) {
      const double u = r.uniform();
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(lo < 1e-3);
    CHECK(hi > 1 - 1e-3);
  }

  TEST_CASE("uniform_index passes a chi-square test") {
    RngStream r(7);
    const std::size_t n = 10, draws = 100000;
    std::vector<double> counts(n, 0);
    for (std::size_t i = 0; i < draws; ++i) counts[r.uniform_index(n)] += 1;
    double chi2 = 0;
    const double e = static_cast<double>(draws) / n;
    for (double c : counts) chi2 += (c - e) * (c - e) / e;
    // 9 degrees of freedom, p = 0.001 critical value.
    CHECK(chi2 < 27.88);
    CHECK_THROWS_AS(r.uniform_index(0), std::invalid_argument);
  }

  TEST_CASE("normal draws have unit moments") {
    RngStream r(9);
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
      s4 += x * x * x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.015);
    CHECK(std::abs(s4 / n - 3.0) < 0.06);
  }

  TEST_CASE("gaussian helper") {
    RngStream r(3);
    CHECK(gaussian(r, 0.0, 4) == std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(gaussian(r, -1.0, 2), std::invalid_argument);
    CHECK(gaussian(r, 2.0, 5).size() == 5);
  }

  TEST_CASE("save and load resume the exact stream") {
    RngStream r(123);
    for (int i = 0; i < 17; ++i) r.normal();
    std::stringstream ss;
    r.save(ss);
    RngStream back;
    back.load(ss);
    CHECK(back == r);
    for (int i = 0; i < 50; ++i) CHECK(back.next_u64() == r.next_u64());
  }

  TEST_CASE("derived seeds are distinct and stable") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t g = 0; g < 50; ++g) {
      for (std::uint64_t i = 0; i < 20; ++i) seen.insert(derive_seed(2019, {g, i}));
    }
    CHECK(seen.size() == 1000);
    CHECK(derive_seed(5, {1, 2}) == derive_seed(5, {1, 2}));
    CHECK(derive_seed(5, {1, 2}) != derive_seed(5, {2, 1}));
  }
}
