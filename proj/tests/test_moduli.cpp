// Copyright 2026 The denjoy Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "denjoy/error.hpp"
#include "denjoy/moduli.hpp"

using namespace denjoy;
using namespace denjoy::moduli;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::ParseError;
}

}  // namespace

TEST_CASE("eval basics") {
  CHECK(Modulus::hoelder(0.5).eval(0.25) == doctest::Approx(0.5).epsilon(1e-15));
  const auto hl = Modulus::hoelder_log(0.5, 1.0);
  CHECK(hl.eval(std::exp(-2.0) / 2.0) > 0.0);
  // t^0.5 log(1/t) at t = e^-2 is 2/e; e^-2 exceeds the analytic cap, so
  // check against the extended modulus, which agrees with the formula below
  // its cap and the formula directly.
  const double t = std::exp(-2.0);
  CHECK(std::pow(t, 0.5) * std::log(1.0 / t) ==
        doctest::Approx(2.0 * std::exp(-1.0)));
  CHECK(code_of([&] { (void)hl.eval(t); }) == ErrorCode::OutOfDomain);
  const double t_in = std::exp(-4.0);
  CHECK(hl.eval(t_in) == doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-14));

  for (const auto& m : {Modulus::hoelder(0.3), Modulus::hoelder_log(0.6, 1.0),
                        Modulus::tabulated({{0.5, 0.2}, {1.0, 0.3}})}) {
    CHECK(m.eval(0.0) == 0.0);
  }
  CHECK(code_of([] { (void)Modulus::hoelder(0.5).eval(-0.1); }) ==
        ErrorCode::OutOfDomain);
  CHECK(code_of([] { (void)Modulus::hoelder(0.5).eval(1.5); }) ==
        ErrorCode::OutOfDomain);
  CHECK(code_of([] { (void)Modulus::hoelder(1.5); }) ==
        ErrorCode::InvalidModulus);
}

TEST_CASE("hoelder_log cap and tangent extension") {
  const auto m = Modulus::hoelder_log(0.7, 1.0, /*extended=*/true);
  const double cap = hoelder_log_cap(0.7, 1.0);
  CHECK(m.domain_cap() == 1.0);
  CHECK(cap == doctest::Approx(0.5 * std::exp(-1.0 / 0.7)));
  // continuous across the cap, increasing and concave beyond it
  CHECK(m.eval(cap * (1 + 1e-12)) == doctest::Approx(m.eval(cap)).epsilon(1e-10));
  const auto grid = dyadic_grid(2, 40);
  const auto rep = check_concave_doubling(m, grid);
  CHECK(rep.concave);
  CHECK(rep.doubling_ok);
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double v = m.eval(i / 1000.0);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("tabulated interpolation and validation") {
  const auto m = Modulus::tabulated({{0.25, 0.5}, {0.5, 0.75}, {1.0, 1.0}});
  CHECK(m.eval(0.125) == doctest::Approx(0.25));
  CHECK(m.eval(0.375) == doctest::Approx(0.625));
  CHECK(m.flagged_concave());
  CHECK(code_of([] { (void)Modulus::tabulated({{0.5, 0.2}, {0.25, 0.3}}); }) ==
        ErrorCode::InvalidModulus);
  CHECK(code_of([] { (void)Modulus::tabulated({{0.25, 0.2}, {0.5, 0.2}}); }) ==
        ErrorCode::InvalidModulus);
  CHECK_NOTHROW((void)Modulus::tabulated({{0.25, 0.2}, {0.5, 0.2}}, false));
}

TEST_CASE("check_concave_doubling") {
  const auto grid = dyadic_grid(1, 40);
  SUBCASE("hoelder 0.7") {
    const auto r = check_concave_doubling(Modulus::hoelder(0.7), grid);
    CHECK(r.concave);
    CHECK(r.doubling_ok);
    CHECK(r.worst_ratio == doctest::Approx(std::pow(2.0, 0.7) / 2.0).epsilon(1e-12));
  }
  SUBCASE("convex table") {
    std::vector<std::pair<double, double>> pts;
    for (int i = 1; i <= 64; ++i) pts.emplace_back(i / 64.0, (i / 64.0) * (i / 64.0));
    const auto sq = Modulus::tabulated(pts);
    CHECK_FALSE(sq.flagged_concave());
    std::vector<double> g;
    for (int i = 1; i <= 32; ++i) g.push_back(i / 64.0);
    CHECK_FALSE(check_concave_doubling(sq, g).concave);
  }
  SUBCASE("hoelder_log 0.5, 1 inside its cap") {
    const auto m = Modulus::hoelder_log(0.5, 1.0);
    std::vector<double> g;
    for (double t : grid) {
      if (t <= m.domain_cap() / 2) g.push_back(t);
    }
    // Oracle: second differences on a fine log grid are negative.
    for (double t : g) {
      const double h = t * 1e-3;
      const double second = m.eval(t - h) - 2 * m.eval(t) + m.eval(t + h);
      CHECK(second < 0.0);
    }
    const auto r = check_concave_doubling(m, g);
    CHECK(r.concave);
    CHECK(r.doubling_ok);
  }
  CHECK(code_of([] {
          std::vector<double> none;
          (void)check_concave_doubling(Modulus::hoelder(0.5), none);
        }) == ErrorCode::EmptyGrid);
}

TEST_CASE("doubling follows from concavity on random hoelder moduli") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const auto grid = dyadic_grid(1, 40);
  for (int i = 0; i < 50; ++i) {
    const auto m = Modulus::hoelder(u(rng));
    const auto r = check_concave_doubling(m, grid);
    CHECK(r.concave);
    CHECK(r.doubling_ok);
  }
}

TEST_CASE("compare") {
  CHECK(compare(Modulus::hoelder(0.7), Modulus::hoelder(0.5), 0.9) ==
        Comparison::Stronger);
  CHECK(compare(Modulus::hoelder(0.5), Modulus::hoelder_log(0.5, 1.0), 0.01) ==
        Comparison::Stronger);
  // Oracle: on (0, 1e-3), x^0.1 < log(1/x) on a dense grid, so x^0.6 is below.
  for (int k = 0; k < 2000; ++k) {
    const double x = 1e-3 * std::pow(10.0, -k / 100.0);
    REQUIRE(std::pow(x, 0.1) < std::log(1.0 / x));
  }
  CHECK(compare(Modulus::hoelder(0.6), Modulus::hoelder_log(0.5, 1.0), 1e-3) ==
        Comparison::Stronger);
  CHECK(compare(Modulus::hoelder(0.5), Modulus::hoelder(0.5), 0.5) ==
        Comparison::Equivalent);
  // crossing tables
  const auto a = Modulus::tabulated({{0.25, 0.1}, {0.5, 0.6}, {1.0, 0.7}});
  const auto b = Modulus::tabulated({{0.25, 0.2}, {0.5, 0.3}, {1.0, 0.9}});
  const std::vector<double> g{0.25, 0.5};
  CHECK(compare(a, b, g) == Comparison::Incomparable);
  CHECK(code_of([] {
          (void)compare(Modulus::hoelder(0.5), Modulus::hoelder_log(0.5, 1.0), 0.5);
        }) == ErrorCode::OutOfDomain);
}

TEST_CASE("compare is antisymmetric") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 0.95);
  for (int i = 0; i < 200; ++i) {
    const auto m1 = i % 2 ? Modulus::hoelder(u(rng)) : Modulus::hoelder_log(u(rng), u(rng));
    const auto m2 = Modulus::hoelder(u(rng));
    const double delta = std::min(m1.domain_cap(), m2.domain_cap()) / 2;
    const auto c12 = compare(m1, m2, delta);
    const auto c21 = compare(m2, m1, delta);
    if (c12 == Comparison::Stronger) CHECK(c21 == Comparison::Weaker);
    if (c12 == Comparison::Weaker) CHECK(c21 == Comparison::Stronger);
    if (c12 == Comparison::Incomparable) CHECK(c21 == Comparison::Incomparable);
  }
}

TEST_CASE("family defect") {
  const ModulusFamily f({Modulus::hoelder(0.6), Modulus::hoelder(0.7)});
  CHECK(family_defect(f, 0.5) == doctest::Approx(std::pow(0.5, 0.3)).epsilon(1e-15));
  CHECK(f.has_vanishing_defect());

  const ModulusFamily half({Modulus::hoelder(0.5), Modulus::hoelder(0.5)});
  for (double t : dyadic_grid(1, 40)) {
    CHECK(half.defect(t) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_FALSE(half.has_vanishing_defect());

  const ModulusFamily triple(
      {Modulus::hoelder(0.4), Modulus::hoelder(0.4), Modulus::hoelder(0.4)});
  CHECK(triple.defect(std::ldexp(1.0, -10)) == doctest::Approx(0.25).epsilon(1e-14));
  // t^0.2 is 2^-8 at 2^-40: above the default threshold, below it deeper.
  CHECK_FALSE(triple.has_vanishing_defect());
  CHECK(triple.has_vanishing_defect({1e-3, 200}));

  CHECK(code_of([&] { (void)f.defect(0.0); }) == ErrorCode::ZeroT);
  CHECK(code_of([&] { (void)f.defect(2.0); }) == ErrorCode::OutOfDomain);
  CHECK(code_of([] { ModulusFamily one({Modulus::hoelder(0.5)}); }) ==
        ErrorCode::InvalidModulus);
}

TEST_CASE("hoelder product law to machine precision") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(0.2, 0.9);
  std::uniform_real_distribution<double> ut(-30.0, -0.01);
  for (int i = 0; i < 100; ++i) {
    std::vector<Modulus> ms;
    double sum = 0.0;
    const int d = 2 + i % 4;
    for (int k = 0; k < d; ++k) {
      const double a = ua(rng);
      sum += a;
      ms.push_back(Modulus::hoelder(a));
    }
    const ModulusFamily f(ms);
    for (int s = 0; s < 20; ++s) {
      const double t = std::exp(ut(rng));
      CHECK(f.defect(t) == doctest::Approx(std::pow(t, sum - 1.0)).epsilon(1e-13));
    }
  }
}

TEST_CASE("submultiplicativity constant") {
  const auto grid = dyadic_pair_grid(1.0, 20);
  CHECK(submultiplicativity_constant([](double t) { return std::pow(t, 0.3); }, grid) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(submultiplicativity_constant(
            [](double t) { return 2.0 * std::pow(t, 0.3); }, grid) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // Defect t^0.1 log(1/t): the ratio is 1/log(1/t1) + 1/log(1/t2), maximal
  // at the largest dyadic point inside the cap e^-2/2, i.e. 2^-4.
  const ModulusFamily f({Modulus::hoelder_log(0.5, 1.0), Modulus::hoelder(0.6)});
  const double expected = 2.0 / (4.0 * std::log(2.0));
  CHECK(submultiplicativity_constant(f) == doctest::Approx(expected).epsilon(1e-12));
  const std::vector<std::pair<double, double>> bad{{0.0, 0.5}};
  CHECK(code_of([&] {
          (void)submultiplicativity_constant([](double t) { return t; }, bad);
        }) == ErrorCode::DivisionByZero);
}

TEST_CASE("empirical modulus") {
  std::vector<Sample> flat;
  std::vector<Sample> line;
  for (int i = 0; i < 100; ++i) {
    flat.push_back({i / 100.0, 3.0});
    line.push_back({i / 100.0, i / 100.0});
  }
  const std::vector<double> ts{0.01, 0.05, 0.1, 0.5};
  const auto w0 = empirical_modulus(flat, ts);
  for (double t : ts) CHECK(w0.eval(t) == 0.0);
  const auto w1 = empirical_modulus(line, ts, /*circular=*/false);
  CHECK(w1.eval(0.1) == doctest::Approx(0.1).epsilon(1e-12));
  // with wraparound the jump at 0 ~ 1 dominates
  CHECK(empirical_modulus(line, ts, true).eval(0.01) ==
        doctest::Approx(0.99).epsilon(1e-12));
  const std::vector<double> fine{0.001};
  CHECK(code_of([&] { (void)empirical_modulus(line, fine); }) ==
        ErrorCode::GridTooCoarse);
}

TEST_CASE("empirical modulus recovers a hoelder exponent") {
  // f(x) = |x - 1/2|^0.5 has modulus 2^-... ~ t^0.5 near the cusp.
  std::vector<Sample> s;
  const int n = 1 << 16;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / n;
    s.push_back({x, std::sqrt(std::abs(x - 0.5))});
  }
  const auto ts = dyadic_grid(5, 14);
  const auto w = empirical_modulus(s, ts);
  CHECK(fit_hoelder_exponent(w, std::ldexp(1.0, -14), std::ldexp(1.0, -5)) ==
        doctest::Approx(0.5).epsilon(0.02));

  // brute-force oracle on a coarse subsample
  std::vector<Sample> coarse;
  for (int i = 0; i < 256; ++i) {
    const double x = i / 256.0;
    coarse.push_back({x, std::sin(7 * x) + x * x});
  }
  const std::vector<double> tc{1 / 256.0, 5 / 256.0, 0.1, 0.3};
  const auto wc = empirical_modulus(coarse, tc);
  for (double t : tc) {
    double best = 0.0;
    for (const auto& a : coarse) {
      for (const auto& b : coarse) {
        double dist = std::abs(a.x - b.x);
        dist = std::min(dist, 1.0 - dist);
        if (dist <= t * (1 + 1e-12)) best = std::max(best, std::abs(a.value - b.value));
      }
    }
    CHECK(wc.eval(t) == doctest::Approx(best).epsilon(1e-14));
  }
}

TEST_CASE("consistency sequences: exact dyadic case") {
  const ModulusFamily f({Modulus::hoelder(0.5), Modulus::hoelder(0.5)});
  const auto seq = consistency_sequences(f, 4.0, 10);
  CHECK(seq.first_m == 1);
  for (std::size_t i = 0; i < seq.count(); ++i) {
    const long long expect = 1LL << (seq.first_m + static_cast<int>(i));
    CHECK(seq.X[0][i] == expect);
    CHECK(seq.X[1][i] == expect);
    CHECK(seq.ratio[0][i] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(seq.ratio[1][i] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("consistency sequences: mixed hoelder") {
  const ModulusFamily f({Modulus::hoelder(0.6), Modulus::hoelder(0.7)});
  const auto seq = consistency_sequences(f, 2.0, 30);
  CHECK(seq.first_m == 2);
  CHECK(seq.last_m() == 30);
  // Independent oracle (direct evaluation with floors): the maximum is at
  // m = 2, X = (2, 2): ratio_1 = 2^1.3 / 4^0.6.
  CHECK(seq.verified_constant ==
        doctest::Approx(std::pow(2.0, 1.3) / std::pow(4.0, 0.6)).epsilon(1e-12));
  CHECK(seq.tail_stable);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i + 1 < seq.count(); ++i) {
      CHECK(seq.X[j][i] < seq.X[j][i + 1]);
      CHECK(seq.ratio[j][i] <= seq.verified_constant);
    }
  }
  const auto exact = exact_power_ratios(f, 2.0, 30);
  for (const auto& row : exact) {
    for (double r : row) CHECK(std::abs(r - 1.0) <= 10 * 2.220446049250313e-16);
  }
}

TEST_CASE("consistency sequences: hoelder-log asymptotics") {
  const double a1 = 0.6, a2 = 0.7, e1 = 1.0, e2 = 0.5;
  const ModulusFamily f({Modulus::hoelder_log(a1, e1), Modulus::hoelder_log(a2, e2)});
  const auto seq = consistency_sequences(f, 2.0, 30);
  // 1/X_{1,5} = 1/8 exceeds the cap e^{-1/0.6}/2, so the range starts at 6.
  CHECK(seq.first_m == 6);
  CHECK(seq.tail_stable);
  // At m = 10, 20, 30 both floors are exact powers of two, so the ratio equals
  // the unfloored expression (sum a)^{e_j} / (a_j^{e1+e2} (m log 2)^{e1+e2-e_j}).
  const double eps[2] = {e1, e2};
  const double alp[2] = {a1, a2};
  for (int m : {10, 20, 30}) {
    const std::size_t i = static_cast<std::size_t>(m - seq.first_m);
    for (int j = 0; j < 2; ++j) {
      const double expected = std::pow(a1 + a2, eps[j]) /
                              (std::pow(alp[j], e1 + e2) *
                               std::pow(m * std::log(2.0), e1 + e2 - eps[j]));
      CHECK(seq.ratio[j][i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  // ratios decay, so the constant is attained at the start of the range
  CHECK(seq.verified_constant == doctest::Approx(seq.ratio[0][0]));
}

TEST_CASE("consistency sequences: errors and csv") {
  const ModulusFamily f({Modulus::hoelder(0.9), Modulus::hoelder(0.7)});
  CHECK(code_of([&] { (void)consistency_sequences(f, 2.0, 100); }) ==
        ErrorCode::Overflow);
  const ModulusFamily tab({Modulus::tabulated({{1.0, 1.0}}), Modulus::hoelder(0.7)});
  CHECK(code_of([&] { (void)consistency_sequences(tab, 2.0, 10); }) ==
        ErrorCode::InvalidModulus);
  const auto seq = consistency_sequences(f, 2.0, 5);
  const auto csv = consistency_csv(seq);
  CHECK(csv.rfind("m,X_1,X_2,lhs_1,rhs_1,ratio_1,lhs_2,rhs_2,ratio_2\n", 0) == 0);
}

TEST_CASE("square summable filter") {
  const std::vector<double> v{2.0, 0.9, 0.5, 0.3, 0.2, 0.1, 0.05};
  const auto f = square_summable_filter(v);
  // bounds 1, 1/4, 1/9, 1/16 ...
  CHECK(f.kept == std::vector<std::size_t>{1, 4, 5, 6});
  CHECK(f.dropped == std::vector<std::size_t>{0, 2, 3});
  CHECK(f.kept_sum == doctest::Approx(1.25));
}

TEST_CASE("json round trip") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 30; ++i) {
    const Modulus m = i % 3 == 0   ? Modulus::hoelder(u(rng))
                      : i % 3 == 1 ? Modulus::hoelder_log(u(rng), u(rng), i % 2)
                                   : Modulus::tabulated({{0.3, u(rng) / 2}, {0.9, 0.6}});
    const auto back = modulus_from_json(to_json(m));
    for (double t : {0.0, 1e-5, 0.01, m.domain_cap()}) {
      CHECK(back.eval(t) == m.eval(t));
    }
  }
  CHECK(code_of([] { (void)modulus_from_json(nlohmann::json{{"kind", "nope"}}); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { (void)modulus_from_json(nlohmann::json{{"kind", "hoelder"}}); }) ==
        ErrorCode::ParseError);
}
