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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "denjoy/dynamics.hpp"
#include "denjoy/error.hpp"

using namespace denjoy;
using namespace denjoy::dynamics;

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

constexpr double kPi = std::numbers::pi;

DenjoyMap small_denjoy(std::int64_t levels = 300, double tau = 0.5) {
  DenjoyParams p;
  p.alpha = sqrt2_minus_1();
  p.tau = tau;
  p.levels = levels;
  return denjoy_construct(p);
}

// Arcs [a, a + len) reduced into [0, 1); true iff their union is the circle
// up to gaps of `tiny`.
bool sweep_covers(std::vector<std::pair<double, double>> arcs, double tiny) {
  std::vector<std::pair<double, double>> parts;
  for (auto [a, len] : arcs) {
    a -= std::floor(a);
    if (a + len > 1.0) {
      parts.emplace_back(a, 1.0);
      parts.emplace_back(0.0, a + len - 1.0);
    } else {
      parts.emplace_back(a, a + len);
    }
  }
  std::sort(parts.begin(), parts.end());
  double reach = 0.0;
  for (const auto& [s, e] : parts) {
    if (s > reach + tiny) return false;
    reach = std::max(reach, e);
  }
  return reach >= 1.0 - tiny;
}

}  // namespace

TEST_CASE("rationals and continued fractions") {
  const auto r = Rational::parse("6/-4");
  CHECK(r.num == -3);
  CHECK(r.den == 2);
  CHECK(continued_fraction(Rational::parse("7/3")) == std::vector<std::int64_t>{2, 3});
  CHECK(continued_fraction(r) == std::vector<std::int64_t>{-2, 2});
  CHECK(code_of([] { Rational::parse("1/0"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { Rational::parse("x/2"); }) == ErrorCode::ParseError);

  const auto s = sqrt2_minus_1();
  CHECK(s.bits() > 128);
  CHECK(s.value() == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-15));
  const auto cf = continued_fraction(s);
  CHECK(cf[0] == 0);
  CHECK(std::all_of(cf.begin() + 1, cf.end(), [](std::int64_t a) { return a == 2; }));

  const auto g = golden_conjugate();
  CHECK(g.value() == doctest::Approx((3.0 - std::sqrt(5.0)) / 2.0).epsilon(1e-15));
  CHECK(continued_fraction(g)[1] == 2);
  CHECK(continued_fraction(g)[2] == 1);

  // exact reduction agrees with long double where that is still accurate
  for (std::int64_t n : {-7, -1, 0, 1, 5, 1000, 99999}) {
    const long double v = static_cast<long double>(n) * (std::sqrt(2.0L) - 1.0L);
    const double expect = static_cast<double>(v - std::floor(v));
    CHECK(s.frac_mul(n) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.frac_mul(n) >= 0.0);
    CHECK(s.frac_mul(n) < 1.0);
  }
}

TEST_CASE("apply and derivative examples") {
  const auto R = CircleDiffeo::rotation(0.3);
  CHECK(R.apply(0.9) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(R.derivative(0.9) == 1.0);

  const auto A = CircleDiffeo::analytic(0.3, 0.1);
  for (int i = 0; i < 100; ++i) {
    const double d = A.derivative(i / 37.0);
    CHECK(d >= 0.9 - 1e-15);
    CHECK(d <= 1.1 + 1e-15);
  }
  CHECK(code_of([] { CircleDiffeo::analytic(0.0, 1.0); }) == ErrorCode::InvalidMap);

  const auto D = small_denjoy();
  for (std::int64_t n = -300; n < 300; n += 7) {
    const auto& I = D.interval(n);
    CHECK(D.map.derivative(I.left + 0.5 * I.length) ==
          doctest::Approx(D.profile_midpoint(n)).epsilon(1e-9));
  }
}

TEST_CASE("piecewise validation") {
  PiecewiseBump ok{{0.0, 0.5}, {0.5, 0.5}, {0.1, 0.4}, {0.3, 0.7}};
  CHECK_NOTHROW(CircleDiffeo::piecewise(ok));
  auto gap = ok;
  gap.x[1] = 0.6;
  CHECK(code_of([&] { CircleDiffeo::piecewise(gap); }) == ErrorCode::InvalidMap);
  // mu / lambda <= 1/3 pushes the derivative to zero mid-piece
  PiecewiseBump flat{{0.0, 0.5}, {0.5, 0.5}, {0.0, 0.1}, {0.1, 0.9}};
  CHECK(code_of([&] { CircleDiffeo::piecewise(flat); }) == ErrorCode::DegenerateDerivative);
  PiecewiseBump short_turn{{0.0, 0.5}, {0.5, 0.4}, {0.0, 0.5}, {0.5, 0.5}};
  CHECK(code_of([&] { CircleDiffeo::piecewise(short_turn); }) == ErrorCode::InvalidMap);
}

TEST_CASE("lift equivariance, positivity and inverses for every kind") {
  const auto D = small_denjoy();
  std::vector<CircleDiffeo> maps{
      CircleDiffeo::rotation(sqrt2_minus_1()), CircleDiffeo::analytic(0.3, 0.1),
      CircleDiffeo::analytic(-0.2, -0.7), D.map,
      CircleDiffeo::composition({CircleDiffeo::analytic(0.3, 0.1), D.map},
                                {{0, 2}, {1, -1}, {0, 1}})};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const auto& f : maps) {
    CAPTURE(f.describe());
    double worst = 0.0, inv = 0.0, mind = 1e9;
    for (int i = 0; i < 1000; ++i) {
      const double x = u(rng);
      worst = std::max(worst, std::abs(f.apply(x + 1.0) - f.apply(x) - 1.0));
      inv = std::max(inv, std::abs(f.inverse(f.apply(x)) - x));
      mind = std::min(mind, f.derivative(x));
    }
    CHECK(worst <= 1e-12);
    CHECK(inv <= 1e-12);
    CHECK(mind > 0.0);
  }
}

TEST_CASE("composition derivative matches a difference quotient") {
  const auto f = CircleDiffeo::composition(
      {CircleDiffeo::analytic(0.3, 0.2), CircleDiffeo::analytic(0.1, -0.4)},
      {{0, 1}, {1, 2}, {0, -1}});
  for (double x : {0.0, 0.13, 0.5, 0.77}) {
    const double h = 1e-6;
    const double fd = (f.apply(x + h) - f.apply(x - h)) / (2 * h);
    CHECK(f.derivative(x) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("rotation numbers") {
  const auto R = CircleDiffeo::rotation(Rational::parse("3/8"));
  const auto e = rotation_number(R, 10000);
  CHECK(e.estimate == 0.375);
  CHECK(e.error_bound == 1e-4);

  const auto A = CircleDiffeo::analytic(0.3, 0.05);
  const std::int64_t n = 100000;
  const double a = rotation_number(A, n, 0.0).estimate;
  const double b = rotation_number(A, n, 0.37).estimate;
  CHECK(std::abs(a - b) <= 2.0 / n);
  CHECK(code_of([&] { rotation_number(A, 0); }) == ErrorCode::PreconditionViolated);

  // conjugating by a rotation leaves the estimate alone
  const auto D = small_denjoy();
  for (const auto* f : {&A, &D.map}) {
    const double base = rotation_number(*f, 20000).estimate;
    for (double beta : {0.1, 0.25, 0.618, 0.9}) {
      const double c = rotation_number(conjugate_by_rotation(*f, beta), 20000).estimate;
      CHECK(std::abs(base - c) <= 2.0 / 20000);
    }
  }
}

TEST_CASE("Denjoy construction") {
  const auto D = small_denjoy(1000);
  const std::int64_t N = 1000;
  CHECK(D.total_mass == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(D.intervals.size() == static_cast<std::size_t>(2 * N + 1));

  // profile: l_n proportional to (|n| + 2)^-2
  for (std::int64_t n : {-N, std::int64_t{-5}, std::int64_t{0}, std::int64_t{3}, N}) {
    CHECK(D.interval(n).length ==
          doctest::Approx(D.c * std::pow(std::abs(n) + 2.0, -2.0)).epsilon(1e-13));
  }

  std::vector<Interval> gaps;
  for (const auto& g : D.intervals) gaps.push_back({g.left, g.length});
  CHECK(pairwise_disjoint(gaps));

  double worst_map = 0.0, worst_end = 0.0;
  for (std::int64_t n = -N; n < N; ++n) {
    const auto& I = D.interval(n);
    const auto& J = D.interval(n + 1);
    double off = D.map.apply(I.left) - J.left;
    off -= std::round(off);
    worst_map = std::max(worst_map, std::abs(off));
    worst_map = std::max(
        worst_map, std::abs(D.map.apply(I.left + I.length) - D.map.apply(I.left) - J.length));
    worst_end = std::max(worst_end, std::abs(D.map.derivative(I.left) - 1.0));
    worst_end = std::max(worst_end, std::abs(D.map.derivative(I.left + I.length) - 1.0));
  }
  CHECK(worst_map <= 1e-13);
  CHECK(worst_end <= 1e-6);

  // forward images of I_0 stay disjoint with mass below one
  const auto orbit = word_orbit(std::vector<CircleDiffeo>{D.map}, Word(N, Letter{0, 1}),
                                {D.interval(0).left, D.interval(0).length});
  CHECK(orbit.wandering);
  double mass = 0.0;
  for (const auto& I : orbit.images) mass += I.length;
  CHECK(mass <= 1.0);

  CHECK(std::abs(rotation_number(D.map, 100000).estimate - D.params.alpha.value()) <= 1e-4);
}

TEST_CASE("Denjoy construction errors") {
  DenjoyParams p;
  p.alpha = Rational::parse("1/3");
  p.levels = 10;
  CHECK(code_of([&] { denjoy_construct(p); }) == ErrorCode::PrecisionLoss);
  p.alpha = sqrt2_minus_1();
  p.mass = 1.0;
  CHECK(code_of([&] { denjoy_construct(p); }) == ErrorCode::MassOverflow);
  p.mass = 0.5;
  p.levels = 200000;
  CHECK(code_of([&] { denjoy_construct(p); }) == ErrorCode::PreconditionViolated);
  // a tiny tau makes neighbouring gaps shrink too fast for a monotone bump
  p.levels = 100;
  p.tau = 0.2;
  CHECK(code_of([&] { denjoy_construct(p); }) == ErrorCode::DegenerateDerivative);
}

TEST_CASE("Hoelder exponent of a Denjoy derivative") {
  DenjoyParams p;
  p.alpha = sqrt2_minus_1();
  p.levels = 10000;
  const auto D = denjoy_construct(p);
  const auto samples = derivative_samples(D, 20);
  const auto grid = moduli::dyadic_grid(5, 20);
  const auto w = moduli::empirical_modulus(samples, grid, true);
  CHECK(moduli::fit_hoelder_exponent(w, std::ldexp(1.0, -20), std::ldexp(1.0, -5)) >= 0.45);
}

TEST_CASE("word orbits") {
  const std::vector<CircleDiffeo> rots{CircleDiffeo::rotation(sqrt2_minus_1()),
                                       CircleDiffeo::rotation(golden_conjugate())};
  const Interval I{0.2, 0.01};
  const auto empty = word_orbit(rots, {}, I);
  REQUIRE(empty.images.size() == 1);
  CHECK(empty.images[0].left == I.left);
  CHECK(empty.wandering);

  const auto L = rectangle_lengths(rots, {3, 3}, I);
  for (double v : L.values()) CHECK(v == doctest::Approx(0.01).epsilon(1e-12));

  // Denjoy pair f, f o f; l_{i,j} = |f^{i + 2j}(I)|
  const auto D = small_denjoy(200);
  const auto ff = CircleDiffeo::composition({D.map}, {{0, 2}});
  const std::vector<CircleDiffeo> pair{D.map, ff};
  const Interval I0{D.interval(-5).left, D.interval(-5).length};
  const auto R = rectangle_lengths(pair, {20, 1}, I0);
  const auto R2 = rectangle_lengths(pair, {4, 3}, I0);
  for (std::size_t i = 0; i < 20; ++i) {
    const double a = D.map.apply_power(I0.left, static_cast<std::int64_t>(i));
    const double b = D.map.apply_power(I0.right(), static_cast<std::int64_t>(i));
    CHECK(R.at(i, 0) == doctest::Approx(b - a).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const auto k = static_cast<std::int64_t>(i + 2 * j);
      CHECK(R2.at(i, j) ==
            doctest::Approx(D.map.apply_power(I0.right(), k) - D.map.apply_power(I0.left, k))
                .epsilon(1e-12));
    }
  }

  const auto o = word_orbit(pair, {{0, 3}, {1, 1}, {0, -2}}, I0);
  CHECK(o.images.size() == 4);
  CHECK(o.max_integral_error <= 1e-10);
  const std::vector<CircleDiffeo> quarter{CircleDiffeo::rotation(Rational::parse("1/4"))};
  CHECK_FALSE(word_orbit(quarter, {{0, 1}, {0, 1}, {0, 1}, {0, 1}}, {0.0, 0.1}).wandering);
  CHECK(word_orbit(quarter, {{0, 1}, {0, 1}, {0, 1}}, {0.0, 0.1}).wandering);
}

TEST_CASE("pairwise disjointness on the circle") {
  CHECK(pairwise_disjoint(std::vector<Interval>{{0.9, 0.2}, {0.15, 0.1}}));
  CHECK_FALSE(pairwise_disjoint(std::vector<Interval>{{0.9, 0.2}, {0.05, 0.1}}));
  CHECK_FALSE(pairwise_disjoint(std::vector<Interval>{{0.1, 0.1}, {1.15, 0.1}}));
  CHECK(pairwise_disjoint(std::vector<Interval>{{0.1, 0.1}, {1.25, 0.1}}));
}

TEST_CASE("commuting defect") {
  const auto grid = uniform_grid(1000);
  CHECK(commuting_defect(CircleDiffeo::rotation(0.3), CircleDiffeo::rotation(golden_conjugate()),
                         grid) <= 1e-15);
  const auto A = CircleDiffeo::analytic(0.3, 0.1);
  const auto AA = CircleDiffeo::composition({A}, {{0, 2}});
  CHECK(commuting_defect(A, AA, grid) <= 1e-12);
  CHECK(commuting_defect(A, CircleDiffeo::analytic(0.41, 0.1), grid) > 1e-4);
}

TEST_CASE("omega constants") {
  const auto id = moduli::Modulus::identity();
  CHECK(omega_constant(CircleDiffeo::rotation(0.2), id, 500).value == 0.0);

  // sup |(log Df)'| for 1 + a cos(2 pi x) is 2 pi a / sqrt(1 - a^2)
  const double lip = 2.0 * kPi * 0.1 / std::sqrt(1.0 - 0.01);
  const auto c = omega_constant(CircleDiffeo::analytic(0.3, 0.1), id, 2000);
  CHECK(c.value <= lip * (1.0 + 1e-9));
  CHECK(c.value >= lip * 0.999);
  CHECK(c.min_derivative == doctest::Approx(0.9).epsilon(1e-9));

  CHECK(code_of([&] {
          omega_constant(CircleDiffeo::analytic(0.0, 1.0 - 1e-10), id, 1000);
        }) == ErrorCode::DegenerateDerivative);

  const auto D = small_denjoy(1000);
  const auto half = omega_constant_trend(D.map, moduli::Modulus::hoelder(0.5), 2000, 16000);
  const auto steep = omega_constant_trend(D.map, moduli::Modulus::hoelder(0.9), 2000, 16000);
  CHECK_FALSE(half.growing);
  CHECK(steep.growing);
}

TEST_CASE("fixed point certificate on a contracting map") {
  // g(x) = x - 0.1 sin(2 pi x) / (2 pi) attracts to 0
  const std::vector<CircleDiffeo> gens{CircleDiffeo::analytic(0.0, -0.1)};
  const Interval I{0.01, 0.02};
  const Word word{{0, 12}};
  const double C = omega_constant(gens[0], moduli::Modulus::identity(), 10000).value;
  const std::vector<moduli::Modulus> w{moduli::Modulus::identity()};
  const double S = word_weight(word, gens, w, I);
  const auto cert = fixed_point_certificate(word, gens, I, C, S);

  CHECK(cert.outcome == CertificateOutcome::Fired);
  CHECK(cert.L == I.length / (2.0 * std::exp(2.0 * cert.C * cert.S)));
  CHECK(cert.exp_2CS == std::exp(2.0 * C * S));
  CHECK(cert.exp_CS == std::exp(C * S));
  CHECK(cert.image_in_L_neighborhood);
  CHECK(cert.image_disjoint_from_I);
  REQUIRE(cert.fixed_point.has_value());
  const double x = *cert.fixed_point;
  CHECK(x >= cert.J.left);
  CHECK(x <= cert.J.right());
  double disp = gens[0].apply_power(x, 12) - x;
  CHECK(std::abs(disp - std::round(disp)) <= 1e-9);
  CHECK(std::abs(x) <= 1e-9);
  CHECK(cert.steps.size() == 13);
  for (const auto& s : cert.steps) {
    CHECK(s.ratio_1 <= cert.exp_2CS * (1 + 1e-12));
    CHECK(s.ratio_2 <= cert.exp_2CS * (1 + 1e-12));
  }

  // an underestimated C breaks (B_j)
  const auto low = fixed_point_certificate(word, gens, I, C / 20.0, S);
  CHECK(low.outcome == CertificateOutcome::DistortionViolated);
  CHECK_FALSE(low.B_ok);
}

TEST_CASE("certificate never fires on rigid rotations") {
  const std::vector<CircleDiffeo> gens{CircleDiffeo::rotation(sqrt2_minus_1()),
                                       CircleDiffeo::rotation(golden_conjugate())};
  const std::vector<moduli::Modulus> w{moduli::Modulus::identity(),
                                       moduli::Modulus::identity()};
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> len(1, 8), pw(-3, 3), gen(0, 1);
  std::uniform_real_distribution<double> left(0.0, 1.0), width(0.001, 0.2);
  int tested = 0;
  while (tested < 100) {
    Word word;
    std::int64_t total[2] = {0, 0};
    for (int i = len(rng); i-- > 0;) {
      const int p = pw(rng);
      if (p == 0) continue;
      const auto g = static_cast<std::size_t>(gen(rng));
      word.push_back({g, p});
      total[g] += p;
    }
    if (total[0] == 0 && total[1] == 0) continue;  // rational total angle
    const Interval I{left(rng), width(rng)};
    const double S = word_weight(word, gens, w, I);
    const auto cert = fixed_point_certificate(word, gens, I, 1.0, S);
    CHECK(cert.outcome == CertificateOutcome::HypothesisNotMet);
    CHECK_FALSE(cert.fixed_point.has_value());
    ++tested;
  }
}

TEST_CASE("empty word keeps the trivial distortion bound") {
  const std::vector<CircleDiffeo> gens{CircleDiffeo::analytic(0.2, 0.3)};
  const auto cert = fixed_point_certificate({}, gens, {0.4, 0.1}, 2.0, 0.5);
  REQUIRE(cert.steps.size() == 1);
  CHECK(cert.steps[0].ratio_1 == 1.0);
  CHECK(cert.steps[0].ratio_2 == 1.0);
  CHECK(cert.B_ok);
  CHECK(cert.outcome == CertificateOutcome::HypothesisNotMet);
  CHECK(code_of([&] { fixed_point_certificate({}, gens, {0.4, 0.0}, 1.0, 1.0); }) ==
        ErrorCode::PreconditionViolated);
}

TEST_CASE("minimal cover") {
  const auto R = CircleDiffeo::rotation(golden_conjugate());
  CHECK(minimal_cover_N(R, {0.3, 1.0}) == 1);

  const double alpha = golden_conjugate().value();
  std::int64_t prev = 0;
  for (double width : {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125}) {
    const Interval V{0.1, width};
    const auto N = minimal_cover_N(R, V);
    CAPTURE(width);
    CHECK(N >= prev);
    prev = N;

    // sweep oracle: first k whose preimages cover
    std::vector<std::pair<double, double>> arcs;
    std::int64_t oracle = 0;
    for (std::int64_t k = 1; k <= 10000; ++k) {
      arcs.emplace_back(V.left - static_cast<double>(k) * alpha, width);
      if (sweep_covers(arcs, 1e-13)) {
        oracle = k;
        break;
      }
    }
    CHECK(N == oracle);

    // grid oracle at resolution |V| / 100 can only need fewer preimages
    const std::size_t res = static_cast<std::size_t>(std::ceil(100.0 / width));
    std::vector<bool> hit(res, false);
    std::size_t left = res;
    std::int64_t grid_N = 0;
    for (std::int64_t k = 1; left > 0; ++k) {
      double a = V.left - static_cast<double>(k) * alpha;
      a -= std::floor(a);
      for (std::size_t i = 0; i < res; ++i) {
        if (hit[i]) continue;
        double off = static_cast<double>(i) / static_cast<double>(res) - a;
        off -= std::floor(off);
        if (off <= width) {
          hit[i] = true;
          --left;
        }
      }
      grid_N = k;
    }
    CHECK(grid_N <= N);
  }
  CHECK(code_of([] {
          minimal_cover_N(CircleDiffeo::rotation(Rational::parse("1/4")), {0.0, 0.1}, 100);
        }) == ErrorCode::NoCoverWithin);
}

TEST_CASE("JSON loading") {
  using nlohmann::json;
  const auto r = diffeo_from_json(json{{"kind", "rotation"}, {"rho", "3/8"}});
  CHECK(r.apply(0.0) == 0.375);
  CHECK(diffeo_from_json(json{{"kind", "rotation"}, {"rho", 0.25}}).apply(0.5) == 0.75);
  const auto s = diffeo_from_json(json{{"kind", "rotation"}, {"rho", "sqrt2-1"}});
  CHECK(s.apply(0.0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-15));
  const auto a = diffeo_from_json(json{{"kind", "analytic"}, {"alpha", 0.3}, {"eps", 0.1}});
  CHECK(a.derivative(0.0) == doctest::Approx(1.1));
  const auto d = diffeo_from_json(
      json{{"kind", "denjoy"}, {"alpha", "sqrt2-1"}, {"tau", 0.5}, {"levels", 50}});
  CHECK(std::holds_alternative<std::shared_ptr<const PiecewiseBump>>(d.kind()));
  const auto c = diffeo_from_json(to_json(CircleDiffeo::composition({r, a}, {{0, 1}, {1, -2}})));
  CHECK(c.apply(0.1) ==
        doctest::Approx(a.apply_power(r.apply(0.1), -2)).epsilon(1e-15));
  CHECK(to_json(r).at("rho") == "3/8");
  CHECK(code_of([] { diffeo_from_json(json{{"kind", "spiral"}}); }) == ErrorCode::ParseError);
  CHECK(code_of([] { diffeo_from_json(json{{"kind", "analytic"}}); }) == ErrorCode::ParseError);
}
