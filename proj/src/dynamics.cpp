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

#include "denjoy/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "denjoy/error.hpp"

namespace denjoy::dynamics {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t msb_or_zero(const BigInt& v) {
  return v == 0 ? 0 : boost::multiprecision::msb(boost::multiprecision::abs(v));
}

// p / q rounded to double without overflowing the conversions.
double ratio_to_double(BigInt p, BigInt q) {
  if (p == 0) return 0.0;
  const std::size_t top = std::max(msb_or_zero(p), msb_or_zero(q));
  int scale = 0;
  if (top > 900) {
    const std::size_t drop = top - 900;
    p >>= drop;
    q >>= drop;
    if (q == 0) return std::numeric_limits<double>::infinity();
  }
  (void)scale;
  return p.convert_to<double>() / q.convert_to<double>();
}

double circle_distance(double d) { return std::abs(d - std::round(d)); }

}  // namespace

// ---------------------------------------------------------------------------
// Rational

Rational Rational::parse(const std::string& text) {
  const auto slash = text.find('/');
  auto parse_int = [&](const std::string& s) {
    if (s.empty()) throw Error(ErrorCode::ParseError, "empty integer in '" + text + "'");
    std::size_t start = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (start == s.size()) throw Error(ErrorCode::ParseError, "bad integer '" + s + "'");
    for (std::size_t i = start; i < s.size(); ++i) {
      if (s[i] < '0' || s[i] > '9') {
        throw Error(ErrorCode::ParseError, "bad integer '" + s + "'");
      }
    }
    BigInt v(s.substr(start));
    return s[0] == '-' ? BigInt(-v) : v;
  };
  Rational r;
  r.num = parse_int(slash == std::string::npos ? text : text.substr(0, slash));
  r.den = slash == std::string::npos ? BigInt(1) : parse_int(text.substr(slash + 1));
  if (r.den == 0) throw Error(ErrorCode::ParseError, "zero denominator");
  if (r.den < 0) {
    r.den = -r.den;
    r.num = -r.num;
  }
  const BigInt g = boost::multiprecision::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

Rational Rational::from_continued_fraction(std::span<const std::int64_t> terms) {
  if (terms.empty()) throw Error(ErrorCode::ParseError, "empty continued fraction");
  BigInt h_prev = 1, h = terms[0];
  BigInt k_prev = 0, k = 1;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const BigInt a = terms[i];
    BigInt h_next = a * h + h_prev;
    BigInt k_next = a * k + k_prev;
    h_prev = std::move(h);
    k_prev = std::move(k);
    h = std::move(h_next);
    k = std::move(k_next);
  }
  return {h, k};
}

double Rational::value() const { return ratio_to_double(num, den); }

BigInt Rational::frac_mul_numerator(std::int64_t n) const {
  BigInt r = (num * n) % den;
  if (r < 0) r += den;
  return r;
}

double Rational::frac_mul(std::int64_t n) const {
  return ratio_to_double(frac_mul_numerator(n), den);
}

std::string Rational::to_string() const { return num.str() + "/" + den.str(); }

std::size_t Rational::bits() const { return msb_or_zero(den) + 1; }

std::vector<std::int64_t> continued_fraction(const Rational& r, std::size_t max_terms) {
  std::vector<std::int64_t> out;
  BigInt p = r.num, q = r.den;
  while (q != 0 && out.size() < max_terms) {
    BigInt a = p / q;
    if (p % q != 0 && p < 0) a -= 1;  // floor for negative values
    out.push_back(a.convert_to<std::int64_t>());
    BigInt rem = p - a * q;
    p = q;
    q = rem;
  }
  return out;
}

namespace {

Rational periodic_convergent(std::int64_t a0, std::int64_t first, std::int64_t rest,
                             std::size_t min_bits) {
  std::vector<std::int64_t> terms{a0, first};
  while (true) {
    const Rational r = Rational::from_continued_fraction(terms);
    if (r.bits() > min_bits) return r;
    terms.push_back(rest);
  }
}

}  // namespace

Rational sqrt2_minus_1(std::size_t min_bits) { return periodic_convergent(0, 2, 2, min_bits); }

Rational golden_conjugate(std::size_t min_bits) {
  return periodic_convergent(0, 2, 1, min_bits);
}

Rational named_angle(const std::string& name, std::size_t min_bits) {
  if (name == "sqrt2-1") return sqrt2_minus_1(min_bits);
  if (name == "golden") return golden_conjugate(min_bits);
  return Rational::parse(name);
}

namespace {

Rational rational_from_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidMap, "non-finite rotation angle");
  int e = 0;
  const double m = std::frexp(v, &e);
  // v = m 2^e with |m| in [0.5, 1): scale the mantissa to an integer
  const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
  Rational r;
  r.num = mant;
  r.den = 1;
  const int shift = e - 53;
  if (shift >= 0) {
    r.num <<= shift;
  } else {
    r.den <<= -shift;
  }
  const BigInt g = boost::multiprecision::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// CircleDiffeo

CircleDiffeo CircleDiffeo::rotation(Rational rho) {
  const double v = rho.value();
  return CircleDiffeo(Rotation{std::move(rho), v});
}

CircleDiffeo CircleDiffeo::rotation(double rho) {
  return CircleDiffeo(Rotation{rational_from_double(rho), rho});
}

CircleDiffeo CircleDiffeo::analytic(double alpha, double eps) {
  if (!(std::abs(eps) < 1.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::InvalidMap,
                fmt::format("analytic map needs |eps| < 1, got {}", eps));
  }
  return CircleDiffeo(Analytic{alpha, eps});
}

CircleDiffeo CircleDiffeo::piecewise(PiecewiseBump t) {
  const std::size_t n = t.x.size();
  if (n == 0 || t.lambda.size() != n || t.y.size() != n || t.mu.size() != n) {
    throw Error(ErrorCode::InvalidMap, "piecewise table sizes differ");
  }
  double span_x = 0.0, span_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t.lambda[i] > 0.0) || !(t.mu[i] > 0.0)) {
      throw Error(ErrorCode::InvalidMap, fmt::format("piece {} has empty side", i));
    }
    // 1 + (r - 1) 6 s (1 - s) is smallest at s = 1/2 when r < 1
    const double r = t.mu[i] / t.lambda[i];
    if (!(1.0 + 1.5 * std::min(r - 1.0, 0.0) > 0.0)) {
      throw Error(ErrorCode::DegenerateDerivative,
                  fmt::format("piece {} ratio {} leaves the derivative nonpositive", i, r));
    }
    span_x += t.lambda[i];
    span_y += t.mu[i];
    if (i + 1 < n) {
      if (std::abs(t.x[i] + t.lambda[i] - t.x[i + 1]) > 1e-12 ||
          std::abs(t.y[i] + t.mu[i] - t.y[i + 1]) > 1e-12) {
        throw Error(ErrorCode::InvalidMap, fmt::format("pieces {} and {} do not abut", i,
                                                       i + 1));
      }
    }
  }
  if (std::abs(span_x - 1.0) > 1e-10 || std::abs(span_y - 1.0) > 1e-10) {
    throw Error(ErrorCode::InvalidMap, "pieces must span one turn");
  }
  return CircleDiffeo(std::make_shared<const PiecewiseBump>(std::move(t)));
}

CircleDiffeo CircleDiffeo::composition(std::vector<CircleDiffeo> generators, Word word) {
  for (const auto& l : word) {
    if (l.generator >= generators.size()) {
      throw Error(ErrorCode::InvalidMap, "word refers to a missing generator");
    }
  }
  return CircleDiffeo(Composition{
      std::make_shared<const std::vector<CircleDiffeo>>(std::move(generators)),
      std::move(word)});
}

namespace {

struct Located {
  std::size_t i;
  double s;
  double k;  // integer turn
};

Located locate_domain(const PiecewiseBump& t, double x) {
  const double k = std::floor(x - t.x.front());
  const double u = x - k;
  auto it = std::upper_bound(t.x.begin(), t.x.end(), u);
  std::size_t i = it == t.x.begin() ? 0 : static_cast<std::size_t>(it - t.x.begin()) - 1;
  const double s = std::clamp((u - t.x[i]) / t.lambda[i], 0.0, 1.0);
  return {i, s, k};
}

double bump_value(const PiecewiseBump& t, double x) {
  const auto [i, s, k] = locate_domain(t, x);
  const double lam = t.lambda[i];
  return t.y[i] + lam * s + (t.mu[i] - lam) * s * s * (3.0 - 2.0 * s) + k;
}

double bump_derivative(const PiecewiseBump& t, double x) {
  const auto [i, s, k] = locate_domain(t, x);
  (void)k;
  return 1.0 + (t.mu[i] / t.lambda[i] - 1.0) * 6.0 * s * (1.0 - s);
}

double bump_inverse(const PiecewiseBump& t, double y) {
  const double k = std::floor(y - t.y.front());
  const double v = y - k;
  auto it = std::upper_bound(t.y.begin(), t.y.end(), v);
  std::size_t i = it == t.y.begin() ? 0 : static_cast<std::size_t>(it - t.y.begin()) - 1;
  const double lam = t.lambda[i], mu = t.mu[i];
  const double target = v - t.y[i];
  double lo = 0.0, hi = 1.0;
  for (int it2 = 0; it2 < 64; ++it2) {
    const double s = 0.5 * (lo + hi);
    const double g = lam * s + (mu - lam) * s * s * (3.0 - 2.0 * s);
    (g < target ? lo : hi) = s;
  }
  return t.x[i] + lam * 0.5 * (lo + hi) + k;
}

double analytic_inverse(const Analytic& a, double y) {
  const double z = y - a.alpha;
  const double r = std::abs(a.eps) / kTwoPi;
  double lo = z - r, hi = z + r;
  for (int it = 0; it < 80 && hi - lo > 0.0; ++it) {
    const double x = 0.5 * (lo + hi);
    if (x == lo || x == hi) break;
    const double h = x + a.eps * std::sin(kTwoPi * x) / kTwoPi;
    (h < z ? lo : hi) = x;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double CircleDiffeo::apply(double x) const {
  return std::visit(
      Overloaded{
          [&](const Rotation& r) { return x + r.value; },
          [&](const Analytic& a) {
            return x + a.alpha + a.eps * std::sin(kTwoPi * x) / kTwoPi;
          },
          [&](const std::shared_ptr<const PiecewiseBump>& t) { return bump_value(*t, x); },
          [&](const Composition& c) {
            double v = x;
            for (const auto& l : c.word) v = (*c.generators)[l.generator].apply_power(v, l.power);
            return v;
          }},
      kind_);
}

double CircleDiffeo::derivative(double x) const {
  return std::visit(
      Overloaded{[&](const Rotation&) { return 1.0; },
                 [&](const Analytic& a) { return 1.0 + a.eps * std::cos(kTwoPi * x); },
                 [&](const std::shared_ptr<const PiecewiseBump>& t) {
                   return bump_derivative(*t, x);
                 },
                 [&](const Composition& c) {
                   double v = x, d = 1.0;
                   for (const auto& l : c.word) {
                     const auto& g = (*c.generators)[l.generator];
                     d *= g.power_derivative(v, l.power);
                     v = g.apply_power(v, l.power);
                   }
                   return d;
                 }},
      kind_);
}

double CircleDiffeo::inverse(double y) const {
  return std::visit(
      Overloaded{[&](const Rotation& r) { return y - r.value; },
                 [&](const Analytic& a) { return analytic_inverse(a, y); },
                 [&](const std::shared_ptr<const PiecewiseBump>& t) {
                   return bump_inverse(*t, y);
                 },
                 [&](const Composition& c) {
                   double v = y;
                   for (auto it = c.word.rbegin(); it != c.word.rend(); ++it) {
                     v = (*c.generators)[it->generator].apply_power(v, -it->power);
                   }
                   return v;
                 }},
      kind_);
}

double CircleDiffeo::apply_power(double x, std::int64_t k) const {
  if (const auto* r = std::get_if<Rotation>(&kind_)) {
    return x + static_cast<double>(k) * r->value;
  }
  for (std::int64_t i = 0; i < k; ++i) x = apply(x);
  for (std::int64_t i = 0; i < -k; ++i) x = inverse(x);
  return x;
}

double CircleDiffeo::power_derivative(double x, std::int64_t k) const {
  double d = 1.0;
  for (std::int64_t i = 0; i < k; ++i) {
    d *= derivative(x);
    x = apply(x);
  }
  for (std::int64_t i = 0; i < -k; ++i) {
    x = inverse(x);
    d /= derivative(x);
  }
  return d;
}

std::string CircleDiffeo::describe() const {
  return std::visit(
      Overloaded{
          [](const Rotation& r) { return fmt::format("rotation({:.17g})", r.value); },
          [](const Analytic& a) {
            return fmt::format("analytic({:.17g}, {:.17g})", a.alpha, a.eps);
          },
          [](const std::shared_ptr<const PiecewiseBump>& t) {
            return fmt::format("piecewise({} pieces)", t->x.size());
          },
          [](const Composition& c) {
            return fmt::format("composition({} letters)", c.word.size());
          }},
      kind_);
}

CircleDiffeo conjugate_by_rotation(const CircleDiffeo& f, double beta) {
  return CircleDiffeo::composition(
      {CircleDiffeo::rotation(-beta), f, CircleDiffeo::rotation(beta)},
      {{0, 1}, {1, 1}, {2, 1}});
}

RotationEstimate rotation_number(const CircleDiffeo& f, std::int64_t n, double x0) {
  if (n < 1) throw Error(ErrorCode::PreconditionViolated, "iteration count must be >= 1");
  double x = x0;
  for (std::int64_t i = 0; i < n; ++i) x = f.apply(x);
  return {(x - x0) / static_cast<double>(n), 1.0 / static_cast<double>(n)};
}

// ---------------------------------------------------------------------------
// Denjoy construction

double DenjoyMap::profile_midpoint(std::int64_t n) const {
  const double r = interval(n + 1).length / interval(n).length;
  return 1.0 + (r - 1.0) * 1.5;
}

DenjoyMap denjoy_construct(const DenjoyParams& p) {
  if (!(p.tau > 0.0 && p.tau < 1.0)) {
    throw Error(ErrorCode::PreconditionViolated, "tau must lie in (0, 1)");
  }
  if (p.levels < 1 || p.levels > 100000) {
    throw Error(ErrorCode::PreconditionViolated, "levels must lie in [1, 1e5]");
  }
  if (!(p.mass > 0.0)) throw Error(ErrorCode::PreconditionViolated, "mass must be positive");
  if (p.mass >= 1.0) {
    throw Error(ErrorCode::MassOverflow, fmt::format("inserted mass {} >= 1", p.mass));
  }
  if (p.alpha.den <= 0) throw Error(ErrorCode::PreconditionViolated, "bad angle");
  const std::int64_t N = p.levels;

  DenjoyMap out{CircleDiffeo::rotation(p.alpha), p, {}, 0.0, 0.0, 0.0, 0.0, 0};

  // lengths, smallest terms first
  std::vector<double> len(static_cast<std::size_t>(2 * N + 1));
  double weight = 0.0;
  for (std::int64_t a = N; a >= 0; --a) {
    const double u = std::pow(static_cast<double>(a) + p.offset, -1.0 / p.tau);
    len[static_cast<std::size_t>(N + a)] = u;
    len[static_cast<std::size_t>(N - a)] = u;
    weight += a == 0 ? u : 2.0 * u;
  }
  out.c = p.mass / weight;
  for (auto& v : len) v *= out.c;
  for (std::int64_t a = N; a >= 0; --a) {
    out.total_mass += a == 0 ? len[static_cast<std::size_t>(N)]
                             : len[static_cast<std::size_t>(N + a)] +
                                   len[static_cast<std::size_t>(N - a)];
  }
  if (out.total_mass >= 1.0) {
    throw Error(ErrorCode::MassOverflow, fmt::format("mass {}", out.total_mass));
  }
  auto ell = [&](std::int64_t n) { return len[static_cast<std::size_t>(n + N)]; };

  // orbit points k = -N-1 .. N+1, sorted exactly
  const std::int64_t K0 = -N - 1, K1 = N + 1;
  const auto count = static_cast<std::size_t>(K1 - K0 + 1);
  std::vector<BigInt> numer(count);
  std::vector<double> theta(count);
  for (std::int64_t k = K0; k <= K1; ++k) {
    const auto i = static_cast<std::size_t>(k - K0);
    numer[i] = p.alpha.frac_mul_numerator(k);
    theta[i] = ratio_to_double(numer[i], p.alpha.den);
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return numer[a] < numer[b]; });
  double spacing = 1.0;
  for (std::size_t r = 0; r < count; ++r) {
    const BigInt diff = r + 1 < count ? BigInt(numer[order[r + 1]] - numer[order[r]])
                                      : BigInt(p.alpha.den - numer[order[r]] +
                                               numer[order.front()]);
    spacing = std::min(spacing, ratio_to_double(diff, p.alpha.den));
  }
  out.min_spacing = spacing;
  if (spacing < 1e-14) {
    throw Error(ErrorCode::PrecisionLoss,
                fmt::format("orbit points {} apart; use a finer angle", spacing));
  }
  const double w = spacing / 4.0;
  out.window = w;

  std::vector<std::size_t> rank(count);
  for (std::size_t r = 0; r < count; ++r) rank[order[r]] = r;
  auto is_gap = [&](std::int64_t k) { return k >= -N && k <= N; };
  std::vector<double> before(count + 1, 0.0);  // gap mass before rank r
  for (std::size_t r = 0; r < count; ++r) {
    const std::int64_t k = static_cast<std::int64_t>(order[r]) + K0;
    before[r + 1] = before[r] + (is_gap(k) ? ell(k) : 0.0);
  }
  const double slope = 1.0 - p.mass;
  // position of theta_k + dt; `right` takes the far side of a gap at dt = 0
  auto P = [&](std::int64_t k, double dt, bool right) {
    const auto i = static_cast<std::size_t>(k - K0);
    double v = slope * (theta[i] + dt) + before[rank[i]];
    if (is_gap(k) && (dt > 0.0 || (dt == 0.0 && right))) v += ell(k);
    return v;
  };

  for (std::int64_t n = -N; n <= N; ++n) {
    out.intervals.push_back({n, theta[static_cast<std::size_t>(n - K0)], P(n, 0.0, false),
                             ell(n)});
  }

  // domain events in circle order, each followed by a translated arc
  std::vector<double> xs, ys;
  for (std::size_t r = 0; r < count; ++r) {
    const std::int64_t k = static_cast<std::int64_t>(order[r]) + K0;
    double d0, d1, i0, i1;
    if (k >= -N && k < N) {
      d0 = P(k, 0.0, false);
      d1 = P(k, 0.0, true);
      i0 = P(k + 1, 0.0, false);
      i1 = P(k + 1, 0.0, true);
    } else if (k == K0 || k == N) {
      d0 = P(k, -w, false);
      d1 = P(k, w, false);
      i0 = P(k + 1, -w, false);
      i1 = P(k + 1, w, false);
    } else {
      continue;
    }
    xs.push_back(d0);
    ys.push_back(i0);
    xs.push_back(d1);
    ys.push_back(i1);
  }
  // unwrap image starts into an increasing lift
  for (std::size_t i = 1; i < ys.size(); ++i) {
    ys[i] += std::round(ys[i - 1] - ys[i]);
    if (ys[i] < ys[i - 1]) ys[i] += 1.0;
  }
  PiecewiseBump t;
  t.x = xs;
  t.y = ys;
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double xn = i + 1 < n ? xs[i + 1] : xs[0] + 1.0;
    const double yn = i + 1 < n ? ys[i + 1] : ys[0] + 1.0;
    t.lambda.push_back(xn - xs[i]);
    t.mu.push_back(yn - ys[i]);
  }
  out.pieces = n;
  out.map = CircleDiffeo::piecewise(std::move(t));
  return out;
}

std::vector<moduli::Sample> derivative_samples(const DenjoyMap& d, int depth) {
  const std::size_t n = std::size_t{1} << depth;
  std::vector<double> xs;
  xs.reserve(n + 3 * d.intervals.size());
  for (std::size_t i = 0; i < n; ++i) xs.push_back(std::ldexp(static_cast<double>(i), -depth));
  for (const auto& g : d.intervals) {
    for (double x : {g.left, g.left + 0.5 * g.length, g.left + g.length}) {
      xs.push_back(x - std::floor(x));
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  while (!xs.empty() && xs.back() >= 1.0) xs.pop_back();
  std::vector<moduli::Sample> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back({x, d.map.derivative(x)});
  return out;
}

// ---------------------------------------------------------------------------
// Orbits

Word unit_word(const Word& w) {
  Word out;
  for (const auto& l : w) {
    const std::int64_t step = l.power >= 0 ? 1 : -1;
    for (std::int64_t i = 0; i < std::abs(l.power); ++i) out.push_back({l.generator, step});
  }
  return out;
}

namespace {

double simpson(const auto& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Number of elementary maps behind g; compositions get more panels.
std::int64_t elementary_steps(const CircleDiffeo& g) {
  const auto* c = std::get_if<Composition>(&g.kind());
  if (!c) return 1;
  std::int64_t n = 0;
  for (const auto& l : c->word) {
    n += std::abs(l.power) * elementary_steps((*c->generators)[l.generator]);
  }
  return std::max<std::int64_t>(n, 1);
}

Interval step_interval(const CircleDiffeo& g, std::int64_t dir, Interval I,
                       double* integral_error) {
  const double a = dir > 0 ? g.apply(I.left) : g.inverse(I.left);
  const double b = dir > 0 ? g.apply(I.right()) : g.inverse(I.right());
  if (integral_error) {
    // inverse steps are checked the other way round: g maps the new image
    // back onto I
    auto df = [&](double x) { return g.derivative(x); };
    const int panels = static_cast<int>(std::min<std::int64_t>(64 * elementary_steps(g), 1 << 16));
    *integral_error = dir > 0 ? std::abs((b - a) - simpson(df, I.left, I.right(), panels))
                              : std::abs(I.length - simpson(df, a, b, panels));
  }
  return {a, b - a};
}

}  // namespace

IntervalOrbit word_orbit(std::span<const CircleDiffeo> generators, const Word& word,
                         Interval I) {
  IntervalOrbit o;
  o.word = word;
  o.start = I;
  o.images.push_back(I);
  Interval cur = I;
  for (const auto& l : word) {
    if (l.generator >= generators.size()) {
      throw Error(ErrorCode::InvalidMap, "word refers to a missing generator");
    }
    const std::int64_t dir = l.power >= 0 ? 1 : -1;
    for (std::int64_t i = 0; i < std::abs(l.power); ++i) {
      double err = 0.0;
      cur = step_interval(generators[l.generator], dir, cur, &err);
      o.max_integral_error = std::max(o.max_integral_error, err);
    }
    o.images.push_back(cur);
  }
  o.wandering = pairwise_disjoint(o.images);
  return o;
}

bool pairwise_disjoint(std::span<const Interval> images) {
  std::vector<std::pair<double, double>> parts;
  for (const auto& I : images) {
    if (I.length >= 1.0) return images.size() <= 1;
    const double a = I.left - std::floor(I.left);
    const double b = a + I.length;
    if (b > 1.0) {
      parts.emplace_back(a, 1.0);
      parts.emplace_back(0.0, b - 1.0);
    } else {
      parts.emplace_back(a, b);
    }
  }
  std::sort(parts.begin(), parts.end());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].first < parts[i - 1].second) return false;
  }
  return true;
}

selection::LengthArray rectangle_lengths(std::span<const CircleDiffeo> generators,
                                         std::vector<std::size_t> dims, Interval I) {
  const std::size_t d = dims.size();
  if (generators.size() != d) {
    throw Error(ErrorCode::ScheduleMismatch, "one generator per dimension");
  }
  std::size_t total = 1;
  for (std::size_t e : dims) total *= e;
  std::vector<Interval> iv(total);
  std::vector<double> values(total);
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t k = d - 1; k-- > 0;) stride[k] = stride[k + 1] * dims[k + 1];
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    // f_1^{i_1} ... f_d^{i_d}(I): peel the first nonzero power
    std::size_t k = 0;
    while (k < d && idx[k] == 0) ++k;
    iv[flat] = k == d ? I : step_interval(generators[k], 1, iv[flat - stride[k]], nullptr);
    values[flat] = iv[flat].length;
    for (std::size_t j = d; j-- > 0;) {
      if (++idx[j] < dims[j]) break;
      idx[j] = 0;
    }
  }
  return selection::LengthArray(std::move(dims), std::move(values));
}

double commuting_defect(const CircleDiffeo& f, const CircleDiffeo& g,
                        std::span<const double> grid) {
  double worst = 0.0;
  for (double x : grid) {
    worst = std::max(worst, circle_distance(f.apply(g.apply(x)) - g.apply(f.apply(x))));
  }
  return worst;
}

std::vector<double> uniform_grid(std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n);
  return g;
}

OmegaConstant omega_constant(const CircleDiffeo& f, const moduli::Modulus& w,
                             std::size_t n, double margin) {
  if (n < 2) throw Error(ErrorCode::EmptyGrid, "need at least two grid points");
  OmegaConstant out;
  std::vector<double> logd(n);
  out.min_derivative = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = f.derivative(static_cast<double>(i) / static_cast<double>(n));
    out.min_derivative = std::min(out.min_derivative, d);
    logd[i] = std::log(d);
  }
  if (!(out.min_derivative >= margin)) {
    throw Error(ErrorCode::DegenerateDerivative,
                fmt::format("min derivative {} below {}", out.min_derivative, margin));
  }
  // w at circle distance k/n, k = 1..n/2; zero marks distances outside the domain
  std::vector<double> wt(n / 2 + 1, 0.0);
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n);
    if (t <= w.domain_cap()) wt[k] = 1.0 / w(t);
  }
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t k = std::min(j - i, n - (j - i));
      const double r = std::abs(logd[i] - logd[j]) * wt[k];
      if (r > out.value) {
        out.value = r;
        bi = i;
        bj = j;
      }
    }
  }
  out.x = static_cast<double>(bi) / static_cast<double>(n);
  out.y = static_cast<double>(bj) / static_cast<double>(n);
  return out;
}

OmegaTrend omega_constant_trend(const CircleDiffeo& f, const moduli::Modulus& w,
                                std::size_t coarse_n, std::size_t fine_n) {
  OmegaTrend t;
  t.coarse = omega_constant(f, w, coarse_n);
  t.fine = omega_constant(f, w, fine_n);
  t.growing = t.fine.value > 1.05 * t.coarse.value;
  return t;
}

// ---------------------------------------------------------------------------
// Certificate

std::string_view to_string(CertificateOutcome o) {
  switch (o) {
    case CertificateOutcome::Fired: return "Fired";
    case CertificateOutcome::HypothesisNotMet: return "HypothesisNotMet";
    case CertificateOutcome::DistortionViolated: return "DistortionViolated";
  }
  return "Unknown";
}

double word_weight(const Word& word, std::span<const CircleDiffeo> generators,
                   std::span<const moduli::Modulus> moduli, Interval I) {
  double s = 0.0;
  for (const auto& l : unit_word(word)) {
    if (l.generator >= generators.size() || l.generator >= moduli.size()) {
      throw Error(ErrorCode::InvalidMap, "word refers to a missing generator");
    }
    s += moduli[l.generator](I.length);
    I = step_interval(generators[l.generator], l.power, I, nullptr);
  }
  return s;
}

FixedPointCertificate fixed_point_certificate(const Word& word,
                                              std::span<const CircleDiffeo> generators,
                                              Interval I, double C, double S,
                                              std::size_t samples) {
  if (!(I.length > 0.0) || !(I.length < 1.0)) {
    throw Error(ErrorCode::PreconditionViolated, "interval length must lie in (0, 1)");
  }
  if (!(C >= 0.0) || !(S >= 0.0)) {
    throw Error(ErrorCode::PreconditionViolated, "C and S must be nonnegative");
  }
  if (samples < 2) samples = 2;
  const Word steps = unit_word(word);
  for (const auto& l : steps) {
    if (l.generator >= generators.size()) {
      throw Error(ErrorCode::InvalidMap, "word refers to a missing generator");
    }
  }

  FixedPointCertificate c;
  c.word = word;
  c.I = I;
  c.C = C;
  c.S = S;
  c.exp_CS = std::exp(C * S);
  c.exp_2CS = std::exp(2.0 * C * S);
  c.L = I.length / (2.0 * std::exp(2.0 * C * S));
  c.J = {I.left - 2.0 * c.L, I.length + 4.0 * c.L};
  c.I1 = {I.left - 2.0 * c.L, 2.0 * c.L};
  c.I2 = {I.right(), 2.0 * c.L};

  // sample points: I_1, I, I_2 in order, endpoints shared
  std::vector<double> pts;
  auto add = [&](Interval part) {
    for (std::size_t i = 0; i < samples; ++i) {
      pts.push_back(part.left + part.length * static_cast<double>(i) /
                                    static_cast<double>(samples - 1));
    }
  };
  add(c.I1);
  add(I);
  add(c.I2);
  const std::size_t b1 = samples, b2 = 2 * samples;  // starts of I and I_2 blocks
  std::vector<double> logd(pts.size(), 0.0);

  auto record = [&]() {
    StepCheck s;
    s.image_I1 = pts[b1 - 1] - pts[0];
    s.image_I = pts[b2 - 1] - pts[b1];
    s.image_I2 = pts.back() - pts[b2];
    auto spread = [&](std::size_t lo, std::size_t hi) {
      const auto [mn, mx] = std::minmax_element(logd.begin() + lo, logd.begin() + hi);
      return std::exp(*mx - *mn);
    };
    s.ratio_1 = spread(0, b2);
    s.ratio_2 = spread(b1, pts.size());
    s.A_ok = s.image_I1 <= s.image_I * (1.0 + 1e-12) && s.image_I2 <= s.image_I * (1.0 + 1e-12);
    s.B_ok = s.ratio_1 <= c.exp_2CS * (1.0 + 1e-12) && s.ratio_2 <= c.exp_2CS * (1.0 + 1e-12);
    c.distortion_bound = std::max({c.distortion_bound, s.ratio_1, s.ratio_2});
    c.A_ok = c.A_ok && s.A_ok;
    c.B_ok = c.B_ok && s.B_ok;
    c.steps.push_back(s);
  };
  record();
  for (const auto& l : steps) {
    const auto& g = generators[l.generator];
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (l.power > 0) {
        logd[i] += std::log(g.derivative(pts[i]));
        pts[i] = g.apply(pts[i]);
      } else {
        pts[i] = g.inverse(pts[i]);
        logd[i] -= std::log(g.derivative(pts[i]));
      }
    }
    record();
  }

  const double ha = pts[b1], hb = pts[b2 - 1];
  const double mid_shift = 0.5 * (ha + hb) - (I.left + 0.5 * I.length);
  c.shift = static_cast<std::int64_t>(std::llround(mid_shift));
  const double k = static_cast<double>(c.shift);
  c.final_image = {ha - k, hb - ha};
  c.image_in_L_neighborhood =
      c.final_image.left >= I.left - c.L && c.final_image.right() <= I.right() + c.L;
  c.image_disjoint_from_I = c.final_image.right() < I.left || c.final_image.left > I.right();
  if (!(c.image_in_L_neighborhood && c.image_disjoint_from_I)) {
    c.outcome = CertificateOutcome::HypothesisNotMet;
    return c;
  }
  if (!(c.A_ok && c.B_ok)) {
    c.outcome = CertificateOutcome::DistortionViolated;
    return c;
  }
  auto H = [&](double x) {
    for (const auto& l : steps) {
      const auto& g = generators[l.generator];
      x = l.power > 0 ? g.apply(x) : g.inverse(x);
    }
    return x - k;
  };
  double lo = c.J.left, hi = c.J.right();
  if (H(lo) - lo < 0.0 || H(hi) - hi > 0.0) {
    // H(J) inside J failed numerically despite (A_n)
    c.outcome = CertificateOutcome::DistortionViolated;
    return c;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (H(mid) - mid >= 0.0 ? lo : hi) = mid;
  }
  const double dlo = std::abs(H(lo) - lo), dhi = std::abs(H(hi) - hi);
  c.fixed_point = dlo <= dhi ? lo : hi;
  c.residual = std::min(dlo, dhi);
  c.outcome = CertificateOutcome::Fired;
  return c;
}

// ---------------------------------------------------------------------------

std::int64_t minimal_cover_N(const CircleDiffeo& f, Interval V, std::int64_t max_n) {
  if (!(V.length > 0.0)) throw Error(ErrorCode::PreconditionViolated, "empty V");
  if (V.length >= 1.0) return 1;
  constexpr double kTiny = 1e-13;
  std::map<double, double> gaps{{0.0, 1.0}};  // uncovered [start, end)
  auto cover = [&](double a, double b) {
    auto it = gaps.upper_bound(a);
    if (it != gaps.begin()) --it;
    while (it != gaps.end() && it->first < b) {
      const double s = it->first, e = it->second;
      if (e <= a) {
        ++it;
        continue;
      }
      it = gaps.erase(it);
      if (s < a && a - s > kTiny) gaps.emplace(s, a);
      if (e > b && e - b > kTiny) it = gaps.emplace(b, e).first;
    }
  };
  const bool exact_rotation = std::holds_alternative<Rotation>(f.kind());
  double a = V.left, b = V.right();
  for (std::int64_t k = 1; k <= max_n; ++k) {
    if (exact_rotation) {
      a = f.apply_power(V.left, -k);
      b = f.apply_power(V.right(), -k);
    } else {
      a = f.inverse(a);
      b = f.inverse(b);
    }
    const double lo = a - std::floor(a);
    const double hi = lo + (b - a);
    if (hi > 1.0) {
      cover(lo, 1.0);
      cover(0.0, hi - 1.0);
    } else {
      cover(lo, hi);
    }
    if (gaps.empty()) return k;
  }
  throw Error(ErrorCode::NoCoverWithin, fmt::format("no cover within {} preimages", max_n));
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const CircleDiffeo& f) {
  return std::visit(
      Overloaded{[](const Rotation& r) {
                   return nlohmann::json{
                       {"kind", "rotation"}, {"rho", r.rho.to_string()}, {"value", r.value}};
                 },
                 [](const Analytic& a) {
                   return nlohmann::json{{"kind", "analytic"}, {"alpha", a.alpha},
                                         {"eps", a.eps}};
                 },
                 [](const std::shared_ptr<const PiecewiseBump>& t) {
                   return nlohmann::json{{"kind", "piecewise"}, {"pieces", t->x.size()}};
                 },
                 [](const Composition& c) {
                   nlohmann::json gens = nlohmann::json::array();
                   for (const auto& g : *c.generators) gens.push_back(to_json(g));
                   nlohmann::json word = nlohmann::json::array();
                   for (const auto& l : c.word) word.push_back({l.generator, l.power});
                   return nlohmann::json{
                       {"kind", "composition"}, {"generators", gens}, {"word", word}};
                 }},
      f.kind());
}

namespace {

nlohmann::json interval_json(const Interval& I) {
  return {{"left", I.left}, {"length", I.length}};
}

Rational angle_from_json(const nlohmann::json& v) {
  if (v.is_string()) return named_angle(v.get<std::string>());
  if (v.is_number()) return rational_from_double(v.get<double>());
  if (v.is_array()) {
    const auto terms = v.get<std::vector<std::int64_t>>();
    return Rational::from_continued_fraction(terms);
  }
  throw Error(ErrorCode::ParseError, "angle must be a string, number or term list");
}

}  // namespace

nlohmann::json to_json(const FixedPointCertificate& c) {
  nlohmann::json word = nlohmann::json::array();
  for (const auto& l : c.word) word.push_back({l.generator, l.power});
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : c.steps) {
    steps.push_back({{"image_I", s.image_I},
                     {"image_I1", s.image_I1},
                     {"image_I2", s.image_I2},
                     {"ratio_1", s.ratio_1},
                     {"ratio_2", s.ratio_2},
                     {"A_ok", s.A_ok},
                     {"B_ok", s.B_ok}});
  }
  nlohmann::json j{{"word", word},
                   {"I", interval_json(c.I)},
                   {"C", c.C},
                   {"S", c.S},
                   {"L", c.L},
                   {"exp_CS", c.exp_CS},
                   {"exp_2CS", c.exp_2CS},
                   {"J", interval_json(c.J)},
                   {"I1", interval_json(c.I1)},
                   {"I2", interval_json(c.I2)},
                   {"final_image", interval_json(c.final_image)},
                   {"shift", c.shift},
                   {"image_in_L_neighborhood", c.image_in_L_neighborhood},
                   {"image_disjoint_from_I", c.image_disjoint_from_I},
                   {"distortion_bound", c.distortion_bound},
                   {"A_ok", c.A_ok},
                   {"B_ok", c.B_ok},
                   {"steps", steps},
                   {"outcome", std::string(to_string(c.outcome))}};
  if (c.fixed_point) {
    j["fixed_point"] = *c.fixed_point;
    j["residual"] = c.residual;
  } else {
    j["fixed_point"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const IntervalOrbit& o) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& I : o.images) images.push_back(interval_json(I));
  nlohmann::json word = nlohmann::json::array();
  for (const auto& l : o.word) word.push_back({l.generator, l.power});
  return {{"word", word},
          {"start", interval_json(o.start)},
          {"images", images},
          {"max_integral_error", o.max_integral_error},
          {"wandering", o.wandering}};
}

DenjoyParams denjoy_params_from_json(const nlohmann::json& j) {
  try {
    DenjoyParams p;
    p.alpha = angle_from_json(j.at("alpha"));
    p.tau = j.value("tau", p.tau);
    p.levels = j.value("levels", p.levels);
    p.mass = j.value("mass", p.mass);
    p.offset = j.value("offset", p.offset);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

CircleDiffeo diffeo_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "rotation") {
      const auto& rho = j.at("rho");
      if (rho.is_number()) return CircleDiffeo::rotation(rho.get<double>());
      return CircleDiffeo::rotation(angle_from_json(rho));
    }
    if (kind == "analytic") {
      return CircleDiffeo::analytic(j.at("alpha").get<double>(), j.at("eps").get<double>());
    }
    if (kind == "denjoy") return denjoy_construct(denjoy_params_from_json(j)).map;
    if (kind == "composition") {
      std::vector<CircleDiffeo> gens;
      for (const auto& g : j.at("generators")) gens.push_back(diffeo_from_json(g));
      Word word;
      for (const auto& l : j.at("word")) {
        word.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::int64_t>()});
      }
      return CircleDiffeo::composition(std::move(gens), std::move(word));
    }
    throw Error(ErrorCode::ParseError, "unknown map kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace denjoy::dynamics
