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

// Circle diffeomorphisms as lifts with derivatives, rotation numbers, a
// finite Denjoy-type construction and the distortion / fixed point
// certificate for compositions.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "denjoy/moduli.hpp"
#include "denjoy/selection.hpp"

namespace denjoy::dynamics {

using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------------------
// Exact rationals for rotation angles.

struct Rational {
  BigInt num{0};
  BigInt den{1};

  /// "p/q" or an integer.
  static Rational parse(const std::string& text);
  /// Convergent of [a0; a1, a2, ...].
  static Rational from_continued_fraction(std::span<const std::int64_t> terms);

  double value() const;
  /// frac(n * this) in [0, 1), reduced exactly before rounding.
  double frac_mul(std::int64_t n) const;
  /// n * this mod 1 as an exact numerator over den.
  BigInt frac_mul_numerator(std::int64_t n) const;
  std::string to_string() const;
  std::size_t bits() const;
};

std::vector<std::int64_t> continued_fraction(const Rational& r, std::size_t max_terms = 64);
/// Convergent of sqrt(2) - 1 = [0; 2, 2, ...] with denominator >= 2^min_bits.
Rational sqrt2_minus_1(std::size_t min_bits = 128);
/// Convergent of (3 - sqrt(5)) / 2 = [0; 2, 1, 1, ...].
Rational golden_conjugate(std::size_t min_bits = 128);
/// "sqrt2-1", "golden" or "p/q".
Rational named_angle(const std::string& name, std::size_t min_bits = 128);

// ---------------------------------------------------------------------------

class CircleDiffeo;

struct Rotation {
  Rational rho;
  double value = 0.0;
};

/// x + alpha + eps sin(2 pi x) / (2 pi), a diffeomorphism for |eps| < 1.
struct Analytic {
  double alpha = 0.0;
  double eps = 0.0;
};

/// Piecewise map: piece i sends [x_i, x_i + lambda_i] to [y_i, y_i + mu_i]
/// by y_i + lambda s + (mu - lambda)(3 s^2 - 2 s^3), s = (x - x_i)/lambda.
/// The derivative is 1 + (mu/lambda - 1) 6 s (1 - s), equal to 1 at every
/// breakpoint.
struct PiecewiseBump {
  std::vector<double> x;       // domain starts, increasing, spanning one turn
  std::vector<double> lambda;  // domain lengths
  std::vector<double> y;       // image starts (lift), increasing
  std::vector<double> mu;      // image lengths
};

struct Letter {
  std::size_t generator = 0;
  std::int64_t power = 1;
};
using Word = std::vector<Letter>;

/// Letters applied in order: the first letter acts first.
struct Composition {
  std::shared_ptr<const std::vector<CircleDiffeo>> generators;
  Word word;
};

class CircleDiffeo {
 public:
  using Kind = std::variant<Rotation, Analytic, std::shared_ptr<const PiecewiseBump>,
                            Composition>;

  static CircleDiffeo rotation(Rational rho);
  static CircleDiffeo rotation(double rho);
  /// Throws InvalidMap unless |eps| < 1.
  static CircleDiffeo analytic(double alpha, double eps);
  /// Validates tiling, continuity and positive derivative; InvalidMap else.
  static CircleDiffeo piecewise(PiecewiseBump table);
  static CircleDiffeo composition(std::vector<CircleDiffeo> generators, Word word);

  double apply(double x) const;
  double derivative(double x) const;
  double inverse(double y) const;
  /// Applies the map k times (inverse for k < 0).
  double apply_power(double x, std::int64_t k) const;
  /// Derivative of the k-th power at x.
  double power_derivative(double x, std::int64_t k) const;

  const Kind& kind() const { return kind_; }
  std::string describe() const;

 private:
  explicit CircleDiffeo(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

/// R_beta o f o R_{-beta}.
CircleDiffeo conjugate_by_rotation(const CircleDiffeo& f, double beta);

// ---------------------------------------------------------------------------

struct RotationEstimate {
  double estimate = 0.0;
  double error_bound = 0.0;  // 1/n
};

/// (F^n(x0) - x0) / n.
RotationEstimate rotation_number(const CircleDiffeo& f, std::int64_t n, double x0 = 0.0);

// ---------------------------------------------------------------------------
// Finite Denjoy construction.

struct InsertedInterval {
  std::int64_t n = 0;
  double theta = 0.0;  // position on the rotation circle
  double left = 0.0;   // position on the constructed circle
  double length = 0.0;
};

struct DenjoyParams {
  Rational alpha;
  double tau = 0.5;
  std::int64_t levels = 1000;  // N
  double mass = 0.5;           // total inserted length
  double offset = 2.0;         // K in l_n = c (|n| + K)^{-1/tau}
};

struct DenjoyMap {
  CircleDiffeo map;
  DenjoyParams params;
  std::vector<InsertedInterval> intervals;  // n = -N..N, index n + N
  double c = 0.0;
  double total_mass = 0.0;
  double min_spacing = 0.0;  // among frac(n alpha), |n| <= N + 1
  double window = 0.0;       // half width of the two end windows
  std::size_t pieces = 0;

  const InsertedInterval& interval(std::int64_t n) const {
    return intervals[static_cast<std::size_t>(n + params.levels)];
  }
  /// Derivative at the midpoint of I_n for n = -N..N-1.
  double profile_midpoint(std::int64_t n) const;
};

/// Gaps I_n of length l_n are inserted at the orbit frac(n alpha), |n| <= N,
/// and I_n is mapped onto I_{n+1} for -N <= n < N by a C^1 bump.  Two
/// windows of width 2w close the construction: one around frac(-(N+1)
/// alpha) is stretched onto a window containing I_{-N}, one containing I_N
/// is shrunk onto a window around frac((N+1) alpha).  Elsewhere the map is
/// a translation.
DenjoyMap denjoy_construct(const DenjoyParams& p);

/// Uniform 2^-depth grid plus the endpoints and midpoints of every gap,
/// sorted, with Df evaluated at each.
std::vector<moduli::Sample> derivative_samples(const DenjoyMap& d, int depth = 20);

// ---------------------------------------------------------------------------
// Orbits.

struct Interval {
  double left = 0.0;  // lift coordinate
  double length = 0.0;
  double right() const { return left + length; }
};

struct IntervalOrbit {
  Word word;
  Interval start;
  std::vector<Interval> images;  // images[0] = start, images[k] after k letters
  double max_integral_error = 0.0;
  bool wandering = false;
};

/// Images after each letter; each image length is checked against the
/// integral of the derivative over the previous image (Simpson, 64 panels
/// per elementary step).  Inverse steps compare the previous length with the
/// integral over the new image.
IntervalOrbit word_orbit(std::span<const CircleDiffeo> generators, const Word& word,
                         Interval I);

/// True iff the intervals are pairwise disjoint on the circle.
bool pairwise_disjoint(std::span<const Interval> images);

/// l_{i_1..i_d} = |f_1^{i_1} ... f_d^{i_d}(I)| over the given extents.
selection::LengthArray rectangle_lengths(std::span<const CircleDiffeo> generators,
                                         std::vector<std::size_t> dims, Interval I);

/// max over the grid of the circle distance between f(g(x)) and g(f(x)).
double commuting_defect(const CircleDiffeo& f, const CircleDiffeo& g,
                        std::span<const double> grid);

std::vector<double> uniform_grid(std::size_t n);

struct OmegaConstant {
  double value = 0.0;
  double x = 0.0, y = 0.0;  // maximising pair
  double min_derivative = 0.0;
};

/// max over pairs of the uniform n-point grid with circle distance in the
/// modulus domain of |log Df(x) - log Df(y)| / w(d(x, y)).
OmegaConstant omega_constant(const CircleDiffeo& f, const moduli::Modulus& w,
                             std::size_t n = 10000, double margin = 1e-9);

struct OmegaTrend {
  OmegaConstant coarse, fine;
  bool growing = false;  // fine exceeds coarse by more than 5%
};
OmegaTrend omega_constant_trend(const CircleDiffeo& f, const moduli::Modulus& w,
                                std::size_t coarse_n, std::size_t fine_n);

// ---------------------------------------------------------------------------
// Fixed point certificate.

enum class CertificateOutcome { Fired, HypothesisNotMet, DistortionViolated };
std::string_view to_string(CertificateOutcome o);

struct StepCheck {
  double image_I = 0.0;    // |H_j(I)|
  double image_I1 = 0.0;   // |H_j(I_1)|
  double image_I2 = 0.0;
  double ratio_1 = 1.0;    // sup DH_j / inf DH_j over I u I_1
  double ratio_2 = 1.0;    // same over I u I_2
  bool A_ok = true;
  bool B_ok = true;
};

struct FixedPointCertificate {
  Word word;
  Interval I;
  double C = 0.0, S = 0.0;
  double L = 0.0;
  double exp_CS = 1.0, exp_2CS = 1.0;
  Interval J, I1, I2;
  Interval final_image;    // H(I) shifted by -shift
  std::int64_t shift = 0;  // integer translation placing H(I) next to I
  bool image_in_L_neighborhood = false;
  bool image_disjoint_from_I = false;
  double distortion_bound = 1.0;  // max ratio over all prefixes
  bool A_ok = true, B_ok = true;
  std::vector<StepCheck> steps;   // j = 0..n
  std::optional<double> fixed_point;
  double residual = 0.0;          // |H(x*) - shift - x*|
  CertificateOutcome outcome = CertificateOutcome::HypothesisNotMet;
};

/// L = |I| / (2 exp(2 C S)); J is the closed 2L-neighbourhood of I and I_1,
/// I_2 its parts left and right of I.  Derivative ratios are sampled on
/// `samples` points per part.
FixedPointCertificate fixed_point_certificate(const Word& word,
                                              std::span<const CircleDiffeo> generators,
                                              Interval I, double C, double S,
                                              std::size_t samples = 65);

/// sum_{n < |word|} w_{k_{n+1}}(|H_n(I)|) over unit steps, k the generator
/// of each step.
double word_weight(const Word& word, std::span<const CircleDiffeo> generators,
                   std::span<const moduli::Modulus> moduli, Interval I);

/// Expands powers into unit letters.
Word unit_word(const Word& w);

// ---------------------------------------------------------------------------

/// Smallest N with f^{-1}(V) u ... u f^{-N}(V) covering the circle, by exact
/// interval union (gaps shorter than 1e-13 count as covered).  Throws
/// NoCoverWithin past max_n.
std::int64_t minimal_cover_N(const CircleDiffeo& f, Interval V,
                             std::int64_t max_n = 1000000);

// ---------------------------------------------------------------------------

nlohmann::json to_json(const CircleDiffeo& f);
nlohmann::json to_json(const FixedPointCertificate& c);
nlohmann::json to_json(const IntervalOrbit& o);
/// {"kind":"rotation","rho":"p/q"|number|"sqrt2-1"} | {"kind":"analytic",
/// "alpha":..,"eps":..} | {"kind":"denjoy","alpha":..,"tau":..,"levels":N}.
CircleDiffeo diffeo_from_json(const nlohmann::json& j);
DenjoyParams denjoy_params_from_json(const nlohmann::json& j);

}  // namespace denjoy::dynamics
