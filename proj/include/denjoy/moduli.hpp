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

// Moduli of continuity: evaluation, structural checks, comparison, the
// product defect of a family and the consistency condition.
//
// Every "for all t" statement is checked on an explicit grid.  The default
// grid is dyadic, t = 2^-k for k = 1..40, restricted to the domain at hand.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace denjoy::moduli {

class Modulus;

/// t^alpha, alpha in (0, 1]. alpha = 1 is the identity modulus.
struct Hoelder {
  double alpha;
};

/// t^alpha * log(1/t)^eps.  Only a modulus for small t: the analytic formula
/// is used on (0, e^{-eps/alpha}/2].  With `extended` set, the modulus is
/// continued to [0, 1] by its tangent line at that cap, which keeps it
/// increasing and concave.
struct HoelderLog {
  double alpha;
  double eps;
  bool extended = false;
};

/// Piecewise linear through (0, 0) and the given points.
struct Tabulated {
  std::vector<std::pair<double, double>> points;
};

/// Pointwise product of members.
struct Product {
  std::vector<Modulus> members;
};

class Modulus {
 public:
  using Kind = std::variant<Hoelder, HoelderLog, Tabulated, Product>;

  static Modulus hoelder(double alpha);
  static Modulus identity() { return hoelder(1.0); }
  static Modulus hoelder_log(double alpha, double eps, bool extended = false);
  /// `require_strict` rejects tables whose values are not strictly
  /// increasing; empirical moduli of flat functions need it off.
  static Modulus tabulated(std::vector<std::pair<double, double>> points,
                           bool require_strict = true);
  static Modulus product(std::vector<Modulus> members);

  /// Checked evaluation; throws OutOfDomain outside [0, domain_cap()].
  double eval(double t) const;
  double operator()(double t) const { return eval(t); }

  double domain_cap() const { return cap_; }
  /// True when the modulus is known to be concave on its whole domain.
  bool flagged_concave() const { return concave_; }

  const Kind& kind() const { return kind_; }
  std::string describe() const;

 private:
  explicit Modulus(Kind kind);
  double eval_unchecked(double t) const;

  Kind kind_;
  double cap_ = 1.0;
  bool concave_ = false;
  // tangent continuation of an extended HoelderLog
  double log_cap_ = 0.0;
  double value_at_log_cap_ = 0.0;
  double slope_at_log_cap_ = 0.0;
};

/// Analytic cap e^{-eps/alpha}/2 used for HoelderLog.
double hoelder_log_cap(double alpha, double eps);

/// t = 2^-k for k in [k_first, k_last], decreasing.
std::vector<double> dyadic_grid(int k_first = 1, int k_last = 40);

/// Decreasing dyadic grid scaled into (0, delta): delta * 2^-k, k = 1..40.
std::vector<double> scaled_dyadic_grid(double delta, int k_last = 40);

// ---------------------------------------------------------------------------

struct ConcavityReport {
  bool concave = true;
  bool doubling_ok = true;
  double worst_ratio = 0.0;  // max w(2t) / (2 w(t))
};

/// Midpoint concavity over every grid pair and the doubling bound
/// w(2t) <= 2 w(t) at every grid point.  Grid must lie in (0, cap/2].
ConcavityReport check_concave_doubling(const Modulus& m,
                                       std::span<const double> grid);

enum class Comparison { Stronger, Weaker, Equivalent, Incomparable };
std::string_view to_string(Comparison c);

/// Stronger iff m1 <= m2 on every grid point of (0, delta) with at least one
/// strict inequality; Equivalent when equal on the whole grid.
Comparison compare(const Modulus& m1, const Modulus& m2, double delta);
Comparison compare(const Modulus& m1, const Modulus& m2,
                   std::span<const double> grid);

// ---------------------------------------------------------------------------

struct VanishingTest {
  double threshold = 1e-3;
  int depth = 40;  // grid t = 2^-1 .. 2^-depth
};

class ModulusFamily {
 public:
  explicit ModulusFamily(std::vector<Modulus> members);

  std::size_t size() const { return members_.size(); }
  const std::vector<Modulus>& members() const { return members_; }
  const Modulus& operator[](std::size_t i) const { return members_[i]; }
  double domain_cap() const { return cap_; }

  /// prod_i w_i(t) / t.
  double defect(double t) const;
  /// Defect on the dyadic grid (inside the domain), non-increasing on the
  /// deeper half of the grid and below the threshold at the deepest point.
  bool has_vanishing_defect(const VanishingTest& test = {}) const;

 private:
  std::vector<Modulus> members_;
  double cap_ = 1.0;
};

double family_defect(const ModulusFamily& f, double t);

using ScalarFunction = std::function<double(double)>;

/// max over grid of w(t1 t2) / (w(t1) w(t2)).
double submultiplicativity_constant(
    const ScalarFunction& w, std::span<const std::pair<double, double>> grid);
/// Same, for the defect of a family on the dyadic pair grid 2^-i x 2^-j,
/// i, j = 1..depth, both factors inside the domain.
double submultiplicativity_constant(const ModulusFamily& f, int depth = 20);

/// Dyadic pairs (2^-i, 2^-j), i, j = 1..depth, with both entries <= cap.
std::vector<std::pair<double, double>> dyadic_pair_grid(double cap,
                                                        int depth = 20);

// ---------------------------------------------------------------------------

struct Sample {
  double x;
  double value;
};

/// For each t: max |f(x) - f(y)| over sample pairs at distance <= t.
/// Samples are sorted by x in [0, 1); with `circular` the distance is the
/// circle distance, otherwise |x - y|.  Result is nondecreasing in t.
Modulus empirical_modulus(std::span<const Sample> samples,
                          std::span<const double> t_grid, bool circular = true);

/// Least squares slope of log w(t) against log t over tabulated points with
/// t in [t_lo, t_hi] and w(t) > 0.
double fit_hoelder_exponent(const Modulus& tabulated, double t_lo, double t_hi);

// ---------------------------------------------------------------------------

struct ConsistencySequences {
  double base = 2.0;
  int first_m = 1;  // index of row 0; earlier m were skipped
  // rows[j][i] = X_{j, first_m + i}
  std::vector<std::vector<long long>> X;
  std::vector<std::vector<double>> lhs;    // w_j(1 / prod_k X_{k,m})
  std::vector<std::vector<double>> rhs;    // prod_k w_k(1 / X_{j,m})
  std::vector<std::vector<double>> ratio;  // lhs / rhs
  double verified_constant = 0.0;
  bool tail_stable = false;

  int last_m() const { return first_m + static_cast<int>(count()) - 1; }
  std::size_t count() const { return X.empty() ? 0 : X.front().size(); }
  std::size_t dimension() const { return X.size(); }
};

/// X_{j,m} = floor(a^{alpha_j m}) for m = 1..M, with leading m dropped until
/// every X >= 2, every 1/X lies in the family's domain and all rows are
/// strictly increasing.  Members must be Hoelder or HoelderLog.
ConsistencySequences consistency_sequences(const ModulusFamily& f, double a,
                                           int M);

/// Ratios w_j(prod_k x_{k,m}) / prod_k w_k(x_{j,m}) with exact powers
/// x_{j,m} = a^{-alpha_j m}; ratios[j][m-1] for m = 1..M.
std::vector<std::vector<double>> exact_power_ratios(const ModulusFamily& f,
                                                    double a, int M);

/// Exponent alpha of a Hoelder or HoelderLog member; throws otherwise.
double exponent_of(const Modulus& m);

std::string consistency_csv(const ConsistencySequences& seq);

/// Schedule filter: keeps, greedily, a subsequence m_1 < m_2 < ... with
/// value[m_j] < 1 / j^2.
struct SquareSummableFilter {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
  double kept_sum = 0.0;
};
SquareSummableFilter square_summable_filter(std::span<const double> values);

// ---------------------------------------------------------------------------

nlohmann::json to_json(const Modulus& m);
Modulus modulus_from_json(const nlohmann::json& j);

}  // namespace denjoy::moduli
