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

// Column selection, admissible line sequences and lattice paths over
// multi-indexed length arrays.
//
// All indices are 0-based.  Directions are 0-based too: direction k moves
// the k-th coordinate and is weighted by the k-th family member.  Exports
// print directions 1-based.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "denjoy/moduli.hpp"

namespace denjoy::selection {

using Index = std::vector<long long>;

// Absolute slack used by every bound comparison.
inline constexpr double kSlack = 1e-12;

/// Dense nonnegative array l_{i_1..i_d}, row-major (last index fastest),
/// with total mass at most 1.
class LengthArray {
 public:
  LengthArray(std::vector<std::size_t> dims, std::vector<double> values);

  /// l = c * prod_k ratios[k]^{i_k}.
  static LengthArray product(std::vector<std::size_t> dims, double c,
                             std::span<const double> ratios);

  std::size_t dimension() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<double>& values() const { return values_; }
  double total_mass() const { return mass_; }

  bool contains(std::span<const long long> idx) const;
  /// Throws ScheduleMismatch outside the extents.
  double at(std::span<const long long> idx) const;
  double at(std::size_t i, std::size_t j) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> values_;
  double mass_ = 0.0;
};

nlohmann::json to_json(const LengthArray& l);
LengthArray length_array_from_json(const nlohmann::json& j);
/// Dense CSV, one row per first index.
LengthArray length_array_from_csv(const std::string& text);
std::string to_csv(const LengthArray& l);

// ---------------------------------------------------------------------------
// Column selection on an m x n array.

struct ColumnChoice {
  std::size_t index = 0;
  double sum = 0.0;    // sum_i w(l_{i,k})
  double bound = 0.0;  // m w(1/(mn))
};

/// Column sums sum_i w(l_{i,k}) for k = 0..n-1.
std::vector<double> column_sums(const LengthArray& l, const moduli::Modulus& w);

/// Smallest index among the minimisers of the column sum.  Throws NoColumn
/// if the minimum still exceeds m w(1/(mn)), which means the input broke
/// the mass or concavity assumption.
ColumnChoice select_column(const LengthArray& l, const moduli::Modulus& w);

/// Columns whose sum is at most A m w(1/(mn)), ascending.
std::vector<std::size_t> admissible_columns(const LengthArray& l,
                                            const moduli::Modulus& w, double A);

// ---------------------------------------------------------------------------
// Lattice paths.

struct LatticePath {
  std::size_t dimension = 0;
  std::vector<Index> points;
  std::vector<std::size_t> xi;  // direction of the step leaving each point
  std::vector<double> l_values;
  std::vector<double> omega_values;
  std::vector<double> running_weight;
  double weight = 0.0;
};

/// Unit steps from the origin and step directions matching xi.
bool path_is_valid(const LatticePath& p);
/// Weight recomputed from the points alone.
double recompute_weight(const LatticePath& p, const LengthArray& l,
                        const moduli::ModulusFamily& f);
std::string to_csv(const LatticePath& p);

/// Axis-parallel segment: `anchor` with coordinate `direction` ranging over
/// [lo, hi].
struct LineSegment {
  std::size_t direction = 0;
  Index anchor;
  long long lo = 0;
  long long hi = 0;
};

/// Walks from the origin along each segment to its crossing with the next
/// one, then to the far end (hi) of the last segment.  With no segments the
/// path is the origin, labelled `empty_direction`.
LatticePath trace_lines(std::span<const LineSegment> lines, const LengthArray& l,
                        const moduli::ModulusFamily& f,
                        std::size_t empty_direction = 0);

// ---------------------------------------------------------------------------
// The two-dimensional staircase.

/// Sequences i_0..i_{K+1}, j_0..j_{K+1} with i_0 = i_1 = j_0 = j_1 = 0,
/// nondecreasing.  Rectangle 2m+1 is [i_m, i_{m+1}] x [j_m, j_{m+2}] and
/// carries a vertical line; rectangle 2m+2 is [i_m, i_{m+2}] x [j_{m+1},
/// j_{m+2}] and carries a horizontal line; m = 0..K-1.
class StaircaseSchedule {
 public:
  StaircaseSchedule(std::vector<long long> i, std::vector<long long> j);

  struct Rectangle {
    std::size_t number = 0;  // 1-based as in R_1, R_2, ...
    long long i_lo = 0, i_hi = 0, j_lo = 0, j_hi = 0;
    bool vertical = false;
    long long X() const { return i_hi - i_lo + 1; }
    long long Y() const { return j_hi - j_lo + 1; }
  };

  std::size_t rectangle_count() const { return rects_.size(); }
  const std::vector<Rectangle>& rectangles() const { return rects_; }
  const std::vector<long long>& i() const { return i_; }
  const std::vector<long long>& j() const { return j_; }

 private:
  std::vector<long long> i_, j_;
  std::vector<Rectangle> rects_;
};

/// i_{m+1} = i_m + X_{1,row m-1} - 1 (and alike for j) from a two-row
/// consistency table, so the new strip of each rectangle has X_{k,.}
/// columns.
StaircaseSchedule staircase_from_consistency(const moduli::ConsistencySequences& seq);

struct RectangleTerm {
  StaircaseSchedule::Rectangle rect;
  long long selected = 0;  // x of a vertical line, y of a horizontal one
  double line_sum = 0.0;
  double bound = 0.0;      // Y w_2(1/(XY)) or X w_1(1/(XY))
  double ratio = 0.0;      // the consistency quotient in the factored bound
  double defect = 0.0;     // w(1/Y) or w(1/X)
};

struct Path2d {
  LatticePath path;
  std::vector<RectangleTerm> terms;
  std::vector<LineSegment> lines;
  double line_sum_total = 0.0;
  double bound_sum = 0.0;
};

Path2d build_path_2d(const LengthArray& l, const StaircaseSchedule& s,
                     const moduli::ModulusFamily& f);

// ---------------------------------------------------------------------------
// General dimension.

/// x_{k,m} for m = 0..M with x_{.,0} = 0.  Step m >= 1 grows exactly the
/// coordinate direction(m) = (m - 1) mod d.
class RectangleSchedule {
 public:
  explicit RectangleSchedule(std::vector<std::vector<long long>> x);

  std::size_t dimension() const { return d_; }
  std::size_t steps() const { return x_.size() - 1; }
  long long x(std::size_t k, std::size_t m) const { return x_[m][k]; }
  long long side(std::size_t k, std::size_t m) const { return 1 + x_[m][k]; }
  std::size_t direction(std::size_t m) const { return (m - 1) % d_; }

  /// Number of lines of R_m in direction(m).
  std::size_t line_count(std::size_t m) const;
  /// Face point of a line (direction coordinate set to 0) and back.
  Index line_point(std::size_t m, std::size_t line) const;
  std::size_t line_index(std::size_t m, std::span<const long long> point) const;
  LineSegment segment(std::size_t m, std::size_t line) const;

  /// Lines of consecutive levels meet iff they agree off both directions.
  bool intersects(std::size_t m, std::size_t a, std::size_t b) const;

 private:
  std::size_t d_ = 0;
  std::vector<std::vector<long long>> x_;
};

/// Grows direction (m-1) mod d at step m to X_{r,row} - 1 with row =
/// (m-1) / d, for M steps.  Rows come from consistency_sequences.
RectangleSchedule rectangle_schedule_from_consistency(
    const moduli::ConsistencySequences& seq, std::size_t M);

/// admissible[m-1] lists admissible line indices of level m, m = 1..M.
using AdmissibleSets = std::vector<std::vector<std::size_t>>;

struct LineSearch {
  std::optional<std::vector<std::size_t>> lines;
  std::size_t states = 0;
};

/// Exhaustive depth-first search with memoised dead states.
LineSearch search_line_sequence(const RectangleSchedule& s,
                                const AdmissibleSets& admissible);

/// As search_line_sequence, throwing NoPath on failure.  With budgets the
/// density and budget-sum preconditions are checked first and a violation
/// throws PreconditionViolated.
std::vector<std::size_t> find_line_sequence(
    const RectangleSchedule& s, const AdmissibleSets& admissible,
    std::optional<std::span<const double>> budgets = std::nullopt);

struct GeneralPath {
  LatticePath path;
  std::vector<std::size_t> lines;
  std::vector<LineSegment> segments;
  std::vector<double> defect_values;  // w(1/X_{r(m),m})
  double S = 0.0;                     // sum_m sqrt(defect_values)
  std::vector<double> budgets;        // A_m
  double budget_sum = 0.0;            // sum 1/A_m
  std::vector<double> consistency_ratios;
  double consistency_constant = 0.0;
  std::vector<double> bound_terms;    // A_m X_r w_r(1/prod X)
  double bound_sum = 0.0;
  double line_sum_total = 0.0;
  double factored_bound = 0.0;           // 2 A sum_m S sqrt(defect)
  std::vector<std::size_t> line_counts;
  std::vector<std::size_t> admissible_counts;
};

GeneralPath build_path_general(const LengthArray& l, const RectangleSchedule& s,
                               const moduli::ModulusFamily& f);

nlohmann::json budget_report(const GeneralPath& g);

}  // namespace denjoy::selection
