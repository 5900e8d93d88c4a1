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

#include "denjoy/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "denjoy/error.hpp"

namespace denjoy::selection {

using moduli::Modulus;
using moduli::ModulusFamily;

// ---------------------------------------------------------------------------
// LengthArray

LengthArray::LengthArray(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  if (dims_.empty()) throw Error(ErrorCode::InvalidLengths, "no dimensions");
  std::size_t n = 1;
  for (std::size_t e : dims_) {
    if (e == 0) throw Error(ErrorCode::InvalidLengths, "zero extent");
    n *= e;
  }
  if (values_.size() != n) {
    throw Error(ErrorCode::InvalidLengths,
                fmt::format("expected {} values, got {}", n, values_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidLengths, fmt::format("bad length {}", v));
    }
    mass_ += v;
  }
  if (mass_ > 1.0 + kSlack) {
    throw Error(ErrorCode::InvalidLengths,
                fmt::format("total mass {:.17g} exceeds 1", mass_));
  }
}

LengthArray LengthArray::product(std::vector<std::size_t> dims, double c,
                                 std::span<const double> ratios) {
  if (ratios.size() != dims.size()) {
    throw Error(ErrorCode::InvalidLengths, "one ratio per dimension");
  }
  std::size_t n = 1;
  for (std::size_t e : dims) n *= e;
  std::vector<double> values(n);
  std::vector<std::size_t> idx(dims.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    double v = c;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      v *= std::pow(ratios[k], static_cast<double>(idx[k]));
    }
    values[flat] = v;
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  return LengthArray(std::move(dims), std::move(values));
}

bool LengthArray::contains(std::span<const long long> idx) const {
  if (idx.size() != dims_.size()) return false;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= dims_[k]) return false;
  }
  return true;
}

double LengthArray::at(std::span<const long long> idx) const {
  if (!contains(idx)) {
    throw Error(ErrorCode::ScheduleMismatch, "index outside the length array");
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    flat = flat * dims_[k] + static_cast<std::size_t>(idx[k]);
  }
  return values_[flat];
}

double LengthArray::at(std::size_t i, std::size_t j) const {
  const long long idx[2] = {static_cast<long long>(i), static_cast<long long>(j)};
  return at(idx);
}

nlohmann::json to_json(const LengthArray& l) {
  return {{"dims", l.dims()}, {"values", l.values()}};
}

LengthArray length_array_from_json(const nlohmann::json& j) {
  try {
    return LengthArray(j.at("dims").get<std::vector<std::size_t>>(),
                       j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

LengthArray length_array_from_csv(const std::string& text) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t n = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, fmt::format("bad cell '{}'", cell));
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw Error(ErrorCode::ParseError, "ragged csv");
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::ParseError, "empty csv");
  return LengthArray({rows, cols}, std::move(values));
}

std::string to_csv(const LengthArray& l) {
  if (l.dimension() != 2) {
    throw Error(ErrorCode::InvalidLengths, "dense csv needs a 2-d array");
  }
  std::string out;
  for (std::size_t i = 0; i < l.dims()[0]; ++i) {
    for (std::size_t j = 0; j < l.dims()[1]; ++j) {
      if (j) out += ',';
      out += fmt::format("{:.17g}", l.at(i, j));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Column selection

namespace {

void require_matrix(const LengthArray& l) {
  if (l.dimension() != 2) {
    throw Error(ErrorCode::InvalidLengths, "column selection needs an m x n array");
  }
}

double lemma_bound(const LengthArray& l, const Modulus& w) {
  const double m = static_cast<double>(l.dims()[0]);
  const double n = static_cast<double>(l.dims()[1]);
  return m * w(1.0 / (m * n));
}

}  // namespace

std::vector<double> column_sums(const LengthArray& l, const Modulus& w) {
  require_matrix(l);
  std::vector<double> sums(l.dims()[1], 0.0);
  for (std::size_t k = 0; k < sums.size(); ++k) {
    for (std::size_t i = 0; i < l.dims()[0]; ++i) sums[k] += w(l.at(i, k));
  }
  return sums;
}

ColumnChoice select_column(const LengthArray& l, const Modulus& w) {
  const auto sums = column_sums(l, w);
  const auto best = std::min_element(sums.begin(), sums.end());
  ColumnChoice c;
  c.index = static_cast<std::size_t>(best - sums.begin());
  c.sum = *best;
  c.bound = lemma_bound(l, w);
  if (c.sum > c.bound + kSlack) {
    throw Error(ErrorCode::NoColumn,
                fmt::format("smallest column sum {:.17g} exceeds bound {:.17g}",
                            c.sum, c.bound));
  }
  return c;
}

std::vector<std::size_t> admissible_columns(const LengthArray& l, const Modulus& w,
                                            double A) {
  if (!(A > 0.0)) throw Error(ErrorCode::PreconditionViolated, "A must be positive");
  const auto sums = column_sums(l, w);
  const double bound = A * lemma_bound(l, w);
  std::vector<std::size_t> good;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (sums[k] <= bound + kSlack) good.push_back(k);
  }
  return good;
}

// ---------------------------------------------------------------------------
// Paths

namespace {

void push_point(LatticePath& p, const Index& pt, std::size_t dir,
                const LengthArray& l, const ModulusFamily& f) {
  const double lv = l.at(pt);
  const double wv = f[dir](lv);
  p.points.push_back(pt);
  p.xi.push_back(dir);
  p.l_values.push_back(lv);
  p.omega_values.push_back(wv);
  p.weight += wv;
  p.running_weight.push_back(p.weight);
}

}  // namespace

bool path_is_valid(const LatticePath& p) {
  const std::size_t n = p.points.size();
  if (n == 0 || p.xi.size() != n) return false;
  for (long long c : p.points.front()) {
    if (c != 0) return false;
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (p.points[s].size() != p.dimension || p.xi[s] >= p.dimension) return false;
  }
  for (std::size_t s = 0; s + 1 < n; ++s) {
    std::size_t moved = 0, where = 0;
    for (std::size_t k = 0; k < p.dimension; ++k) {
      const long long diff = p.points[s + 1][k] - p.points[s][k];
      if (diff == 0) continue;
      if (diff != 1 && diff != -1) return false;
      ++moved;
      where = k;
    }
    if (moved != 1 || where != p.xi[s]) return false;
  }
  return true;
}

double recompute_weight(const LatticePath& p, const LengthArray& l,
                        const ModulusFamily& f) {
  double w = 0.0;
  for (std::size_t s = 0; s < p.points.size(); ++s) w += f[p.xi[s]](l.at(p.points[s]));
  return w;
}

std::string to_csv(const LatticePath& p) {
  std::string out = "n";
  for (std::size_t k = 0; k < p.dimension; ++k) out += fmt::format(",x{}", k + 1);
  out += ",xi,l_value,omega_value,running_weight\n";
  for (std::size_t s = 0; s < p.points.size(); ++s) {
    out += fmt::format("{}", s);
    for (long long c : p.points[s]) out += fmt::format(",{}", c);
    out += fmt::format(",{},{:.17g},{:.17g},{:.17g}\n", p.xi[s] + 1, p.l_values[s],
                       p.omega_values[s], p.running_weight[s]);
  }
  return out;
}

LatticePath trace_lines(std::span<const LineSegment> lines, const LengthArray& l,
                        const ModulusFamily& f, std::size_t empty_direction) {
  const std::size_t d = l.dimension();
  if (f.size() != d) {
    throw Error(ErrorCode::ScheduleMismatch, "family size differs from dimension");
  }
  LatticePath p;
  p.dimension = d;
  Index cur(d, 0);
  if (lines.empty()) {
    push_point(p, cur, empty_direction, l, f);
    return p;
  }
  auto on_line = [&](const LineSegment& s, const Index& pt) {
    for (std::size_t k = 0; k < d; ++k) {
      if (k != s.direction && pt[k] != s.anchor[k]) return false;
    }
    return pt[s.direction] >= s.lo && pt[s.direction] <= s.hi;
  };
  for (const auto& s : lines) {
    if (s.anchor.size() != d || s.direction >= d || s.lo > s.hi) {
      throw Error(ErrorCode::ScheduleMismatch, "malformed line segment");
    }
  }
  if (!on_line(lines.front(), cur)) {
    throw Error(ErrorCode::PreconditionViolated, "first line misses the origin");
  }
  for (std::size_t t = 0; t < lines.size(); ++t) {
    const auto& s = lines[t];
    Index target = cur;
    if (t + 1 < lines.size()) {
      const auto& next = lines[t + 1];
      if (next.direction == s.direction) {
        throw Error(ErrorCode::PreconditionViolated, "consecutive parallel lines");
      }
      target[s.direction] = next.anchor[s.direction];
      if (!on_line(s, target) || !on_line(next, target)) {
        throw Error(ErrorCode::PreconditionViolated,
                    fmt::format("lines {} and {} do not meet", t, t + 1));
      }
    } else {
      target[s.direction] = s.hi;
    }
    const long long step = target[s.direction] >= cur[s.direction] ? 1 : -1;
    while (cur[s.direction] != target[s.direction]) {
      push_point(p, cur, s.direction, l, f);
      cur[s.direction] += step;
    }
  }
  push_point(p, cur, lines.back().direction, l, f);
  return p;
}

// ---------------------------------------------------------------------------
// Staircase

StaircaseSchedule::StaircaseSchedule(std::vector<long long> i, std::vector<long long> j)
    : i_(std::move(i)), j_(std::move(j)) {
  if (i_.size() != j_.size() || i_.size() < 2) {
    throw Error(ErrorCode::ScheduleMismatch, "need i_0..i_{K+1} and j_0..j_{K+1}");
  }
  if (i_[0] || i_[1] || j_[0] || j_[1]) {
    throw Error(ErrorCode::ScheduleMismatch, "i_0 = i_1 = j_0 = j_1 = 0 required");
  }
  for (std::size_t m = 1; m < i_.size(); ++m) {
    if (i_[m] < i_[m - 1] || j_[m] < j_[m - 1]) {
      throw Error(ErrorCode::ScheduleMismatch, "staircase sequences must not decrease");
    }
  }
  const std::size_t K = i_.size() - 2;
  for (std::size_t m = 0; m < K; ++m) {
    rects_.push_back({2 * m + 1, i_[m], i_[m + 1], j_[m], j_[m + 2], true});
    rects_.push_back({2 * m + 2, i_[m], i_[m + 2], j_[m + 1], j_[m + 2], false});
  }
}

StaircaseSchedule staircase_from_consistency(const moduli::ConsistencySequences& seq) {
  if (seq.dimension() != 2) {
    throw Error(ErrorCode::ScheduleMismatch, "staircase needs a two-row table");
  }
  std::vector<long long> i{0, 0}, j{0, 0};
  for (std::size_t m = 0; m < seq.count(); ++m) {
    i.push_back(i.back() + seq.X[0][m] - 1);
    j.push_back(j.back() + seq.X[1][m] - 1);
  }
  return StaircaseSchedule(std::move(i), std::move(j));
}

Path2d build_path_2d(const LengthArray& l, const StaircaseSchedule& s,
                     const ModulusFamily& f) {
  if (l.dimension() != 2 || f.size() != 2) {
    throw Error(ErrorCode::ScheduleMismatch, "two-dimensional builder");
  }
  const auto& w1 = f[0];
  const auto& w2 = f[1];
  auto in_domain = [&](double t) { return t <= f.domain_cap(); };
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Path2d out;
  std::vector<long long> chosen;
  for (const auto& r : s.rectangles()) {
    if (r.i_hi >= static_cast<long long>(l.dims()[0]) ||
        r.j_hi >= static_cast<long long>(l.dims()[1])) {
      throw Error(ErrorCode::ScheduleMismatch,
                  fmt::format("rectangle R_{} exceeds the length array", r.number));
    }
    const auto X = static_cast<std::size_t>(r.X());
    const auto Y = static_cast<std::size_t>(r.Y());
    RectangleTerm term;
    term.rect = r;
    const double xy = 1.0 / (static_cast<double>(X) * static_cast<double>(Y));
    if (r.vertical) {
      // rows run along the line (j), columns are the candidate x values
      std::vector<double> sub(Y * X);
      for (std::size_t jj = 0; jj < Y; ++jj) {
        for (std::size_t ii = 0; ii < X; ++ii) {
          sub[jj * X + ii] = l.at(r.i_lo + ii, r.j_lo + jj);
        }
      }
      const auto c = select_column(LengthArray({Y, X}, std::move(sub)), w2);
      term.selected = r.i_lo + static_cast<long long>(c.index);
      term.line_sum = c.sum;
      term.bound = c.bound;
      const double t = 1.0 / static_cast<double>(Y);
      term.ratio = in_domain(t) ? w2(xy) / (w1(t) * w2(t)) : nan;
      term.defect = in_domain(t) ? f.defect(t) : nan;
      out.lines.push_back({1, {term.selected, r.j_lo}, r.j_lo, r.j_hi});
    } else {
      std::vector<double> sub(X * Y);
      for (std::size_t ii = 0; ii < X; ++ii) {
        for (std::size_t jj = 0; jj < Y; ++jj) {
          sub[ii * Y + jj] = l.at(r.i_lo + ii, r.j_lo + jj);
        }
      }
      const auto c = select_column(LengthArray({X, Y}, std::move(sub)), w1);
      term.selected = r.j_lo + static_cast<long long>(c.index);
      term.line_sum = c.sum;
      term.bound = c.bound;
      const double t = 1.0 / static_cast<double>(X);
      term.ratio = in_domain(t) ? w1(xy) / (w1(t) * w2(t)) : nan;
      term.defect = in_domain(t) ? f.defect(t) : nan;
      out.lines.push_back({0, {r.i_lo, term.selected}, r.i_lo, r.i_hi});
    }
    chosen.push_back(term.selected);
    out.line_sum_total += term.line_sum;
    out.bound_sum += term.bound;
    out.terms.push_back(term);
  }

  // Staircase walk: up a vertical line to the next horizontal one, right
  // along it to the next vertical one, and so on.
  auto& p = out.path;
  p.dimension = 2;
  Index cur{0, 0};
  const auto& rects = s.rectangles();
  for (std::size_t t = 0; t < rects.size(); ++t) {
    const bool vert = rects[t].vertical;
    const std::size_t dir = vert ? 1 : 0;
    const long long target =
        t + 1 < rects.size() ? chosen[t + 1] : (vert ? rects[t].j_hi : rects[t].i_hi);
    if (cur[dir] > target) {
      throw Error(ErrorCode::ScheduleMismatch, "staircase walk would step back");
    }
    while (cur[dir] < target) {
      push_point(p, cur, dir, l, f);
      ++cur[dir];
    }
  }
  push_point(p, cur, rects.empty() ? 1 : (rects.back().vertical ? 1 : 0), l, f);
  return out;
}

// ---------------------------------------------------------------------------
// General schedule

RectangleSchedule::RectangleSchedule(std::vector<std::vector<long long>> x)
    : x_(std::move(x)) {
  if (x_.empty() || x_.front().empty()) {
    throw Error(ErrorCode::ScheduleMismatch, "empty schedule");
  }
  d_ = x_.front().size();
  for (const auto& row : x_) {
    if (row.size() != d_) throw Error(ErrorCode::ScheduleMismatch, "ragged schedule");
  }
  for (long long v : x_.front()) {
    if (v != 0) throw Error(ErrorCode::ScheduleMismatch, "R_0 must be the origin");
  }
  for (std::size_t m = 1; m < x_.size(); ++m) {
    const std::size_t r = direction(m);
    for (std::size_t k = 0; k < d_; ++k) {
      const bool grows = x_[m][k] > x_[m - 1][k];
      const bool same = x_[m][k] == x_[m - 1][k];
      if (k == r ? !grows : !same) {
        throw Error(ErrorCode::ScheduleMismatch,
                    fmt::format("x_{{{},{}}} breaks the growth rule", k + 1, m));
      }
    }
  }
}

std::size_t RectangleSchedule::line_count(std::size_t m) const {
  const std::size_t r = direction(m);
  std::size_t n = 1;
  for (std::size_t k = 0; k < d_; ++k) {
    if (k != r) n *= static_cast<std::size_t>(side(k, m));
  }
  return n;
}

Index RectangleSchedule::line_point(std::size_t m, std::size_t line) const {
  const std::size_t r = direction(m);
  Index pt(d_, 0);
  for (std::size_t k = d_; k-- > 0;) {
    if (k == r) continue;
    const auto base = static_cast<std::size_t>(side(k, m));
    pt[k] = static_cast<long long>(line % base);
    line /= base;
  }
  return pt;
}

std::size_t RectangleSchedule::line_index(std::size_t m,
                                          std::span<const long long> point) const {
  const std::size_t r = direction(m);
  std::size_t idx = 0;
  for (std::size_t k = 0; k < d_; ++k) {
    if (k == r) continue;
    idx = idx * static_cast<std::size_t>(side(k, m)) + static_cast<std::size_t>(point[k]);
  }
  return idx;
}

LineSegment RectangleSchedule::segment(std::size_t m, std::size_t line) const {
  const std::size_t r = direction(m);
  return {r, line_point(m, line), 0, x(r, m)};
}

bool RectangleSchedule::intersects(std::size_t m, std::size_t a, std::size_t b) const {
  const std::size_t r0 = direction(m);
  const std::size_t r1 = direction(m + 1);
  const Index pa = line_point(m, a);
  const Index pb = line_point(m + 1, b);
  for (std::size_t k = 0; k < d_; ++k) {
    if (k != r0 && k != r1 && pa[k] != pb[k]) return false;
  }
  return true;
}

RectangleSchedule rectangle_schedule_from_consistency(
    const moduli::ConsistencySequences& seq, std::size_t M) {
  const std::size_t d = seq.dimension();
  if (d == 0) throw Error(ErrorCode::ScheduleMismatch, "empty consistency table");
  const std::size_t blocks = (M + d - 1) / d;
  if (seq.count() < blocks) {
    throw Error(ErrorCode::ScheduleMismatch,
                fmt::format("{} steps need {} rows, table has {}", M, blocks,
                            seq.count()));
  }
  std::vector<std::vector<long long>> x(M + 1, std::vector<long long>(d, 0));
  for (std::size_t m = 1; m <= M; ++m) {
    x[m] = x[m - 1];
    x[m][(m - 1) % d] = seq.X[(m - 1) % d][(m - 1) / d] - 1;
  }
  return RectangleSchedule(std::move(x));
}

// ---------------------------------------------------------------------------
// Line sequences

namespace {

std::vector<std::vector<std::size_t>> normalise(const RectangleSchedule& s,
                                                const AdmissibleSets& admissible) {
  const std::size_t M = s.steps();
  if (admissible.size() != M) {
    throw Error(ErrorCode::ScheduleMismatch,
                fmt::format("{} admissible sets for {} steps", admissible.size(), M));
  }
  std::vector<std::vector<std::size_t>> sets(admissible);
  for (std::size_t m = 1; m <= M; ++m) {
    auto& v = sets[m - 1];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (!v.empty() && v.back() >= s.line_count(m)) {
      throw Error(ErrorCode::ScheduleMismatch,
                  fmt::format("line {} does not exist at level {}", v.back(), m));
    }
  }
  return sets;
}

// Lines of level m+1 grouped by the coordinates they must share with a line
// of level m.
struct Successors {
  std::map<Index, std::vector<std::size_t>> by_key;
  std::size_t r0 = 0, r1 = 0;

  Index key(Index pt) const {
    pt[r0] = 0;
    pt[r1] = 0;
    return pt;
  }
};

}  // namespace

LineSearch search_line_sequence(const RectangleSchedule& s,
                                const AdmissibleSets& admissible) {
  const auto sets = normalise(s, admissible);
  const std::size_t M = s.steps();
  LineSearch result;
  if (M == 0) {
    result.lines = std::vector<std::size_t>{};
    return result;
  }
  std::vector<Successors> next(M + 1);
  for (std::size_t m = 1; m < M; ++m) {
    auto& n = next[m];
    n.r0 = s.direction(m);
    n.r1 = s.direction(m + 1);
    for (std::size_t b : sets[m]) n.by_key[n.key(s.line_point(m + 1, b))].push_back(b);
  }
  std::vector<std::unordered_set<std::size_t>> dead(M + 1);
  std::vector<std::size_t> chain;

  // Recursion depth is M, which stays small at desk scale.
  auto dfs = [&](auto&& self, std::size_t m, std::size_t a) -> bool {
    ++result.states;
    chain.push_back(a);
    if (m == M) return true;
    if (!dead[m].count(a)) {
      const auto& n = next[m];
      const auto it = n.by_key.find(n.key(s.line_point(m, a)));
      if (it != n.by_key.end()) {
        for (std::size_t b : it->second) {
          if (self(self, m + 1, b)) return true;
        }
      }
      dead[m].insert(a);
    }
    chain.pop_back();
    return false;
  };

  for (std::size_t a : sets[0]) {
    const Index pt = s.line_point(1, a);
    if (std::any_of(pt.begin(), pt.end(), [](long long c) { return c != 0; })) continue;
    if (dfs(dfs, 1, a)) {
      result.lines = chain;
      return result;
    }
  }
  return result;
}

std::vector<std::size_t> find_line_sequence(const RectangleSchedule& s,
                                            const AdmissibleSets& admissible,
                                            std::optional<std::span<const double>> budgets) {
  if (budgets) {
    const std::size_t M = s.steps();
    if (budgets->size() != M) {
      throw Error(ErrorCode::ScheduleMismatch, "one budget per step");
    }
    const auto sets = normalise(s, admissible);
    double sum = 0.0;
    for (std::size_t m = 1; m <= M; ++m) {
      const double A = (*budgets)[m - 1];
      if (!(A > 0.0)) throw Error(ErrorCode::PreconditionViolated, "budget must be positive");
      sum += 1.0 / A;
      const double need = (1.0 - 1.0 / A) * static_cast<double>(s.line_count(m));
      if (static_cast<double>(sets[m - 1].size()) < need - kSlack) {
        throw Error(ErrorCode::PreconditionViolated,
                    fmt::format("level {}: {} admissible lines, density needs {:.17g}",
                                m, sets[m - 1].size(), need));
      }
    }
    if (sum >= 1.0) {
      throw Error(ErrorCode::PreconditionViolated,
                  fmt::format("sum of 1/A_m is {:.17g}", sum));
    }
  }
  auto found = search_line_sequence(s, admissible);
  if (!found.lines) {
    throw Error(ErrorCode::NoPath,
                fmt::format("no admissible line sequence ({} states)", found.states));
  }
  return *found.lines;
}

// ---------------------------------------------------------------------------
// General builder

GeneralPath build_path_general(const LengthArray& l, const RectangleSchedule& s,
                               const ModulusFamily& f) {
  const std::size_t d = s.dimension();
  if (f.size() != d || l.dimension() != d) {
    throw Error(ErrorCode::ScheduleMismatch, "schedule, family and lengths differ in d");
  }
  const std::size_t M = s.steps();
  for (std::size_t k = 0; k < d; ++k) {
    if (s.x(k, M) >= static_cast<long long>(l.dims()[k])) {
      throw Error(ErrorCode::ScheduleMismatch,
                  fmt::format("R_{} exceeds the length array in direction {}", M, k + 1));
    }
  }
  GeneralPath g;
  if (M == 0) {
    g.path = trace_lines({}, l, f, 0);
    return g;
  }

  for (std::size_t m = 1; m <= M; ++m) {
    const double Xr = static_cast<double>(s.side(s.direction(m), m));
    g.defect_values.push_back(f.defect(1.0 / Xr));
    g.S += std::sqrt(g.defect_values.back());
  }

  std::string partial;
  for (std::size_t m = 1; m <= M; ++m) {
    const std::size_t r = s.direction(m);
    const double Xr = static_cast<double>(s.side(r, m));
    double vol = 1.0;
    for (std::size_t k = 0; k < d; ++k) vol *= static_cast<double>(s.side(k, m));
    const double A = 2.0 * g.S / std::sqrt(g.defect_values[m - 1]);
    g.budgets.push_back(A);
    g.budget_sum += 1.0 / A;
    partial += fmt::format("{}{:.17g}", m == 1 ? "" : ",", g.budget_sum);

    double prod = 1.0;
    for (std::size_t j = 0; j < d; ++j) prod *= f[j](1.0 / Xr);
    const double wr = f[r](1.0 / vol);
    g.consistency_ratios.push_back(wr / prod);
    g.consistency_constant = std::max(g.consistency_constant, wr / prod);
    g.bound_terms.push_back(A * Xr * wr);
    g.bound_sum += g.bound_terms.back();
  }
  if (g.budget_sum >= 1.0) {
    throw Error(ErrorCode::BudgetOverflow,
                fmt::format("partial sums of 1/A_m: {}", partial));
  }

  auto line_sum = [&](std::size_t m, std::size_t line) {
    const std::size_t r = s.direction(m);
    Index pt = s.line_point(m, line);
    double sum = 0.0;
    for (long long c = 0; c <= s.x(r, m); ++c) {
      pt[r] = c;
      sum += f[r](l.at(pt));
    }
    return sum;
  };

  AdmissibleSets E(M);
  for (std::size_t m = 1; m <= M; ++m) {
    const std::size_t n = s.line_count(m);
    g.line_counts.push_back(n);
    for (std::size_t line = 0; line < n; ++line) {
      if (line_sum(m, line) <= g.bound_terms[m - 1] + kSlack) E[m - 1].push_back(line);
    }
    g.admissible_counts.push_back(E[m - 1].size());
  }
  g.lines = find_line_sequence(s, E, std::span<const double>(g.budgets));
  for (std::size_t m = 1; m <= M; ++m) {
    g.segments.push_back(s.segment(m, g.lines[m - 1]));
    g.line_sum_total += line_sum(m, g.lines[m - 1]);
  }
  g.path = trace_lines(g.segments, l, f, 0);
  g.factored_bound = 2.0 * g.consistency_constant * g.S * g.S;
  return g;
}

nlohmann::json budget_report(const GeneralPath& g) {
  return {{"S", g.S},
          {"defect_values", g.defect_values},
          {"budgets", g.budgets},
          {"budget_sum", g.budget_sum},
          {"consistency_ratios", g.consistency_ratios},
          {"consistency_constant", g.consistency_constant},
          {"bound_terms", g.bound_terms},
          {"bound_sum", g.bound_sum},
          {"line_sum_total", g.line_sum_total},
          {"path_weight", g.path.weight},
          {"factored_bound", g.factored_bound},
          {"line_counts", g.line_counts},
          {"admissible_counts", g.admissible_counts},
          {"lines", g.lines},
          {"path_length", g.path.points.size()}};
}

}  // namespace denjoy::selection
