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

#include "denjoy/moduli.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "denjoy/error.hpp"

namespace denjoy::moduli {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

}  // namespace

double hoelder_log_cap(double alpha, double eps) {
  return 0.5 * std::exp(-eps / alpha);
}

Modulus::Modulus(Kind kind) : kind_(std::move(kind)) {}

Modulus Modulus::hoelder(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidModulus,
                fmt::format("hoelder exponent {} not in (0, 1]", alpha));
  }
  Modulus m(Hoelder{alpha});
  m.cap_ = 1.0;
  m.concave_ = true;
  return m;
}

Modulus Modulus::hoelder_log(double alpha, double eps, bool extended) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(eps >= 0.0)) {
    throw Error(ErrorCode::InvalidModulus,
                fmt::format("hoelder_log({}, {}) needs alpha in (0,1), eps >= 0",
                            alpha, eps));
  }
  Modulus m(HoelderLog{alpha, eps, extended});
  m.log_cap_ = hoelder_log_cap(alpha, eps);
  m.cap_ = extended ? 1.0 : m.log_cap_;
  m.concave_ = true;
  const double t = m.log_cap_;
  const double L = std::log(1.0 / t);
  m.value_at_log_cap_ = std::pow(t, alpha) * std::pow(L, eps);
  // d/dt t^a L^e = t^{a-1} L^{e-1} (a L - e)
  m.slope_at_log_cap_ =
      std::pow(t, alpha - 1.0) * std::pow(L, eps - 1.0) * (alpha * L - eps);
  return m;
}

Modulus Modulus::tabulated(std::vector<std::pair<double, double>> points,
                           bool require_strict) {
  if (!points.empty() && points.front().first == 0.0) {
    if (points.front().second != 0.0) {
      throw Error(ErrorCode::InvalidModulus, "tabulated value at 0 must be 0");
    }
    points.erase(points.begin());
  }
  if (points.empty()) {
    throw Error(ErrorCode::InvalidModulus, "tabulated modulus needs points");
  }
  double prev_t = 0.0;
  double prev_v = 0.0;
  double prev_slope = std::numeric_limits<double>::infinity();
  bool concave = true;
  for (const auto& [t, v] : points) {
    if (!(t > prev_t) || t > 1.0) {
      throw Error(ErrorCode::InvalidModulus,
                  "tabulated t must be strictly increasing in (0, 1]");
    }
    if (require_strict ? !(v > prev_v) : !(v >= prev_v)) {
      throw Error(ErrorCode::InvalidModulus,
                  require_strict ? "tabulated values must strictly increase"
                                 : "tabulated values must not decrease");
    }
    const double slope = (v - prev_v) / (t - prev_t);
    if (slope > prev_slope * (1.0 + 1e-12)) concave = false;
    prev_slope = slope;
    prev_t = t;
    prev_v = v;
  }
  Modulus m(Tabulated{std::move(points)});
  m.cap_ = prev_t;
  m.concave_ = concave;
  return m;
}

Modulus Modulus::product(std::vector<Modulus> members) {
  if (members.empty()) {
    throw Error(ErrorCode::InvalidModulus, "empty product");
  }
  double cap = 1.0;
  for (const auto& mm : members) cap = std::min(cap, mm.domain_cap());
  Modulus m(Product{std::move(members)});
  m.cap_ = cap;
  m.concave_ = false;
  return m;
}

double Modulus::eval(double t) const {
  if (!(t >= 0.0) || t > cap_) {
    throw Error(ErrorCode::OutOfDomain,
                fmt::format("{} at t={} (domain [0, {}])", describe(), t, cap_));
  }
  return eval_unchecked(t);
}

double Modulus::eval_unchecked(double t) const {
  if (t == 0.0) return 0.0;
  return std::visit(
      Overloaded{
          [&](const Hoelder& h) {
            return h.alpha == 1.0 ? t : std::pow(t, h.alpha);
          },
          [&](const HoelderLog& h) {
            if (t <= log_cap_) {
              return std::pow(t, h.alpha) * std::pow(std::log(1.0 / t), h.eps);
            }
            return value_at_log_cap_ + slope_at_log_cap_ * (t - log_cap_);
          },
          [&](const Tabulated& tab) {
            const auto& p = tab.points;
            auto it = std::lower_bound(
                p.begin(), p.end(), t,
                [](const auto& pt, double x) { return pt.first < x; });
            if (it->first == t) return it->second;
            const double t0 = it == p.begin() ? 0.0 : std::prev(it)->first;
            const double v0 = it == p.begin() ? 0.0 : std::prev(it)->second;
            return v0 + (it->second - v0) * (t - t0) / (it->first - t0);
          },
          [&](const Product& prod) {
            double v = 1.0;
            for (const auto& mm : prod.members) v *= mm.eval_unchecked(t);
            return v;
          },
      },
      kind_);
}

std::string Modulus::describe() const {
  return std::visit(
      Overloaded{
          [](const Hoelder& h) { return fmt::format("hoelder({})", h.alpha); },
          [](const HoelderLog& h) {
            return fmt::format("hoelder_log({}, {}{})", h.alpha, h.eps,
                               h.extended ? ", extended" : "");
          },
          [](const Tabulated& t) {
            return fmt::format("tabulated({} points)", t.points.size());
          },
          [](const Product& p) {
            std::string s = "product(";
            for (std::size_t i = 0; i < p.members.size(); ++i) {
              if (i) s += ", ";
              s += p.members[i].describe();
            }
            return s + ")";
          },
      },
      kind_);
}

std::vector<double> dyadic_grid(int k_first, int k_last) {
  std::vector<double> g;
  for (int k = k_first; k <= k_last; ++k) g.push_back(std::ldexp(1.0, -k));
  return g;
}

std::vector<double> scaled_dyadic_grid(double delta, int k_last) {
  std::vector<double> g;
  for (int k = 1; k <= k_last; ++k) g.push_back(std::ldexp(delta, -k));
  return g;
}

ConcavityReport check_concave_doubling(const Modulus& m,
                                       std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "concavity grid");
  for (double t : grid) {
    if (!(t > 0.0) || t > m.domain_cap() / 2.0) {
      throw Error(ErrorCode::OutOfDomain,
                  fmt::format("grid point {} outside (0, cap/2]", t));
    }
  }
  ConcavityReport r;
  std::vector<double> w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) w[i] = m.eval(grid[i]);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      const double mid = m.eval(0.5 * (grid[i] + grid[j]));
      const double chord = 0.5 * (w[i] + w[j]);
      if (mid < chord - 1e-12 * chord) r.concave = false;
    }
    const double ratio = m.eval(2.0 * grid[i]) / (2.0 * w[i]);
    r.worst_ratio = std::max(r.worst_ratio, ratio);
  }
  r.doubling_ok = r.worst_ratio <= 1.0 + 1e-12;
  return r;
}

std::string_view to_string(Comparison c) {
  switch (c) {
    case Comparison::Stronger: return "stronger";
    case Comparison::Weaker: return "weaker";
    case Comparison::Equivalent: return "equivalent";
    case Comparison::Incomparable: return "incomparable";
  }
  return "?";
}

Comparison compare(const Modulus& m1, const Modulus& m2,
                   std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "comparison grid");
  bool below = false;
  bool above = false;
  for (double x : grid) {
    const double a = m1.eval(x);
    const double b = m2.eval(x);
    if (nearly_equal(a, b)) continue;
    (a < b ? below : above) = true;
  }
  if (below && above) return Comparison::Incomparable;
  if (below) return Comparison::Stronger;
  if (above) return Comparison::Weaker;
  return Comparison::Equivalent;
}

Comparison compare(const Modulus& m1, const Modulus& m2, double delta) {
  const double cap = std::min(m1.domain_cap(), m2.domain_cap());
  if (!(delta > 0.0) || delta > cap) {
    throw Error(ErrorCode::OutOfDomain,
                fmt::format("comparison threshold {} not in (0, {}]", delta, cap));
  }
  const auto grid = scaled_dyadic_grid(delta);
  return compare(m1, m2, grid);
}

ModulusFamily::ModulusFamily(std::vector<Modulus> members)
    : members_(std::move(members)) {
  if (members_.size() < 2) {
    throw Error(ErrorCode::InvalidModulus, "a family needs d >= 2 members");
  }
  for (const auto& m : members_) cap_ = std::min(cap_, m.domain_cap());
}

double ModulusFamily::defect(double t) const {
  if (t == 0.0) throw Error(ErrorCode::ZeroT, "defect at t = 0");
  if (!(t > 0.0) || t > cap_) {
    throw Error(ErrorCode::OutOfDomain,
                fmt::format("defect at t={} (domain (0, {}])", t, cap_));
  }
  double p = 1.0;
  for (const auto& m : members_) p *= m.eval(t);
  return p / t;
}

bool ModulusFamily::has_vanishing_defect(const VanishingTest& test) const {
  std::vector<double> v;
  for (double t : dyadic_grid(1, test.depth)) {
    if (t <= cap_) v.push_back(defect(t));
  }
  if (v.size() < 2) return false;
  for (std::size_t i = v.size() / 2; i + 1 < v.size(); ++i) {
    if (v[i + 1] > v[i] * (1.0 + 1e-12)) return false;
  }
  return v.back() < v.front() && v.back() < test.threshold;
}

double family_defect(const ModulusFamily& f, double t) { return f.defect(t); }

double submultiplicativity_constant(
    const ScalarFunction& w, std::span<const std::pair<double, double>> grid) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "submultiplicativity grid");
  double c = 0.0;
  for (const auto& [t1, t2] : grid) {
    const double w1 = w(t1);
    const double w2 = w(t2);
    if (w1 == 0.0 || w2 == 0.0) {
      throw Error(ErrorCode::DivisionByZero,
                  fmt::format("w vanishes at ({}, {})", t1, t2));
    }
    c = std::max(c, w(t1 * t2) / (w1 * w2));
  }
  return c;
}

std::vector<std::pair<double, double>> dyadic_pair_grid(double cap, int depth) {
  std::vector<std::pair<double, double>> g;
  for (double a : dyadic_grid(1, depth)) {
    if (a > cap) continue;
    for (double b : dyadic_grid(1, depth)) {
      if (b <= cap) g.emplace_back(a, b);
    }
  }
  return g;
}

double submultiplicativity_constant(const ModulusFamily& f, int depth) {
  const auto grid = dyadic_pair_grid(f.domain_cap(), depth);
  return submultiplicativity_constant([&f](double t) { return f.defect(t); },
                                      grid);
}

Modulus empirical_modulus(std::span<const Sample> samples,
                          std::span<const double> t_grid, bool circular) {
  if (samples.empty() || t_grid.empty()) {
    throw Error(ErrorCode::EmptyGrid, "empirical modulus needs samples and t");
  }
  std::vector<double> ts(t_grid.begin(), t_grid.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  if (!(ts.front() > 0.0) || ts.back() > 1.0) {
    throw Error(ErrorCode::OutOfDomain, "t grid must lie in (0, 1]");
  }
  const std::size_t n = samples.size();
  double max_gap = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double gap = samples[i + 1].x - samples[i].x;
    if (!(gap > 0.0)) {
      throw Error(ErrorCode::InvalidModulus, "sample x must strictly increase");
    }
    max_gap = std::max(max_gap, gap);
  }
  if (circular) {
    max_gap = std::max(max_gap, 1.0 - samples[n - 1].x + samples[0].x);
  } else {
    max_gap = std::max({max_gap, samples[0].x, 1.0 - samples[n - 1].x});
  }
  if (max_gap > ts.front() * (1.0 + 1e-9)) {
    throw Error(ErrorCode::GridTooCoarse,
                fmt::format("sample spacing {} exceeds min t {}", max_gap,
                            ts.front()));
  }

  // Unrolled copy so every window [x_i, x_i + t] is contiguous.
  const std::size_t len = circular ? 2 * n : n;
  auto xs = [&](std::size_t k) {
    return k < n ? samples[k].x : samples[k - n].x + 1.0;
  };
  auto vs = [&](std::size_t k) {
    return k < n ? samples[k].value : samples[k - n].value;
  };

  std::vector<std::pair<double, double>> points;
  double running = 0.0;
  for (double t : ts) {
    std::deque<std::size_t> hi;
    std::deque<std::size_t> lo;
    std::size_t j = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (j < i) j = i;
      while (j < len && j < i + n && xs(j) - xs(i) <= t * (1.0 + 1e-12)) {
        while (!hi.empty() && vs(hi.back()) <= vs(j)) hi.pop_back();
        hi.push_back(j);
        while (!lo.empty() && vs(lo.back()) >= vs(j)) lo.pop_back();
        lo.push_back(j);
        ++j;
      }
      while (!hi.empty() && hi.front() < i) hi.pop_front();
      while (!lo.empty() && lo.front() < i) lo.pop_front();
      if (!hi.empty()) best = std::max(best, vs(hi.front()) - vs(lo.front()));
    }
    running = std::max(running, best);
    points.emplace_back(t, running);
  }
  return Modulus::tabulated(std::move(points), /*require_strict=*/false);
}

double fit_hoelder_exponent(const Modulus& tabulated, double t_lo, double t_hi) {
  const auto* tab = std::get_if<Tabulated>(&tabulated.kind());
  if (tab == nullptr) {
    throw Error(ErrorCode::InvalidModulus, "fit needs a tabulated modulus");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (const auto& [t, v] : tab->points) {
    if (t < t_lo * (1 - 1e-12) || t > t_hi * (1 + 1e-12) || !(v > 0.0)) continue;
    const double x = std::log(t);
    const double y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) {
    throw Error(ErrorCode::EmptyGrid, "fewer than two points in fit range");
  }
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

double exponent_of(const Modulus& m) {
  if (const auto* h = std::get_if<Hoelder>(&m.kind())) return h->alpha;
  if (const auto* h = std::get_if<HoelderLog>(&m.kind())) return h->alpha;
  throw Error(ErrorCode::InvalidModulus,
              m.describe() + " is neither hoelder nor hoelder_log");
}

ConsistencySequences consistency_sequences(const ModulusFamily& f, double a,
                                           int M) {
  if (!(a > 1.0) || M < 1) {
    throw Error(ErrorCode::PreconditionViolated, "need a > 1 and M >= 1");
  }
  const std::size_t d = f.size();
  std::vector<double> alpha(d);
  for (std::size_t j = 0; j < d; ++j) alpha[j] = exponent_of(f[j]);

  constexpr double kExactLimit = 9007199254740992.0;  // 2^53
  std::vector<std::vector<long long>> X(d, std::vector<long long>(M));
  for (std::size_t j = 0; j < d; ++j) {
    for (int m = 1; m <= M; ++m) {
      const double p = std::pow(a, alpha[j] * m);
      if (!(p < kExactLimit)) {
        throw Error(ErrorCode::Overflow,
                    fmt::format("a^(alpha m) = {} at j={}, m={}; cap M", p,
                                j + 1, m));
      }
      X[j][m - 1] = static_cast<long long>(std::floor(p));
    }
  }
  const double cap = f.domain_cap();
  auto usable = [&](int m) {
    for (std::size_t j = 0; j < d; ++j) {
      const long long x = X[j][m - 1];
      if (x < 2 || 1.0 / static_cast<double>(x) > cap) return false;
    }
    return true;
  };
  if (!usable(M)) {
    throw Error(ErrorCode::PreconditionViolated,
                fmt::format("no usable m up to M={}; increase M or a", M));
  }
  int first = M;
  while (first > 1 && usable(first - 1)) {
    bool increasing = true;
    for (std::size_t j = 0; j < d; ++j) {
      if (X[j][first - 1] <= X[j][first - 2]) increasing = false;
    }
    if (!increasing) break;
    --first;
  }

  ConsistencySequences seq;
  seq.base = a;
  seq.first_m = first;
  const std::size_t count = static_cast<std::size_t>(M - first + 1);
  seq.X.assign(d, {});
  seq.lhs.assign(d, std::vector<double>(count));
  seq.rhs.assign(d, std::vector<double>(count));
  seq.ratio.assign(d, std::vector<double>(count));
  for (std::size_t j = 0; j < d; ++j) {
    seq.X[j].assign(X[j].begin() + (first - 1), X[j].end());
  }
  for (std::size_t i = 0; i < count; ++i) {
    double prod_x = 1.0;
    for (std::size_t k = 0; k < d; ++k) prod_x *= static_cast<double>(seq.X[k][i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double lhs = f[j].eval(1.0 / prod_x);
      double rhs = 1.0;
      const double inv = 1.0 / static_cast<double>(seq.X[j][i]);
      for (std::size_t k = 0; k < d; ++k) rhs *= f[k].eval(inv);
      seq.lhs[j][i] = lhs;
      seq.rhs[j][i] = rhs;
      seq.ratio[j][i] = lhs / rhs;
      seq.verified_constant = std::max(seq.verified_constant, lhs / rhs);
    }
  }
  // Tail stability: the ratio does not grow over the second half of the range.
  if (count >= 2) {
    double head = 0.0;
    double tail = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      double& half = i < count / 2 ? head : tail;
      for (std::size_t j = 0; j < d; ++j) half = std::max(half, seq.ratio[j][i]);
    }
    seq.tail_stable = tail <= head * (1.0 + 1e-12);
  }
  return seq;
}

std::vector<std::vector<double>> exact_power_ratios(const ModulusFamily& f,
                                                    double a, int M) {
  const std::size_t d = f.size();
  std::vector<double> alpha(d);
  for (std::size_t j = 0; j < d; ++j) alpha[j] = exponent_of(f[j]);
  std::vector<std::vector<double>> out(d, std::vector<double>(M));
  for (int m = 1; m <= M; ++m) {
    std::vector<double> x(d);
    double prod = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = std::pow(a, -alpha[j] * m);
      prod *= x[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      double rhs = 1.0;
      for (std::size_t k = 0; k < d; ++k) rhs *= f[k].eval(x[j]);
      out[j][m - 1] = f[j].eval(prod) / rhs;
    }
  }
  return out;
}

std::string consistency_csv(const ConsistencySequences& seq) {
  const std::size_t d = seq.dimension();
  std::ostringstream os;
  os << "m";
  for (std::size_t j = 1; j <= d; ++j) os << ",X_" << j;
  for (std::size_t j = 1; j <= d; ++j) {
    os << ",lhs_" << j << ",rhs_" << j << ",ratio_" << j;
  }
  os << '\n';
  for (std::size_t i = 0; i < seq.count(); ++i) {
    os << seq.first_m + static_cast<int>(i);
    for (std::size_t j = 0; j < d; ++j) os << ',' << seq.X[j][i];
    for (std::size_t j = 0; j < d; ++j) {
      os << fmt::format(",{:.17g},{:.17g},{:.17g}", seq.lhs[j][i],
                        seq.rhs[j][i], seq.ratio[j][i]);
    }
    os << '\n';
  }
  return os.str();
}

SquareSummableFilter square_summable_filter(std::span<const double> values) {
  SquareSummableFilter f;
  std::size_t j = 1;
  for (std::size_t m = 0; m < values.size(); ++m) {
    const double bound = 1.0 / static_cast<double>(j * j);
    if (values[m] < bound) {
      f.kept.push_back(m);
      f.kept_sum += values[m];
      ++j;
    } else {
      f.dropped.push_back(m);
    }
  }
  return f;
}

nlohmann::json to_json(const Modulus& m) {
  return std::visit(
      Overloaded{
          [](const Hoelder& h) {
            return nlohmann::json{{"kind", "hoelder"}, {"alpha", h.alpha}};
          },
          [](const HoelderLog& h) {
            nlohmann::json j{{"kind", "hoelder_log"},
                             {"alpha", h.alpha},
                             {"eps", h.eps}};
            if (h.extended) j["extended"] = true;
            return j;
          },
          [](const Tabulated& t) {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& [x, v] : t.points) pts.push_back({x, v});
            return nlohmann::json{{"kind", "tabulated"}, {"points", pts}};
          },
          [](const Product& p) {
            nlohmann::json ms = nlohmann::json::array();
            for (const auto& mm : p.members) ms.push_back(to_json(mm));
            return nlohmann::json{{"kind", "product"}, {"members", ms}};
          },
      },
      m.kind());
}

Modulus modulus_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "hoelder") return Modulus::hoelder(j.at("alpha").get<double>());
    if (kind == "identity") return Modulus::identity();
    if (kind == "hoelder_log") {
      return Modulus::hoelder_log(j.at("alpha").get<double>(),
                                  j.at("eps").get<double>(),
                                  j.value("extended", false));
    }
    if (kind == "tabulated") {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : j.at("points")) {
        pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      }
      return Modulus::tabulated(std::move(pts));
    }
    if (kind == "product") {
      std::vector<Modulus> ms;
      for (const auto& mm : j.at("members")) ms.push_back(modulus_from_json(mm));
      return Modulus::product(std::move(ms));
    }
    throw Error(ErrorCode::ParseError, "unknown modulus kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace denjoy::moduli
