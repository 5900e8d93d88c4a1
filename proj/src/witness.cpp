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

#include "denjoy/witness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "denjoy/error.hpp"

namespace denjoy::witness {

namespace {

// Largest y in [lo, hi] with g(y) <= target for increasing g, by bisection
// until the bracket collapses to adjacent doubles.  nullopt if target lies
// outside [g(lo), g(hi)].
template <class G>
std::optional<double> solve_increasing(const G& g, double lo, double hi, double target) {
  if (!(lo <= hi)) return std::nullopt;
  if (g(lo) > target || g(hi) < target) return std::nullopt;
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) <= target ? lo : hi) = mid;
  }
  return g(hi) <= target ? hi : lo;
}

double product_at(const std::vector<Modulus>& ws, double x) {
  double p = 1.0;
  for (const auto& w : ws) p *= w(x);
  return p;
}

FinalCheck final_check(const Modulus& wk, const std::vector<Modulus>& ws, double prod_x,
                       double xk, double Cpow, double slack) {
  FinalCheck c;
  c.lhs = wk(prod_x);
  c.rhs = Cpow * product_at(ws, xk);
  c.ratio = c.lhs / c.rhs;
  c.ok = c.ratio <= 1.0 + slack;
  return c;
}

double default_C(const ModulusFamily& f, const WitnessOptions& opt) {
  return opt.C ? *opt.C : moduli::submultiplicativity_constant(f);
}

void require_vanishing(const ModulusFamily& f, const WitnessOptions& opt) {
  if (!f.has_vanishing_defect(opt.vanishing)) {
    throw Error(ErrorCode::PreconditionViolated,
                "defect of the family does not vanish at 0 on the test grid");
  }
}

// Lowest-first order near 0; ties keep member order.
std::vector<std::size_t> comparability_order(const ModulusFamily& f, double delta) {
  const std::size_t d = f.size();
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (moduli::compare(f[i], f[j], delta) == moduli::Comparison::Incomparable) {
        throw Error(ErrorCode::PreconditionViolated,
                    fmt::format("members {} and {} are not comparable near 0", i, j));
      }
    }
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return moduli::compare(f[a], f[b], delta) == moduli::Comparison::Stronger;
  });
  return idx;
}

TauReport check_tau(const ModulusFamily& f, const WitnessOptions& opt, double delta) {
  TauReport r;
  if (!opt.tau) return r;
  const auto& tau = *opt.tau;
  if (tau.size() != f.size()) {
    throw Error(ErrorCode::PreconditionViolated, "one tau per family member");
  }
  r.supplied = true;
  r.sum = std::accumulate(tau.begin(), tau.end(), 0.0);
  r.sum_ok = r.sum <= 1.0 + 1e-12;
  r.worst_ratio = std::numeric_limits<double>::infinity();
  for (double x : moduli::scaled_dyadic_grid(delta)) {
    for (std::size_t k = 0; k < f.size(); ++k) {
      r.worst_ratio = std::min(r.worst_ratio, f[k](x) / std::pow(x, tau[k]));
    }
  }
  r.bound_ok = r.worst_ratio >= 1.0 - 1e-12;
  return r;
}

bool non_increasing(const std::vector<double>& v, std::size_t from) {
  for (std::size_t i = std::max<std::size_t>(from, 1); i < v.size(); ++i) {
    if (v[i] > v[i - 1] * (1.0 + 1e-12)) return false;
  }
  return true;
}

struct GuardFailure {
  std::size_t stage;
  std::string id;
};

}  // namespace

std::string_view to_string(ChainMode m) {
  return m == ChainMode::Literal ? "literal" : "per-stage";
}

PhiResult phi(double x, const Modulus& w1, const Modulus& w2) {
  if (!(x > 0.0) || x > std::min(w1.domain_cap(), w2.domain_cap())) {
    throw Error(ErrorCode::OutOfDomain, fmt::format("phi at x={}", x));
  }
  const double target = w1(x) * w2(x);
  PhiResult r;
  auto g = [&](double y) { return w1(x * y); };
  if (g(1.0) < target) {
    r.y = 1.0;
    r.saturated = true;
    r.residual = std::abs(g(1.0) - target);
    return r;
  }
  r.y = *solve_increasing(g, 0.0, 1.0, target);
  r.residual = std::abs(g(r.y) - target);
  return r;
}

WitnessReport witness_2d(const Modulus& w1, const Modulus& w2, std::span<const double> x_grid,
                         const WitnessOptions& opt) {
  const ModulusFamily fam({w1, w2});
  require_vanishing(fam, opt);
  WitnessReport rep;
  rep.dimension = 2;
  rep.C = default_C(fam, opt);
  rep.permutation = {0, 1};
  rep.tau = check_tau(fam, opt, std::min(opt.comparison_delta, fam.domain_cap()));
  const std::vector<Modulus> ws{w1, w2};
  std::vector<double> ys;
  for (double x : x_grid) {
    const auto p = phi(x, w1, w2);
    ConsistencyWitness w;
    w.dimension = 2;
    w.x1_requested = x;
    w.mode = opt.mode;
    w.permutation = {0, 1};
    w.chain_x = {x, p.y};
    w.x = w.chain_x;
    w.t = {p.y};
    w.targets = {w1(x) * w2(x)};
    w.C = rep.C;
    w.phi_residual = p.residual;
    const double prod = x * p.y;
    w.checks.push_back(final_check(w1, ws, prod, x, rep.C, opt.slack));
    w.checks.push_back(final_check(w2, ws, prod, p.y, rep.C, opt.slack));
    if (!w.checks[1].ok) {
      throw Error(ErrorCode::Eq2Failed,
                  fmt::format("x={:.17g}: ratio {:.17g} exceeds 1 with C={:.17g}", x,
                              w.checks[1].ratio, rep.C));
    }
    w.accepted = w.checks[0].ok && w.checks[1].ok;
    ys.push_back(p.y);
    rep.witnesses.push_back(std::move(w));
  }
  rep.shrinking = non_increasing(ys, 0);
  return rep;
}

WitnessReport witness_general(const ModulusFamily& family, std::span<const double> x1_grid,
                              const WitnessOptions& opt) {
  const std::size_t d = family.size();
  if (d == 2) return witness_2d(family[0], family[1], x1_grid, opt);
  require_vanishing(family, opt);

  const double cap = family.domain_cap();
  const double delta = std::min(opt.comparison_delta, cap);
  const auto low_first = comparability_order(family, delta);
  // chain slot 0..d-2 <- members above the lowest, slot d-1 <- the lowest
  std::vector<std::size_t> perm(d);
  for (std::size_t s = 0; s + 1 < d; ++s) perm[s] = low_first[s + 1];
  perm[d - 1] = low_first[0];

  std::vector<Modulus> ws;
  for (std::size_t s = 0; s < d; ++s) ws.push_back(family[perm[s]]);
  std::vector<double> tau;
  if (opt.tau) {
    if (opt.tau->size() != d) {
      throw Error(ErrorCode::PreconditionViolated, "one tau per family member");
    }
    for (std::size_t s = 0; s < d; ++s) tau.push_back((*opt.tau)[perm[s]]);
  }

  WitnessReport rep;
  rep.dimension = d;
  rep.C = default_C(family, opt);
  rep.permutation = perm;
  rep.tau = check_tau(family, opt, delta);
  const double Cpow = std::pow(rep.C, static_cast<double>(d - 1));
  auto P = [&](double x) { return product_at(ws, x); };
  auto defect = [&](double x) { return P(x) / x; };

  // one attempt at x1; returns nullopt with the failing guard on failure
  auto attempt = [&](double x1, ConsistencyWitness& w) -> std::optional<GuardFailure> {
    w.chain_x.assign(d, 0.0);
    w.t.clear();
    w.targets.clear();
    w.guards.clear();
    w.chain_x[0] = x1;
    const double p1 = P(x1);
    const auto t2 = solve_increasing([&](double y) { return ws[0](x1 * y); }, 0.0, 1.0, p1);
    if (!t2) {
      throw Error(ErrorCode::ChainAmbiguous, fmt::format("no t_2 for x_1={:.17g}", x1));
    }
    w.targets.push_back(p1);
    w.t.push_back(*t2);
    const double base = x1 * *t2;
    // stages k = 2..d-1 (1-based) solve for x_k
    for (std::size_t k = 2; k + 1 <= d; ++k) {
      const std::size_t s = k - 1;
      const double t_prev = w.t.back();
      if (k >= 3 && !tau.empty() && d >= 4) {
        // sufficient conditions before solving x_{j+1}, j = k - 1
        const std::size_t j = k - 1;
        GuardEval gt{k, "t_bound", t_prev, std::pow(base, tau[j]), false};
        gt.ok = gt.lhs <= gt.rhs;
        double ssum = 0.0;
        for (std::size_t i = 1; i <= j; ++i) ssum += tau[i];
        GuardEval gt2{k, "t2_bound", w.t.front(),
                     ssum < 1.0 ? std::pow(x1, ssum / (1.0 - ssum)) : 0.0, false};
        gt2.ok = gt2.lhs <= gt2.rhs;
        w.guards.push_back(gt);
        w.guards.push_back(gt2);
        if (!gt.ok) return GuardFailure{k, "t_bound"};
        if (!gt2.ok) return GuardFailure{k, "t2_bound"};
      }
      const double arg =
          (opt.mode == ChainMode::Literal || k == 2) ? base : x1 * t_prev;
      const double target = ws[s](arg);
      const auto xk = solve_increasing(P, t_prev, cap, target);
      if (!xk) {
        throw Error(ErrorCode::ChainAmbiguous,
                    fmt::format("stage {} has no root in [{:.17g}, {:.17g}]", k, t_prev, cap));
      }
      w.targets.push_back(target);
      w.chain_x[s] = *xk;
      if (k >= 3) w.t.push_back(*xk * t_prev);
    }
    // x_d: largest U 2^{-i/4} passing every final check
    double inner = 1.0;
    for (std::size_t s = 1; s + 1 < d; ++s) inner *= w.chain_x[s];
    const double U = std::min(w.t.front() / inner, cap);
    for (int i = 0; i <= 800; ++i) {
      const double xd = U * std::exp2(-i / 4.0);
      if (!(xd > 0.0)) break;
      double prod = 1.0;
      for (std::size_t s = 0; s + 1 < d; ++s) prod *= w.chain_x[s];
      prod *= xd;
      bool ok = true;
      std::vector<FinalCheck> checks(d);
      for (std::size_t s = 0; s < d && ok; ++s) {
        checks[s] = final_check(ws[s], ws, prod, s + 1 == d ? xd : w.chain_x[s], Cpow,
                                opt.slack);
        ok = checks[s].ok;
      }
      if (!ok) continue;
      w.chain_x[d - 1] = xd;
      w.t.push_back(xd * w.t.back());
      w.checks.assign(d, {});
      for (std::size_t s = 0; s < d; ++s) w.checks[perm[s]] = checks[s];
      double head = 1.0;
      for (std::size_t s = 0; s + 1 < d; ++s) head *= w.chain_x[s];
      w.balance_lhs = std::pow(head, 1.0 / static_cast<double>(d));
      w.balance_rhs = Cpow * std::pow(xd, 1.0 - 1.0 / static_cast<double>(d)) * defect(xd);
      w.balance_ok = w.balance_lhs <= w.balance_rhs;
      return std::nullopt;
    }
    return GuardFailure{d, "final"};
  };

  std::vector<double> maxes;
  for (double x1_req : x1_grid) {
    if (!(x1_req > 0.0) || x1_req > cap) {
      throw Error(ErrorCode::OutOfDomain, fmt::format("x_1={} outside (0, {}]", x1_req, cap));
    }
    ConsistencyWitness w;
    w.dimension = d;
    w.x1_requested = x1_req;
    w.mode = opt.mode;
    w.permutation = perm;
    w.C = rep.C;
    double x1 = x1_req;
    std::optional<GuardFailure> fail;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      fail = attempt(x1, w);
      if (!fail) {
        w.halvings = h;
        break;
      }
      x1 *= 0.5;
    }
    if (fail) {
      throw Error(ErrorCode::GuardFailed,
                  fmt::format("x_1={:.17g}: stage {} inequality {} after {} halvings", x1_req,
                              fail->stage, fail->id, opt.max_halvings));
    }
    w.x.assign(d, 0.0);
    for (std::size_t s = 0; s < d; ++s) w.x[perm[s]] = w.chain_x[s];
    w.accepted = std::all_of(w.checks.begin(), w.checks.end(),
                             [](const FinalCheck& c) { return c.ok; });
    maxes.push_back(*std::max_element(w.x.begin(), w.x.end()));
    rep.witnesses.push_back(std::move(w));
  }
  rep.shrinking = non_increasing(maxes, 2);

  std::vector<double> up(x1_grid.begin(), x1_grid.end());
  std::sort(up.begin(), up.end());
  for (double y : up) {
    if (y > ws[d - 1].domain_cap()) break;
    if (ws[d - 1](y) > std::pow(y, 1.0 / static_cast<double>(d))) break;
    rep.small_x_threshold = y;
  }
  return rep;
}

std::vector<FinalCheck> recheck(const ModulusFamily& family, const ConsistencyWitness& w,
                                double slack) {
  const std::size_t d = family.size();
  if (w.x.size() != d) throw Error(ErrorCode::PreconditionViolated, "dimension mismatch");
  const double Cpow = std::pow(w.C, static_cast<double>(d - 1));
  double prod = 1.0;
  for (double v : w.x) prod *= v;
  std::vector<FinalCheck> out;
  for (std::size_t k = 0; k < d; ++k) {
    out.push_back(final_check(family[k], family.members(), prod, w.x[k], Cpow, slack));
  }
  return out;
}

std::vector<double> geometric_grid(double hi, double lo, std::size_t n) {
  if (n == 0 || !(hi > 0.0) || !(lo > 0.0) || lo > hi) {
    throw Error(ErrorCode::EmptyGrid, "geometric grid needs 0 < lo <= hi, n >= 1");
  }
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = n == 1 ? hi : hi * std::pow(lo / hi, static_cast<double>(i) / (n - 1));
  }
  return g;
}

nlohmann::json to_json(const ConsistencyWitness& w) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : w.checks) {
    checks.push_back({{"lhs", c.lhs}, {"rhs", c.rhs}, {"ratio", c.ratio}, {"ok", c.ok}});
  }
  nlohmann::json guards = nlohmann::json::array();
  for (const auto& g : w.guards) {
    guards.push_back(
        {{"stage", g.stage}, {"id", g.id}, {"lhs", g.lhs}, {"rhs", g.rhs}, {"ok", g.ok}});
  }
  return {{"dimension", w.dimension},
          {"x1_requested", w.x1_requested},
          {"halvings", w.halvings},
          {"mode", std::string(to_string(w.mode))},
          {"permutation", w.permutation},
          {"chain_x", w.chain_x},
          {"x", w.x},
          {"t", w.t},
          {"targets", w.targets},
          {"C", w.C},
          {"checks", checks},
          {"guards", guards},
          {"balance", {{"lhs", w.balance_lhs}, {"rhs", w.balance_rhs}, {"ok", w.balance_ok}}},
          {"phi_residual", w.phi_residual},
          {"accepted", w.accepted}};
}

nlohmann::json to_json(const WitnessReport& r) {
  nlohmann::json ws = nlohmann::json::array();
  for (const auto& w : r.witnesses) ws.push_back(to_json(w));
  nlohmann::json tau{{"supplied", r.tau.supplied}};
  if (r.tau.supplied) {
    tau["sum"] = r.tau.sum;
    tau["sum_ok"] = r.tau.sum_ok;
    tau["worst_ratio"] = r.tau.worst_ratio;
    tau["bound_ok"] = r.tau.bound_ok;
  }
  return {{"dimension", r.dimension},
          {"C", r.C},
          {"permutation", r.permutation},
          {"tau", tau},
          {"witnesses", ws},
          {"shrinking", r.shrinking},
          {"small_x_threshold", r.small_x_threshold ? nlohmann::json(*r.small_x_threshold) : nlohmann::json()}};
}

std::string witness_csv(const WitnessReport& r) {
  const std::size_t d = r.dimension;
  std::string out = "x1_requested,halvings,C";
  for (std::size_t k = 1; k <= d; ++k) out += fmt::format(",x_{}", k);
  for (std::size_t k = 2; k <= d; ++k) out += fmt::format(",t_{}", k);
  for (std::size_t k = 1; k <= d; ++k) out += fmt::format(",ratio_{}", k);
  out += ",accepted\n";
  for (const auto& w : r.witnesses) {
    out += fmt::format("{:.17g},{},{:.17g}", w.x1_requested, w.halvings, w.C);
    for (double v : w.x) out += fmt::format(",{:.17g}", v);
    for (double v : w.t) out += fmt::format(",{:.17g}", v);
    for (const auto& c : w.checks) out += fmt::format(",{:.17g}", c.ratio);
    out += w.accepted ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace denjoy::witness
