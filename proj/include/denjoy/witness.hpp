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

// Points witnessing the consistency condition for a comparable family with
// vanishing, submultiplicative defect.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "denjoy/moduli.hpp"

namespace denjoy::witness {

using moduli::Modulus;
using moduli::ModulusFamily;

struct PhiResult {
  double y = 1.0;
  // w1(x) < w1(x) w2(x) had no root in (0, 1]; y is then 1
  bool saturated = false;
  double residual = 0.0;  // |w1(x y) - w1(x) w2(x)|
};

/// sup{y in [0, 1] : w1(x y) <= w1(x) w2(x)} by bisection down to adjacent
/// doubles.
PhiResult phi(double x, const Modulus& w1, const Modulus& w2);

/// Stage equations of the chain.  Literal: every stage solves
/// prod_i w_i(x_k) = w_k(x_1 t_2).  PerStage: stage k >= 3 uses
/// w_k(x_1 t_{k-1}) instead.
enum class ChainMode { Literal, PerStage };
std::string_view to_string(ChainMode m);

struct WitnessOptions {
  std::optional<double> C;  // default: submultiplicativity constant of the defect
  moduli::VanishingTest vanishing{1e-3, 200};
  ChainMode mode = ChainMode::Literal;
  std::optional<std::vector<double>> tau;  // lower Hoelder exponents, member order
  double comparison_delta = 1e-3;          // comparability / tau checks on (0, delta)
  int max_halvings = 60;
  double slack = 1e-10;  // relative slack on every final check
};

struct FinalCheck {
  double lhs = 0.0;    // w_k(x_1 ... x_d)
  double rhs = 0.0;    // C^{d-1} prod_i w_i(x_k)
  double ratio = 0.0;  // lhs / rhs
  bool ok = false;
};

struct GuardEval {
  std::size_t stage = 0;  // index j + 1 of the solved unknown
  std::string id;         // "t_bound" or "t2_bound"
  double lhs = 0.0, rhs = 0.0;
  bool ok = false;
};

struct ConsistencyWitness {
  std::size_t dimension = 0;
  double x1_requested = 0.0;
  int halvings = 0;
  ChainMode mode = ChainMode::Literal;
  std::vector<std::size_t> permutation;  // chain slot -> member index
  std::vector<double> chain_x;           // x in chain order
  std::vector<double> x;                 // x in member order
  std::vector<double> t;                 // t_2 .. t_d, t_k = x_k t_{k-1} for k >= 3
  std::vector<double> targets;           // right side of each stage equation
  double C = 1.0;
  std::vector<FinalCheck> checks;        // member order
  std::vector<GuardEval> guards;
  double balance_lhs = 0.0, balance_rhs = 0.0;
  bool balance_ok = false;
  double phi_residual = 0.0;
  bool accepted = false;
};

struct TauReport {
  bool supplied = false;
  double sum = 0.0;
  bool sum_ok = false;
  double worst_ratio = 0.0;  // min over grid and k of w_k(x) / x^{tau_k}
  bool bound_ok = false;     // worst_ratio >= 1
};

struct WitnessReport {
  std::size_t dimension = 0;
  double C = 1.0;
  std::vector<std::size_t> permutation;
  TauReport tau;
  std::vector<ConsistencyWitness> witnesses;
  // phi (d = 2) or max_k x_k (d >= 3) non-increasing along the grid
  bool shrinking = false;
  // d >= 3: largest grid x with w_d(y) <= y^{1/d} for every grid y <= x,
  // taken as the "x small enough" threshold of the balance check
  std::optional<double> small_x_threshold;
};

/// d = 2.  For each grid x: (x, phi(x)) with w1(x y) = w1(x) w2(x) by construction and w2(x y) <= C w1(y) w2(y)
/// checked against C.  Throws PreconditionViolated without a vanishing
/// defect and Eq2Failed when the inequality fails.
WitnessReport witness_2d(const Modulus& w1, const Modulus& w2, std::span<const double> x_grid,
                         const WitnessOptions& opt = {});

/// Sequential chain for d >= 3 (d = 2 is forwarded to witness_2d).  The
/// family is permuted into w_d <= w_1 <= ... <= w_{d-1} near 0.  x_d is the
/// largest value U 2^{-i/4}, U = t_2 / (x_2 ... x_{d-1}), passing every
/// final check.  Guard or final-check failures halve x_1 up to
/// max_halvings times before GuardFailed.
WitnessReport witness_general(const ModulusFamily& family, std::span<const double> x1_grid,
                              const WitnessOptions& opt = {});

/// Recomputes every final check of `w` from its member-order x.
std::vector<FinalCheck> recheck(const ModulusFamily& family, const ConsistencyWitness& w,
                                double slack = 1e-10);

/// Decreasing grid x_i = hi (lo/hi)^{i/(n-1)}.
std::vector<double> geometric_grid(double hi, double lo, std::size_t n);

nlohmann::json to_json(const ConsistencyWitness& w);
nlohmann::json to_json(const WitnessReport& r);
/// One row per grid point.
std::string witness_csv(const WitnessReport& r);

}  // namespace denjoy::witness
