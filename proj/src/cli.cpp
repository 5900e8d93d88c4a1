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

#include "denjoy/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "denjoy/dynamics.hpp"
#include "denjoy/error.hpp"
#include "denjoy/moduli.hpp"
#include "denjoy/selection.hpp"
#include "denjoy/witness.hpp"

#ifndef DENJOY_VERSION
#define DENJOY_VERSION "0.0.0"
#endif

namespace denjoy::cli {

using nlohmann::json;
namespace dyn = denjoy::dynamics;
namespace sel = denjoy::selection;
namespace wit = denjoy::witness;
using moduli::Modulus;
using moduli::ModulusFamily;

namespace {

// ---------------------------------------------------------------------------
// config helpers

json hoelder(double a) { return {{"kind", "hoelder"}, {"alpha", a}}; }

const json& need(const json& cfg, const char* key) {
  if (!cfg.contains(key)) throw Error(ErrorCode::ParseError, fmt::format("missing '{}'", key));
  return cfg.at(key);
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return need(cfg, key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("'{}': {}", key, e.what()));
  }
}

template <class T>
std::optional<T> get_opt(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  return get<T>(cfg, key);
}

std::vector<Modulus> moduli_list(const json& arr, const char* what) {
  if (!arr.is_array()) throw Error(ErrorCode::ParseError, fmt::format("'{}' must be a list", what));
  std::vector<Modulus> out;
  for (const auto& m : arr) out.push_back(moduli::modulus_from_json(m));
  return out;
}

ModulusFamily family_of(const json& cfg) {
  auto ms = moduli_list(need(cfg, "family"), "family");
  if (ms.size() < 2) {
    throw Error(ErrorCode::ParseError, "family needs at least two members");
  }
  return ModulusFamily(std::move(ms));
}

// Stage wrapper: keeps the error code, prefixes the message.
template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    throw Error(e.code(), fmt::format("stage {}: {}", name, msg));
  }
}

void ensure(bool ok, const std::string& what) {
  if (!ok) throw InvariantViolation(what);
}

std::string describe_family(const ModulusFamily& f) {
  std::string s;
  for (std::size_t k = 0; k < f.size(); ++k) s += (k ? ", " : "") + f[k].describe();
  return s;
}

json interval_json(const dyn::Interval& I) { return {{"left", I.left}, {"length", I.length}}; }

// ---------------------------------------------------------------------------
// generators

struct Generator {
  dyn::CircleDiffeo map;
  std::optional<dyn::DenjoyMap> denjoy;  // kept for "gap" intervals
  dyn::CircleDiffeo rotation_model;      // minimal model used for covering
};

Generator load_generator(const json& j) {
  bool is_denjoy = false;
  try {
    is_denjoy = j.at("kind").get<std::string>() == "denjoy";
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (is_denjoy) {
    auto d = dyn::denjoy_construct(dyn::denjoy_params_from_json(j));
    auto model = dyn::CircleDiffeo::rotation(d.params.alpha);
    auto map = d.map;
    return {map, std::move(d), model};
  }
  auto map = dyn::diffeo_from_json(j);
  if (const auto* r = std::get_if<dyn::Rotation>(&map.kind())) {
    return {map, std::nullopt, dyn::CircleDiffeo::rotation(r->rho)};
  }
  const double rho = dyn::rotation_number(map, 100000).estimate;
  return {map, std::nullopt, dyn::CircleDiffeo::rotation(rho)};
}

std::vector<Generator> load_generators(const json& arr) {
  if (!arr.is_array() || arr.empty()) {
    throw Error(ErrorCode::ParseError, "'generators' must be a nonempty list");
  }
  std::vector<Generator> out;
  for (const auto& g : arr) out.push_back(load_generator(g));
  return out;
}

std::vector<dyn::CircleDiffeo> maps_of(const std::vector<Generator>& gs) {
  std::vector<dyn::CircleDiffeo> out;
  for (const auto& g : gs) out.push_back(g.map);
  return out;
}

dyn::Interval load_interval(const json& j, const std::vector<Generator>& gens) {
  if (j.contains("gap")) {
    if (!gens.front().denjoy) {
      throw Error(ErrorCode::ParseError, "'gap' needs a denjoy first generator");
    }
    const auto n = get<std::int64_t>(j, "gap");
    const auto& d = *gens.front().denjoy;
    if (n < -d.params.levels || n > d.params.levels) {
      throw Error(ErrorCode::ParseError, fmt::format("gap {} not inserted", n));
    }
    const auto& g = d.interval(n);
    return {g.left, g.length};
  }
  return {get<double>(j, "left"), get<double>(j, "length")};
}

dyn::Word load_word(const json& arr, std::size_t generators) {
  dyn::Word w;
  try {
    for (const auto& l : arr) {
      const auto g = l.at(0).get<std::size_t>();
      if (g >= generators) throw Error(ErrorCode::ParseError, "word letter out of range");
      w.push_back({g, l.at(1).get<std::int64_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return w;
}

// ---------------------------------------------------------------------------
// JSON dump with 17 significant digits

void dump_into(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + json(it.key()).dump() + ": ";
        dump_into(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) {
        return e.is_primitive();
      });
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",";
        first = false;
        if (!flat) out += "\n" + inner;
        dump_into(e, out, indent + 1);
      }
      if (!flat) out += "\n" + pad;
      out += "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? fmt::format("{:.17g}", v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

// ---------------------------------------------------------------------------
// commands

Report run_moduli(const json& cfg) {
  const auto fam = family_of(cfg);
  Report r;
  json& res = r.result;
  res["family"] = describe_family(fam);
  const auto vt = moduli::VanishingTest{get<double>(need(cfg, "vanishing"), "threshold"),
                                        get<int>(need(cfg, "vanishing"), "depth")};
  res["vanishing_defect"] = fam.has_vanishing_defect(vt);

  std::string defect_csv = "t,defect\n";
  json defect = json::array();
  for (double t : moduli::dyadic_grid(1, get<int>(cfg, "defect_depth"))) {
    if (t > fam.domain_cap()) continue;
    const double v = fam.defect(t);
    defect.push_back({t, v});
    defect_csv += fmt::format("{:.17g},{:.17g}\n", t, v);
  }
  res["defect"] = defect;
  res["submultiplicativity_constant"] = stage("submultiplicativity", [&] {
    return moduli::submultiplicativity_constant(fam, get<int>(cfg, "submultiplicativity_depth"));
  });

  const double delta = std::min(get<double>(cfg, "comparison_delta"), fam.domain_cap());
  json cmp = json::array();
  for (std::size_t i = 0; i < fam.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < fam.size(); ++j) {
      row.push_back(std::string(moduli::to_string(moduli::compare(fam[i], fam[j], delta))));
    }
    cmp.push_back(row);
  }
  res["comparability"] = cmp;

  const auto& cc = need(cfg, "consistency");
  bool powers = true;
  for (const auto& m : fam.members()) {
    powers = powers && (std::holds_alternative<moduli::Hoelder>(m.kind()) ||
                        std::holds_alternative<moduli::HoelderLog>(m.kind()));
  }
  if (powers) {
    const auto seq = stage("consistency", [&] {
      return moduli::consistency_sequences(fam, get<double>(cc, "base"), get<int>(cc, "M"));
    });
    res["consistency"] = {{"first_m", seq.first_m},
                          {"last_m", seq.last_m()},
                          {"verified_constant", seq.verified_constant},
                          {"tail_stable", seq.tail_stable}};
    r.tables.emplace_back("consistency", moduli::consistency_csv(seq));
  } else {
    res["consistency"] = nullptr;
  }
  r.tables.emplace_back("defect", defect_csv);
  return r;
}

sel::LengthArray random_lengths(const json& rc, std::uint64_t seed) {
  const auto rows = get<std::size_t>(rc, "rows");
  const auto cols = get<std::size_t>(rc, "cols");
  const double mass = get<double>(rc, "mass");
  if (rows == 0 || cols == 0) throw Error(ErrorCode::ParseError, "empty random lengths");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(rows * cols);
  double sum = 0.0;
  for (auto& x : v) sum += (x = u(rng));
  for (auto& x : v) x *= mass / sum;
  return sel::LengthArray({rows, cols}, std::move(v));
}

Report run_select(const json& cfg) {
  const auto l = cfg.at("lengths").is_null()
                     ? random_lengths(need(cfg, "random"), get<std::uint64_t>(cfg, "seed"))
                     : sel::length_array_from_json(cfg.at("lengths"));
  if (l.dimension() != 2) throw Error(ErrorCode::ParseError, "select needs a 2d array");
  const auto w = moduli::modulus_from_json(need(cfg, "modulus"));
  const auto sums = sel::column_sums(l, w);
  const auto choice = stage("select_column", [&] { return sel::select_column(l, w); });
  Report r;
  json& res = r.result;
  res["dims"] = l.dims();
  res["total_mass"] = l.total_mass();
  res["column_sums"] = sums;
  res["selected"] = {{"index", choice.index}, {"sum", choice.sum}, {"bound", choice.bound}};
  const auto n = static_cast<double>(l.dims()[1]);
  json adm = json::array();
  std::string csv = "A,count,required\n";
  for (double A : get<std::vector<double>>(cfg, "A")) {
    const auto cols = stage("admissible_columns", [&] { return sel::admissible_columns(l, w, A); });
    const auto need_count = static_cast<std::size_t>(std::ceil((1.0 - 1.0 / A) * n - 1e-12));
    adm.push_back({{"A", A},
                   {"columns", cols},
                   {"count", cols.size()},
                   {"required", need_count},
                   {"ok", cols.size() >= need_count}});
    csv += fmt::format("{:.17g},{},{}\n", A, cols.size(), need_count);
    ensure(cols.size() >= need_count, "admissible column count below the density bound");
  }
  res["admissible"] = adm;
  std::string col_csv = "k,sum\n";
  for (std::size_t k = 0; k < sums.size(); ++k) col_csv += fmt::format("{},{:.17g}\n", k, sums[k]);
  r.tables.emplace_back("columns", col_csv);
  r.tables.emplace_back("admissible", csv);
  r.tables.emplace_back("lengths", sel::to_csv(l));
  return r;
}

json path_summary(const sel::LatticePath& p) {
  return {{"points", p.points.size()}, {"weight", p.weight},
          {"end", p.points.empty() ? json(nullptr) : json(p.points.back())}};
}

void check_path(const sel::LatticePath& p, const sel::LengthArray& l, const ModulusFamily& f,
                const char* what) {
  ensure(sel::path_is_valid(p), fmt::format("{} path is not a unit-step path", what));
  const double again = sel::recompute_weight(p, l, f);
  ensure(std::abs(again - p.weight) <= 1e-12 * std::max(1.0, std::abs(p.weight)),
         fmt::format("{} path weight {} does not recompute ({})", what, p.weight, again));
}

Report run_path(const json& cfg) {
  const auto fam = family_of(cfg);
  const std::size_t d = fam.size();
  const auto& sc = need(cfg, "schedule");
  const auto mode = get<std::string>(cfg, "mode");
  if (mode != "2d" && mode != "general" && mode != "both") {
    throw Error(ErrorCode::ParseError, "mode must be 2d, general or both");
  }
  const bool want_2d = mode != "general";
  const bool want_general = mode != "2d";
  if (want_2d && d != 2) throw Error(ErrorCode::ParseError, "the 2d builder needs two members");

  const auto seq = stage("consistency", [&] {
    return moduli::consistency_sequences(fam, get<double>(sc, "base"), get<int>(sc, "M"));
  });
  std::optional<sel::StaircaseSchedule> stair;
  std::optional<sel::RectangleSchedule> rect;
  std::vector<std::size_t> dims(d, 1);
  if (want_2d) {
    stair = stage("staircase", [&] { return sel::staircase_from_consistency(seq); });
    for (const auto& R : stair->rectangles()) {
      dims[0] = std::max(dims[0], static_cast<std::size_t>(R.i_hi + 1));
      dims[1] = std::max(dims[1], static_cast<std::size_t>(R.j_hi + 1));
    }
  }
  if (want_general) {
    const auto steps = get<std::size_t>(sc, "steps");
    rect = stage("schedule", [&] { return sel::rectangle_schedule_from_consistency(seq, steps); });
    for (std::size_t k = 0; k < d; ++k) {
      dims[k] = std::max(dims[k], static_cast<std::size_t>(rect->x(k, rect->steps()) + 1));
    }
  }
  const auto& lc = need(cfg, "lengths");
  const auto l = lc.contains("product")
                     ? sel::LengthArray::product(dims, get<double>(lc.at("product"), "c"),
                                                 get<std::vector<double>>(lc.at("product"),
                                                                          "ratios"))
                     : sel::length_array_from_json(lc);

  Report r;
  json& res = r.result;
  res["dims"] = l.dims();
  res["total_mass"] = l.total_mass();
  if (stair) {
    const auto p = stage("build_path_2d", [&] { return sel::build_path_2d(l, *stair, fam); });
    check_path(p.path, l, fam, "2d");
    const auto traced = stage("trace_lines", [&] { return sel::trace_lines(p.lines, l, fam, 1); });
    json terms = json::array();
    for (const auto& t : p.terms) {
      terms.push_back({{"rectangle", t.rect.number},
                       {"vertical", t.rect.vertical},
                       {"X", t.rect.X()},
                       {"Y", t.rect.Y()},
                       {"selected", t.selected},
                       {"line_sum", t.line_sum},
                       {"bound", t.bound},
                       {"ratio", t.ratio},
                       {"defect", t.defect}});
    }
    res["path_2d"] = path_summary(p.path);
    res["path_2d"]["line_sum_total"] = p.line_sum_total;
    res["path_2d"]["bound_sum"] = p.bound_sum;
    res["path_2d"]["terms"] = terms;
    res["path_2d"]["traced_weight"] = traced.weight;
    res["path_2d"]["traced_difference"] = std::abs(traced.weight - p.path.weight);
    ensure(p.path.weight <= p.bound_sum * (1 + 1e-12), "2d weight exceeds the bound-term sum");
    r.tables.emplace_back("path_2d", sel::to_csv(p.path));
  }
  if (rect) {
    const auto g = stage("build_path_general", [&] { return sel::build_path_general(l, *rect, fam); });
    check_path(g.path, l, fam, "general");
    res["path_general"] = path_summary(g.path);
    res["path_general"]["budgets"] = sel::budget_report(g);
    r.tables.emplace_back("path_general", sel::to_csv(g.path));
  }
  return r;
}

Report run_denjoy(const json& cfg) {
  const auto p = dyn::denjoy_params_from_json(cfg);
  const auto d = stage("denjoy_construct", [&] { return dyn::denjoy_construct(p); });
  Report r;
  json& res = r.result;
  res["alpha"] = p.alpha.to_string();
  res["alpha_value"] = p.alpha.value();
  res["alpha_bits"] = p.alpha.bits();
  res["c"] = d.c;
  res["total_mass"] = d.total_mass;
  res["min_spacing"] = d.min_spacing;
  res["window"] = d.window;
  res["pieces"] = d.pieces;

  std::vector<dyn::Interval> gaps;
  for (const auto& g : d.intervals) gaps.push_back({g.left, g.length});
  res["intervals_disjoint"] = dyn::pairwise_disjoint(gaps);
  ensure(res["intervals_disjoint"].get<bool>(), "inserted intervals overlap");

  const auto n = get<std::int64_t>(cfg, "rotation_iterations");
  const auto rot = dyn::rotation_number(d.map, n);
  res["rotation"] = {{"n", n},
                     {"estimate", rot.estimate},
                     {"error_bound", rot.error_bound},
                     {"distance_to_alpha", std::abs(rot.estimate - p.alpha.value())}};

  const auto steps = get<std::int64_t>(cfg, "orbit_steps");
  const std::vector<dyn::CircleDiffeo> gens{d.map};
  const auto orbit = dyn::word_orbit(gens, dyn::Word(static_cast<std::size_t>(steps), {0, 1}),
                                     {d.interval(0).left, d.interval(0).length});
  double mass = 0.0;
  for (const auto& I : orbit.images) mass += I.length;
  res["orbit"] = {{"steps", steps},
                  {"wandering", orbit.wandering},
                  {"mass", mass},
                  {"max_integral_error", orbit.max_integral_error}};

  const auto& fit = need(cfg, "fit");
  const int depth = get<int>(fit, "depth");
  const int k_lo = get<int>(fit, "k_lo"), k_hi = get<int>(fit, "k_hi");
  const auto samples = dyn::derivative_samples(d, depth);
  const auto grid = moduli::dyadic_grid(k_lo, k_hi);
  const auto w = moduli::empirical_modulus(samples, grid, true);
  const double expo = moduli::fit_hoelder_exponent(w, std::ldexp(1.0, -k_hi), std::ldexp(1.0, -k_lo));
  res["fit"] = {{"samples", samples.size()}, {"exponent", expo}};

  std::string mod_csv = "t,omega\n";
  for (double t : grid) mod_csv += fmt::format("{:.17g},{:.17g}\n", t, w(t));
  std::string gap_csv = "n,theta,left,length\n";
  for (const auto& g : d.intervals) {
    gap_csv += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", g.n, g.theta, g.left, g.length);
  }
  r.tables.emplace_back("intervals", gap_csv);
  r.tables.emplace_back("derivative_modulus", mod_csv);
  return r;
}

Report run_rotnum(const json& cfg) {
  const auto g = load_generator(need(cfg, "map"));
  const auto n = get<std::int64_t>(cfg, "n");
  Report r;
  json est = json::array();
  std::string csv = "x0,estimate,error_bound\n";
  double lo = INFINITY, hi = -INFINITY;
  for (double x0 : get<std::vector<double>>(cfg, "x0")) {
    const auto e = stage("rotation_number", [&] { return dyn::rotation_number(g.map, n, x0); });
    est.push_back({{"x0", x0}, {"estimate", e.estimate}, {"error_bound", e.error_bound}});
    csv += fmt::format("{:.17g},{:.17g},{:.17g}\n", x0, e.estimate, e.error_bound);
    lo = std::min(lo, e.estimate);
    hi = std::max(hi, e.estimate);
  }
  r.result["map"] = g.map.describe();
  r.result["n"] = n;
  r.result["estimates"] = est;
  r.result["spread"] = est.empty() ? 0.0 : hi - lo;
  r.result["agree_within_2_over_n"] = est.empty() || hi - lo <= 2.0 / static_cast<double>(n);
  r.tables.emplace_back("estimates", csv);
  return r;
}

std::string steps_csv(const dyn::FixedPointCertificate& c) {
  std::string csv = "j,image_I,image_I1,image_I2,ratio_1,ratio_2,A_ok,B_ok\n";
  for (std::size_t j = 0; j < c.steps.size(); ++j) {
    const auto& s = c.steps[j];
    csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", j, s.image_I,
                       s.image_I1, s.image_I2, s.ratio_1, s.ratio_2, int(s.A_ok), int(s.B_ok));
  }
  return csv;
}

// Independent check of a located fixed point.
void check_certificate(const dyn::FixedPointCertificate& c,
                       std::span<const dyn::CircleDiffeo> gens) {
  if (c.outcome != dyn::CertificateOutcome::Fired) return;
  ensure(c.fixed_point.has_value(), "fired certificate without a fixed point");
  double x = *c.fixed_point;
  for (const auto& l : c.word) x = gens[l.generator].apply_power(x, l.power);
  const double disp = x - static_cast<double>(c.shift) - *c.fixed_point;
  ensure(std::abs(disp) <= 1e-9, fmt::format("fixed point displacement {}", disp));
  for (const auto& s : c.steps) {
    ensure(s.ratio_1 <= c.exp_2CS * (1 + 1e-12) && s.ratio_2 <= c.exp_2CS * (1 + 1e-12),
           "distortion above exp(2CS) on a fired certificate");
  }
}

double omega_max(const std::vector<dyn::CircleDiffeo>& maps, const std::vector<Modulus>& ws,
                 std::size_t grid, json& detail) {
  double C = 0.0;
  detail = json::array();
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto oc = stage("omega_constant", [&] { return dyn::omega_constant(maps[k], ws[k], grid); });
    detail.push_back({{"generator", k}, {"value", oc.value}, {"min_derivative", oc.min_derivative}});
    C = std::max(C, oc.value);
  }
  return C;
}

Report run_certify(const json& cfg) {
  const auto gens = load_generators(need(cfg, "generators"));
  const auto maps = maps_of(gens);
  const auto ws = moduli_list(need(cfg, "moduli"), "moduli");
  if (ws.size() != maps.size()) throw Error(ErrorCode::ParseError, "one modulus per generator");
  const auto word = load_word(need(cfg, "word"), maps.size());
  const auto I = load_interval(need(cfg, "interval"), gens);

  Report r;
  json& res = r.result;
  json omega;
  const auto C_cfg = get_opt<double>(cfg, "C");
  const double C = C_cfg ? *C_cfg : omega_max(maps, ws, get<std::size_t>(cfg, "omega_grid"), omega);
  const auto S_cfg = get_opt<double>(cfg, "S");
  const double S = S_cfg ? *S_cfg : stage("word_weight", [&] {
    return dyn::word_weight(word, maps, ws, I);
  });
  const auto cert = stage("certificate", [&] {
    return dyn::fixed_point_certificate(word, maps, I, C, S, get<std::size_t>(cfg, "samples"));
  });
  check_certificate(cert, maps);
  ensure(std::abs(cert.L - I.length / (2.0 * std::exp(2.0 * cert.C * cert.S))) <= 1e-15 * I.length,
         "L does not recompute");
  res["C_source"] = C_cfg ? "config" : "omega_constant";
  res["S_source"] = S_cfg ? "config" : "word_weight";
  if (!C_cfg) res["omega_constants"] = omega;
  res["certificate"] = dyn::to_json(cert);
  r.tables.emplace_back("steps", steps_csv(cert));
  return r;
}

Report run_witness(const json& cfg) {
  const auto fam = family_of(cfg);
  const auto& gc = need(cfg, "grid");
  const auto grid = wit::geometric_grid(get<double>(gc, "hi"), get<double>(gc, "lo"),
                                        get<std::size_t>(gc, "n"));
  wit::WitnessOptions opt;
  opt.C = get_opt<double>(cfg, "C");
  opt.tau = get_opt<std::vector<double>>(cfg, "tau");
  opt.vanishing = {get<double>(need(cfg, "vanishing"), "threshold"),
                   get<int>(need(cfg, "vanishing"), "depth")};
  opt.comparison_delta = get<double>(cfg, "comparison_delta");
  opt.max_halvings = get<int>(cfg, "max_halvings");
  const auto mode = get<std::string>(cfg, "mode");
  std::vector<wit::ChainMode> modes;
  if (mode == "literal" || mode == "both") modes.push_back(wit::ChainMode::Literal);
  if (mode == "per-stage" || mode == "both") modes.push_back(wit::ChainMode::PerStage);
  if (modes.empty()) throw Error(ErrorCode::ParseError, "mode must be literal, per-stage or both");

  Report r;
  for (auto m : modes) {
    opt.mode = m;
    const auto rep = stage("witness", [&] { return wit::witness_general(fam, grid, opt); });
    std::size_t accepted = 0;
    double worst = 0.0;
    int halvings = 0;
    for (const auto& w : rep.witnesses) {
      accepted += w.accepted;
      halvings = std::max(halvings, w.halvings);
      for (const auto& c : wit::recheck(fam, w, opt.slack)) {
        worst = std::max(worst, c.ratio);
        if (w.accepted) ensure(c.ok, "accepted witness fails its recheck");
      }
    }
    const std::string key(wit::to_string(m));
    r.result[key] = wit::to_json(rep);
    r.result[key]["summary"] = {{"grid_points", rep.witnesses.size()},
                                {"accepted", accepted},
                                {"max_ratio", worst},
                                {"max_halvings", halvings},
                                {"C", rep.C},
                                {"shrinking", rep.shrinking}};
    r.tables.emplace_back("witness_" + key, wit::witness_csv(rep));
  }
  return r;
}

Report run_pipeline(const json& cfg) {
  const auto gens = stage("generators", [&] { return load_generators(need(cfg, "generators")); });
  const auto maps = maps_of(gens);
  const auto fam = family_of(cfg);
  const std::size_t d = fam.size();
  if (maps.size() != d) throw Error(ErrorCode::ParseError, "one family member per generator");
  const auto I = load_interval(need(cfg, "interval"), gens);
  const auto& sc = need(cfg, "schedule");
  const auto kind = get<std::string>(sc, "kind");

  Report r;
  json& res = r.result;
  res["interval"] = interval_json(I);

  // schedule first: it fixes the rectangle of lengths
  std::optional<sel::RectangleSchedule> rect;
  std::vector<std::size_t> dims;
  if (kind == "consistency") {
    const auto seq = stage("consistency", [&] {
      return moduli::consistency_sequences(fam, get<double>(sc, "base"), get<int>(sc, "M"));
    });
    rect = stage("schedule", [&] {
      return sel::rectangle_schedule_from_consistency(seq, get<std::size_t>(sc, "steps"));
    });
    for (std::size_t k = 0; k < d; ++k) {
      dims.push_back(static_cast<std::size_t>(rect->x(k, rect->steps()) + 1));
    }
  } else if (kind == "axis") {
    dims = get<std::vector<std::size_t>>(cfg, "dims");
    if (dims.size() != d) throw Error(ErrorCode::ParseError, "dims must have one entry per member");
  } else {
    throw Error(ErrorCode::ParseError, "schedule kind must be axis or consistency");
  }

  const auto l = stage("lengths", [&] { return dyn::rectangle_lengths(maps, dims, I); });
  const auto [mn, mx] = std::minmax_element(l.values().begin(), l.values().end());
  res["lengths"] = {{"dims", l.dims()},
                    {"total", l.total_mass()},
                    {"min", *mn},
                    {"max", *mx},
                    {"all_equal", *mx - *mn <= 1e-12 * *mx}};
  if (l.dimension() == 2) r.tables.emplace_back("lengths", sel::to_csv(l));

  sel::LatticePath path;
  if (rect) {
    const auto g = stage("build_path", [&] { return sel::build_path_general(l, *rect, fam); });
    res["path"] = path_summary(g.path);
    res["path"]["budgets"] = sel::budget_report(g);
    path = g.path;
  } else {
    sel::LineSegment seg{0, sel::Index(d, 0), 0, static_cast<long long>(dims[0]) - 1};
    const std::vector<sel::LineSegment> lines{seg};
    path = stage("build_path", [&] { return sel::trace_lines(lines, l, fam); });
    res["path"] = path_summary(path);
  }
  check_path(path, l, fam, "pipeline");
  r.tables.emplace_back("path", sel::to_csv(path));
  const double S = path.weight;
  res["S"] = S;

  // the path read as a word, one unit letter per step
  dyn::Word word;
  for (std::size_t i = 0; i + 1 < path.points.size(); ++i) word.push_back({path.xi[i], 1});
  const auto& cc = need(cfg, "certificate");
  json omega;
  const auto C_cfg = get_opt<double>(cc, "C");
  const double C =
      C_cfg ? *C_cfg : omega_max(maps, fam.members(), get<std::size_t>(cc, "omega_grid"), omega);
  res["C"] = C;
  if (!C_cfg) res["omega_constants"] = omega;
  res["word_weight"] = stage("word_weight", [&] {
    return dyn::word_weight(word, maps, fam.members(), I);
  });

  const auto samples = get<std::size_t>(cc, "samples");
  json outcomes = json::array();
  std::size_t fired = 0, not_met = 0, violated = 0;
  std::string csv = "prefix,outcome,L,final_left,final_length,fixed_point\n";
  json first_fired = nullptr;
  for (std::size_t n = 1; n <= word.size(); ++n) {
    const dyn::Word prefix(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(n));
    const auto cert = stage("certificate", [&] {
      return dyn::fixed_point_certificate(prefix, maps, I, C, S, samples);
    });
    check_certificate(cert, maps);
    const auto name = std::string(dyn::to_string(cert.outcome));
    outcomes.push_back(name);
    switch (cert.outcome) {
      case dyn::CertificateOutcome::Fired: ++fired; break;
      case dyn::CertificateOutcome::HypothesisNotMet: ++not_met; break;
      case dyn::CertificateOutcome::DistortionViolated: ++violated; break;
    }
    if (cert.outcome == dyn::CertificateOutcome::Fired && first_fired.is_null()) {
      first_fired = dyn::to_json(cert);
      first_fired["prefix"] = n;
    }
    csv += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{}\n", n, name, cert.L,
                       cert.final_image.left, cert.final_image.length,
                       cert.fixed_point ? fmt::format("{:.17g}", *cert.fixed_point) : "");
  }
  res["certificates"] = {{"prefixes", word.size()},
                         {"fired", fired},
                         {"hypothesis_not_met", not_met},
                         {"distortion_violated", violated},
                         {"outcomes", outcomes},
                         {"first_fired", first_fired}};
  r.tables.emplace_back("certificates", csv);

  const auto& cv = need(cfg, "cover");
  if (get<bool>(cv, "enabled")) {
    const auto max_n = get<std::int64_t>(cv, "max_n");
    const auto N = stage("cover", [&] {
      return dyn::minimal_cover_N(gens.front().rotation_model, I, max_n);
    });
    res["cover"] = {{"model", gens.front().rotation_model.describe()}, {"N", N}};
  } else {
    res["cover"] = nullptr;
  }
  return r;
}

json defaults_for(std::string_view c) {
  if (c == "moduli") {
    return {{"family", json::array({hoelder(0.6), hoelder(0.7)})},
            {"consistency", {{"base", 2.0}, {"M", 30}}},
            {"defect_depth", 40},
            {"vanishing", {{"threshold", 1e-3}, {"depth", 40}}},
            {"comparison_delta", 1e-3},
            {"submultiplicativity_depth", 20},
            {"seed", 0}};
  }
  if (c == "select") {
    return {{"lengths", nullptr},
            {"random", {{"rows", 8}, {"cols", 10}, {"mass", 1.0}}},
            {"modulus", hoelder(0.5)},
            {"A", {1.5, 2.0, 5.0}},
            {"seed", 1}};
  }
  if (c == "path") {
    return {{"family", json::array({hoelder(0.6), hoelder(0.7)})},
            {"schedule", {{"base", 2.0}, {"M", 6}, {"steps", 4}}},
            {"lengths", {{"product", {{"c", 0.25}, {"ratios", {0.5, 0.5}}}}}},
            {"mode", "both"},
            {"seed", 0}};
  }
  if (c == "denjoy") {
    return {{"alpha", "sqrt2-1"},
            {"tau", 0.5},
            {"levels", 1000},
            {"mass", 0.5},
            {"offset", 2.0},
            {"rotation_iterations", 100000},
            {"orbit_steps", 1000},
            {"fit", {{"depth", 20}, {"k_lo", 5}, {"k_hi", 20}}},
            {"seed", 0}};
  }
  if (c == "rotnum") {
    return {{"map", {{"kind", "analytic"}, {"alpha", 0.3}, {"eps", 0.05}}},
            {"n", 100000},
            {"x0", {0.0, 0.37}},
            {"seed", 0}};
  }
  if (c == "certify") {
    return {{"generators", json::array({{{"kind", "analytic"}, {"alpha", 0.0}, {"eps", -0.1}}})},
            {"word", json::array({json::array({0, 12})})},
            {"interval", {{"left", 0.01}, {"length", 0.02}}},
            {"moduli", json::array({{{"kind", "identity"}}})},
            {"C", nullptr},
            {"S", nullptr},
            {"omega_grid", 10000},
            {"samples", 65},
            {"seed", 0}};
  }
  if (c == "witness") {
    return {{"family", json::array({hoelder(0.4), hoelder(0.4), hoelder(0.4)})},
            {"grid", {{"hi", 1e-3}, {"lo", 1e-9}, {"n", 20}}},
            {"tau", nullptr},
            {"mode", "literal"},
            {"C", nullptr},
            {"vanishing", {{"threshold", 1e-3}, {"depth", 200}}},
            {"comparison_delta", 1e-3},
            {"max_halvings", 60},
            {"seed", 0}};
  }
  if (c == "pipeline") {
    return {{"generators",
             json::array({{{"kind", "denjoy"}, {"alpha", "sqrt2-1"}, {"tau", 0.5}, {"levels", 300}},
                          {{"kind", "rotation"}, {"rho", "0/1"}}})},
            {"interval", {{"gap", 0}}},
            {"family", json::array({hoelder(0.5), hoelder(0.5)})},
            {"schedule", {{"kind", "axis"}, {"base", 2.0}, {"M", 6}, {"steps", 4}}},
            {"dims", {200, 1}},
            {"certificate", {{"C", nullptr}, {"omega_grid", 2000}, {"samples", 33}}},
            {"cover", {{"enabled", true}, {"max_n", 1000000}}},
            {"seed", 0}};
  }
  throw Error(ErrorCode::ParseError, fmt::format("unknown command '{}'", c));
}

// Keys whose values are free-form sub-documents and are replaced whole.
bool opaque_key(const std::string& k) {
  return k == "family" || k == "generators" || k == "moduli" || k == "lengths" || k == "map" ||
         k == "modulus" || k == "interval" || k == "word";
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"moduli", "select",  "path",    "denjoy",
                                          "rotnum", "certify", "witness", "pipeline"};
  return c;
}

std::string_view version() { return DENJOY_VERSION; }

json default_config(std::string_view command) { return defaults_for(command); }

json merge_config(const json& defaults, const json& user) {
  if (!user.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!defaults.contains(it.key())) {
      throw Error(ErrorCode::ParseError, fmt::format("unknown config key '{}'", it.key()));
    }
    const auto& def = defaults.at(it.key());
    if (def.is_object() && it.value().is_object() && !opaque_key(it.key())) {
      out[it.key()] = merge_config(def, it.value());
    } else {
      out[it.key()] = it.value();
    }
  }
  return out;
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr)) {
    throw InvariantViolation("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Report run_command(std::string_view command, const json& config) {
  if (command == "moduli") return run_moduli(config);
  if (command == "select") return run_select(config);
  if (command == "path") return run_path(config);
  if (command == "denjoy") return run_denjoy(config);
  if (command == "rotnum") return run_rotnum(config);
  if (command == "certify") return run_certify(config);
  if (command == "witness") return run_witness(config);
  if (command == "pipeline") return run_pipeline(config);
  throw Error(ErrorCode::ParseError, fmt::format("unknown command '{}'", command));
}

json envelope(std::string_view command, const json& config, const Report& r) {
  return {{"command", std::string(command)},
          {"version", std::string(version())},
          {"config_hash", config_hash(config)},
          {"config", config},
          {"result", r.result}};
}

std::string dump_json(const json& j) {
  std::string out;
  dump_into(j, out, 0);
  out += "\n";
  return out;
}

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ParseError ? kExitConfig : kExitPrecondition;
  } catch (const InvariantViolation& e) {
    err << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Moduli, lattice paths, circle maps and consistency witnesses"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  struct Flags {
    std::string config, out, format = "json";
    std::optional<std::uint64_t> seed;
    bool print_config = false;
  };
  Flags f;
  for (const auto& name : commands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--out", f.out, "directory for report.json and CSV tables");
    sub->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", f.seed, "seed (overrides the config)");
    sub->add_flag("--print-config", f.print_config, "print the merged config and exit");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json user = json::object();
    if (!f.config.empty()) {
      std::ifstream in(f.config);
      if (!in) throw Error(ErrorCode::ParseError, "cannot read '" + f.config + "'");
      try {
        user = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
      }
    }
    json cfg = merge_config(default_config(command), user);
    if (f.seed) cfg["seed"] = *f.seed;
    if (f.print_config) {
      out << dump_json(cfg);
      return kExitOk;
    }
    const auto report = run_command(command, cfg);
    const auto env = envelope(command, cfg, report);
    if (!f.out.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(f.out);
      std::ofstream(fs::path(f.out) / "report.json") << dump_json(env);
      for (const auto& [name, text] : report.tables) {
        std::ofstream(fs::path(f.out) / (name + ".csv")) << text;
      }
      out << "wrote " << (fs::path(f.out) / "report.json").string() << "\n";
      return kExitOk;
    }
    if (f.format == "csv" && !report.tables.empty()) {
      out << "# command=" << command << " version=" << version()
          << " config_hash=" << config_hash(cfg) << "\n";
      out << report.tables.front().second;
    } else {
      out << dump_json(env);
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace denjoy::cli
