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

// Brute-force oracles for line sequences: lines as explicit point sets and
// full enumeration of line tuples.

#pragma once

#include <optional>
#include <random>
#include <set>
#include <vector>

#include "denjoy/selection.hpp"

namespace test_oracle {

using denjoy::selection::AdmissibleSets;
using denjoy::selection::Index;
using denjoy::selection::RectangleSchedule;

// Points of line `idx` at level m; the face coordinates are decoded in
// increasing coordinate order, last one fastest.
inline std::set<Index> line_points(const RectangleSchedule& s, std::size_t m,
                                   std::size_t idx) {
  const std::size_t d = s.dimension();
  const std::size_t r = (m - 1) % d;
  Index face(d, 0);
  for (std::size_t k = d; k-- > 0;) {
    if (k == r) continue;
    const auto base = static_cast<std::size_t>(s.x(k, m) + 1);
    face[k] = static_cast<long long>(idx % base);
    idx /= base;
  }
  std::set<Index> pts;
  for (long long c = 0; c <= s.x(r, m); ++c) {
    face[r] = c;
    pts.insert(face);
  }
  return pts;
}

inline bool meet(const std::set<Index>& a, const std::set<Index>& b) {
  for (const auto& p : a) {
    if (b.count(p)) return true;
  }
  return false;
}

inline bool verify_sequence(const RectangleSchedule& s,
                            const std::vector<std::size_t>& lines) {
  if (lines.size() != s.steps()) return false;
  if (lines.empty()) return true;
  const Index origin(s.dimension(), 0);
  auto prev = line_points(s, 1, lines[0]);
  if (!prev.count(origin)) return false;
  for (std::size_t m = 2; m <= lines.size(); ++m) {
    auto cur = line_points(s, m, lines[m - 1]);
    if (!meet(prev, cur)) return false;
    prev = std::move(cur);
  }
  return true;
}

// Every tuple in the product of the admissible sets.
inline std::optional<std::vector<std::size_t>> enumerate(const RectangleSchedule& s,
                                                         const AdmissibleSets& adm) {
  const std::size_t M = s.steps();
  if (M == 0) return std::vector<std::size_t>{};
  for (const auto& a : adm) {
    if (a.empty()) return std::nullopt;
  }
  std::vector<std::size_t> pos(M, 0);
  while (true) {
    std::vector<std::size_t> tuple(M);
    for (std::size_t m = 0; m < M; ++m) tuple[m] = adm[m][pos[m]];
    if (verify_sequence(s, tuple)) return tuple;
    std::size_t k = M;
    while (k-- > 0) {
      if (++pos[k] < adm[k].size()) break;
      pos[k] = 0;
    }
    if (k == static_cast<std::size_t>(-1)) return std::nullopt;
  }
}

inline RectangleSchedule random_schedule(std::mt19937_64& rng, std::size_t d,
                                         std::size_t M, std::size_t max_lines) {
  std::uniform_int_distribution<long long> inc(1, 2);
  while (true) {
    std::vector<std::vector<long long>> x(M + 1, std::vector<long long>(d, 0));
    for (std::size_t m = 1; m <= M; ++m) {
      x[m] = x[m - 1];
      x[m][(m - 1) % d] += inc(rng);
    }
    RectangleSchedule s(x);
    bool ok = true;
    for (std::size_t m = 1; m <= M; ++m) ok = ok && s.line_count(m) <= max_lines;
    if (ok) return s;
  }
}

inline AdmissibleSets random_subsets(std::mt19937_64& rng, const RectangleSchedule& s,
                                     double keep) {
  std::bernoulli_distribution b(keep);
  AdmissibleSets adm;
  for (std::size_t m = 1; m <= s.steps(); ++m) {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < s.line_count(m); ++i) {
      if (b(rng)) v.push_back(i);
    }
    adm.push_back(v);
  }
  return adm;
}

}  // namespace test_oracle
