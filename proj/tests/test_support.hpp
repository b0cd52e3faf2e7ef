// Copyright 2026 The halfkern Authors.
//
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

// Test oracles and generators shared by the unit and acceptance suites.
// Nothing here calls into the library's numeric code.

#ifndef HALFKERN_TESTS_TEST_SUPPORT_HPP_
#define HALFKERN_TESTS_TEST_SUPPORT_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "halfkern/sparse.hpp"

namespace halfkern::testing {

/// Value of a binary16 pattern, decoded from its fields.
inline double decode_half(std::uint16_t bits) {
  const int sign = bits >> 15;
  const int exponent = (bits >> 10) & 0x1f;
  const int mantissa = bits & 0x3ff;
  double v;
  if (exponent == 0x1f) {
    v = mantissa == 0 ? std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::quiet_NaN();
  } else if (exponent == 0) {
    v = std::ldexp(static_cast<double>(mantissa), -24);
  } else {
    v = std::ldexp(static_cast<double>(1024 + mantissa), exponent - 25);
  }
  return sign ? -v : v;
}

/// Nearest-value search over the ordered positive patterns. Ties go to
/// the even pattern; 65520 and above land in the INF bucket (0x7c00).
inline std::uint16_t reference_to_half(double x) {
  if (std::isnan(x)) return 0x7e00;
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(x);
  auto value = [](std::uint32_t b) { return b == 0x7c00 ? 65536.0 : decode_half(b); };
  if (a >= 65536.0) return sign | 0x7c00;
  std::uint32_t lo = 0;
  std::uint32_t hi = 0x7c00;
  while (hi - lo > 1) {
    const std::uint32_t mid = (lo + hi) / 2;
    if (value(mid) <= a) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double dlo = a - value(lo);
  const double dhi = value(hi) - a;
  std::uint32_t pick;
  if (dlo < dhi) {
    pick = lo;
  } else if (dhi < dlo) {
    pick = hi;
  } else {
    pick = (lo % 2 == 0) ? lo : hi;
  }
  return static_cast<std::uint16_t>(sign | pick);
}

/// Every binary16 value is a multiple of 2^-24, every product of two a
/// multiple of 2^-48, and all magnitudes stay below 2^33; scaled by 2^48
/// they are exact 128-bit integers.
using Scaled = __int128;

inline Scaled scaled_half(std::uint16_t bits) {
  const int exponent = (bits >> 10) & 0x1f;
  const Scaled mantissa = bits & 0x3ff;
  Scaled v = exponent == 0 ? mantissa << 24 : (mantissa + 1024) << (exponent - 1 + 24);
  return (bits & 0x8000) ? -v : v;
}

/// Round-to-nearest-even of an exact scaled value, same bucket rules as
/// reference_to_half.
inline std::uint16_t reference_round_scaled(Scaled x) {
  const std::uint16_t sign = x < 0 ? 0x8000 : 0;
  const Scaled a = x < 0 ? -x : x;
  auto value = [](std::uint32_t b) {
    return b == 0x7c00 ? Scaled{1} << 64 : scaled_half(static_cast<std::uint16_t>(b));
  };
  if (a >= value(0x7c00)) return sign | 0x7c00;
  std::uint32_t lo = 0;
  std::uint32_t hi = 0x7c00;
  while (hi - lo > 1) {
    const std::uint32_t mid = (lo + hi) / 2;
    if (value(mid) <= a) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const Scaled dlo = a - value(lo);
  const Scaled dhi = value(hi) - a;
  const std::uint32_t pick = dlo < dhi ? lo : (dhi < dlo ? hi : (lo % 2 == 0 ? lo : hi));
  return static_cast<std::uint16_t>(sign | pick);
}

/// Random simple directed graph with the given edge density.
inline CooGraph random_graph(std::mt19937_64& rng, std::size_t n, double density) {
  std::bernoulli_distribution keep(density);
  std::vector<VertexId> rows;
  std::vector<VertexId> cols;
  for (VertexId r = 0; r < n; ++r) {
    for (VertexId c = 0; c < n; ++c) {
      if (keep(rng)) {
        rows.push_back(r);
        cols.push_back(c);
      }
    }
  }
  return CooGraph(std::move(rows), std::move(cols), n);
}

/// Star: vertex 0 aggregates from vertices 1..leaves.
inline CooGraph star_graph(std::size_t leaves) {
  std::vector<VertexId> rows(leaves, 0);
  std::vector<VertexId> cols(leaves);
  for (std::size_t i = 0; i < leaves; ++i) cols[i] = static_cast<VertexId>(i + 1);
  return CooGraph(std::move(rows), std::move(cols), leaves + 1);
}

template <class T, class Gen>
Tensor<T> random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, Gen gen) {
  Tensor<T> t(rows, cols);
  for (T& v : t.data()) v = gen(rng);
  return t;
}

/// Dense float64 SpMM: out[r] = s_out[r] * sum_e w_e * s_in[c] * x[c].
inline std::vector<double> dense_spmm(const CooGraph& g, const std::vector<double>* w,
                                      const std::vector<double>& x, std::size_t f,
                                      const std::vector<double>* s_in,
                                      const std::vector<double>* s_out) {
  std::vector<double> out(g.num_vertices() * f, 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::size_t r = g.rows()[e];
    const std::size_t c = g.cols()[e];
    const double we = w != nullptr ? (*w)[e] : 1.0;
    const double si = s_in != nullptr ? (*s_in)[c] : 1.0;
    for (std::size_t k = 0; k < f; ++k) out[r * f + k] += we * si * x[c * f + k];
  }
  if (s_out != nullptr) {
    for (std::size_t r = 0; r < g.num_vertices(); ++r) {
      for (std::size_t k = 0; k < f; ++k) out[r * f + k] *= (*s_out)[r];
    }
  }
  return out;
}

inline double relative_error(double got, double want) {
  const double denom = std::max(std::fabs(want), 1e-12);
  return std::fabs(got - want) / denom;
}

}  // namespace halfkern::testing

#endif  // HALFKERN_TESTS_TEST_SUPPORT_HPP_
