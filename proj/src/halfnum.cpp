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

#include "halfkern/halfnum.hpp"

#include <bit>
#include <cmath>

namespace halfkern {
namespace {

// Rounds `x` to binary16. `tail` is the sign of (exact - x) when `x` is
// itself a rounded approximation of the exact value; it only matters when
// `x` sits exactly on a binary16 rounding midpoint.
std::uint16_t round_to_half_bits(double x, int tail) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);
  const int biased = static_cast<int>((bits >> 52) & 0x7ff);
  const std::uint64_t frac = bits & ((std::uint64_t{1} << 52) - 1);

  if (biased == 0x7ff) {
    return frac != 0 ? static_cast<std::uint16_t>(sign | 0x7e00u)
                     : static_cast<std::uint16_t>(sign | 0x7c00u);
  }
  // Double subnormals and zero are far below half the smallest subnormal.
  if (biased == 0) return sign;

  const int exponent = biased - 1023;
  if (exponent > 15) return static_cast<std::uint16_t>(sign | 0x7c00u);

  const std::uint64_t significand = frac | (std::uint64_t{1} << 52);
  const int target_exponent = exponent < -14 ? -14 : exponent;
  // Bits of `significand` below the binary16 quantum 2^(target_exponent-10).
  const int shift = target_exponent - 10 - (exponent - 52);
  if (shift > 53) return sign;

  std::uint64_t kept = significand >> shift;
  const std::uint64_t rem = significand & ((std::uint64_t{1} << shift) - 1);
  const std::uint64_t halfway = std::uint64_t{1} << (shift - 1);
  // Direction of the exact value's magnitude relative to |x|.
  const int magnitude_tail = (sign != 0) ? -tail : tail;
  if (rem > halfway ||
      (rem == halfway && (magnitude_tail > 0 || (magnitude_tail == 0 && (kept & 1u) != 0)))) {
    ++kept;
  }

  const std::uint64_t encoded =
      (static_cast<std::uint64_t>(target_exponent + 14) << 10) + kept;
  if (encoded >= 0x7c00u) return static_cast<std::uint16_t>(sign | 0x7c00u);
  return static_cast<std::uint16_t>(sign | encoded);
}

float decode(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1fu;
  const std::uint32_t mantissa = h & 0x3ffu;
  if (exponent == 0x1f) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  if (exponent == 0) {
    const float magnitude = static_cast<float>(mantissa) * 0x1p-24f;
    return sign != 0 ? -magnitude : magnitude;
  }
  return std::bit_cast<float>(sign | ((exponent + 112u) << 23) | (mantissa << 13));
}

const std::array<float, 65536>& decode_table() {
  static const std::array<float, 65536> table = [] {
    std::array<float, 65536> t{};
    for (std::uint32_t i = 0; i < t.size(); ++i) t[i] = decode(static_cast<std::uint16_t>(i));
    return t;
  }();
  return table;
}

Half canonical_nan(Half a, Half b) {
  if (a.is_nan()) return Half::from_bits(static_cast<std::uint16_t>(a.bits() | 0x0200u));
  if (b.is_nan()) return Half::from_bits(static_cast<std::uint16_t>(b.bits() | 0x0200u));
  return half_constants::kQuietNaN;
}

}  // namespace

Half to_half(double x) { return Half::from_bits(round_to_half_bits(x, 0)); }

// float -> double is exact, so this is still a single rounding.
Half to_half(float x) { return to_half(static_cast<double>(x)); }

float to_float(Half h) { return decode_table()[h.bits()]; }

double to_double(Half h) { return static_cast<double>(to_float(h)); }

// float carries 24 significand bits >= 2*11 + 2, so one float operation
// followed by rounding to binary16 is correctly rounded for + - * / sqrt.
Half half_add(Half a, Half b) {
  if (a.is_nan() || b.is_nan()) return canonical_nan(a, b);
  return to_half(to_float(a) + to_float(b));
}

Half half_sub(Half a, Half b) {
  if (a.is_nan() || b.is_nan()) return canonical_nan(a, b);
  return to_half(to_float(a) - to_float(b));
}

Half half_mul(Half a, Half b) {
  if (a.is_nan() || b.is_nan()) return canonical_nan(a, b);
  return to_half(to_float(a) * to_float(b));
}

Half half_div(Half a, Half b) {
  if (a.is_nan() || b.is_nan()) return canonical_nan(a, b);
  return to_half(to_float(a) / to_float(b));
}

Half half_fma(Half a, Half b, Half c) {
  if (a.is_nan() || b.is_nan()) return canonical_nan(a, b);
  if (c.is_nan()) return canonical_nan(c, c);
  // The product of two binary16 values is exact in double.
  const double product = to_double(a) * to_double(b);
  const double addend = to_double(c);
  const double sum = product + addend;
  if (!std::isfinite(sum)) return to_half(sum);
  // TwoSum: sum + err == product + addend exactly.
  const double b_virtual = sum - product;
  const double err = (product - (sum - b_virtual)) + (addend - b_virtual);
  const int tail = err > 0 ? 1 : (err < 0 ? -1 : 0);
  return Half::from_bits(round_to_half_bits(sum, tail));
}

Half half_neg(Half a) { return Half::from_bits(static_cast<std::uint16_t>(a.bits() ^ 0x8000u)); }

Half half_max(Half a, Half b) {
  if (a.is_nan()) return b;
  if (b.is_nan()) return a;
  return to_float(b) > to_float(a) ? b : a;
}

Half half_exp(Half a) {
  if (a.is_nan()) return canonical_nan(a, a);
  return to_half(std::exp(to_double(a)));
}

Half half_sqrt(Half a) {
  if (a.is_nan()) return canonical_nan(a, a);
  return to_half(std::sqrt(to_float(a)));
}

Half2 half2_add(Half2 a, Half2 b) { return {half_add(a.lo, b.lo), half_add(a.hi, b.hi)}; }

Half2 half2_mul(Half2 a, Half2 b) { return {half_mul(a.lo, b.lo), half_mul(a.hi, b.hi)}; }

Half2 half2_fma(Half2 a, Half2 b, Half2 c) {
  return {half_fma(a.lo, b.lo, c.lo), half_fma(a.hi, b.hi, c.hi)};
}

Half lane_sum(Half2 v) { return half_add(v.lo, v.hi); }

std::pair<Half2, Half2> mirror_edge_feature(Half2 w) {
  return {Half2{w.lo, w.lo}, Half2{w.hi, w.hi}};
}

float Arith<float>::fma(float a, float b, float c) { return std::fma(a, b, c); }
float Arith<float>::max(float a, float b) { return std::fmax(a, b); }
float Arith<float>::exp(float a) { return std::exp(a); }
bool Arith<float>::is_inf(float a) { return std::isinf(a); }
bool Arith<float>::is_nan(float a) { return std::isnan(a); }
bool Arith<float>::same(float a, float b) {
  return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}

}  // namespace halfkern
