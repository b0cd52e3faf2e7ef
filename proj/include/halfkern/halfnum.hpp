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

#ifndef HALFKERN_HALFNUM_HPP_
#define HALFKERN_HALFNUM_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace halfkern {

/// IEEE 754 binary16 value stored as its raw bit pattern.
///
/// Conversions from wider types round to nearest, ties to even, keep
/// subnormals and saturate to +/-INF once the rounded magnitude exceeds
/// 65504. Equality compares bit patterns, so +0 != -0 and a NaN equals a
/// NaN with the same payload.
class Half {
 public:
  constexpr Half() = default;

  static constexpr Half from_bits(std::uint16_t bits) {
    Half h;
    h.bits_ = bits;
    return h;
  }

  constexpr std::uint16_t bits() const { return bits_; }

  constexpr bool sign() const { return (bits_ & 0x8000u) != 0; }
  constexpr bool is_nan() const {
    return (bits_ & 0x7c00u) == 0x7c00u && (bits_ & 0x03ffu) != 0;
  }
  constexpr bool is_inf() const { return (bits_ & 0x7fffu) == 0x7c00u; }
  constexpr bool is_finite() const { return (bits_ & 0x7c00u) != 0x7c00u; }

  friend constexpr bool operator==(Half, Half) = default;

 private:
  std::uint16_t bits_ = 0;
};

static_assert(sizeof(Half) == 2);

namespace half_constants {
inline constexpr Half kZero = Half::from_bits(0x0000);
inline constexpr Half kOne = Half::from_bits(0x3c00);
inline constexpr Half kMax = Half::from_bits(0x7bff);        // 65504
inline constexpr Half kMinSubnormal = Half::from_bits(0x0001);  // 2^-24
inline constexpr Half kInf = Half::from_bits(0x7c00);
inline constexpr Half kNegInf = Half::from_bits(0xfc00);
inline constexpr Half kQuietNaN = Half::from_bits(0x7e00);
inline constexpr double kMaxValue = 65504.0;
}  // namespace half_constants

// Conversions. Widening is exact; narrowing is round-to-nearest-even.
Half to_half(double x);
Half to_half(float x);
float to_float(Half h);
double to_double(Half h);

// Scalar arithmetic, every result rounded once to binary16.
Half half_add(Half a, Half b);
Half half_sub(Half a, Half b);
Half half_mul(Half a, Half b);
Half half_div(Half a, Half b);
/// a*b + c with a single rounding.
Half half_fma(Half a, Half b, Half c);
Half half_neg(Half a);
/// IEEE maxNum-style: a NaN operand loses to a number.
Half half_max(Half a, Half b);
Half half_exp(Half a);
Half half_sqrt(Half a);

/// Two binary16 values handled as one 4-byte unit.
struct alignas(4) Half2 {
  Half lo;
  Half hi;
  friend constexpr bool operator==(const Half2&, const Half2&) = default;
};

/// A group of `Pairs` half2 lanes. Half4 and Half8 carry no wider
/// accumulator: every operation is lane-wise half2 arithmetic.
template <std::size_t Pairs>
struct alignas(4 * Pairs) HalfPack {
  static constexpr std::size_t kPairs = Pairs;
  static constexpr std::size_t kLanes = 2 * Pairs;
  std::array<Half2, Pairs> pair{};
  friend constexpr bool operator==(const HalfPack&, const HalfPack&) = default;
};

using Half4 = HalfPack<2>;
using Half8 = HalfPack<4>;

static_assert(sizeof(Half2) == 4);
static_assert(sizeof(Half4) == 8);
static_assert(sizeof(Half8) == 16);

Half2 half2_add(Half2 a, Half2 b);
Half2 half2_mul(Half2 a, Half2 b);
Half2 half2_fma(Half2 a, Half2 b, Half2 c);
/// lo + hi, rounded once.
Half lane_sum(Half2 v);

template <std::size_t P>
HalfPack<P> pack_add(const HalfPack<P>& a, const HalfPack<P>& b) {
  HalfPack<P> out;
  for (std::size_t i = 0; i < P; ++i) out.pair[i] = half2_add(a.pair[i], b.pair[i]);
  return out;
}

template <std::size_t P>
HalfPack<P> pack_mul(const HalfPack<P>& a, const HalfPack<P>& b) {
  HalfPack<P> out;
  for (std::size_t i = 0; i < P; ++i) out.pair[i] = half2_mul(a.pair[i], b.pair[i]);
  return out;
}

template <std::size_t P>
HalfPack<P> pack_fma(const HalfPack<P>& a, const HalfPack<P>& b,
                     const HalfPack<P>& c) {
  HalfPack<P> out;
  for (std::size_t i = 0; i < P; ++i) {
    out.pair[i] = half2_fma(a.pair[i], b.pair[i], c.pair[i]);
  }
  return out;
}

/// Loads 2*P consecutive halves starting at `src[0]`.
template <std::size_t P>
HalfPack<P> load_pack(std::span<const Half> src) {
  HalfPack<P> out;
  for (std::size_t i = 0; i < P; ++i) out.pair[i] = Half2{src[2 * i], src[2 * i + 1]};
  return out;
}

template <std::size_t P>
void store_pack(const HalfPack<P>& v, std::span<Half> dst) {
  for (std::size_t i = 0; i < P; ++i) {
    dst[2 * i] = v.pair[i].lo;
    dst[2 * i + 1] = v.pair[i].hi;
  }
}

/// Splits two edge weights loaded as one half2 into broadcast copies, so
/// each multiplies both halves of a vertex-feature half2.
std::pair<Half2, Half2> mirror_edge_feature(Half2 w);

/// Element arithmetic used by the kernels, so the same code runs in
/// binary16 and in float32 reference mode.
template <class T>
struct Arith;

template <>
struct Arith<Half> {
  static constexpr bool kIsHalf = true;
  static Half zero() { return half_constants::kZero; }
  static Half one() { return half_constants::kOne; }
  static Half from_float(float x) { return to_half(x); }
  static float to_float(Half x) { return halfkern::to_float(x); }
  static Half add(Half a, Half b) { return half_add(a, b); }
  static Half sub(Half a, Half b) { return half_sub(a, b); }
  static Half mul(Half a, Half b) { return half_mul(a, b); }
  static Half div(Half a, Half b) { return half_div(a, b); }
  static Half fma(Half a, Half b, Half c) { return half_fma(a, b, c); }
  static Half max(Half a, Half b) { return half_max(a, b); }
  static Half exp(Half a) { return half_exp(a); }
  static bool is_inf(Half a) { return a.is_inf(); }
  static bool is_nan(Half a) { return a.is_nan(); }
  static bool same(Half a, Half b) { return a == b; }
};

template <>
struct Arith<float> {
  static constexpr bool kIsHalf = false;
  static float zero() { return 0.0f; }
  static float one() { return 1.0f; }
  static float from_float(float x) { return x; }
  static float to_float(float x) { return x; }
  static float add(float a, float b) { return a + b; }
  static float sub(float a, float b) { return a - b; }
  static float mul(float a, float b) { return a * b; }
  static float div(float a, float b) { return a / b; }
  static float fma(float a, float b, float c);
  static float max(float a, float b);
  static float exp(float a);
  static bool is_inf(float a);
  static bool is_nan(float a);
  static bool same(float a, float b);
};

}  // namespace halfkern

#endif  // HALFKERN_HALFNUM_HPP_
