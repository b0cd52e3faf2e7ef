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

// Counting model of the warp -> sub-warp -> CTA hierarchy. Nothing here
// measures time: schedules say which warp owns which non-zeros, and
// KernelMetrics count the quantities the kernel designs trade against each
// other (coalesced load width, barriers, shuffle and shared-memory rounds,
// atomic and staging writes).

#ifndef HALFKERN_SIMT_HPP_
#define HALFKERN_SIMT_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "halfkern/sparse.hpp"

namespace halfkern {

inline constexpr std::size_t kWarpSize = 32;
inline constexpr std::size_t kMinWarpChunk = 64;
inline constexpr std::size_t kNeighborGroup = 32;

enum class VectorWidth : std::uint8_t { kHalf = 1, kHalf2 = 2, kHalf4 = 4, kHalf8 = 8 };

constexpr std::size_t lanes(VectorWidth w) { return static_cast<std::size_t>(w); }
std::string_view to_string(VectorWidth w);
VectorWidth parse_vector_width(std::string_view s);

enum class Paradigm : std::uint8_t { kEdgeParallel, kVertexParallelGrouped };

std::string_view to_string(Paradigm p);

/// Half-open range of non-zero indices (COO order) owned by one warp.
struct WarpRange {
  EdgeId begin = 0;
  EdgeId end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const WarpRange&, const WarpRange&) = default;
};

struct Schedule {
  Paradigm paradigm = Paradigm::kEdgeParallel;
  std::size_t warp_chunk = 128;
  std::size_t warps_per_cta = 4;
  std::vector<WarpRange> warps;

  std::size_t num_warps() const { return warps.size(); }
  std::size_t num_ctas() const { return (warps.size() + warps_per_cta - 1) / warps_per_cta; }
  std::size_t cta_first_warp(std::size_t cta) const { return cta * warps_per_cta; }
  std::size_t cta_end_warp(std::size_t cta) const;
};

/// ceil(|E| / warp_chunk) warps over contiguous non-zero ranges; a CTA
/// boundary every `warps_per_cta` warps. Throws ConfigError when
/// warp_chunk < 64 or is odd.
Schedule plan_edge_parallel(const CooGraph& g, std::size_t warp_chunk = 128,
                            std::size_t warps_per_cta = 4);

/// One warp per group of at most 32 neighbours of a single row.
Schedule plan_vertex_parallel_grouped(const CsrGraph& g, std::size_t warps_per_cta = 4);

/// Throws InvariantError if the schedule does not partition the edges of
/// `g` in order, or (grouped paradigm) a warp spans two rows.
void validate_schedule(const Schedule& s, const CooGraph& g);

/// How a warp's 32 threads split across edges for a feature length.
struct SubWarpLayout {
  std::size_t feature_length = 0;
  VectorWidth width = VectorWidth::kHalf2;
  /// Threads cooperating on one edge's feature vector, rounded up to a
  /// power of two so sub-warps tile the warp.
  std::size_t threads_per_edge = 0;
  /// Edges processed side by side per warp iteration.
  std::size_t subwarps = 0;
  /// Warp passes over the feature vector when it is wider than one warp
  /// load (feature_length > 32 * lanes).
  std::size_t feature_chunks = 0;
};

SubWarpLayout subwarp_layout(std::size_t feature_length, VectorWidth width);

/// Bytes moved by one fully coalesced warp-wide load of `width` elements.
std::size_t warp_load_bytes(VectorWidth width);

/// Shuffle-tree depth that reduces one SDDMM dot product across threads.
std::size_t sddmm_reduction_rounds(std::size_t feature_length, VectorWidth width);

/// Shared-memory exchange rounds to merge `subwarps_in_cta` partials.
/// Requires a power of two.
std::size_t intra_cta_rounds(std::size_t subwarps_in_cta);

std::size_t ceil_log2(std::size_t n);

struct KernelMetrics {
  std::uint64_t load_transactions = 0;
  std::uint64_t load_bytes = 0;
  std::uint64_t coalesced_bytes_per_warp_load = 0;
  std::uint64_t barrier_waits = 0;
  /// Depth of the per-non-zero shuffle reduction tree.
  std::uint64_t shuffle_rounds = 0;
  /// Depth of the intra-CTA partial merge.
  std::uint64_t intra_cta_rounds = 0;
  std::uint64_t atomic_writes = 0;
  std::uint64_t staging_writes = 0;

  /// Sums counters; depth fields take the maximum.
  KernelMetrics& merge(const KernelMetrics& other);

  friend bool operator==(const KernelMetrics&, const KernelMetrics&) = default;
};

void to_json(nlohmann::json& j, const KernelMetrics& m);
void from_json(const nlohmann::json& j, KernelMetrics& m);

}  // namespace halfkern

#endif  // HALFKERN_SIMT_HPP_
