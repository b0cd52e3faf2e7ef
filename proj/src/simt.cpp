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

#include "halfkern/simt.hpp"

#include <algorithm>
#include <bit>

namespace halfkern {

std::string_view to_string(VectorWidth w) {
  switch (w) {
    case VectorWidth::kHalf:
      return "half";
    case VectorWidth::kHalf2:
      return "half2";
    case VectorWidth::kHalf4:
      return "half4";
    case VectorWidth::kHalf8:
      return "half8";
  }
  return "?";
}

VectorWidth parse_vector_width(std::string_view s) {
  if (s == "half") return VectorWidth::kHalf;
  if (s == "half2") return VectorWidth::kHalf2;
  if (s == "half4") return VectorWidth::kHalf4;
  if (s == "half8") return VectorWidth::kHalf8;
  throw ConfigError("unknown vector width '" + std::string(s) + "'");
}

std::string_view to_string(Paradigm p) {
  return p == Paradigm::kEdgeParallel ? "edge_parallel" : "vertex_parallel_grouped";
}

std::size_t Schedule::cta_end_warp(std::size_t cta) const {
  return std::min(warps.size(), (cta + 1) * warps_per_cta);
}

Schedule plan_edge_parallel(const CooGraph& g, std::size_t warp_chunk,
                            std::size_t warps_per_cta) {
  if (warp_chunk < kMinWarpChunk) {
    throw ConfigError("warp chunk " + std::to_string(warp_chunk) +
                      " is below the minimum of 64 edges per warp");
  }
  if (warp_chunk % 2 != 0) throw ConfigError("warp chunk must be even");
  if (warps_per_cta == 0) throw ConfigError("warps per CTA must be positive");

  Schedule s;
  s.paradigm = Paradigm::kEdgeParallel;
  s.warp_chunk = warp_chunk;
  s.warps_per_cta = warps_per_cta;
  for (EdgeId b = 0; b < g.num_edges(); b += warp_chunk) {
    s.warps.push_back({b, std::min<EdgeId>(b + warp_chunk, g.num_edges())});
  }
  return s;
}

Schedule plan_vertex_parallel_grouped(const CsrGraph& g, std::size_t warps_per_cta) {
  if (warps_per_cta == 0) throw ConfigError("warps per CTA must be positive");
  Schedule s;
  s.paradigm = Paradigm::kVertexParallelGrouped;
  s.warp_chunk = kNeighborGroup;
  s.warps_per_cta = warps_per_cta;
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    const EdgeId end = g.offsets()[v + 1];
    for (EdgeId b = g.offsets()[v]; b < end; b += kNeighborGroup) {
      s.warps.push_back({b, std::min<EdgeId>(b + kNeighborGroup, end)});
    }
  }
  return s;
}

void validate_schedule(const Schedule& s, const CooGraph& g) {
  EdgeId expected = 0;
  for (std::size_t w = 0; w < s.warps.size(); ++w) {
    const WarpRange& r = s.warps[w];
    if (r.begin != expected || r.end <= r.begin || r.end > g.num_edges()) {
      throw InvariantError("warp " + std::to_string(w) + " does not continue the edge partition");
    }
    for (EdgeId e = r.begin + 1; e < r.end; ++e) {
      if (g.rows()[e] < g.rows()[e - 1]) {
        throw InvariantError("row ids decrease inside warp " + std::to_string(w));
      }
    }
    if (s.paradigm == Paradigm::kVertexParallelGrouped &&
        (g.rows()[r.begin] != g.rows()[r.end - 1] || r.size() > kNeighborGroup)) {
      throw InvariantError("neighbour group " + std::to_string(w) + " is not a single-row group");
    }
    expected = r.end;
  }
  if (expected != g.num_edges()) throw InvariantError("schedule does not cover every edge");
}

SubWarpLayout subwarp_layout(std::size_t feature_length, VectorWidth width) {
  const std::size_t l = lanes(width);
  if (feature_length == 0 || feature_length % l != 0) {
    throw ConfigError("feature length " + std::to_string(feature_length) +
                      " is not divisible by the " + std::string(to_string(width)) + " lane count");
  }
  SubWarpLayout layout;
  layout.feature_length = feature_length;
  layout.width = width;
  const std::size_t vectors = feature_length / l;
  if (vectors > kWarpSize) {
    layout.threads_per_edge = kWarpSize;
    layout.subwarps = 1;
    layout.feature_chunks = (vectors + kWarpSize - 1) / kWarpSize;
  } else {
    layout.threads_per_edge = std::bit_ceil(vectors);
    layout.subwarps = kWarpSize / layout.threads_per_edge;
    layout.feature_chunks = 1;
  }
  return layout;
}

std::size_t warp_load_bytes(VectorWidth width) { return kWarpSize * 2 * lanes(width); }

std::size_t ceil_log2(std::size_t n) {
  if (n <= 1) return 0;
  return static_cast<std::size_t>(std::bit_width(n - 1));
}

std::size_t sddmm_reduction_rounds(std::size_t feature_length, VectorWidth width) {
  const SubWarpLayout layout = subwarp_layout(feature_length, width);
  return ceil_log2(layout.threads_per_edge);
}

std::size_t intra_cta_rounds(std::size_t subwarps_in_cta) {
  if (!std::has_single_bit(subwarps_in_cta)) {
    throw ConfigError("sub-warp count " + std::to_string(subwarps_in_cta) +
                      " is not a power of two");
  }
  return static_cast<std::size_t>(std::countr_zero(subwarps_in_cta));
}

KernelMetrics& KernelMetrics::merge(const KernelMetrics& o) {
  load_transactions += o.load_transactions;
  load_bytes += o.load_bytes;
  coalesced_bytes_per_warp_load =
      std::max(coalesced_bytes_per_warp_load, o.coalesced_bytes_per_warp_load);
  barrier_waits += o.barrier_waits;
  shuffle_rounds = std::max(shuffle_rounds, o.shuffle_rounds);
  intra_cta_rounds = std::max(intra_cta_rounds, o.intra_cta_rounds);
  atomic_writes += o.atomic_writes;
  staging_writes += o.staging_writes;
  return *this;
}

void to_json(nlohmann::json& j, const KernelMetrics& m) {
  j = nlohmann::json{{"load_transactions", m.load_transactions},
                     {"load_bytes", m.load_bytes},
                     {"coalesced_bytes_per_warp_load", m.coalesced_bytes_per_warp_load},
                     {"barrier_waits", m.barrier_waits},
                     {"shuffle_rounds", m.shuffle_rounds},
                     {"intra_cta_rounds", m.intra_cta_rounds},
                     {"atomic_writes", m.atomic_writes},
                     {"staging_writes", m.staging_writes}};
}

void from_json(const nlohmann::json& j, KernelMetrics& m) {
  j.at("load_transactions").get_to(m.load_transactions);
  j.at("load_bytes").get_to(m.load_bytes);
  j.at("coalesced_bytes_per_warp_load").get_to(m.coalesced_bytes_per_warp_load);
  j.at("barrier_waits").get_to(m.barrier_waits);
  j.at("shuffle_rounds").get_to(m.shuffle_rounds);
  j.at("intra_cta_rounds").get_to(m.intra_cta_rounds);
  j.at("atomic_writes").get_to(m.atomic_writes);
  j.at("staging_writes").get_to(m.staging_writes);
}

}  // namespace halfkern
