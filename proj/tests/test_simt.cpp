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

#include <doctest.h>

#include <random>

#include "halfkern/kernels.hpp"
#include "halfkern/simt.hpp"
#include "test_support.hpp"

using namespace halfkern;

namespace {

CooGraph chain_of_edges(std::size_t edges) {
  // Vertex 0 has `edges` out-neighbours spread over rows 0..edges/3.
  std::vector<VertexId> rows(edges);
  std::vector<VertexId> cols(edges);
  const std::size_t n = edges + 1;
  for (std::size_t e = 0; e < edges; ++e) {
    rows[e] = static_cast<VertexId>(e / 3);
    cols[e] = static_cast<VertexId>(e % 3);
  }
  return CooGraph(std::move(rows), std::move(cols), n);
}

}  // namespace

TEST_CASE("edge-parallel planning") {
  const Schedule s = plan_edge_parallel(chain_of_edges(300), 128, 4);
  REQUIRE(s.num_warps() == 3);
  CHECK(s.warps[0] == WarpRange{0, 128});
  CHECK(s.warps[1] == WarpRange{128, 256});
  CHECK(s.warps[2] == WarpRange{256, 300});
  CHECK(s.num_ctas() == 1);

  CHECK(plan_edge_parallel(CooGraph({}, {}, 3)).num_warps() == 0);
  CHECK_THROWS_AS(plan_edge_parallel(chain_of_edges(10), 32), ConfigError);
  CHECK_THROWS_AS(plan_edge_parallel(chain_of_edges(10), 65), ConfigError);
  CHECK_NOTHROW(plan_edge_parallel(chain_of_edges(10), 64));
}

TEST_CASE("vertex-parallel grouping") {
  std::vector<EdgeId> offsets{0, 70, 70, 75};
  offsets.resize(71, 75);
  std::vector<VertexId> cols;
  for (int i = 0; i < 70; ++i) cols.push_back(static_cast<VertexId>(i));
  for (int i = 0; i < 5; ++i) cols.push_back(static_cast<VertexId>(i));
  const CsrGraph g(offsets, cols);
  const Schedule s = plan_vertex_parallel_grouped(g);
  REQUIRE(s.num_warps() == 4);
  CHECK(s.warps[0].size() == 32);
  CHECK(s.warps[1].size() == 32);
  CHECK(s.warps[2].size() == 6);
  CHECK(s.warps[3].size() == 5);
  CHECK_NOTHROW(validate_schedule(s, csr_to_coo(g)));
}

TEST_CASE("schedules partition the edges") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const CooGraph g = testing::random_graph(rng, 1 + rng() % 60, 0.3);
    for (std::size_t chunk : {64, 128, 200}) {
      const Schedule s = plan_edge_parallel(g, chunk, 1 + rng() % 8);
      EdgeId next = 0;
      for (const WarpRange& w : s.warps) {
        REQUIRE(w.begin == next);
        next = w.end;
      }
      REQUIRE(next == g.num_edges());
      REQUIRE_NOTHROW(validate_schedule(s, g));
    }
    const CsrGraph csr = coo_to_csr(g);
    const Schedule grouped = plan_vertex_parallel_grouped(csr);
    std::size_t nonzero_rows = 0;
    bool small = true;
    for (std::size_t v = 0; v < csr.num_vertices(); ++v) {
      nonzero_rows += csr.degree(static_cast<VertexId>(v)) > 0;
      small = small && csr.degree(static_cast<VertexId>(v)) <= 32;
    }
    if (small) REQUIRE(grouped.num_warps() == nonzero_rows);
    REQUIRE_NOTHROW(validate_schedule(grouped, g));
  }
}

TEST_CASE("corrupt schedules are rejected") {
  const CooGraph g = chain_of_edges(200);
  Schedule s = plan_edge_parallel(g, 64, 2);
  s.warps[1].begin += 1;
  CHECK_THROWS_AS(validate_schedule(s, g), InvariantError);
  Schedule short_one = plan_edge_parallel(g, 64, 2);
  short_one.warps.pop_back();
  CHECK_THROWS_AS(validate_schedule(short_one, g), InvariantError);
}

TEST_CASE("sub-warp layout") {
  CHECK(subwarp_layout(32, VectorWidth::kHalf2).subwarps == 2);
  CHECK(subwarp_layout(16, VectorWidth::kHalf2).subwarps == 4);
  CHECK(subwarp_layout(64, VectorWidth::kHalf2).subwarps == 1);
  for (std::size_t f : {4, 8, 16, 32, 64}) {
    const SubWarpLayout l = subwarp_layout(f, VectorWidth::kHalf2);
    CHECK(l.subwarps * l.threads_per_edge == kWarpSize);
    CHECK(l.feature_chunks == 1);
  }
  const SubWarpLayout odd = subwarp_layout(6, VectorWidth::kHalf2);
  CHECK(odd.threads_per_edge == 4);
  CHECK(odd.subwarps == 8);
  const SubWarpLayout wide = subwarp_layout(256, VectorWidth::kHalf2);
  CHECK(wide.subwarps == 1);
  CHECK(wide.feature_chunks == 4);
  CHECK_THROWS_AS(subwarp_layout(30, VectorWidth::kHalf8), ConfigError);
}

TEST_CASE("load width, reduction rounds, intra-CTA rounds") {
  CHECK(warp_load_bytes(VectorWidth::kHalf) == 64);
  CHECK(warp_load_bytes(VectorWidth::kHalf2) == 128);
  CHECK(warp_load_bytes(VectorWidth::kHalf4) == 256);
  CHECK(warp_load_bytes(VectorWidth::kHalf8) == 512);

  CHECK(sddmm_reduction_rounds(32, VectorWidth::kHalf2) == 4);
  CHECK(sddmm_reduction_rounds(32, VectorWidth::kHalf8) == 2);
  CHECK(sddmm_reduction_rounds(8, VectorWidth::kHalf8) == 0);
  CHECK_THROWS_AS(sddmm_reduction_rounds(30, VectorWidth::kHalf4), ConfigError);

  CHECK(intra_cta_rounds(8) == 3);
  CHECK(intra_cta_rounds(1) == 0);
  CHECK(intra_cta_rounds(4) == 2);
  CHECK_THROWS_AS(intra_cta_rounds(6), ConfigError);
  CHECK_THROWS_AS(intra_cta_rounds(0), ConfigError);

  CHECK(parse_vector_width("half8") == VectorWidth::kHalf8);
  CHECK_THROWS_AS(parse_vector_width("half16"), ConfigError);
}

TEST_CASE("metrics merge and JSON round trip") {
  KernelMetrics a{10, 1280, 128, 3, 4, 2, 0, 1};
  const KernelMetrics b{5, 640, 128, 2, 4, 3, 7, 1};
  a.merge(b);
  CHECK(a.load_transactions == 15);
  CHECK(a.load_bytes == 1920);
  CHECK(a.barrier_waits == 5);
  CHECK(a.shuffle_rounds == 4);
  CHECK(a.intra_cta_rounds == 3);
  CHECK(a.atomic_writes == 7);
  CHECK(a.staging_writes == 2);
  const nlohmann::json j = a;
  CHECK(j.size() == 8);
  CHECK(j.get<KernelMetrics>() == a);
}

TEST_CASE("half to half2 doubles bytes per load and halves transactions") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    // Edge counts that are multiples of the chunk keep every warp full.
    const std::size_t rows = 8 + rng() % 8;
    std::vector<VertexId> r;
    std::vector<VertexId> c;
    for (VertexId v = 0; v < rows; ++v) {
      for (VertexId u = 0; u < 64; ++u) {
        r.push_back(v);
        c.push_back(u);
      }
    }
    const CooGraph g(r, c, 64);
    const Schedule s = plan_edge_parallel(g, 128, 4);
    for (std::size_t f : {16, 32, 64}) {
      const HalfTensor x(64, f, half_constants::kOne);
      KernelOptions narrow;
      narrow.width = VectorWidth::kHalf;
      KernelOptions wide;
      wide.width = VectorWidth::kHalf2;
      const auto m1 = spmm_v(g, x, s, {}, narrow).metrics;
      const auto m2 = spmm_v(g, x, s, {}, wide).metrics;
      REQUIRE(m2.coalesced_bytes_per_warp_load == 2 * m1.coalesced_bytes_per_warp_load);
      REQUIRE(2 * m2.load_transactions == m1.load_transactions);
      REQUIRE(m2.load_bytes == m1.load_bytes);
    }
  }
}

TEST_CASE("metrics are deterministic") {
  std::mt19937_64 rng(2);
  const CooGraph g = testing::random_graph(rng, 50, 0.3);
  const Schedule s = plan_edge_parallel(g, 64, 4);
  const HalfTensor x(50, 32, half_constants::kOne);
  KernelOptions threaded;
  threaded.threads = 4;
  const auto a = spmm_v(g, x, s, {}).metrics;
  const auto b = spmm_v(g, x, s, {}, threaded).metrics;
  CHECK(a == b);
  const auto d1 = sddmm(g, x, x, s, VectorWidth::kHalf4).metrics;
  const auto d2 = sddmm(g, x, x, s, VectorWidth::kHalf4).metrics;
  CHECK(d1 == d2);
}
