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

// Sparse kernels over a Schedule.
//
// SpMM reduction order (both paradigms):
//   1. A warp walks its non-zeros in order. Edges are consumed in batches
//      of `batch_edges` aligned to the warp start (one warp iteration);
//      the products of one row inside a batch are accumulated, the batch
//      partial is degree-scaled (Discretized) and added to the warp's
//      running sum for that row.
//   2. Rows strictly inside a warp are written directly. The first and
//      last row of every warp are merged across the CTA with a pairwise
//      tree (level l joins aligned blocks of 2^l warps).
//   3. The CTA's last row is written to its staging slot; every other row
//      is final and written directly.
//   4. A follow-up pass adds the staged carry-outs, summed in ascending
//      CTA order, to their rows.
//   5. PostScaling applies the degree norm as a separate pass at the end.
// All writes in 2-3 target disjoint rows, so CTAs run in parallel without
// atomics. The atomic model replaces 2-4 with a serialized, ascending-warp
// accumulation of every row partial that is shared between warps.

#ifndef HALFKERN_KERNELS_HPP_
#define HALFKERN_KERNELS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "halfkern/simt.hpp"
#include "halfkern/sparse.hpp"

namespace halfkern {

enum class ScalingMode : std::uint8_t { kPost, kPre, kDiscretized };
enum class Norm : std::uint8_t { kNone, kLeft, kRight, kBoth };
enum class WriteMode : std::uint8_t { kStaging, kAtomicModel };

std::string_view to_string(ScalingMode m);
std::string_view to_string(Norm n);
std::string_view to_string(WriteMode m);
ScalingMode parse_scaling_mode(std::string_view s);
Norm parse_norm(std::string_view s);
WriteMode parse_write_mode(std::string_view s);

struct ReductionMode {
  ScalingMode scaling = ScalingMode::kDiscretized;
  Norm norm = Norm::kRight;
};

/// Per-vertex factors. `input[c]` multiplies feature row c as it is
/// loaded, `output[r]` multiplies the reduction for row r. An empty vector
/// means no scaling on that side.
template <class T>
struct DegreeScaling {
  std::vector<T> input;
  std::vector<T> output;
};

/// 1/deg or 1/sqrt(deg) per vertex, computed in float32 and rounded once.
/// Zero-degree vertices get factor 1.
template <class T>
DegreeScaling<T> degree_scaling(std::span<const std::uint32_t> degrees, Norm norm);

/// Factors for the transposed (backward) pass: input and output swap.
template <class T>
DegreeScaling<T> transpose_scaling(const DegreeScaling<T>& forward);

struct KernelOptions {
  /// Load width used for metrics. Arithmetic is always lane-wise half2.
  VectorWidth width = VectorWidth::kHalf2;
  WriteMode write = WriteMode::kStaging;
  std::size_t threads = 1;
  /// Used when a kernel plans its own schedule (backward, grouped SpMM).
  std::size_t warp_chunk = 128;
  std::size_t warps_per_cta = 4;
};

template <class T>
struct SpmmResult {
  Tensor<T> out;
  KernelMetrics metrics;
  /// Edges reduced together before a Discretized degree scale.
  std::size_t batch_edges = 0;
  /// Largest |weight * scaled feature| seen, in float.
  double max_abs_term = 0.0;

  /// batch_edges * max_abs_term <= 65504: no batch partial can overflow.
  bool batch_bound_holds() const;
};

template <class T>
struct SddmmResult {
  Tensor<T> out;
  KernelMetrics metrics;
};

/// Edges a warp iteration reduces before scaling: the half2 sub-warp count
/// for edge-parallel schedules, the whole group for grouped schedules.
std::size_t batch_edges_for(const Schedule& s, std::size_t feature_length);

/// SpMM with explicit scale factors. `edge_weights` may be null (SpMMv).
template <class T>
SpmmResult<T> spmm_scaled(const CooGraph& g, const Tensor<T>* edge_weights, const Tensor<T>& x,
                          const Schedule& schedule, ScalingMode scaling,
                          const DegreeScaling<T>& factors, const KernelOptions& options = {});

/// Y[r] = scale(sum over (r,c) of W_e[(r,c)] * X[c]).
template <class T>
SpmmResult<T> spmm_ve(const CooGraph& g, const Tensor<T>& edge_weights, const Tensor<T>& x,
                      const Schedule& schedule, ReductionMode mode,
                      const KernelOptions& options = {});

/// spmm_ve with implicit unit edge weights; no edge-feature traffic.
template <class T>
SpmmResult<T> spmm_v(const CooGraph& g, const Tensor<T>& x, const Schedule& schedule,
                     ReductionMode mode, const KernelOptions& options = {});

/// Vertex-parallel SpMM over 32-neighbour groups, one warp per group.
template <class T>
SpmmResult<T> spmm_vertex_grouped(const CsrGraph& g, const Tensor<T>& x, ReductionMode mode,
                                  WriteMode write, const KernelOptions& options = {});

/// W_out[(r,c)] = sum_f X[r,f] * Y[c,f]. Half2 products are lane-summed,
/// then combined by a pairwise tree over half2 positions; the vector
/// width only decides which tree levels run inside a thread and which are
/// shuffle rounds, so the output does not depend on it.
template <class T>
SddmmResult<T> sddmm(const CooGraph& g, const Tensor<T>& x, const Tensor<T>& y,
                     const Schedule& schedule, VectorWidth width);

/// One row's partial reduction.
template <class T>
struct RowPartial {
  VertexId row = 0;
  std::vector<T> value;
};

template <class T>
struct CtaResolution {
  /// Rows whose reduction is complete within the CTA (direct writes).
  std::vector<RowPartial<T>> direct;
  /// Partial for the CTA's last row, destined for the staging buffer.
  RowPartial<T> carry_out;
};

/// Merges the per-warp row partials of one CTA. Each inner vector holds
/// one warp's partials in row order. Throws InvariantError when row ids
/// are not monotone.
template <class T>
CtaResolution<T> resolve_intra_cta(std::span<const std::vector<RowPartial<T>>> warp_partials);

/// One slot per CTA: the row of its last edge and the carried partial.
template <class T>
struct StagingBuffer {
  std::vector<VertexId> row;
  Tensor<T> partial;  // num_ctas x F

  StagingBuffer() = default;
  StagingBuffer(std::size_t num_ctas, std::size_t feature_length)
      : row(num_ctas, 0), partial(num_ctas, feature_length, Arith<T>::zero()) {}
  std::size_t capacity() const { return row.size(); }
};

/// Adds every staged carry-out to its row: per row, slots are summed in
/// ascending CTA order and the sum is added to y once.
template <class T>
void followup_pass(const StagingBuffer<T>& staging, Tensor<T>& y);

template <class T>
struct SpmmGradients {
  Tensor<T> dx;  // |V| x F
  Tensor<T> dw;  // |E| x 1
};

/// Backward of spmm_scaled: dX by SpMM on the transpose (factors swapped,
/// same scaling mode), dW_e by SDDMM of the scaled dY and X.
template <class T>
SpmmGradients<T> spmm_backward(const CooGraph& g, const Tensor<T>* edge_weights,
                               const Tensor<T>& dy, const Tensor<T>& x, ScalingMode scaling,
                               const DegreeScaling<T>& forward_factors,
                               const KernelOptions& options = {});

/// Order-faithful single-threaded references. They follow the reduction
/// order documented above row by row instead of warp by warp.
template <class T>
Tensor<T> spmm_reference(const CooGraph& g, const Tensor<T>* edge_weights, const Tensor<T>& x,
                         const Schedule& schedule, ScalingMode scaling,
                         const DegreeScaling<T>& factors, WriteMode write);

template <class T>
Tensor<T> sddmm_reference(const CooGraph& g, const Tensor<T>& x, const Tensor<T>& y);

/// Counts INF and NaN elements.
template <class T>
std::pair<std::size_t, std::size_t> count_nonfinite(const Tensor<T>& t);

}  // namespace halfkern

#endif  // HALFKERN_KERNELS_HPP_
