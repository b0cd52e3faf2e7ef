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

#ifndef HALFKERN_SPARSE_HPP_
#define HALFKERN_SPARSE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "halfkern/errors.hpp"
#include "halfkern/halfnum.hpp"

namespace halfkern {

using VertexId = std::uint32_t;
using EdgeId = std::size_t;

/// Edge list sorted by (row, col) with no duplicates. Edge (r, c) means
/// row r aggregates from column c.
class CooGraph {
 public:
  CooGraph() = default;

  /// Takes already-sorted, duplicate-free arrays. Throws InvariantError
  /// otherwise.
  CooGraph(std::vector<VertexId> rows, std::vector<VertexId> cols,
           std::size_t num_vertices);

  /// Sorts and deduplicates arbitrary (row, col) pairs.
  static CooGraph from_pairs(std::vector<VertexId> rows, std::vector<VertexId> cols,
                             std::size_t num_vertices);

  std::span<const VertexId> rows() const { return rows_; }
  std::span<const VertexId> cols() const { return cols_; }
  std::size_t num_vertices() const { return num_vertices_; }
  std::size_t num_edges() const { return rows_.size(); }

  friend bool operator==(const CooGraph&, const CooGraph&) = default;

 private:
  std::vector<VertexId> rows_;
  std::vector<VertexId> cols_;
  std::size_t num_vertices_ = 0;
};

class CsrGraph {
 public:
  CsrGraph() = default;
  CsrGraph(std::vector<EdgeId> offsets, std::vector<VertexId> cols);

  std::span<const EdgeId> offsets() const { return offsets_; }
  std::span<const VertexId> cols() const { return cols_; }
  std::span<const std::uint32_t> degrees() const { return degrees_; }
  std::size_t num_vertices() const { return degrees_.size(); }
  std::size_t num_edges() const { return cols_.size(); }
  std::uint32_t degree(VertexId v) const { return degrees_[v]; }

 private:
  std::vector<EdgeId> offsets_{0};
  std::vector<VertexId> cols_;
  std::vector<std::uint32_t> degrees_;
};

CsrGraph coo_to_csr(const CooGraph& g);
CooGraph csr_to_coo(const CsrGraph& g);

/// Transposed graph plus, for each transposed edge, the index of the edge
/// it came from. Edge tensors must be permuted through `source_edge`.
struct TransposedGraph {
  CooGraph graph;
  std::vector<EdgeId> source_edge;
};

TransposedGraph transpose_with_map(const CooGraph& g);
CooGraph transpose(const CooGraph& g);
CooGraph add_self_loops(const CooGraph& g);
CooGraph symmetrize(const CooGraph& g);

/// Row degree of every vertex (number of neighbours it aggregates from).
std::vector<std::uint32_t> row_degrees(const CooGraph& g);

struct EdgeListOptions {
  std::optional<std::size_t> num_vertices;
};

/// Reads whitespace-separated "src dst" lines (0-indexed). Lines starting
/// with '#' or '%' are skipped.
CooGraph load_edge_list(std::istream& in, const EdgeListOptions& options = {});
CooGraph load_edge_list_file(const std::filesystem::path& path,
                             const EdgeListOptions& options = {});

enum class Precision : std::uint32_t { kHalf = 1, kFloat32 = 2 };

template <class T>
constexpr Precision precision_of() {
  if constexpr (std::is_same_v<T, Half>) {
    return Precision::kHalf;
  } else {
    static_assert(std::is_same_v<T, float>);
    return Precision::kFloat32;
  }
}

/// Row-major dense matrix. Vertex tensors are |V| x F, edge tensors |E| x 1.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  Tensor(std::size_t rows, std::size_t cols, T fill)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("tensor data does not match its shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  static constexpr Precision precision() { return precision_of<T>(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using HalfTensor = Tensor<Half>;
using FloatTensor = Tensor<float>;

HalfTensor to_half_tensor(const FloatTensor& t);
FloatTensor to_float_tensor(const HalfTensor& t);

/// Zero-extends the column count to the next multiple of `multiple`
/// (2, 4 or 8).
template <class T>
Tensor<T> pad_feature_length(const Tensor<T>& t, std::size_t multiple);

/// Little-endian raw dump behind a 16-byte header: magic, rows, cols, mode.
template <class T>
void write_tensor(std::ostream& out, const Tensor<T>& t);
template <class T>
Tensor<T> read_tensor(std::istream& in);
/// Reads only the header and reports the stored element mode.
Precision peek_tensor_precision(std::istream& in);

inline constexpr std::uint32_t kTensorMagic = 0x3154484bu;  // "KHT1"

struct SbmSpec {
  std::size_t num_vertices = 1000;
  std::size_t num_classes = 2;
  double p_in = 0.05;
  double p_out = 0.005;
  std::size_t feature_dim = 16;
  std::uint64_t seed = 1;
  /// Features are feature_scale * (class_mean + noise_std * N(0, 1)).
  double feature_scale = 1.0;
  double noise_std = 1.0;
};

struct LabeledGraph {
  CooGraph graph;
  FloatTensor features;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;
};

/// Undirected stochastic block model with contiguous equal-size blocks.
/// Deterministic for a given spec on every platform.
LabeledGraph synth_sbm(const SbmSpec& spec);

struct DataSplit {
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> val;
};

DataSplit make_split(std::size_t num_vertices, std::uint64_t seed, double train_fraction = 0.6,
                     double val_fraction = 0.2);

/// mt19937_64 with distributions derived from raw engine bits, so draws
/// are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace halfkern

#endif  // HALFKERN_SPARSE_HPP_
