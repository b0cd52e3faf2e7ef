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

#include "halfkern/sparse.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

namespace halfkern {

CooGraph::CooGraph(std::vector<VertexId> rows, std::vector<VertexId> cols,
                   std::size_t num_vertices)
    : rows_(std::move(rows)), cols_(std::move(cols)), num_vertices_(num_vertices) {
  if (rows_.size() != cols_.size()) throw InvariantError("row and column arrays differ in length");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i] >= num_vertices_ || cols_[i] >= num_vertices_) {
      throw InvariantError("edge " + std::to_string(i) + " references a vertex >= " +
                           std::to_string(num_vertices_));
    }
    if (i > 0) {
      const bool ordered = rows_[i - 1] < rows_[i] ||
                           (rows_[i - 1] == rows_[i] && cols_[i - 1] < cols_[i]);
      if (!ordered) {
        throw InvariantError("edges are not strictly sorted by (row, col) at index " +
                             std::to_string(i));
      }
    }
  }
}

CooGraph CooGraph::from_pairs(std::vector<VertexId> rows, std::vector<VertexId> cols,
                              std::size_t num_vertices) {
  if (rows.size() != cols.size()) throw InvariantError("row and column arrays differ in length");
  std::vector<std::uint64_t> keys(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    keys[i] = (static_cast<std::uint64_t>(rows[i]) << 32) | cols[i];
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  rows.resize(keys.size());
  cols.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    rows[i] = static_cast<VertexId>(keys[i] >> 32);
    cols[i] = static_cast<VertexId>(keys[i] & 0xffffffffu);
  }
  return CooGraph(std::move(rows), std::move(cols), num_vertices);
}

CsrGraph::CsrGraph(std::vector<EdgeId> offsets, std::vector<VertexId> cols)
    : offsets_(std::move(offsets)), cols_(std::move(cols)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != cols_.size()) {
    throw InvariantError("CSR offsets must start at 0 and end at |E|");
  }
  degrees_.resize(offsets_.size() - 1);
  for (std::size_t v = 0; v + 1 < offsets_.size(); ++v) {
    if (offsets_[v + 1] < offsets_[v]) throw InvariantError("CSR offsets decrease");
    degrees_[v] = static_cast<std::uint32_t>(offsets_[v + 1] - offsets_[v]);
  }
}

CsrGraph coo_to_csr(const CooGraph& g) {
  std::vector<EdgeId> offsets(g.num_vertices() + 1, 0);
  for (VertexId r : g.rows()) ++offsets[r + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return CsrGraph(std::move(offsets), {g.cols().begin(), g.cols().end()});
}

CooGraph csr_to_coo(const CsrGraph& g) {
  std::vector<VertexId> rows;
  rows.reserve(g.num_edges());
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    rows.insert(rows.end(), g.degree(static_cast<VertexId>(v)), static_cast<VertexId>(v));
  }
  return CooGraph(std::move(rows), {g.cols().begin(), g.cols().end()}, g.num_vertices());
}

TransposedGraph transpose_with_map(const CooGraph& g) {
  // Counting sort on the column keeps rows ascending inside each bucket.
  const std::size_t n = g.num_vertices();
  std::vector<EdgeId> start(n + 1, 0);
  for (VertexId c : g.cols()) ++start[c + 1];
  std::partial_sum(start.begin(), start.end(), start.begin());

  std::vector<VertexId> rows(g.num_edges());
  std::vector<VertexId> cols(g.num_edges());
  std::vector<EdgeId> source(g.num_edges());
  std::vector<EdgeId> cursor(start.begin(), start.end() - 1);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const EdgeId slot = cursor[g.cols()[e]]++;
    rows[slot] = g.cols()[e];
    cols[slot] = g.rows()[e];
    source[slot] = e;
  }
  return {CooGraph(std::move(rows), std::move(cols), n), std::move(source)};
}

CooGraph transpose(const CooGraph& g) { return transpose_with_map(g).graph; }

CooGraph add_self_loops(const CooGraph& g) {
  std::vector<VertexId> rows(g.rows().begin(), g.rows().end());
  std::vector<VertexId> cols(g.cols().begin(), g.cols().end());
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    rows.push_back(static_cast<VertexId>(v));
    cols.push_back(static_cast<VertexId>(v));
  }
  return CooGraph::from_pairs(std::move(rows), std::move(cols), g.num_vertices());
}

CooGraph symmetrize(const CooGraph& g) {
  std::vector<VertexId> rows(g.rows().begin(), g.rows().end());
  std::vector<VertexId> cols(g.cols().begin(), g.cols().end());
  rows.insert(rows.end(), g.cols().begin(), g.cols().end());
  cols.insert(cols.end(), g.rows().begin(), g.rows().end());
  return CooGraph::from_pairs(std::move(rows), std::move(cols), g.num_vertices());
}

std::vector<std::uint32_t> row_degrees(const CooGraph& g) {
  std::vector<std::uint32_t> degrees(g.num_vertices(), 0);
  for (VertexId r : g.rows()) ++degrees[r];
  return degrees;
}

namespace {

bool parse_index(std::string_view token, std::uint64_t& out) {
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

CooGraph load_edge_list(std::istream& in, const EdgeListOptions& options) {
  std::vector<VertexId> rows;
  std::vector<VertexId> cols;
  std::uint64_t max_index = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#' || line[first] == '%') continue;

    std::vector<std::string_view> tokens;
    std::string_view rest(line);
    rest.remove_prefix(first);
    while (!rest.empty()) {
      const auto end = rest.find_first_of(" \t\r");
      tokens.push_back(rest.substr(0, end));
      if (end == std::string_view::npos) break;
      rest.remove_prefix(end);
      const auto next = rest.find_first_not_of(" \t\r");
      if (next == std::string_view::npos) break;
      rest.remove_prefix(next);
    }
    if (tokens.size() != 2) throw ParseError("expected two vertex indices", line_no);

    std::uint64_t src = 0;
    std::uint64_t dst = 0;
    if (!parse_index(tokens[0], src) || !parse_index(tokens[1], dst)) {
      throw ParseError("vertex index is not a non-negative integer", line_no);
    }
    constexpr std::uint64_t kLimit = std::numeric_limits<VertexId>::max() - 1;
    if (src > kLimit || dst > kLimit) throw ParseError("vertex index overflows 32 bits", line_no);
    if (options.num_vertices && (src >= *options.num_vertices || dst >= *options.num_vertices)) {
      throw ParseError("vertex index exceeds the declared vertex count", line_no);
    }
    rows.push_back(static_cast<VertexId>(src));
    cols.push_back(static_cast<VertexId>(dst));
    max_index = std::max({max_index, src, dst});
    any = true;
  }
  const std::size_t n = options.num_vertices.value_or(any ? max_index + 1 : 0);
  return CooGraph::from_pairs(std::move(rows), std::move(cols), n);
}

CooGraph load_edge_list_file(const std::filesystem::path& path, const EdgeListOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list " + path.string());
  return load_edge_list(in, options);
}

HalfTensor to_half_tensor(const FloatTensor& t) {
  HalfTensor out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = to_half(t.data()[i]);
  return out;
}

FloatTensor to_float_tensor(const HalfTensor& t) {
  FloatTensor out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = to_float(t.data()[i]);
  return out;
}

template <class T>
Tensor<T> pad_feature_length(const Tensor<T>& t, std::size_t multiple) {
  if (multiple != 2 && multiple != 4 && multiple != 8) {
    throw ConfigError("padding multiple must be 2, 4 or 8");
  }
  const std::size_t cols = (t.cols() + multiple - 1) / multiple * multiple;
  if (cols == t.cols()) return t;
  Tensor<T> out(t.rows(), cols, Arith<T>::zero());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::copy(t.row(r).begin(), t.row(r).end(), out.row(r).begin());
  }
  return out;
}

template HalfTensor pad_feature_length(const HalfTensor&, std::size_t);
template FloatTensor pad_feature_length(const FloatTensor&, std::size_t);

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw ParseError("truncated tensor stream");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

struct TensorHeader {
  std::uint32_t rows;
  std::uint32_t cols;
  Precision mode;
};

TensorHeader read_header(std::istream& in) {
  if (get_u32(in) != kTensorMagic) throw ParseError("bad tensor magic");
  TensorHeader h{};
  h.rows = get_u32(in);
  h.cols = get_u32(in);
  const std::uint32_t mode = get_u32(in);
  if (mode != static_cast<std::uint32_t>(Precision::kHalf) &&
      mode != static_cast<std::uint32_t>(Precision::kFloat32)) {
    throw ParseError("unknown tensor mode " + std::to_string(mode));
  }
  h.mode = static_cast<Precision>(mode);
  return h;
}

}  // namespace

template <class T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  if (t.rows() > std::numeric_limits<std::uint32_t>::max() ||
      t.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("tensor too large for the 32-bit header");
  }
  put_u32(out, kTensorMagic);
  put_u32(out, static_cast<std::uint32_t>(t.rows()));
  put_u32(out, static_cast<std::uint32_t>(t.cols()));
  put_u32(out, static_cast<std::uint32_t>(precision_of<T>()));
  for (const T& v : t.data()) {
    if constexpr (std::is_same_v<T, Half>) {
      const std::uint16_t b = v.bits();
      const char bytes[2] = {static_cast<char>(b & 0xff), static_cast<char>(b >> 8)};
      out.write(bytes, 2);
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  if (!out) throw IoError("failed writing tensor");
}

template <class T>
Tensor<T> read_tensor(std::istream& in) {
  const TensorHeader h = read_header(in);
  if (h.mode != precision_of<T>()) throw ParseError("tensor element mode mismatch");
  Tensor<T> t(h.rows, h.cols);
  for (T& v : t.data()) {
    if constexpr (std::is_same_v<T, Half>) {
      unsigned char bytes[2];
      if (!in.read(reinterpret_cast<char*>(bytes), 2)) throw ParseError("truncated tensor data");
      v = Half::from_bits(static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8)));
    } else {
      v = std::bit_cast<float>(get_u32(in));
    }
  }
  return t;
}

template void write_tensor(std::ostream&, const HalfTensor&);
template void write_tensor(std::ostream&, const FloatTensor&);
template HalfTensor read_tensor<Half>(std::istream&);
template FloatTensor read_tensor<float>(std::istream&);

Precision peek_tensor_precision(std::istream& in) {
  const auto pos = in.tellg();
  const TensorHeader h = read_header(in);
  in.seekg(pos);
  return h.mode;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

LabeledGraph synth_sbm(const SbmSpec& spec) {
  if (!(spec.p_in >= 0.0 && spec.p_in <= 1.0 && spec.p_out >= 0.0 && spec.p_out <= 1.0)) {
    throw ConfigError("SBM probabilities must lie in [0, 1]");
  }
  const bool both_zero = spec.p_in == 0.0 && spec.p_out == 0.0;
  if (!both_zero && !(spec.p_out < spec.p_in)) {
    throw ConfigError("SBM requires p_out < p_in");
  }
  if (spec.num_classes == 0 || spec.num_classes > spec.num_vertices) {
    throw ConfigError("SBM class count must be in [1, n]");
  }
  if (spec.num_vertices > std::numeric_limits<VertexId>::max()) {
    throw ConfigError("SBM vertex count exceeds 32-bit ids");
  }

  const std::size_t n = spec.num_vertices;
  LabeledGraph out;
  out.num_classes = spec.num_classes;
  out.labels.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    out.labels[v] = static_cast<std::uint32_t>(v * spec.num_classes / n);
  }

  Rng rng(spec.seed);
  std::vector<VertexId> rows;
  std::vector<VertexId> cols;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = out.labels[u] == out.labels[v] ? spec.p_in : spec.p_out;
      if (rng.uniform() < p) {
        rows.push_back(static_cast<VertexId>(u));
        cols.push_back(static_cast<VertexId>(v));
        rows.push_back(static_cast<VertexId>(v));
        cols.push_back(static_cast<VertexId>(u));
      }
    }
  }
  out.graph = CooGraph::from_pairs(std::move(rows), std::move(cols), n);

  std::vector<double> means(spec.num_classes * spec.feature_dim);
  for (double& m : means) m = rng.uniform() < 0.5 ? -1.0 : 1.0;
  out.features = FloatTensor(n, spec.feature_dim);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t f = 0; f < spec.feature_dim; ++f) {
      const double mean = means[out.labels[v] * spec.feature_dim + f];
      out.features(v, f) =
          static_cast<float>(spec.feature_scale * (mean + spec.noise_std * rng.normal()));
    }
  }
  return out;
}

DataSplit make_split(std::size_t num_vertices, std::uint64_t seed, double train_fraction,
                     double val_fraction) {
  std::vector<std::size_t> order(num_vertices);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (std::size_t i = num_vertices; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  DataSplit split{std::vector<std::uint8_t>(num_vertices, 0),
                  std::vector<std::uint8_t>(num_vertices, 0)};
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(num_vertices));
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(num_vertices));
  for (std::size_t i = 0; i < num_vertices; ++i) {
    if (i < n_train) {
      split.train[order[i]] = 1;
    } else if (i < n_train + n_val) {
      split.val[order[i]] = 1;
    }
  }
  return split;
}

}  // namespace halfkern
