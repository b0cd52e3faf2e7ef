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

#include "halfkern/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace halfkern {

std::string_view to_string(ScalingMode m) {
  switch (m) {
    case ScalingMode::kPost:
      return "post";
    case ScalingMode::kPre:
      return "pre";
    case ScalingMode::kDiscretized:
      return "discretized";
  }
  return "?";
}

std::string_view to_string(Norm n) {
  switch (n) {
    case Norm::kNone:
      return "none";
    case Norm::kLeft:
      return "left";
    case Norm::kRight:
      return "right";
    case Norm::kBoth:
      return "both";
  }
  return "?";
}

std::string_view to_string(WriteMode m) {
  return m == WriteMode::kStaging ? "staging" : "atomic";
}

ScalingMode parse_scaling_mode(std::string_view s) {
  if (s == "post") return ScalingMode::kPost;
  if (s == "pre") return ScalingMode::kPre;
  if (s == "discretized") return ScalingMode::kDiscretized;
  throw ConfigError("unknown reduction mode '" + std::string(s) + "'");
}

Norm parse_norm(std::string_view s) {
  if (s == "none") return Norm::kNone;
  if (s == "left") return Norm::kLeft;
  if (s == "right") return Norm::kRight;
  if (s == "both") return Norm::kBoth;
  throw ConfigError("unknown norm '" + std::string(s) + "'");
}

WriteMode parse_write_mode(std::string_view s) {
  if (s == "staging") return WriteMode::kStaging;
  if (s == "atomic") return WriteMode::kAtomicModel;
  throw ConfigError("unknown write mode '" + std::string(s) + "'");
}

template <class T>
DegreeScaling<T> degree_scaling(std::span<const std::uint32_t> degrees, Norm norm) {
  auto factors = [&](bool sqrt_root) {
    std::vector<T> out(degrees.size());
    for (std::size_t v = 0; v < degrees.size(); ++v) {
      float f = 1.0f;
      if (degrees[v] != 0) {
        const auto d = static_cast<float>(degrees[v]);
        f = sqrt_root ? 1.0f / std::sqrt(d) : 1.0f / d;
      }
      out[v] = Arith<T>::from_float(f);
    }
    return out;
  };
  DegreeScaling<T> s;
  switch (norm) {
    case Norm::kNone:
      break;
    case Norm::kLeft:
      s.input = factors(false);
      break;
    case Norm::kRight:
      s.output = factors(false);
      break;
    case Norm::kBoth:
      s.input = factors(true);
      s.output = factors(true);
      break;
  }
  return s;
}

template <class T>
DegreeScaling<T> transpose_scaling(const DegreeScaling<T>& forward) {
  return {forward.output, forward.input};
}

template <class T>
bool SpmmResult<T>::batch_bound_holds() const {
  return static_cast<double>(batch_edges) * max_abs_term <= half_constants::kMaxValue;
}

std::size_t batch_edges_for(const Schedule& s, std::size_t feature_length) {
  if (s.paradigm == Paradigm::kVertexParallelGrouped) return kNeighborGroup;
  return subwarp_layout(feature_length, VectorWidth::kHalf2).subwarps;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// Lane-pair arithmetic: native half2 for binary16, two floats otherwise.
template <class T>
struct PairOps;

template <>
struct PairOps<Half> {
  using V = Half2;
  static V load(std::span<const Half> row, std::size_t p) { return {row[2 * p], row[2 * p + 1]}; }
  static void store(V v, std::span<Half> row, std::size_t p) {
    row[2 * p] = v.lo;
    row[2 * p + 1] = v.hi;
  }
  static V splat(Half s) { return {s, s}; }
  static V zero() { return {half_constants::kZero, half_constants::kZero}; }
  static V add(V a, V b) { return half2_add(a, b); }
  static V mul(V a, V b) { return half2_mul(a, b); }
  static V fma(V a, V b, V c) { return half2_fma(a, b, c); }
  // Edge weights arrive two per half2 load; each is mirrored across lanes.
  static void mirror_weights(std::span<const Half> w, std::vector<V>& out) {
    out.resize(w.size());
    std::size_t e = 0;
    for (; e + 1 < w.size(); e += 2) {
      const auto [first, second] = mirror_edge_feature(Half2{w[e], w[e + 1]});
      out[e] = first;
      out[e + 1] = second;
    }
    if (e < w.size()) out[e] = splat(w[e]);
  }
};

struct Float2 {
  float lo;
  float hi;
};

template <>
struct PairOps<float> {
  using V = Float2;
  static V load(std::span<const float> row, std::size_t p) { return {row[2 * p], row[2 * p + 1]}; }
  static void store(V v, std::span<float> row, std::size_t p) {
    row[2 * p] = v.lo;
    row[2 * p + 1] = v.hi;
  }
  static V splat(float s) { return {s, s}; }
  static V zero() { return {0.0f, 0.0f}; }
  static V add(V a, V b) { return {a.lo + b.lo, a.hi + b.hi}; }
  static V mul(V a, V b) { return {a.lo * b.lo, a.hi * b.hi}; }
  static V fma(V a, V b, V c) { return {std::fma(a.lo, b.lo, c.lo), std::fma(a.hi, b.hi, c.hi)}; }
  static void mirror_weights(std::span<const float> w, std::vector<V>& out) {
    out.resize(w.size());
    for (std::size_t e = 0; e < w.size(); ++e) out[e] = splat(w[e]);
  }
};

template <class T>
struct SpmmContext {
  const CooGraph& g;
  const Tensor<T>* weights;
  const Tensor<T>& x;
  ScalingMode scaling;
  const DegreeScaling<T>& factors;
  std::size_t feature_length;
  std::size_t batch;
};

template <class T>
struct WarpOutput {
  std::vector<RowPartial<T>> runs;
  double max_abs_term = 0.0;
};

// Stage 1 for one warp: batched running sums per row, in edge order.
template <class T>
WarpOutput<T> reduce_warp(const SpmmContext<T>& ctx, WarpRange range) {
  using P = PairOps<T>;
  using V = typename P::V;
  const auto rows = ctx.g.rows();
  const auto cols = ctx.g.cols();
  const std::size_t pairs = ctx.feature_length / 2;
  const bool has_in = !ctx.factors.input.empty();
  const bool has_out = !ctx.factors.output.empty();
  const bool pre = ctx.scaling == ScalingMode::kPre && has_out;
  const bool discretized = ctx.scaling == ScalingMode::kDiscretized && has_out;

  // Phase 1: cache the warp's edge weights, mirrored for half2 products.
  std::vector<V> weights;
  if (ctx.weights != nullptr) {
    P::mirror_weights(ctx.weights->data().subspan(range.begin, range.size()), weights);
  }

  WarpOutput<T> out;
  std::vector<V> acc(pairs, P::zero());
  std::vector<V> batch(pairs);
  VertexId current = rows[range.begin];
  EdgeId i = range.begin;
  while (i < range.end) {
    const VertexId r = rows[i];
    const EdgeId iteration_end =
        std::min(range.end, range.begin + ((i - range.begin) / ctx.batch + 1) * ctx.batch);
    EdgeId j = i;
    while (j < iteration_end && rows[j] == r) ++j;

    std::fill(batch.begin(), batch.end(), P::zero());
    for (EdgeId e = i; e < j; ++e) {
      const VertexId c = cols[e];
      const auto xrow = ctx.x.row(c);
      for (std::size_t p = 0; p < pairs; ++p) {
        V v = P::load(xrow, p);
        if (has_in) v = P::mul(v, P::splat(ctx.factors.input[c]));
        if (pre) v = P::mul(v, P::splat(ctx.factors.output[r]));
        if (ctx.weights != nullptr) {
          const V w = weights[e - range.begin];
          out.max_abs_term = std::max(
              {out.max_abs_term,
               std::abs(static_cast<double>(Arith<T>::to_float(w.lo)) * Arith<T>::to_float(v.lo)),
               std::abs(static_cast<double>(Arith<T>::to_float(w.lo)) * Arith<T>::to_float(v.hi))});
          batch[p] = P::fma(w, v, batch[p]);
        } else {
          out.max_abs_term = std::max({out.max_abs_term,
                                       std::abs(static_cast<double>(Arith<T>::to_float(v.lo))),
                                       std::abs(static_cast<double>(Arith<T>::to_float(v.hi)))});
          batch[p] = P::add(batch[p], v);
        }
      }
    }
    if (discretized) {
      const V s = P::splat(ctx.factors.output[r]);
      for (V& b : batch) b = P::mul(b, s);
    }
    if (r != current) {
      RowPartial<T> run{current, std::vector<T>(ctx.feature_length)};
      for (std::size_t p = 0; p < pairs; ++p) P::store(acc[p], run.value, p);
      out.runs.push_back(std::move(run));
      std::fill(acc.begin(), acc.end(), P::zero());
      current = r;
    }
    for (std::size_t p = 0; p < pairs; ++p) acc[p] = P::add(acc[p], batch[p]);
    i = j;
  }
  RowPartial<T> run{current, std::vector<T>(ctx.feature_length)};
  for (std::size_t p = 0; p < pairs; ++p) P::store(acc[p], run.value, p);
  out.runs.push_back(std::move(run));
  return out;
}

template <class T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t f = 0; f < dst.size(); ++f) dst[f] = Arith<T>::add(dst[f], src[f]);
}

template <class T>
struct Boundary {
  RowPartial<T> head;
  std::optional<RowPartial<T>> tail;
};

// Joins two adjacent blocks; rows that become complete go to `direct`.
template <class T>
Boundary<T> combine(Boundary<T> a, Boundary<T> b, std::vector<RowPartial<T>>& direct) {
  RowPartial<T>& a_last = a.tail ? *a.tail : a.head;
  if (a_last.row > b.head.row) {
    throw InvariantError("row ids are not monotone across sub-warps (row " +
                         std::to_string(a_last.row) + " before " + std::to_string(b.head.row) +
                         ")");
  }
  const bool a_single = !a.tail.has_value();
  const bool b_single = !b.tail.has_value();
  if (a_last.row == b.head.row) {
    add_into(a_last.value, b.head.value);
    if (a_single) {
      return {std::move(a.head), std::move(b.tail)};
    }
    if (b_single) return {std::move(a.head), std::move(a.tail)};
    direct.push_back(std::move(*a.tail));
    return {std::move(a.head), std::move(b.tail)};
  }
  if (!a_single) direct.push_back(std::move(*a.tail));
  if (b_single) return {std::move(a.head), std::move(b.head)};
  direct.push_back(std::move(b.head));
  return {std::move(a.head), std::move(b.tail)};
}

template <class T>
CtaResolution<T> resolve_owned(std::vector<std::vector<RowPartial<T>>> warp_partials) {
  if (warp_partials.empty()) throw InvariantError("CTA without warps");
  CtaResolution<T> res;
  std::vector<Boundary<T>> level;
  level.reserve(warp_partials.size());
  for (auto& runs : warp_partials) {
    if (runs.empty()) throw InvariantError("warp without row partials");
    for (std::size_t k = 1; k < runs.size(); ++k) {
      if (runs[k].row <= runs[k - 1].row) {
        throw InvariantError("row ids are not monotone inside a warp");
      }
    }
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) res.direct.push_back(std::move(runs[k]));
    Boundary<T> b{std::move(runs.front()), std::nullopt};
    if (runs.size() > 1) b.tail = std::move(runs.back());
    level.push_back(std::move(b));
  }
  while (level.size() > 1) {
    std::vector<Boundary<T>> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t k = 0; k < level.size(); k += 2) {
      if (k + 1 < level.size()) {
        next.push_back(combine(std::move(level[k]), std::move(level[k + 1]), res.direct));
      } else {
        next.push_back(std::move(level[k]));
      }
    }
    level = std::move(next);
  }
  Boundary<T>& top = level.front();
  if (top.tail) {
    res.direct.push_back(std::move(top.head));
    res.carry_out = std::move(*top.tail);
  } else {
    res.carry_out = std::move(top.head);
  }
  return res;
}

void add_load_metrics(KernelMetrics& m, std::size_t edges, const SubWarpLayout& layout,
                      bool edge_features) {
  const std::uint64_t iterations =
      (edges + layout.subwarps - 1) / layout.subwarps * layout.feature_chunks;
  const std::uint64_t bytes = warp_load_bytes(layout.width);
  m.load_transactions += iterations;
  m.load_bytes += iterations * bytes;
  if (edge_features) {
    const std::uint64_t per_load = kWarpSize * lanes(layout.width);
    const std::uint64_t loads = (edges + per_load - 1) / per_load;
    m.load_transactions += loads;
    m.load_bytes += loads * bytes;
  }
}

template <class T>
void check_spmm_shapes(const CooGraph& g, const Tensor<T>* w, const Tensor<T>& x,
                       const DegreeScaling<T>& f, const KernelOptions& options) {
  if (x.rows() != g.num_vertices()) {
    throw ShapeError("feature rows " + std::to_string(x.rows()) + " != |V| " +
                     std::to_string(g.num_vertices()));
  }
  if (x.cols() == 0 || x.cols() % 2 != 0) {
    throw ShapeError("feature length " + std::to_string(x.cols()) +
                     " must be even; pad the features first");
  }
  if (x.cols() % lanes(options.width) != 0) {
    throw ShapeError("feature length is not divisible by the load width");
  }
  if (w != nullptr && (w->rows() != g.num_edges() || w->cols() != 1)) {
    throw ShapeError("edge tensor must be |E| x 1");
  }
  if ((!f.input.empty() && f.input.size() != g.num_vertices()) ||
      (!f.output.empty() && f.output.size() != g.num_vertices())) {
    throw ShapeError("scale factors must have one entry per vertex");
  }
}

template <class T>
void apply_post_scaling(Tensor<T>& y, const DegreeScaling<T>& f) {
  if (f.output.empty()) return;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (T& v : y.row(r)) v = Arith<T>::mul(v, f.output[r]);
  }
}

}  // namespace

template <class T>
CtaResolution<T> resolve_intra_cta(std::span<const std::vector<RowPartial<T>>> warp_partials) {
  return resolve_owned<T>({warp_partials.begin(), warp_partials.end()});
}

template <class T>
void followup_pass(const StagingBuffer<T>& staging, Tensor<T>& y) {
  std::size_t k = 0;
  const std::size_t n = staging.capacity();
  std::vector<T> sum(staging.partial.cols());
  while (k < n) {
    const VertexId row = staging.row[k];
    if (row >= y.rows()) throw ShapeError("staging slot targets a row outside the output");
    const auto first = staging.partial.row(k);
    std::copy(first.begin(), first.end(), sum.begin());
    std::size_t j = k + 1;
    for (; j < n && staging.row[j] == row; ++j) {
      const auto next = staging.partial.row(j);
      for (std::size_t f = 0; f < sum.size(); ++f) sum[f] = Arith<T>::add(sum[f], next[f]);
    }
    auto out = y.row(row);
    for (std::size_t f = 0; f < sum.size(); ++f) out[f] = Arith<T>::add(out[f], sum[f]);
    k = j;
  }
}

template <class T>
SpmmResult<T> spmm_scaled(const CooGraph& g, const Tensor<T>* edge_weights, const Tensor<T>& x,
                          const Schedule& schedule, ScalingMode scaling,
                          const DegreeScaling<T>& factors, const KernelOptions& options) {
  check_spmm_shapes(g, edge_weights, x, factors, options);
  validate_schedule(schedule, g);

  const std::size_t F = x.cols();
  const SubWarpLayout layout = subwarp_layout(F, options.width);
  const SpmmContext<T> ctx{g, edge_weights, x, scaling, factors, F,
                           batch_edges_for(schedule, F)};

  SpmmResult<T> result;
  result.out = Tensor<T>(g.num_vertices(), F, Arith<T>::zero());
  result.batch_edges = ctx.batch;
  result.metrics.coalesced_bytes_per_warp_load = warp_load_bytes(options.width);

  const std::size_t num_ctas = schedule.num_ctas();
  std::vector<KernelMetrics> cta_metrics(num_ctas);
  std::vector<double> cta_max(num_ctas, 0.0);
  Tensor<T>& y = result.out;
  auto write_row = [&](const RowPartial<T>& p) {
    std::copy(p.value.begin(), p.value.end(), y.row(p.row).begin());
  };

  if (options.write == WriteMode::kStaging) {
    StagingBuffer<T> staging(num_ctas, F);
    parallel_for(num_ctas, options.threads, [&](std::size_t cta) {
      const std::size_t w0 = schedule.cta_first_warp(cta);
      const std::size_t w1 = schedule.cta_end_warp(cta);
      KernelMetrics& m = cta_metrics[cta];
      std::vector<std::vector<RowPartial<T>>> partials;
      partials.reserve(w1 - w0);
      for (std::size_t w = w0; w < w1; ++w) {
        WarpOutput<T> out = reduce_warp(ctx, schedule.warps[w]);
        cta_max[cta] = std::max(cta_max[cta], out.max_abs_term);
        partials.push_back(std::move(out.runs));
        add_load_metrics(m, schedule.warps[w].size(), layout, edge_weights != nullptr);
        m.barrier_waits += 1;
      }
      CtaResolution<T> res = resolve_owned<T>(std::move(partials));
      for (const auto& d : res.direct) write_row(d);
      staging.row[cta] = res.carry_out.row;
      std::copy(res.carry_out.value.begin(), res.carry_out.value.end(),
                staging.partial.row(cta).begin());
      const std::size_t rounds = ceil_log2((w1 - w0) * layout.subwarps);
      m.intra_cta_rounds = rounds;
      m.barrier_waits += rounds * (w1 - w0);
      m.staging_writes += 1;
    });
    followup_pass(staging, y);
  } else {
    const auto rows = g.rows();
    std::vector<std::vector<RowPartial<T>>> shared(schedule.num_warps());
    parallel_for(num_ctas, options.threads, [&](std::size_t cta) {
      KernelMetrics& m = cta_metrics[cta];
      for (std::size_t w = schedule.cta_first_warp(cta); w < schedule.cta_end_warp(cta); ++w) {
        const WarpRange range = schedule.warps[w];
        WarpOutput<T> out = reduce_warp(ctx, range);
        cta_max[cta] = std::max(cta_max[cta], out.max_abs_term);
        add_load_metrics(m, range.size(), layout, edge_weights != nullptr);
        m.barrier_waits += 1;
        for (std::size_t k = 0; k < out.runs.size(); ++k) {
          const VertexId r = out.runs[k].row;
          const bool continues_before = k == 0 && range.begin > 0 && rows[range.begin - 1] == r;
          const bool continues_after =
              k + 1 == out.runs.size() && range.end < g.num_edges() && rows[range.end] == r;
          if (continues_before || continues_after) {
            shared[w].push_back(std::move(out.runs[k]));
            m.atomic_writes += 1;
          } else {
            write_row(out.runs[k]);
          }
        }
      }
    });
    // Modeled atomics: serialized in ascending warp order.
    for (const auto& warp_shared : shared) {
      for (const auto& p : warp_shared) {
        auto dst = y.row(p.row);
        for (std::size_t f = 0; f < F; ++f) dst[f] = Arith<T>::add(dst[f], p.value[f]);
      }
    }
  }

  if (scaling == ScalingMode::kPost) apply_post_scaling(y, factors);
  for (std::size_t c = 0; c < num_ctas; ++c) {
    result.metrics.merge(cta_metrics[c]);
    result.max_abs_term = std::max(result.max_abs_term, cta_max[c]);
  }
  return result;
}

namespace {

void check_mode(ReductionMode mode) {
  if (mode.scaling == ScalingMode::kDiscretized && mode.norm == Norm::kNone) {
    throw ConfigError("discretized reduction needs a degree norm (left, right or both)");
  }
}

}  // namespace

template <class T>
SpmmResult<T> spmm_ve(const CooGraph& g, const Tensor<T>& edge_weights, const Tensor<T>& x,
                      const Schedule& schedule, ReductionMode mode, const KernelOptions& options) {
  check_mode(mode);
  const auto factors = degree_scaling<T>(row_degrees(g), mode.norm);
  return spmm_scaled(g, &edge_weights, x, schedule, mode.scaling, factors, options);
}

template <class T>
SpmmResult<T> spmm_v(const CooGraph& g, const Tensor<T>& x, const Schedule& schedule,
                     ReductionMode mode, const KernelOptions& options) {
  check_mode(mode);
  const auto factors = degree_scaling<T>(row_degrees(g), mode.norm);
  return spmm_scaled<T>(g, nullptr, x, schedule, mode.scaling, factors, options);
}

template <class T>
SpmmResult<T> spmm_vertex_grouped(const CsrGraph& g, const Tensor<T>& x, ReductionMode mode,
                                  WriteMode write, const KernelOptions& options) {
  check_mode(mode);
  const CooGraph coo = csr_to_coo(g);
  const Schedule schedule = plan_vertex_parallel_grouped(g, options.warps_per_cta);
  const auto factors = degree_scaling<T>(g.degrees(), mode.norm);
  KernelOptions opts = options;
  opts.write = write;
  return spmm_scaled<T>(coo, nullptr, x, schedule, mode.scaling, factors, opts);
}

template <class T>
SddmmResult<T> sddmm(const CooGraph& g, const Tensor<T>& x, const Tensor<T>& y,
                     const Schedule& schedule, VectorWidth width) {
  if (width == VectorWidth::kHalf) {
    throw ConfigError("SDDMM loads features as half2, half4 or half8");
  }
  if (x.cols() != y.cols()) throw ShapeError("SDDMM operands differ in feature length");
  if (x.rows() != g.num_vertices() || y.rows() != g.num_vertices()) {
    throw ShapeError("SDDMM operands must have |V| rows");
  }
  const std::size_t F = x.cols();
  const SubWarpLayout layout = subwarp_layout(F, width);  // throws if F % lanes != 0
  validate_schedule(schedule, g);

  using P = PairOps<T>;
  using V = typename P::V;
  const std::size_t pairs = F / 2;
  SddmmResult<T> result;
  result.out = Tensor<T>(g.num_edges(), 1, Arith<T>::zero());
  result.metrics.coalesced_bytes_per_warp_load = warp_load_bytes(width);
  result.metrics.shuffle_rounds = ceil_log2(layout.threads_per_edge);

  std::vector<T> partial(pairs);
  for (const WarpRange& range : schedule.warps) {
    for (EdgeId e = range.begin; e < range.end; ++e) {
      const auto xr = x.row(g.rows()[e]);
      const auto yr = y.row(g.cols()[e]);
      for (std::size_t p = 0; p < pairs; ++p) {
        const V prod = P::mul(P::load(xr, p), P::load(yr, p));
        partial[p] = Arith<T>::add(prod.lo, prod.hi);
      }
      // Pairwise tree: the low levels are in-thread, the rest are shuffles.
      std::size_t count = pairs;
      while (count > 1) {
        const std::size_t half = count / 2;
        for (std::size_t k = 0; k < half; ++k) {
          partial[k] = Arith<T>::add(partial[2 * k], partial[2 * k + 1]);
        }
        if (count % 2 != 0) partial[half] = partial[count - 1];
        count = half + count % 2;
      }
      result.out(e, 0) = partial[0];
    }
    const std::uint64_t iterations = (range.size() + layout.subwarps - 1) / layout.subwarps;
    const std::uint64_t loads = iterations * 2 * layout.feature_chunks;
    result.metrics.load_transactions += loads;
    result.metrics.load_bytes += loads * warp_load_bytes(width);
    result.metrics.barrier_waits += iterations;
  }
  return result;
}

template <class T>
SpmmGradients<T> spmm_backward(const CooGraph& g, const Tensor<T>* edge_weights,
                               const Tensor<T>& dy, const Tensor<T>& x, ScalingMode scaling,
                               const DegreeScaling<T>& forward_factors,
                               const KernelOptions& options) {
  if (dy.rows() != g.num_vertices() || x.rows() != g.num_vertices() || dy.cols() != x.cols()) {
    throw ShapeError("backward operands must be |V| x F with matching F");
  }
  const TransposedGraph tg = transpose_with_map(g);
  std::optional<Tensor<T>> wt;
  if (edge_weights != nullptr) {
    wt.emplace(g.num_edges(), 1);
    for (EdgeId i = 0; i < g.num_edges(); ++i) (*wt)(i, 0) = (*edge_weights)(tg.source_edge[i], 0);
  }
  const Schedule st = plan_edge_parallel(tg.graph, options.warp_chunk, options.warps_per_cta);
  SpmmGradients<T> grads;
  grads.dx = spmm_scaled<T>(tg.graph, wt ? &*wt : nullptr, dy, st, scaling,
                            transpose_scaling(forward_factors), options)
                 .out;
  if (edge_weights != nullptr) {
    Tensor<T> dy_scaled = dy;
    Tensor<T> x_scaled = x;
    if (!forward_factors.output.empty()) {
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        for (T& v : dy_scaled.row(r)) v = Arith<T>::mul(v, forward_factors.output[r]);
      }
    }
    if (!forward_factors.input.empty()) {
      for (std::size_t c = 0; c < x.rows(); ++c) {
        for (T& v : x_scaled.row(c)) v = Arith<T>::mul(v, forward_factors.input[c]);
      }
    }
    const Schedule s = plan_edge_parallel(g, options.warp_chunk, options.warps_per_cta);
    grads.dw = sddmm<T>(g, dy_scaled, x_scaled, s, VectorWidth::kHalf2).out;
  }
  return grads;
}

namespace {

template <class T>
struct TaggedPartial {
  std::size_t warp;
  std::vector<T> value;
};

// Aligned pairwise tree over warp positions [lo, lo + size) of one CTA.
template <class T>
std::optional<std::vector<T>> tree_reduce(const std::vector<const std::vector<T>*>& slot,
                                          std::size_t lo, std::size_t size) {
  if (lo >= slot.size()) return std::nullopt;
  if (size == 1) {
    if (slot[lo] == nullptr) return std::nullopt;
    return *slot[lo];
  }
  auto left = tree_reduce(slot, lo, size / 2);
  auto right = tree_reduce(slot, lo + size / 2, size / 2);
  if (!left) return right;
  if (!right) return left;
  for (std::size_t f = 0; f < left->size(); ++f) {
    (*left)[f] = Arith<T>::add((*left)[f], (*right)[f]);
  }
  return left;
}

}  // namespace

template <class T>
Tensor<T> spmm_reference(const CooGraph& g, const Tensor<T>* edge_weights, const Tensor<T>& x,
                         const Schedule& schedule, ScalingMode scaling,
                         const DegreeScaling<T>& factors, WriteMode write) {
  using A = Arith<T>;
  validate_schedule(schedule, g);
  const std::size_t F = x.cols();
  const std::size_t batch = batch_edges_for(schedule, F);
  const auto rows = g.rows();
  const auto cols = g.cols();
  const bool has_in = !factors.input.empty();
  const bool has_out = !factors.output.empty();

  std::vector<std::vector<TaggedPartial<T>>> by_row(g.num_vertices());
  for (std::size_t w = 0; w < schedule.num_warps(); ++w) {
    const WarpRange range = schedule.warps[w];
    EdgeId s = range.begin;
    while (s < range.end) {
      const VertexId r = rows[s];
      EdgeId t = s;
      while (t < range.end && rows[t] == r) ++t;
      std::vector<T> acc(F, A::zero());
      EdgeId b = s;
      while (b < t) {
        const EdgeId boundary = range.begin + ((b - range.begin) / batch + 1) * batch;
        const EdgeId b_end = std::min(t, boundary);
        for (std::size_t f = 0; f < F; ++f) {
          T p = A::zero();
          for (EdgeId e = b; e < b_end; ++e) {
            T v = x(cols[e], f);
            if (has_in) v = A::mul(v, factors.input[cols[e]]);
            if (scaling == ScalingMode::kPre && has_out) v = A::mul(v, factors.output[r]);
            p = edge_weights != nullptr ? A::fma((*edge_weights)(e, 0), v, p) : A::add(p, v);
          }
          if (scaling == ScalingMode::kDiscretized && has_out) p = A::mul(p, factors.output[r]);
          acc[f] = A::add(acc[f], p);
        }
        b = b_end;
      }
      by_row[r].push_back({w, std::move(acc)});
      s = t;
    }
  }

  Tensor<T> y(g.num_vertices(), F, A::zero());
  std::size_t block = 1;
  while (block < schedule.warps_per_cta) block *= 2;

  for (std::size_t r = 0; r < g.num_vertices(); ++r) {
    const auto& parts = by_row[r];
    if (parts.empty()) continue;
    auto out = y.row(r);
    if (write == WriteMode::kAtomicModel) {
      if (parts.size() == 1) {
        std::copy(parts[0].value.begin(), parts[0].value.end(), out.begin());
      } else {
        for (const auto& p : parts) {
          for (std::size_t f = 0; f < F; ++f) out[f] = A::add(out[f], p.value[f]);
        }
      }
      continue;
    }
    std::vector<std::vector<T>> carries;
    std::size_t k = 0;
    while (k < parts.size()) {
      const std::size_t cta = parts[k].warp / schedule.warps_per_cta;
      const std::size_t first = schedule.cta_first_warp(cta);
      std::vector<const std::vector<T>*> slot(schedule.cta_end_warp(cta) - first, nullptr);
      for (; k < parts.size() && parts[k].warp / schedule.warps_per_cta == cta; ++k) {
        slot[parts[k].warp - first] = &parts[k].value;
      }
      std::vector<T> value = *tree_reduce(slot, 0, block);
      const EdgeId cta_last_edge = schedule.warps[schedule.cta_end_warp(cta) - 1].end - 1;
      if (rows[cta_last_edge] == r) {
        carries.push_back(std::move(value));
      } else {
        std::copy(value.begin(), value.end(), out.begin());
      }
    }
    if (!carries.empty()) {
      std::vector<T> sum = carries.front();
      for (std::size_t c = 1; c < carries.size(); ++c) {
        for (std::size_t f = 0; f < F; ++f) sum[f] = A::add(sum[f], carries[c][f]);
      }
      for (std::size_t f = 0; f < F; ++f) out[f] = A::add(out[f], sum[f]);
    }
  }

  if (scaling == ScalingMode::kPost && has_out) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      for (std::size_t f = 0; f < F; ++f) y(r, f) = A::mul(y(r, f), factors.output[r]);
    }
  }
  return y;
}

namespace {

template <class T>
T pairwise(const std::vector<T>& v, std::size_t lo, std::size_t size) {
  if (size == 1) return v[lo];
  const std::size_t left = size / 2;
  if (lo + left >= v.size()) return pairwise(v, lo, left);
  return Arith<T>::add(pairwise(v, lo, left), pairwise(v, lo + left, left));
}

}  // namespace

template <class T>
Tensor<T> sddmm_reference(const CooGraph& g, const Tensor<T>& x, const Tensor<T>& y) {
  using A = Arith<T>;
  if (x.cols() != y.cols() || x.cols() % 2 != 0) throw ShapeError("SDDMM operand mismatch");
  const std::size_t pairs = x.cols() / 2;
  std::size_t block = 1;
  while (block < pairs) block *= 2;
  Tensor<T> out(g.num_edges(), 1, A::zero());
  std::vector<T> leaves(pairs);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const std::size_t r = g.rows()[e];
    const std::size_t c = g.cols()[e];
    for (std::size_t p = 0; p < pairs; ++p) {
      leaves[p] = A::add(A::mul(x(r, 2 * p), y(c, 2 * p)),
                         A::mul(x(r, 2 * p + 1), y(c, 2 * p + 1)));
    }
    out(e, 0) = pairwise(leaves, 0, block);
  }
  return out;
}

template <class T>
std::pair<std::size_t, std::size_t> count_nonfinite(const Tensor<T>& t) {
  std::size_t inf = 0;
  std::size_t nan = 0;
  for (const T& v : t.data()) {
    if (Arith<T>::is_inf(v)) ++inf;
    if (Arith<T>::is_nan(v)) ++nan;
  }
  return {inf, nan};
}

#define HALFKERN_INSTANTIATE(T)                                                                  \
  template struct SpmmResult<T>;                                                                 \
  template DegreeScaling<T> degree_scaling<T>(std::span<const std::uint32_t>, Norm);             \
  template DegreeScaling<T> transpose_scaling<T>(const DegreeScaling<T>&);                       \
  template SpmmResult<T> spmm_scaled<T>(const CooGraph&, const Tensor<T>*, const Tensor<T>&,     \
                                        const Schedule&, ScalingMode, const DegreeScaling<T>&,   \
                                        const KernelOptions&);                                   \
  template SpmmResult<T> spmm_ve<T>(const CooGraph&, const Tensor<T>&, const Tensor<T>&,         \
                                    const Schedule&, ReductionMode, const KernelOptions&);       \
  template SpmmResult<T> spmm_v<T>(const CooGraph&, const Tensor<T>&, const Schedule&,           \
                                   ReductionMode, const KernelOptions&);                         \
  template SpmmResult<T> spmm_vertex_grouped<T>(const CsrGraph&, const Tensor<T>&,               \
                                                ReductionMode, WriteMode, const KernelOptions&); \
  template SddmmResult<T> sddmm<T>(const CooGraph&, const Tensor<T>&, const Tensor<T>&,          \
                                   const Schedule&, VectorWidth);                                \
  template CtaResolution<T> resolve_intra_cta<T>(std::span<const std::vector<RowPartial<T>>>);   \
  template void followup_pass<T>(const StagingBuffer<T>&, Tensor<T>&);                           \
  template SpmmGradients<T> spmm_backward<T>(const CooGraph&, const Tensor<T>*, const Tensor<T>&, \
                                             const Tensor<T>&, ScalingMode,                      \
                                             const DegreeScaling<T>&, const KernelOptions&);     \
  template Tensor<T> spmm_reference<T>(const CooGraph&, const Tensor<T>*, const Tensor<T>&,      \
                                       const Schedule&, ScalingMode, const DegreeScaling<T>&,    \
                                       WriteMode);                                               \
  template Tensor<T> sddmm_reference<T>(const CooGraph&, const Tensor<T>&, const Tensor<T>&);    \
  template std::pair<std::size_t, std::size_t> count_nonfinite<T>(const Tensor<T>&);

HALFKERN_INSTANTIATE(Half)
HALFKERN_INSTANTIATE(float)

#undef HALFKERN_INSTANTIATE

}  // namespace halfkern
