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

#include "halfkern/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace halfkern {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kGcn:
      return "gcn";
    case ModelKind::kGin:
      return "gin";
    case ModelKind::kGat:
      return "gat";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "gcn") return ModelKind::kGcn;
  if (s == "gin") return ModelKind::kGin;
  if (s == "gat") return ModelKind::kGat;
  throw ConfigError("unknown model '" + std::string(s) + "'");
}

std::string_view to_string(Precision p) { return p == Precision::kHalf ? "half" : "float32"; }

Precision parse_precision(std::string_view s) {
  if (s == "half") return Precision::kHalf;
  if (s == "float32" || s == "float") return Precision::kFloat32;
  throw ConfigError("unknown precision '" + std::string(s) + "'");
}

NonFinite OverflowCounters::totals() const {
  NonFinite t;
  for (const auto& [name, e] : entries_) {
    t.inf += e.inf;
    t.nan += e.nan;
  }
  return t;
}

std::string OverflowCounters::describe() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, e] : entries_) {
    if (e.inf == 0 && e.nan == 0) continue;
    if (!first) out << "; ";
    out << name << ": inf=" << e.inf << " nan=" << e.nan;
    first = false;
  }
  return out.str();
}

namespace {

template <class T>
using A = Arith<T>;

template <class T>
T smallest_positive() {
  if constexpr (std::is_same_v<T, Half>) {
    return half_constants::kMinSubnormal;
  } else {
    return std::numeric_limits<float>::denorm_min();
  }
}

template <class T>
void check_edge_tensor(const CooGraph& g, const Tensor<T>& t) {
  if (t.rows() != g.num_edges() || t.cols() != 1) throw ShapeError("edge tensor must be |E| x 1");
}

// Aligned pairwise sum of v[0..n) in place; returns the total.
template <class T>
T pairwise_sum(std::vector<T>& v) {
  if (v.empty()) return A<T>::zero();
  std::size_t count = v.size();
  while (count > 1) {
    const std::size_t half = count / 2;
    for (std::size_t k = 0; k < half; ++k) v[k] = A<T>::add(v[2 * k], v[2 * k + 1]);
    if (count % 2 != 0) v[half] = v[count - 1];
    count = half + count % 2;
  }
  return v[0];
}

}  // namespace

template <class T>
Tensor<T> shadow_exp(const Tensor<T>& t) {
  Tensor<T> out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const T x = t.data()[i];
    if (A<T>::is_nan(x) || A<T>::to_float(x) > 0.0f) {
      throw NumericError("shadow_exp requires inputs <= 0 (element " + std::to_string(i) + " is " +
                         std::to_string(A<T>::to_float(x)) + ")");
    }
    out.data()[i] = A<T>::exp(x);
  }
  return out;
}

template <class T>
Tensor<T> shadow_sum_rowwise(const CooGraph& g, const Tensor<T>& edge_values) {
  check_edge_tensor(g, edge_values);
  Tensor<T> out(g.num_vertices(), 1, A<T>::zero());
  const auto rows = g.rows();
  std::vector<T> buf;
  for (EdgeId s = 0; s < g.num_edges();) {
    EdgeId t = s;
    while (t < g.num_edges() && rows[t] == rows[s]) ++t;
    buf.assign(edge_values.data().begin() + static_cast<std::ptrdiff_t>(s),
               edge_values.data().begin() + static_cast<std::ptrdiff_t>(t));
    out(rows[s], 0) = pairwise_sum(buf);
    s = t;
  }
  return out;
}

template <class T>
Tensor<T> shadow_div(const CooGraph& g, const Tensor<T>& edge_values,
                     const Tensor<T>& row_values) {
  check_edge_tensor(g, edge_values);
  if (row_values.rows() != g.num_vertices() || row_values.cols() != 1) {
    throw ShapeError("row tensor must be |V| x 1");
  }
  Tensor<T> out(g.num_edges(), 1);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const T d = row_values(g.rows()[e], 0);
    if (!(A<T>::to_float(d) > 0.0f)) {
      throw NumericError("shadow_div requires a positive divisor for row " +
                         std::to_string(g.rows()[e]));
    }
    out(e, 0) = A<T>::div(edge_values(e, 0), d);
  }
  return out;
}

template <class T>
Tensor<T> upgraded_exp(const Tensor<T>& t, ConversionCounter& counter) {
  if constexpr (std::is_same_v<T, float>) {
    Tensor<float> out(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = std::exp(t.data()[i]);
    return out;
  } else {
    FloatTensor wide = to_float_tensor(t);
    ++counter.half_to_float;
    for (float& v : wide.data()) v = std::exp(v);
    ++counter.float_to_half;
    return to_half_tensor(wide);
  }
}

template <class T>
Tensor<T> edge_softmax(const CooGraph& g, const Tensor<T>& e, const MixedPrecisionPolicy& policy,
                       ConversionCounter& counter) {
  check_edge_tensor(g, e);
  const auto rows = g.rows();
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    if (A<T>::is_nan(e(i, 0)) || A<T>::is_inf(e(i, 0))) {
      throw NumericError("edge_softmax input " + std::to_string(i) + " is not finite");
    }
  }
  std::vector<T> row_max(g.num_vertices(), A<T>::zero());
  for (EdgeId s = 0; s < g.num_edges();) {
    T m = e(s, 0);
    EdgeId t = s + 1;
    for (; t < g.num_edges() && rows[t] == rows[s]; ++t) m = A<T>::max(m, e(t, 0));
    row_max[rows[s]] = m;
    s = t;
  }
  Tensor<T> shifted(g.num_edges(), 1);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    shifted(i, 0) = A<T>::sub(e(i, 0), row_max[rows[i]]);
  }
  const Tensor<T> p = policy.exp == OpPrecision::kShadow ? shadow_exp(shifted)
                                                         : upgraded_exp(shifted, counter);
  const Tensor<T> sums = shadow_sum_rowwise(g, p);
  Tensor<T> alpha = shadow_div(g, p, sums);
  for (T& a : alpha.data()) {
    if (!(A<T>::to_float(a) > 0.0f)) a = smallest_positive<T>();
  }
  return alpha;
}

GraphContext GraphContext::make(CooGraph g, const KernelOptions& kernel) {
  GraphContext c;
  c.transposed = transpose_with_map(g);
  c.schedule = plan_edge_parallel(g, kernel.warp_chunk, kernel.warps_per_cta);
  c.transposed_schedule =
      plan_edge_parallel(c.transposed.graph, kernel.warp_chunk, kernel.warps_per_cta);
  c.degrees = row_degrees(g);
  c.graph = std::move(g);
  c.kernel = kernel;
  return c;
}

Param::Param(std::string n, FloatTensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.rows(), value.cols(), 0.0f),
      m(value.rows(), value.cols(), 0.0f),
      v(value.rows(), value.cols(), 0.0f) {}

void Param::zero_grad() { std::fill(grad.data().begin(), grad.data().end(), 0.0f); }

namespace {

FloatTensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  FloatTensor w(in, out);
  for (float& v : w.data()) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
  return w;
}

// Weight values as the state precision sees them, widened for accumulation.
template <class T>
std::vector<float> quantized(const FloatTensor& w) {
  std::vector<float> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = A<T>::to_float(A<T>::from_float(w.data()[i]));
  }
  return out;
}

// out = a * w: a is n x k (state), w is k x m (master). Float accumulation.
template <class T>
Tensor<T> dense_forward(const Tensor<T>& a, const FloatTensor& w) {
  if (a.cols() != w.rows()) throw ShapeError("dense operand widths differ");
  const std::size_t k = w.rows();
  const std::size_t m = w.cols();
  const std::vector<float> wq = quantized<T>(w);
  Tensor<T> out(a.rows(), m);
  std::vector<float> acc(m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (std::size_t p = 0; p < k; ++p) {
      const float av = A<T>::to_float(a(i, p));
      const float* wr = wq.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += av * wr[j];
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) = A<T>::from_float(acc[j]);
  }
  return out;
}

// d = g * w^T: g is n x m, w is k x m. Float accumulation.
template <class T>
Tensor<T> dense_input_grad(const Tensor<T>& g, const FloatTensor& w) {
  const std::size_t k = w.rows();
  const std::size_t m = w.cols();
  const std::vector<float> wq = quantized<T>(w);
  Tensor<T> out(g.rows(), k);
  std::vector<float> grow(m);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) grow[j] = A<T>::to_float(g(i, j));
    for (std::size_t p = 0; p < k; ++p) {
      float acc = 0.0f;
      const float* wr = wq.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * wr[j];
      out(i, p) = A<T>::from_float(acc);
    }
  }
  return out;
}

// grad += a^T * g in float32.
template <class T>
void dense_weight_grad(const Tensor<T>& a, const Tensor<T>& g, FloatTensor& grad) {
  const std::size_t k = a.cols();
  const std::size_t m = g.cols();
  std::vector<float> grow(m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) grow[j] = A<T>::to_float(g(i, j));
    for (std::size_t p = 0; p < k; ++p) {
      const float av = A<T>::to_float(a(i, p));
      if (av == 0.0f) continue;
      float* gr = grad.data().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) gr[j] += av * grow[j];
    }
  }
}

template <class T>
bool positive(T x) {
  return A<T>::to_float(x) > 0.0f;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x.data()[i];
    out.data()[i] = (A<T>::is_nan(v) || positive(v)) ? v : A<T>::zero();
  }
  return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& dout, const Tensor<T>& pre) {
  Tensor<T> out(dout.rows(), dout.cols());
  for (std::size_t i = 0; i < dout.size(); ++i) {
    out.data()[i] = positive(pre.data()[i]) ? dout.data()[i] : A<T>::zero();
  }
  return out;
}

template <class T>
void record(const LayerContext<T>& ctx, const std::string& layer, const char* tensor,
            const Tensor<T>& t) {
  if (ctx.overflow != nullptr) ctx.overflow->record(layer + "/" + tensor, t);
}

template <class T>
Tensor<T> aggregate(const LayerContext<T>& ctx, const Tensor<T>& x, ScalingMode mode,
                    const DegreeScaling<T>& factors) {
  const GraphContext& gc = ctx.graph;
  return spmm_scaled<T>(gc.graph, nullptr, x, gc.schedule, mode, factors, gc.kernel).out;
}

template <class T>
Tensor<T> aggregate_transposed(const LayerContext<T>& ctx, const Tensor<T>* weights,
                               const Tensor<T>& x, ScalingMode mode,
                               const DegreeScaling<T>& forward_factors) {
  const GraphContext& gc = ctx.graph;
  return spmm_scaled<T>(gc.transposed.graph, weights, x, gc.transposed_schedule, mode,
                        transpose_scaling(forward_factors), gc.kernel)
      .out;
}

}  // namespace

template <class T>
GcnLayer<T>::GcnLayer(std::size_t in, std::size_t out, Norm n, Rng& rng)
    : weight("weight", glorot(in, out, rng)), norm(n) {}

template <class T>
Tensor<T> GcnLayer<T>::forward(const Tensor<T>& h, const LayerContext<T>& ctx) {
  input_ = h;
  z_ = dense_forward(h, weight.value);
  const auto factors = degree_scaling<T>(ctx.graph.degrees, norm);
  pre_ = aggregate(ctx, z_, ctx.reduction, factors);
  record(ctx, this->name, "transform", z_);
  record(ctx, this->name, "aggregate", pre_);
  return this->activation ? relu(pre_) : pre_;
}

template <class T>
Tensor<T> GcnLayer<T>::backward(const Tensor<T>& dout, bool need_input_grad,
                                const LayerContext<T>& ctx) {
  const Tensor<T> dpre = this->activation ? relu_backward(dout, pre_) : dout;
  const auto factors = degree_scaling<T>(ctx.graph.degrees, norm);
  const Tensor<T> dz = aggregate_transposed<T>(ctx, nullptr, dpre, ctx.reduction, factors);
  record(ctx, this->name, "grad_transform", dz);
  dense_weight_grad(input_, dz, weight.grad);
  if (!need_input_grad) return {};
  return dense_input_grad(dz, weight.value);
}

template <class T>
GinLayer<T>::GinLayer(std::size_t in, std::size_t out, double lam, Rng& rng)
    : w1("mlp1", glorot(in, std::max(in, out), rng)),
      w2("mlp2", glorot(std::max(in, out), out, rng)),
      eps("eps", FloatTensor(1, 1, 0.0f)),
      lambda(lam) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("GIN lambda must lie in (0, 1]");
}

template <class T>
Tensor<T> GinLayer<T>::forward(const Tensor<T>& h, const LayerContext<T>& ctx) {
  input_ = h;
  const auto mean = degree_scaling<T>(ctx.graph.degrees, Norm::kRight);
  agg_ = aggregate(ctx, h, ctx.reduction, mean);
  const T self = A<T>::from_float(1.0f + eps.value(0, 0));
  const T lam = A<T>::from_float(static_cast<float>(lambda));
  u_ = Tensor<T>(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.size(); ++i) {
    u_.data()[i] = A<T>::add(A<T>::mul(self, h.data()[i]), A<T>::mul(lam, agg_.data()[i]));
  }
  hidden_pre_ = dense_forward(u_, w1.value);
  hidden_ = relu(hidden_pre_);
  pre_ = dense_forward(hidden_, w2.value);
  record(ctx, this->name, "aggregate", agg_);
  record(ctx, this->name, "combine", u_);
  record(ctx, this->name, "mlp_hidden", hidden_pre_);
  record(ctx, this->name, "mlp_out", pre_);
  return this->activation ? relu(pre_) : pre_;
}

template <class T>
Tensor<T> GinLayer<T>::backward(const Tensor<T>& dout, bool need_input_grad,
                                const LayerContext<T>& ctx) {
  const Tensor<T> dpre = this->activation ? relu_backward(dout, pre_) : dout;
  dense_weight_grad(hidden_, dpre, w2.grad);
  const Tensor<T> dhidden = relu_backward(dense_input_grad(dpre, w2.value), hidden_pre_);
  dense_weight_grad(u_, dhidden, w1.grad);
  const Tensor<T> du = dense_input_grad(dhidden, w1.value);
  record(ctx, this->name, "grad_combine", du);
  float deps = 0.0f;
  for (std::size_t i = 0; i < du.size(); ++i) {
    deps += A<T>::to_float(du.data()[i]) * A<T>::to_float(input_.data()[i]);
  }
  eps.grad(0, 0) += deps;
  if (!need_input_grad) return {};
  const auto mean = degree_scaling<T>(ctx.graph.degrees, Norm::kRight);
  const Tensor<T> back = aggregate_transposed<T>(ctx, nullptr, du, ctx.reduction, mean);
  const T self = A<T>::from_float(1.0f + eps.value(0, 0));
  const T lam = A<T>::from_float(static_cast<float>(lambda));
  Tensor<T> dx(du.rows(), du.cols());
  for (std::size_t i = 0; i < du.size(); ++i) {
    dx.data()[i] = A<T>::add(A<T>::mul(self, du.data()[i]), A<T>::mul(lam, back.data()[i]));
  }
  return dx;
}

template <class T>
GatLayer<T>::GatLayer(std::size_t in, std::size_t out, Rng& rng)
    : weight("weight", glorot(in, out, rng)),
      attn_l("attn_l", glorot(out, 1, rng)),
      attn_r("attn_r", glorot(out, 1, rng)) {}

namespace {

template <class T>
std::vector<T> cast_vector(const FloatTensor& v) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = A<T>::from_float(v.data()[i]);
  return out;
}

// Per-vertex dot product z[v] . a, folded with fma in the state precision.
template <class T>
std::vector<T> project(const Tensor<T>& z, const std::vector<T>& a) {
  std::vector<T> out(z.rows());
  for (std::size_t v = 0; v < z.rows(); ++v) {
    T acc = A<T>::zero();
    for (std::size_t k = 0; k < z.cols(); ++k) acc = A<T>::fma(z(v, k), a[k], acc);
    out[v] = acc;
  }
  return out;
}

}  // namespace

template <class T>
Tensor<T> GatLayer<T>::forward(const Tensor<T>& h, const LayerContext<T>& ctx) {
  const CooGraph& g = ctx.graph.graph;
  input_ = h;
  z_ = dense_forward(h, weight.value);
  const std::vector<T> el = project(z_, cast_vector<T>(attn_l.value));
  const std::vector<T> er = project(z_, cast_vector<T>(attn_r.value));
  score_ = Tensor<T>(g.num_edges(), 1);
  Tensor<T> e(g.num_edges(), 1);
  const T slope = A<T>::from_float(kSlope);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    const T s = A<T>::add(el[g.cols()[i]], er[g.rows()[i]]);
    score_(i, 0) = s;
    e(i, 0) = positive(s) ? s : A<T>::mul(slope, s);
  }
  record(ctx, this->name, "transform", z_);
  record(ctx, this->name, "score", e);
  ConversionCounter scratch;
  alpha_ = edge_softmax(g, e, ctx.policy, ctx.conversions ? *ctx.conversions : scratch);
  record(ctx, this->name, "alpha", alpha_);
  pre_ = spmm_scaled<T>(g, &alpha_, z_, ctx.graph.schedule, ScalingMode::kPost, {},
                        ctx.graph.kernel)
             .out;
  record(ctx, this->name, "aggregate", pre_);
  return this->activation ? relu(pre_) : pre_;
}

template <class T>
Tensor<T> GatLayer<T>::backward(const Tensor<T>& dout, bool need_input_grad,
                                const LayerContext<T>& ctx) {
  const GraphContext& gc = ctx.graph;
  const CooGraph& g = gc.graph;
  const Tensor<T> dpre = this->activation ? relu_backward(dout, pre_) : dout;

  Tensor<T> alpha_t(g.num_edges(), 1);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    alpha_t(i, 0) = alpha_(gc.transposed.source_edge[i], 0);
  }
  Tensor<T> dz = spmm_scaled<T>(gc.transposed.graph, &alpha_t, dpre, gc.transposed_schedule,
                                ScalingMode::kPost, {}, gc.kernel)
                     .out;
  const Tensor<T> dalpha = sddmm<T>(g, dpre, z_, gc.schedule, VectorWidth::kHalf2).out;

  // Softmax backward: de = alpha * (dalpha - sum_row(alpha * dalpha)).
  const auto rows = g.rows();
  const auto cols = g.cols();
  Tensor<T> ds(g.num_edges(), 1);
  const T slope = A<T>::from_float(kSlope);
  for (EdgeId s = 0; s < g.num_edges();) {
    EdgeId t = s;
    T dot = A<T>::zero();
    for (; t < g.num_edges() && rows[t] == rows[s]; ++t) {
      dot = A<T>::fma(alpha_(t, 0), dalpha(t, 0), dot);
    }
    for (EdgeId i = s; i < t; ++i) {
      const T de = A<T>::mul(alpha_(i, 0), A<T>::sub(dalpha(i, 0), dot));
      ds(i, 0) = positive(score_(i, 0)) ? de : A<T>::mul(slope, de);
    }
    s = t;
  }
  record(ctx, this->name, "grad_score", ds);

  std::vector<T> del(g.num_vertices(), A<T>::zero());
  std::vector<T> der(g.num_vertices(), A<T>::zero());
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    del[cols[i]] = A<T>::add(del[cols[i]], ds(i, 0));
    der[rows[i]] = A<T>::add(der[rows[i]], ds(i, 0));
  }
  const std::vector<T> al = cast_vector<T>(attn_l.value);
  const std::vector<T> ar = cast_vector<T>(attn_r.value);
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    const float dl = A<T>::to_float(del[v]);
    const float dr = A<T>::to_float(der[v]);
    for (std::size_t k = 0; k < z_.cols(); ++k) {
      attn_l.grad(k, 0) += A<T>::to_float(z_(v, k)) * dl;
      attn_r.grad(k, 0) += A<T>::to_float(z_(v, k)) * dr;
      dz(v, k) = A<T>::fma(del[v], al[k], A<T>::fma(der[v], ar[k], dz(v, k)));
    }
  }
  record(ctx, this->name, "grad_transform", dz);
  dense_weight_grad(input_, dz, weight.grad);
  if (!need_input_grad) return {};
  return dense_input_grad(dz, weight.value);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(std::string_view key, std::string_view v) {
  N out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

}  // namespace

void apply_config_value(TrainConfig& c, std::string_view key, std::string_view value) {
  if (key == "model") {
    c.model = parse_model_kind(value);
  } else if (key == "layers") {
    c.layers = parse_number<std::size_t>(key, value);
    if (c.layers == 0) throw ConfigError("layers must be positive");
  } else if (key == "hidden") {
    c.hidden = parse_number<std::size_t>(key, value);
    if (c.hidden == 0) throw ConfigError("hidden must be positive");
  } else if (key == "epochs") {
    c.epochs = parse_number<std::size_t>(key, value);
  } else if (key == "lr") {
    c.lr = parse_number<double>(key, value);
    if (!(c.lr >= 0.0)) throw ConfigError("lr must be non-negative");
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "norm") {
    c.norm = parse_norm(value);
  } else if (key == "lambda") {
    c.lambda = parse_number<double>(key, value);
    if (!(c.lambda > 0.0 && c.lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  } else if (key == "mode" || key == "precision") {
    c.precision = parse_precision(value);
  } else if (key == "reduction" || key == "reduction_mode" || key == "reduction-mode") {
    c.reduction = parse_scaling_mode(value);
  } else if (key == "exp") {
    if (value == "shadow") {
      c.exp_precision = OpPrecision::kShadow;
    } else if (value == "float") {
      c.exp_precision = OpPrecision::kFloatUpgrade;
    } else {
      throw ConfigError("exp must be 'shadow' or 'float'");
    }
  } else if (key == "self_loops") {
    c.self_loops = parse_bool(key, value);
  } else if (key == "threads") {
    c.threads = parse_number<std::size_t>(key, value);
    if (c.threads == 0) throw ConfigError("threads must be positive");
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

TrainConfig parse_train_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_config_value(base, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

double cross_entropy(const FloatTensor& logits, std::span<const std::uint32_t> labels,
                     std::span<const std::uint8_t> mask, std::size_t classes, FloatTensor* grad) {
  if (grad != nullptr) *grad = FloatTensor(logits.rows(), logits.cols(), 0.0f);
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) count += mask[i] != 0;
  if (count == 0) return 0.0;
  double loss = 0.0;
  std::vector<double> p(classes);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (mask[i] == 0) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) m = std::max(m, double(logits(i, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(double(logits(i, c)) - m);
      z += p[c];
    }
    loss += std::log(z) + m - double(logits(i, labels[i]));
    if (std::isnan(m)) loss = std::numeric_limits<double>::quiet_NaN();
    if (grad != nullptr) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = c == labels[i] ? 1.0 : 0.0;
        (*grad)(i, c) = static_cast<float>((p[c] / z - target) / static_cast<double>(count));
      }
    }
  }
  return loss / static_cast<double>(count);
}

double accuracy(const FloatTensor& logits, std::span<const std::uint32_t> labels,
                std::span<const std::uint8_t> mask, std::size_t classes) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (mask[i] == 0) continue;
    ++total;
    std::size_t best = 0;
    bool valid = !std::isnan(logits(i, 0));
    for (std::size_t c = 1; c < classes; ++c) {
      valid = valid && !std::isnan(logits(i, c));
      if (logits(i, c) > logits(i, best)) best = c;
    }
    correct += valid && best == labels[i];
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& records) {
  out << "epoch,loss,train_acc,val_acc,inf_count,nan_count\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << r.loss << ',' << r.train_acc << ',' << r.val_acc << ','
        << r.inf_count << ',' << r.nan_count << '\n';
  }
}

namespace {

template <class T>
std::unique_ptr<Layer<T>> make_layer(const TrainConfig& c, std::size_t in, std::size_t out,
                                     Rng& rng) {
  switch (c.model) {
    case ModelKind::kGcn:
      return std::make_unique<GcnLayer<T>>(in, out, c.norm, rng);
    case ModelKind::kGin:
      return std::make_unique<GinLayer<T>>(in, out, c.lambda, rng);
    case ModelKind::kGat:
      return std::make_unique<GatLayer<T>>(in, out, rng);
  }
  throw ConfigError("unknown model");
}

void adam_step(Param& p, double lr, std::size_t step) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad.data()[i];
    const double m = kBeta1 * p.m.data()[i] + (1.0 - kBeta1) * g;
    const double v = kBeta2 * p.v.data()[i] + (1.0 - kBeta2) * g * g;
    p.m.data()[i] = static_cast<float>(m);
    p.v.data()[i] = static_cast<float>(v);
    p.value.data()[i] -= static_cast<float>(lr * (m / c1) / (std::sqrt(v / c2) + kEps));
  }
}

template <class T>
FloatTensor widen(const Tensor<T>& t, ConversionCounter& counter) {
  if constexpr (std::is_same_v<T, Half>) {
    ++counter.half_to_float;
    return to_float_tensor(t);
  } else {
    return t;
  }
}

template <class T>
Tensor<T> narrow(const FloatTensor& t, ConversionCounter& counter) {
  if constexpr (std::is_same_v<T, Half>) {
    ++counter.float_to_half;
    return to_half_tensor(t);
  } else {
    return t;
  }
}

template <class T>
TrainResult train_impl(const TrainConfig& config, const LabeledGraph& data,
                       const DataSplit& split) {
  const std::size_t n = data.graph.num_vertices();
  if (data.features.rows() != n || data.labels.size() != n || split.train.size() != n ||
      split.val.size() != n) {
    throw ShapeError("features, labels and split must cover every vertex");
  }
  KernelOptions kernel;
  kernel.threads = config.threads;
  const GraphContext gc =
      GraphContext::make(config.self_loops ? add_self_loops(data.graph) : data.graph, kernel);

  Tensor<T> x;
  {
    const FloatTensor padded = pad_feature_length(data.features, 2);
    if constexpr (std::is_same_v<T, Half>) {
      x = to_half_tensor(padded);
    } else {
      x = padded;
    }
  }
  const std::size_t classes = data.num_classes;
  const std::size_t out_width = (classes + 1) / 2 * 2;
  const std::size_t hidden = (config.hidden + 1) / 2 * 2;

  Rng rng(config.seed);
  std::vector<std::unique_ptr<Layer<T>>> layers;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? x.cols() : hidden;
    const std::size_t out = l + 1 == config.layers ? out_width : hidden;
    auto layer = make_layer<T>(config, in, out, rng);
    layer->name = "layer" + std::to_string(l + 1);
    layer->activation = l + 1 != config.layers;
    layers.push_back(std::move(layer));
  }
  std::vector<Param*> params;
  for (auto& l : layers) {
    for (Param* p : l->params()) params.push_back(p);
  }

  TrainResult result;
  MixedPrecisionPolicy policy;
  policy.state = precision_of<T>();
  policy.exp = config.exp_precision;
  OverflowCounters overflow;
  ConversionCounter conversions;
  const LayerContext<T> ctx{gc, config.reduction, policy, &conversions, &overflow};

  auto forward = [&] {
    Tensor<T> h = x;
    for (auto& l : layers) h = l->forward(h, ctx);
    overflow.record("output/logits", h);
    return widen(h, conversions);
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    overflow.clear();
    const ConversionCounter before = conversions;
    const FloatTensor logits = forward();
    FloatTensor grad;
    const double loss = cross_entropy(logits, data.labels, split.train, classes, &grad);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.train_acc = accuracy(logits, data.labels, split.train, classes);
    rec.val_acc = accuracy(logits, data.labels, split.val, classes);
    if (epoch == 1) result.initial_train_acc = rec.train_acc;
    if (!std::isfinite(loss)) {
      const NonFinite t = overflow.totals();
      rec.inf_count = t.inf;
      rec.nan_count = t.nan;
      result.epochs.push_back(rec);
      ++result.nan_steps;
      result.aborted = true;
      result.abort_reason = "loss is " + std::string(std::isnan(loss) ? "NaN" : "infinite") +
                            " at epoch " + std::to_string(epoch) + " (" + overflow.describe() +
                            ")";
      result.overflow = overflow;
      result.final_loss = loss;
      result.final_train_acc = rec.train_acc;
      result.final_val_acc = rec.val_acc;
      result.conversions = conversions;
      return result;
    }
    for (Param* p : params) p->zero_grad();
    Tensor<T> g = narrow<T>(grad, conversions);
    for (std::size_t l = layers.size(); l-- > 0;) {
      g = layers[l]->backward(g, l > 0, ctx);
    }
    for (Param* p : params) adam_step(*p, config.lr, epoch);
    if (epoch == 1) {
      result.conversions_per_step.half_to_float = conversions.half_to_float - before.half_to_float;
      result.conversions_per_step.float_to_half = conversions.float_to_half - before.float_to_half;
    }
    const NonFinite t = overflow.totals();
    rec.inf_count = t.inf;
    rec.nan_count = t.nan;
    result.epochs.push_back(rec);
  }

  overflow.clear();
  const FloatTensor logits = forward();
  result.final_loss = cross_entropy(logits, data.labels, split.train, classes, nullptr);
  result.final_train_acc = accuracy(logits, data.labels, split.train, classes);
  result.final_val_acc = accuracy(logits, data.labels, split.val, classes);
  if (config.epochs == 0) result.initial_train_acc = result.final_train_acc;
  result.overflow = overflow;
  result.conversions = conversions;
  for (const Param* p : params) {
    result.masters_float32 = result.masters_float32 && p->value.precision() == Precision::kFloat32;
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const LabeledGraph& data, const DataSplit& split) {
  if (config.precision == Precision::kHalf) return train_impl<Half>(config, data, split);
  return train_impl<float>(config, data, split);
}

#define HALFKERN_INSTANTIATE(T)                                                               \
  template Tensor<T> shadow_exp<T>(const Tensor<T>&);                                         \
  template Tensor<T> shadow_sum_rowwise<T>(const CooGraph&, const Tensor<T>&);                \
  template Tensor<T> shadow_div<T>(const CooGraph&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> upgraded_exp<T>(const Tensor<T>&, ConversionCounter&);                   \
  template Tensor<T> edge_softmax<T>(const CooGraph&, const Tensor<T>&,                       \
                                     const MixedPrecisionPolicy&, ConversionCounter&);        \
  template class GcnLayer<T>;                                                                 \
  template class GinLayer<T>;                                                                 \
  template class GatLayer<T>;

HALFKERN_INSTANTIATE(Half)
HALFKERN_INSTANTIATE(float)

#undef HALFKERN_INSTANTIATE

}  // namespace halfkern
