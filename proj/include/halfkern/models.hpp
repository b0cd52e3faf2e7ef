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

// GCN, GIN and GAT layers with hand-written backward passes, the shadow
// (precision-preserving) ops used by edge softmax, and a full-batch
// trainer with float32 master weights.
//
// Layers are templated on the state precision. Dense transforms take
// state-precision activations and float32 master weights, accumulate in
// float32 and round the result to the state precision. All sparse work
// goes through the kernels module.

#ifndef HALFKERN_MODELS_HPP_
#define HALFKERN_MODELS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "halfkern/kernels.hpp"
#include "halfkern/sparse.hpp"

namespace halfkern {

enum class ModelKind : std::uint8_t { kGcn, kGin, kGat };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

/// How an elementwise op treats a half input: compute in half (shadow) or
/// convert to float, compute, and convert back.
enum class OpPrecision : std::uint8_t { kShadow, kFloatUpgrade };

struct MixedPrecisionPolicy {
  Precision state = Precision::kHalf;
  OpPrecision exp = OpPrecision::kShadow;

  static MixedPrecisionPolicy shadow() { return {}; }
  static MixedPrecisionPolicy naive() { return {Precision::kHalf, OpPrecision::kFloatUpgrade}; }
};

/// Tensor-level conversions between state precision and float32. Master
/// weight casts are not activations and are not counted here.
struct ConversionCounter {
  std::uint64_t half_to_float = 0;
  std::uint64_t float_to_half = 0;
  std::uint64_t total() const { return half_to_float + float_to_half; }
};

struct NonFinite {
  std::size_t inf = 0;
  std::size_t nan = 0;
};

/// INF/NaN counts keyed by "layer<i>/<tensor>" for one step.
class OverflowCounters {
 public:
  template <class T>
  void record(const std::string& name, const Tensor<T>& t) {
    const auto [inf, nan] = count_nonfinite(t);
    NonFinite& e = entries_[name];
    e.inf += inf;
    e.nan += nan;
  }
  void clear() { entries_.clear(); }
  NonFinite totals() const;
  const std::map<std::string, NonFinite>& entries() const { return entries_; }
  /// "name: inf=.. nan=..; ..." for the entries with non-zero counts.
  std::string describe() const;

 private:
  std::map<std::string, NonFinite> entries_;
};

/// exp computed in the tensor's own precision. The caller guarantees
/// every input is <= 0 (result in [0, 1]); a positive or NaN input throws
/// NumericError.
template <class T>
Tensor<T> shadow_exp(const Tensor<T>& t);

/// Per-row sum of an edge tensor (pairwise tree over the row's edges),
/// |V| x 1, in the tensor's precision.
template <class T>
Tensor<T> shadow_sum_rowwise(const CooGraph& g, const Tensor<T>& edge_values);

/// edge_values[e] / row_values[row(e)]. Requires a positive divisor for
/// every row that has edges.
template <class T>
Tensor<T> shadow_div(const CooGraph& g, const Tensor<T>& edge_values,
                     const Tensor<T>& row_values);

/// exp through float32: one conversion in, one out.
template <class T>
Tensor<T> upgraded_exp(const Tensor<T>& t, ConversionCounter& counter);

/// Softmax over each row's edges with per-row max subtraction. Results
/// are floored at the smallest positive subnormal so alpha stays in
/// (0, 1]. Throws NumericError on INF or NaN coefficients.
template <class T>
Tensor<T> edge_softmax(const CooGraph& g, const Tensor<T>& e, const MixedPrecisionPolicy& policy,
                       ConversionCounter& counter);

/// Graph plus everything the layers reuse every step.
struct GraphContext {
  CooGraph graph;
  TransposedGraph transposed;
  Schedule schedule;
  Schedule transposed_schedule;
  std::vector<std::uint32_t> degrees;
  KernelOptions kernel;

  static GraphContext make(CooGraph g, const KernelOptions& kernel = {});
};

struct Param {
  std::string name;
  FloatTensor value;
  FloatTensor grad;
  FloatTensor m;
  FloatTensor v;

  Param(std::string n, FloatTensor init);
  void zero_grad();
};

template <class T>
struct LayerContext {
  const GraphContext& graph;
  ScalingMode reduction = ScalingMode::kDiscretized;
  MixedPrecisionPolicy policy;
  ConversionCounter* conversions = nullptr;
  OverflowCounters* overflow = nullptr;
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& h, const LayerContext<T>& ctx) = 0;
  /// Accumulates parameter gradients; returns dL/dh when `need_input_grad`.
  virtual Tensor<T> backward(const Tensor<T>& dout, bool need_input_grad,
                             const LayerContext<T>& ctx) = 0;
  virtual std::vector<Param*> params() = 0;

  std::string name = "layer";
  bool activation = true;
};

/// H' = relu(norm-scaled SpMMv(H W)).
template <class T>
class GcnLayer : public Layer<T> {
 public:
  GcnLayer(std::size_t in, std::size_t out, Norm norm, Rng& rng);
  Tensor<T> forward(const Tensor<T>& h, const LayerContext<T>& ctx) override;
  Tensor<T> backward(const Tensor<T>& dout, bool need_input_grad,
                     const LayerContext<T>& ctx) override;
  std::vector<Param*> params() override { return {&weight}; }

  Param weight;
  Norm norm;

 private:
  Tensor<T> input_;
  Tensor<T> z_;
  Tensor<T> pre_;
};

/// u = (1 + eps) x + lambda * mean_neighbours(x); H' = relu(mlp(u)) where
/// mlp = Linear -> relu -> Linear with hidden width max(in, out).
template <class T>
class GinLayer : public Layer<T> {
 public:
  GinLayer(std::size_t in, std::size_t out, double lambda, Rng& rng);
  Tensor<T> forward(const Tensor<T>& h, const LayerContext<T>& ctx) override;
  Tensor<T> backward(const Tensor<T>& dout, bool need_input_grad,
                     const LayerContext<T>& ctx) override;
  std::vector<Param*> params() override { return {&w1, &w2, &eps}; }

  /// The mlp input for the last forward call.
  const Tensor<T>& combined() const { return u_; }
  /// Pre-activation of the mlp's hidden layer.
  const Tensor<T>& mlp_hidden() const { return hidden_pre_; }

  Param w1;
  Param w2;
  Param eps;  // 1 x 1
  double lambda;

 private:
  Tensor<T> input_;
  Tensor<T> agg_;
  Tensor<T> u_;
  Tensor<T> hidden_pre_;
  Tensor<T> hidden_;
  Tensor<T> pre_;
};

/// Single-head attention: Z = H W, e(r,c) = leaky_relu(a_l.Z[c] + a_r.Z[r]),
/// alpha = edge_softmax(e), H' = relu(SpMMve(alpha, Z)).
template <class T>
class GatLayer : public Layer<T> {
 public:
  GatLayer(std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> forward(const Tensor<T>& h, const LayerContext<T>& ctx) override;
  Tensor<T> backward(const Tensor<T>& dout, bool need_input_grad,
                     const LayerContext<T>& ctx) override;
  std::vector<Param*> params() override { return {&weight, &attn_l, &attn_r}; }

  const Tensor<T>& attention() const { return alpha_; }
  /// Attention logits before the leaky relu, |E| x 1.
  const Tensor<T>& scores() const { return score_; }

  Param weight;
  Param attn_l;  // out x 1
  Param attn_r;  // out x 1
  static constexpr float kSlope = 0.2f;

 private:
  Tensor<T> input_;
  Tensor<T> z_;
  Tensor<T> score_;
  Tensor<T> alpha_;
  Tensor<T> pre_;
};

struct TrainConfig {
  ModelKind model = ModelKind::kGcn;
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::uint64_t seed = 1;
  Norm norm = Norm::kBoth;
  double lambda = 0.1;
  Precision precision = Precision::kHalf;
  ScalingMode reduction = ScalingMode::kDiscretized;
  OpPrecision exp_precision = OpPrecision::kShadow;
  bool self_loops = false;
  std::size_t threads = 1;
};

/// Flat "key = value" document; '#' starts a comment. Keys: model, layers,
/// hidden, epochs, lr, seed, norm, lambda, mode, reduction, exp, self_loops,
/// threads. Unknown keys or bad values throw ConfigError.
TrainConfig parse_train_config(std::istream& in, TrainConfig base = {});
void apply_config_value(TrainConfig& c, std::string_view key, std::string_view value);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::size_t inf_count = 0;
  std::size_t nan_count = 0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double initial_train_acc = 0.0;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  double final_loss = 0.0;
  std::size_t nan_steps = 0;
  bool aborted = false;
  std::string abort_reason;
  /// Counters of the aborting step, or of the last step.
  OverflowCounters overflow;
  ConversionCounter conversions;
  /// Conversions performed by one full forward + backward step.
  ConversionCounter conversions_per_step;
  bool masters_float32 = true;
};

/// Full-batch training on `data` with cross-entropy on the train split.
/// A NaN loss stops training with `aborted` set and the step's counters.
TrainResult train(const TrainConfig& config, const LabeledGraph& data, const DataSplit& split);

/// epoch,loss,train_acc,val_acc,inf_count,nan_count
void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& records);

/// Softmax cross-entropy over the masked rows of float logits; fills
/// `grad` (same shape) with dLoss/dlogits. Only the first `classes`
/// columns take part.
double cross_entropy(const FloatTensor& logits, std::span<const std::uint32_t> labels,
                     std::span<const std::uint8_t> mask, std::size_t classes, FloatTensor* grad);

double accuracy(const FloatTensor& logits, std::span<const std::uint32_t> labels,
                std::span<const std::uint8_t> mask, std::size_t classes);

}  // namespace halfkern

#endif  // HALFKERN_MODELS_HPP_
