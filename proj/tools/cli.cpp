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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "halfkern/kernels.hpp"
#include "halfkern/models.hpp"

namespace halfkern::cli {
namespace {

using nlohmann::json;

struct Options {
  std::string graph;
  std::string synth;
  bool symmetrize = false;
  std::string features = "random";
  std::size_t feature_dim = 32;
  double feature_scale = 1.0;
  std::uint64_t seed = 1;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::string width = "half2";
  std::string mode = "discretized";
  std::string norm = "right";
  std::string precision = "half";
  std::size_t warp_chunk = 128;
  std::size_t warps_per_cta = 4;
  std::string schedule = "edge";
  std::string write = "staging";
  std::string out_dir;

  // bench
  std::string kernel;

  // train
  std::string config_file;
  std::string model = "gcn";
  std::size_t epochs = 200;
  std::size_t layers = 2;
  std::size_t hidden = 16;
  double lr = 1e-2;
  double lambda = 0.1;
  std::string exp = "shadow";
  bool self_loops = false;
  bool baseline = false;
  std::string features_file;
  std::string labels_file;
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

template <class N>
N number(const std::string& key, const std::string& v) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad value '" + v + "' for synth key " + key);
  }
  return out;
}

struct Dataset {
  CooGraph graph;
  FloatTensor features;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;
  std::string source;
};

// "kind:key=value,key=value".
std::pair<std::string, std::map<std::string, std::string>> split_synth(const std::string& spec) {
  const auto colon = spec.find(':');
  std::pair<std::string, std::map<std::string, std::string>> out;
  out.first = spec.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::istringstream rest(spec.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synth item '" + item + "' is not key=value");
    out.second[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

FloatTensor generated_features(std::size_t n, std::size_t f, const Options& o) {
  FloatTensor x(n, f);
  if (o.features == "constant") {
    std::fill(x.data().begin(), x.data().end(), static_cast<float>(o.feature_scale));
    return x;
  }
  Rng rng(o.seed ^ 0x5eedf00dULL);
  for (float& v : x.data()) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * o.feature_scale);
  return x;
}

Dataset load_dataset(const Options& o) {
  if (o.features != "random" && o.features != "constant") {
    throw ConfigError("--features must be random or constant");
  }
  if (!o.graph.empty() && !o.synth.empty()) throw ConfigError("use either --graph or --synth");
  Dataset d;
  if (!o.graph.empty()) {
    d.graph = load_edge_list_file(o.graph);
    d.source = "file:" + std::filesystem::path(o.graph).filename().string();
  } else if (!o.synth.empty()) {
    const auto [kind, kv] = split_synth(o.synth);
    d.source = o.synth;
    if (kind == "sbm") {
      SbmSpec spec;
      spec.feature_dim = o.feature_dim;
      spec.seed = o.seed;
      spec.feature_scale = o.feature_scale;
      for (const auto& [key, value] : kv) {
        if (key == "n") {
          spec.num_vertices = number<std::size_t>(key, value);
        } else if (key == "k") {
          spec.num_classes = number<std::size_t>(key, value);
        } else if (key == "pin") {
          spec.p_in = number<double>(key, value);
        } else if (key == "pout") {
          spec.p_out = number<double>(key, value);
        } else if (key == "f") {
          spec.feature_dim = number<std::size_t>(key, value);
        } else if (key == "scale") {
          spec.feature_scale = number<double>(key, value);
        } else if (key == "noise") {
          spec.noise_std = number<double>(key, value);
        } else {
          throw ConfigError("unknown sbm key '" + key + "'");
        }
      }
      LabeledGraph g = synth_sbm(spec);
      d.graph = std::move(g.graph);
      d.labels = std::move(g.labels);
      d.num_classes = g.num_classes;
      d.features = o.features == "constant"
                       ? generated_features(d.graph.num_vertices(), spec.feature_dim, o)
                       : std::move(g.features);
    } else if (kind == "star") {
      std::size_t leaves = 1024;
      for (const auto& [key, value] : kv) {
        if (key != "leaves") throw ConfigError("unknown star key '" + key + "'");
        leaves = number<std::size_t>(key, value);
      }
      std::vector<VertexId> rows(leaves, 0);
      std::vector<VertexId> cols(leaves);
      for (std::size_t i = 0; i < leaves; ++i) cols[i] = static_cast<VertexId>(i + 1);
      d.graph = CooGraph(std::move(rows), std::move(cols), leaves + 1);
    } else {
      throw ConfigError("unknown synth kind '" + kind + "' (expected sbm or star)");
    }
  } else {
    throw ConfigError("one of --graph or --synth is required");
  }
  if (o.symmetrize) d.graph = symmetrize(d.graph);
  if (d.features.size() == 0) {
    d.features = generated_features(d.graph.num_vertices(), o.feature_dim, o);
  }
  return d;
}

template <class T>
Tensor<T> cast(const FloatTensor& t) {
  if constexpr (std::is_same_v<T, Half>) {
    return to_half_tensor(t);
  } else {
    return t;
  }
}

template <class T>
std::vector<double> widen(const Tensor<T>& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = Arith<T>::to_float(t.data()[i]);
  return out;
}

template <class T>
std::optional<std::size_t> first_difference(const Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!Arith<T>::same(a.data()[i], b.data()[i])) return i;
  }
  return std::nullopt;
}

json graph_summary(const CooGraph& g) {
  const auto degrees = row_degrees(g);
  std::uint32_t max_degree = 0;
  for (const auto d : degrees) max_degree = std::max(max_degree, d);
  return {{"vertices", g.num_vertices()}, {"edges", g.num_edges()}, {"max_degree", max_degree}};
}

json error_summary(const std::vector<double>& got, const std::vector<double>& want) {
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::size_t compared = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (!std::isfinite(got[i])) continue;
    ++compared;
    const double err = std::fabs(got[i] - want[i]);
    max_abs = std::max(max_abs, err);
    max_rel = std::max(max_rel, err / std::max(std::fabs(want[i]), 1e-6));
  }
  return {{"compared", compared}, {"max_abs_error", max_abs}, {"max_rel_error", max_rel}};
}

KernelOptions kernel_options(const Options& o) {
  KernelOptions k;
  k.width = parse_vector_width(o.width);
  k.write = parse_write_mode(o.write);
  k.threads = o.threads;
  k.warp_chunk = o.warp_chunk;
  k.warps_per_cta = o.warps_per_cta;
  return k;
}

json kernel_config(const Options& o, const Dataset& d) {
  return {{"graph", d.source},
          {"symmetrize", o.symmetrize},
          {"feature_dim", d.features.cols()},
          {"features", o.features},
          {"feature_scale", o.feature_scale},
          {"width", o.width},
          {"mode", o.mode},
          {"norm", o.norm},
          {"schedule", o.schedule},
          {"write", o.write},
          {"warp_chunk", o.warp_chunk},
          {"warps_per_cta", o.warps_per_cta},
          {"seed", o.seed},
          {"precision", o.precision},
          {"threads", o.threads}};
}

template <class T>
int bench(const Options& o, json& report) {
  const Dataset d = load_dataset(o);
  const CooGraph& g = d.graph;
  const KernelOptions k = kernel_options(o);
  const Tensor<T> x = cast<T>(d.features);
  const std::size_t f = x.cols();
  report["config"] = kernel_config(o, d);
  report["config"]["kernel"] = o.kernel;
  report["graph"] = graph_summary(g);

  Tensor<T> out;
  Tensor<T> reference;
  std::vector<double> dense(g.num_vertices() * f, 0.0);
  json& summary = report["result"];
  if (o.kernel == "sddmm") {
    const Schedule s = plan_edge_parallel(g, o.warp_chunk, o.warps_per_cta);
    const auto r = sddmm<T>(g, x, x, s, k.width);
    out = r.out;
    reference = sddmm_reference<T>(g, x, x);
    summary["metrics"] = r.metrics;
    const std::vector<double> xd = widen(x);
    dense.assign(g.num_edges(), 0.0);
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
      for (std::size_t j = 0; j < f; ++j) {
        dense[e] += xd[g.rows()[e] * f + j] * xd[g.cols()[e] * f + j];
      }
    }
  } else if (o.kernel == "spmmv" || o.kernel == "spmmve") {
    const ReductionMode mode{parse_scaling_mode(o.mode), parse_norm(o.norm)};
    std::optional<Tensor<T>> weights;
    if (o.kernel == "spmmve") {
      Rng rng(o.seed ^ 0xed9eULL);
      FloatTensor w(g.num_edges(), 1);
      for (float& v : w.data()) v = static_cast<float>(1.0 - rng.uniform());
      weights = cast<T>(w);
    }
    SpmmResult<T> r;
    Schedule s;
    if (o.schedule == "vertex") {
      if (weights) throw ConfigError("the vertex schedule runs spmmv only");
      const CsrGraph csr = coo_to_csr(g);
      s = plan_vertex_parallel_grouped(csr, o.warps_per_cta);
      r = spmm_vertex_grouped<T>(csr, x, mode, k.write, k);
    } else if (o.schedule == "edge") {
      s = plan_edge_parallel(g, o.warp_chunk, o.warps_per_cta);
      r = weights ? spmm_ve<T>(g, *weights, x, s, mode, k) : spmm_v<T>(g, x, s, mode, k);
    } else {
      throw ConfigError("--schedule must be edge or vertex");
    }
    out = r.out;
    const auto factors = degree_scaling<T>(row_degrees(g), mode.norm);
    reference = spmm_reference<T>(g, weights ? &*weights : nullptr, x, s, mode.scaling, factors,
                                  k.write);
    summary["metrics"] = r.metrics;
    summary["batch_edges"] = r.batch_edges;
    summary["max_abs_term"] = r.max_abs_term;
    summary["batch_bound_holds"] = r.batch_bound_holds();
    const std::vector<double> xd = widen(x);
    const std::vector<double> wd = weights ? widen(*weights) : std::vector<double>{};
    std::vector<double> s_in(factors.input.size());
    std::vector<double> s_out(factors.output.size());
    for (std::size_t v = 0; v < s_in.size(); ++v) s_in[v] = Arith<T>::to_float(factors.input[v]);
    for (std::size_t v = 0; v < s_out.size(); ++v) {
      s_out[v] = Arith<T>::to_float(factors.output[v]);
    }
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
      const std::size_t r0 = g.rows()[e];
      const std::size_t c = g.cols()[e];
      const double scale = (weights ? wd[e] : 1.0) * (s_in.empty() ? 1.0 : s_in[c]);
      for (std::size_t j = 0; j < f; ++j) dense[r0 * f + j] += scale * xd[c * f + j];
    }
    if (!s_out.empty()) {
      for (std::size_t v = 0; v < g.num_vertices(); ++v) {
        for (std::size_t j = 0; j < f; ++j) dense[v * f + j] *= s_out[v];
      }
    }
  } else {
    throw ConfigError("--kernel must be spmmv, spmmve or sddmm");
  }

  const auto [inf, nan] = count_nonfinite(out);
  summary["overflow"] = {{"inf", inf}, {"nan", nan}};
  const auto diff = first_difference(out, reference);
  json oracle = {{"reference", "order-faithful scalar"}, {"bit_exact", !diff.has_value()}};
  if (diff) {
    oracle["first_difference"] = {{"row", *diff / out.cols()},
                                  {"col", *diff % out.cols()},
                                  {"kernel", Arith<T>::to_float(out.data()[*diff])},
                                  {"reference", Arith<T>::to_float(reference.data()[*diff])}};
  }
  oracle["dense_float64"] = error_summary(widen(out), dense);
  report["oracle"] = oracle;
  return diff ? kNumeric : kOk;
}

int compare(const Options& o, json& report) {
  Dataset d = load_dataset(o);
  const CooGraph& g = d.graph;
  // Values in {-1, 0, 1} keep every partial sum exact, so both write
  // modes must agree bit for bit whatever their merge order.
  Rng rng(o.seed);
  HalfTensor x(g.num_vertices(), o.feature_dim);
  for (Half& v : x.data()) v = to_half(static_cast<float>(static_cast<int>(rng.below(3)) - 1));
  const ReductionMode mode{parse_scaling_mode(o.mode), parse_norm(o.norm)};
  KernelOptions k = kernel_options(o);
  report["config"] = kernel_config(o, d);
  report["config"].erase("write");
  report["config"]["features"] = "integers in [-1, 1]";
  report["config"]["feature_dim"] = o.feature_dim;
  report["graph"] = graph_summary(g);

  auto run = [&](WriteMode w) {
    k.write = w;
    if (o.schedule == "vertex") return spmm_vertex_grouped<Half>(coo_to_csr(g), x, mode, w, k);
    if (o.schedule != "edge") throw ConfigError("--schedule must be edge or vertex");
    return spmm_v<Half>(g, x, plan_edge_parallel(g, o.warp_chunk, o.warps_per_cta), mode, k);
  };
  const SpmmResult<Half> staging = run(WriteMode::kStaging);
  const SpmmResult<Half> atomic = run(WriteMode::kAtomicModel);
  report["staging"] = {{"metrics", staging.metrics}};
  report["atomic_model"] = {{"metrics", atomic.metrics}};
  const auto diff = first_difference(staging.out, atomic.out);
  report["bit_exact"] = !diff.has_value();
  if (diff) {
    const std::size_t f = staging.out.cols();
    report["first_difference"] = {{"row", *diff / f},
                                  {"col", *diff % f},
                                  {"staging", to_float(staging.out.data()[*diff])},
                                  {"atomic_model", to_float(atomic.out.data()[*diff])}};
    return kNumeric;
  }
  return kOk;
}

int info(const Options& o, json& report) {
  const Dataset d = load_dataset(o);
  const CooGraph& g = d.graph;
  report["config"] = kernel_config(o, d);
  report["graph"] = graph_summary(g);
  const auto degrees = row_degrees(g);
  std::size_t isolated = 0;
  std::size_t over_warp = 0;
  for (const auto deg : degrees) {
    isolated += deg == 0;
    over_warp += deg > kWarpSize;
  }
  report["graph"]["rows_without_neighbours"] = isolated;
  report["graph"]["rows_over_32_neighbours"] = over_warp;
  const SubWarpLayout l = subwarp_layout(d.features.cols(), parse_vector_width(o.width));
  report["layout"] = {{"threads_per_edge", l.threads_per_edge},
                      {"subwarps", l.subwarps},
                      {"feature_chunks", l.feature_chunks},
                      {"coalesced_bytes_per_warp_load", warp_load_bytes(l.width)}};
  const Schedule s = plan_edge_parallel(g, o.warp_chunk, o.warps_per_cta);
  std::size_t spanning = 0;
  for (std::size_t w = 1; w < s.num_warps(); ++w) {
    const EdgeId b = s.warps[w].begin;
    spanning += g.rows()[b] == g.rows()[b - 1];
  }
  report["schedule"] = {{"warps", s.num_warps()},
                        {"ctas", s.num_ctas()},
                        {"warp_boundaries_inside_a_row", spanning},
                        {"batch_edges", batch_edges_for(s, d.features.cols())}};
  return kOk;
}

std::vector<std::uint32_t> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file " + path);
  std::vector<std::uint32_t> labels;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) throw ParseError("bad label", n);
    labels.push_back(v);
  }
  return labels;
}

int train_command(const Options& o, const CLI::App& sub, json& report, std::ostream& err) {
  TrainConfig c;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw IoError("cannot open config file " + o.config_file);
    c = parse_train_config(in, c);
  }
  // Explicit flags override the config file.
  auto set = [&](const char* flag, const char* key, const std::string& value) {
    if (sub.count(flag) > 0) apply_config_value(c, key, value);
  };
  set("--model", "model", o.model);
  set("--epochs", "epochs", std::to_string(o.epochs));
  set("--layers", "layers", std::to_string(o.layers));
  set("--hidden", "hidden", std::to_string(o.hidden));
  set("--lambda", "lambda", std::to_string(o.lambda));
  set("--norm", "norm", o.norm);
  set("--mode", "reduction", o.mode);
  set("--precision", "mode", o.precision);
  set("--exp", "exp", o.exp);
  set("--threads", "threads", std::to_string(o.threads));
  set("--seed", "seed", std::to_string(o.seed));
  if (sub.count("--lr") > 0) c.lr = o.lr;
  if (sub.count("--self-loops") > 0) c.self_loops = o.self_loops;
  if (c.lr < 0.0) throw ConfigError("--lr must be non-negative");

  Options data_options = o;
  if (data_options.graph.empty() && data_options.synth.empty()) data_options.synth = "sbm";
  data_options.seed = c.seed;
  Dataset d = load_dataset(data_options);
  if (!o.graph.empty()) {
    if (o.features_file.empty() || o.labels_file.empty()) {
      throw ConfigError("training on --graph needs --features-file and --labels-file");
    }
    std::ifstream in(o.features_file, std::ios::binary);
    if (!in) throw IoError("cannot open features file " + o.features_file);
    if (peek_tensor_precision(in) != Precision::kFloat32) {
      throw ConfigError("features file must hold a float32 tensor");
    }
    d.features = read_tensor<float>(in);
    d.labels = read_labels(o.labels_file);
    std::uint32_t top = 0;
    for (const auto l : d.labels) top = std::max(top, l);
    d.num_classes = d.labels.empty() ? 0 : top + 1;
  }
  if (d.labels.size() != d.graph.num_vertices() || d.features.rows() != d.graph.num_vertices()) {
    throw ConfigError("features and labels must cover every vertex");
  }
  LabeledGraph data{d.graph, d.features, d.labels, d.num_classes};
  const DataSplit split = make_split(d.graph.num_vertices(), c.seed);

  report["config"] = {{"graph", d.source},
                      {"model", to_string(c.model)},
                      {"layers", c.layers},
                      {"hidden", c.hidden},
                      {"epochs", c.epochs},
                      {"lr", c.lr},
                      {"seed", c.seed},
                      {"norm", to_string(c.norm)},
                      {"lambda", c.lambda},
                      {"precision", to_string(c.precision)},
                      {"reduction", to_string(c.reduction)},
                      {"exp", c.exp_precision == OpPrecision::kShadow ? "shadow" : "float"},
                      {"self_loops", c.self_loops},
                      {"threads", c.threads}};
  report["graph"] = graph_summary(d.graph);

  const TrainResult r = train(c, data, split);
  json overflow = json::object();
  for (const auto& [name, e] : r.overflow.entries()) {
    if (e.inf > 0 || e.nan > 0) overflow[name] = {{"inf", e.inf}, {"nan", e.nan}};
  }
  report["result"] = {{"epochs_run", r.epochs.size()},
                      {"initial_train_acc", r.initial_train_acc},
                      {"final_train_acc", r.final_train_acc},
                      {"final_val_acc", r.final_val_acc},
                      {"final_loss", std::isfinite(r.final_loss) ? json(r.final_loss) : json()},
                      {"nan_steps", r.nan_steps},
                      {"aborted", r.aborted},
                      {"overflow", overflow},
                      {"conversions_per_step",
                       {{"half_to_float", r.conversions_per_step.half_to_float},
                        {"float_to_half", r.conversions_per_step.float_to_half}}},
                      {"master_weights", r.masters_float32 ? "float32" : "state"}};
  if (r.aborted) report["result"]["abort_reason"] = r.abort_reason;

  if (o.baseline && c.precision == Precision::kHalf) {
    TrainConfig fc = c;
    fc.precision = Precision::kFloat32;
    const TrainResult fr = train(fc, data, split);
    report["float32_baseline"] = {
        {"final_train_acc", fr.final_train_acc},
        {"final_val_acc", fr.final_val_acc},
        {"train_acc_delta_pp", 100.0 * (r.final_train_acc - fr.final_train_acc)}};
  }

  if (!o.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    const auto path = std::filesystem::path(o.out_dir) / "train.csv";
    std::ofstream csv(path);
    if (!csv) throw IoError("cannot write " + path.string());
    write_epoch_csv(csv, r.epochs);
    report["csv"] = path.filename().string();
  }
  if (r.aborted) {
    err << "training aborted: " << r.abort_reason << '\n';
    return kNumeric;
  }
  return kOk;
}

void add_data_options(CLI::App* sub, Options& o) {
  sub->add_option("--graph", o.graph, "Edge-list file (src dst per line, 0-indexed)");
  sub->add_option("--synth", o.synth,
                  "Synthetic graph: sbm:n=..,k=..,pin=..,pout=..,f=..,scale=..,noise=.. or "
                  "star:leaves=..");
  sub->add_flag("--symmetrize", o.symmetrize, "Add the reverse of every edge");
  sub->add_option("--seed", o.seed, "Seed for generated graphs, features and weights");
  sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void add_kernel_options(CLI::App* sub, Options& o) {
  add_data_options(sub, o);
  sub->add_option("--feature-dim", o.feature_dim, "Feature length F");
  sub->add_option("--features", o.features, "Generated features: random or constant");
  sub->add_option("--feature-scale", o.feature_scale, "Feature magnitude");
  sub->add_option("--width", o.width, "Load width: half, half2, half4, half8");
  sub->add_option("--mode", o.mode, "Scaling mode: post, pre, discretized");
  sub->add_option("--norm", o.norm, "Degree norm: none, left, right, both");
  sub->add_option("--warp-chunk", o.warp_chunk, "Non-zeros per warp (even, >= 64)");
  sub->add_option("--warps-per-cta", o.warps_per_cta, "Warps per CTA");
  sub->add_option("--schedule", o.schedule, "edge or vertex (32-neighbour groups)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Half-precision sparse GNN kernels on a modelled SIMT machine"};
  app.name("halfkern");
  app.require_subcommand(1);

  CLI::App* bench_cmd = app.add_subcommand("bench", "Run one kernel against its references");
  add_kernel_options(bench_cmd, o);
  bench_cmd->add_option("--kernel", o.kernel, "spmmv, spmmve or sddmm")->required();
  bench_cmd->add_option("--precision", o.precision, "half or float32");
  bench_cmd->add_option("--write", o.write, "staging or atomic");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Staging buffer against the atomic-write model");
  add_kernel_options(compare_cmd, o);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a GCN, GIN or GAT model");
  add_data_options(train_cmd, o);
  train_cmd->add_option("--config", o.config_file, "key = value training config");
  train_cmd->add_option("--model", o.model, "gcn, gin or gat");
  train_cmd->add_option("--epochs", o.epochs);
  train_cmd->add_option("--layers", o.layers);
  train_cmd->add_option("--hidden", o.hidden);
  train_cmd->add_option("--lr", o.lr);
  train_cmd->add_option("--lambda", o.lambda, "GIN neighbour weight in (0, 1]");
  train_cmd->add_option("--norm", o.norm, "GCN degree norm");
  train_cmd->add_option("--mode", o.mode, "Aggregation scaling mode");
  train_cmd->add_option("--precision", o.precision, "half or float32");
  train_cmd->add_option("--exp", o.exp, "Edge-softmax exp: shadow or float");
  train_cmd->add_flag("--self-loops", o.self_loops);
  train_cmd->add_flag("--baseline", o.baseline, "Also train in float32 and report the gap");
  train_cmd->add_option("--features-file", o.features_file, "Float32 tensor for --graph");
  train_cmd->add_option("--labels-file", o.labels_file, "One label per line for --graph");
  train_cmd->add_option("--feature-scale", o.feature_scale, "Synthetic feature magnitude");
  train_cmd->add_option("--out", o.out_dir, "Directory for train.csv");

  CLI::App* info_cmd = app.add_subcommand("info", "Graph, layout and schedule summary");
  add_kernel_options(info_cmd, o);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  json report;
  report["command"] = app.get_subcommands().front()->get_name();
  report["timestamp"] = timestamp();
  int code = kOk;
  try {
    if (*bench_cmd) {
      const Precision p = parse_precision(o.precision);
      code = p == Precision::kHalf ? bench<Half>(o, report) : bench<float>(o, report);
    } else if (*compare_cmd) {
      code = compare(o, report);
    } else if (*train_cmd) {
      code = train_command(o, *train_cmd, report, err);
    } else {
      code = info(o, report);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
  out << report.dump(2) << '\n';
  return code;
}

}  // namespace halfkern::cli
