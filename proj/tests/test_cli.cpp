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
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  Outcome o;
  o.code = halfkern::cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "halfkern_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "sbm:n=20", "--bogus"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "sbm:n=20", "--mode", "sideways"}).code == 2);
  CHECK(run({"bench", "--kernel", "conv", "--synth", "sbm:n=20"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "grid:n=3"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "sbm:n=20,q=1"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "sbm:n=20", "--warp-chunk", "48"}).code == 2);
  CHECK(run({"bench", "--kernel", "spmmv", "--synth", "sbm:n=20", "--norm", "none"}).code == 2);
  CHECK(run({"train", "--model", "mlp", "--synth", "sbm:n=20"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("I/O errors exit with 3") {
  CHECK(run({"bench", "--kernel", "spmmv", "--graph", "/nonexistent/edges.txt"}).code == 3);
  const auto bad = scratch("bad_edges.txt");
  std::ofstream(bad) << "0 1\n1 x\n";
  const Outcome o = run({"info", "--graph", bad.string()});
  CHECK(o.code == 3);
  CHECK(o.err.find("line 2") != std::string::npos);
  CHECK(run({"train", "--config", "/nonexistent/run.cfg"}).code == 3);
}

TEST_CASE("bench reports are deterministic apart from the timestamp") {
  const std::vector<std::string> args{"bench", "--kernel", "spmmve", "--synth", "sbm:n=300",
                                      "--feature-dim", "16", "--seed", "5"};
  json a = run(args).report();
  json b = run(args).report();
  a.erase("timestamp");
  b.erase("timestamp");
  CHECK(a.dump() == b.dump());
  CHECK(a["oracle"]["bit_exact"] == true);
}

TEST_CASE("sddmm width changes rounds, not outputs") {
  const Outcome narrow = run({"bench", "--kernel", "sddmm", "--synth", "sbm:n=200",
                              "--feature-dim", "32", "--width", "half2"});
  const Outcome wide = run({"bench", "--kernel", "sddmm", "--synth", "sbm:n=200",
                            "--feature-dim", "32", "--width", "half8"});
  REQUIRE(narrow.code == 0);
  REQUIRE(wide.code == 0);
  const json a = narrow.report();
  const json b = wide.report();
  CHECK(a["result"]["metrics"]["shuffle_rounds"] == 4);
  CHECK(b["result"]["metrics"]["shuffle_rounds"] == 2);
  CHECK(a["oracle"]["dense_float64"] == b["oracle"]["dense_float64"]);
}

TEST_CASE("star graph overflow: post against discretized") {
  auto star = [](const std::string& mode) {
    return run({"bench", "--kernel", "spmmve", "--synth", "star:leaves=1024", "--features",
                "constant", "--feature-scale", "30000", "--feature-dim", "32", "--mode", mode})
        .report();
  };
  const json post = star("post");
  const json disc = star("discretized");
  CHECK(post["result"]["overflow"]["inf"].get<int>() > 0);
  CHECK(disc["result"]["overflow"]["inf"] == 0);
  CHECK(disc["result"]["overflow"]["nan"] == 0);
  CHECK(disc["oracle"]["dense_float64"]["max_rel_error"].get<double>() < 0.01);
}

TEST_CASE("compare: staging against the atomic model") {
  const Outcome grouped =
      run({"compare", "--synth", "star:leaves=70", "--schedule", "vertex", "--mode", "post",
           "--norm", "none", "--feature-dim", "16"});
  REQUIRE(grouped.code == 0);
  const json g = grouped.report();
  CHECK(g["bit_exact"] == true);
  CHECK(g["atomic_model"]["metrics"]["atomic_writes"].get<int>() >= 2);
  CHECK(g["staging"]["metrics"]["atomic_writes"] == 0);

  // Four rows of 64 neighbours: every warp holds exactly one row.
  const auto path = scratch("rows64.txt");
  {
    std::ofstream f(path);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 64; ++c) f << r << ' ' << c << '\n';
    }
  }
  const json aligned = run({"compare", "--graph", path.string(), "--warp-chunk", "64", "--mode",
                            "post", "--norm", "none"})
                           .report();
  CHECK(aligned["bit_exact"] == true);
  CHECK(aligned["atomic_model"]["metrics"]["atomic_writes"] == 0);
  CHECK(aligned["staging"]["metrics"]["atomic_writes"] == 0);

  const json giant = run({"compare", "--synth", "star:leaves=2000", "--mode", "post", "--norm",
                          "none", "--feature-dim", "8", "--warp-chunk", "64"})
                         .report();
  CHECK(giant["bit_exact"] == true);
  CHECK(giant["staging"]["metrics"]["staging_writes"].get<int>() > 1);
  CHECK(giant["atomic_model"]["metrics"]["atomic_writes"].get<int>() > 0);
}

TEST_CASE("train writes a CSV and a float baseline") {
  const auto dir = scratch("run");
  std::filesystem::remove_all(dir);
  const Outcome o = run({"train", "--synth", "sbm:n=300", "--epochs", "25", "--baseline",
                         "--out", dir.string()});
  REQUIRE(o.code == 0);
  const json r = o.report();
  CHECK(r["result"]["epochs_run"] == 25);
  CHECK(std::abs(r["float32_baseline"]["train_acc_delta_pp"].get<double>()) <= 1.0);
  std::ifstream csv(dir / "train.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,loss,train_acc,val_acc,inf_count,nan_count");
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines == 25);
}

TEST_CASE("train config file and flag overrides") {
  const auto cfg = scratch("run.cfg");
  std::ofstream(cfg) << "model = gat\nepochs = 3\nhidden = 8\n";
  const json r = run({"train", "--synth", "sbm:n=100", "--config", cfg.string(), "--epochs", "2"})
                     .report();
  CHECK(r["config"]["model"] == "gat");
  CHECK(r["config"]["hidden"] == 8);
  CHECK(r["result"]["epochs_run"] == 2);
  std::ofstream(cfg) << "model = gat\nwarp = 3\n";
  CHECK(run({"train", "--synth", "sbm:n=100", "--config", cfg.string()}).code == 2);
}

TEST_CASE("train edge cases") {
  const json zero = run({"train", "--synth", "sbm:n=100", "--epochs", "0"}).report();
  CHECK(zero["result"]["epochs_run"] == 0);
  CHECK(zero["result"]["initial_train_acc"] == zero["result"]["final_train_acc"]);

  const Outcome nan = run({"train", "--model", "gin", "--lambda", "1.0", "--synth",
                           "sbm:n=200,scale=40000,noise=0.1", "--epochs", "5"});
  CHECK(nan.code == 1);
  const json r = nan.report();
  CHECK(r["result"]["aborted"] == true);
  CHECK(r["result"]["nan_steps"] == 1);
  CHECK(r["result"]["overflow"].contains("layer1/combine"));
  CHECK(nan.err.find("NaN") != std::string::npos);
}

TEST_CASE("info summarises layout and schedule") {
  const Outcome o = run({"info", "--synth", "sbm:n=300", "--feature-dim", "32"});
  REQUIRE(o.code == 0);
  const json r = o.report();
  CHECK(r["layout"]["subwarps"] == 2);
  CHECK(r["layout"]["coalesced_bytes_per_warp_load"] == 128);
  CHECK(r["schedule"]["batch_edges"] == 2);
  CHECK(r["graph"]["vertices"] == 300);
}
