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

#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "halfkern/sparse.hpp"
#include "test_support.hpp"

using namespace halfkern;

namespace {

CooGraph parse(const std::string& text, EdgeListOptions options = {}) {
  std::istringstream in(text);
  return load_edge_list(in, options);
}

std::vector<VertexId> vec(std::span<const VertexId> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("edge list loading") {
  const CooGraph a = parse("0 1\n0 2\n");
  CHECK(vec(a.rows()) == std::vector<VertexId>{0, 0});
  CHECK(vec(a.cols()) == std::vector<VertexId>{1, 2});
  CHECK(a.num_vertices() == 3);

  const CooGraph b = parse("2 0\n0 1\n");
  CHECK(vec(b.rows()) == std::vector<VertexId>{0, 2});
  CHECK(vec(b.cols()) == std::vector<VertexId>{1, 0});

  const CooGraph c = parse("0 1\n0 1\n");
  CHECK(c.num_edges() == 1);

  const CooGraph d = parse("# header\n% comment\n\n  3\t1  \n");
  CHECK(d.num_edges() == 1);
  CHECK(d.num_vertices() == 4);

  CHECK(parse("0 1\n", {.num_vertices = 10}).num_vertices() == 10);
  CHECK(parse("").num_vertices() == 0);
}

TEST_CASE("edge list errors carry line numbers") {
  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("0 1\n1 x\n") == 2);
  CHECK(line_of("0 1\n\n# ok\n1 2 3\n") == 4);
  CHECK(line_of("-1 2\n") == 1);
  CHECK(line_of("0 99999999999\n") == 1);
  CHECK_THROWS_AS(parse("0 5\n", {.num_vertices = 3}), ParseError);
  CHECK_THROWS_AS(load_edge_list_file("/nonexistent/graph.txt"), IoError);
}

TEST_CASE("COO invariants are enforced") {
  CHECK_THROWS_AS(CooGraph({1, 0}, {0, 0}, 2), InvariantError);
  CHECK_THROWS_AS(CooGraph({0, 0}, {1, 1}, 2), InvariantError);
  CHECK_THROWS_AS(CooGraph({0}, {2}, 2), InvariantError);
  CHECK_NOTHROW(CooGraph({0, 0, 1}, {0, 1, 0}, 2));
}

TEST_CASE("CSR conversion and transpose examples") {
  const CooGraph g({0, 0, 2}, {1, 2, 0}, 3);
  const CsrGraph csr = coo_to_csr(g);
  CHECK(std::vector<EdgeId>(csr.offsets().begin(), csr.offsets().end()) ==
        std::vector<EdgeId>{0, 2, 2, 3});
  CHECK(csr.degree(0) == 2);
  CHECK(csr.degree(1) == 0);

  const CsrGraph empty = coo_to_csr(CooGraph({}, {}, 4));
  for (EdgeId o : empty.offsets()) CHECK(o == 0);

  const CooGraph t = transpose(CooGraph({0}, {1}, 2));
  CHECK(vec(t.rows()) == std::vector<VertexId>{1});
  CHECK(vec(t.cols()) == std::vector<VertexId>{0});
}

TEST_CASE("graph properties on random graphs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const double density = 0.02 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    const CooGraph g = testing::random_graph(rng, n, density);

    const auto deg = row_degrees(g);
    REQUIRE(std::accumulate(deg.begin(), deg.end(), std::size_t{0}) == g.num_edges());
    const CsrGraph csr = coo_to_csr(g);
    REQUIRE(std::vector<std::uint32_t>(csr.degrees().begin(), csr.degrees().end()) == deg);
    REQUIRE(csr_to_coo(csr) == g);

    const TransposedGraph tg = transpose_with_map(g);
    REQUIRE(tg.graph.num_edges() == g.num_edges());
    for (EdgeId i = 0; i < g.num_edges(); ++i) {
      const EdgeId src = tg.source_edge[i];
      REQUIRE(tg.graph.rows()[i] == g.cols()[src]);
      REQUIRE(tg.graph.cols()[i] == g.rows()[src]);
    }
    REQUIRE(transpose(tg.graph) == g);

    const CooGraph sym = symmetrize(g);
    REQUIRE(transpose(sym) == sym);
    const CooGraph loops = add_self_loops(g);
    std::set<std::pair<VertexId, VertexId>> pairs;
    for (EdgeId e = 0; e < loops.num_edges(); ++e) pairs.insert({loops.rows()[e], loops.cols()[e]});
    for (VertexId v = 0; v < n; ++v) REQUIRE(pairs.count({v, v}) == 1);
  }
}

TEST_CASE("feature padding") {
  FloatTensor t(3, 41);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(i + 1);
  const FloatTensor p = pad_feature_length(t, 2);
  CHECK(p.cols() == 42);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(p(r, 41) == 0.0f);
    for (std::size_t c = 0; c < 41; ++c) CHECK(p(r, c) == t(r, c));
  }
  CHECK(pad_feature_length(FloatTensor(2, 64, 1.0f), 8).cols() == 64);
  const HalfTensor q = pad_feature_length(HalfTensor(1, 3, half_constants::kOne), 8);
  CHECK(q.cols() == 8);
  for (std::size_t c = 3; c < 8; ++c) CHECK(q(0, c) == half_constants::kZero);
  CHECK_THROWS_AS(pad_feature_length(t, 3), ConfigError);
}

TEST_CASE("tensor serialization round trip") {
  std::mt19937_64 rng(4);
  HalfTensor h(5, 6);
  for (Half& v : h.data()) v = Half::from_bits(static_cast<std::uint16_t>(rng()));
  std::stringstream hs;
  write_tensor(hs, h);
  CHECK(hs.str().size() == 16 + 5 * 6 * 2);
  // Little-endian magic "KHT1".
  CHECK(hs.str().substr(0, 4) == "KHT1");
  CHECK(peek_tensor_precision(hs) == Precision::kHalf);
  const HalfTensor h2 = read_tensor<Half>(hs);
  CHECK(std::equal(h.data().begin(), h.data().end(), h2.data().begin()));

  FloatTensor f(2, 3, 1.25f);
  std::stringstream fs;
  write_tensor(fs, f);
  CHECK_THROWS_AS(read_tensor<Half>(fs), ParseError);
  fs.seekg(0);
  CHECK(read_tensor<float>(fs)(1, 2) == 1.25f);

  std::stringstream truncated(hs.str().substr(0, 20));
  CHECK_THROWS_AS(read_tensor<Half>(truncated), ParseError);
}

TEST_CASE("SBM generator") {
  const LabeledGraph cliques = synth_sbm({.num_vertices = 8,
                                          .num_classes = 2,
                                          .p_in = 1.0,
                                          .p_out = 0.0,
                                          .feature_dim = 2,
                                          .seed = 7});
  // Two 4-cliques without self-loops: 2 * 4 * 3 directed edges.
  REQUIRE(cliques.graph.num_edges() == 24);
  for (EdgeId e = 0; e < 24; ++e) {
    const VertexId r = cliques.graph.rows()[e];
    const VertexId c = cliques.graph.cols()[e];
    CHECK(r / 4 == c / 4);
    CHECK(r != c);
  }
  CHECK(cliques.labels == std::vector<std::uint32_t>{0, 0, 0, 0, 1, 1, 1, 1});

  const LabeledGraph empty =
      synth_sbm({.num_vertices = 10, .p_in = 0.0, .p_out = 0.0, .feature_dim = 4});
  CHECK(empty.graph.num_edges() == 0);

  const SbmSpec spec{.num_vertices = 200, .feature_dim = 8, .seed = 3};
  const LabeledGraph a = synth_sbm(spec);
  const LabeledGraph b = synth_sbm(spec);
  CHECK(a.graph == b.graph);
  CHECK(a.labels == b.labels);
  CHECK(std::equal(a.features.data().begin(), a.features.data().end(),
                   b.features.data().begin()));
  CHECK(transpose(a.graph) == a.graph);

  CHECK_THROWS_AS(synth_sbm({.p_in = 0.1, .p_out = 0.2}), ConfigError);
  CHECK_THROWS_AS(synth_sbm({.p_in = 1.5, .p_out = 0.2}), ConfigError);
}

TEST_CASE("train/validation split") {
  const DataSplit s = make_split(100, 1);
  int train = 0;
  int val = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    train += s.train[i];
    val += s.val[i];
    CHECK(!(s.train[i] && s.val[i]));
  }
  CHECK(train == 60);
  CHECK(val == 20);
}
