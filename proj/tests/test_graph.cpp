#include <doctest.h>

#include <fstream>
#include <set>

#include "ecg/graph.hpp"
#include "ecg/homophily.hpp"
#include "test_util.hpp"

using namespace ecg;
using ecg::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream(file) << text;
}

// Independent count: fraction of listed undirected edges with equal labels.
double count_homophily(const std::vector<std::pair<NodeId, NodeId>>& edges,
                       const std::vector<int>& y) {
  std::size_t same = 0;
  for (auto [u, v] : edges) same += y[u] == y[v];
  return static_cast<double>(same) / static_cast<double>(edges.size());
}

}  // namespace

TEST_CASE("path graph from edges.tsv has degrees (1, 2, 1)") {
  TempDir dir("ecg_graph");
  write_text(dir.path / "edges.tsv", "0 1\n1 2\n");
  const auto g = read_edges(dir.path / "edges.tsv", 3);
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.degree(0) == 1);
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(2) == 1);
  CHECK(g.is_valid());
}

TEST_CASE("duplicate edge lines are rejected with file and line") {
  TempDir dir("ecg_graph");
  write_text(dir.path / "edges.tsv", "0 1\n1 2\n0 1\n");
  try {
    read_edges(dir.path / "edges.tsv", 3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("duplicate edge") != std::string::npos);
    CHECK(msg.find("edges.tsv:3") != std::string::npos);
  }
  write_text(dir.path / "edges.tsv", "0 1\n1 0\n");
  CHECK_THROWS_AS(read_edges(dir.path / "edges.tsv", 3), DataError);
}

TEST_CASE("label out of range is reported") {
  NodeTable t;
  t.features = FeatureMatrix(3, 1);
  t.labels = {0, 1, 5};
  t.num_classes = 3;
  try {
    t.validate(3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("label out of range") != std::string::npos);
  }
}

TEST_CASE("malformed lines and row-count mismatches are reported") {
  TempDir dir("ecg_graph");
  write_text(dir.path / "edges.tsv", "0 1\n1 x\n");
  CHECK_THROWS_AS(read_edges(dir.path / "edges.tsv", 3), DataError);
  write_text(dir.path / "edges.tsv", "0 7\n");
  CHECK_THROWS_AS(read_edges(dir.path / "edges.tsv", 3), DataError);

  write_text(dir.path / "edges.tsv", "0 1\n1 2\n");
  write_text(dir.path / "features.csv", "1,2\n3,4\n");
  write_text(dir.path / "labels.csv", "0\n1\n0\n");
  CHECK_THROWS_AS(load_dataset(dir.path, 2, 0), DataError);
  write_text(dir.path / "features.csv", "1,2\n3\n5,6\n");
  CHECK_THROWS_AS(load_dataset(dir.path, 2, 0), DataError);
}

TEST_CASE("self-loops are stripped on construction") {
  std::vector<std::pair<NodeId, NodeId>> edges{{0, 0}, {0, 1}, {2, 2}};
  std::size_t dropped = 0;
  const auto g = Graph::from_edges(3, edges, &dropped);
  CHECK(dropped == 2);
  CHECK(g.num_edges() == 1);
  CHECK(g.is_valid());
}

TEST_CASE("random graphs satisfy the CSR invariants exhaustively") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed, "graph-prop");
    const std::size_t n = 2 + rng() % 30;
    const auto g = ecg::testing::random_graph(n, 0.3, rng);
    REQUIRE(g.is_valid());
    std::size_t total = 0;
    for (NodeId u = 0; u < n; ++u) {
      const auto row = g.neighbors(u);
      total += row.size();
      for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row[i] != u);
        if (i) CHECK(row[i - 1] < row[i]);
        const auto back = g.neighbors(row[i]);
        CHECK(std::find(back.begin(), back.end(), u) != back.end());
      }
    }
    CHECK(total == 2 * g.num_edges());
  }
}

TEST_CASE("save then load reproduces the dataset bit for bit") {
  TempDir dir("ecg_graph");
  SyntheticSpec spec;
  spec.num_nodes = 120;
  spec.avg_degree = 4;
  spec.seed = 3;
  const auto [g, nodes] = generate_synthetic(spec);
  const auto splits = make_splits(g.num_nodes(), 3, 11);
  save_dataset(dir.path, g, nodes, &splits);
  const auto ds = load_dataset(dir.path, 10, 0);
  CHECK(ds.graph == g);
  CHECK(ds.nodes == nodes);
  CHECK(ds.splits == splits);

  // Without splits.json the loader generates the default number of splits.
  std::filesystem::remove(dir.path / "splits.json");
  const auto ds2 = load_dataset(dir.path, 10, 5);
  CHECK(ds2.splits.size() == 10);
  CHECK(ds2.splits == make_splits(g.num_nodes(), 10, 5));
}

TEST_CASE("synthetic generator honours the homophily target") {
  SyntheticSpec spec;
  spec.num_nodes = 400;
  spec.target_edge_homophily = 1.0;
  auto [g1, n1] = generate_synthetic(spec);
  CHECK(edge_homophily(g1, n1.labels) == 1.0);

  spec.target_edge_homophily = 0.0;
  auto [g0, n0] = generate_synthetic(spec);
  CHECK(edge_homophily(g0, n0.labels) == 0.0);

  spec = SyntheticSpec{};  // n=2000, C=5, avg_degree=10, target 0.1
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    spec.seed = seed;
    auto [g, nodes] = generate_synthetic(spec);
    CHECK(g.is_valid());
    CHECK(g.num_edges() == 10000);
    const double h = count_homophily(g.edge_list(), nodes.labels);
    CHECK(std::abs(h - 0.1) <= 0.02);
    nodes.validate(g.num_nodes());
  }
}

TEST_CASE("synthetic generator is deterministic and rejects infeasible budgets") {
  SyntheticSpec spec;
  spec.num_nodes = 200;
  spec.seed = 9;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  spec.num_nodes = 10;
  spec.avg_degree = 20;  // more edges than the complete graph holds
  CHECK_THROWS(generate_synthetic(spec));
}

TEST_CASE("make_splits: exact ratios, determinism, disjointness") {
  const auto s8 = make_splits(8, 4, 1);
  for (const auto& s : s8) {
    CHECK(s.train.size() == 4);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);
  }
  CHECK(make_splits(50, 3, 7) == make_splits(50, 3, 7));
  CHECK(make_splits(50, 3, 7) != make_splits(50, 3, 8));

  const auto s100 = make_splits(100, 10, 42);
  REQUIRE(s100.size() == 10);
  for (const auto& s : s100) {
    std::set<NodeId> all;
    all.insert(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 100);
    CHECK(s.train.size() + s.val.size() + s.test.size() == 100);
  }
  for (std::size_t n = 4; n < 40; ++n) {
    for (const auto& s : make_splits(n, 1, n)) {
      CHECK(std::abs(static_cast<double>(s.train.size()) - 0.5 * n) <= 1.0);
      CHECK(std::abs(static_cast<double>(s.val.size()) - 0.25 * n) <= 1.0);
      CHECK(std::abs(static_cast<double>(s.test.size()) - 0.25 * n) <= 1.0);
    }
  }
  CHECK(s100[0] != s100[1]);
}
