#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecg/rewiring.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ecg;
using ecg::testing::naive_topk;
using ecg::testing::tie_heavy_matrix;

namespace {

FeatureMatrix from_rows(std::vector<std::vector<float>> rows) {
  FeatureMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
  return m;
}

std::vector<std::vector<NodeId>> lists(const EcgEdges& e) {
  std::vector<std::vector<NodeId>> out(e.num_nodes());
  for (NodeId u = 0; u < e.num_nodes(); ++u) {
    auto nb = e.neighbors(u);
    out[u].assign(nb.begin(), nb.end());
  }
  return out;
}

}  // namespace

TEST_CASE("cosine_topk hand example: tie at zero goes to the lower id") {
  const auto e = cosine_topk(from_rows({{1, 0}, {1, 0}, {0, 1}}), 1);
  CHECK(lists(e) == std::vector<std::vector<NodeId>>{{1}, {0}, {0}});
  CHECK(e.scores(0)[0] == 1.0);
  CHECK(e.scores(2)[0] == 0.0);
}

TEST_CASE("cosine_topk with all rows identical picks the two smallest other ids") {
  const auto e = cosine_topk(from_rows({{1, 2}, {1, 2}, {1, 2}, {1, 2}}), 2);
  CHECK(lists(e) ==
        std::vector<std::vector<NodeId>>{{1, 2}, {0, 2}, {0, 1}, {0, 1}});
}

TEST_CASE("cosine_topk rejects k = 0 and k >= n") {
  const auto m = from_rows({{1, 0}, {0, 1}, {1, 1}});
  CHECK_THROWS_AS(cosine_topk(m, 0), std::invalid_argument);
  CHECK_THROWS_AS(cosine_topk(m, 3), std::invalid_argument);
  CHECK_NOTHROW(cosine_topk(m, 2));
}

TEST_CASE("cosine_topk equals the naive oracle, including ties") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed, "topk-oracle");
    const std::size_t n = 5 + rng() % 196;
    const std::size_t d = 1 + rng() % 8;
    const std::size_t k = 1 + rng() % std::min<std::size_t>(20, n - 1);
    const auto m = seed % 2 ? tie_heavy_matrix(n, d, rng) : ecg::testing::random_features(n, d, rng);
    CAPTURE(seed);
    const auto got = cosine_topk(m, k, 1);
    CHECK(lists(got) == naive_topk(m, k));
    CHECK(got == cosine_topk(m, k, 4));  // thread count is unobservable
  }
}

TEST_CASE("cosine_topk structural invariants") {
  auto rng = make_rng(7, "topk-inv");
  const auto m = tie_heavy_matrix(120, 5, rng);
  const auto e = cosine_topk(m, 6);
  CHECK(e.num_edges() == 120 * 6);
  for (NodeId u = 0; u < 120; ++u) {
    const auto nb = e.neighbors(u);
    const auto sc = e.scores(u);
    REQUIRE(nb.size() == 6);
    CHECK(std::find(nb.begin(), nb.end(), u) == nb.end());
    CHECK(std::set<NodeId>(nb.begin(), nb.end()).size() == 6);
    for (std::size_t i = 1; i < sc.size(); ++i) CHECK(sc[i - 1] >= sc[i]);
  }
}

TEST_CASE("cosine_topk is invariant to positive row scaling") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed, "topk-scale");
    const auto m = ecg::testing::random_features(150, 6, rng);
    auto scaled = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const float c = static_cast<float>(0.1 + 10.0 * uniform01(rng));
      for (auto& v : scaled.row(i)) v *= c;
    }
    CAPTURE(seed);
    CHECK(lists(cosine_topk(m, 5)) == lists(cosine_topk(scaled, 5)));
  }
}

TEST_CASE("ecg_homophily: one-hot embeddings give 1, random gives collision rate") {
  const std::size_t n = 60;
  std::vector<int> y(n);
  FeatureMatrix onehot(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    onehot.at(i, static_cast<std::size_t>(y[i])) = 1.0f;
  }
  CHECK(ecg_homophily(cosine_topk(onehot, 3), y) == 1.0);

  double total = 0, expect = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_rng(seed, "ecg-h-random");
    const auto labels = ecg::testing::random_labels(400, 4, rng);
    std::vector<double> p(4, 0.0);
    for (int c : labels) p[static_cast<std::size_t>(c)] += 1.0 / 400.0;
    for (double pc : p) expect += pc * pc / 10.0;
    total += ecg_homophily(cosine_topk(ecg::testing::random_features(400, 8, rng), 5), labels) / 10.0;
  }
  CHECK(std::abs(total - expect) <= 0.02);
}

TEST_CASE("directed edge sets from graphs and ECG lists") {
  std::vector<std::pair<NodeId, NodeId>> e{{0, 1}, {1, 2}};
  const auto g = Graph::from_edges(4, e);
  const auto d = directed_edges(g);
  CHECK(d.num_nodes == 4);
  CHECK(d.num_edges() == 4);
  CHECK(std::vector<NodeId>(d.row(1).begin(), d.row(1).end()) == std::vector<NodeId>{0, 2});
  CHECK(d.row(3).empty());

  const auto ecg = cosine_topk(from_rows({{1, 0}, {1, 0.1f}, {0, 1}}), 1);
  const auto de = directed_edges(ecg);
  CHECK(de.num_edges() == 3);
  for (NodeId u = 0; u < 3; ++u) {
    CHECK(de.row(u).size() == 1);
    CHECK(de.row(u)[0] == ecg.neighbors(u)[0]);
  }
  // Symmetrised: union of both orientations, rows sorted and deduplicated.
  const auto sym = symmetrized_edges(ecg);
  for (NodeId u = 0; u < 3; ++u) {
    for (NodeId v : de.row(u)) {
      auto rv = sym.row(v);
      auto ru = sym.row(u);
      CHECK(std::find(rv.begin(), rv.end(), u) != rv.end());
      CHECK(std::find(ru.begin(), ru.end(), v) != ru.end());
    }
    CHECK(std::is_sorted(sym.row(u).begin(), sym.row(u).end()));
  }
}

TEST_CASE("drop_edge: exact extremes and binomial spread") {
  auto rng = make_rng(0, "drop");
  const auto edges = directed_edges(cosine_topk(ecg::testing::random_features(1000, 4, rng), 10));
  REQUIRE(edges.num_edges() == 10000);
  CHECK(drop_edge(edges, 0.0, rng) == edges);
  const auto none = drop_edge(edges, 1.0, rng);
  CHECK(none.num_edges() == 0);
  CHECK(none.num_nodes == edges.num_nodes);

  int inside = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto kept = drop_edge(edges, 0.5, rng);
    inside += std::abs(static_cast<double>(kept.num_edges()) - 5000.0) <= 150.0;
    // Kept edges are a subset of the originals, row by row.
    for (NodeId u = 0; u < 1000; ++u) {
      for (NodeId v : kept.row(u)) {
        auto r = edges.row(u);
        CHECK(std::find(r.begin(), r.end(), v) != r.end());
      }
    }
  }
  CHECK(inside >= 19);
  CHECK_THROWS(drop_edge(edges, 1.5, rng));
}
