#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "ecg/embedding.hpp"
#include "ecg/rewiring.hpp"
#include "ecg/weak.hpp"
#include "test_util.hpp"

using namespace ecg;
using ecg::testing::TempDir;

namespace {

std::pair<Graph, NodeTable> synthetic(double separation, std::uint64_t seed, std::size_t n = 400,
                                      double homophily = 0.3) {
  SyntheticSpec spec;
  spec.num_nodes = n;
  spec.num_classes = 4;
  spec.avg_degree = 6.0;
  spec.target_edge_homophily = homophily;
  spec.feature_dim = 8;
  spec.class_separation = separation;
  spec.seed = seed;
  return generate_synthetic(spec);
}

MlpConfig quick_mlp(std::uint64_t seed) {
  MlpConfig c;
  c.width = 32;
  c.max_epochs = 200;
  c.patience = 50;
  c.seed = seed;
  return c;
}

BgrlConfig quick_bgrl(std::uint64_t seed, std::size_t steps) {
  BgrlConfig c;
  c.width = 16;
  c.steps = steps;
  c.seed = seed;
  return c;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return na > 0 && nb > 0 ? d / std::sqrt(na * nb) : 0.0;
}

}  // namespace

TEST_CASE("embedding source tags parse and print") {
  CHECK(to_string(EmbeddingSource::mlp_gnn) == "MLP->GNN");
  CHECK(parse_embedding_source("mlp->gnn") == EmbeddingSource::mlp_gnn);
  CHECK(parse_embedding_source("MLP→GNN") == EmbeddingSource::mlp_gnn);
  CHECK(parse_embedding_source("MlpBgrl") == EmbeddingSource::mlp_bgrl);
  CHECK(parse_embedding_source("BGRL") == EmbeddingSource::bgrl);
  CHECK_THROWS_AS(parse_embedding_source("PCA"), std::invalid_argument);
}

TEST_CASE("EmbeddingMatrix rejects non-finite values") {
  FeatureMatrix m(1, 2);
  m.at(0, 1) = std::nanf("");
  CHECK_THROWS_AS(EmbeddingMatrix(m, EmbeddingSource::mlp, 0), std::invalid_argument);
}

TEST_CASE(".emb files round trip and carry their header") {
  TempDir dir("emb");
  auto rng = make_rng(0, "emb");
  FeatureMatrix values = ecg::testing::random_features(7, 3, rng);
  values.at(2, 1) = 1.0f / 3.0f;
  for (auto split : {std::optional<std::size_t>{4}, std::optional<std::size_t>{}}) {
    const EmbeddingMatrix emb(values, split ? EmbeddingSource::mlp_gnn : EmbeddingSource::bgrl, split);
    const auto file = dir.path / "x.emb";
    write_embeddings(file, emb);
    std::ifstream in(file);
    std::string header;
    std::getline(in, header);
    CHECK(header == (split ? "7 3 MLP->GNN 4" : "7 3 BGRL -"));
    CHECK(read_embeddings(file) == emb);  // 9 significant digits recover float32 exactly
  }
  {
    std::ofstream(dir.path / "short.emb") << "3 2 MLP 0\n1 2\n3 4\n";
  }
  CHECK_THROWS_AS(read_embeddings(dir.path / "short.emb"), DataError);
  {
    std::ofstream(dir.path / "wide.emb") << "1 2 MLP 0\n1 2 3\n";
  }
  CHECK_THROWS_AS(read_embeddings(dir.path / "wide.emb"), DataError);
}

TEST_CASE("concat_embeddings normalises each block") {
  FeatureMatrix a(2, 2), b(2, 2);
  a.at(0, 0) = 3;
  a.at(0, 1) = 4;
  b.at(0, 1) = 5;
  b.at(1, 0) = -2;  // row 1 of `a` is zero
  const auto c = concat_embeddings(EmbeddingMatrix(a, EmbeddingSource::mlp, 0),
                                   EmbeddingMatrix(b, EmbeddingSource::bgrl, {}));
  CHECK(c.source() == EmbeddingSource::mlp_bgrl);
  CHECK(c.dim() == 4);
  const std::vector<float> r0(c.values().row(0).begin(), c.values().row(0).end());
  CHECK(r0 == std::vector<float>{0.6f, 0.8f, 0.0f, 1.0f});
  const std::vector<float> r1(c.values().row(1).begin(), c.values().row(1).end());
  CHECK(r1 == std::vector<float>{0.0f, 0.0f, -1.0f, 0.0f});

  CHECK_THROWS_AS(concat_embeddings(EmbeddingMatrix(a, EmbeddingSource::mlp, 0),
                                    EmbeddingMatrix(FeatureMatrix(3, 2), EmbeddingSource::bgrl, {})),
                  std::invalid_argument);
}

TEST_CASE("concatenating a matrix with itself preserves cosines") {
  auto rng = make_rng(1, "concat-self");
  const EmbeddingMatrix e(ecg::testing::random_features(20, 5, rng), EmbeddingSource::mlp, 0);
  const auto c = concat_embeddings(e, e);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      CHECK(cosine(c.values().row(i), c.values().row(j)) ==
            doctest::Approx(cosine(e.values().row(i), e.values().row(j))).epsilon(1e-6));
}

TEST_CASE("MLP fits separable classes and only reads train labels") {
  auto [g, nodes] = synthetic(4.0, 0);
  const auto splits = make_splits(nodes.num_nodes(), 1, 0);
  const auto r = train_mlp(nodes, splits[0], 0, quick_mlp(0));
  CHECK(r.train_accuracy >= 0.95);
  CHECK(r.loss_mask == splits[0].train);
  CHECK(r.embedding.num_nodes() == nodes.num_nodes());
  CHECK(r.embedding.dim() == 32);
  CHECK(r.embedding.split_id() == std::optional<std::size_t>{0});

  // Without a validation set (model selection falls back to the train mask),
  // labels outside the train mask are unobservable.
  const Split train_only{splits[0].train, {}, splits[0].test};
  auto scrambled = nodes;
  for (NodeId u : splits[0].val) scrambled.labels[u] = 0;
  for (NodeId u : splits[0].test) scrambled.labels[u] = 0;
  auto cfg = quick_mlp(0);
  cfg.max_epochs = 20;
  CHECK(train_mlp(nodes, train_only, 0, cfg).embedding ==
        train_mlp(scrambled, train_only, 0, cfg).embedding);
}

TEST_CASE("MLP same-class embeddings are more similar than cross-class") {
  auto [g, nodes] = synthetic(4.0, 2);
  const auto splits = make_splits(nodes.num_nodes(), 1, 2);
  const auto r = train_mlp(nodes, splits[0], 0, quick_mlp(2));
  double same = 0, cross = 0;
  std::size_t ns = 0, nc = 0;
  for (std::size_t i = 0; i < nodes.num_nodes(); i += 3) {
    for (std::size_t j = i + 1; j < nodes.num_nodes(); j += 5) {
      const double c = cosine(r.embedding.values().row(i), r.embedding.values().row(j));
      if (nodes.labels[i] == nodes.labels[j]) {
        same += c;
        ++ns;
      } else {
        cross += c;
        ++nc;
      }
    }
  }
  CHECK(same / double(ns) > cross / double(nc));
}

TEST_CASE("MLP on featureless classes is at chance") {
  auto [g, nodes] = synthetic(0.0, 1, 2000);
  const auto splits = make_splits(nodes.num_nodes(), 1, 1);
  const auto r = train_mlp(nodes, splits[0], 0, quick_mlp(1));
  CHECK(std::abs(r.test_accuracy - 0.25) <= 0.05);
}

TEST_CASE("MLP rejects a train mask missing a class") {
  auto [g, nodes] = synthetic(2.0, 0, 40);
  Split s;
  for (NodeId u = 0; u < 40; ++u) (nodes.labels[u] == 3 ? s.val : s.train).push_back(u);
  CHECK_THROWS_WITH_AS(train_mlp(nodes, s, 0, quick_mlp(0)), doctest::Contains("class 3"),
                       std::invalid_argument);
  CHECK_THROWS_AS(train_mlp(nodes, Split{}, 0, quick_mlp(0)), std::invalid_argument);
}

TEST_CASE("MLP residual layers keep the hidden width") {
  MlpEncoder<double> enc(4, 6, 4, 3, 0);
  CHECK(enc.parameters().size() == 4 + 2);
  ad::Tape<double> tape(false);
  ad::Matrix<double> x(5, 4, 0.5);
  auto [h, logits] = enc.forward(tape, tape.constant_ref(x), 0.0, nullptr, false);
  CHECK(h.cols() == 6);
  CHECK(logits.cols() == 3);
  CHECK_THROWS_AS(MlpEncoder<double>(4, 6, 0, 3, 0), std::invalid_argument);
}

TEST_CASE("ema_update: decay 1 freezes, decay 0 copies") {
  auto rng = make_rng(0, "ema");
  std::vector<ad::Parameter<float>> online, target;
  online.emplace_back("a", ad::glorot<float>(3, 2, rng));
  target.emplace_back("a", ad::glorot<float>(3, 2, rng));
  const auto initial = target[0].value;
  ema_update(target, online, 1.0);
  CHECK(target[0].value == initial);
  ema_update(target, online, 0.5);
  CHECK(target[0].value.data[0] == doctest::Approx(0.5 * (initial.data[0] + online[0].value.data[0])));
  ema_update(target, online, 0.0);
  CHECK(target[0].value == online[0].value);
}

TEST_CASE("BGRL with EMA decay 1 leaves the target at its initial values") {
  auto [g, nodes] = synthetic(2.0, 0, 120);
  auto cfg = quick_bgrl(0, 15);
  cfg.ema_decay = 1.0;
  const auto r = train_bgrl(g, nodes.features, cfg);
  CHECK(r.state.target.size() == r.state.online.size());
  for (std::size_t i = 0; i < r.state.target.size(); ++i) {
    CHECK(r.state.target[i].value.same_shape(r.state.online[i].value));
  }
  // Weights were glorot-initialised; online moved, target did not.
  auto zero = quick_bgrl(0, 0);
  zero.ema_decay = 1.0;
  const auto fresh = train_bgrl(g, nodes.features, zero);
  for (std::size_t i = 0; i < r.state.target.size(); ++i) {
    CHECK(r.state.target[i].value == fresh.state.target[i].value);
  }
  CHECK(r.state.online[0].value != fresh.state.online[0].value);
}

TEST_CASE("BGRL is label-blind, deterministic, and improves alignment") {
  auto [g, nodes] = synthetic(2.0, 3, 200);
  const auto cfg = quick_bgrl(3, 150);
  const auto a = train_bgrl(g, nodes.features, cfg);
  const auto b = train_bgrl(g, nodes.features, cfg);
  CHECK(a.embedding == b.embedding);
  CHECK(a.embedding.source() == EmbeddingSource::bgrl);
  CHECK_FALSE(a.embedding.split_id().has_value());
  CHECK(a.loss_history.size() == 150);
  CHECK(a.final_alignment > a.initial_alignment);
  CHECK_THROWS_AS(train_bgrl(Graph::from_edges(3, {}), FeatureMatrix(3, 2), cfg),
                  std::invalid_argument);
}

TEST_CASE("donor GNN embeddings have the donor width and are deterministic") {
  auto [g, nodes] = synthetic(2.0, 4, 100);
  ModelConfig mc;
  mc.in_dim = nodes.features.cols;
  mc.hidden = 12;
  mc.num_classes = 4;
  EcgGnnModel<float> donor(mc, 0);
  const auto ecg = directed_edges(cosine_topk(nodes.features, 3));
  const auto a = extract_gnn_embeddings(donor, g, nodes, ecg, 2);
  CHECK(a.dim() == 12);
  CHECK(a.source() == EmbeddingSource::mlp_gnn);
  CHECK(a.split_id() == std::optional<std::size_t>{2});
  CHECK(a == extract_gnn_embeddings(donor, g, nodes, ecg, 2));
}
