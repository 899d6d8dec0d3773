#include "ecg/weak.hpp"

#include <cmath>

#include <fmt/core.h>

#include "ecg/log.hpp"

namespace ecg {

// ---- MLP -----------------------------------------------------------------

template <typename T>
MlpEncoder<T>::MlpEncoder(std::size_t in_dim, std::size_t width, std::size_t layers,
                          std::size_t num_classes, std::uint64_t seed) {
  if (layers == 0) throw std::invalid_argument("MlpEncoder: need at least one layer");
  auto rng = make_rng(seed, "init");
  for (std::size_t l = 0; l < layers; ++l) {
    layers_.emplace_back(fmt::format("mlp.{}.W", l),
                         ad::glorot<T>(l == 0 ? in_dim : width, width, rng));
  }
  head_ = {"mlp.head.W", ad::glorot<T>(width, num_classes, rng)};
  head_bias_ = {"mlp.head.b", ad::Matrix<T>(1, num_classes)};
}

template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> MlpEncoder<T>::forward(ad::Tape<T>& tape, ad::Var<T> x,
                                                         double dropout, Rng* rng, bool train) {
  Rng unused(0);
  Rng& r = rng ? *rng : unused;
  auto h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto z = ad::gelu(ad::matmul(ad::dropout(h, dropout, r, train), tape.parameter(layers_[l])));
    h = l >= 2 ? ad::add(h, z) : z;
  }
  auto logits = ad::add_row(ad::matmul(h, tape.parameter(head_)), tape.parameter(head_bias_));
  return {h, logits};
}

template <typename T>
std::vector<ad::Parameter<T>*> MlpEncoder<T>::parameters() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : layers_) out.push_back(&p);
  out.push_back(&head_);
  out.push_back(&head_bias_);
  return out;
}

template class MlpEncoder<float>;
template class MlpEncoder<double>;

MlpResult train_mlp(const NodeTable& nodes, const Split& split, std::size_t split_id,
                    const MlpConfig& cfg) {
  if (split.train.empty()) throw std::invalid_argument("train_mlp: empty train mask");
  std::vector<char> present(static_cast<std::size_t>(nodes.num_classes), 0);
  for (NodeId u : split.train) present[static_cast<std::size_t>(nodes.labels[u])] = 1;
  for (int c = 0; c < nodes.num_classes; ++c) {
    if (!present[static_cast<std::size_t>(c)]) {
      throw std::invalid_argument(fmt::format("train_mlp: class {} missing from train mask", c));
    }
  }
  const auto& val_mask = split.val.empty() ? split.train : split.val;

  MlpEncoder<float> mlp(nodes.features.cols, cfg.width, cfg.layers,
                        static_cast<std::size_t>(nodes.num_classes), cfg.seed);
  const auto x = ad::from_features<float>(nodes.features);
  auto params = mlp.parameters();
  ad::Adam<float> adam(cfg.adam);
  auto rng = make_rng(cfg.seed, "dropout");

  auto eval = [&] {
    ad::Tape<float> tape(false);
    auto [h, logits] = mlp.forward(tape, tape.constant_ref(x), 0.0, nullptr, false);
    return std::pair{h.value(), logits.value()};
  };

  MlpResult result{EmbeddingMatrix(FeatureMatrix(), EmbeddingSource::mlp, split_id)};
  result.loss_mask = split.train;
  double best_val = -1.0;
  std::size_t best_epoch = 0;
  std::vector<ad::Matrix<float>> best;
  for (auto* p : params) best.push_back(p->value);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    ad::Tape<float> tape(true);
    auto [h, logits] = mlp.forward(tape, tape.constant_ref(x), cfg.dropout, &rng, true);
    auto loss = ad::cross_entropy(logits, nodes.labels, result.loss_mask);
    if (!std::isfinite(loss.value().data[0])) {
      throw TrainingDiverged(fmt::format("MLP: non-finite loss at epoch {}", epoch));
    }
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
    adam.step(params);

    const double val = accuracy(eval().second, nodes.labels, val_mask);
    if (val > best_val) {
      best_val = val;
      best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];

  auto [hidden, logits] = eval();
  result.train_accuracy = accuracy(logits, nodes.labels, split.train);
  result.val_accuracy = accuracy(logits, nodes.labels, val_mask);
  result.test_accuracy = split.test.empty() ? 0.0 : accuracy(logits, nodes.labels, split.test);
  FeatureMatrix emb(hidden.rows, hidden.cols);
  emb.values = std::move(hidden.data);
  result.embedding = EmbeddingMatrix(std::move(emb), EmbeddingSource::mlp, split_id);
  log_debug("MLP split {}: train={:.3f} val={:.3f} test={:.3f} (best epoch {})", split_id,
            result.train_accuracy, result.val_accuracy, result.test_accuracy, best_epoch);
  return result;
}

// ---- BGRL ----------------------------------------------------------------

template <typename T>
ad::Var<T> bgrl_encode(ad::Tape<T>& tape, std::vector<ad::Parameter<T>>& enc,
                       const ad::SparseOp& gcn, ad::Var<T> x) {
  auto h = ad::gelu(ad::add_row(ad::spmm(gcn, ad::matmul(x, tape.parameter(enc[0]))),
                                tape.parameter(enc[1])));
  return ad::gelu(ad::add_row(ad::spmm(gcn, ad::matmul(h, tape.parameter(enc[2]))),
                              tape.parameter(enc[3])));
}

template <typename T>
ad::Var<T> bgrl_predict(ad::Tape<T>& tape, std::vector<ad::Parameter<T>>& pred, ad::Var<T> h) {
  auto z = ad::gelu(ad::add_row(ad::matmul(h, tape.parameter(pred[0])), tape.parameter(pred[1])));
  return ad::add_row(ad::matmul(z, tape.parameter(pred[2])), tape.parameter(pred[3]));
}

template ad::Var<float> bgrl_encode(ad::Tape<float>&, std::vector<ad::Parameter<float>>&,
                                    const ad::SparseOp&, ad::Var<float>);
template ad::Var<double> bgrl_encode(ad::Tape<double>&, std::vector<ad::Parameter<double>>&,
                                     const ad::SparseOp&, ad::Var<double>);
template ad::Var<float> bgrl_predict(ad::Tape<float>&, std::vector<ad::Parameter<float>>&,
                                     ad::Var<float>);
template ad::Var<double> bgrl_predict(ad::Tape<double>&, std::vector<ad::Parameter<double>>&,
                                      ad::Var<double>);

void ema_update(std::vector<ad::Parameter<float>>& target,
                const std::vector<ad::Parameter<float>>& online, double decay) {
  if (target.size() != online.size()) throw std::logic_error("ema_update: parameter sets differ");
  const float keep = static_cast<float>(decay);
  const float mix = static_cast<float>(1.0 - decay);
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[i].value.data;
    const auto& o = online[i].value.data;
    if (t.size() != o.size()) throw std::logic_error("ema_update: shapes differ");
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = keep * t[j] + mix * o[j];
  }
}

namespace {

struct Augmented {
  ad::Matrix<float> x;
  ad::SparseOp gcn;
};

/// Zeroes each feature entry with probability p_f (no rescaling) and drops
/// undirected edges with probability p_e.
Augmented augment(const Graph& g, const ad::Matrix<float>& x, double p_f, double p_e, Rng& rng) {
  Augmented a;
  a.x = x;
  for (auto& v : a.x.data) {
    if (uniform01(rng) < p_f) v = 0.0f;
  }
  std::vector<std::pair<NodeId, NodeId>> kept;
  for (auto e : g.edge_list()) {
    if (uniform01(rng) >= p_e) kept.push_back(e);
  }
  a.gcn = make_propagation(directed_edges(Graph::from_edges(g.num_nodes(), kept)),
                           BackboneKind::gcn)
              .gcn;
  return a;
}

double mean_value(const ad::Matrix<float>& m) {
  double s = 0.0;
  for (float v : m.data) s += v;
  return m.data.empty() ? 0.0 : s / static_cast<double>(m.data.size());
}

}  // namespace

BgrlResult train_bgrl(const Graph& g, const FeatureMatrix& features, const BgrlConfig& cfg) {
  if (g.num_edges() == 0) throw std::invalid_argument("train_bgrl: graph has no edges");
  if (features.rows != g.num_nodes()) {
    throw std::invalid_argument("train_bgrl: feature rows differ from node count");
  }
  const std::size_t d = cfg.width;
  auto init = make_rng(cfg.seed, "init");
  BgrlState st;
  st.ema_decay = cfg.ema_decay;
  st.feature_drop = cfg.feature_drop;
  st.edge_drop = cfg.edge_drop;
  st.online.emplace_back("bgrl.enc.0.W", ad::glorot<float>(features.cols, d, init));
  st.online.emplace_back("bgrl.enc.0.b", ad::Matrix<float>(1, d));
  st.online.emplace_back("bgrl.enc.1.W", ad::glorot<float>(d, d, init));
  st.online.emplace_back("bgrl.enc.1.b", ad::Matrix<float>(1, d));
  st.target = st.online;
  st.predictor.emplace_back("bgrl.pred.0.W", ad::glorot<float>(d, d, init));
  st.predictor.emplace_back("bgrl.pred.0.b", ad::Matrix<float>(1, d));
  st.predictor.emplace_back("bgrl.pred.1.W", ad::glorot<float>(d, d, init));
  st.predictor.emplace_back("bgrl.pred.1.b", ad::Matrix<float>(1, d));

  const auto x = ad::from_features<float>(features);
  const auto full = make_propagation(directed_edges(g), BackboneKind::gcn).gcn;
  auto aug_rng = make_rng(cfg.seed, "augment");

  std::vector<ad::Parameter<float>*> trainable;
  for (auto& p : st.online) trainable.push_back(&p);
  for (auto& p : st.predictor) trainable.push_back(&p);
  ad::Adam<float> adam(ad::AdamConfig{.lr = cfg.lr});

  BgrlResult result{std::move(st), EmbeddingMatrix(FeatureMatrix(), EmbeddingSource::bgrl, {})};
  auto& state = result.state;
  auto alignment = [&] {
    ad::Tape<float> tape(false);
    auto xin = tape.constant_ref(x);
    auto z = bgrl_predict(tape, state.predictor, bgrl_encode(tape, state.online, full, xin));
    auto h = bgrl_encode(tape, state.target, full, xin);
    return mean_value(ad::cosine_rowwise(z, h).value());
  };
  result.initial_alignment = alignment();

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto a1 = augment(g, x, cfg.feature_drop, cfg.edge_drop, aug_rng);
    auto a2 = augment(g, x, cfg.feature_drop, cfg.edge_drop, aug_rng);

    // Target views carry no gradient.
    ad::Matrix<float> t1, t2;
    {
      ad::Tape<float> tape(false);
      t1 = bgrl_encode(tape, state.target, a1.gcn, tape.constant_ref(a1.x)).value();
      t2 = bgrl_encode(tape, state.target, a2.gcn, tape.constant_ref(a2.x)).value();
    }
    ad::Tape<float> tape(true);
    auto z1 = bgrl_predict(tape, state.predictor,
                           bgrl_encode(tape, state.online, a1.gcn, tape.constant_ref(a1.x)));
    auto z2 = bgrl_predict(tape, state.predictor,
                           bgrl_encode(tape, state.online, a2.gcn, tape.constant_ref(a2.x)));
    auto c12 = ad::mean(ad::cosine_rowwise(z1, tape.constant_ref(t2)));
    auto c21 = ad::mean(ad::cosine_rowwise(z2, tape.constant_ref(t1)));
    auto loss = ad::scale(ad::add(c12, c21), -0.5f);
    const double lv = loss.value().data[0];
    if (!std::isfinite(lv)) throw TrainingDiverged(fmt::format("BGRL: non-finite loss at step {}", step));
    result.loss_history.push_back(lv);
    for (auto* p : trainable) p->zero_grad();
    tape.backward(loss);
    adam.step(trainable);
    ema_update(state.target, state.online, cfg.ema_decay);
  }
  result.final_alignment = alignment();

  ad::Tape<float> tape(false);
  auto h = bgrl_encode(tape, state.online, full, tape.constant_ref(x)).value();
  FeatureMatrix emb(h.rows, h.cols);
  emb.values = std::move(h.data);
  result.embedding = EmbeddingMatrix(std::move(emb), EmbeddingSource::bgrl, std::nullopt);
  log_debug("BGRL: loss {:.4f} -> {:.4f}, alignment {:.4f} -> {:.4f}",
            result.loss_history.empty() ? 0.0 : result.loss_history.front(),
            result.loss_history.empty() ? 0.0 : result.loss_history.back(),
            result.initial_alignment, result.final_alignment);
  return result;
}

// ---- donor GNN -----------------------------------------------------------

EmbeddingMatrix extract_gnn_embeddings(EcgGnnModel<float>& donor, const Graph& g,
                                       const NodeTable& nodes, const DirectedEdges& donor_ecg,
                                       std::optional<std::size_t> split_id) {
  auto [logits, hidden] = predict(donor, g, nodes, &donor_ecg);
  FeatureMatrix emb(hidden.rows, hidden.cols);
  emb.values = std::move(hidden.data);
  return EmbeddingMatrix(std::move(emb), EmbeddingSource::mlp_gnn, split_id);
}

}  // namespace ecg
