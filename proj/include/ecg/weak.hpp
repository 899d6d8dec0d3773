#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ecg/embedding.hpp"
#include "ecg/graph.hpp"
#include "ecg/model.hpp"
#include "ecg/tensor.hpp"

namespace ecg {

// ---- MLP -----------------------------------------------------------------

struct MlpConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  double dropout = 0.2;
  ad::AdamConfig adam{};
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;
  std::uint64_t seed = 0;
};

/// Point-wise encoder h1 = GELU(x W1), h_l = GELU(h_{l-1} W_l) for l = 2 and
/// h_l = h_{l-1} + GELU(h_{l-1} W_l) for l >= 3, plus a logistic head that is
/// only used while training.
template <typename T>
class MlpEncoder {
 public:
  MlpEncoder() = default;
  MlpEncoder(std::size_t in_dim, std::size_t width, std::size_t layers, std::size_t num_classes,
             std::uint64_t seed);

  /// Returns {hidden h^(L), logits}.
  std::pair<ad::Var<T>, ad::Var<T>> forward(ad::Tape<T>& tape, ad::Var<T> x, double dropout,
                                            Rng* rng, bool train);
  std::vector<ad::Parameter<T>*> parameters();

 private:
  std::vector<ad::Parameter<T>> layers_;
  ad::Parameter<T> head_;
  ad::Parameter<T> head_bias_;
};

struct MlpResult {
  EmbeddingMatrix embedding;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  /// Rows that entered the loss, for split-hygiene checks.
  std::vector<NodeId> loss_mask;
};

/// Trains on `split.train` only (validation picks the best epoch) and returns
/// h^(L) for every node, tagged with `split_id`.
MlpResult train_mlp(const NodeTable& nodes, const Split& split, std::size_t split_id,
                    const MlpConfig& cfg);

// ---- BGRL ----------------------------------------------------------------

struct BgrlConfig {
  std::size_t width = 64;
  std::size_t steps = 500;
  double feature_drop = 0.2;
  double edge_drop = 0.3;
  double ema_decay = 0.99;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

/// Online/target two-layer GCN encoders and the online predictor.
struct BgrlState {
  std::vector<ad::Parameter<float>> online;
  std::vector<ad::Parameter<float>> target;
  std::vector<ad::Parameter<float>> predictor;
  double ema_decay = 0.99;
  double feature_drop = 0.2;
  double edge_drop = 0.3;
};

struct BgrlResult {
  BgrlState state;
  EmbeddingMatrix embedding;
  /// Symmetrised loss (negated mean cosine) per step.
  std::vector<double> loss_history;
  /// Mean cosine between predictor output and target embedding on the
  /// un-augmented graph, before and after training.
  double initial_alignment = 0.0;
  double final_alignment = 0.0;
};

/// Self-supervised bootstrap training. Only structure and features are read.
BgrlResult train_bgrl(const Graph& g, const FeatureMatrix& features, const BgrlConfig& cfg);

/// Two-layer GCN encoder forward (GELU after each layer).
template <typename T>
ad::Var<T> bgrl_encode(ad::Tape<T>& tape, std::vector<ad::Parameter<T>>& enc,
                       const ad::SparseOp& gcn, ad::Var<T> x);

/// Predictor: Linear -> GELU -> Linear.
template <typename T>
ad::Var<T> bgrl_predict(ad::Tape<T>& tape, std::vector<ad::Parameter<T>>& pred, ad::Var<T> h);

/// target <- decay * target + (1 - decay) * online.
void ema_update(std::vector<ad::Parameter<float>>& target,
                const std::vector<ad::Parameter<float>>& online, double decay);

// ---- donor GNN -----------------------------------------------------------

/// Final pre-classifier representations of a trained ECG model, tagged
/// MLP->GNN with the donor's split id.
EmbeddingMatrix extract_gnn_embeddings(EcgGnnModel<float>& donor, const Graph& g,
                                       const NodeTable& nodes, const DirectedEdges& donor_ecg,
                                       std::optional<std::size_t> split_id);

}  // namespace ecg
