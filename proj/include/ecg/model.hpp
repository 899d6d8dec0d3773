#pragma once

#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecg/graph.hpp"
#include "ecg/rewiring.hpp"
#include "ecg/tensor.hpp"

namespace ecg {

enum class BackboneKind { gcn, sage, gat_sep };

std::string_view to_string(BackboneKind k);
BackboneKind parse_backbone(std::string_view text);

/// Precomputed propagation operators for one edge set.
struct Propagation {
  std::size_t num_nodes = 0;
  /// GCN: self-loops plus beta_uv = 1/sqrt((out_u + 1)(in_v + 1)).
  ad::SparseOp gcn;
  /// Mean over senders; empty rows stay empty (zero aggregate).
  ad::SparseOp mean;
  /// Unit-weight sender lists, for attention.
  ad::SparseOp adjacency;
};

Propagation make_propagation(const DirectedEdges& edges, BackboneKind kind);

/// One message-passing layer. Returns the pre-activation output; the caller
/// applies the nonlinearity (after fusion in ECG mode).
template <typename T>
class BackboneLayer {
 public:
  BackboneLayer() = default;
  BackboneLayer(BackboneKind kind, std::size_t in_dim, std::size_t out_dim, std::size_t heads,
                Rng& rng, const std::string& prefix);

  ad::Var<T> forward(ad::Tape<T>& tape, const Propagation& prop, ad::Var<T> h);

  BackboneKind kind() const { return kind_; }
  std::vector<ad::Parameter<T>*> parameters();

 private:
  BackboneKind kind_ = BackboneKind::gcn;
  std::size_t heads_ = 1;
  // GCN: weight, bias. SAGE: w_self, w_agg, bias.
  // GAT-sep: weight (z), att_src, att_dst, w_self, w_agg, bias.
  std::vector<ad::Parameter<T>> params_;
};

enum class ModelMode { baseline, ecg };

struct ModelConfig {
  BackboneKind kind = BackboneKind::gcn;
  ModelMode mode = ModelMode::ecg;
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  std::size_t num_classes = 2;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.2;
  bool zero_init_ecg_fusion = false;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-forward state: the tape plus propagation operators built on the fly
/// (dropped ECG edge sets) that recorded ops refer to.
template <typename T>
struct ForwardContext {
  explicit ForwardContext(bool grad) : tape(grad) {}
  ad::Tape<T> tape;
  std::deque<Propagation> scratch;
};

struct ForwardOptions {
  bool train = false;
  double dropedge = 0.0;
  Rng* dropout_rng = nullptr;
  Rng* dropedge_rng = nullptr;
};

template <typename T>
struct ForwardOutput {
  ad::Var<T> logits;
  ad::Var<T> hidden;  // h^(L), pre-classifier
};

/// Two-processor network: per layer one backbone over the input graph and one
/// over the ECG graph, fused as h = GELU(W h_inp + U h_ecg). In baseline mode
/// only the input-graph processor runs and h = GELU(h_inp).
template <typename T>
class EcgGnnModel {
 public:
  EcgGnnModel() = default;
  EcgGnnModel(const ModelConfig& cfg, std::uint64_t seed);

  /// `input` is the propagation over G; `ecg_edges` the full ECG edge set
  /// (ignored in baseline mode). In train mode ECG edges are dropped
  /// independently at every layer.
  ForwardOutput<T> forward(ForwardContext<T>& ctx, const Propagation& input,
                           const DirectedEdges* ecg_edges, const ad::Matrix<T>& x,
                           const ForwardOptions& opt);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ad::Parameter<T>*> parameters();
  std::size_t parameter_count();

  /// Named parameter groups, used by tests to reach individual blocks.
  std::vector<ad::Parameter<T>*> inp_parameters();
  std::vector<ad::Parameter<T>*> ecg_parameters();
  std::vector<ad::Parameter<T>*> fusion_parameters();

 private:
  ModelConfig cfg_;
  std::vector<BackboneLayer<T>> inp_;
  std::vector<BackboneLayer<T>> ecg_;
  std::vector<ad::Parameter<T>> fuse_w_;
  std::vector<ad::Parameter<T>> fuse_u_;
  ad::Parameter<T> classifier_;
  ad::Parameter<T> classifier_bias_;
};

// ---- evaluation ----------------------------------------------------------

enum class MetricKind { accuracy, roc_auc };
std::string_view to_string(MetricKind m);

/// Argmax match rate over `mask`; ties go to the lowest class id.
double accuracy(const ad::Matrix<float>& logits, std::span<const int> labels,
                std::span<const NodeId> mask);

/// Mann-Whitney AUC: P(score of a random positive > random negative), ties 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels,
               std::span<const NodeId> mask);

/// Metric computed from logits; for ROC-AUC the score is P(class 1).
double evaluate_metric(MetricKind kind, const ad::Matrix<float>& logits,
                       std::span<const int> labels, std::span<const NodeId> mask);

struct EvalResult {
  MetricKind metric = MetricKind::accuracy;
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)

  static EvalResult from_values(MetricKind m, std::vector<double> values);
};

// ---- training ------------------------------------------------------------

struct TrainConfig {
  ad::AdamConfig adam{};
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;
  double dropedge = 0.5;
  MetricKind metric = MetricKind::accuracy;
  std::uint64_t seed = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOutcome {
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double train_metric = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  std::vector<double> loss_history;
};

/// Full-graph training on the split's train nodes with early stopping on the
/// validation metric; the best-validation parameters are restored before the
/// test evaluation.
TrainOutcome train_model(EcgGnnModel<float>& model, const Graph& g, const NodeTable& nodes,
                         const Split& split, const DirectedEdges* ecg, const TrainConfig& cfg);

/// Eval-mode logits and h^(L) for all nodes.
std::pair<ad::Matrix<float>, ad::Matrix<float>> predict(EcgGnnModel<float>& model,
                                                        const Graph& g, const NodeTable& nodes,
                                                        const DirectedEdges* ecg);

// ---- checkpoints ---------------------------------------------------------

/// Binary container: magic "ECGCKPT1", u32 version, u64 header length, JSON
/// header (model config, run config, parameter manifest of name/shape/offset),
/// then a little-endian float32 parameter block.
void save_checkpoint(const std::filesystem::path& file, EcgGnnModel<float>& model,
                     const nlohmann::json& run_config);
EcgGnnModel<float> load_checkpoint(const std::filesystem::path& file,
                                   nlohmann::json* run_config = nullptr);

}  // namespace ecg
