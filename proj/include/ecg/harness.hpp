#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecg/embedding.hpp"
#include "ecg/graph.hpp"
#include "ecg/homophily.hpp"
#include "ecg/model.hpp"
#include "ecg/rewiring.hpp"
#include "ecg/weak.hpp"

namespace ecg {

/// Every knob of one experiment. Serialised as flat `key=value` pairs; the
/// same keys are accepted from config files and `--set key=value` flags.
struct RunConfig {
  std::string data_dir;  // empty: synthetic dataset below
  std::string dataset_name = "synthetic";
  SyntheticSpec synthetic{};

  BackboneKind backbone = BackboneKind::gcn;
  ModelMode mode = ModelMode::ecg;
  EmbeddingSource tau = EmbeddingSource::mlp;
  std::size_t k = 3;
  double p_de = 0.5;
  std::size_t layers = 2;
  std::size_t width = 256;
  std::size_t heads = 4;
  double dropout = 0.2;
  bool symmetrize = false;
  bool zero_init_ecg_fusion = false;
  std::string metric = "auto";  // auto | accuracy | roc_auc

  double lr = 3e-3;
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;

  std::size_t mlp_layers = 2;
  std::size_t mlp_width = 256;
  std::size_t mlp_max_epochs = 1000;
  std::size_t mlp_patience = 100;

  std::size_t bgrl_steps = 500;
  double bgrl_feature_drop = 0.2;
  double bgrl_edge_drop = 0.3;
  double bgrl_ema = 0.99;
  double bgrl_lr = 1e-4;

  std::uint64_t seed = 0;
  std::size_t num_splits = 10;
  std::size_t jobs = 1;

  std::map<std::string, std::string> to_kv() const;
  /// Applies recognised keys; unknown keys throw.
  void apply(const std::map<std::string, std::string>& kv);
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;

  ModelConfig model_config(std::size_t in_dim, std::size_t num_classes) const;
  TrainConfig train_config(MetricKind metric, std::uint64_t seed) const;
  MlpConfig mlp_config(std::uint64_t seed) const;
  BgrlConfig bgrl_config() const;
};

/// Parses `key=value` lines (blank lines and `#` comments skipped). A `.json`
/// file is read as a provenance record and its "config" object is used.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& file);

/// git-style blob hash: sha1("blob <size>\0" + content), hex.
std::string git_blob_hash(const std::string& content);
std::string file_git_hash(const std::filesystem::path& file);

/// Loads `cfg.data_dir`, or generates the synthetic dataset and writes it
/// under `materialise_dir` (when given) so the run is hashable and reloadable.
Dataset prepare_dataset(const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& materialise_dir);

/// Combined content hash of the dataset files in `dir`.
std::string dataset_hash(const std::filesystem::path& dir);

MetricKind resolve_metric(const RunConfig& cfg, int num_classes);

struct SplitRecord {
  std::size_t split = 0;
  double val = 0.0;
  double test = 0.0;
  std::optional<double> ecg_edge_homophily;
  std::size_t best_epoch = 0;
};

struct ExperimentResult {
  RunConfig config;
  MetricKind metric = MetricKind::accuracy;
  EvalResult val;
  EvalResult test;
  std::vector<SplitRecord> splits;
  std::string data_hash;
};

/// Embedding steps 1-3 for every split and aggregation over splits. Writes
/// `results.csv` and `provenance.json` into `out_dir`. Embeddings are written
/// to `embedding_dir` (default `out_dir/embeddings`) and re-read from there;
/// existing files are reused.
ExperimentResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                std::optional<std::filesystem::path> embedding_dir = {});

/// Embedding for `cfg.tau` on one split, cached as a `.emb` file in
/// `embedding_dir` and always returned as re-read from disk.
EmbeddingMatrix build_embedding(const RunConfig& cfg, const Dataset& data, std::size_t split,
                                const std::filesystem::path& embedding_dir);

/// Same, on an already loaded dataset (no files written except embeddings).
ExperimentResult run_experiment_on(const RunConfig& cfg, const Dataset& data,
                                   const std::filesystem::path& embedding_dir);

std::string results_csv_header();
std::string results_csv_row(const ExperimentResult& r);

// ---- sweep ---------------------------------------------------------------

struct SweepGrid {
  std::vector<BackboneKind> backbones{BackboneKind::gcn, BackboneKind::sage,
                                      BackboneKind::gat_sep};
  std::vector<EmbeddingSource> taus{EmbeddingSource::mlp, EmbeddingSource::bgrl,
                                    EmbeddingSource::mlp_bgrl, EmbeddingSource::mlp_gnn};
  std::vector<std::size_t> ks{3, 10, 20};
  std::vector<double> p_des{0.0, 0.5};
  std::vector<std::size_t> layers{1, 2, 3, 4, 5};
  std::vector<std::size_t> widths{256, 512, 1024};
  bool include_baseline = true;

  /// Every configuration of the lattice, baselines first per backbone.
  std::vector<RunConfig> expand(const RunConfig& base) const;
};

struct SweepCell {
  RunConfig config;
  bool ok = false;
  std::string error;
  EvalResult val;
  EvalResult test;
};

/// Index of the completed cell with the highest mean validation metric among
/// `candidates` (first wins ties), or nullopt when none completed.
std::optional<std::size_t> select_by_validation(const std::vector<SweepCell>& cells,
                                                const std::vector<std::size_t>& candidates);

struct SweepRow {
  BackboneKind backbone;
  std::optional<std::size_t> baseline;
  std::optional<std::size_t> ecg;
  /// True iff the ECG mean test metric strictly exceeds the baseline's.
  bool improved = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
};

SweepResult summarize_sweep(std::vector<SweepCell> cells);

/// Runs the lattice (cells concurrently up to `base.jobs`), tolerating failed
/// cells, and writes results.csv, sweep_cells.csv, table1.txt and
/// best_hparams.txt under `out_dir`.
SweepResult run_sweep(const RunConfig& base, const SweepGrid& grid,
                      const std::filesystem::path& out_dir);

std::string format_table1(const SweepResult& r);
std::string format_best_hparams(const SweepResult& r);

// ---- projection ----------------------------------------------------------

struct ProjectionResult {
  ad::Matrix<double> input_points;  // n x 2
  ad::Matrix<double> ecg_points;    // n x 2
  double input_silhouette = 0.0;
  double ecg_silhouette = 0.0;
};

/// Centred 2-D PCA of the rows of `x`.
ad::Matrix<double> pca_2d(const ad::Matrix<double>& x);

/// Mean silhouette coefficient of `labels` under Euclidean distance.
double silhouette_score(const ad::Matrix<double>& points, std::span<const int> labels);

/// One random-weight GCN layer over G and over the ECG graph (shared
/// weights), each projected to 2-D by PCA.
ProjectionResult random_gcn_projection(const Graph& g, const DirectedEdges& ecg,
                                       const FeatureMatrix& features, std::span<const int> labels,
                                       std::size_t width, std::uint64_t seed);

/// Writes `graph,x,y,label` rows for both point sets.
void write_projection_csv(const std::filesystem::path& file, const ProjectionResult& p,
                          std::span<const int> labels);

// ---- reports -------------------------------------------------------------

std::string format_report(const std::string& name, const HomophilyReport& r);
std::string stats_csv_header();
std::string stats_csv_row(const std::string& name, const HomophilyReport& r);

}  // namespace ecg
