#include "ecg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>
#include <openssl/evp.h>

#include "ecg/log.hpp"

namespace ecg {

// ---- configuration -------------------------------------------------------

namespace {

std::string fmt_double(double v) { return fmt::format("{}", v); }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument(fmt::format("config '{}': expected a boolean, got '{}'", key, v));
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("config '{}': expected an integer, got '{}'", key, v));
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("config '{}': expected a number, got '{}'", key, v));
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> RunConfig::to_kv() const {
  return {
      {"data_dir", data_dir},
      {"dataset", dataset_name},
      {"syn.nodes", std::to_string(synthetic.num_nodes)},
      {"syn.classes", std::to_string(synthetic.num_classes)},
      {"syn.avg_degree", fmt_double(synthetic.avg_degree)},
      {"syn.homophily", fmt_double(synthetic.target_edge_homophily)},
      {"syn.feature_dim", std::to_string(synthetic.feature_dim)},
      {"syn.separation", fmt_double(synthetic.class_separation)},
      {"syn.seed", std::to_string(synthetic.seed)},
      {"backbone", std::string(to_string(backbone))},
      {"mode", mode == ModelMode::ecg ? "ecg" : "baseline"},
      {"tau", std::string(to_string(tau))},
      {"k", std::to_string(k)},
      {"p_de", fmt_double(p_de)},
      {"layers", std::to_string(layers)},
      {"width", std::to_string(width)},
      {"heads", std::to_string(heads)},
      {"dropout", fmt_double(dropout)},
      {"symmetrize", symmetrize ? "true" : "false"},
      {"zero_init_ecg_fusion", zero_init_ecg_fusion ? "true" : "false"},
      {"metric", metric},
      {"lr", fmt_double(lr)},
      {"max_epochs", std::to_string(max_epochs)},
      {"patience", std::to_string(patience)},
      {"mlp_layers", std::to_string(mlp_layers)},
      {"mlp_width", std::to_string(mlp_width)},
      {"mlp_max_epochs", std::to_string(mlp_max_epochs)},
      {"mlp_patience", std::to_string(mlp_patience)},
      {"bgrl_steps", std::to_string(bgrl_steps)},
      {"bgrl_feature_drop", fmt_double(bgrl_feature_drop)},
      {"bgrl_edge_drop", fmt_double(bgrl_edge_drop)},
      {"bgrl_ema", fmt_double(bgrl_ema)},
      {"bgrl_lr", fmt_double(bgrl_lr)},
      {"seed", std::to_string(seed)},
      {"splits", std::to_string(num_splits)},
      {"jobs", std::to_string(jobs)},
  };
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "data_dir") data_dir = v;
  else if (key == "dataset") dataset_name = v;
  else if (key == "syn.nodes") synthetic.num_nodes = parse_uint(key, v);
  else if (key == "syn.classes") synthetic.num_classes = static_cast<int>(parse_uint(key, v));
  else if (key == "syn.avg_degree") synthetic.avg_degree = parse_real(key, v);
  else if (key == "syn.homophily") synthetic.target_edge_homophily = parse_real(key, v);
  else if (key == "syn.feature_dim") synthetic.feature_dim = parse_uint(key, v);
  else if (key == "syn.separation") synthetic.class_separation = parse_real(key, v);
  else if (key == "syn.seed") synthetic.seed = parse_uint(key, v);
  else if (key == "backbone") backbone = parse_backbone(v);
  else if (key == "mode") {
    if (v == "ecg") mode = ModelMode::ecg;
    else if (v == "baseline") mode = ModelMode::baseline;
    else throw std::invalid_argument(fmt::format("config 'mode': expected ecg|baseline, got '{}'", v));
  }
  else if (key == "tau") tau = parse_embedding_source(v);
  else if (key == "k") k = parse_uint(key, v);
  else if (key == "p_de") p_de = parse_real(key, v);
  else if (key == "layers") layers = parse_uint(key, v);
  else if (key == "width") width = parse_uint(key, v);
  else if (key == "heads") heads = parse_uint(key, v);
  else if (key == "dropout") dropout = parse_real(key, v);
  else if (key == "symmetrize") symmetrize = parse_bool(key, v);
  else if (key == "zero_init_ecg_fusion") zero_init_ecg_fusion = parse_bool(key, v);
  else if (key == "metric") {
    if (v != "auto" && v != "accuracy" && v != "roc_auc") {
      throw std::invalid_argument(fmt::format("config 'metric': unknown metric '{}'", v));
    }
    metric = v;
  }
  else if (key == "lr") lr = parse_real(key, v);
  else if (key == "max_epochs") max_epochs = parse_uint(key, v);
  else if (key == "patience") patience = parse_uint(key, v);
  else if (key == "mlp_layers") mlp_layers = parse_uint(key, v);
  else if (key == "mlp_width") mlp_width = parse_uint(key, v);
  else if (key == "mlp_max_epochs") mlp_max_epochs = parse_uint(key, v);
  else if (key == "mlp_patience") mlp_patience = parse_uint(key, v);
  else if (key == "bgrl_steps") bgrl_steps = parse_uint(key, v);
  else if (key == "bgrl_feature_drop") bgrl_feature_drop = parse_real(key, v);
  else if (key == "bgrl_edge_drop") bgrl_edge_drop = parse_real(key, v);
  else if (key == "bgrl_ema") bgrl_ema = parse_real(key, v);
  else if (key == "bgrl_lr") bgrl_lr = parse_real(key, v);
  else if (key == "seed") seed = parse_uint(key, v);
  else if (key == "splits") num_splits = parse_uint(key, v);
  else if (key == "jobs") jobs = std::max<std::size_t>(1, parse_uint(key, v));
  else throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_kv()) j[k] = v;
  return j;
}

ModelConfig RunConfig::model_config(std::size_t in_dim, std::size_t num_classes) const {
  ModelConfig m;
  m.kind = backbone;
  m.mode = mode;
  m.in_dim = in_dim;
  m.hidden = width;
  m.num_classes = num_classes;
  m.layers = layers;
  m.heads = heads;
  m.dropout = dropout;
  m.zero_init_ecg_fusion = zero_init_ecg_fusion;
  return m;
}

TrainConfig RunConfig::train_config(MetricKind m, std::uint64_t s) const {
  TrainConfig t;
  t.adam.lr = lr;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.dropedge = p_de;
  t.metric = m;
  t.seed = s;
  return t;
}

MlpConfig RunConfig::mlp_config(std::uint64_t s) const {
  MlpConfig m;
  m.layers = mlp_layers;
  m.width = mlp_width;
  m.dropout = dropout;
  m.adam.lr = lr;
  m.max_epochs = mlp_max_epochs;
  m.patience = mlp_patience;
  m.seed = s;
  return m;
}

BgrlConfig RunConfig::bgrl_config() const {
  BgrlConfig b;
  b.width = mlp_width;
  b.steps = bgrl_steps;
  b.feature_drop = bgrl_feature_drop;
  b.edge_drop = bgrl_edge_drop;
  b.ema_decay = bgrl_ema;
  b.lr = bgrl_lr;
  b.seed = derive_seed(seed, "bgrl");
  return b;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("{}: cannot open", file.string()));
  std::map<std::string, std::string> kv;
  if (file.extension() == ".json") {
    nlohmann::json doc;
    in >> doc;
    const auto& cfg = doc.contains("config") ? doc.at("config") : doc;
    for (const auto& [k, v] : cfg.items()) kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return kv;
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(fmt::format("{}:{}: expected key=value", file.string(), lineno));
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// ---- hashing -------------------------------------------------------------

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string file_git_hash(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(fmt::format("{}: cannot open", file.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

std::string dataset_hash(const std::filesystem::path& dir) {
  // A tree-like digest over the blob hashes of the dataset files.
  std::string listing;
  for (const char* name : {"edges.tsv", "features.csv", "labels.csv", "splits.json"}) {
    if (std::filesystem::exists(dir / name)) {
      listing += fmt::format("{} {}\n", name, file_git_hash(dir / name));
    }
  }
  return git_blob_hash(listing);
}

// ---- experiment ----------------------------------------------------------

Dataset prepare_dataset(const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& materialise_dir) {
  const auto split_seed = derive_seed(cfg.seed, "splits");
  if (!cfg.data_dir.empty()) {
    auto ds = load_dataset(cfg.data_dir, cfg.num_splits, split_seed);
    if (ds.splits.size() > cfg.num_splits) ds.splits.resize(cfg.num_splits);
    if (!cfg.dataset_name.empty() && cfg.dataset_name != "synthetic") ds.name = cfg.dataset_name;
    return ds;
  }
  Dataset ds;
  std::tie(ds.graph, ds.nodes) = generate_synthetic(cfg.synthetic);
  ds.splits = make_splits(ds.graph.num_nodes(), cfg.num_splits, split_seed);
  ds.name = cfg.dataset_name;
  if (materialise_dir) save_dataset(*materialise_dir, ds.graph, ds.nodes, &ds.splits);
  return ds;
}

MetricKind resolve_metric(const RunConfig& cfg, int num_classes) {
  if (cfg.metric == "accuracy") return MetricKind::accuracy;
  if (cfg.metric == "roc_auc") return MetricKind::roc_auc;
  return num_classes == 2 ? MetricKind::roc_auc : MetricKind::accuracy;
}

namespace {

/// Serialises creation of each embedding file across concurrent runs.
class EmbeddingStore {
 public:
  template <typename Fn>
  EmbeddingMatrix get_or_create(const std::filesystem::path& file, Fn&& create) {
    std::shared_ptr<std::mutex> lock;
    {
      std::lock_guard guard(mu_);
      auto& slot = locks_[file.string()];
      if (!slot) slot = std::make_shared<std::mutex>();
      lock = slot;
    }
    std::lock_guard guard(*lock);
    if (!std::filesystem::exists(file)) {
      EmbeddingMatrix fresh = create();
      const auto tmp = file.string() + ".tmp";
      write_embeddings(tmp, fresh);
      std::filesystem::rename(tmp, file);
    }
    return read_embeddings(file);
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

EmbeddingStore& embedding_store() {
  static EmbeddingStore store;
  return store;
}

std::string short_hash(const std::string& text) {
  return git_blob_hash(text).substr(0, 12);
}

std::string mlp_key(const RunConfig& c) {
  return short_hash(fmt::format("mlp|{}|{}|{}|{}|{}|{}|{}|{}", c.dataset_name, c.mlp_layers,
                                c.mlp_width, c.mlp_max_epochs, c.mlp_patience, c.lr, c.dropout,
                                c.seed));
}

std::string bgrl_key(const RunConfig& c) {
  return short_hash(fmt::format("bgrl|{}|{}|{}|{}|{}|{}|{}|{}", c.dataset_name, c.mlp_width,
                                c.bgrl_steps, c.bgrl_feature_drop, c.bgrl_edge_drop, c.bgrl_ema,
                                c.bgrl_lr, c.seed));
}

std::string donor_key(const RunConfig& c) {
  auto kv = c.to_kv();
  kv.erase("tau");
  kv.erase("jobs");
  std::string s = "donor";
  for (const auto& [k, v] : kv) s += "|" + k + "=" + v;
  return short_hash(s);
}

DirectedEdges ecg_edge_set(const EcgEdges& e, bool symmetrize) {
  return symmetrize ? symmetrized_edges(e) : directed_edges(e);
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard guard(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

namespace {

/// Runs `fn`, re-throwing any failure with the pipeline stage named.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(fmt::format("stage '{}': {}", stage, e.what()));
  }
}

EmbeddingMatrix mlp_embedding(const RunConfig& cfg, const Dataset& data, std::size_t split,
                              const std::filesystem::path& dir) {
  auto file = dir / fmt::format("mlp_{}_split{}.emb", mlp_key(cfg), split);
  return embedding_store().get_or_create(file, [&] {
    return staged(fmt::format("MLP embedding (split {})", split), [&] {
      log_info("[{}] training MLP weak classifier for split {}", cfg.dataset_name, split);
      return train_mlp(data.nodes, data.splits[split], split,
                       cfg.mlp_config(derive_seed(cfg.seed, "mlp", split)))
          .embedding;
    });
  });
}

EmbeddingMatrix bgrl_embedding(const RunConfig& cfg, const Dataset& data,
                               const std::filesystem::path& dir) {
  auto file = dir / fmt::format("bgrl_{}.emb", bgrl_key(cfg));
  return embedding_store().get_or_create(file, [&] {
    return staged("BGRL embedding", [&] {
      log_info("[{}] training BGRL encoder", cfg.dataset_name);
      return train_bgrl(data.graph, data.nodes.features, cfg.bgrl_config()).embedding;
    });
  });
}

}  // namespace

EmbeddingMatrix build_embedding(const RunConfig& cfg, const Dataset& data, std::size_t split,
                                const std::filesystem::path& embedding_dir) {
  if (split >= data.splits.size()) {
    throw std::invalid_argument(fmt::format("split {} out of range ({} splits)", split,
                                            data.splits.size()));
  }
  std::filesystem::create_directories(embedding_dir);
  switch (cfg.tau) {
    case EmbeddingSource::mlp: return mlp_embedding(cfg, data, split, embedding_dir);
    case EmbeddingSource::bgrl: return bgrl_embedding(cfg, data, embedding_dir);
    case EmbeddingSource::mlp_bgrl:
      return concat_embeddings(mlp_embedding(cfg, data, split, embedding_dir),
                               bgrl_embedding(cfg, data, embedding_dir));
    case EmbeddingSource::mlp_gnn: {
      auto file = embedding_dir / fmt::format("mlpgnn_{}_split{}.emb", donor_key(cfg), split);
      const auto mlp = mlp_embedding(cfg, data, split, embedding_dir);
      return embedding_store().get_or_create(file, [&] {
        return staged(fmt::format("MLP->GNN donor (split {})", split), [&] {
          log_info("[{}] training MLP-ECG donor ({}) for split {}", cfg.dataset_name,
                   to_string(cfg.backbone), split);
          const auto donor_edges = ecg_edge_set(cosine_topk(mlp, cfg.k, 1), cfg.symmetrize);
          auto donor_cfg = cfg;
          donor_cfg.mode = ModelMode::ecg;
          EcgGnnModel<float> donor(
              donor_cfg.model_config(data.nodes.features.cols,
                                     static_cast<std::size_t>(data.nodes.num_classes)),
              derive_seed(cfg.seed, "donor-init", split));
          train_model(donor, data.graph, data.nodes, data.splits[split], &donor_edges,
                      cfg.train_config(resolve_metric(cfg, data.nodes.num_classes),
                                       derive_seed(cfg.seed, "donor-train", split)));
          return extract_gnn_embeddings(donor, data.graph, data.nodes, donor_edges, split);
        });
      });
    }
  }
  throw std::logic_error("unknown embedding source");
}

ExperimentResult run_experiment_on(const RunConfig& cfg, const Dataset& data,
                                   const std::filesystem::path& embedding_dir) {
  if (data.splits.empty()) throw std::invalid_argument("run_experiment: dataset has no splits");
  std::filesystem::create_directories(embedding_dir);
  const auto metric = resolve_metric(cfg, data.nodes.num_classes);
  const bool ecg_mode = cfg.mode == ModelMode::ecg;
  const auto& g = data.graph;
  const auto& nodes = data.nodes;

  // BGRL is shared by every split; build it once before fanning out.
  if (ecg_mode && (cfg.tau == EmbeddingSource::bgrl || cfg.tau == EmbeddingSource::mlp_bgrl)) {
    bgrl_embedding(cfg, data, embedding_dir);
  }

  std::vector<SplitRecord> records(data.splits.size());
  parallel_for(data.splits.size(), cfg.jobs, [&](std::size_t s) {
    SplitRecord rec;
    rec.split = s;
    std::optional<DirectedEdges> ecg_edges;
    if (ecg_mode) {
      const auto emb = build_embedding(cfg, data, s, embedding_dir);
      const auto topk = staged("rewiring", [&] { return cosine_topk(emb, cfg.k, 1); });
      rec.ecg_edge_homophily = ecg_homophily(topk, nodes.labels);
      ecg_edges = ecg_edge_set(topk, cfg.symmetrize);
    }
    EcgGnnModel<float> model(
        cfg.model_config(nodes.features.cols, static_cast<std::size_t>(nodes.num_classes)),
        derive_seed(cfg.seed, "model-init", s));
    auto outcome = staged(fmt::format("GNN training (split {})", s), [&] {
      return train_model(model, g, nodes, data.splits[s], ecg_edges ? &*ecg_edges : nullptr,
                         cfg.train_config(metric, derive_seed(cfg.seed, "train", s)));
    });
    rec.val = outcome.val_metric;
    rec.test = outcome.test_metric;
    rec.best_epoch = outcome.best_epoch;
    records[s] = rec;
    log_info("[{}] {}{} split {}: val={:.4f} test={:.4f}", cfg.dataset_name,
             ecg_mode ? "ECG-" : "", to_string(cfg.backbone), s, rec.val, rec.test);
  });

  ExperimentResult r;
  r.config = cfg;
  r.metric = metric;
  r.splits = records;
  std::vector<double> vals, tests;
  for (const auto& rec : records) {
    vals.push_back(rec.val);
    tests.push_back(rec.test);
  }
  r.val = EvalResult::from_values(metric, vals);
  r.test = EvalResult::from_values(metric, tests);
  return r;
}

std::string results_csv_header() { return "dataset,backbone,mode,tau,k,p_de,L,d,metric,mean,std"; }

std::string results_csv_row(const ExperimentResult& r) {
  const auto& c = r.config;
  const bool ecg_mode = c.mode == ModelMode::ecg;
  return fmt::format("{},{},{},{},{},{},{},{},{},{:.6f},{:.6f}", c.dataset_name,
                     to_string(c.backbone), ecg_mode ? "ecg" : "baseline",
                     ecg_mode ? std::string(to_string(c.tau)) : "-",
                     ecg_mode ? std::to_string(c.k) : "-", ecg_mode ? fmt_double(c.p_de) : "-",
                     c.layers, c.width, to_string(r.metric), r.test.mean, r.test.std);
}

namespace {

nlohmann::json eval_json(const EvalResult& e) {
  return {{"metric", std::string(to_string(e.metric))},
          {"values", e.values},
          {"mean", e.mean},
          {"std", e.std},
          {"std_kind", "sample standard deviation over splits (n-1)"}};
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                std::optional<std::filesystem::path> embedding_dir) {
  std::filesystem::create_directories(out_dir);
  std::optional<std::filesystem::path> data_copy;
  if (cfg.data_dir.empty()) data_copy = out_dir / "dataset";
  const auto data = prepare_dataset(cfg, data_copy);
  const auto hash = dataset_hash(data_copy ? *data_copy : std::filesystem::path(cfg.data_dir));

  auto result = run_experiment_on(cfg, data, embedding_dir.value_or(out_dir / "embeddings"));
  result.data_hash = hash;

  {
    std::ofstream out(out_dir / "results.csv");
    out << results_csv_header() << '\n' << results_csv_row(result) << '\n';
  }
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : result.splits) {
    splits.push_back({{"split", s.split},
                      {"val", s.val},
                      {"test", s.test},
                      {"best_epoch", s.best_epoch},
                      {"ecg_edge_homophily", s.ecg_edge_homophily
                                                 ? nlohmann::json(*s.ecg_edge_homophily)
                                                 : nlohmann::json(nullptr)}});
  }
  nlohmann::json prov;
  prov["config"] = cfg.to_json();
  prov["data_hash"] = hash;
  prov["dataset"] = data.name;
  prov["num_nodes"] = data.graph.num_nodes();
  prov["num_edges"] = data.graph.num_edges();
  prov["optimizer"] = {{"name", "adam"}, {"lr", cfg.lr}, {"beta1", 0.9}, {"beta2", 0.999}};
  prov["early_stopping"] = {{"max_epochs", cfg.max_epochs}, {"patience", cfg.patience}};
  prov["val"] = eval_json(result.val);
  prov["test"] = eval_json(result.test);
  prov["splits"] = splits;
  std::ofstream(out_dir / "provenance.json") << prov.dump(2) << '\n';
  return result;
}

// ---- sweep ---------------------------------------------------------------

std::vector<RunConfig> SweepGrid::expand(const RunConfig& base) const {
  std::vector<RunConfig> out;
  for (auto bb : backbones) {
    if (include_baseline) {
      for (auto L : layers) {
        for (auto d : widths) {
          RunConfig c = base;
          c.backbone = bb;
          c.mode = ModelMode::baseline;
          c.layers = L;
          c.width = d;
          out.push_back(c);
        }
      }
    }
    for (auto tau : taus) {
      for (auto k : ks) {
        for (auto p : p_des) {
          for (auto L : layers) {
            for (auto d : widths) {
              RunConfig c = base;
              c.backbone = bb;
              c.mode = ModelMode::ecg;
              c.tau = tau;
              c.k = k;
              c.p_de = p;
              c.layers = L;
              c.width = d;
              out.push_back(c);
            }
          }
        }
      }
    }
  }
  return out;
}

std::optional<std::size_t> select_by_validation(const std::vector<SweepCell>& cells,
                                                const std::vector<std::size_t>& candidates) {
  std::optional<std::size_t> best;
  for (auto i : candidates) {
    if (!cells[i].ok) continue;
    if (!best || cells[i].val.mean > cells[*best].val.mean) best = i;
  }
  return best;
}

SweepResult summarize_sweep(std::vector<SweepCell> cells) {
  SweepResult r;
  r.cells = std::move(cells);
  std::vector<BackboneKind> order;
  for (const auto& c : r.cells) {
    if (std::find(order.begin(), order.end(), c.config.backbone) == order.end()) {
      order.push_back(c.config.backbone);
    }
  }
  for (auto bb : order) {
    std::vector<std::size_t> base, ecg;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      if (r.cells[i].config.backbone != bb) continue;
      (r.cells[i].config.mode == ModelMode::ecg ? ecg : base).push_back(i);
    }
    SweepRow row{bb, select_by_validation(r.cells, base), select_by_validation(r.cells, ecg)};
    row.improved = row.baseline && row.ecg &&
                   r.cells[*row.ecg].test.mean > r.cells[*row.baseline].test.mean;
    r.rows.push_back(row);
  }
  return r;
}

std::string format_table1(const SweepResult& r) {
  std::string out;
  std::string dataset = r.cells.empty() ? "dataset" : r.cells.front().config.dataset_name;
  std::string metric = "metric";
  for (const auto& c : r.cells) {
    if (c.ok) {
      metric = std::string(to_string(c.test.metric));
      break;
    }
  }
  out += fmt::format("{:<16}{} ({}, mean ± sample std over splits, %)\n", "Model", dataset, metric);
  auto cell = [&](std::optional<std::size_t> i) {
    if (!i) return std::string("failed");
    const auto& t = r.cells[*i].test;
    return fmt::format("{:.2f} ± {:.2f}", 100.0 * t.mean, 100.0 * t.std);
  };
  for (const auto& row : r.rows) {
    out += fmt::format("{:<16}{}\n", to_string(row.backbone), cell(row.baseline));
    std::string mark;
    if (row.baseline && row.ecg) mark = row.improved ? " (↑)" : " (↓)";
    out += fmt::format("{:<16}{}{}\n", fmt::format("ECG-{}", to_string(row.backbone)),
                       cell(row.ecg), mark);
  }
  return out;
}

std::string format_best_hparams(const SweepResult& r) {
  std::string out = "Best hyperparameters (selected by mean validation metric)\n";
  for (const auto& row : r.rows) {
    out += fmt::format("\n{}\n", to_string(row.backbone));
    const bool ecg_wins = row.ecg && (!row.baseline || row.improved);
    auto idx = ecg_wins ? row.ecg : row.baseline;
    if (!idx) {
      out += "  (no completed cells)\n";
      continue;
    }
    const auto& c = r.cells[*idx].config;
    out += fmt::format("  {:<6}{}\n", "L", c.layers);
    out += fmt::format("  {:<6}{}\n", "d", c.width);
    out += fmt::format("  {:<6}{}\n", "tau", ecg_wins ? std::string(to_string(c.tau)) : "Baseline");
    out += fmt::format("  {:<6}{}\n", "k", ecg_wins ? std::to_string(c.k) : "---");
    out += fmt::format("  {:<6}{}\n", "p_de", ecg_wins ? fmt_double(c.p_de) : "---");
  }
  return out;
}

SweepResult run_sweep(const RunConfig& base, const SweepGrid& grid,
                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::optional<std::filesystem::path> data_copy;
  if (base.data_dir.empty()) data_copy = out_dir / "dataset";
  const auto data = prepare_dataset(base, data_copy);
  const auto hash = dataset_hash(data_copy ? *data_copy : std::filesystem::path(base.data_dir));
  const auto emb_dir = out_dir / "embeddings";

  auto configs = grid.expand(base);
  std::vector<SweepCell> cells(configs.size());
  log_info("sweep: {} cells", configs.size());
  parallel_for(configs.size(), base.jobs, [&](std::size_t i) {
    auto cfg = configs[i];
    cfg.jobs = 1;
    SweepCell cell;
    cell.config = configs[i];
    try {
      auto res = run_experiment_on(cfg, data, emb_dir);
      cell.ok = true;
      cell.val = res.val;
      cell.test = res.test;
    } catch (const std::exception& e) {
      cell.error = e.what();
      log_warn("sweep cell {} failed: {}", i, e.what());
    }
    cells[i] = std::move(cell);
  });

  auto result = summarize_sweep(std::move(cells));
  {
    std::ofstream out(out_dir / "results.csv");
    out << results_csv_header() << '\n';
    for (const auto& c : result.cells) {
      if (!c.ok) continue;
      ExperimentResult er;
      er.config = c.config;
      er.metric = c.test.metric;
      er.test = c.test;
      out << results_csv_row(er) << '\n';
    }
  }
  {
    std::ofstream out(out_dir / "sweep_cells.csv");
    out << "cell,backbone,mode,tau,k,p_de,L,d,status,val_mean,val_std,test_mean,test_std,error\n";
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      const auto& c = result.cells[i];
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      out << fmt::format("{},{},{},{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", i,
                         to_string(c.config.backbone),
                         c.config.mode == ModelMode::ecg ? "ecg" : "baseline",
                         to_string(c.config.tau), c.config.k, fmt_double(c.config.p_de),
                         c.config.layers, c.config.width, c.ok ? "ok" : "failed", c.val.mean,
                         c.val.std, c.test.mean, c.test.std, err);
    }
  }
  std::ofstream(out_dir / "table1.txt") << format_table1(result);
  std::ofstream(out_dir / "best_hparams.txt") << format_best_hparams(result);
  std::vector<std::string> backbones, taus;
  for (auto b : grid.backbones) backbones.emplace_back(to_string(b));
  for (auto t : grid.taus) taus.emplace_back(to_string(t));
  nlohmann::json prov;
  prov["config"] = base.to_json();
  prov["data_hash"] = hash;
  prov["grid"] = {{"backbones", backbones}, {"taus", taus}, {"k", grid.ks},
                  {"p_de", grid.p_des}, {"layers", grid.layers}, {"widths", grid.widths},
                  {"include_baseline", grid.include_baseline}};
  prov["selection_rule"] = "max mean validation metric; first cell wins ties";
  std::ofstream(out_dir / "provenance.json") << prov.dump(2) << '\n';
  return result;
}

// ---- projection ----------------------------------------------------------

ad::Matrix<double> pca_2d(const ad::Matrix<double>& x) {
  const std::size_t n = x.rows, d = x.cols;
  if (n == 0 || d < 2) throw std::invalid_argument("pca_2d: need at least two columns");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j);
  }
  m.rowwise() -= m.colwise().mean();
  Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(std::max<std::size_t>(1, n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascending: the last two columns are the leading components.
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), 2);
  basis.col(0) = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 1);
  basis.col(1) = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 2);
  Eigen::MatrixXd proj = m * basis;
  ad::Matrix<double> out(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, 0) = proj(static_cast<Eigen::Index>(i), 0);
    out(i, 1) = proj(static_cast<Eigen::Index>(i), 1);
  }
  return out;
}

double silhouette_score(const ad::Matrix<double>& points, std::span<const int> labels) {
  const std::size_t n = points.rows;
  if (labels.size() != n) throw std::invalid_argument("silhouette_score: label count mismatch");
  int C = 0;
  for (int y : labels) C = std::max(C, y + 1);
  std::vector<double> count(static_cast<std::size_t>(C), 0.0);
  for (int y : labels) count[static_cast<std::size_t>(y)] += 1.0;
  std::vector<double> sums(static_cast<std::size_t>(C));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    auto pi = points.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto pj = points.row(j);
      double sq = 0.0;
      for (std::size_t c = 0; c < points.cols; ++c) sq += (pi[c] - pj[c]) * (pi[c] - pj[c]);
      sums[static_cast<std::size_t>(labels[j])] += std::sqrt(sq);
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (count[own] <= 1.0) continue;  // singleton cluster scores 0
    const double a = sums[own] / (count[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own && count[c] > 0.0) b = std::min(b, sums[c] / count[c]);
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

ProjectionResult random_gcn_projection(const Graph& g, const DirectedEdges& ecg,
                                       const FeatureMatrix& features, std::span<const int> labels,
                                       std::size_t width, std::uint64_t seed) {
  auto rng = make_rng(seed, "projection");
  const auto w = ad::glorot<double>(features.cols, width, rng);
  const auto x = ad::from_features<double>(features);
  auto embed = [&](const DirectedEdges& edges) {
    const auto prop = make_propagation(edges, BackboneKind::gcn);
    ad::Tape<double> tape(false);
    auto wv = tape.constant_ref(w);
    return ad::spmm(prop.gcn, ad::matmul(tape.constant_ref(x), wv)).value();
  };
  ProjectionResult r;
  r.input_points = pca_2d(embed(directed_edges(g)));
  r.ecg_points = pca_2d(embed(ecg));
  r.input_silhouette = silhouette_score(r.input_points, labels);
  r.ecg_silhouette = silhouette_score(r.ecg_points, labels);
  return r;
}

void write_projection_csv(const std::filesystem::path& file, const ProjectionResult& p,
                          std::span<const int> labels) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  out << "graph,x,y,label\n";
  auto dump = [&](const char* name, const ad::Matrix<double>& pts) {
    for (std::size_t i = 0; i < pts.rows; ++i) {
      out << fmt::format("{},{:.9g},{:.9g},{}\n", name, pts(i, 0), pts(i, 1), labels[i]);
    }
  };
  dump("input", p.input_points);
  dump("ecg", p.ecg_points);
}

// ---- reports -------------------------------------------------------------

std::string format_report(const std::string& name, const HomophilyReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.4f}", *v) : std::string("—");
  };
  std::string mass;
  for (double d : r.class_degree_mass) mass += fmt::format("{}{:.0f}", mass.empty() ? "" : " ", d);
  std::string out;
  out += fmt::format("{:<24}{}\n", "graph", name);
  out += fmt::format("{:<24}{}\n", "edges", r.num_edges);
  out += fmt::format("{:<24}{:.4f}\n", "edge homophily", r.edge_homophily);
  out += fmt::format("{:<24}{}\n", "adjusted homophily", opt(r.adjusted_homophily));
  out += fmt::format("{:<24}{}\n", "label informativeness", opt(r.label_informativeness));
  out += fmt::format("{:<24}{}\n", "class degree mass", mass);
  return out;
}

std::string stats_csv_header() { return "graph,edges,h_edge,h_adj,li"; }

std::string stats_csv_row(const std::string& name, const HomophilyReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.6f}", *v) : std::string("undefined");
  };
  return fmt::format("{},{},{:.6f},{},{}", name, r.num_edges, r.edge_homophily,
                     opt(r.adjusted_homophily), opt(r.label_informativeness));
}

}  // namespace ecg
