#include "ecg/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/core.h>

#include "ecg/log.hpp"

namespace ecg {

std::string_view to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::gcn: return "GCN";
    case BackboneKind::sage: return "SAGE";
    case BackboneKind::gat_sep: return "GAT-sep";
  }
  return "?";
}

BackboneKind parse_backbone(std::string_view text) {
  std::string t;
  for (char c : text) {
    if (c != '-' && c != '_') t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (t == "gcn") return BackboneKind::gcn;
  if (t == "sage" || t == "graphsage") return BackboneKind::sage;
  if (t == "gatsep" || t == "gat") return BackboneKind::gat_sep;
  throw std::invalid_argument(fmt::format("unknown backbone '{}'", text));
}

std::string_view to_string(MetricKind m) {
  return m == MetricKind::accuracy ? "accuracy" : "roc_auc";
}

Propagation make_propagation(const DirectedEdges& edges, BackboneKind kind) {
  const std::size_t n = edges.num_nodes;
  Propagation p;
  p.num_nodes = n;
  auto init = [n](ad::SparseOp& op, std::size_t reserve) {
    op.rows = op.cols = n;
    op.offsets.assign(1, 0);
    op.offsets.reserve(n + 1);
    op.index.reserve(reserve);
    op.coeff.reserve(reserve);
  };

  if (kind == BackboneKind::gcn) {
    std::vector<double> send(n, 0.0);
    for (NodeId v : edges.senders) send[v] += 1.0;
    init(p.gcn, edges.num_edges() + n);
    for (NodeId u = 0; u < n; ++u) {
      auto row = edges.row(u);
      const double recv = static_cast<double>(row.size()) + 1.0;
      p.gcn.index.push_back(u);
      p.gcn.coeff.push_back(1.0 / std::sqrt(recv * (send[u] + 1.0)));
      for (NodeId v : row) {
        p.gcn.index.push_back(v);
        p.gcn.coeff.push_back(1.0 / std::sqrt(recv * (send[v] + 1.0)));
      }
      p.gcn.offsets.push_back(p.gcn.index.size());
    }
  } else if (kind == BackboneKind::sage) {
    init(p.mean, edges.num_edges());
    for (NodeId u = 0; u < n; ++u) {
      auto row = edges.row(u);
      for (NodeId v : row) {
        p.mean.index.push_back(v);
        p.mean.coeff.push_back(1.0 / static_cast<double>(row.size()));
      }
      p.mean.offsets.push_back(p.mean.index.size());
    }
  } else {
    init(p.adjacency, edges.num_edges());
    p.adjacency.offsets = edges.offsets;
    p.adjacency.index = edges.senders;
    p.adjacency.coeff.assign(edges.num_edges(), 1.0);
  }
  return p;
}

// ---- backbone layer ------------------------------------------------------

template <typename T>
BackboneLayer<T>::BackboneLayer(BackboneKind kind, std::size_t in_dim, std::size_t out_dim,
                                std::size_t heads, Rng& rng, const std::string& prefix)
    : kind_(kind), heads_(heads) {
  auto weight = [&](const std::string& name, std::size_t r, std::size_t c) {
    params_.emplace_back(prefix + name, ad::glorot<T>(r, c, rng));
  };
  auto zeros = [&](const std::string& name, std::size_t r, std::size_t c) {
    params_.emplace_back(prefix + name, ad::Matrix<T>(r, c));
  };
  switch (kind) {
    case BackboneKind::gcn:
      weight("weight", in_dim, out_dim);
      zeros("bias", 1, out_dim);
      break;
    case BackboneKind::sage:
      weight("w_self", in_dim, out_dim);
      weight("w_agg", in_dim, out_dim);
      zeros("bias", 1, out_dim);
      break;
    case BackboneKind::gat_sep:
      if (heads == 0 || out_dim % heads != 0) {
        throw std::invalid_argument(
            fmt::format("GAT-sep: width {} not divisible by {} heads", out_dim, heads));
      }
      weight("weight", in_dim, out_dim);
      weight("att_src", 1, out_dim);
      weight("att_dst", 1, out_dim);
      weight("w_self", in_dim, out_dim);
      weight("w_agg", out_dim, out_dim);
      zeros("bias", 1, out_dim);
      break;
  }
}

template <typename T>
ad::Var<T> BackboneLayer<T>::forward(ad::Tape<T>& tape, const Propagation& prop, ad::Var<T> h) {
  if (h.rows() != prop.num_nodes) {
    throw ad::ShapeError(fmt::format("backbone layer: {} rows for {} nodes", h.rows(),
                                     prop.num_nodes));
  }
  auto P = [&](std::size_t i) { return tape.parameter(params_[i]); };
  switch (kind_) {
    case BackboneKind::gcn: {
      auto z = ad::matmul(h, P(0));
      return ad::add_row(ad::spmm(prop.gcn, z), P(1));
    }
    case BackboneKind::sage: {
      auto self = ad::matmul(h, P(0));
      auto agg = ad::matmul(ad::spmm(prop.mean, h), P(1));
      return ad::add_row(ad::add(self, agg), P(2));
    }
    case BackboneKind::gat_sep: {
      auto z = ad::matmul(h, P(0));
      auto att = ad::attention_aggregate(prop.adjacency, z, P(1), P(2), heads_, 0.2);
      auto self = ad::matmul(h, P(3));
      auto agg = ad::matmul(att, P(4));
      return ad::add_row(ad::add(self, agg), P(5));
    }
  }
  throw std::logic_error("backbone layer: unknown kind");
}

template <typename T>
std::vector<ad::Parameter<T>*> BackboneLayer<T>::parameters() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

// ---- model ---------------------------------------------------------------

nlohmann::json ModelConfig::to_json() const {
  return {{"backbone", std::string(to_string(kind))},
          {"mode", mode == ModelMode::ecg ? "ecg" : "baseline"},
          {"in_dim", in_dim},
          {"hidden", hidden},
          {"num_classes", num_classes},
          {"layers", layers},
          {"heads", heads},
          {"dropout", dropout},
          {"zero_init_ecg_fusion", zero_init_ecg_fusion}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_backbone(j.at("backbone").get<std::string>());
  c.mode = j.at("mode").get<std::string>() == "ecg" ? ModelMode::ecg : ModelMode::baseline;
  c.in_dim = j.at("in_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.value("heads", std::size_t{4});
  c.dropout = j.value("dropout", 0.2);
  c.zero_init_ecg_fusion = j.value("zero_init_ecg_fusion", false);
  return c;
}

template <typename T>
EcgGnnModel<T>::EcgGnnModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.layers == 0) throw std::invalid_argument("EcgGnnModel: depth must be at least 1");
  if (cfg.in_dim == 0 || cfg.hidden == 0 || cfg.num_classes == 0) {
    throw std::invalid_argument("EcgGnnModel: zero dimension");
  }
  auto rng = make_rng(seed, "init");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t in = l == 0 ? cfg.in_dim : cfg.hidden;
    inp_.emplace_back(cfg.kind, in, cfg.hidden, cfg.heads, rng, fmt::format("inp.{}.", l));
    if (cfg.mode == ModelMode::ecg) {
      ecg_.emplace_back(cfg.kind, in, cfg.hidden, cfg.heads, rng, fmt::format("ecg.{}.", l));
      fuse_w_.emplace_back(fmt::format("fuse.{}.W", l), ad::glorot<T>(cfg.hidden, cfg.hidden, rng));
      fuse_u_.emplace_back(fmt::format("fuse.{}.U", l),
                           cfg.zero_init_ecg_fusion ? ad::Matrix<T>(cfg.hidden, cfg.hidden)
                                                    : ad::glorot<T>(cfg.hidden, cfg.hidden, rng));
    }
  }
  classifier_ = {"classifier.W", ad::glorot<T>(cfg.hidden, cfg.num_classes, rng)};
  classifier_bias_ = {"classifier.b", ad::Matrix<T>(1, cfg.num_classes)};
}

template <typename T>
ForwardOutput<T> EcgGnnModel<T>::forward(ForwardContext<T>& ctx, const Propagation& input,
                                         const DirectedEdges* ecg_edges, const ad::Matrix<T>& x,
                                         const ForwardOptions& opt) {
  auto& tape = ctx.tape;
  const bool ecg_mode = cfg_.mode == ModelMode::ecg;
  if (ecg_mode && !ecg_edges) throw std::invalid_argument("ECG forward without ECG edges");
  if (x.cols != cfg_.in_dim) {
    throw ad::ShapeError(fmt::format("model expects {} input features, got {}", cfg_.in_dim,
                                     x.cols));
  }
  const bool drop = ecg_mode && opt.train && opt.dropedge > 0.0;
  if (drop && !opt.dropedge_rng) throw std::invalid_argument("dropedge requires an rng");
  if (opt.train && cfg_.dropout > 0.0 && !opt.dropout_rng) {
    throw std::invalid_argument("dropout requires an rng");
  }
  const Propagation* full_ecg = nullptr;
  if (ecg_mode && !drop) {
    ctx.scratch.push_back(make_propagation(*ecg_edges, cfg_.kind));
    full_ecg = &ctx.scratch.back();
  }

  Rng unused(0);
  Rng& drop_rng = opt.dropout_rng ? *opt.dropout_rng : unused;
  auto h = tape.constant_ref(x);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    auto hin = ad::dropout(h, cfg_.dropout, drop_rng, opt.train);
    auto h_inp = inp_[l].forward(tape, input, hin);
    if (!ecg_mode) {
      h = ad::gelu(h_inp);
      continue;
    }
    const Propagation* ecg_prop = full_ecg;
    if (drop) {
      ctx.scratch.push_back(
          make_propagation(drop_edge(*ecg_edges, opt.dropedge, *opt.dropedge_rng), cfg_.kind));
      ecg_prop = &ctx.scratch.back();
    }
    auto h_ecg = ecg_[l].forward(tape, *ecg_prop, hin);
    auto fused = ad::add(ad::matmul(h_inp, tape.parameter(fuse_w_[l])),
                         ad::matmul(h_ecg, tape.parameter(fuse_u_[l])));
    h = ad::gelu(fused);
  }
  auto logits = ad::add_row(ad::matmul(h, tape.parameter(classifier_)),
                            tape.parameter(classifier_bias_));
  return {logits, h};
}

template <typename T>
std::vector<ad::Parameter<T>*> EcgGnnModel<T>::inp_parameters() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& l : inp_) {
    auto p = l.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<ad::Parameter<T>*> EcgGnnModel<T>::ecg_parameters() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& l : ecg_) {
    auto p = l.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<ad::Parameter<T>*> EcgGnnModel<T>::fusion_parameters() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : fuse_w_) out.push_back(&p);
  for (auto& p : fuse_u_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<ad::Parameter<T>*> EcgGnnModel<T>::parameters() {
  auto out = inp_parameters();
  for (auto* p : ecg_parameters()) out.push_back(p);
  for (auto* p : fusion_parameters()) out.push_back(p);
  out.push_back(&classifier_);
  out.push_back(&classifier_bias_);
  return out;
}

template <typename T>
std::size_t EcgGnnModel<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template class BackboneLayer<float>;
template class BackboneLayer<double>;
template class EcgGnnModel<float>;
template class EcgGnnModel<double>;

// ---- metrics -------------------------------------------------------------

double accuracy(const ad::Matrix<float>& logits, std::span<const int> labels,
                std::span<const NodeId> mask) {
  if (mask.empty()) throw std::invalid_argument("accuracy: empty mask");
  std::size_t hits = 0;
  for (NodeId u : mask) {
    auto row = logits.row(u);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[u];
  }
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels,
               std::span<const NodeId> mask) {
  std::vector<std::pair<double, int>> items;
  items.reserve(mask.size());
  std::size_t pos = 0;
  for (NodeId u : mask) {
    if (labels[u] != 0 && labels[u] != 1) throw std::invalid_argument("roc_auc: labels must be 0/1");
    items.emplace_back(scores[u], labels[u]);
    pos += labels[u] == 1;
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: mask contains a single class");
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of mid-ranks (1-based) of positives; tied groups share the average rank.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (items[t].second == 1) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double evaluate_metric(MetricKind kind, const ad::Matrix<float>& logits,
                       std::span<const int> labels, std::span<const NodeId> mask) {
  if (kind == MetricKind::accuracy) return accuracy(logits, labels, mask);
  if (logits.cols != 2) throw std::invalid_argument("roc_auc metric needs exactly two classes");
  std::vector<double> scores(logits.rows);
  for (std::size_t u = 0; u < logits.rows; ++u) {
    // softmax probability of class 1
    const double d = static_cast<double>(logits(u, 1)) - static_cast<double>(logits(u, 0));
    scores[u] = 1.0 / (1.0 + std::exp(-d));
  }
  return roc_auc(scores, labels, mask);
}

EvalResult EvalResult::from_values(MetricKind m, std::vector<double> values) {
  EvalResult r;
  r.metric = m;
  r.values = std::move(values);
  if (r.values.empty()) return r;
  const double n = static_cast<double>(r.values.size());
  r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
  if (r.values.size() > 1) {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

// ---- training ------------------------------------------------------------

std::pair<ad::Matrix<float>, ad::Matrix<float>> predict(EcgGnnModel<float>& model,
                                                        const Graph& g, const NodeTable& nodes,
                                                        const DirectedEdges* ecg) {
  const auto input = make_propagation(directed_edges(g), model.config().kind);
  const auto x = ad::from_features<float>(nodes.features);
  ForwardContext<float> ctx(false);
  auto out = model.forward(ctx, input, ecg, x, {});
  return {out.logits.value(), out.hidden.value()};
}

TrainOutcome train_model(EcgGnnModel<float>& model, const Graph& g, const NodeTable& nodes,
                         const Split& split, const DirectedEdges* ecg, const TrainConfig& cfg) {
  if (split.train.empty() || split.val.empty()) {
    throw std::invalid_argument("train_model: split needs train and validation nodes");
  }
  const auto input = make_propagation(directed_edges(g), model.config().kind);
  const auto x = ad::from_features<float>(nodes.features);
  auto dropout_rng = make_rng(cfg.seed, "dropout");
  auto dropedge_rng = make_rng(cfg.seed, "dropedge");
  auto params = model.parameters();
  ad::Adam<float> adam(cfg.adam);

  auto eval_logits = [&] {
    ForwardContext<float> ctx(false);
    return model.forward(ctx, input, ecg, x, {}).logits.value();
  };

  TrainOutcome out;
  double best_val = -1.0;
  std::vector<ad::Matrix<float>> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (auto* p : params) best_params.push_back(p->value);
  };
  snapshot();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    ForwardContext<float> ctx(true);
    ForwardOptions opt{true, cfg.dropedge, &dropout_rng, &dropedge_rng};
    auto fwd = model.forward(ctx, input, ecg, x, opt);
    auto loss = ad::cross_entropy(fwd.logits, nodes.labels, split.train);
    const double lv = loss.value().data[0];
    if (!std::isfinite(lv)) {
      throw TrainingDiverged(fmt::format("non-finite loss {} at epoch {} ({} {})", lv, epoch,
                                         to_string(model.config().kind),
                                         model.config().mode == ModelMode::ecg ? "ecg" : "baseline"));
    }
    out.loss_history.push_back(lv);
    for (auto* p : params) p->zero_grad();
    ctx.tape.backward(loss);
    adam.step(params);
    out.epochs_run = epoch;

    const double val = evaluate_metric(cfg.metric, eval_logits(), nodes.labels, split.val);
    if (val > best_val) {
      best_val = val;
      out.best_epoch = epoch;
      snapshot();
    } else if (epoch - out.best_epoch >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];

  const auto logits = eval_logits();
  out.train_metric = evaluate_metric(cfg.metric, logits, nodes.labels, split.train);
  out.val_metric = evaluate_metric(cfg.metric, logits, nodes.labels, split.val);
  out.test_metric = split.test.empty()
                        ? 0.0
                        : evaluate_metric(cfg.metric, logits, nodes.labels, split.test);
  log_debug("trained {} ({}) epochs={} best={} val={:.4f} test={:.4f}",
            to_string(model.config().kind),
            model.config().mode == ModelMode::ecg ? "ecg" : "baseline", out.epochs_run,
            out.best_epoch, out.val_metric, out.test_metric);
  return out;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'E', 'C', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename U>
void write_le(std::ostream& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.put(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename U>
U read_le(std::istream& in) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == EOF) throw DataError("checkpoint: truncated file");
    value |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, EcgGnnModel<float>& model,
                     const nlohmann::json& run_config) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (auto* p : model.parameters()) {
    manifest.push_back({{"name", p->name},
                        {"shape", {p->value.rows, p->value.cols}},
                        {"offset", offset}});
    offset += p->value.size() * sizeof(float);
  }
  nlohmann::json header = {{"model", model.config().to_json()},
                           {"run_config", run_config},
                           {"manifest", manifest},
                           {"block_bytes", offset}};
  const std::string text = header.dump();
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", file.string()));
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : model.parameters()) {
    for (float v : p->value.data) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
}

EcgGnnModel<float> load_checkpoint(const std::filesystem::path& file,
                                   nlohmann::json* run_config) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(fmt::format("{}: cannot open", file.string()));
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw DataError(fmt::format("{}: not an ECG checkpoint", file.string()));
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("{}: unsupported checkpoint version {}", file.string(), version));
  }
  const auto len = read_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(fmt::format("{}: truncated header", file.string()));
  const auto header = nlohmann::json::parse(text);
  if (run_config) *run_config = header.at("run_config");

  EcgGnnModel<float> model(ModelConfig::from_json(header.at("model")), 0);
  std::vector<float> block(header.at("block_bytes").get<std::uint64_t>() / sizeof(float));
  for (auto& v : block) v = std::bit_cast<float>(read_le<std::uint32_t>(in));

  auto params = model.parameters();
  const auto& manifest = header.at("manifest");
  if (manifest.size() != params.size()) {
    throw DataError(fmt::format("{}: manifest lists {} tensors, model has {}", file.string(),
                                manifest.size(), params.size()));
  }
  for (const auto& entry : manifest) {
    const auto name = entry.at("name").get<std::string>();
    auto it = std::find_if(params.begin(), params.end(),
                           [&](auto* p) { return p->name == name; });
    if (it == params.end()) throw DataError(fmt::format("{}: unknown tensor '{}'", file.string(), name));
    auto& p = **it;
    const auto rows = entry.at("shape")[0].get<std::size_t>();
    const auto cols = entry.at("shape")[1].get<std::size_t>();
    if (rows != p.value.rows || cols != p.value.cols) {
      throw DataError(fmt::format("{}: tensor '{}' has shape {}x{}, expected {}x{}",
                                  file.string(), name, rows, cols, p.value.rows, p.value.cols));
    }
    const auto start = entry.at("offset").get<std::uint64_t>() / sizeof(float);
    if (start + p.value.size() > block.size()) {
      throw DataError(fmt::format("{}: tensor '{}' exceeds parameter block", file.string(), name));
    }
    std::copy_n(block.begin() + static_cast<std::ptrdiff_t>(start), p.value.size(),
                p.value.data.begin());
  }
  return model;
}

}  // namespace ecg
