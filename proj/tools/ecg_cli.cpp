// ecg: command-line driver for datasets, embeddings, rewiring, training,
// sweeps and projections. Configuration precedence, lowest first: built-in
// defaults, --config file, --set key=value, dedicated flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "ecg/harness.hpp"
#include "ecg/log.hpp"

namespace fs = std::filesystem;
using namespace ecg;

namespace {

struct CommonOptions {
  std::string data;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<std::size_t> jobs;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--data", o.data, "Dataset directory (omit for the synthetic generator)");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--config", o.config, "key=value config file or provenance.json");
  cmd->add_option("--jobs", o.jobs, "Concurrent runs");
  cmd->add_option("--set", o.sets, "Override one config key (key=value), repeatable");
  cmd->add_flag("-q,--quiet", o.quiet, "Only print warnings");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg.apply(read_config_file(o.config));
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.data.empty()) {
    cfg.data_dir = o.data;
    if (cfg.dataset_name == "synthetic") cfg.dataset_name = fs::path(o.data).filename().string();
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = std::max<std::size_t>(1, *o.jobs);
  if (o.quiet) log_level() = LogLevel::warn;
  return cfg;
}

void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError(fmt::format("{}: cannot write", file.string()));
  out << text;
}

/// Data hash of `cfg`'s dataset; synthetic data is materialised under `out`.
std::pair<Dataset, std::string> load_for(const RunConfig& cfg, const fs::path& out) {
  std::optional<fs::path> copy;
  if (cfg.data_dir.empty()) copy = out / "dataset";
  auto data = prepare_dataset(cfg, copy);
  auto hash = dataset_hash(copy ? *copy : fs::path(cfg.data_dir));
  return {std::move(data), std::move(hash)};
}

void write_provenance(const fs::path& out, const RunConfig& cfg, const std::string& data_hash,
                      nlohmann::json extra) {
  nlohmann::json prov = std::move(extra);
  prov["config"] = cfg.to_json();
  prov["data_hash"] = data_hash;
  write_file(out / "provenance.json", prov.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

SweepGrid parse_grid(const std::vector<std::string>& specs) {
  SweepGrid grid;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--grid expects key=v1,v2, got '" + spec + "'");
    const auto key = spec.substr(0, eq);
    const auto values = split_list(spec.substr(eq + 1));
    auto as_sizes = [&] {
      std::vector<std::size_t> v;
      for (const auto& s : values) v.push_back(std::stoull(s));
      return v;
    };
    if (key == "backbone") {
      grid.backbones.clear();
      for (const auto& s : values) grid.backbones.push_back(parse_backbone(s));
    } else if (key == "tau") {
      grid.taus.clear();
      for (const auto& s : values) grid.taus.push_back(parse_embedding_source(s));
    } else if (key == "k") {
      grid.ks = as_sizes();
    } else if (key == "p_de") {
      grid.p_des.clear();
      for (const auto& s : values) grid.p_des.push_back(std::stod(s));
    } else if (key == "layers") {
      grid.layers = as_sizes();
    } else if (key == "width") {
      grid.widths = as_sizes();
    } else if (key == "baseline") {
      grid.include_baseline = values.empty() || values.front() != "false";
    } else {
      throw std::invalid_argument("unknown grid key '" + key + "'");
    }
  }
  return grid;
}

int cmd_generate(const CommonOptions& o) {
  auto cfg = resolve_config(o);
  if (!cfg.data_dir.empty()) throw std::invalid_argument("generate: --data is not accepted");
  auto [data, hash] = load_for(cfg, o.out);
  write_provenance(fs::path(o.out) / "dataset", cfg, hash, {{"command", "generate"}});
  const auto report = homophily_report(data.graph, data.nodes.labels);
  fmt::print("{}", format_report(data.name, report));
  fmt::print("wrote {}\n", (fs::path(o.out) / "dataset").string());
  return 0;
}

int cmd_stats(const CommonOptions& o, const std::string& emb_file, bool with_ecg) {
  auto cfg = resolve_config(o);
  auto [data, hash] = load_for(cfg, o.out);
  const auto& labels = data.nodes.labels;
  std::string csv = stats_csv_header() + "\n";
  const auto report = homophily_report(data.graph, labels);
  fmt::print("{}", format_report(data.name, report));
  csv += stats_csv_row(data.name, report) + "\n";

  nlohmann::json extra = {{"command", "stats"}};
  if (with_ecg || !emb_file.empty()) {
    const auto emb = emb_file.empty() ? build_embedding(cfg, data, 0, fs::path(o.out) / "embeddings")
                                      : read_embeddings(emb_file);
    if (emb.num_nodes() != data.graph.num_nodes()) {
      throw DataError(fmt::format("embedding has {} rows, dataset has {} nodes", emb.num_nodes(),
                                  data.graph.num_nodes()));
    }
    const auto edges = cosine_topk(emb, cfg.k);
    const auto pairs = edges.pairs();
    const auto ecg_report = pair_homophily_report(pairs, labels);
    const auto name = fmt::format("{}-ECG({},k={})", data.name, to_string(emb.source()), cfg.k);
    fmt::print("\n{}", format_report(name, ecg_report));
    csv += stats_csv_row(name, ecg_report) + "\n";
    if (!emb_file.empty()) extra["embedding_hash"] = file_git_hash(emb_file);
  }
  write_file(fs::path(o.out) / "stats.csv", csv);
  write_provenance(o.out, cfg, hash, extra);
  return 0;
}

int cmd_embed(const CommonOptions& o, std::size_t split) {
  auto cfg = resolve_config(o);
  auto [data, hash] = load_for(cfg, o.out);
  const auto emb = build_embedding(cfg, data, split, fs::path(o.out) / "embeddings");
  std::string stem{to_string(cfg.tau)};
  std::replace(stem.begin(), stem.end(), '>', '_');
  std::replace(stem.begin(), stem.end(), '-', '_');
  const auto file = fs::path(o.out) / fmt::format("{}_split{}.emb", stem, split);
  write_embeddings(file, emb);
  write_provenance(o.out, cfg, hash,
                   {{"command", "embed"}, {"split", split}, {"embedding_hash", file_git_hash(file)}});
  fmt::print("wrote {} ({} x {}, {})\n", file.string(), emb.num_nodes(), emb.dim(),
             to_string(emb.source()));
  return 0;
}

int cmd_rewire(const CommonOptions& o, const std::string& emb_file) {
  auto cfg = resolve_config(o);
  const auto emb = read_embeddings(emb_file);
  const auto edges = cosine_topk(emb, cfg.k);
  const fs::path out = o.out;
  fs::create_directories(out);
  {
    std::ofstream tsv(out / "ecg_edges.tsv");
    for (NodeId u = 0; u < edges.num_nodes(); ++u) {
      const auto nb = edges.neighbors(u);
      const auto sc = edges.scores(u);
      for (std::size_t i = 0; i < nb.size(); ++i) tsv << fmt::format("{}\t{}\t{:.9g}\n", u, nb[i], sc[i]);
    }
  }
  nlohmann::json side = {{"k", cfg.k}, {"source_tag", std::string(to_string(emb.source()))},
                         {"num_nodes", edges.num_nodes()}, {"num_edges", edges.num_edges()},
                         {"embedding_hash", file_git_hash(emb_file)}};
  std::optional<double> h;
  if (!cfg.data_dir.empty()) {
    const auto labels = read_labels(fs::path(cfg.data_dir) / "labels.csv");
    if (labels.size() != edges.num_nodes()) {
      throw DataError(fmt::format("labels.csv has {} rows, embedding has {}", labels.size(),
                                  edges.num_nodes()));
    }
    h = ecg_homophily(edges, labels);
  }
  side["edge_homophily"] = h ? nlohmann::json(*h) : nlohmann::json(nullptr);
  write_file(out / "ecg_edges.json", side.dump() + "\n");
  fmt::print("wrote {} ({} directed edges, k={}", (out / "ecg_edges.tsv").string(),
             edges.num_edges(), cfg.k);
  if (h) fmt::print(", edge homophily {:.4f}", *h);
  fmt::print(")\n");
  return 0;
}

int cmd_train(const CommonOptions& o) {
  auto cfg = resolve_config(o);
  const auto r = run_experiment(cfg, o.out);
  fmt::print("{}\n{}\n", results_csv_header(), results_csv_row(r));
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::vector<std::string>& grid_specs) {
  auto cfg = resolve_config(o);
  const auto grid = parse_grid(grid_specs);
  const auto r = run_sweep(cfg, grid, o.out);
  fmt::print("{}\n{}", format_table1(r), format_best_hparams(r));
  std::size_t failed = 0;
  for (const auto& c : r.cells) failed += c.ok ? 0 : 1;
  if (failed) log_warn("{} of {} sweep cells failed (see sweep_cells.csv)", failed, r.cells.size());
  return 0;
}

int cmd_project(const CommonOptions& o, std::size_t width) {
  auto cfg = resolve_config(o);
  auto [data, hash] = load_for(cfg, o.out);
  const auto emb = build_embedding(cfg, data, 0, fs::path(o.out) / "embeddings");
  const auto topk = cosine_topk(emb, cfg.k);
  const auto ecg = cfg.symmetrize ? symmetrized_edges(topk) : directed_edges(topk);
  const auto p = random_gcn_projection(data.graph, ecg, data.nodes.features, data.nodes.labels,
                                       width, derive_seed(cfg.seed, "projection"));
  write_projection_csv(fs::path(o.out) / "projection.csv", p, data.nodes.labels);
  write_provenance(o.out, cfg, hash,
                   {{"command", "project"},
                    {"width", width},
                    {"silhouette", {{"input", p.input_silhouette}, {"ecg", p.ecg_silhouette}}}});
  fmt::print("silhouette input={:.4f} ecg={:.4f}\n", p.input_silhouette, p.ecg_silhouette);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolving computation graphs: embeddings, rewiring and two-processor GNNs"};
  app.require_subcommand(1);

  CommonOptions gen_o, stats_o, embed_o, rewire_o, train_o, sweep_o, project_o;
  auto* gen = app.add_subcommand("generate", "Write a synthetic heterophilous dataset");
  add_common(gen, gen_o);

  auto* stats = app.add_subcommand("stats", "Homophily report for a dataset (and its ECG graph)");
  add_common(stats, stats_o);
  std::string stats_emb;
  bool stats_ecg = false;
  stats->add_option("--emb", stats_emb, "Embedding file for an additional ECG row");
  stats->add_flag("--ecg", stats_ecg, "Add an ECG row built from the configured tau (split 0)");

  auto* embed = app.add_subcommand("embed", "Train a weak classifier and write a .emb file");
  add_common(embed, embed_o);
  std::size_t embed_split = 0;
  embed->add_option("--split", embed_split, "Split index")->capture_default_str();

  auto* rewire = app.add_subcommand("rewire", "Build the cosine top-k ECG edge set from a .emb file");
  add_common(rewire, rewire_o);
  std::string rewire_emb;
  rewire->add_option("--emb", rewire_emb, "Embedding file")->required();

  auto* train = app.add_subcommand("train", "Run one configuration over every split");
  add_common(train, train_o);

  auto* sweep = app.add_subcommand("sweep", "Run the hyperparameter lattice");
  add_common(sweep, sweep_o);
  std::vector<std::string> grid_specs;
  sweep->add_option("--grid", grid_specs,
                    "Restrict one axis: backbone|tau|k|p_de|layers|width|baseline=v1,v2");

  auto* project = app.add_subcommand("project", "Random-GCN + PCA projection of G and the ECG graph");
  add_common(project, project_o);
  std::size_t project_width = 64;
  project->add_option("--width", project_width, "Random layer width")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(gen_o);
    if (*stats) return cmd_stats(stats_o, stats_emb, stats_ecg);
    if (*embed) return cmd_embed(embed_o, embed_split);
    if (*rewire) return cmd_rewire(rewire_o, rewire_emb);
    if (*train) return cmd_train(train_o);
    if (*sweep) return cmd_sweep(sweep_o, grid_specs);
    if (*project) return cmd_project(project_o, project_width);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
