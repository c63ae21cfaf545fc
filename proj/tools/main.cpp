// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: corpus tools, model runs, pretraining,
// expressivity suites, padding audits, statistics and report collation.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpaformer/batcher.hpp"
#include "cpaformer/checkpoint.hpp"
#include "cpaformer/corpus.hpp"
#include "cpaformer/errors.hpp"
#include "cpaformer/evalstats.hpp"
#include "cpaformer/expressivity.hpp"
#include "cpaformer/features.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/smiles.hpp"
#include "cpaformer/ssl.hpp"
#include "cpaformer/synthetic.hpp"
#include "cpaformer/topo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cpaformer;

namespace {

constexpr const char* kVersion = "0.1.0";

int log_level() {
  const char* env = std::getenv("CPAFORMER_LOG");
  if (env == nullptr) return 1;
  const std::string v = env;
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << msg << "\n";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LoadResult load_graphs(const std::string& path, const std::string& format) {
  if (format == "smiles") return load_smiles_file(path);
  if (format == "jsonl") return load_jsonl(path);
  // auto: sniff the first non-blank character
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      return c == '{' ? load_jsonl(path) : load_smiles_file(path);
    }
  }
  return LoadResult{};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> read_numbers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

model::ModelConfig load_model_config(const std::string& config_path,
                                     std::uint64_t seed) {
  model::ModelConfig cfg;
  if (!config_path.empty())
    cfg = model::config_from_json(read_file(config_path));
  cfg.seed = seed;
  return cfg;
}

/// Every run drops a manifest so `report` can collate it later. No
/// timestamps: reruns of the same command are byte-identical.
void write_manifest(const std::string& out_dir, const std::string& command,
                    std::uint64_t seed, const json& args) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["args"] = args;
  m["config_hash"] = RngStream::fnv1a(args.dump());
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << m.dump(2) << "\n";
}

void write_results(const std::string& out_dir, const json& results) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "results.json");
  out << results.dump(2) << "\n";
}

void report_corpus_errors(const LoadResult& loaded) {
  for (const CorpusError& e : loaded.errors)
    std::cerr << "line " << e.line << ": " << e.message << "\n";
  if (!loaded.errors.empty())
    info(std::to_string(loaded.errors.size()) + " malformed line(s) skipped");
}

// ---- subcommand bodies --------------------------------------------------

int cmd_parse(const std::string& input, const std::string& format,
              const std::string& out_dir, std::uint64_t seed) {
  const LoadResult loaded = load_graphs(input, format);
  report_corpus_errors(loaded);
  std::cout << "graphs\tatoms\tbonds\terrors\n";
  long long atoms = 0, bonds = 0;
  for (const MolGraph& g : loaded.graphs) {
    atoms += g.num_atoms();
    bonds += g.num_bonds();
  }
  std::cout << loaded.graphs.size() << "\t" << atoms << "\t" << bonds << "\t"
            << loaded.errors.size() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_jsonl(loaded.graphs, (fs::path(out_dir) / "parsed.jsonl").string());
    json errs = json::array();
    for (const CorpusError& e : loaded.errors)
      errs.push_back({{"line", e.line}, {"message", e.message}});
    write_results(out_dir, json{{"graphs", loaded.graphs.size()},
                                {"errors", errs}});
    write_manifest(out_dir, "parse", seed,
                   json{{"input", input}, {"format", format}});
  }
  return 0;
}

int cmd_featurize(const std::string& input, const std::string& format,
                  const std::string& out_dir, std::uint64_t seed) {
  const LoadResult loaded = load_graphs(input, format);
  report_corpus_errors(loaded);
  if (loaded.graphs.empty()) throw ConfigError("no graphs to featurize");
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats = compute_corpus_stats(loaded.graphs);
  std::cout << "mass_mean\t" << fmt(stats.mass_mean) << "\n";
  std::cout << "mass_std\t" << fmt(stats.mass_std) << "\n";
  std::ostringstream lines;
  for (const MolGraph& g : loaded.graphs) {
    const Featurized f = featurize(g, schema, stats);
    json jg;
    jg["id"] = g.id;
    json nodes = json::array();
    for (int i = 0; i < g.num_atoms(); ++i) {
      json n;
      n["cat"] = f.node_cat[i];
      n["mass_z"] = f.mass_z[i];
      nodes.push_back(n);
    }
    jg["nodes"] = nodes;
    lines << jg.dump() << "\n";
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "features.jsonl");
    out << lines.str();
    write_results(out_dir, json{{"graphs", loaded.graphs.size()},
                                {"mass_mean", stats.mass_mean},
                                {"mass_std", stats.mass_std}});
    write_manifest(out_dir, "featurize", seed, json{{"input", input}});
  } else {
    std::cout << lines.str();
  }
  return 0;
}

int cmd_topo_spd(const std::string& input, const std::string& format, int k,
                 const std::string& out_dir, std::uint64_t seed) {
  const LoadResult loaded = load_graphs(input, format);
  report_corpus_errors(loaded);
  if (loaded.graphs.empty()) throw ConfigError("no graphs loaded");
  std::cout << "graph\tnode\tsupport_size\n";
  std::vector<double> coverages;
  for (const MolGraph& g : loaded.graphs) {
    const topo::SupportSets s = topo::truncated_spd(g, k);
    for (int i = 0; i < g.num_atoms(); ++i)
      std::cout << g.id << "\t" << i << "\t" << s.size_of(i) << "\n";
    coverages.push_back(topo::coverage(g, k));
  }
  std::cout << "graph\tcoverage_pct\n";
  for (std::size_t i = 0; i < loaded.graphs.size(); ++i)
    std::cout << loaded.graphs[i].id << "\t" << fmt(coverages[i]) << "\n";
  const double median = topo::corpus_coverage(loaded.graphs, k);
  std::cout << "corpus_median_coverage_pct\t" << fmt(median) << "\n";
  write_results(out_dir, json{{"median_coverage", median}, {"k", k}});
  write_manifest(out_dir, "topo spd", seed,
                 json{{"input", input}, {"k", k}});
  return 0;
}

int cmd_model_forward(const std::string& config_path,
                      const std::string& input, const std::string& format,
                      const std::string& variant,
                      const std::string& checkpoint_path,
                      const std::string& out_dir, std::uint64_t seed) {
  model::ModelConfig cfg = load_model_config(config_path, seed);
  if (!variant.empty()) cfg.variant = model::variant_from_name(variant);
  model::Encoder enc(cfg);
  if (!checkpoint_path.empty()) {
    const model::Checkpoint ckpt = model::load_checkpoint(checkpoint_path);
    for (const auto& [name, store] : ckpt.sections) {
      if (name != "encoder") continue;
      for (const model::Param& p : store.entries())
        enc.params().at(p.name).value = p.value;
    }
  }
  const LoadResult loaded = load_graphs(input, format);
  report_corpus_errors(loaded);
  if (loaded.graphs.empty()) throw ConfigError("no graphs loaded");
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats = compute_corpus_stats(loaded.graphs);
  std::ostringstream lines;
  for (const MolGraph& g : loaded.graphs) {
    tensor::Tape tape;
    tape.set_grad_enabled(false);
    model::BoundEncoder bound = enc.bind(tape, false);
    const Featurized f = featurize(g, schema, stats);
    const model::EncoderInput in =
        model::make_encoder_input(g, f, ssl::supports_for(g, cfg), cfg);
    const std::vector<double> pooled =
        bound.readout(bound.forward(in)).values();
    lines << g.id;
    for (double v : pooled) lines << "\t" << fmt(v);
    lines << "\n";
  }
  std::cout << lines.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "embeddings.tsv");
    out << lines.str();
    write_manifest(out_dir, "model forward", seed,
                   json{{"input", input},
                        {"variant", model::variant_name(cfg.variant)}});
  }
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& input,
                 const std::string& objective, int steps, int batch,
                 double lr, std::uint64_t seed, const std::string& out_dir) {
  model::ModelConfig cfg = load_model_config(config_path, seed);
  const LoadResult loaded = load_graphs(input, "auto");
  report_corpus_errors(loaded);
  if (loaded.graphs.empty()) throw ConfigError("empty pretraining corpus");
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats = compute_corpus_stats(loaded.graphs);

  model::Encoder enc(cfg);
  ssl::Decoder dec(cfg);
  ssl::PretrainConfig pc;
  pc.steps = steps;
  pc.batch = batch;
  pc.peak_lr = lr;
  pc.warmup_steps = std::max(1, steps / 10);
  pc.objective = ssl::objective_from_name(objective);
  pc.seed = seed;
  const ssl::PretrainResult result =
      ssl::pretrain(enc, dec, loaded.graphs, schema, stats, pc);

  std::ostringstream trace;
  trace << "step\tmask_loss\tcontrast_loss\ttotal\n";
  for (const ssl::StepTrace& t : result.trace)
    trace << t.step << "\t" << fmt(t.mask_loss) << "\t"
          << fmt(t.contrast_loss) << "\t" << fmt(t.total) << "\n";
  std::cout << trace.str();
  if (result.halted_at_step)
    std::cout << "halted_at\t" << *result.halted_at_step << "\t"
              << result.halt_reason << "\n";

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    {
      std::ofstream out(fs::path(out_dir) / "loss_trace.tsv");
      out << trace.str();
    }
    model::Checkpoint ckpt;
    ckpt.config_json = model::config_to_json(cfg);
    ckpt.sections.emplace_back("encoder", enc.params());
    ckpt.sections.emplace_back("decoder", dec.params());
    model::save_checkpoint(ckpt,
                           (fs::path(out_dir) / "checkpoint.bin").string());
    json res;
    res["steps_done"] = result.steps_done;
    res["halted"] = result.halted_at_step.has_value();
    if (result.halted_at_step) res["halted_at"] = *result.halted_at_step;
    if (!result.trace.empty()) res["final_total"] = result.trace.back().total;
    res["edge_drop_success_rate"] = result.edge_report.success_rate();
    write_results(out_dir, res);
    write_manifest(out_dir, "pretrain", seed,
                   json{{"input", input},
                        {"objective", objective},
                        {"steps", steps},
                        {"batch", batch},
                        {"config", model::config_to_json(cfg)}});
  }
  return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& input,
                 const std::string& task, int epochs, double lr,
                 const std::string& checkpoint_path, std::uint64_t seed,
                 const std::string& out_dir) {
  model::ModelConfig cfg = load_model_config(config_path, seed);
  const LoadResult loaded = load_jsonl(input);
  report_corpus_errors(loaded);
  if (!loaded.has_labels)
    throw ConfigError("finetune needs per-record \"label\" fields");
  ssl::LabeledDataset data;
  for (std::size_t i = 0; i < loaded.graphs.size(); ++i) {
    if (std::isnan(loaded.labels[i]))
      throw ConfigError("record without label at position " +
                        std::to_string(i));
    data.graphs.push_back(loaded.graphs[i]);
    data.labels.push_back(loaded.labels[i]);
  }
  model::Encoder enc(cfg);
  if (!checkpoint_path.empty()) {
    const model::Checkpoint ckpt = model::load_checkpoint(checkpoint_path);
    for (const auto& [name, store] : ckpt.sections)
      if (name == "encoder")
        for (const model::Param& p : store.entries())
          enc.params().at(p.name).value = p.value;
  }
  ssl::Head head(cfg.model_dim, seed);
  ssl::FinetuneConfig fc;
  fc.epochs = epochs;
  fc.lr = lr;
  fc.task = task == "regression" ? ssl::TaskKind::kRegression
                                 : ssl::TaskKind::kBinary;
  fc.seed = seed;
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats = compute_corpus_stats(data.graphs);
  const ssl::FinetuneResult r =
      ssl::finetune(enc, head, data, schema, stats, fc);
  const std::vector<double> preds =
      ssl::predict(enc, head, data.graphs, schema, stats);
  double metric;
  std::string metric_name;
  if (fc.task == ssl::TaskKind::kRegression) {
    metric = stats::rmse(preds, data.labels);
    metric_name = "train_rmse";
  } else {
    metric = stats::roc_auc(preds, data.labels);
    metric_name = "train_auc";
  }
  std::cout << "epoch\tloss\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e)
    std::cout << e << "\t" << fmt(r.epoch_losses[e]) << "\n";
  std::cout << metric_name << "\t" << fmt(metric) << "\n";
  write_results(out_dir, json{{metric_name, metric},
                              {"variant", model::variant_name(cfg.variant)}});
  write_manifest(out_dir, "finetune", seed,
                 json{{"input", input},
                      {"task", task},
                      {"epochs", epochs},
                      {"variant", model::variant_name(cfg.variant)}});
  return 0;
}

int cmd_expressivity(const std::string& suite, int trials,
                     std::uint64_t seed, const std::string& out_dir) {
  RngStream rng(seed, "expressivity/" + suite);
  int passed = 0;
  const auto emit = [&](int trial, bool ok, const std::string& witness) {
    if (ok) {
      ++passed;
      if (log_level() >= 2)
        std::cout << "trial " << trial << "\tpass\n";
    } else {
      std::cout << "trial " << trial << "\tFAIL\t" << witness << "\n";
    }
  };
  auto random_base = [&](int count, int dim, double lo, double hi) {
    std::vector<expressivity::Vec> base;
    for (int i = 0; i < count; ++i) {
      expressivity::Vec v(dim);
      for (double& x : v) x = rng.next_uniform(lo, hi);
      base.push_back(v);
    }
    return base;
  };
  auto random_pair = [&](double lo, double hi) {
    const int dim = rng.next_int(1, 6);
    const int count = rng.next_int(1, 5);
    int lambda = rng.next_int(1, 4), lambda2 = rng.next_int(1, 4);
    if (lambda == lambda2) ++lambda2;
    return expressivity::build_replication_pair(
        random_base(count, dim, lo, hi), lambda, lambda2,
        expressivity::AttentionProfile::kRandomMassSplit, &rng);
  };

  if (suite == "prop1") {
    for (int t = 0; t < trials; ++t) {
      const auto pair = random_pair(-1.0, 1.0);
      const auto r = expressivity::check_blindness(pair);
      emit(t, r.equal, "max diff " + fmt(r.max_abs_diff));
    }
  } else if (suite == "prop2") {
    for (int t = 0; t < trials; ++t) {
      const auto pair = random_pair(0.1, 1.0);  // positive-mean base
      expressivity::Vec gate(pair.base[0].size());
      for (double& g : gate)
        g = 1.0 / (1.0 + std::exp(-rng.next_uniform(-2, 2)));
      const auto sep = expressivity::check_cpa_separation(pair, gate);
      const auto ncpa = expressivity::check_norm_cpa_collision(pair, gate);
      double norm_diff = 0.0;
      for (std::size_t d = 0; d < ncpa.output_a.size(); ++d)
        norm_diff = std::max(
            norm_diff, std::abs(ncpa.output_a[d] - ncpa.output_b[d]));
      const bool ok =
          sep.distinct && sep.witness_diff >= 1e-8 && norm_diff <= 1e-12;
      emit(t, ok, "witness " + fmt(sep.witness_diff));
    }
  } else if (suite == "cor1") {
    for (int t = 0; t < trials; ++t) {
      const auto mc = expressivity::mean_collision(
          random_base(rng.next_int(1, 6), rng.next_int(1, 5), -1, 1));
      emit(t, mc.mean_diff <= 1e-12, "mean diff " + fmt(mc.mean_diff));
    }
  } else if (suite == "thm1") {
    const auto report =
        expressivity::injectivity_trial(4, 5, trials, 1e-9, seed);
    std::cout << "inputs\t" << report.trials << "\n";
    std::cout << "collisions\t" << report.collisions << "\n";
    std::cout << "min_distance\t" << fmt(report.min_pairwise_distance)
              << "\n";
    passed = report.collisions == 0 ? report.trials : 0;
    trials = report.trials;
  } else if (suite == "wl") {
    for (int t = 0; t < trials; ++t) {
      RngStream grng(seed, "wl/" + std::to_string(t));
      const MolGraph g =
          synthetic::random_topology(grng.next_int(2, 14),
                                     grng.next_int(0, 4), grng);
      std::vector<int> perm(g.num_atoms());
      std::iota(perm.begin(), perm.end(), 0);
      grng.shuffle(perm);
      MolGraph gp;
      gp.atoms.resize(g.num_atoms());
      for (int i = 0; i < g.num_atoms(); ++i) gp.atoms[perm[i]] = g.atoms[i];
      for (const BondRecord& b : g.bonds) {
        BondRecord nb = b;
        nb.u = std::min(perm[b.u], perm[b.v]);
        nb.v = std::max(perm[b.u], perm[b.v]);
        gp.bonds.push_back(nb);
      }
      expressivity::WlInterner interner;
      const auto h1 = expressivity::wl_histogram(
          expressivity::wl_refine(g, expressivity::WlInit::kUniform,
                                  interner));
      const auto h2 = expressivity::wl_histogram(
          expressivity::wl_refine(gp, expressivity::WlInit::kUniform,
                                  interner));
      emit(t, h1 == h2, "histogram mismatch under relabeling");
    }
  } else {
    throw ConfigError("unknown suite '" + suite + "'");
  }
  std::cout << suite << "\t" << passed << "/" << trials << " pass\n";
  write_results(out_dir, json{{"suite", suite},
                              {"passed", passed},
                              {"trials", trials}});
  write_manifest(out_dir, "expressivity", seed,
                 json{{"suite", suite}, {"trials", trials}});
  return passed == trials ? 0 : 2;
}

int cmd_audit(const std::string& input, const std::string& format,
              const std::string& k_arg, int width, const std::string& key,
              int cap, const std::string& out_dir, std::uint64_t seed) {
  const LoadResult loaded = load_graphs(input, format);
  report_corpus_errors(loaded);
  if (loaded.graphs.empty()) throw ConfigError("no graphs loaded");
  const bool global = k_arg == "inf" || k_arg == "global";
  std::vector<topo::SupportSets> supports;
  for (const MolGraph& g : loaded.graphs) {
    if (global)
      supports.push_back(topo::global_supports(topo::all_pairs_spd(g), 20));
    else
      supports.push_back(topo::truncated_spd(g, std::stoi(k_arg)));
  }
  const batcher::BucketKey bkey = key == "n"
                                      ? batcher::BucketKey::kMaxN
                                      : batcher::BucketKey::kMaxSupport;
  const batcher::Buckets buckets =
      batcher::bucket(loaded.graphs, supports, width, bkey);
  const auto batches = batcher::make_batches(
      loaded.graphs, supports, buckets, cap,
      global ? batcher::PadTarget::kMaxN : batcher::PadTarget::kMaxSupport);
  const batcher::PaddingAudit audit = batcher::audit(batches, width);
  std::cout << "setting\tmean_padded_length\tmax_padded_length\t"
               "padding_pct\tbucket_width\n";
  std::cout << (global ? "k=inf" : "k=" + k_arg) << "\t"
            << fmt(audit.mean_padded_length) << "\t"
            << audit.max_padded_length << "\t" << fmt(audit.padding_pct)
            << "\t" << audit.bucket_width << "\n";
  write_results(out_dir,
                json{{"mean_padded_length", audit.mean_padded_length},
                     {"max_padded_length", audit.max_padded_length},
                     {"padding_pct", audit.padding_pct},
                     {"bucket_width", audit.bucket_width},
                     {"k", k_arg},
                     {"key", key}});
  write_manifest(out_dir, "audit", seed,
                 json{{"input", input},
                      {"k", k_arg},
                      {"width", width},
                      {"key", key}});
  return 0;
}

int cmd_stats_bootstrap(const std::string& a_path, const std::string& b_path,
                        const std::string& labels_path,
                        const std::string& metric, int resamples,
                        std::uint64_t seed, const std::string& out_dir) {
  stats::PairedRunResult results;
  results.pred_a = read_numbers(a_path);
  results.pred_b = read_numbers(b_path);
  results.labels = read_numbers(labels_path);
  const stats::BootstrapResult r = stats::paired_bootstrap(
      results, stats::metric_from_name(metric), resamples, seed);
  std::cout << "delta\t" << fmt(r.delta_full) << "\n";
  std::cout << "delta_mean\t" << fmt(r.delta_mean) << "\n";
  std::cout << "ci_lo\t" << fmt(r.ci_lo) << "\n";
  std::cout << "ci_hi\t" << fmt(r.ci_hi) << "\n";
  std::cout << "p_sign_flip\t" << fmt(r.p_sign_flip) << "\n";
  std::cout << "redraws\t" << r.redraws << "\n";
  write_results(out_dir, json{{"delta", r.delta_full},
                              {"delta_mean", r.delta_mean},
                              {"ci_lo", r.ci_lo},
                              {"ci_hi", r.ci_hi},
                              {"p_sign_flip", r.p_sign_flip},
                              {"redraws", r.redraws},
                              {"metric", metric}});
  write_manifest(out_dir, "stats bootstrap", seed,
                 json{{"a", a_path},
                      {"b", b_path},
                      {"metric", metric},
                      {"resamples", resamples}});
  return 0;
}

int cmd_stats_holm(const std::string& input, const std::string& out_dir,
                   std::uint64_t seed) {
  const std::vector<double> p = read_numbers(input);
  const std::vector<double> adjusted = stats::holm_adjust(p);
  std::cout << "raw\tadjusted\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    std::cout << fmt(p[i]) << "\t" << fmt(adjusted[i]) << "\n";
  write_results(out_dir, json{{"adjusted", adjusted}});
  write_manifest(out_dir, "stats holm", seed, json{{"input", input}});
  return 0;
}

int cmd_report(const std::string& runs_dir, const std::string& out_dir) {
  std::ostringstream md;
  md << "# Run report\n\n";
  int runs = 0;
  std::vector<std::pair<json, json>> audits;     // manifest, results
  std::vector<std::pair<json, json>> finetunes;  // variant grid rows
  if (!runs_dir.empty() && fs::exists(runs_dir)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir))
      if (entry.is_regular_file() &&
          entry.path().filename() == "manifest.json")
        dirs.push_back(entry.path().parent_path());
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& dir : dirs) {
      json manifest, results;
      try {
        manifest = json::parse(read_file((dir / "manifest.json").string()));
      } catch (...) {
        continue;
      }
      const fs::path rp = dir / "results.json";
      if (fs::exists(rp)) {
        try {
          results = json::parse(read_file(rp.string()));
        } catch (...) {
        }
      }
      ++runs;
      const std::string command = manifest.value("command", "?");
      if (command == "audit" && !results.is_null()) {
        audits.push_back({manifest, results});
        continue;
      }
      if (command == "finetune" && !results.is_null()) {
        finetunes.push_back({manifest, results});
        continue;
      }
      md << "## " << command << " (" << dir.filename().string() << ")\n\n";
      md << "- seed: " << manifest.value("seed", 0) << "\n";
      md << "- config hash: " << manifest.value("config_hash", 0ULL) << "\n";
      if (!results.is_null()) {
        md << "\n| key | value |\n|---|---|\n";
        for (auto it = results.begin(); it != results.end(); ++it)
          md << "| " << it.key() << " | " << it.value().dump() << " |\n";
      }
      md << "\n";
    }
  }
  if (!finetunes.empty()) {
    // ablation grid: one row per variant run, metric columns collected
    std::set<std::string> metric_keys;
    for (const auto& [m, r] : finetunes)
      for (auto it = r.begin(); it != r.end(); ++it)
        if (it.key() != "variant") metric_keys.insert(it.key());
    md << "## Ablation grid\n\n| variant | seed |";
    for (const std::string& k : metric_keys) md << " " << k << " |";
    md << "\n|---|---|";
    for (std::size_t i = 0; i < metric_keys.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& [m, r] : finetunes) {
      md << "| " << r.value("variant", m.value("args", json{}).value(
                                           "variant", std::string("?")))
         << " | " << m.value("seed", 0) << " |";
      for (const std::string& k : metric_keys)
        md << " " << (r.contains(k) ? r[k].dump() : "") << " |";
      md << "\n";
    }
    md << "\n";
  }
  if (!audits.empty()) {
    md << "## Padding audit grid\n\n"
       << "| setting | key | mean padded | max padded | % padding | "
          "bucket width |\n|---|---|---|---|---|---|\n";
    for (const auto& [m, r] : audits) {
      md << "| k=" << r.value("k", std::string("?")) << " | "
         << r.value("key", std::string("?")) << " | "
         << r.value("mean_padded_length", 0.0) << " | "
         << r.value("max_padded_length", 0) << " | "
         << r.value("padding_pct", 0.0) << " | "
         << r.value("bucket_width", 0) << " |\n";
    }
    md << "\n";
  }
  if (runs == 0) md << "_no runs found_\n";
  std::cout << md.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "report.md");
    out << md.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cpaformer: cardinality-preserving graph transformer tools"};
  app.require_subcommand(1);
  app.fallthrough();  // global --seed/--out may follow the subcommand

  std::uint64_t seed = 0;
  std::string out_dir;
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--out", out_dir, "output directory for artifacts");

  // parse
  std::string in_path, format = "auto";
  CLI::App* parse = app.add_subcommand("parse", "parse a corpus file");
  parse->add_option("--input", in_path)->required();
  parse->add_option("--format", format)
      ->check(CLI::IsMember({"auto", "smiles", "jsonl"}));

  CLI::App* featurize_cmd =
      app.add_subcommand("featurize", "featurize a corpus");
  featurize_cmd->add_option("--input", in_path)->required();
  featurize_cmd->add_option("--format", format);

  // topo spd
  int k_hops = 3;
  CLI::App* topo_cmd = app.add_subcommand("topo", "topology tools");
  CLI::App* spd = topo_cmd->add_subcommand("spd", "support sizes, coverage");
  spd->add_option("--input", in_path)->required();
  spd->add_option("--format", format);
  spd->add_option("--k", k_hops)->required();

  // model forward
  std::string config_path, variant, checkpoint_path;
  CLI::App* model_cmd = app.add_subcommand("model", "model tools");
  CLI::App* forward = model_cmd->add_subcommand("forward", "embed graphs");
  forward->add_option("--config", config_path);
  forward->add_option("--input", in_path)->required();
  forward->add_option("--format", format);
  forward->add_option("--variant", variant);
  forward->add_option("--checkpoint", checkpoint_path);

  // pretrain
  std::string objective = "both";
  int steps = 100, batch = 8;
  double lr = 1e-3;
  CLI::App* pre = app.add_subcommand("pretrain", "self-supervised training");
  pre->add_option("--config", config_path);
  pre->add_option("--input", in_path)->required();
  pre->add_option("--objective", objective)
      ->check(CLI::IsMember({"both", "mask", "contrast"}));
  pre->add_option("--steps", steps);
  pre->add_option("--batch", batch);
  pre->add_option("--lr", lr);

  // finetune
  std::string task = "binary";
  int epochs = 10;
  CLI::App* ft = app.add_subcommand("finetune", "supervised fine-tuning");
  ft->add_option("--config", config_path);
  ft->add_option("--input", in_path)->required();
  ft->add_option("--task", task)
      ->check(CLI::IsMember({"binary", "regression"}));
  ft->add_option("--epochs", epochs);
  ft->add_option("--lr", lr);
  ft->add_option("--checkpoint", checkpoint_path);

  // expressivity
  std::string suite = "prop1";
  int trials = 100;
  CLI::App* expr = app.add_subcommand("expressivity", "theory suites");
  expr->add_option("--suite", suite)
      ->check(CLI::IsMember({"prop1", "prop2", "cor1", "thm1", "wl"}));
  expr->add_option("--trials", trials);

  // audit
  std::string k_arg = "3", bucket_key = "support";
  int width = 5, cap = 32;
  CLI::App* audit_cmd = app.add_subcommand("audit", "padding audit");
  audit_cmd->add_option("--input", in_path)->required();
  audit_cmd->add_option("--format", format);
  audit_cmd->add_option("--k", k_arg);
  audit_cmd->add_option("--width", width);
  audit_cmd->add_option("--key", bucket_key)
      ->check(CLI::IsMember({"n", "support"}));
  audit_cmd->add_option("--cap", cap);

  // stats
  std::string a_path, b_path, labels_path, metric = "auc";
  int resamples = 10000;
  CLI::App* stats_cmd = app.add_subcommand("stats", "evaluation statistics");
  CLI::App* boot = stats_cmd->add_subcommand("bootstrap", "paired bootstrap");
  boot->add_option("--a", a_path)->required();
  boot->add_option("--b", b_path)->required();
  boot->add_option("--labels", labels_path)->required();
  boot->add_option("--metric", metric);
  boot->add_option("--resamples", resamples);
  CLI::App* holm = stats_cmd->add_subcommand("holm", "Holm adjustment");
  holm->add_option("--input", in_path)->required();

  // report
  std::string runs_dir;
  CLI::App* report = app.add_subcommand("report", "collate run manifests");
  report->add_option("--runs", runs_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (parse->parsed()) return cmd_parse(in_path, format, out_dir, seed);
    if (featurize_cmd->parsed())
      return cmd_featurize(in_path, format, out_dir, seed);
    if (topo_cmd->parsed() && spd->parsed())
      return cmd_topo_spd(in_path, format, k_hops, out_dir, seed);
    if (model_cmd->parsed() && forward->parsed())
      return cmd_model_forward(config_path, in_path, format, variant,
                               checkpoint_path, out_dir, seed);
    if (pre->parsed())
      return cmd_pretrain(config_path, in_path, objective, steps, batch, lr,
                          seed, out_dir);
    if (ft->parsed())
      return cmd_finetune(config_path, in_path, task, epochs, lr,
                          checkpoint_path, seed, out_dir);
    if (expr->parsed()) return cmd_expressivity(suite, trials, seed, out_dir);
    if (audit_cmd->parsed())
      return cmd_audit(in_path, format, k_arg, width, bucket_key, cap,
                       out_dir, seed);
    if (stats_cmd->parsed() && boot->parsed())
      return cmd_stats_bootstrap(a_path, b_path, labels_path, metric,
                                 resamples, seed, out_dir);
    if (stats_cmd->parsed() && holm->parsed())
      return cmd_stats_holm(in_path, out_dir, seed);
    if (report->parsed()) return cmd_report(runs_dir, out_dir);
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  }
}
