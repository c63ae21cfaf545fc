// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cpaformer/errors.hpp"

namespace cpaformer::ssl {

namespace {

namespace ts = cpaformer::tensor;
using model::EncoderInput;
using model::ModelConfig;

}  // namespace

Objective objective_from_name(const std::string& name) {
  if (name == "mask") return Objective::kMask;
  if (name == "contrast") return Objective::kContrast;
  if (name == "both") return Objective::kBoth;
  throw ConfigError("unknown objective '" + name + "'");
}

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::kMask: return "mask";
    case Objective::kContrast: return "contrast";
    case Objective::kBoth: return "both";
  }
  return "?";
}

void AugConfig::validate() const {
  auto in01 = [](double lo, double hi) {
    return lo >= 0.0 && hi <= 1.0 && lo <= hi;
  };
  if (!in01(subgraph_keep_min, subgraph_keep_max) || subgraph_keep_min <= 0.0)
    throw ConfigError("subgraph keep range must lie in (0, 1]");
  if (!in01(node_drop_min, node_drop_max) ||
      !in01(edge_drop_min, edge_drop_max))
    throw ConfigError("dropout ranges must lie in [0, 1]");
}

topo::SupportSets supports_for(const MolGraph& g, const ModelConfig& cfg) {
  if (cfg.k == model::kGlobalHops)
    return topo::global_supports(topo::all_pairs_spd(g), cfg.spd_clip);
  return topo::truncated_spd(g, cfg.k);
}

// ---- augmentation ------------------------------------------------------

namespace {

View identity_view(const MolGraph& g, const ModelConfig& mcfg, bool flagged) {
  View v;
  v.graph = g;
  v.provenance.resize(g.num_atoms());
  std::iota(v.provenance.begin(), v.provenance.end(), 0);
  v.supports = supports_for(g, mcfg);
  v.degree_raw = degrees(g);
  v.identity_fallback = flagged;
  return v;
}

MolGraph induced_subgraph(const MolGraph& g,
                          const std::vector<int>& survivors,
                          const std::vector<std::pair<int, int>>& kept_bonds,
                          std::vector<int>* provenance) {
  std::vector<int> remap(g.num_atoms(), -1);
  MolGraph out;
  out.id = g.id;
  for (int orig : survivors) {
    remap[orig] = out.num_atoms();
    out.atoms.push_back(g.atoms[orig]);
    provenance->push_back(orig);
  }
  for (const BondRecord& b : g.bonds) {
    if (remap[b.u] < 0 || remap[b.v] < 0) continue;
    const std::pair<int, int> key = std::minmax(b.u, b.v);
    if (std::find(kept_bonds.begin(), kept_bonds.end(), key) ==
        kept_bonds.end())
      continue;
    BondRecord nb = b;
    nb.u = std::min(remap[b.u], remap[b.v]);
    nb.v = std::max(remap[b.u], remap[b.v]);
    out.bonds.push_back(nb);
  }
  refresh_ring_and_aromatic_flags(out);
  refresh_conjugation(out);
  return out;
}

View random_pipeline_view(const MolGraph& g, const AugConfig& cfg,
                          const ModelConfig& mcfg, RngStream& rng) {
  const int n = g.num_atoms();
  for (int attempt = 0; attempt < 5; ++attempt) {
    const double keep = rng.next_uniform(cfg.subgraph_keep_min,
                                         cfg.subgraph_keep_max);
    int m = std::max(1, static_cast<int>(std::lround(keep * n)));
    m = std::min(m, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<int> sampled(order.begin(), order.begin() + m);

    const double node_rate =
        rng.next_uniform(cfg.node_drop_min, cfg.node_drop_max);
    std::vector<int> survivors;
    for (int v : sampled)
      if (!rng.next_bernoulli(node_rate)) survivors.push_back(v);
    if (survivors.empty()) continue;
    std::sort(survivors.begin(), survivors.end());

    std::set<int> alive(survivors.begin(), survivors.end());
    const double edge_rate =
        rng.next_uniform(cfg.edge_drop_min, cfg.edge_drop_max);
    std::vector<std::pair<int, int>> kept_bonds;
    for (const BondRecord& b : g.bonds) {
      if (!alive.count(b.u) || !alive.count(b.v)) continue;
      if (rng.next_bernoulli(edge_rate)) continue;
      kept_bonds.push_back(std::pair<int, int>(std::minmax(b.u, b.v)));
    }

    View view;
    view.graph = induced_subgraph(g, survivors, kept_bonds,
                                  &view.provenance);
    return view;
  }
  return identity_view(g, mcfg, true);
}

void attach_topology(View& view, const MolGraph& original,
                     const AugConfig& cfg, const ModelConfig& mcfg,
                     const topo::SupportSets* orig_supports,
                     const std::vector<int>& orig_degrees) {
  if (!view.supports.sets.empty()) return;  // identity views are complete
  if (cfg.spd_mode == SpdMode::kPerView) {
    view.supports = supports_for(view.graph, mcfg);
    view.degree_raw = degrees(view.graph);
    return;
  }
  // stable mode: inherit the original artifacts, intersect with survivors
  const int vn = view.graph.num_atoms();
  std::vector<int> remap(original.num_atoms(), -1);
  for (int i = 0; i < vn; ++i) remap[view.provenance[i]] = i;
  view.supports.k = orig_supports->k;
  view.supports.sets.resize(vn);
  for (int i = 0; i < vn; ++i) {
    const int orig = view.provenance[i];
    auto& out = view.supports.sets[i];
    for (const topo::SupportEntry& e : orig_supports->sets[orig]) {
      const int mapped = remap[e.node];
      if (mapped < 0) continue;
      out.push_back({mapped, e.spd, e.bin});
    }
    std::sort(out.begin(), out.end(),
              [](const topo::SupportEntry& a, const topo::SupportEntry& b) {
                return a.spd != b.spd ? a.spd < b.spd : a.node < b.node;
              });
  }
  view.degree_raw.resize(vn);
  for (int i = 0; i < vn; ++i)
    view.degree_raw[i] = orig_degrees[view.provenance[i]];
}

View make_one_view(const MolGraph& g, const AugConfig& cfg,
                   const ModelConfig& mcfg, RngStream& rng,
                   const topo::SupportSets* orig_supports,
                   const std::vector<int>& orig_degrees,
                   EdgeDropReport* report) {
  if (g.num_atoms() < 2) return identity_view(g, mcfg, true);
  View view;
  switch (cfg.chem_aware) {
    case ChemAware::kNone:
      view = random_pipeline_view(g, cfg, mcfg, rng);
      break;
    case ChemAware::kAttributeMask: {
      view.graph = g;
      view.provenance.resize(g.num_atoms());
      std::iota(view.provenance.begin(), view.provenance.end(), 0);
      const double rate =
          rng.next_uniform(cfg.node_drop_min, cfg.node_drop_max);
      view.attr_masked.assign(g.num_atoms(), 0);
      for (int i = 0; i < g.num_atoms(); ++i)
        if (rng.next_bernoulli(rate)) view.attr_masked[i] = 1;
      break;
    }
    case ChemAware::kValencyConstrained: {
      const double rate =
          rng.next_uniform(cfg.edge_drop_min, cfg.edge_drop_max);
      view.graph = valency_constrained_edge_dropout(g, rate, rng, report);
      view.provenance.resize(g.num_atoms());
      std::iota(view.provenance.begin(), view.provenance.end(), 0);
      break;
    }
  }
  attach_topology(view, g, cfg, mcfg, orig_supports, orig_degrees);
  return view;
}

}  // namespace

std::pair<View, View> make_views(const MolGraph& g, const AugConfig& cfg,
                                 const ModelConfig& mcfg, std::uint64_t seed,
                                 const std::string& stream_key,
                                 EdgeDropReport* report) {
  cfg.validate();
  topo::SupportSets orig_supports;
  std::vector<int> orig_degrees = degrees(g);
  if (cfg.spd_mode == SpdMode::kStable) orig_supports = supports_for(g, mcfg);
  const topo::SupportSets* orig =
      cfg.spd_mode == SpdMode::kStable ? &orig_supports : nullptr;
  RngStream rng0(seed, stream_key + "/view0");
  RngStream rng1(seed, stream_key + "/view1");
  View v0 = make_one_view(g, cfg, mcfg, rng0, orig, orig_degrees, report);
  View v1 = make_one_view(g, cfg, mcfg, rng1, orig, orig_degrees, report);
  return {std::move(v0), std::move(v1)};
}

MolGraph valency_constrained_edge_dropout(const MolGraph& g, double rate,
                                          RngStream& rng,
                                          EdgeDropReport* report) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("edge drop rate must lie in [0, 1)");
  MolGraph current = g;

  auto feasible_without = [](const MolGraph& base, int bond_idx) {
    MolGraph trial = base;
    trial.bonds.erase(trial.bonds.begin() + bond_idx);
    refresh_ring_and_aromatic_flags(trial);
    for (int i = 0; i < trial.num_atoms(); ++i) {
      const AtomRecord& a = trial.atoms[i];
      const int cap = max_valence(a.element) + std::max(0, a.formal_charge);
      if (explicit_valence(trial, i) + a.num_h > cap) return false;
    }
    return true;
  };

  // candidate selection on the original edge list
  std::vector<int> candidates;
  for (int bi = 0; bi < g.num_bonds(); ++bi)
    if (rng.next_bernoulli(rate)) candidates.push_back(bi);

  std::set<std::pair<int, int>> dropped;
  for (int bi : candidates) {
    if (report) ++report->attempted;
    bool done = false;
    int pick = bi;
    for (int retry = 0; retry <= 5 && !done; ++retry) {
      // locate the picked original bond in the current graph
      const std::pair<int, int> key = std::minmax(g.bonds[pick].u, g.bonds[pick].v);
      int cur_idx = -1;
      for (int ci = 0; ci < current.num_bonds(); ++ci) {
        if (std::pair<int, int>(std::minmax(current.bonds[ci].u, current.bonds[ci].v)) == key) {
          cur_idx = ci;
          break;
        }
      }
      if (cur_idx >= 0 && !dropped.count(key) &&
          feasible_without(current, cur_idx)) {
        current.bonds.erase(current.bonds.begin() + cur_idx);
        dropped.insert(key);
        done = true;
        if (report) ++report->dropped;
        break;
      }
      if (retry < 5 && current.num_bonds() > 0) {
        pick = static_cast<int>(rng.next_below(g.num_bonds()));
      }
    }
    if (!done && report) ++report->skipped;
  }
  refresh_ring_and_aromatic_flags(current);
  refresh_conjugation(current);
  return current;
}

MaskPlan sample_mask_plan(const MolGraph& g, double node_rate,
                          double edge_rate, RngStream& rng) {
  auto pick_count = [](int n, double rate) {
    if (n <= 0) return 0;
    int c = static_cast<int>(std::floor(rate * n));
    if (c == 0 && n >= 7) c = 1;
    return std::min(c, n);
  };
  MaskPlan plan;
  const int nn = pick_count(g.num_atoms(), node_rate);
  if (nn > 0) {
    std::vector<int> order(g.num_atoms());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    plan.nodes.assign(order.begin(), order.begin() + nn);
    std::sort(plan.nodes.begin(), plan.nodes.end());
  }
  const int ne = pick_count(g.num_bonds(), edge_rate);
  if (ne > 0) {
    std::vector<int> order(g.num_bonds());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(ne);
    std::sort(order.begin(), order.end());
    for (int bi : order)
      plan.edges.push_back(std::pair<int, int>(std::minmax(g.bonds[bi].u, g.bonds[bi].v)));
  }
  return plan;
}

void apply_mask_plan(EncoderInput& in, const MaskPlan& plan) {
  for (int node : plan.nodes) in.mark_node_masked(node);
  for (const auto& [u, v] : plan.edges) in.mark_bond_masked(u, v);
}

EncoderInput view_encoder_input(const View& view, const FeatureSchema& schema,
                                const CorpusStats& stats,
                                const ModelConfig& cfg) {
  const Featurized f = featurize(view.graph, schema, stats);
  EncoderInput in = model::make_encoder_input(view.graph, f, view.supports,
                                              cfg);
  in.degree_raw = view.degree_raw;  // stable mode inherits parent degrees
  for (int i = 0; i < in.n; ++i)
    in.node_cat[i][kFieldDegreeBin] = topo::degree_bin(view.degree_raw[i]);
  for (std::size_t i = 0; i < view.attr_masked.size(); ++i)
    if (view.attr_masked[i]) in.mark_node_masked(static_cast<int>(i));
  return in;
}

// ---- decoder ----------------------------------------------------------

Decoder::Decoder(const ModelConfig& cfg)
    : model_dim_(cfg.model_dim), hidden_(cfg.decoder_hidden) {
  const FeatureSchema schema = FeatureSchema::standard();
  auto add_glorot = [&](const std::string& name, int rows, int cols) {
    model::Param& p = params_.add(name, rows, cols);
    RngStream rng(cfg.seed, "init/" + name);
    const double a = std::sqrt(6.0 / (rows + cols)) * cfg.init_scale;
    for (double& v : p.value) v = rng.next_uniform(-a, a);
  };
  auto add_zero = [&](const std::string& name, int rows, int cols) {
    params_.add(name, rows, cols);
  };
  add_glorot("dec/node/w1", model_dim_, hidden_);
  add_zero("dec/node/b1", 1, hidden_);
  add_glorot("dec/node/element_w", hidden_, schema.node_vocab[kFieldElement]);
  add_zero("dec/node/element_b", 1, schema.node_vocab[kFieldElement]);
  add_glorot("dec/node/charge_w", hidden_, schema.node_vocab[kFieldCharge]);
  add_zero("dec/node/charge_b", 1, schema.node_vocab[kFieldCharge]);
  add_glorot("dec/node/numh_w", hidden_, schema.node_vocab[kFieldNumH]);
  add_zero("dec/node/numh_b", 1, schema.node_vocab[kFieldNumH]);
  add_glorot("dec/node/aromatic_w", hidden_,
             schema.node_vocab[kFieldAromatic]);
  add_zero("dec/node/aromatic_b", 1, schema.node_vocab[kFieldAromatic]);
  add_glorot("dec/node/ring_w", hidden_, schema.node_vocab[kFieldInRing]);
  add_zero("dec/node/ring_b", 1, schema.node_vocab[kFieldInRing]);
  add_glorot("dec/node/mass_w", hidden_, 1);
  add_zero("dec/node/mass_b", 1, 1);
  add_glorot("dec/edge/w1", 2 * model_dim_, hidden_);
  add_zero("dec/edge/b1", 1, hidden_);
  add_glorot("dec/edge/order_w", hidden_, schema.bond_vocab[kBondOrderField]);
  add_zero("dec/edge/order_b", 1, schema.bond_vocab[kBondOrderField]);
  add_glorot("dec/edge/conj_w", hidden_, schema.bond_vocab[kBondConjField]);
  add_zero("dec/edge/conj_b", 1, schema.bond_vocab[kBondConjField]);
  add_glorot("dec/edge/ring_w", hidden_, schema.bond_vocab[kBondRingField]);
  add_zero("dec/edge/ring_b", 1, schema.bond_vocab[kBondRingField]);
}

BoundDecoder Decoder::bind(tensor::Tape& tape, bool trainable) const {
  BoundDecoder b;
  b.dec_ = this;
  b.tape_ = &tape;
  for (const model::Param& p : params_.entries())
    b.leaves_.emplace(p.name,
                      tape.leaf(ts::Matrix(p.rows, p.cols, p.value),
                                trainable));
  return b;
}

ts::Tensor BoundDecoder::param(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end())
    throw ConfigError("decoder parameter '" + name + "' not bound");
  return it->second;
}

std::map<std::string, std::vector<double>> BoundDecoder::grads() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, leaf] : leaves_) out[name] = tape_->grad_of(leaf);
  return out;
}

ts::Tensor BoundDecoder::masked_loss(const ts::Tensor& states,
                                     const EncoderInput& original,
                                     const MaskPlan& plan) const {
  ts::Tape& tp = *tape_;
  if (plan.empty()) return tp.scalar_const(0.0);
  const int mn = static_cast<int>(plan.nodes.size());
  const int me = static_cast<int>(plan.edges.size());

  auto head_loss = [&](const ts::Tensor& hidden, const std::string& w,
                       const std::string& b, const std::vector<int>& targets) {
    return ts::cross_entropy_with_logits(
        ts::add(ts::matmul(hidden, param(w)), param(b)), targets);
  };

  ts::Tensor node_term, edge_term;
  if (mn > 0) {
    ts::Tensor hidden = ts::relu(
        ts::add(ts::matmul(states, param("dec/node/w1")),
                param("dec/node/b1")));
    ts::Tensor sel = ts::gather_rows(hidden, plan.nodes);
    std::vector<int> t_el, t_chg, t_nh, t_ar, t_ring;
    std::vector<double> t_mass;
    for (int node : plan.nodes) {
      t_el.push_back(original.node_cat[node][kFieldElement]);
      t_chg.push_back(original.node_cat[node][kFieldCharge]);
      t_nh.push_back(original.node_cat[node][kFieldNumH]);
      t_ar.push_back(original.node_cat[node][kFieldAromatic]);
      t_ring.push_back(original.node_cat[node][kFieldInRing]);
      t_mass.push_back(original.mass_z[node]);
    }
    node_term = head_loss(sel, "dec/node/element_w", "dec/node/element_b",
                          t_el);
    node_term = ts::add(node_term, head_loss(sel, "dec/node/charge_w",
                                             "dec/node/charge_b", t_chg));
    node_term = ts::add(node_term, head_loss(sel, "dec/node/numh_w",
                                             "dec/node/numh_b", t_nh));
    node_term = ts::add(node_term, head_loss(sel, "dec/node/aromatic_w",
                                             "dec/node/aromatic_b", t_ar));
    node_term = ts::add(node_term, head_loss(sel, "dec/node/ring_w",
                                             "dec/node/ring_b", t_ring));
    ts::Tensor pred = ts::add(ts::matmul(sel, param("dec/node/mass_w")),
                              param("dec/node/mass_b"));
    ts::Tensor diff =
        ts::sub(pred, tp.constant(ts::Matrix::col_vector(t_mass)));
    node_term = ts::add(
        node_term, ts::mul_const(ts::sum_all(ts::mul(diff, diff)), 1.0 / mn));
  }
  if (me > 0) {
    std::vector<int> us, vs;
    std::vector<int> t_order, t_conj, t_ring;
    for (const auto& [u, v] : plan.edges) {
      const auto it = original.bonds.find({u, v});
      if (it == original.bonds.end())
        throw ConfigError("masked edge missing from encoder input");
      us.push_back(u);
      vs.push_back(v);
      t_order.push_back(it->second.order);
      t_conj.push_back(it->second.conj);
      t_ring.push_back(it->second.ring);
    }
    ts::Tensor pair_in = ts::concat_cols(
        {ts::gather_rows(states, us), ts::gather_rows(states, vs)});
    ts::Tensor hidden = ts::relu(ts::add(
        ts::matmul(pair_in, param("dec/edge/w1")), param("dec/edge/b1")));
    edge_term = head_loss(hidden, "dec/edge/order_w", "dec/edge/order_b",
                          t_order);
    edge_term = ts::add(edge_term, head_loss(hidden, "dec/edge/conj_w",
                                             "dec/edge/conj_b", t_conj));
    edge_term = ts::add(edge_term, head_loss(hidden, "dec/edge/ring_w",
                                             "dec/edge/ring_b", t_ring));
  }
  const double total = mn + me;
  if (mn > 0 && me > 0)
    return ts::add(ts::mul_const(node_term, mn / total),
                   ts::mul_const(edge_term, me / total));
  return mn > 0 ? node_term : edge_term;
}

// ---- losses ----------------------------------------------------------------

ts::Tensor ntxent(const ts::Tensor& z1, const ts::Tensor& z2, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw ShapeError("view batches must have matching shapes");
  const int b = z1.rows();
  if (b < 2)
    throw ConfigError("ntxent needs batch size >= 2 for in-batch negatives");
  ts::Tensor z = ts::concat_rows({z1, z2});
  ts::Tensor zn = ts::l2_normalize_rows(z);
  ts::Tensor sims = ts::mul_const(ts::matmul_nt(zn, zn), 1.0 / tau);
  const int n = 2 * b;
  ts::Mask allow(static_cast<std::size_t>(n) * n, 1);
  for (int i = 0; i < n; ++i)
    allow[static_cast<std::size_t>(i) * n + i] = 0;  // self excluded
  std::vector<int> targets(n);
  for (int i = 0; i < n; ++i) targets[i] = i < b ? i + b : i - b;
  return ts::cross_entropy_with_logits(sims, targets, &allow);
}

ts::Tensor total_loss(const ts::Tensor& mask_loss,
                      const ts::Tensor& contrast_loss) {
  return ts::add(mask_loss, ts::mul_const(contrast_loss, 0.5));
}

double total_loss(double mask_loss, double contrast_loss) {
  return mask_loss + 0.5 * contrast_loss;
}

// ---- optimizer -----------------------------------------------------------

Adam::Adam(std::vector<model::ParamStore*> stores, const AdamConfig& cfg)
    : stores_(std::move(stores)), cfg_(cfg) {
  m_.resize(stores_.size());
  v_.resize(stores_.size());
  for (std::size_t s = 0; s < stores_.size(); ++s) {
    for (const model::Param& p : stores_[s]->entries()) {
      m_[s].emplace_back(p.value.size(), 0.0);
      v_[s].emplace_back(p.value.size(), 0.0);
    }
  }
}

void Adam::step(
    const std::vector<std::map<std::string, std::vector<double>>>& grads,
    double lr_scale) {
  if (grads.size() != stores_.size())
    throw ConfigError("one gradient map per parameter store required");
  ++t_;
  const double lr = cfg_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t s = 0; s < stores_.size(); ++s) {
    auto& entries = stores_[s]->entries();
    for (std::size_t pi = 0; pi < entries.size(); ++pi) {
      model::Param& p = entries[pi];
      const auto it = grads[s].find(p.name);
      if (it == grads[s].end()) continue;
      const std::vector<double>& g = it->second;
      if (g.size() != p.value.size())
        throw ShapeError("gradient size mismatch for " + p.name);
      auto& m = m_[s][pi];
      auto& v = v_[s][pi];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (cfg_.weight_decay > 0.0)
          p.value[i] *= 1.0 - lr * cfg_.weight_decay;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double update =
            lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        p.value[i] -= update;
        if (!std::isfinite(p.value[i]) || !std::isfinite(v[i]))
          throw NumericError("non-finite parameter update for " + p.name);
      }
    }
  }
}

double lr_at(int step, int warmup_steps, int total_steps, double peak,
             double floor_lr) {
  if (step < warmup_steps)
    return peak * static_cast<double>(step + 1) / warmup_steps;
  if (total_steps <= warmup_steps) return peak;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return floor_lr +
         0.5 * (peak - floor_lr) *
             (1.0 + std::cos(3.14159265358979323846 * progress));
}

// ---- pretraining -----------------------------------------------------------

PretrainResult pretrain(model::Encoder& encoder, Decoder& decoder,
                        const std::vector<MolGraph>& corpus,
                        const FeatureSchema& schema, const CorpusStats& stats,
                        const PretrainConfig& cfg) {
  if (corpus.empty()) throw ConfigError("pretraining corpus is empty");
  cfg.aug.validate();
  const bool use_mask = cfg.objective != Objective::kContrast;
  const bool use_contrast = cfg.objective != Objective::kMask;
  if (use_contrast && cfg.batch < 2)
    throw ConfigError("contrastive objective needs batch >= 2");
  const ModelConfig& mcfg = encoder.config();

  std::vector<model::ParamStore*> stores{&encoder.params()};
  if (use_mask) stores.push_back(&decoder.params());
  AdamConfig acfg;
  acfg.lr = 1.0;  // scaled per step by the schedule
  Adam adam(stores, acfg);

  PretrainResult result;
  for (int step = 0; step < cfg.steps; ++step) {
    try {
      RngStream batch_rng(cfg.seed, "batch/step" + std::to_string(step));
      std::vector<int> batch_idx;
      for (int i = 0; i < cfg.batch; ++i)
        batch_idx.push_back(
            static_cast<int>(batch_rng.next_below(corpus.size())));

      ts::Tape tape;
      model::BoundEncoder benc = encoder.bind(tape, true);
      BoundDecoder bdec;
      if (use_mask) bdec = decoder.bind(tape, true);

      RngStream drop_rng(cfg.seed, "dropout/step" + std::to_string(step));
      model::ForwardOptions fwd;
      fwd.training = true;
      fwd.rng = &drop_rng;

      ts::Tensor mask_acc = tape.scalar_const(0.0);
      std::vector<ts::Tensor> z1s, z2s;
      for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
        const MolGraph& g = corpus[batch_idx[bi]];
        const std::string gkey =
            "step" + std::to_string(step) + "/g" + std::to_string(bi);
        if (use_mask) {
          RngStream mask_rng(cfg.seed, "mask/" + gkey);
          const MaskPlan plan = sample_mask_plan(g, cfg.mask_node_rate,
                                                 cfg.mask_edge_rate,
                                                 mask_rng);
          const Featurized f = featurize(g, schema, stats);
          model::EncoderInput in =
              model::make_encoder_input(g, f, supports_for(g, mcfg), mcfg);
          apply_mask_plan(in, plan);
          ts::Tensor states = benc.forward(in, fwd);
          mask_acc = ts::add(mask_acc, bdec.masked_loss(states, in, plan));
        }
        if (use_contrast) {
          auto [v0, v1] = make_views(g, cfg.aug, mcfg, cfg.seed,
                                     "aug/" + gkey, &result.edge_report);
          for (int vi = 0; vi < 2; ++vi) {
            const View& view = vi == 0 ? v0 : v1;
            model::EncoderInput in =
                view_encoder_input(view, schema, stats, mcfg);
            ts::Tensor states = benc.forward(in, fwd);
            ts::Tensor z = benc.project(benc.readout(states));
            (vi == 0 ? z1s : z2s).push_back(z);
          }
        }
      }

      ts::Tensor mask_loss =
          use_mask ? ts::mul_const(mask_acc, 1.0 / cfg.batch)
                   : tape.scalar_const(0.0);
      ts::Tensor contrast_loss =
          use_contrast
              ? ntxent(ts::concat_rows(z1s), ts::concat_rows(z2s), cfg.tau)
              : tape.scalar_const(0.0);
      ts::Tensor total;
      if (cfg.objective == Objective::kMask)
        total = mask_loss;
      else if (cfg.objective == Objective::kContrast)
        total = contrast_loss;
      else
        total = total_loss(mask_loss, contrast_loss);

      StepTrace trace;
      trace.step = step;
      trace.mask_loss = mask_loss.scalar_value();
      trace.contrast_loss = contrast_loss.scalar_value();
      trace.total = total.scalar_value();
      if (!std::isfinite(trace.total))
        throw NumericError("non-finite training loss");
      result.trace.push_back(trace);

      tape.backward(total);
      std::vector<std::map<std::string, std::vector<double>>> grads;
      grads.push_back(benc.grads());
      if (use_mask) grads.push_back(bdec.grads());
      adam.step(grads, lr_at(step, cfg.warmup_steps, cfg.steps, cfg.peak_lr,
                             cfg.floor_lr));
      result.steps_done = step + 1;
    } catch (const NumericError& e) {
      result.halted_at_step = step;
      result.halt_reason = e.what();
      break;
    }
  }
  return result;
}

// ---- fine-tuning -------------------------------------------------------

Head::Head(int model_dim, std::uint64_t seed) {
  model::Param& w = params.add("head/w", model_dim, 1);
  RngStream rng(seed, "init/head/w");
  const double a = std::sqrt(6.0 / (model_dim + 1));
  for (double& v : w.value) v = rng.next_uniform(-a, a);
  params.add("head/b", 1, 1);
}

FinetuneResult finetune(model::Encoder& encoder, Head& head,
                        const LabeledDataset& train,
                        const FeatureSchema& schema, const CorpusStats& stats,
                        const FinetuneConfig& cfg) {
  if (train.graphs.size() != train.labels.size() || train.graphs.empty())
    throw ConfigError("labeled dataset is empty or misaligned");
  const ModelConfig& mcfg = encoder.config();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  std::vector<model::ParamStore*> stores;
  if (!cfg.head_only) stores.push_back(&encoder.params());
  stores.push_back(&head.params);
  Adam adam(stores, acfg);

  FinetuneResult result;
  const int n = static_cast<int>(train.graphs.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream order_rng(cfg.seed, "finetune/epoch" + std::to_string(epoch));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int stop = std::min(n, start + cfg.batch);
      ts::Tape tape;
      model::BoundEncoder benc = encoder.bind(tape, !cfg.head_only);
      ts::Tensor w = tape.leaf(
          ts::Matrix(head.params.at("head/w").rows, 1,
                     head.params.at("head/w").value),
          true);
      ts::Tensor b = tape.leaf(
          ts::Matrix(1, 1, head.params.at("head/b").value), true);
      std::vector<ts::Tensor> logits;
      std::vector<double> targets, weights;
      for (int p = start; p < stop; ++p) {
        const MolGraph& g = train.graphs[order[p]];
        const Featurized f = featurize(g, schema, stats);
        model::EncoderInput in =
            model::make_encoder_input(g, f, supports_for(g, mcfg), mcfg);
        ts::Tensor pooled = benc.readout(benc.forward(in));
        logits.push_back(ts::add(ts::matmul(pooled, w), b));
        const double y = train.labels[order[p]];
        targets.push_back(y);
        weights.push_back(cfg.task == TaskKind::kBinary && y > 0.5
                              ? cfg.pos_weight
                              : 1.0);
      }
      ts::Tensor logit_col = ts::concat_rows(logits);
      ts::Tensor loss;
      if (cfg.task == TaskKind::kBinary) {
        loss = ts::bce_with_logits(logit_col, targets, weights);
      } else {
        ts::Tensor diff = ts::sub(
            logit_col, tape.constant(ts::Matrix::col_vector(targets)));
        loss = ts::mul_const(ts::sum_all(ts::mul(diff, diff)),
                             1.0 / (stop - start));
      }
      epoch_loss += loss.scalar_value();
      ++batches;
      tape.backward(loss);
      std::map<std::string, std::vector<double>> head_grads;
      head_grads["head/w"] = tape.grad_of(w);
      head_grads["head/b"] = tape.grad_of(b);
      std::vector<std::map<std::string, std::vector<double>>> grads;
      if (!cfg.head_only) grads.push_back(benc.grads());
      grads.push_back(std::move(head_grads));
      adam.step(grads);
    }
    result.epoch_losses.push_back(epoch_loss / std::max(1, batches));
  }
  return result;
}

std::vector<double> predict(const model::Encoder& encoder, const Head& head,
                            const std::vector<MolGraph>& graphs,
                            const FeatureSchema& schema,
                            const CorpusStats& stats) {
  const ModelConfig& mcfg = encoder.config();
  std::vector<double> out;
  out.reserve(graphs.size());
  for (const MolGraph& g : graphs) {
    ts::Tape tape;
    tape.set_grad_enabled(false);
    model::BoundEncoder benc = encoder.bind(tape, false);
    const Featurized f = featurize(g, schema, stats);
    model::EncoderInput in =
        model::make_encoder_input(g, f, supports_for(g, mcfg), mcfg);
    ts::Tensor pooled = benc.readout(benc.forward(in));
    const model::Param& w = head.params.at("head/w");
    ts::Tensor logit = ts::add(
        ts::matmul(pooled, tape.constant(ts::Matrix(w.rows, 1, w.value))),
        tape.constant(ts::Matrix(1, 1, head.params.at("head/b").value)));
    out.push_back(logit.scalar_value());
  }
  return out;
}

}  // namespace cpaformer::ssl
