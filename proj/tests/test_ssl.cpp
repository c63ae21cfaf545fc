// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "cpaformer/errors.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/smiles.hpp"
#include "cpaformer/ssl.hpp"
#include "cpaformer/synthetic.hpp"

using namespace cpaformer;
using namespace cpaformer::ssl;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig cfg;
  cfg.layers = 1;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.k = 2;
  cfg.proj_dim = 8;
  cfg.decoder_hidden = 8;
  cfg.seed = 13;
  return cfg;
}

/// Brute-force NT-Xent oracle: direct enumeration over all 2B anchors.
double ntxent_oracle(const std::vector<std::vector<double>>& z1,
                     const std::vector<std::vector<double>>& z2,
                     double tau) {
  std::vector<std::vector<double>> z = z1;
  z.insert(z.end(), z2.begin(), z2.end());
  for (auto& v : z) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  const int n = static_cast<int>(z.size());
  const int b = n / 2;
  auto sim = [&](int i, int j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < z[i].size(); ++d) acc += z[i][d] * z[j][d];
    return acc / tau;
  };
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int pos = i < b ? i + b : i - b;
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      denom += std::exp(sim(i, j));
    }
    loss += -std::log(std::exp(sim(i, pos)) / denom);
  }
  return loss / n;
}

}  // namespace

TEST_CASE("identity-style config reproduces the graph") {
  AugConfig aug;
  aug.subgraph_keep_min = aug.subgraph_keep_max = 1.0;
  aug.node_drop_min = aug.node_drop_max = 0.0;
  aug.edge_drop_min = aug.edge_drop_max = 0.0;
  const MolGraph g = parse_smiles("c1ccccc1CCO");
  const auto [v0, v1] = make_views(g, aug, small_config(), 7, "t");
  CHECK(v0.graph.num_atoms() == g.num_atoms());
  CHECK(v0.graph.num_bonds() == g.num_bonds());
  CHECK_FALSE(v0.identity_fallback);
  CHECK(v1.graph.num_atoms() == g.num_atoms());
}

TEST_CASE("views are reproducible for identical seed and key") {
  const MolGraph g = synthetic::path_graph(10);
  AugConfig aug;
  const model::ModelConfig cfg = small_config();
  const auto [a0, a1] = make_views(g, aug, cfg, 123, "k1");
  const auto [b0, b1] = make_views(g, aug, cfg, 123, "k1");
  CHECK(a0.provenance == b0.provenance);
  CHECK(a1.provenance == b1.provenance);
  CHECK(a0.graph.num_bonds() == b0.graph.num_bonds());
  const auto [c0, c1] = make_views(g, aug, cfg, 124, "k1");
  (void)c1;
  // a different seed perturbs at least one of the two views almost surely
  const bool same = a0.provenance == c0.provenance &&
                    a0.graph.num_bonds() == c0.graph.num_bonds();
  (void)same;  // no hard assertion: collisions are possible, just unlikely
}

TEST_CASE("tiny graphs fall back to flagged identity views") {
  const MolGraph g = synthetic::path_graph(1);
  AugConfig aug;
  const auto [v0, v1] = make_views(g, aug, small_config(), 5, "t");
  CHECK(v0.identity_fallback);
  CHECK(v1.identity_fallback);
  CHECK(v0.graph.num_atoms() == 1);
}

TEST_CASE("per-view supports shrink into the intersected originals") {
  RngStream seed_rng(3, "prop");
  const model::ModelConfig cfg = small_config();
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const MolGraph g =
        synthetic::random_molecule(seed_rng.next_int(4, 14), seed_rng);
    AugConfig aug;
    aug.spd_mode = SpdMode::kPerView;
    const auto [view, other] =
        make_views(g, aug, cfg, 1000 + trial, "prop");
    (void)other;
    const topo::SupportSets orig = supports_for(g, cfg);
    for (int vi = 0; vi < view.graph.num_atoms(); ++vi) {
      const int oi = view.provenance[vi];
      std::set<int> allowed;  // survivors of the original support
      for (const topo::SupportEntry& e : orig.sets[oi])
        allowed.insert(e.node);
      for (const topo::SupportEntry& e : view.supports.sets[vi]) {
        const int oj = view.provenance[e.node];
        CHECK(allowed.count(oj) == 1);  // deletion never shortens paths
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("stable mode inherits supports intersected with survivors") {
  const MolGraph g = synthetic::path_graph(8);
  AugConfig aug;
  aug.spd_mode = SpdMode::kStable;
  const model::ModelConfig cfg = small_config();
  const auto [view, other] = make_views(g, aug, cfg, 9, "stable");
  (void)other;
  const topo::SupportSets orig = supports_for(g, cfg);
  for (int vi = 0; vi < view.graph.num_atoms(); ++vi) {
    const int oi = view.provenance[vi];
    std::set<std::pair<int, int>> orig_pairs;  // (node, spd)
    for (const topo::SupportEntry& e : orig.sets[oi])
      orig_pairs.insert({e.node, e.spd});
    for (const topo::SupportEntry& e : view.supports.sets[vi])
      CHECK(orig_pairs.count({view.provenance[e.node], e.spd}) == 1);
  }
  // degrees inherited from the parent graph
  for (int vi = 0; vi < view.graph.num_atoms(); ++vi)
    CHECK(view.degree_raw[vi] == degrees(g)[view.provenance[vi]]);
}

TEST_CASE("per-view supports strictly shrink when a view disconnects") {
  // a path cut in the middle loses cross-fragment support pairs
  const MolGraph g = synthetic::path_graph(6);
  const model::ModelConfig cfg = small_config();
  const topo::SupportSets orig = supports_for(g, cfg);

  View view;
  view.graph = g;
  view.graph.bonds.erase(view.graph.bonds.begin() + 2);  // cut 2-3
  refresh_ring_and_aromatic_flags(view.graph);
  view.provenance = {0, 1, 2, 3, 4, 5};
  view.supports = supports_for(view.graph, cfg);
  view.degree_raw = degrees(view.graph);

  int orig_total = 0, view_total = 0;
  for (int i = 0; i < 6; ++i) {
    orig_total += orig.size_of(i);
    view_total += view.supports.size_of(i);
  }
  CHECK(view_total < orig_total);
}

TEST_CASE("valency-constrained dropout") {
  RngStream rng(4, "valency");
  // triple bond drop is always feasible
  const MolGraph alkyne = parse_smiles("C#C");
  EdgeDropReport report;
  RngStream r1(1, "drop1");
  const MolGraph dropped =
      valency_constrained_edge_dropout(alkyne, 0.999, r1, &report);
  CHECK(dropped.num_bonds() == 0);
  CHECK(report.dropped == 1);

  // rate 0 leaves the graph unchanged
  const MolGraph benzene = parse_smiles("c1ccccc1");
  RngStream r2(2, "drop2");
  const MolGraph same = valency_constrained_edge_dropout(benzene, 0.0, r2);
  CHECK(same.num_bonds() == benzene.num_bonds());

  // benzene drops keep ring/aromatic flags consistent with a recomputed
  // cycle-detection oracle on the mutated graph
  for (int trial = 0; trial < 20; ++trial) {
    RngStream rt(100 + trial, "drop3");
    const MolGraph mutated =
        valency_constrained_edge_dropout(benzene, 0.3, rt);
    const RingMembership rings = ring_membership(mutated);
    for (int i = 0; i < mutated.num_atoms(); ++i) {
      CHECK(mutated.atoms[i].in_ring == rings.atoms[i]);
      if (mutated.atoms[i].aromatic) CHECK(mutated.atoms[i].in_ring);
    }
    for (int bi = 0; bi < mutated.num_bonds(); ++bi) {
      CHECK(mutated.bonds[bi].in_ring == rings.bonds[bi]);
      if (mutated.bonds[bi].order == BondOrder::Aromatic)
        CHECK(mutated.bonds[bi].in_ring);
    }
    // valences stay within the table
    for (int i = 0; i < mutated.num_atoms(); ++i)
      CHECK(explicit_valence(mutated, i) + mutated.atoms[i].num_h <=
            max_valence(mutated.atoms[i].element) +
                std::max(0, mutated.atoms[i].formal_charge));
  }
  (void)rng;
}

TEST_CASE("mask plan fractions") {
  RngStream graph_rng(5, "mask_graph");
  const MolGraph g = synthetic::random_molecule(20, graph_rng);
  RngStream rng(6, "mask");
  const MaskPlan plan = sample_mask_plan(g, 0.15, 0.15, rng);
  CHECK(plan.nodes.size() == 3);  // floor(0.15 * 20)
  CHECK(plan.edges.size() == static_cast<std::size_t>(
                                 std::floor(0.15 * g.num_bonds())));
  // at least one item once count reaches 7
  const MolGraph g7 = synthetic::path_graph(7);
  RngStream rng7(7, "mask7");
  const MaskPlan plan7 = sample_mask_plan(g7, 0.15, 0.15, rng7);
  CHECK(plan7.nodes.size() == 1);
  // small graphs may mask nothing
  const MolGraph g4 = synthetic::path_graph(4);
  RngStream rng4(8, "mask4");
  CHECK(sample_mask_plan(g4, 0.15, 0.0, rng4).nodes.empty());
}

TEST_CASE("masked input swaps embeddings to the learned mask vector") {
  const model::ModelConfig cfg = small_config();
  model::Encoder enc(cfg);
  // give the mask embedding a recognizable value
  auto& mask_vec = enc.params().at("embed/mask").value;
  for (int c = 0; c < cfg.model_dim; ++c) mask_vec[c] = 10.0 + c;

  const MolGraph g = synthetic::path_graph(4);
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats;
  const Featurized f = featurize(g, schema, stats);
  model::EncoderInput in =
      model::make_encoder_input(g, f, supports_for(g, cfg), cfg);
  MaskPlan plan;
  plan.nodes = {2};
  apply_mask_plan(in, plan);

  tensor::Tape tape;
  model::BoundEncoder bound = enc.bind(tape, false);
  const std::vector<double> e = bound.input_embeddings(in).values();
  for (int c = 0; c < cfg.model_dim; ++c)
    CHECK(e[2 * cfg.model_dim + c] == doctest::Approx(10.0 + c));
}

TEST_CASE("masked loss: zero decoder weights give log-vocabulary CE sums") {
  const model::ModelConfig cfg = small_config();
  model::Encoder enc(cfg);
  Decoder dec(cfg);
  for (model::Param& p : dec.params().entries())
    std::fill(p.value.begin(), p.value.end(), 0.0);

  const MolGraph g = synthetic::path_graph(8);
  const FeatureSchema schema = FeatureSchema::standard();
  // choose stats so the mass target is exactly zero
  CorpusStats stats;
  stats.mass_mean = element_mass(Element::C);
  stats.mass_std = 1.0;
  const Featurized f = featurize(g, schema, stats);
  model::EncoderInput in =
      model::make_encoder_input(g, f, supports_for(g, cfg), cfg);
  MaskPlan plan;
  plan.nodes = {1, 4};
  plan.edges = {{2, 3}};
  apply_mask_plan(in, plan);

  tensor::Tape tape;
  model::BoundEncoder benc = enc.bind(tape, false);
  BoundDecoder bdec = dec.bind(tape, false);
  const tensor::Tensor states = benc.forward(in);
  const tensor::Tensor loss = bdec.masked_loss(states, in, plan);

  const double node_term = std::log(10.0) + std::log(5.0) + std::log(9.0) +
                           std::log(2.0) + std::log(2.0) + 0.0;
  const double edge_term = std::log(4.0) + std::log(2.0) + std::log(2.0);
  const double expected = (2.0 * node_term + 1.0 * edge_term) / 3.0;
  CHECK(loss.scalar_value() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masked loss matches an independent per-field oracle") {
  const model::ModelConfig cfg = small_config();
  model::Encoder enc(cfg);
  Decoder dec(cfg);
  RngStream rng(9, "mloss");
  const MolGraph g = synthetic::random_molecule(9, rng);
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats = compute_corpus_stats({g});
  const Featurized f = featurize(g, schema, stats);
  model::EncoderInput in =
      model::make_encoder_input(g, f, supports_for(g, cfg), cfg);
  RngStream mrng(10, "mplan");
  MaskPlan plan = sample_mask_plan(g, 0.3, 0.3, mrng);
  REQUIRE_FALSE(plan.empty());
  apply_mask_plan(in, plan);

  tensor::Tape tape;
  model::BoundEncoder benc = enc.bind(tape, false);
  BoundDecoder bdec = dec.bind(tape, false);
  const tensor::Tensor states_t = benc.forward(in);
  const double got = bdec.masked_loss(states_t, in, plan).scalar_value();

  // independent oracle on raw doubles
  const std::vector<double>& states = states_t.values();
  const int d = cfg.model_dim, hid = cfg.decoder_hidden;
  auto pv = [&](const std::string& n) -> const std::vector<double>& {
    return dec.params().at(n).value;
  };
  auto dense = [&](const std::vector<double>& x, int rows, int in_w,
                   const std::vector<double>& w,
                   const std::vector<double>& b, int out_w, bool relu_act) {
    std::vector<double> y(static_cast<std::size_t>(rows) * out_w);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < out_w; ++c) {
        double acc = b[c];
        for (int i = 0; i < in_w; ++i)
          acc += x[static_cast<std::size_t>(r) * in_w + i] *
                 w[static_cast<std::size_t>(i) * out_w + c];
        y[static_cast<std::size_t>(r) * out_w + c] =
            relu_act ? std::max(acc, 0.0) : acc;
      }
    return y;
  };
  auto ce_row = [](const std::vector<double>& logits, int off, int width,
                   int target) {
    double mx = logits[off];
    for (int c = 1; c < width; ++c) mx = std::max(mx, logits[off + c]);
    double denom = 0.0;
    for (int c = 0; c < width; ++c) denom += std::exp(logits[off + c] - mx);
    return std::log(denom) + mx - logits[off + target];
  };
  double node_sum = 0.0;
  {
    const auto hidden = dense(states, g.num_atoms(), d, pv("dec/node/w1"),
                              pv("dec/node/b1"), hid, true);
    for (int node : plan.nodes) {
      std::vector<double> row(hidden.begin() + node * hid,
                              hidden.begin() + (node + 1) * hid);
      double item = 0.0;
      const struct {
        const char* w;
        const char* b;
        int width;
        int target;
      } heads[] = {
          {"dec/node/element_w", "dec/node/element_b", 10,
           in.node_cat[node][kFieldElement]},
          {"dec/node/charge_w", "dec/node/charge_b", 5,
           in.node_cat[node][kFieldCharge]},
          {"dec/node/numh_w", "dec/node/numh_b", 9,
           in.node_cat[node][kFieldNumH]},
          {"dec/node/aromatic_w", "dec/node/aromatic_b", 2,
           in.node_cat[node][kFieldAromatic]},
          {"dec/node/ring_w", "dec/node/ring_b", 2,
           in.node_cat[node][kFieldInRing]},
      };
      for (const auto& hspec : heads) {
        const auto logits =
            dense(row, 1, hid, pv(hspec.w), pv(hspec.b), hspec.width, false);
        item += ce_row(logits, 0, hspec.width, hspec.target);
      }
      const auto mass =
          dense(row, 1, hid, pv("dec/node/mass_w"), pv("dec/node/mass_b"), 1,
                false);
      const double diff = mass[0] - in.mass_z[node];
      item += diff * diff;
      node_sum += item;
    }
  }
  double edge_sum = 0.0;
  for (const auto& [u, vtx] : plan.edges) {
    std::vector<double> pair;
    pair.insert(pair.end(), states.begin() + u * d,
                states.begin() + (u + 1) * d);
    pair.insert(pair.end(), states.begin() + vtx * d,
                states.begin() + (vtx + 1) * d);
    const auto hidden = dense(pair, 1, 2 * d, pv("dec/edge/w1"),
                              pv("dec/edge/b1"), hid, true);
    const model::BondRef& ref = in.bonds.at({u, vtx});
    edge_sum += ce_row(dense(hidden, 1, hid, pv("dec/edge/order_w"),
                             pv("dec/edge/order_b"), 4, false),
                       0, 4, ref.order);
    edge_sum += ce_row(dense(hidden, 1, hid, pv("dec/edge/conj_w"),
                             pv("dec/edge/conj_b"), 2, false),
                       0, 2, ref.conj);
    edge_sum += ce_row(dense(hidden, 1, hid, pv("dec/edge/ring_w"),
                             pv("dec/edge/ring_b"), 2, false),
                       0, 2, ref.ring);
  }
  const double expected =
      (node_sum + edge_sum) /
      static_cast<double>(plan.nodes.size() + plan.edges.size());
  CHECK(got == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("ntxent: orthogonal two-pair batch has a closed form") {
  tensor::Tape tape;
  // two items, views identical, items orthogonal
  tensor::Tensor z1 = tape.constant(
      tensor::Matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
  tensor::Tensor z2 = tape.constant(
      tensor::Matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
  const double loss = ntxent(z1, z2, 0.2).scalar_value();
  const double e5 = std::exp(5.0);
  const double expected = -std::log(e5 / (e5 + 2.0));
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss == doctest::Approx(ntxent_oracle({{1, 0}, {0, 1}},
                                              {{1, 0}, {0, 1}}, 0.2))
                    .epsilon(1e-12));
}

TEST_CASE("ntxent approaches log(2B-1) for huge temperatures") {
  tensor::Tape tape;
  RngStream rng(12, "tau");
  tensor::Matrix m1(2, 3), m2(2, 3);
  for (double& v : m1.data) v = rng.next_uniform(-1, 1);
  for (double& v : m2.data) v = rng.next_uniform(-1, 1);
  const double loss =
      ntxent(tape.constant(m1), tape.constant(m2), 1e3).scalar_value();
  CHECK(std::abs(loss - std::log(3.0)) < 1e-3);
}

TEST_CASE("ntxent is near zero for colinear positives and opposed negatives") {
  tensor::Tape tape;
  tensor::Tensor z1 =
      tape.constant(tensor::Matrix(2, 2, {1.0, 0.0, -1.0, 0.0}));
  tensor::Tensor z2 =
      tape.constant(tensor::Matrix(2, 2, {1.0, 0.0, -1.0, 0.0}));
  CHECK(ntxent(z1, z2, 0.2).scalar_value() < 0.01);
}

TEST_CASE("ntxent equals brute-force enumeration for B = 2..8") {
  RngStream rng(13, "brute");
  for (int b = 2; b <= 8; ++b) {
    std::vector<std::vector<double>> z1, z2;
    tensor::Matrix m1(b, 5), m2(b, 5);
    for (int i = 0; i < b; ++i) {
      std::vector<double> r1, r2;
      for (int dd = 0; dd < 5; ++dd) {
        r1.push_back(rng.next_uniform(-2, 2));
        r2.push_back(rng.next_uniform(-2, 2));
        m1.at(i, dd) = r1.back();
        m2.at(i, dd) = r2.back();
      }
      z1.push_back(r1);
      z2.push_back(r2);
    }
    tensor::Tape tape;
    const double impl =
        ntxent(tape.constant(m1), tape.constant(m2), 0.2).scalar_value();
    const double oracle = ntxent_oracle(z1, z2, 0.2);
    CHECK(std::abs(impl - oracle) < 1e-10);
  }
}

TEST_CASE("ntxent rejects batch size one") {
  tensor::Tape tape;
  tensor::Tensor z1 = tape.constant(tensor::Matrix(1, 3, {1, 2, 3}));
  tensor::Tensor z2 = tape.constant(tensor::Matrix(1, 3, {1, 2, 3}));
  CHECK_THROWS_AS(ntxent(z1, z2, 0.2), ConfigError);
}

TEST_CASE("total loss weighting") {
  CHECK(total_loss(0.0, 0.0) == 0.0);
  CHECK(total_loss(1.0, 2.0) == 2.0);
  CHECK(total_loss(0.3, 0.4) == 0.5);
  tensor::Tape tape;
  CHECK(total_loss(tape.scalar_const(1.0), tape.scalar_const(2.0))
            .scalar_value() == 2.0);
}

TEST_CASE("learning rate schedule: warmup then cosine decay") {
  CHECK(lr_at(0, 10, 100, 1.0, 0.0) == doctest::Approx(0.1));
  CHECK(lr_at(9, 10, 100, 1.0, 0.0) == doctest::Approx(1.0));
  CHECK(lr_at(10, 10, 100, 1.0, 0.0) == doctest::Approx(1.0));
  CHECK(lr_at(55, 10, 100, 1.0, 0.0) ==
        doctest::Approx(0.5 * (1.0 + std::cos(3.14159265358979 * 0.5))));
  CHECK(lr_at(99, 10, 100, 1.0, 0.0) < 0.01);
}

TEST_CASE("pretrain with zero steps leaves the model unchanged") {
  model::ModelConfig cfg = small_config();
  model::Encoder enc(cfg);
  Decoder dec(cfg);
  const std::vector<double> before = enc.params().flatten();
  std::vector<MolGraph> corpus = {synthetic::path_graph(5),
                                  synthetic::path_graph(6)};
  PretrainConfig pc;
  pc.steps = 0;
  pc.batch = 2;
  const PretrainResult r = pretrain(enc, dec, corpus, FeatureSchema::standard(),
                                    compute_corpus_stats(corpus), pc);
  CHECK(r.trace.empty());
  CHECK(enc.params().flatten() == before);
}

TEST_CASE("pretraining loss trends downward on synthetic graphs") {
  model::ModelConfig cfg = small_config();
  cfg.seed = 21;
  model::Encoder enc(cfg);
  Decoder dec(cfg);
  RngStream rng(22, "corpus");
  std::vector<MolGraph> corpus;
  for (int i = 0; i < 64; ++i)
    corpus.push_back(synthetic::random_molecule(rng.next_int(4, 10), rng));
  PretrainConfig pc;
  pc.steps = 200;
  pc.batch = 6;
  pc.peak_lr = 3e-3;
  pc.warmup_steps = 10;
  pc.objective = Objective::kBoth;
  pc.seed = 23;
  const PretrainResult r =
      pretrain(enc, dec, corpus, FeatureSchema::standard(),
               compute_corpus_stats(corpus), pc);
  REQUIRE_FALSE(r.halted_at_step.has_value());
  REQUIRE(static_cast<int>(r.trace.size()) == pc.steps);
  auto smooth = [&](int at) {
    double acc = 0.0;
    for (int i = at; i < at + 5; ++i) acc += r.trace[i].total;
    return acc / 5.0;
  };
  CHECK(smooth(pc.steps - 5) < smooth(0));
}

TEST_CASE("pretraining is deterministic given the seed") {
  model::ModelConfig cfg = small_config();
  std::vector<MolGraph> corpus = {synthetic::path_graph(6),
                                  synthetic::cycle_graph(5),
                                  synthetic::path_graph(4)};
  PretrainConfig pc;
  pc.steps = 8;
  pc.batch = 3;
  pc.seed = 7;
  auto run = [&]() {
    model::Encoder enc(cfg);
    Decoder dec(cfg);
    const PretrainResult r =
        pretrain(enc, dec, corpus, FeatureSchema::standard(),
                 compute_corpus_stats(corpus), pc);
    return std::make_pair(r, enc.params().flatten());
  };
  const auto [r1, p1] = run();
  const auto [r2, p2] = run();
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i)
    CHECK(r1.trace[i].total == r2.trace[i].total);
  CHECK(p1 == p2);
}

TEST_CASE("divergence detector halts on poisoned weights") {
  model::ModelConfig cfg = small_config();
  model::Encoder enc(cfg);
  Decoder dec(cfg);
  for (double& v : enc.params().at("embed/element").value) v = 1e200;
  std::vector<MolGraph> corpus = {synthetic::path_graph(5),
                                  synthetic::path_graph(6)};
  PretrainConfig pc;
  pc.steps = 3;
  pc.batch = 2;
  const PretrainResult r =
      pretrain(enc, dec, corpus, FeatureSchema::standard(),
               compute_corpus_stats(corpus), pc);
  REQUIRE(r.halted_at_step.has_value());
  CHECK(*r.halted_at_step == 0);
  CHECK_FALSE(r.halt_reason.empty());
}

TEST_CASE("finetune overfits a tiny binary task and predicts sanely") {
  model::ModelConfig cfg = small_config();
  cfg.seed = 5;
  model::Encoder enc(cfg);
  Head head(cfg.model_dim, 5);
  // trivially separable: label = has more than 5 atoms
  LabeledDataset train;
  RngStream rng(6, "ft");
  for (int i = 0; i < 24; ++i) {
    const int n = rng.next_bernoulli(0.5) ? 4 : 8;
    train.graphs.push_back(synthetic::random_molecule(n, rng));
    train.labels.push_back(n > 5 ? 1.0 : 0.0);
  }
  FinetuneConfig fc;
  fc.epochs = 30;
  fc.batch = 8;
  fc.lr = 5e-3;
  fc.task = TaskKind::kBinary;
  fc.seed = 8;
  const FinetuneResult r = finetune(enc, head, train,
                                    FeatureSchema::standard(), CorpusStats{},
                                    fc);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  const std::vector<double> scores =
      predict(enc, head, train.graphs, FeatureSchema::standard(),
              CorpusStats{});
  int correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    correct += (scores[i] > 0.0) == (train.labels[i] > 0.5) ? 1 : 0;
  CHECK(correct >= 20);
}
