// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>

#include "cpaformer/checkpoint.hpp"
#include "cpaformer/errors.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/evalstats.hpp"
#include "cpaformer/ssl.hpp"
#include "cpaformer/synthetic.hpp"

using namespace cpaformer;
using namespace cpaformer::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.model_dim = 4;
  cfg.heads = 1;
  cfg.ffn_dim = 8;
  cfg.k = 2;
  cfg.proj_dim = 4;
  cfg.decoder_hidden = 8;
  cfg.seed = 77;
  return cfg;
}

EncoderInput input_for(const MolGraph& g, const ModelConfig& cfg) {
  const FeatureSchema schema = FeatureSchema::standard();
  const CorpusStats stats;
  const Featurized f = featurize(g, schema, stats);
  return make_encoder_input(g, f, ssl::supports_for(g, cfg), cfg);
}

void zero_all_weights(Encoder& enc) {
  for (Param& p : enc.params().entries()) {
    if (p.name.rfind("embed/", 0) == 0) continue;  // keep embeddings
    if (p.name.find("gamma") != std::string::npos) continue;  // keep LN 1
    std::fill(p.value.begin(), p.value.end(), 0.0);
  }
}

std::vector<double> hand_layer_norm(const std::vector<double>& row,
                                    double eps = 1e-5) {
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= row.size();
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= row.size();
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    out[i] = (row[i] - mean) / std::sqrt(var + eps);
  return out;
}

MolGraph relabeled(const MolGraph& g, const std::vector<int>& perm) {
  // perm[old] = new index
  MolGraph out;
  out.id = g.id;
  out.atoms.resize(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const BondRecord& b : g.bonds) {
    BondRecord nb = b;
    nb.u = std::min(perm[b.u], perm[b.v]);
    nb.v = std::max(perm[b.u], perm[b.v]);
    out.bonds.push_back(nb);
  }
  return out;
}

}  // namespace

TEST_CASE("attention logits: pure bias sum on a two-carbon graph") {
  ModelConfig cfg = tiny_config();
  Encoder enc(cfg);
  zero_all_weights(enc);
  enc.params().at("layer0/attn/h0/spd_bias").value[1] = 0.7;
  enc.params().at("layer0/attn/h0/bond_order_bias").value[0] = 0.2;
  enc.params().at("layer0/attn/h0/key_centrality_bias").value[1] = 0.1;
  // zero the embeddings so q = k = 0 exactly
  for (Param& p : enc.params().entries())
    if (p.name.rfind("embed/", 0) == 0)
      std::fill(p.value.begin(), p.value.end(), 0.0);

  const MolGraph p2 = synthetic::path_graph(2);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  bound.forward(input_for(p2, cfg), opts);
  REQUIRE(probe.size() == 2);
  // node 0: slots [0 (self), 1]; both keys have degree bin 1
  CHECK(probe[0].slots == std::vector<int>{0, 1});
  CHECK(probe[0].logits[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(probe[0].logits[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("attention logits equal an independently expanded formula") {
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 6;
  cfg.heads = 2;
  cfg.seed = 1234;
  Encoder enc(cfg);
  // non-trivial bias tables
  RngStream brng(5, "bias_fill");
  for (Param& p : enc.params().entries()) {
    if (p.name.find("bias") != std::string::npos ||
        p.name.find("centrality") != std::string::npos)
      for (double& v : p.value) v = brng.next_uniform(-0.5, 0.5);
  }
  RngStream grng(6, "graph");
  const MolGraph g = synthetic::random_molecule(7, grng);
  const EncoderInput in = input_for(g, cfg);

  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  const std::vector<double> x = bound.input_embeddings(in).values();
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  bound.forward(in, opts);

  const int d = cfg.model_dim, dh = cfg.head_dim();
  auto pval = [&](const std::string& n) -> const std::vector<double>& {
    return enc.params().at(n).value;
  };
  const std::vector<int> deg = degrees(g);
  for (const AttnRecord& rec : probe) {
    if (rec.layer != 0) continue;
    const int m = rec.head, i = rec.node;
    // hand-expanded: a_ij = q.k/sqrt(dh) + b_spd + b_e + b_c(j)
    auto project = [&](const char* w, const char* b, int node,
                       std::vector<double>* out) {
      const auto& wm = pval(std::string("layer0/attn/") + w);
      const auto& bv = pval(std::string("layer0/attn/") + b);
      for (int c = 0; c < d; ++c) {
        double acc = bv[c];
        for (int r = 0; r < d; ++r)
          acc += x[static_cast<std::size_t>(node) * d + r] *
                 wm[static_cast<std::size_t>(r) * d + c];
        out->push_back(acc);
      }
    };
    std::vector<double> qi, kj;
    project("w_q", "b_q", i, &qi);
    const std::string hp = "layer0/attn/h" + std::to_string(m) + "/";
    for (std::size_t p = 0; p < rec.slots.size(); ++p) {
      const int j = rec.slots[p];
      kj.clear();
      project("w_k", "b_k", j, &kj);
      double dot = 0.0;
      for (int c = 0; c < dh; ++c)
        dot += qi[m * dh + c] * kj[m * dh + c];
      double expected = dot / std::sqrt(static_cast<double>(dh));
      expected += pval(hp + "spd_bias")[in.supports[i].slots[p].bin];
      const auto key = std::minmax(i, j);
      const auto bond = in.bonds.find({key.first, key.second});
      if (i != j && bond != in.bonds.end()) {
        expected += pval(hp + "bond_order_bias")[bond->second.order];
        expected += pval(hp + "bond_conj_bias")[bond->second.conj];
        expected += pval(hp + "bond_ring_bias")[bond->second.ring];
      }
      expected += pval(hp + "key_centrality_bias")[topo::degree_bin(deg[j])];
      CHECK(rec.logits[p] == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("cpa head: identical values double under a zero sigmoid gate") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kCpa;
  cfg.gate = GateKind::kSigmoid;
  Encoder enc(cfg);
  zero_all_weights(enc);
  for (Param& p : enc.params().entries())
    if (p.name.rfind("embed/", 0) == 0)
      std::fill(p.value.begin(), p.value.end(), 0.0);
  const std::vector<double> v = {0.3, -0.2, 0.5, 0.1};
  enc.params().at("layer0/attn/b_v").value = v;

  const MolGraph p2 = synthetic::path_graph(2);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  bound.forward(input_for(p2, cfg), opts);
  // softmax path gives v; the gated channel adds 0.5 * 2v; total 2v
  for (const AttnRecord& rec : probe)
    for (int c = 0; c < 4; ++c)
      CHECK(rec.head_out[c] == doctest::Approx(2.0 * v[c]).epsilon(1e-14));
}

TEST_CASE("cpa separates the C6 / 2xC3 pair at K=2 while softmax collapses") {
  const MolGraph c6 = synthetic::cycle_graph(6);
  const MolGraph c3x2 = synthetic::disjoint_union(
      {synthetic::cycle_graph(3), synthetic::cycle_graph(3)});
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.k = 2;
  cfg.seed = 99;

  auto pooled = [&](AttentionVariant variant) {
    ModelConfig c = cfg;
    c.variant = variant;
    Encoder enc(c);
    tensor::Tape tape;
    BoundEncoder bound = enc.bind(tape, false);
    const std::vector<double> a =
        bound.readout(bound.forward(input_for(c6, c))).values();
    const std::vector<double> b =
        bound.readout(bound.forward(input_for(c3x2, c))).values();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      diff = std::max(diff, std::abs(a[i] - b[i]));
    return diff;
  };
  CHECK(pooled(AttentionVariant::kSoftmaxOnly) < 1e-12);
  CHECK(pooled(AttentionVariant::kNormCpa) < 1e-12);
  CHECK(pooled(AttentionVariant::kGlobalSumCpa) < 1e-12);  // N matches
  CHECK(pooled(AttentionVariant::kCpa) > 1e-8);
  CHECK(pooled(AttentionVariant::kSumMean) > 1e-8);
}

TEST_CASE("zero-weight encoder layer reduces to stacked layer norms") {
  ModelConfig cfg = tiny_config();
  Encoder enc(cfg);
  zero_all_weights(enc);
  const MolGraph p2 = synthetic::path_graph(2);
  const EncoderInput in = input_for(p2, cfg);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  const std::vector<double> x = bound.input_embeddings(in).values();
  const std::vector<double> h = bound.forward(in).values();
  const int d = cfg.model_dim;
  for (int node = 0; node < 2; ++node) {
    std::vector<double> row(x.begin() + node * d, x.begin() + (node + 1) * d);
    const std::vector<double> expected = hand_layer_norm(hand_layer_norm(row));
    for (int c = 0; c < d; ++c)
      CHECK(h[node * d + c] == doctest::Approx(expected[c]).epsilon(1e-12));
  }
}

TEST_CASE("single-node graph: self support, unit attention weight") {
  ModelConfig cfg = tiny_config();
  Encoder enc(cfg);
  const MolGraph g = synthetic::path_graph(1);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  const tensor::Tensor states = bound.forward(input_for(g, cfg), opts);
  CHECK(states.rows() == 1);
  REQUIRE(probe.size() == 1);
  CHECK(probe[0].alphas == std::vector<double>{1.0});
}

TEST_CASE("permutation equivariance of the encoder") {
  for (const int k : {2, kGlobalHops}) {
    ModelConfig cfg = tiny_config();
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.k = k;
    cfg.variant = AttentionVariant::kCpa;
    Encoder enc(cfg);
    RngStream rng(31, "perm");
    const MolGraph g = synthetic::random_molecule(9, rng);
    std::vector<int> perm(g.num_atoms());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const MolGraph gp = relabeled(g, perm);

    tensor::Tape tape;
    BoundEncoder bound = enc.bind(tape, false);
    const std::vector<double> h = bound.forward(input_for(g, cfg)).values();
    const std::vector<double> hp = bound.forward(input_for(gp, cfg)).values();
    const int d = cfg.model_dim;
    for (int i = 0; i < g.num_atoms(); ++i)
      for (int c = 0; c < d; ++c)
        CHECK(h[i * d + c] ==
              doctest::Approx(hp[perm[i] * d + c]).epsilon(1e-9));
  }
}

TEST_CASE("linear gate with zero weights reduces bitwise to softmax-only") {
  RngStream rng(15, "bitwise");
  for (int trial = 0; trial < 5; ++trial) {
    const MolGraph g = synthetic::random_molecule(rng.next_int(2, 12), rng);
    ModelConfig cfg = tiny_config();
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.seed = 1000 + trial;

    cfg.variant = AttentionVariant::kSoftmaxOnly;
    Encoder soft(cfg);
    cfg.variant = AttentionVariant::kCpa;
    cfg.gate = GateKind::kLinear;
    Encoder cpa(cfg);
    for (Param& p : cpa.params().entries())
      if (p.name.find("w_gate") != std::string::npos)
        std::fill(p.value.begin(), p.value.end(), 0.0);

    tensor::Tape t1, t2;
    const std::vector<double> a =
        soft.bind(t1, false).forward(input_for(g, cfg)).values();
    const std::vector<double> b =
        cpa.bind(t2, false).forward(input_for(g, cfg)).values();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("global attention equals K = diameter on a connected graph") {
  RngStream rng(8, "diam");
  const MolGraph g = synthetic::random_topology(9, 2, rng);
  const topo::SpdMatrix spd = topo::all_pairs_spd(g);
  int diam = 1;
  for (int i = 0; i < g.num_atoms(); ++i)
    for (int j = 0; j < g.num_atoms(); ++j)
      diam = std::max(diam, spd.at(i, j));

  ModelConfig khop = tiny_config();
  khop.k = diam;
  ModelConfig global = khop;
  global.k = kGlobalHops;
  global.spd_clip = diam;

  Encoder e1(khop), e2(global);
  tensor::Tape t1, t2;
  const std::vector<double> a =
      e1.bind(t1, false).forward(input_for(g, khop)).values();
  const std::vector<double> b =
      e2.bind(t2, false).forward(input_for(g, global)).values();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("learned scaling with zero weights halves the merged heads") {
  RngStream rng(12, "halve");
  const MolGraph g = synthetic::random_molecule(6, rng);
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.seed = 4242;

  cfg.variant = AttentionVariant::kLearnedScaling;
  Encoder scaled(cfg);
  for (Param& p : scaled.params().entries())
    if (p.name.find("w_gamma") != std::string::npos)
      std::fill(p.value.begin(), p.value.end(), 0.0);

  cfg.variant = AttentionVariant::kSoftmaxOnly;
  Encoder soft(cfg);
  for (Param& p : soft.params().entries())
    if (p.name.find("attn/w_o") != std::string::npos)
      for (double& v : p.value) v *= 0.5;  // exact power-of-two scaling

  tensor::Tape t1, t2;
  const std::vector<double> a =
      scaled.bind(t1, false).forward(input_for(g, cfg)).values();
  cfg.variant = AttentionVariant::kSoftmaxOnly;
  const std::vector<double> b =
      soft.bind(t2, false).forward(input_for(g, cfg)).values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("learned temperature with zero weights keeps uniform logits uniform") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kLearnedTemperature;
  Encoder enc(cfg);
  zero_all_weights(enc);
  for (Param& p : enc.params().entries())
    if (p.name.rfind("embed/", 0) == 0)
      std::fill(p.value.begin(), p.value.end(), 0.0);
  const MolGraph g = synthetic::path_graph(3);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  bound.forward(input_for(g, cfg), opts);
  for (const AttnRecord& rec : probe) {
    const double uniform = 1.0 / rec.alphas.size();
    for (double a : rec.alphas)
      CHECK(a == doctest::Approx(uniform).epsilon(1e-12));
  }
}

TEST_CASE("explicit size input with an identity projection matches baseline") {
  RngStream rng(18, "esize");
  const MolGraph g = synthetic::random_molecule(8, rng);
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.seed = 777;
  cfg.variant = AttentionVariant::kExplicitSizeInput;
  Encoder esize(cfg);
  {
    Param& p = esize.params().at("embed/size_proj");
    std::fill(p.value.begin(), p.value.end(), 0.0);
    for (int i = 0; i < cfg.model_dim; ++i)
      p.value[static_cast<std::size_t>(i) * cfg.model_dim + i] = 1.0;
  }
  cfg.variant = AttentionVariant::kSoftmaxOnly;
  Encoder soft(cfg);
  tensor::Tape t1, t2;
  cfg.variant = AttentionVariant::kExplicitSizeInput;
  const std::vector<double> a =
      esize.bind(t1, false).forward(input_for(g, cfg)).values();
  cfg.variant = AttentionVariant::kSoftmaxOnly;
  const std::vector<double> b =
      soft.bind(t2, false).forward(input_for(g, cfg)).values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("scalar size bias adds [N; |S|] W_b after attention") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kScalarSizeBias;
  cfg.seed = 31337;
  Encoder enc(cfg);
  zero_all_weights(enc);
  // restore a non-zero size bias
  Param& wb = enc.params().at("layer0/size_bias");
  RngStream rng(3, "wb");
  for (double& v : wb.value) v = rng.next_uniform(-0.4, 0.4);

  const MolGraph g = synthetic::path_graph(3);
  const EncoderInput in = input_for(g, cfg);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  const std::vector<double> x = bound.input_embeddings(in).values();
  const std::vector<double> h = bound.forward(in).values();
  const int d = cfg.model_dim;
  for (int node = 0; node < 3; ++node) {
    const double big_n = 3.0;
    const double supp = in.supports[node].actual_size;
    std::vector<double> u(d, 0.0);
    for (int c = 0; c < d; ++c)
      u[c] = big_n * wb.value[c] + supp * wb.value[d + c];
    std::vector<double> row(d);
    for (int c = 0; c < d; ++c) row[c] = x[node * d + c] + u[c];
    const std::vector<double> expected =
        hand_layer_norm(hand_layer_norm(row));
    for (int c = 0; c < d; ++c)
      CHECK(h[node * d + c] == doctest::Approx(expected[c]).epsilon(1e-10));
  }
}

TEST_CASE("parameter counts: the CPA gate is exactly L*M*dh^2 extra") {
  ModelConfig cfg = tiny_config();
  cfg.layers = 3;
  cfg.model_dim = 12;
  cfg.heads = 3;
  cfg.variant = AttentionVariant::kSoftmaxOnly;
  const std::int64_t base = count_params(cfg);
  cfg.variant = AttentionVariant::kCpa;
  const std::int64_t cpa = count_params(cfg);
  const int dh = cfg.head_dim();
  CHECK(cpa - base == static_cast<std::int64_t>(cfg.layers) * cfg.heads * dh *
                          dh);
  Encoder enc(cfg);
  CHECK(enc.num_params() == cpa);
}

TEST_CASE("match_capacity finds the closest ffn width") {
  ModelConfig cfg = tiny_config();
  const std::int64_t own = count_params(cfg);
  CHECK(match_capacity(cfg, own) == cfg.ffn_dim);

  ModelConfig wider = cfg;
  wider.ffn_dim = 20;
  CHECK(match_capacity(cfg, count_params(wider)) == 20);

  // halfway between widths F and F+1 resolves to the smaller width
  ModelConfig f1 = cfg, f2 = cfg;
  f1.ffn_dim = 10;
  f2.ffn_dim = 11;
  const std::int64_t mid = (count_params(f1) + count_params(f2)) / 2;
  const int picked = match_capacity(cfg, mid);
  CHECK(picked == 10);

  CHECK_THROWS_AS(match_capacity(cfg, 1), ConfigError);
}

TEST_CASE("full-scale CPA parameter overhead stays around one percent") {
  ModelConfig cfg;
  cfg.layers = 12;
  cfg.model_dim = 512;
  cfg.heads = 8;
  cfg.ffn_dim = 2048;
  cfg.proj_dim = 512;
  cfg.variant = AttentionVariant::kSoftmaxOnly;
  const std::int64_t base = count_params(cfg);
  cfg.variant = AttentionVariant::kCpa;
  const std::int64_t cpa = count_params(cfg);
  const double ratio = static_cast<double>(cpa - base) / base;
  CHECK(ratio > 0.0);
  CHECK(ratio < 0.02);
}

TEST_CASE("checkpoint roundtrip is bit exact") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kCpa;
  Encoder enc(cfg);
  Checkpoint ckpt;
  ckpt.config_json = config_to_json(cfg);
  ckpt.sections.emplace_back("encoder", enc.params());
  const std::string path = "/tmp/cpaformer_test_ckpt.bin";
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  std::remove(path.c_str());
  CHECK(back.config_json == ckpt.config_json);
  REQUIRE(back.sections.size() == 1);
  const ParamStore& loaded = back.sections[0].second;
  for (const Param& p : enc.params().entries()) {
    const Param& q = loaded.at(p.name);
    REQUIRE(q.value.size() == p.value.size());
    for (std::size_t i = 0; i < p.value.size(); ++i)
      CHECK(q.value[i] == p.value[i]);
  }
  const ModelConfig parsed = config_from_json(back.config_json);
  CHECK(parsed.model_dim == cfg.model_dim);
  CHECK(parsed.variant == cfg.variant);
}

TEST_CASE("config json rejects unknown keys") {
  CHECK_THROWS_AS(config_from_json("{\"flux_capacitor\": 1}"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{\"model_dim\": 7, \"heads\": 2}"),
                  ConfigError);  // not divisible
  const ModelConfig cfg = config_from_json("{\"k\": \"global\"}");
  CHECK(cfg.k == kGlobalHops);
}

TEST_CASE("channel norm probe: zero linear gate gives all-zero norms") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kCpa;
  cfg.gate = GateKind::kLinear;
  Encoder enc(cfg);
  for (Param& p : enc.params().entries())
    if (p.name.find("w_gate") != std::string::npos)
      std::fill(p.value.begin(), p.value.end(), 0.0);
  RngStream rng(77, "probe");
  const MolGraph g = synthetic::random_molecule(7, rng);
  const auto probe = cpa_channel_norm_probe(enc, input_for(g, cfg));
  REQUIRE(probe.size() == 7);
  for (const ProbeSample& s : probe) CHECK(s.channel_norm == 0.0);
}

TEST_CASE("channel norm grows with support size on star graphs") {
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.k = 2;
  cfg.variant = AttentionVariant::kCpa;
  cfg.seed = 2;
  Encoder enc(cfg);
  double prev_norm = -1.0;
  for (int arity = 2; arity <= 8; arity += 2) {
    const MolGraph star = synthetic::star_graph(arity);
    const auto probe = cpa_channel_norm_probe(enc, input_for(star, cfg));
    // leaf sample: constant degree 1, support grows with arity
    const ProbeSample& leaf = probe[1];
    CHECK(leaf.degree == 1);
    CHECK(leaf.support_size == arity + 1);
    CHECK(leaf.channel_norm > prev_norm);
    prev_norm = leaf.channel_norm;
  }
}

TEST_CASE("self attention weight is always positive") {
  RngStream rng(55, "selfweight");
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 8;
  cfg.heads = 2;
  Encoder enc(cfg);
  for (int trial = 0; trial < 5; ++trial) {
    const MolGraph g = synthetic::random_molecule(rng.next_int(2, 10), rng);
    tensor::Tape tape;
    BoundEncoder bound = enc.bind(tape, false);
    std::vector<AttnRecord> probe;
    ForwardOptions opts;
    opts.attn_probe = &probe;
    bound.forward(input_for(g, cfg), opts);
    for (const AttnRecord& rec : probe) {
      REQUIRE(rec.slots[0] == rec.node);  // self comes first
      CHECK(rec.alphas[0] > 0.0);
    }
  }
}

TEST_CASE("path-edge bias: logits carry the per-type path expectation") {
  ModelConfig cfg = tiny_config();
  cfg.k = kGlobalHops;
  cfg.spd_clip = 20;
  cfg.path_edge_bias = true;
  Encoder enc(cfg);
  zero_all_weights(enc);
  for (Param& p : enc.params().entries())
    if (p.name.rfind("embed/", 0) == 0)
      std::fill(p.value.begin(), p.value.end(), 0.0);
  // weight: 0.4 per single bond traversed
  enc.params().at("layer0/attn/h0/path_bias")
      .value[static_cast<int>(BondOrder::Single)] = 0.4;

  const MolGraph p3 = synthetic::path_graph(3);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<AttnRecord> probe;
  ForwardOptions opts;
  opts.attn_probe = &probe;
  bound.forward(input_for(p3, cfg), opts);
  // node 0, support sorted by distance: slots [0, 1, 2] at distances 0,1,2
  const AttnRecord& rec = probe[0];
  REQUIRE(rec.slots == std::vector<int>{0, 1, 2});
  CHECK(rec.logits[0] == doctest::Approx(0.0));        // self: no path
  CHECK(rec.logits[1] == doctest::Approx(0.4));        // one single bond
  CHECK(rec.logits[2] == doctest::Approx(0.8));        // two single bonds
}

TEST_CASE("path-edge bias gradients pass a finite-difference check") {
  ModelConfig cfg = tiny_config();
  cfg.k = kGlobalHops;
  cfg.spd_clip = 6;
  cfg.path_edge_bias = true;
  cfg.seed = 3;
  Encoder enc(cfg);
  RngStream rng(44, "pathgrad");
  const MolGraph g = synthetic::random_molecule(6, rng);
  const EncoderInput in = input_for(g, cfg);

  const std::vector<double> theta = enc.params().flatten();
  auto eval = [&](const std::vector<double>& th, std::vector<double>* grad) {
    enc.params().unflatten(th);
    tensor::Tape tape;
    if (grad == nullptr) tape.set_grad_enabled(false);
    BoundEncoder bound = enc.bind(tape, grad != nullptr);
    tensor::Tensor loss =
        tensor::sum_all(bound.readout(bound.forward(in)));
    if (grad != nullptr) {
      tape.backward(loss);
      grad->clear();
      const auto gm = bound.grads();
      for (const Param& p : enc.params().entries()) {
        const auto& v = gm.at(p.name);
        grad->insert(grad->end(), v.begin(), v.end());
      }
    }
    return loss.scalar_value();
  };
  const tensor::GradCheckResult r = tensor::grad_check(eval, theta, 1e-5);
  CHECK(r.max_rel_error < 1e-5);
  enc.params().unflatten(theta);
}

TEST_CASE("readout: mean pooling and the contrastive projection") {
  ModelConfig cfg = tiny_config();
  Encoder enc(cfg);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  // identical node states pool to that state
  tensor::Tensor same = tape.constant(
      tensor::Matrix(3, 4, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4}));
  const std::vector<double> pooled = bound.readout(same).values();
  CHECK(pooled == std::vector<double>{1, 2, 3, 4});
  // opposite states cancel
  tensor::Tensor anti =
      tape.constant(tensor::Matrix(2, 4, {1, -2, 3, -4, -1, 2, -3, 4}));
  for (double v : bound.readout(anti).values()) CHECK(v == 0.0);
  // random states match an independent mean
  RngStream rng(3, "readout");
  tensor::Matrix m(5, 4);
  for (double& v : m.data) v = rng.next_uniform(-1, 1);
  const std::vector<double> got =
      bound.readout(tape.constant(m)).values();
  for (int c = 0; c < 4; ++c) {
    double acc = 0.0;
    for (int r = 0; r < 5; ++r) acc += m.at(r, c);
    CHECK(got[c] == doctest::Approx(acc / 5).epsilon(1e-12));
  }
  // projection is Linear -> ReLU -> Linear with the registered widths
  const tensor::Tensor z = bound.project(bound.readout(same));
  CHECK(z.rows() == 1);
  CHECK(z.cols() == cfg.proj_dim);
}

TEST_CASE("explicit size input appends raw N and |S(i)| scalars") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kExplicitSizeInput;
  Encoder enc(cfg);
  const int d = cfg.model_dim;
  // zero the projection except the rows reading the two appended scalars
  Param& proj = enc.params().at("embed/size_proj");
  std::fill(proj.value.begin(), proj.value.end(), 0.0);
  proj.value[static_cast<std::size_t>(d) * d + 0] = 1.0;      // N -> col 0
  proj.value[static_cast<std::size_t>(d + 1) * d + 1] = 1.0;  // |S| -> col 1

  // a 10-node star: N = 10, leaf supports at k=2 cover the whole star
  const MolGraph star = synthetic::star_graph(9);
  const EncoderInput in = input_for(star, cfg);
  tensor::Tape tape;
  BoundEncoder bound = enc.bind(tape, false);
  const std::vector<double> e = bound.input_embeddings(in).values();
  for (int node = 0; node < star.num_atoms(); ++node) {
    CHECK(e[node * d + 0] == 10.0);  // raw N, not log
    CHECK(e[node * d + 1] ==
          static_cast<double>(in.supports[node].actual_size));
  }
}

TEST_CASE("probe on single-node graphs leaves the correlation undefined") {
  ModelConfig cfg = tiny_config();
  cfg.variant = AttentionVariant::kCpa;
  Encoder enc(cfg);
  std::vector<double> norms, sizes, degrees;
  for (int t = 0; t < 6; ++t) {
    MolGraph g = synthetic::path_graph(1);
    g.atoms[0].element = t % 2 == 0 ? Element::C : Element::N;
    g.atoms[0].mass = element_mass(g.atoms[0].element);
    g.atoms[0].num_h = t % 2 == 0 ? 4 : 3;
    for (const ProbeSample& s :
         model::cpa_channel_norm_probe(enc, input_for(g, cfg))) {
      norms.push_back(s.channel_norm);
      sizes.push_back(s.support_size);
      degrees.push_back(s.degree);
    }
  }
  // |S(i)| is constant 1: the partial correlation is undefined (flagged)
  CHECK_THROWS_AS(cpaformer::stats::partial_correlation(norms, sizes,
                                                        degrees),
                  cpaformer::NumericError);
}
