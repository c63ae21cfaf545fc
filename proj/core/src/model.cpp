// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cpaformer/errors.hpp"

namespace cpaformer::model {

namespace {

namespace ts = cpaformer::tensor;

struct VariantName {
  AttentionVariant v;
  const char* name;
};
constexpr VariantName kVariantNames[] = {
    {AttentionVariant::kSoftmaxOnly, "softmax_only"},
    {AttentionVariant::kCpa, "cpa"},
    {AttentionVariant::kNormCpa, "norm_cpa"},
    {AttentionVariant::kGlobalSumCpa, "global_sum_cpa"},
    {AttentionVariant::kScalarSizeBias, "scalar_size_bias"},
    {AttentionVariant::kLearnedScaling, "learned_scaling"},
    {AttentionVariant::kLearnedTemperature, "learned_temperature"},
    {AttentionVariant::kSumMean, "sum_mean"},
    {AttentionVariant::kExplicitSizeInput, "explicit_size_input"},
};

enum class InitKind { kGlorot, kZero, kOne };

}  // namespace

const char* variant_name(AttentionVariant v) {
  for (const auto& e : kVariantNames)
    if (e.v == v) return e.name;
  return "?";
}

AttentionVariant variant_from_name(const std::string& name) {
  for (const auto& e : kVariantNames)
    if (name == e.name) return e.v;
  throw ConfigError("unknown attention variant '" + name + "'");
}

const char* gate_name(GateKind g) {
  switch (g) {
    case GateKind::kSigmoid: return "sigmoid";
    case GateKind::kLinear: return "linear";
    case GateKind::kTanh: return "tanh";
  }
  return "?";
}

GateKind gate_from_name(const std::string& name) {
  if (name == "sigmoid") return GateKind::kSigmoid;
  if (name == "linear") return GateKind::kLinear;
  if (name == "tanh") return GateKind::kTanh;
  throw ConfigError("unknown gate kind '" + name + "'");
}

bool variant_has_gate(AttentionVariant v) {
  return v == AttentionVariant::kCpa || v == AttentionVariant::kNormCpa ||
         v == AttentionVariant::kGlobalSumCpa;
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (model_dim < 1 || heads < 1 || model_dim % heads != 0)
    throw ConfigError("model_dim must be a positive multiple of heads");
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
  if (k != kGlobalHops && k < 1)
    throw ConfigError("hop radius must be >= 1 or global");
  if (k == kGlobalHops && spd_clip < 1)
    throw ConfigError("spd_clip must be >= 1 in global mode");
  if (path_edge_bias && k != kGlobalHops)
    throw ConfigError("path-edge bias requires global attention");
  if (proj_dim < 1 || decoder_hidden < 1)
    throw ConfigError("projection/decoder widths must be >= 1");
}

// ---- ParamStore ------------------------------------------------------------

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name))
    throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back(
      Param{name, rows, cols,
            std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)});
  return entries_.back();
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

bool ParamStore::has(const std::string& name) const {
  return index_.count(name) > 0;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const Param& p : entries_) n += static_cast<std::int64_t>(p.rows) * p.cols;
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(total_size()));
  for (const Param& p : entries_)
    flat.insert(flat.end(), p.value.begin(), p.value.end());
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  std::size_t off = 0;
  for (Param& p : entries_) {
    if (off + p.value.size() > flat.size())
      throw ConfigError("flat parameter vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + p.value.size(),
              p.value.begin());
    off += p.value.size();
  }
  if (off != flat.size())
    throw ConfigError("flat parameter vector length mismatch");
}

// ---- parameter registry ----------------------------------------------------

namespace {

/// Single source of truth for the encoder parameter set. Both allocation
/// and exact counting walk this list.
void for_each_encoder_param(
    const ModelConfig& cfg,
    const std::function<void(const std::string&, int, int, InitKind)>& fn) {
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();
  const FeatureSchema schema = FeatureSchema::standard();
  fn("embed/element", schema.node_vocab[kFieldElement], d, InitKind::kGlorot);
  fn("embed/degree", schema.node_vocab[kFieldDegreeBin], d, InitKind::kGlorot);
  fn("embed/charge", schema.node_vocab[kFieldCharge], d, InitKind::kGlorot);
  fn("embed/numh", schema.node_vocab[kFieldNumH], d, InitKind::kGlorot);
  fn("embed/aromatic", schema.node_vocab[kFieldAromatic], d,
     InitKind::kGlorot);
  fn("embed/ring", schema.node_vocab[kFieldInRing], d, InitKind::kGlorot);
  fn("embed/mass", 1, d, InitKind::kGlorot);
  fn("embed/mask", 1, d, InitKind::kZero);
  if (cfg.variant == AttentionVariant::kExplicitSizeInput)
    fn("embed/size_proj", d + 2, d, InitKind::kGlorot);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = "layer" + std::to_string(l) + "/";
    fn(lp + "attn/w_q", d, d, InitKind::kGlorot);
    fn(lp + "attn/b_q", 1, d, InitKind::kZero);
    fn(lp + "attn/w_k", d, d, InitKind::kGlorot);
    fn(lp + "attn/b_k", 1, d, InitKind::kZero);
    fn(lp + "attn/w_v", d, d, InitKind::kGlorot);
    fn(lp + "attn/b_v", 1, d, InitKind::kZero);
    fn(lp + "attn/w_o", d, d, InitKind::kGlorot);
    fn(lp + "attn/b_o", 1, d, InitKind::kZero);
    for (int m = 0; m < cfg.heads; ++m) {
      const std::string hp = lp + "attn/h" + std::to_string(m) + "/";
      fn(hp + "spd_bias", cfg.spd_bins(), 1, InitKind::kZero);
      if (cfg.path_edge_bias) {
        fn(hp + "path_bias", kNumBondOrders, 1, InitKind::kZero);
      } else {
        fn(hp + "bond_order_bias", kNumBondOrders, 1, InitKind::kZero);
        fn(hp + "bond_conj_bias", 2, 1, InitKind::kZero);
        fn(hp + "bond_ring_bias", 2, 1, InitKind::kZero);
      }
      fn(hp + "bond_mask_bias", 1, 1, InitKind::kZero);
      if (cfg.key_centrality_bias)
        fn(hp + "key_centrality_bias", 16, 1, InitKind::kZero);
      if (variant_has_gate(cfg.variant))
        fn(hp + "w_gate", dh, dh, InitKind::kGlorot);
      if (cfg.variant == AttentionVariant::kLearnedTemperature)
        fn(hp + "w_temp", dh + 2, 1, InitKind::kGlorot);
    }
    if (cfg.layer_centrality)
      fn(lp + "centrality", 16, d, InitKind::kZero);
    if (cfg.variant == AttentionVariant::kScalarSizeBias)
      fn(lp + "size_bias", 2, d, InitKind::kGlorot);
    if (cfg.variant == AttentionVariant::kLearnedScaling)
      fn(lp + "w_gamma", d + 2, 1, InitKind::kGlorot);
    fn(lp + "ln1/gamma", 1, d, InitKind::kOne);
    fn(lp + "ln1/beta", 1, d, InitKind::kZero);
    fn(lp + "ffn/w1", d, cfg.ffn_dim, InitKind::kGlorot);
    fn(lp + "ffn/b1", 1, cfg.ffn_dim, InitKind::kZero);
    fn(lp + "ffn/w2", cfg.ffn_dim, d, InitKind::kGlorot);
    fn(lp + "ffn/b2", 1, d, InitKind::kZero);
    fn(lp + "ln2/gamma", 1, d, InitKind::kOne);
    fn(lp + "ln2/beta", 1, d, InitKind::kZero);
  }
  fn("readout/proj/w1", d, d, InitKind::kGlorot);
  fn("readout/proj/b1", 1, d, InitKind::kZero);
  fn("readout/proj/w2", d, cfg.proj_dim, InitKind::kGlorot);
  fn("readout/proj/b2", 1, cfg.proj_dim, InitKind::kZero);
}

void init_param(Param& p, InitKind kind, std::uint64_t seed,
                double init_scale) {
  switch (kind) {
    case InitKind::kZero:
      break;
    case InitKind::kOne:
      std::fill(p.value.begin(), p.value.end(), 1.0);
      break;
    case InitKind::kGlorot: {
      RngStream rng(seed, "init/" + p.name);
      const double a =
          std::sqrt(6.0 / (p.rows + p.cols)) * init_scale;
      for (double& v : p.value) v = rng.next_uniform(-a, a);
      break;
    }
  }
}

}  // namespace

// ---- encoder input ---------------------------------------------------------

void EncoderInput::mark_node_masked(int node) {
  if (node_masked.empty()) node_masked.assign(n, 0);
  node_masked[node] = 1;
}

void EncoderInput::mark_bond_masked(int u, int v) {
  auto it = bonds.find({std::min(u, v), std::max(u, v)});
  if (it == bonds.end())
    throw ConfigError("cannot mask a bond that does not exist");
  it->second.masked = true;
}

EncoderInput make_encoder_input(const MolGraph& g, const Featurized& f,
                                const topo::SupportSets& supports,
                                const ModelConfig& cfg) {
  EncoderInput in;
  in.n = g.num_atoms();
  in.graph_size = g.num_atoms();
  in.node_cat = f.node_cat;
  in.mass_z = f.mass_z;
  in.degree_raw = degrees(g);
  in.supports.resize(in.n);
  for (int i = 0; i < in.n; ++i) {
    NodeSupport& s = in.supports[i];
    s.actual_size = supports.size_of(i);
    s.slots.reserve(supports.sets[i].size());
    for (const topo::SupportEntry& e : supports.sets[i])
      s.slots.push_back({e.node, e.bin, true});
  }
  for (const auto& [key, ef] : f.edges)
    in.bonds[key] = BondRef{ef.order, ef.conjugated, ef.in_ring, false};
  if (cfg.path_edge_bias) {
    const topo::SpdMatrix spd = topo::all_pairs_spd(g);
    const topo::PathEdgeFeatures pf =
        topo::shortest_path_edge_features(g, spd);
    in.path_feats.resize(in.n);
    for (int i = 0; i < in.n; ++i) {
      for (const SupportSlot& slot : in.supports[i].slots)
        in.path_feats[i].push_back(pf.at(i, slot.node));
    }
  }
  return in;
}

// ---- encoder ---------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for_each_encoder_param(
      cfg_, [this](const std::string& name, int rows, int cols,
                   InitKind kind) {
        Param& p = params_.add(name, rows, cols);
        init_param(p, kind, cfg_.seed, cfg_.init_scale);
      });
}

BoundEncoder Encoder::bind(tensor::Tape& tape, bool trainable) const {
  BoundEncoder b;
  b.enc_ = this;
  b.tape_ = &tape;
  for (const Param& p : params_.entries()) {
    b.leaves_.emplace(
        p.name,
        tape.leaf(ts::Matrix(p.rows, p.cols, p.value), trainable));
  }
  return b;
}

const ModelConfig& BoundEncoder::config() const { return enc_->config(); }

ts::Tensor BoundEncoder::param(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end())
    throw ConfigError("parameter '" + name + "' not bound");
  return it->second;
}

std::map<std::string, std::vector<double>> BoundEncoder::grads() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, leaf] : leaves_) out[name] = tape_->grad_of(leaf);
  return out;
}

ts::Tensor BoundEncoder::input_embeddings(const EncoderInput& in) const {
  ts::Tape& tp = *tape_;
  const int n = in.n;
  std::vector<int> el(n), deg(n), chg(n), nh(n), ar(n), ring(n);
  for (int i = 0; i < n; ++i) {
    el[i] = in.node_cat[i][kFieldElement];
    deg[i] = in.node_cat[i][kFieldDegreeBin];
    chg[i] = in.node_cat[i][kFieldCharge];
    nh[i] = in.node_cat[i][kFieldNumH];
    ar[i] = in.node_cat[i][kFieldAromatic];
    ring[i] = in.node_cat[i][kFieldInRing];
  }
  ts::Tensor e = ts::gather_rows(param("embed/element"), el);
  e = ts::add(e, ts::gather_rows(param("embed/degree"), deg));
  e = ts::add(e, ts::gather_rows(param("embed/charge"), chg));
  e = ts::add(e, ts::gather_rows(param("embed/numh"), nh));
  e = ts::add(e, ts::gather_rows(param("embed/aromatic"), ar));
  e = ts::add(e, ts::gather_rows(param("embed/ring"), ring));
  ts::Tensor mass_col = tp.constant(ts::Matrix::col_vector(in.mass_z));
  e = ts::add(e, ts::matmul(mass_col, param("embed/mass")));

  if (!in.node_masked.empty()) {
    std::vector<double> keep(n, 1.0), masked(n, 0.0);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      if (in.node_masked[i]) {
        keep[i] = 0.0;
        masked[i] = 1.0;
        any = true;
      }
    }
    if (any) {
      ts::Tensor keep_col = tp.constant(ts::Matrix::col_vector(keep));
      ts::Tensor mask_col = tp.constant(ts::Matrix::col_vector(masked));
      e = ts::add(ts::scale_rows(e, keep_col),
                  ts::matmul(mask_col, param("embed/mask")));
    }
  }

  if (enc_->config().variant == AttentionVariant::kExplicitSizeInput) {
    std::vector<double> big_n(n), supp(n);
    for (int i = 0; i < n; ++i) {
      big_n[i] = static_cast<double>(in.graph_size);
      supp[i] = static_cast<double>(in.supports[i].actual_size);
    }
    ts::Tensor sizes = ts::concat_cols(
        {tp.constant(ts::Matrix::col_vector(big_n)),
         tp.constant(ts::Matrix::col_vector(supp))});
    e = ts::matmul(ts::concat_cols({e, sizes}), param("embed/size_proj"));
  }
  return e;
}

namespace {

ts::Tensor apply_gate(GateKind kind, const ts::Tensor& pre) {
  switch (kind) {
    case GateKind::kSigmoid: return ts::sigmoid(pre);
    case GateKind::kLinear: return pre;
    case GateKind::kTanh: return ts::tanh(pre);
  }
  return pre;
}

double l2_norm(const std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

}  // namespace

ts::Tensor BoundEncoder::forward(const EncoderInput& in,
                                 const ForwardOptions& opts) const {
  const ModelConfig& cfg = enc_->config();
  ts::Tape& tp = *tape_;
  const int n = in.n;
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool training = opts.training && cfg.dropout > 0.0;
  if (training && opts.rng == nullptr)
    throw ConfigError("training forward requires an rng stream");

  if (static_cast<int>(in.supports.size()) != n ||
      static_cast<int>(in.node_cat.size()) != n)
    throw ConfigError("encoder input arrays disagree on node count");
  if (cfg.path_edge_bias && in.path_feats.empty())
    throw ConfigError("path-edge bias requires path features");

  // per-node constants shared across layers
  std::vector<double> log_supp(n), log_n(n), raw_supp(n), raw_n(n);
  for (int i = 0; i < n; ++i) {
    raw_supp[i] = static_cast<double>(in.supports[i].actual_size);
    raw_n[i] = static_cast<double>(in.graph_size);
    log_supp[i] = std::log1p(raw_supp[i]);
    log_n[i] = std::log1p(raw_n[i]);
  }

  std::vector<double> probe_acc(opts.probe ? n : 0, 0.0);

  ts::Tensor h = input_embeddings(in);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = "layer" + std::to_string(l) + "/";
    ts::Tensor q_all = ts::add(ts::matmul(h, param(lp + "attn/w_q")),
                               param(lp + "attn/b_q"));
    ts::Tensor k_all = ts::add(ts::matmul(h, param(lp + "attn/w_k")),
                               param(lp + "attn/b_k"));
    ts::Tensor v_all = ts::add(ts::matmul(h, param(lp + "attn/w_v")),
                               param(lp + "attn/b_v"));

    std::vector<ts::Tensor> head_states(cfg.heads);
    for (int m = 0; m < cfg.heads; ++m) {
      const std::string hp = lp + "attn/h" + std::to_string(m) + "/";
      ts::Tensor qm = ts::slice_cols(q_all, m * dh, dh);
      ts::Tensor km = ts::slice_cols(k_all, m * dh, dh);
      ts::Tensor vm = ts::slice_cols(v_all, m * dh, dh);

      std::vector<ts::Tensor> rows;
      rows.reserve(n);
      for (int i = 0; i < n; ++i) {
        const NodeSupport& sup = in.supports[i];
        const int len = static_cast<int>(sup.slots.size());
        std::vector<int> ids(len), bins(len);
        ts::Mask allow(len, 0);
        std::vector<double> valid(len, 0.0);
        for (int p = 0; p < len; ++p) {
          ids[p] = sup.slots[p].node;
          bins[p] = sup.slots[p].bin;
          allow[p] = sup.slots[p].valid ? 1 : 0;
          valid[p] = sup.slots[p].valid ? 1.0 : 0.0;
        }

        ts::Tensor k_sel = ts::gather_rows(km, ids);
        ts::Tensor v_sel = ts::gather_rows(vm, ids);
        ts::Tensor q_row = ts::gather_rows(qm, std::vector<int>{i});

        ts::Tensor logits =
            ts::mul_const(ts::matmul_nt(q_row, k_sel), inv_sqrt_dh);

        ts::Tensor bias =
            ts::gather_rows(param(hp + "spd_bias"), bins);  // len x 1

        if (cfg.path_edge_bias) {
          std::vector<double> flat;
          flat.reserve(static_cast<std::size_t>(len) * kNumBondOrders);
          for (int p = 0; p < len; ++p) {
            const auto& cell = in.path_feats[i][p];
            flat.insert(flat.end(), cell.begin(), cell.end());
          }
          ts::Tensor feats =
              tp.constant(ts::Matrix(len, kNumBondOrders, std::move(flat)));
          bias = ts::add(bias, ts::matmul(feats, param(hp + "path_bias")));
        } else {
          std::vector<int> oidx(len, 0), cidx(len, 0), ridx(len, 0);
          std::vector<double> plain(len, 0.0), masked(len, 0.0);
          for (int p = 0; p < len; ++p) {
            if (!sup.slots[p].valid || sup.slots[p].node == i) continue;
            const std::pair<int, int> key = std::minmax(i, sup.slots[p].node);
            auto it = in.bonds.find({key.first, key.second});
            if (it == in.bonds.end()) continue;  // SPD > 1: no bond bias
            if (it->second.masked) {
              masked[p] = 1.0;
            } else {
              plain[p] = 1.0;
              oidx[p] = it->second.order;
              cidx[p] = it->second.conj;
              ridx[p] = it->second.ring;
            }
          }
          ts::Tensor fields =
              ts::add(ts::add(ts::gather_rows(param(hp + "bond_order_bias"),
                                              oidx),
                              ts::gather_rows(param(hp + "bond_conj_bias"),
                                              cidx)),
                      ts::gather_rows(param(hp + "bond_ring_bias"), ridx));
          ts::Tensor plain_col = tp.constant(ts::Matrix::col_vector(plain));
          ts::Tensor masked_col =
              tp.constant(ts::Matrix::col_vector(masked));
          ts::Tensor bond_bias = ts::mul(fields, plain_col);
          bond_bias = ts::add(
              bond_bias, ts::mul(masked_col, param(hp + "bond_mask_bias")));
          bias = ts::add(bias, bond_bias);
        }

        if (cfg.key_centrality_bias) {
          std::vector<int> key_bins(len);
          for (int p = 0; p < len; ++p)
            key_bins[p] = topo::degree_bin(in.degree_raw[ids[p]]);
          bias = ts::add(
              bias, ts::gather_rows(param(hp + "key_centrality_bias"),
                                    key_bins));
        }
        logits = ts::add(logits, ts::transpose(bias));

        if (cfg.variant == AttentionVariant::kLearnedTemperature) {
          ts::Tensor tau_in = ts::concat_cols(
              {q_row, tp.constant(ts::Matrix(1, 2,
                                             {log_supp[i], log_n[i]}))});
          ts::Tensor tau = ts::softplus(ts::matmul(tau_in,
                                                   param(hp + "w_temp")));
          // floor at 1e-3: relu(tau - floor) + floor
          tau = ts::add_const(ts::relu(ts::add_const(tau, -1e-3)), 1e-3);
          logits = ts::mul(logits, ts::reciprocal(tau));
        }

        ts::Tensor alpha = ts::masked_softmax(logits, allow);
        ts::Tensor attn = ts::matmul(alpha, v_sel);

        ts::Tensor out = attn;
        const AttentionVariant variant = cfg.variant;
        if (variant == AttentionVariant::kCpa ||
            variant == AttentionVariant::kNormCpa ||
            variant == AttentionVariant::kGlobalSumCpa ||
            variant == AttentionVariant::kSumMean) {
          ts::Tensor valid_col = tp.constant(ts::Matrix::col_vector(valid));
          ts::Tensor sum_v =
              variant == AttentionVariant::kGlobalSumCpa
                  ? ts::sum_rows(vm)
                  : ts::sum_rows(ts::scale_rows(v_sel, valid_col));
          ts::Tensor channel;
          if (variant == AttentionVariant::kSumMean) {
            channel = ts::mul_const(
                ts::add(sum_v, ts::mul_const(sum_v, 1.0 / sup.actual_size)),
                0.5);
          } else {
            ts::Tensor pre = ts::matmul(q_row, param(hp + "w_gate"));
            ts::Tensor gate = apply_gate(cfg.gate, pre);
            ts::Tensor summed =
                variant == AttentionVariant::kNormCpa
                    ? ts::mul_const(sum_v, 1.0 / sup.actual_size)
                    : sum_v;
            channel = ts::mul(gate, summed);
          }
          out = ts::add(attn, channel);
          if (opts.probe) probe_acc[i] += l2_norm(channel.values());
        }
        if (opts.attn_probe) {
          AttnRecord rec;
          rec.layer = l;
          rec.head = m;
          rec.node = i;
          rec.slots = ids;
          rec.logits = logits.values();
          rec.alphas = alpha.values();
          rec.head_out = out.values();
          opts.attn_probe->push_back(std::move(rec));
        }
        rows.push_back(out);
      }
      head_states[m] = ts::concat_rows(rows);
    }

    ts::Tensor merged = ts::concat_cols(head_states);

    if (cfg.variant == AttentionVariant::kLearnedScaling) {
      std::vector<double> feats(static_cast<std::size_t>(n) * 2);
      for (int i = 0; i < n; ++i) {
        feats[2 * i] = log_supp[i];
        feats[2 * i + 1] = log_n[i];
      }
      ts::Tensor gamma = ts::sigmoid(ts::matmul(
          ts::concat_cols({q_all, tp.constant(ts::Matrix(n, 2, feats))}),
          param(lp + "w_gamma")));
      merged = ts::scale_rows(merged, gamma);
    }

    ts::Tensor u = ts::add(ts::matmul(merged, param(lp + "attn/w_o")),
                           param(lp + "attn/b_o"));

    if (cfg.layer_centrality) {
      std::vector<int> dbins(n);
      for (int i = 0; i < n; ++i)
        dbins[i] = topo::degree_bin(in.degree_raw[i]);
      u = ts::add(u, ts::gather_rows(param(lp + "centrality"), dbins));
    }
    if (cfg.variant == AttentionVariant::kScalarSizeBias) {
      std::vector<double> feats(static_cast<std::size_t>(n) * 2);
      for (int i = 0; i < n; ++i) {
        feats[2 * i] = raw_n[i];
        feats[2 * i + 1] = raw_supp[i];
      }
      u = ts::add(u, ts::matmul(tp.constant(ts::Matrix(n, 2, feats)),
                                param(lp + "size_bias")));
    }
    if (training) u = ts::dropout(u, cfg.dropout, *opts.rng, true);
    h = ts::layer_norm(ts::add(h, u));
    h = ts::add(ts::mul(h, param(lp + "ln1/gamma")), param(lp + "ln1/beta"));

    ts::Tensor f = ts::add(
        ts::matmul(ts::relu(ts::add(ts::matmul(h, param(lp + "ffn/w1")),
                                    param(lp + "ffn/b1"))),
                   param(lp + "ffn/w2")),
        param(lp + "ffn/b2"));
    if (training) f = ts::dropout(f, cfg.dropout, *opts.rng, true);
    h = ts::layer_norm(ts::add(h, f));
    h = ts::add(ts::mul(h, param(lp + "ln2/gamma")), param(lp + "ln2/beta"));
  }
  (void)d;

  if (opts.probe) {
    const double scale = 1.0 / (cfg.layers * cfg.heads);
    opts.probe->clear();
    for (int i = 0; i < n; ++i)
      opts.probe->push_back(ProbeSample{probe_acc[i] * scale,
                                        in.supports[i].actual_size,
                                        in.degree_raw[i]});
  }
  return h;
}

ts::Tensor BoundEncoder::readout(const ts::Tensor& states) const {
  return ts::mean_pool(states);
}

ts::Tensor BoundEncoder::project(const ts::Tensor& pooled) const {
  ts::Tensor hdn = ts::relu(ts::add(
      ts::matmul(pooled, param("readout/proj/w1")), param("readout/proj/b1")));
  return ts::add(ts::matmul(hdn, param("readout/proj/w2")),
                 param("readout/proj/b2"));
}

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  std::int64_t total = 0;
  for_each_encoder_param(cfg, [&total](const std::string&, int rows, int cols,
                                       InitKind) {
    total += static_cast<std::int64_t>(rows) * cols;
  });
  return total;
}

int match_capacity(const ModelConfig& base, std::int64_t target_count) {
  ModelConfig probe = base;
  probe.ffn_dim = 1;
  const std::int64_t c1 = count_params(probe);
  probe.ffn_dim = 2;
  const std::int64_t c2 = count_params(probe);
  const std::int64_t slope = c2 - c1;  // params are affine in ffn width
  const std::int64_t intercept = c1 - slope;
  if (target_count < c1)
    throw ConfigError(
        "capacity target unattainable: smallest achievable count is " +
        std::to_string(c1) + " at ffn_dim 1");
  const double ideal =
      static_cast<double>(target_count - intercept) / slope;
  int best = 1;
  std::int64_t best_diff = -1;
  for (int cand :
       {static_cast<int>(std::floor(ideal)), static_cast<int>(std::ceil(ideal))}) {
    if (cand < 1) cand = 1;
    const std::int64_t count = intercept + slope * static_cast<std::int64_t>(cand);
    const std::int64_t diff = std::abs(count - target_count);
    if (best_diff < 0 || diff < best_diff ||
        (diff == best_diff && cand < best)) {
      best = cand;
      best_diff = diff;
    }
  }
  return best;
}

std::vector<ProbeSample> cpa_channel_norm_probe(const Encoder& enc,
                                                const EncoderInput& in) {
  ts::Tape tape;
  tape.set_grad_enabled(false);
  BoundEncoder bound = enc.bind(tape, false);
  std::vector<ProbeSample> probe;
  ForwardOptions opts;
  opts.probe = &probe;
  bound.forward(in, opts);
  return probe;
}

}  // namespace cpaformer::model
