// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpaformer/features.hpp"
#include "cpaformer/graph.hpp"
#include "cpaformer/tensor.hpp"
#include "cpaformer/topo.hpp"

namespace cpaformer::model {

/// Attention aggregation variants. kCpa adds the query-gated unnormalized
/// support sum to the softmax output; the others are the cardinality
/// controls and reduced forms used for ablation.
enum class AttentionVariant {
  kSoftmaxOnly,
  kCpa,
  kNormCpa,         // unnormalized sum divided by |S(i)| before gating
  kGlobalSumCpa,    // gated sum over all graph nodes (mismatched support)
  kScalarSizeBias,  // additive per-layer bias from [N; |S(i)|]
  kLearnedScaling,  // per-node sigmoid scale from [q; log sizes]
  kLearnedTemperature,  // per-head softplus logit temperature
  kSumMean,             // ungated (sum + mean)/2 channel
  kExplicitSizeInput,   // N and |S(i)| appended to input embeddings
};

enum class GateKind { kSigmoid, kLinear, kTanh };

const char* variant_name(AttentionVariant v);
AttentionVariant variant_from_name(const std::string& name);
const char* gate_name(GateKind g);
GateKind gate_from_name(const std::string& name);

bool variant_has_gate(AttentionVariant v);

/// Hop radius value meaning global (full-component) attention.
inline constexpr int kGlobalHops = -1;

struct ModelConfig {
  int layers = 2;
  int model_dim = 32;
  int heads = 2;
  int ffn_dim = 64;
  double dropout = 0.0;
  int k = 3;          // kGlobalHops for global attention
  int spd_clip = 20;  // distance-bin clip in global mode
  bool path_edge_bias = false;   // shortest-path bond bias (global mode)
  bool key_centrality_bias = true;
  bool layer_centrality = true;
  AttentionVariant variant = AttentionVariant::kCpa;
  GateKind gate = GateKind::kSigmoid;
  int proj_dim = 32;        // contrastive projection output width
  int decoder_hidden = 64;  // reconstruction decoder hidden width
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  int head_dim() const { return model_dim / heads; }
  int spd_bins() const { return (k == kGlobalHops ? spd_clip : k) + 1; }
  void validate() const;
};

/// Named, ordered parameter collection. Registration order is fixed by
/// construction and defines the checkpoint layout.
struct Param {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
};

class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<Param>& entries() const { return entries_; }
  std::vector<Param>& entries() { return entries_; }
  std::int64_t total_size() const;

  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

 private:
  std::vector<Param> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SupportSlot {
  int node = 0;
  int bin = 0;
  bool valid = true;  // false for padded positions
};

struct NodeSupport {
  std::vector<SupportSlot> slots;
  int actual_size = 0;  // |S(i)| excluding padding
};

struct BondRef {
  int order = 0;
  int conj = 0;
  int ring = 0;
  bool masked = false;  // edge replaced by the learned [MASK] bias
};

/// Everything one encoder pass needs, decoupled from MolGraph so padded
/// batches and augmented views share the same path.
struct EncoderInput {
  int n = 0;           // rows of the node tensors
  int graph_size = 0;  // N of the (possibly augmented) graph
  std::vector<std::array<int, kNumNodeFields>> node_cat;
  std::vector<double> mass_z;
  std::vector<int> degree_raw;
  std::vector<NodeSupport> supports;
  std::map<std::pair<int, int>, BondRef> bonds;  // keyed by (min,max)
  /// Per node, aligned with supports[i].slots: expected bond-order counts
  /// along shortest paths (global path-bias mode only).
  std::vector<std::vector<std::array<double, kNumBondOrders>>> path_feats;
  std::vector<std::uint8_t> node_masked;  // may be empty

  void mark_node_masked(int node);
  void mark_bond_masked(int u, int v);
};

/// Builds the per-graph encoder input from a featurized graph and its
/// support sets; attaches path features when cfg uses the path-edge bias.
EncoderInput make_encoder_input(const MolGraph& g, const Featurized& f,
                                const topo::SupportSets& supports,
                                const ModelConfig& cfg);

struct ProbeSample {
  double channel_norm = 0.0;  // ||g (.) sum v||_2 averaged over heads/layers
  int support_size = 0;
  int degree = 0;
};

/// Per (layer, head, node) attention internals, for inspection and tests.
struct AttnRecord {
  int layer = 0;
  int head = 0;
  int node = 0;
  std::vector<int> slots;      // support node ids (padding included)
  std::vector<double> logits;  // pre-softmax, only allowed slots meaningful
  std::vector<double> alphas;
  std::vector<double> head_out;  // per-head output row after the channel
};

struct ForwardOptions {
  bool training = false;
  RngStream* rng = nullptr;  // dropout stream; required when training
  std::vector<ProbeSample>* probe = nullptr;
  std::vector<AttnRecord>* attn_probe = nullptr;
};

class BoundEncoder;

/// The graph encoder: structured sparse multi-head attention with SPD,
/// direct-bond and centrality biases plus the selected aggregation variant.
class Encoder {
 public:
  explicit Encoder(const ModelConfig& cfg);
  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::int64_t num_params() const { return params_.total_size(); }

  BoundEncoder bind(tensor::Tape& tape, bool trainable = true) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

/// Per-tape view of an encoder: parameters are materialized as leaves once
/// so several graphs in one batch share them (gradients accumulate).
class BoundEncoder {
 public:
  tensor::Tensor input_embeddings(const EncoderInput& in) const;
  tensor::Tensor forward(const EncoderInput& in,
                         const ForwardOptions& opts = {}) const;
  tensor::Tensor readout(const tensor::Tensor& states) const;
  tensor::Tensor project(const tensor::Tensor& pooled) const;

  tensor::Tensor param(const std::string& name) const;
  /// Gradients for every parameter after Tape::backward.
  std::map<std::string, std::vector<double>> grads() const;
  tensor::Tape& tape() const { return *tape_; }
  const ModelConfig& config() const;

 private:
  friend class Encoder;
  const Encoder* enc_ = nullptr;
  tensor::Tape* tape_ = nullptr;
  std::unordered_map<std::string, tensor::Tensor> leaves_;
};

/// Exact learnable-scalar count for a configuration (encoder only, matching
/// Encoder registration).
std::int64_t count_params(const ModelConfig& cfg);

/// Smallest-|difference| ffn width reaching target_count (ties toward the
/// smaller width). Throws ConfigError when even ffn_dim = 1 overshoots, and
/// reports the best achievable count.
int match_capacity(const ModelConfig& base, std::int64_t target_count);

/// Forward-only instrumentation: per node, the L2 norm of the gated
/// unnormalized channel averaged across heads and layers, with |S(i)| and
/// raw degree for the partial-correlation probe.
std::vector<ProbeSample> cpa_channel_norm_probe(const Encoder& enc,
                                                const EncoderInput& in);

}  // namespace cpaformer::model
