// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpaformer/features.hpp"
#include "cpaformer/graph.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/tensor.hpp"
#include "cpaformer/topo.hpp"

namespace cpaformer::ssl {

enum class SpdMode { kPerView, kStable };
enum class ChemAware { kNone, kAttributeMask, kValencyConstrained };
enum class Objective { kMask, kContrast, kBoth };

Objective objective_from_name(const std::string& name);
const char* objective_name(Objective o);

struct AugConfig {
  double subgraph_keep_min = 0.50;
  double subgraph_keep_max = 0.75;
  double node_drop_min = 0.1;
  double node_drop_max = 0.3;
  double edge_drop_min = 0.1;
  double edge_drop_max = 0.3;
  SpdMode spd_mode = SpdMode::kPerView;
  ChemAware chem_aware = ChemAware::kNone;
  void validate() const;
};

/// An augmented view: the reindexed surviving subgraph plus its topology
/// artifacts (supports, degrees), either recomputed on the view or
/// inherited from the parent and intersected with survivors.
struct View {
  MolGraph graph;
  std::vector<int> provenance;  // view node -> original node index
  topo::SupportSets supports;
  std::vector<int> degree_raw;
  std::vector<std::uint8_t> attr_masked;  // attribute-mask augmentation
  bool identity_fallback = false;
};

struct EdgeDropReport {
  int attempted = 0;
  int dropped = 0;
  int skipped = 0;
  double success_rate() const {
    return attempted == 0 ? 1.0
                          : static_cast<double>(dropped) / attempted;
  }
};

/// Pipeline order: subgraph sample, node dropout, edge dropout. All-drop
/// outcomes retry up to 5 times, then fall back to an identity view with
/// the flag set. Graphs with fewer than 2 nodes return identity views.
/// Valency-constrained drops accumulate into report when given.
std::pair<View, View> make_views(const MolGraph& g, const AugConfig& cfg,
                                 const model::ModelConfig& mcfg,
                                 std::uint64_t seed,
                                 const std::string& stream_key,
                                 EdgeDropReport* report = nullptr);

/// Drops each edge with probability rate, keeping a drop only when both
/// endpoints stay within the valence table after ring/aromatic flags are
/// recomputed on the mutated graph. Infeasible candidates are re-drawn up
/// to 5 times, then skipped (reported, never an error).
MolGraph valency_constrained_edge_dropout(const MolGraph& g, double rate,
                                          RngStream& rng,
                                          EdgeDropReport* report = nullptr);

struct MaskPlan {
  std::vector<int> nodes;
  std::vector<std::pair<int, int>> edges;  // (min, max) endpoint pairs
  bool empty() const { return nodes.empty() && edges.empty(); }
};

/// floor(rate * count) items, at least 1 when count >= 7; independent draws
/// for nodes and edges.
MaskPlan sample_mask_plan(const MolGraph& g, double node_rate,
                          double edge_rate, RngStream& rng);

/// Applies a plan to an encoder input: masked nodes swap to the learned
/// [MASK] embedding, masked bonds to the learned masked-bond bias.
void apply_mask_plan(model::EncoderInput& in, const MaskPlan& plan);

/// Encoder input for a view, honoring inherited topology artifacts and
/// attribute masks.
model::EncoderInput view_encoder_input(const View& view,
                                       const FeatureSchema& schema,
                                       const CorpusStats& stats,
                                       const model::ModelConfig& cfg);

/// Support sets for a plain graph under the model's hop configuration.
topo::SupportSets supports_for(const MolGraph& g,
                               const model::ModelConfig& cfg);

// ---- reconstruction decoder ------------------------------------------------

class BoundDecoder;

/// Single-hidden-layer decoder over all node embeddings with separate heads
/// per feature field; masked-edge heads read concatenated endpoint states.
class Decoder {
 public:
  explicit Decoder(const model::ModelConfig& cfg);
  model::ParamStore& params() { return params_; }
  const model::ParamStore& params() const { return params_; }
  BoundDecoder bind(tensor::Tape& tape, bool trainable = true) const;

 private:
  int model_dim_;
  int hidden_;
  model::ParamStore params_;
};

class BoundDecoder {
 public:
  /// Mean over masked items of the per-field CE/MSE sums. Returns scalar 0
  /// for an empty plan (callers should check plan.empty()).
  tensor::Tensor masked_loss(const tensor::Tensor& states,
                             const model::EncoderInput& original,
                             const MaskPlan& plan) const;
  std::map<std::string, std::vector<double>> grads() const;

 private:
  friend class Decoder;
  tensor::Tensor param(const std::string& name) const;
  const Decoder* dec_ = nullptr;
  tensor::Tape* tape_ = nullptr;
  std::unordered_map<std::string, tensor::Tensor> leaves_;
};

// ---- contrastive loss --------------------------------------------------

/// Symmetrized NT-Xent over L2-normalized projections with 2B-2 in-batch
/// negatives per anchor. Throws on batch size < 2.
tensor::Tensor ntxent(const tensor::Tensor& z1, const tensor::Tensor& z2,
                      double tau);

/// mask + 0.5 * contrast.
tensor::Tensor total_loss(const tensor::Tensor& mask_loss,
                          const tensor::Tensor& contrast_loss);
double total_loss(double mask_loss, double contrast_loss);

// ---- optimizer / schedule ---------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<model::ParamStore*> stores, const AdamConfig& cfg);
  /// grads[i] maps parameter name -> gradient for stores[i]; missing names
  /// mean zero gradient. lr_scale multiplies the configured rate.
  void step(const std::vector<std::map<std::string, std::vector<double>>>&
                grads,
            double lr_scale = 1.0);
  int steps_taken() const { return t_; }

 private:
  std::vector<model::ParamStore*> stores_;
  AdamConfig cfg_;
  std::vector<std::vector<std::vector<double>>> m_, v_;
  int t_ = 0;
};

/// Linear warmup to peak, then cosine decay to floor over the remaining
/// steps.
double lr_at(int step, int warmup_steps, int total_steps, double peak,
             double floor_lr);

// ---- pretraining --------------------------------------------------------

struct PretrainConfig {
  int steps = 100;
  int batch = 8;
  double peak_lr = 1e-3;
  double floor_lr = 0.0;
  int warmup_steps = 10;
  Objective objective = Objective::kBoth;
  double tau = 0.2;
  double mask_node_rate = 0.15;
  double mask_edge_rate = 0.15;
  AugConfig aug;
  std::uint64_t seed = 0;
};

struct StepTrace {
  int step = 0;
  double mask_loss = 0.0;
  double contrast_loss = 0.0;
  double total = 0.0;
};

struct PretrainResult {
  std::vector<StepTrace> trace;
  std::optional<int> halted_at_step;  // divergence detector
  std::string halt_reason;
  EdgeDropReport edge_report;
  int steps_done = 0;
};

/// Deterministic given (config seed, corpus): every random choice draws
/// from a stream named by step/graph/view.
PretrainResult pretrain(model::Encoder& encoder, Decoder& decoder,
                        const std::vector<MolGraph>& corpus,
                        const FeatureSchema& schema, const CorpusStats& stats,
                        const PretrainConfig& cfg);

// ---- fine-tuning ---------------------------------------------------------

enum class TaskKind { kRegression, kBinary };

/// Single linear layer on the mean-pooled embedding.
struct Head {
  model::ParamStore params;
  Head(int model_dim, std::uint64_t seed);
};

struct LabeledDataset {
  std::vector<MolGraph> graphs;
  std::vector<double> labels;
};

struct FinetuneConfig {
  int epochs = 10;
  int batch = 16;
  double lr = 1e-3;
  TaskKind task = TaskKind::kBinary;
  double pos_weight = 1.0;   // class weighting for imbalance
  bool head_only = false;    // linear probing: freeze the encoder
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  std::vector<double> epoch_losses;
};

FinetuneResult finetune(model::Encoder& encoder, Head& head,
                        const LabeledDataset& train,
                        const FeatureSchema& schema, const CorpusStats& stats,
                        const FinetuneConfig& cfg);

/// Raw head outputs (logits for binary tasks, values for regression).
std::vector<double> predict(const model::Encoder& encoder, const Head& head,
                            const std::vector<MolGraph>& graphs,
                            const FeatureSchema& schema,
                            const CorpusStats& stats);

}  // namespace cpaformer::ssl
