// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cpaformer/graph.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/rng.hpp"

namespace cpaformer::expressivity {

using Vec = std::vector<double>;

enum class AttentionProfile { kUniform, kRandomMassSplit };

/// Two supports built by replicating the same base multiset lambda and
/// lambda' times, with attention weights that assign identical total mass
/// to each base value on both sides.
struct ReplicationPair {
  std::vector<Vec> base;  // the multiset B
  int lambda = 1;
  int lambda_prime = 2;
  std::vector<Vec> values_a, values_b;    // replicated supports
  std::vector<double> weights_a, weights_b;  // attention profiles
};

ReplicationPair build_replication_pair(const std::vector<Vec>& base,
                                       int lambda, int lambda_prime,
                                       AttentionProfile profile,
                                       RngStream* rng = nullptr);

struct BlindnessResult {
  Vec output_a, output_b;
  double max_abs_diff = 0.0;
  bool equal = false;  // within 1e-12
};

/// Softmax-style weighted sums on both supports; equal under the matching
/// mass profile regardless of replication count.
BlindnessResult check_blindness(const ReplicationPair& pair);

struct SeparationResult {
  Vec output_a, output_b;
  double witness_diff = 0.0;     // |difference| at the witnessing coordinate
  double predicted_diff = 0.0;   // |g_r (lambda - lambda') |B| mean_r|
  int witness_coord = -1;
  bool distinct = false;
  bool inconclusive = false;  // zero-mean base or zero gate
};

/// Gated-sum channel added to both outputs; distinct outputs whenever the
/// base mean and some gate coordinate are nonzero.
SeparationResult check_cpa_separation(const ReplicationPair& pair,
                                      const Vec& gate);

/// Same check with the unnormalized sum divided by the support size; the
/// normalized channel collapses the pair again.
SeparationResult check_norm_cpa_collision(const ReplicationPair& pair,
                                          const Vec& gate);

struct MeanCollision {
  std::vector<Vec> multiset_a, multiset_b;  // b = a plus its mean
  Vec mean_a, mean_b;
  Vec sum_a, sum_b;
  double mean_diff = 0.0;
};

/// (M, M with its mean appended): equal means, cardinalities differing by
/// one; the sums differ by exactly mean(M).
MeanCollision mean_collision(const std::vector<Vec>& multiset);

/// Fixed random-weight two-layer tanh networks used as the injective
/// embeddings phi and psi of the composed aggregation.
struct RandomMlp {
  int in_dim = 0, hidden = 0, out_dim = 0;
  std::vector<double> w1, b1, w2, b2;  // row-major (in x hidden), (hidden x out)
  RandomMlp() = default;
  RandomMlp(int in, int hid, int out, std::uint64_t seed,
            const std::string& name);
  Vec apply(const Vec& x) const;
};

/// psi((1 + eps) * phi(x) + g (.) sum_j phi(x_j)); empty neighbor sets
/// evaluate to psi((1 + eps) * phi(x)).
Vec composed_cpa(const Vec& x, const std::vector<Vec>& neighbors, double eps,
                 const RandomMlp& phi, const RandomMlp& psi, const Vec& gate);

struct InjectivityReport {
  int trials = 0;
  int collisions = 0;
  double min_pairwise_distance = 0.0;  // L-inf over distinct input pairs
};

/// Evaluates composed_cpa on distinct (center, multiset) inputs over a
/// one-hot alphabet and counts output collisions at the given resolution.
/// max_multiset picks multisets of size 0..max_size over alphabet symbols;
/// trials caps how many distinct inputs are drawn (all of them when the
/// domain is smaller).
InjectivityReport injectivity_trial(int alphabet, int max_size, int trials,
                                    double resolution, std::uint64_t seed);

// ---- 1-WL refinement ----------------------------------------------------

enum class WlInit { kUniform, kFeatures };

/// Collision-free color interning: canonical encodings map to dense ids
/// through an exact table, so equal encodings (and only those) share ids.
class WlInterner {
 public:
  int intern(const std::string& encoding);
  int size() const { return static_cast<int>(table_.size()); }

 private:
  std::map<std::string, int> table_;
};

struct ColorMap {
  std::vector<int> colors;
  int iterations = 0;
};

/// Iterates color <- intern(color, sorted neighbor colors) to stability.
/// Graphs refined through a shared interner have comparable color ids.
ColorMap wl_refine(const MolGraph& g, WlInit init, WlInterner& interner);

/// Sorted (color, count) list; two graphs have equal histograms iff their
/// stable colorings agree as multisets.
std::vector<std::pair<int, int>> wl_histogram(const ColorMap& map);

/// Stable structural hash: bounded-depth WL feature strings hashed with
/// FNV-1a; invariant under node relabeling and stable across runs. Serves
/// as the scaffold surrogate for split construction.
std::uint64_t wl_feature_hash(const MolGraph& g, int rounds = 3);

struct ModelPairCheck {
  Vec pooled_a, pooled_b;
  double max_abs_diff = 0.0;
  bool equal = false;  // within 1e-9
};

/// Runs both graphs (expected: constant features) through the encoder and
/// compares mean-pooled outputs.
ModelPairCheck wl_hard_pair_model_check(const model::Encoder& enc,
                                        const MolGraph& a, const MolGraph& b);

}  // namespace cpaformer::expressivity
