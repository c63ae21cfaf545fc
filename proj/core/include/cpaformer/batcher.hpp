// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "cpaformer/graph.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/topo.hpp"

namespace cpaformer::batcher {

enum class BucketKey { kMaxN, kMaxSupport };
enum class PadTarget { kMaxSupport, kMaxN };  // kMaxN mirrors global mode

/// Deterministic bucket assignment: bucket id = ceil(key / width); graphs
/// keep their input order within a bucket.
struct Buckets {
  int width = 1;
  BucketKey key = BucketKey::kMaxSupport;
  /// bucket id -> indices into the input graph list
  std::map<int, std::vector<int>> members;
};

Buckets bucket(const std::vector<MolGraph>& graphs,
               const std::vector<topo::SupportSets>& supports, int width,
               BucketKey key);

/// One padded batch: per graph, per node, neighbor lists padded to the
/// batch-wide length with masked slots at the tail.
struct PaddedBatch {
  int bucket_id = 0;
  int padded_length = 0;  // L: the batch max of |S(i)| (or max N)
  std::vector<int> graph_indices;
  /// aligned with graph_indices: padded per-node supports, directly
  /// consumable by the encoder
  std::vector<std::vector<model::NodeSupport>> supports;

  long long actual_slots = 0;
  long long padded_slots = 0;
  double padding_fraction() const {
    return padded_slots == 0
               ? 0.0
               : static_cast<double>(padded_slots - actual_slots) /
                     static_cast<double>(padded_slots);
  }
};

PaddedBatch pad_batch(const std::vector<MolGraph>& graphs,
                      const std::vector<topo::SupportSets>& supports,
                      const std::vector<int>& indices, int bucket_id,
                      PadTarget target = PadTarget::kMaxSupport);

/// Splits buckets into batches of at most max_graphs and pads each.
std::vector<PaddedBatch> make_batches(
    const std::vector<MolGraph>& graphs,
    const std::vector<topo::SupportSets>& supports, const Buckets& buckets,
    int max_graphs, PadTarget target = PadTarget::kMaxSupport);

/// The padding audit: % padding = (padded - actual) / padded, averaged per
/// batch, plus the mean/max padded length across batches.
struct PaddingAudit {
  double mean_padded_length = 0.0;
  int max_padded_length = 0;
  double padding_pct = 0.0;  // in [0, 100)
  int bucket_width = 0;
};

PaddingAudit audit(const std::vector<PaddedBatch>& batches, int bucket_width);

}  // namespace cpaformer::batcher
