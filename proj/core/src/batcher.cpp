// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/batcher.hpp"

#include <algorithm>

#include "cpaformer/errors.hpp"

namespace cpaformer::batcher {

namespace {

int graph_key(const MolGraph& g, const topo::SupportSets& s, BucketKey key) {
  if (key == BucketKey::kMaxN) return g.num_atoms();
  int mx = 0;
  for (int i = 0; i < g.num_atoms(); ++i) mx = std::max(mx, s.size_of(i));
  return mx;
}

}  // namespace

Buckets bucket(const std::vector<MolGraph>& graphs,
               const std::vector<topo::SupportSets>& supports, int width,
               BucketKey key) {
  if (width < 1) throw ConfigError("bucket width must be >= 1");
  if (graphs.size() != supports.size())
    throw ConfigError("graphs and supports length mismatch");
  Buckets out;
  out.width = width;
  out.key = key;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const int k = graph_key(graphs[i], supports[i], key);
    const int id = (k + width - 1) / width;  // ceil(key / width)
    out.members[id].push_back(static_cast<int>(i));
  }
  return out;
}

PaddedBatch pad_batch(const std::vector<MolGraph>& graphs,
                      const std::vector<topo::SupportSets>& supports,
                      const std::vector<int>& indices, int bucket_id,
                      PadTarget target) {
  if (indices.empty()) throw ConfigError("empty batch slice");
  PaddedBatch batch;
  batch.bucket_id = bucket_id;
  batch.graph_indices = indices;
  int len = 0;
  for (int gi : indices) {
    if (target == PadTarget::kMaxN) {
      len = std::max(len, graphs[gi].num_atoms());
    } else {
      for (int i = 0; i < graphs[gi].num_atoms(); ++i)
        len = std::max(len, supports[gi].size_of(i));
    }
  }
  batch.padded_length = len;
  for (int gi : indices) {
    std::vector<model::NodeSupport> graph_supports;
    graph_supports.reserve(graphs[gi].num_atoms());
    for (int i = 0; i < graphs[gi].num_atoms(); ++i) {
      model::NodeSupport ns;
      ns.actual_size = supports[gi].size_of(i);
      ns.slots.reserve(len);
      for (const topo::SupportEntry& e : supports[gi].sets[i])
        ns.slots.push_back({e.node, e.bin, true});
      while (static_cast<int>(ns.slots.size()) < len)
        ns.slots.push_back({0, 0, false});  // masked tail padding
      batch.actual_slots += ns.actual_size;
      batch.padded_slots += len;
      graph_supports.push_back(std::move(ns));
    }
    batch.supports.push_back(std::move(graph_supports));
  }
  return batch;
}

std::vector<PaddedBatch> make_batches(
    const std::vector<MolGraph>& graphs,
    const std::vector<topo::SupportSets>& supports, const Buckets& buckets,
    int max_graphs, PadTarget target) {
  if (max_graphs < 1) throw ConfigError("batch cap must be >= 1");
  std::vector<PaddedBatch> out;
  for (const auto& [id, members] : buckets.members) {
    for (std::size_t start = 0; start < members.size();
         start += static_cast<std::size_t>(max_graphs)) {
      const std::size_t stop =
          std::min(members.size(), start + static_cast<std::size_t>(max_graphs));
      std::vector<int> slice(members.begin() + start, members.begin() + stop);
      out.push_back(pad_batch(graphs, supports, slice, id, target));
    }
  }
  return out;
}

PaddingAudit audit(const std::vector<PaddedBatch>& batches,
                   int bucket_width) {
  if (batches.empty()) throw ConfigError("audit needs at least one batch");
  PaddingAudit a;
  a.bucket_width = bucket_width;
  double pct_acc = 0.0, len_acc = 0.0;
  for (const PaddedBatch& b : batches) {
    pct_acc += b.padding_fraction() * 100.0;
    len_acc += b.padded_length;
    a.max_padded_length = std::max(a.max_padded_length, b.padded_length);
  }
  a.padding_pct = pct_acc / static_cast<double>(batches.size());
  a.mean_padded_length = len_acc / static_cast<double>(batches.size());
  return a;
}

}  // namespace cpaformer::batcher
