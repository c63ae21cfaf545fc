// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cpaformer/graph.hpp"

namespace cpaformer::topo {

/// All-pairs shortest path distances. Cross-component pairs hold the
/// kUnreachable sentinel, never a large finite distance.
struct SpdMatrix {
  static constexpr int kUnreachable = -1;

  int n = 0;
  std::vector<int> d;  // row-major n*n

  int at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
  bool reachable(int i, int j) const { return at(i, j) != kUnreachable; }
};

/// Per-node BFS; exact unweighted shortest paths. When clip is given,
/// finite distances above it are clipped to it (global-attention mode);
/// unreachable pairs stay unreachable.
SpdMatrix all_pairs_spd(const MolGraph& g, std::optional<int> clip = {});

struct SupportEntry {
  int node = 0;
  int spd = 0;
  int bin = 0;
};

/// Per node i: the ordered K-hop support. The first entry is always
/// (i, spd 0); entries sort by (spd, node index).
struct SupportSets {
  int k = 0;  // hop radius; kGlobal for full-component supports
  static constexpr int kGlobal = -1;
  std::vector<std::vector<SupportEntry>> sets;

  int size_of(int i) const { return static_cast<int>(sets[i].size()); }
};

/// phi(d) = min(d, k). Throws NumericError for unreachable input.
int spd_bin(int d, int k);

/// min(d, 15): 16 bins for degrees 0-15.
int degree_bin(int d);

/// Depth-limited BFS per node; equals filtering all_pairs_spd at <= k.
SupportSets truncated_spd(const MolGraph& g, int k);

/// Filter an SPD matrix at <= k (oracle-style construction).
SupportSets supports_from_spd(const SpdMatrix& spd, int k);

/// Global-attention supports: every reachable node, bins clipped at clip.
/// Cross-component pairs stay excluded.
SupportSets global_supports(const SpdMatrix& spd, int clip);

/// Per graph: (1/N) * sum_i |S(i)|/N * 100.
double coverage(const MolGraph& g, int k);

/// Median of per-graph coverage (mean of the middle two for even counts).
double corpus_coverage(const std::vector<MolGraph>& graphs, int k);

/// For every ordered reachable pair (i, j): the expected count of each bond
/// order along a uniformly random shortest i-j path, i.e. the per-bond-type
/// edge traversal counts averaged over all tied shortest paths. Zero for
/// i == j. Feeds the learnable path-edge bias in global-attention mode.
struct PathEdgeFeatures {
  int n = 0;
  std::vector<std::array<double, kNumBondOrders>> f;  // row-major n*n
  const std::array<double, kNumBondOrders>& at(int i, int j) const {
    return f[static_cast<std::size_t>(i) * n + j];
  }
};
PathEdgeFeatures shortest_path_edge_features(const MolGraph& g,
                                             const SpdMatrix& spd);

}  // namespace cpaformer::topo
