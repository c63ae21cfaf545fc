// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "cpaformer/graph.hpp"
#include "cpaformer/rng.hpp"

namespace cpaformer::synthetic {

/// Path graph with n carbon atoms.
MolGraph path_graph(int n);

/// Cycle C_n of carbons (single bonds, ring flags set).
MolGraph cycle_graph(int n);

/// Complete graph on n carbons.
MolGraph complete_graph(int n);

/// Star: one center bonded to `arity` leaves, all carbon.
MolGraph star_graph(int arity);

/// Disjoint union keeping atom attributes; indices shift by offset.
MolGraph disjoint_union(const std::vector<MolGraph>& parts);

/// Random connected molecule-like graph: a random tree over random
/// vocabulary atoms plus a few extra edges, hydrogens filled to valence.
MolGraph random_molecule(int n, RngStream& rng);

/// Random graphs for oracle comparisons: tree plus extra_edges random
/// chords, all carbon (hydrogen counts left at 0).
MolGraph random_topology(int n, int extra_edges, RngStream& rng);

/// The cardinality task: each instance is a disjoint union of carbon
/// cycles partitioning `total_nodes` nodes; the label thresholds the
/// replication mass sum_i (5 - min(cycle_len_i, 5)) over nodes, i.e. how
/// much 2-hop supports fold back onto repeated neighbors. Node features are
/// constant across the corpus by construction.
struct CardinalityTask {
  std::vector<MolGraph> graphs;
  std::vector<double> labels;  // 0/1
};
CardinalityTask make_cardinality_task(int instances, int total_nodes,
                                      std::uint64_t seed);

}  // namespace cpaformer::synthetic
