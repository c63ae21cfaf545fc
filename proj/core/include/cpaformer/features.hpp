// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "cpaformer/graph.hpp"

namespace cpaformer {

/// Node categorical field order used everywhere downstream.
enum NodeField {
  kFieldElement = 0,
  kFieldDegreeBin,
  kFieldCharge,
  kFieldNumH,
  kFieldAromatic,
  kFieldInRing,
  kNumNodeFields
};

enum BondField { kBondOrderField = 0, kBondConjField, kBondRingField,
                 kNumBondFields };

/// Vocabulary sizes for categorical fields plus the continuous mass column.
struct FeatureSchema {
  std::array<int, kNumNodeFields> node_vocab;
  std::array<int, kNumBondFields> bond_vocab;

  static FeatureSchema standard();
  int total_node_vocab() const;
};

/// Per-continuous-field normalization statistics, fixed across tasks once
/// computed on the pretraining corpus.
struct CorpusStats {
  double mass_mean = 0.0;
  double mass_std = 1.0;  // > 0; falls back to 1 when degenerate
};

/// Exact population mean/std of atom mass over all atoms of the corpus.
/// Throws NumericError on an empty corpus.
CorpusStats compute_corpus_stats(const std::vector<MolGraph>& graphs);

struct EdgeFeatures {
  int order = 0;
  int conjugated = 0;
  int in_ring = 0;
};

struct Featurized {
  /// Per atom: categorical indices in NodeField order.
  std::vector<std::array<int, kNumNodeFields>> node_cat;
  /// Per atom: z-scored mass.
  std::vector<double> mass_z;
  /// Keyed by (min, max) endpoint pair.
  std::map<std::pair<int, int>, EdgeFeatures> edges;
};

/// Deterministic and total on valid inputs. Degree bins come from the bond
/// graph of g itself (so augmented views featurize with their own topology).
/// Throws ConfigError when a record does not fit the schema.
Featurized featurize(const MolGraph& g, const FeatureSchema& schema,
                     const CorpusStats& stats);

}  // namespace cpaformer
