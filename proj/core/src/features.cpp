// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/features.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "cpaformer/errors.hpp"
#include "cpaformer/topo.hpp"

namespace cpaformer {

FeatureSchema FeatureSchema::standard() {
  FeatureSchema s;
  s.node_vocab = {kNumElements, 16, 5, 9, 2, 2};
  s.bond_vocab = {kNumBondOrders, 2, 2};
  return s;
}

int FeatureSchema::total_node_vocab() const {
  return std::accumulate(node_vocab.begin(), node_vocab.end(), 0);
}

CorpusStats compute_corpus_stats(const std::vector<MolGraph>& graphs) {
  long long count = 0;
  double sum = 0.0;
  for (const MolGraph& g : graphs) {
    for (const AtomRecord& a : g.atoms) {
      sum += a.mass;
      ++count;
    }
  }
  if (count == 0) throw NumericError("empty corpus: no atoms to aggregate");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const MolGraph& g : graphs) {
    for (const AtomRecord& a : g.atoms) {
      const double d = a.mass - mean;
      ss += d * d;
    }
  }
  const double var = ss / static_cast<double>(count);  // population variance
  CorpusStats stats;
  stats.mass_mean = mean;
  stats.mass_std = var > 0.0 ? std::sqrt(var) : 1.0;
  return stats;
}

Featurized featurize(const MolGraph& g, const FeatureSchema& schema,
                     const CorpusStats& stats) {
  if (!std::isfinite(stats.mass_mean) || !std::isfinite(stats.mass_std) ||
      stats.mass_std <= 0.0)
    throw ConfigError("corpus stats must be finite with positive std");
  Featurized out;
  const std::vector<int> deg = degrees(g);
  out.node_cat.reserve(g.num_atoms());
  out.mass_z.reserve(g.num_atoms());
  auto check = [&](int idx, int vocab, const char* field) {
    if (idx < 0 || idx >= vocab)
      throw ConfigError(std::string("feature index out of vocabulary for ") +
                        field);
    return idx;
  };
  for (int i = 0; i < g.num_atoms(); ++i) {
    const AtomRecord& a = g.atoms[i];
    std::array<int, kNumNodeFields> cat{};
    cat[kFieldElement] = check(static_cast<int>(a.element),
                               schema.node_vocab[kFieldElement], "element");
    cat[kFieldDegreeBin] = check(topo::degree_bin(deg[i]),
                                 schema.node_vocab[kFieldDegreeBin],
                                 "degree bin");
    cat[kFieldCharge] = check(a.formal_charge + 2,
                              schema.node_vocab[kFieldCharge], "charge");
    cat[kFieldNumH] =
        check(a.num_h, schema.node_vocab[kFieldNumH], "hydrogen count");
    cat[kFieldAromatic] = a.aromatic ? 1 : 0;
    cat[kFieldInRing] = a.in_ring ? 1 : 0;
    out.node_cat.push_back(cat);
    out.mass_z.push_back((a.mass - stats.mass_mean) / stats.mass_std);
  }
  for (const BondRecord& b : g.bonds) {
    EdgeFeatures f;
    f.order = check(static_cast<int>(b.order),
                    schema.bond_vocab[kBondOrderField], "bond order");
    f.conjugated = b.conjugated ? 1 : 0;
    f.in_ring = b.in_ring ? 1 : 0;
    out.edges[{std::min(b.u, b.v), std::max(b.u, b.v)}] = f;
  }
  return out;
}

}  // namespace cpaformer
