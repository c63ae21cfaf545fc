// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "cpaformer/errors.hpp"

namespace cpaformer::synthetic {

namespace {

AtomRecord carbon() {
  AtomRecord a;
  a.element = Element::C;
  a.mass = element_mass(Element::C);
  return a;
}

void add_bond(MolGraph& g, int u, int v) {
  BondRecord b;
  b.u = std::min(u, v);
  b.v = std::max(u, v);
  g.bonds.push_back(b);
}

void finish(MolGraph& g) {
  refresh_ring_and_aromatic_flags(g);
  refresh_conjugation(g);
  const std::vector<int> deg = degrees(g);
  for (int i = 0; i < g.num_atoms(); ++i) {
    // hydrogens fill to the smallest feasible valence
    int h = 0;
    for (int v : element_valences(g.atoms[i].element)) {
      if (v >= deg[i]) {
        h = v - deg[i];
        break;
      }
    }
    g.atoms[i].num_h = std::max(0, std::min(8, h));
  }
}

}  // namespace

MolGraph path_graph(int n) {
  if (n < 1) throw ConfigError("path needs >= 1 node");
  MolGraph g;
  g.id = "P" + std::to_string(n);
  for (int i = 0; i < n; ++i) g.atoms.push_back(carbon());
  for (int i = 0; i + 1 < n; ++i) add_bond(g, i, i + 1);
  finish(g);
  return g;
}

MolGraph cycle_graph(int n) {
  if (n < 3) throw ConfigError("cycle needs >= 3 nodes");
  MolGraph g;
  g.id = "C" + std::to_string(n);
  for (int i = 0; i < n; ++i) g.atoms.push_back(carbon());
  for (int i = 0; i < n; ++i) add_bond(g, i, (i + 1) % n);
  finish(g);
  return g;
}

MolGraph complete_graph(int n) {
  if (n < 1) throw ConfigError("complete graph needs >= 1 node");
  MolGraph g;
  g.id = "K" + std::to_string(n);
  for (int i = 0; i < n; ++i) g.atoms.push_back(carbon());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) add_bond(g, i, j);
  finish(g);
  return g;
}

MolGraph star_graph(int arity) {
  if (arity < 1) throw ConfigError("star needs >= 1 leaf");
  MolGraph g;
  g.id = "S" + std::to_string(arity);
  for (int i = 0; i <= arity; ++i) g.atoms.push_back(carbon());
  for (int leaf = 1; leaf <= arity; ++leaf) add_bond(g, 0, leaf);
  finish(g);
  return g;
}

MolGraph disjoint_union(const std::vector<MolGraph>& parts) {
  MolGraph g;
  int offset = 0;
  for (const MolGraph& part : parts) {
    if (!g.id.empty()) g.id += "+";
    g.id += part.id;
    for (const AtomRecord& a : part.atoms) g.atoms.push_back(a);
    for (const BondRecord& b : part.bonds) {
      BondRecord nb = b;
      nb.u += offset;
      nb.v += offset;
      g.bonds.push_back(nb);
    }
    offset += part.num_atoms();
  }
  return g;
}

MolGraph random_topology(int n, int extra_edges, RngStream& rng) {
  if (n < 1) throw ConfigError("graph needs >= 1 node");
  MolGraph g;
  g.id = "rand" + std::to_string(n);
  for (int i = 0; i < n; ++i) g.atoms.push_back(carbon());
  for (int i = 1; i < n; ++i) add_bond(g, rng.next_int(0, i - 1), i);
  std::set<std::pair<int, int>> present;
  for (const BondRecord& b : g.bonds) present.insert({b.u, b.v});
  int added = 0, guard = 0;
  while (added < extra_edges && guard < 50 * (extra_edges + 1) && n > 2) {
    ++guard;
    const int u = rng.next_int(0, n - 1);
    const int v = rng.next_int(0, n - 1);
    if (u == v) continue;
    const std::pair<int, int> key = std::minmax(u, v);
    if (present.count({key.first, key.second})) continue;
    present.insert({key.first, key.second});
    add_bond(g, u, v);
    ++added;
  }
  finish(g);
  return g;
}

MolGraph random_molecule(int n, RngStream& rng) {
  static const Element kPick[] = {Element::C, Element::C, Element::C,
                                  Element::N, Element::O, Element::S,
                                  Element::F};
  MolGraph g;
  g.id = "mol" + std::to_string(n);
  for (int i = 0; i < n; ++i) g.atoms.push_back(carbon());
  // random tree with degree capped at 3 so every element stays feasible
  std::vector<int> deg(n, 0);
  for (int i = 1; i < n; ++i) {
    int parent = rng.next_int(0, i - 1);
    int guard = 0;
    while (deg[parent] >= 3 && guard++ < 4 * n)
      parent = rng.next_int(0, i - 1);
    add_bond(g, parent, i);
    ++deg[parent];
    ++deg[i];
  }
  for (int i = 0; i < n; ++i) {
    const Element e = kPick[rng.next_below(7)];
    if (deg[i] <= max_valence(e)) {
      g.atoms[i].element = e;
      g.atoms[i].mass = element_mass(e);
    }
  }
  finish(g);
  g.validate();
  return g;
}

CardinalityTask make_cardinality_task(int instances, int total_nodes,
                                      std::uint64_t seed) {
  if (total_nodes < 6)
    throw ConfigError("cardinality task needs >= 6 nodes per graph");
  CardinalityTask task;
  RngStream rng(seed, "cardinality_task");
  // replication mass of a single cycle: len * (5 - min(len, 5))
  auto cycle_mass = [](int len) { return len * (5 - std::min(len, 5)); };

  std::vector<int> masses;
  std::vector<std::vector<int>> compositions;
  for (int t = 0; t < instances; ++t) {
    std::vector<int> parts;
    int remaining = total_nodes;
    while (remaining >= 3) {
      int len;
      if (remaining < 6) {
        len = remaining;  // a remainder of 3..5 closes exactly
      } else {
        len = rng.next_int(3, std::min(remaining - 3, 7));
        if (remaining - len < 3) len = remaining;
      }
      parts.push_back(len);
      remaining -= len;
    }
    compositions.push_back(parts);
    int mass = 0;
    for (int len : parts) mass += cycle_mass(len);
    masses.push_back(mass);
  }
  std::vector<int> sorted = masses;
  std::sort(sorted.begin(), sorted.end());
  const int threshold = sorted[sorted.size() / 2];

  for (int t = 0; t < instances; ++t) {
    std::vector<MolGraph> rings;
    for (int len : compositions[t]) rings.push_back(cycle_graph(len));
    MolGraph g = disjoint_union(rings);
    g.id = "card" + std::to_string(t);
    // label-independent feature variety: ring atoms flip to nitrogen at
    // random, so models without cardinality signals see only noise
    RngStream arng(seed, "cardinality_atoms/" + std::to_string(t));
    for (AtomRecord& a : g.atoms) {
      if (arng.next_bernoulli(0.15)) {
        a.element = Element::N;
        a.mass = element_mass(Element::N);
        a.num_h = 1;  // ring degree 2, smallest N valence 3
      }
    }
    task.graphs.push_back(std::move(g));
    task.labels.push_back(masses[t] > threshold ? 1.0 : 0.0);
  }
  return task;
}

}  // namespace cpaformer::synthetic
