// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/graph.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <utility>

#include "cpaformer/errors.hpp"

namespace cpaformer {

namespace {

constexpr const char* kSymbols[kNumElements] = {"B", "C",  "N",  "O", "P",
                                                "S", "F", "Cl", "Br", "I"};

constexpr double kMasses[kNumElements] = {10.811, 12.011, 14.007,  15.999,
                                          30.974, 32.06,  18.998,  35.45,
                                          79.904, 126.904};

const std::vector<int> kValences[kNumElements] = {
    {3}, {4}, {3}, {2}, {3, 5}, {2, 4, 6}, {1}, {1}, {1}, {1}};

}  // namespace

const char* element_symbol(Element e) {
  return kSymbols[static_cast<int>(e)];
}

std::optional<Element> element_from_symbol(const std::string& sym) {
  for (int i = 0; i < kNumElements; ++i) {
    if (sym == kSymbols[i]) return static_cast<Element>(i);
  }
  return std::nullopt;
}

double element_mass(Element e) { return kMasses[static_cast<int>(e)]; }

const std::vector<int>& element_valences(Element e) {
  return kValences[static_cast<int>(e)];
}

int max_valence(Element e) { return kValences[static_cast<int>(e)].back(); }

int bond_order_value(BondOrder order) {
  switch (order) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 1;
  }
  return 1;
}

void MolGraph::validate() const {
  if (atoms.empty()) throw ParseError("graph has no atoms");
  const int n = num_atoms();
  std::set<std::pair<int, int>> seen;
  for (const BondRecord& b : bonds) {
    if (b.u < 0 || b.v < 0 || b.u >= n || b.v >= n)
      throw ParseError("bond endpoint out of range in graph " + id);
    if (b.u == b.v) throw ParseError("self-loop bond in graph " + id);
    const std::pair<int, int> key = std::minmax(b.u, b.v);
    if (!seen.insert(key).second)
      throw ParseError("duplicate bond in graph " + id);
    if (b.order == BondOrder::Aromatic &&
        !(atoms[b.u].aromatic && atoms[b.v].aromatic))
      throw ParseError("aromatic bond between non-aromatic atoms in graph " +
                       id);
  }
  for (int i = 0; i < n; ++i) {
    const AtomRecord& a = atoms[i];
    if (a.formal_charge < -2 || a.formal_charge > 2)
      throw ParseError("formal charge out of range in graph " + id);
    if (a.num_h < 0 || a.num_h > 8)
      throw ParseError("hydrogen count out of range in graph " + id);
    if (a.aromatic && !a.in_ring)
      throw ParseError("aromatic atom outside any ring in graph " + id);
  }
}

std::vector<std::vector<int>> adjacency(const MolGraph& g) {
  std::vector<std::vector<int>> adj(g.num_atoms());
  for (const BondRecord& b : g.bonds) {
    adj[b.u].push_back(b.v);
    adj[b.v].push_back(b.u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

std::vector<int> degrees(const MolGraph& g) {
  std::vector<int> deg(g.num_atoms(), 0);
  for (const BondRecord& b : g.bonds) {
    ++deg[b.u];
    ++deg[b.v];
  }
  return deg;
}

int aromatic_pi_valence(Element e, bool aromatic, int bond_value_sum,
                        int num_h) {
  if (!aromatic) return 0;
  if (e == Element::B || e == Element::C) return 1;
  if ((e == Element::N || e == Element::P) && bond_value_sum == 2 &&
      num_h == 0) {
    return 1;  // pyridine-like: the pi electron comes from the ring
  }
  return 0;
}

int explicit_valence(const MolGraph& g, int atom) {
  int sum = 0;
  for (const BondRecord& b : g.bonds) {
    if (b.u == atom || b.v == atom) sum += bond_order_value(b.order);
  }
  const AtomRecord& a = g.atoms[atom];
  return sum + aromatic_pi_valence(a.element, a.aromatic, sum, a.num_h);
}

RingMembership ring_membership(const MolGraph& g) {
  const int n = g.num_atoms();
  const int m = g.num_bonds();
  // adjacency with bond indices
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (int bi = 0; bi < m; ++bi) {
    adj[g.bonds[bi].u].push_back({g.bonds[bi].v, bi});
    adj[g.bonds[bi].v].push_back({g.bonds[bi].u, bi});
  }
  // bridge detection (iterative DFS, lowpoint)
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> is_bridge(m, false);
  int timer = 0;
  for (int root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    // frames: (node, parent bond, next edge cursor)
    std::vector<std::array<int, 3>> stack;
    stack.push_back({root, -1, 0});
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      auto& [u, pbond, cursor] = stack.back();
      if (cursor < static_cast<int>(adj[u].size())) {
        const auto [v, bi] = adj[u][cursor++];
        if (bi == pbond) continue;
        if (disc[v] < 0) {
          disc[v] = low[v] = timer++;
          stack.push_back({v, bi, 0});
        } else {
          low[u] = std::min(low[u], disc[v]);
        }
      } else {
        stack.pop_back();
        if (!stack.empty()) {
          const int parent = stack.back()[0];
          low[parent] = std::min(low[parent], low[u]);
          if (low[u] > disc[parent]) is_bridge[pbond] = true;
        }
      }
    }
  }
  RingMembership out;
  out.atoms.assign(n, false);
  out.bonds.assign(m, false);
  for (int bi = 0; bi < m; ++bi) {
    if (is_bridge[bi]) continue;
    out.bonds[bi] = true;
    out.atoms[g.bonds[bi].u] = true;
    out.atoms[g.bonds[bi].v] = true;
  }
  return out;
}

void refresh_ring_and_aromatic_flags(MolGraph& g) {
  const RingMembership rings = ring_membership(g);
  for (int bi = 0; bi < g.num_bonds(); ++bi) g.bonds[bi].in_ring = rings.bonds[bi];
  for (int i = 0; i < g.num_atoms(); ++i) {
    g.atoms[i].in_ring = rings.atoms[i];
    if (!rings.atoms[i]) g.atoms[i].aromatic = false;
  }
  for (BondRecord& b : g.bonds) {
    if (b.order == BondOrder::Aromatic &&
        !(b.in_ring && g.atoms[b.u].aromatic && g.atoms[b.v].aromatic)) {
      b.order = BondOrder::Single;
    }
  }
}

void refresh_conjugation(MolGraph& g) {
  const int n = g.num_atoms();
  std::vector<int> multiple(n, 0);  // count of incident multiple bonds
  for (const BondRecord& b : g.bonds) {
    if (b.order != BondOrder::Single) {
      ++multiple[b.u];
      ++multiple[b.v];
    }
  }
  for (BondRecord& b : g.bonds) {
    if (b.order == BondOrder::Aromatic) {
      b.conjugated = true;
    } else if (b.order != BondOrder::Single) {
      b.conjugated = multiple[b.u] > 1 || multiple[b.v] > 1;
    } else {
      b.conjugated = multiple[b.u] > 0 && multiple[b.v] > 0;
    }
  }
}

}  // namespace cpaformer
