// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cpaformer {

/// Heavy-atom vocabulary. Indices double as categorical feature ids.
enum class Element : std::uint8_t { B, C, N, O, P, S, F, Cl, Br, I };
inline constexpr int kNumElements = 10;

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };
inline constexpr int kNumBondOrders = 4;

const char* element_symbol(Element e);
std::optional<Element> element_from_symbol(const std::string& sym);

/// Fixed atomic masses (unified atomic mass units).
double element_mass(Element e);

/// Feasible valences, smallest first: B 3; C 4; N 3; O 2; P 3,5; S 2,4,6;
/// halogens 1.
const std::vector<int>& element_valences(Element e);
int max_valence(Element e);

struct AtomRecord {
  Element element = Element::C;
  int formal_charge = 0;  // in [-2, 2]
  int num_h = 0;          // explicit+implicit hydrogens, <= 8
  bool aromatic = false;  // implies in_ring
  bool in_ring = false;
  double mass = 0.0;
};

struct BondRecord {
  int u = 0;  // endpoints, stored with u < v
  int v = 0;
  BondOrder order = BondOrder::Single;
  bool conjugated = false;
  bool in_ring = false;
};

/// Undirected simple graph of heavy atoms with typed attributes.
struct MolGraph {
  std::string id;
  std::vector<AtomRecord> atoms;
  std::vector<BondRecord> bonds;

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_bonds() const { return static_cast<int>(bonds.size()); }

  /// Throws ParseError if any structural invariant is violated.
  void validate() const;
};

/// Integer bond order contribution: single 1, double 2, triple 3, aromatic 1.
int bond_order_value(BondOrder order);

std::vector<std::vector<int>> adjacency(const MolGraph& g);
std::vector<int> degrees(const MolGraph& g);

/// Aromatic pi contribution to an atom's valence: 1 for aromatic B/C, and
/// for aromatic N/P only in the two-connection (pyridine-like) case with no
/// explicit hydrogens. Aromatic O/S contribute a lone pair instead.
int aromatic_pi_valence(Element e, bool aromatic, int bond_value_sum,
                        int num_h);

/// Sum of incident bond order values plus the aromatic pi contribution.
int explicit_valence(const MolGraph& g, int atom);

/// Ring membership per atom and per bond (an edge is in a ring iff it is
/// not a bridge).
struct RingMembership {
  std::vector<bool> atoms;
  std::vector<bool> bonds;
};
RingMembership ring_membership(const MolGraph& g);

/// Recomputes ring flags from scratch. Atoms and bonds that leave all rings
/// lose their aromatic flags; de-aromatized bonds become single.
void refresh_ring_and_aromatic_flags(MolGraph& g);

/// Conjugation: aromatic bonds always; a multiple bond when an endpoint
/// carries another multiple bond; a single bond when both endpoints carry
/// some multiple bond.
void refresh_conjugation(MolGraph& g);

}  // namespace cpaformer
