// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <set>

#include "cpaformer/errors.hpp"
#include "cpaformer/graph.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/smiles.hpp"
#include "cpaformer/synthetic.hpp"

using namespace cpaformer;

namespace {

std::vector<int> hydrogens(const MolGraph& g) {
  std::vector<int> h;
  for (const AtomRecord& a : g.atoms) h.push_back(a.num_h);
  return h;
}

bool graphs_equal(const MolGraph& a, const MolGraph& b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds())
    return false;
  for (int i = 0; i < a.num_atoms(); ++i) {
    const AtomRecord &x = a.atoms[i], &y = b.atoms[i];
    if (x.element != y.element || x.formal_charge != y.formal_charge ||
        x.num_h != y.num_h || x.aromatic != y.aromatic ||
        x.in_ring != y.in_ring)
      return false;
  }
  auto key = [](const BondRecord& b2) {
    return std::tuple<int, int, int, bool>(b2.u, b2.v,
                                           static_cast<int>(b2.order),
                                           b2.in_ring);
  };
  std::vector<std::tuple<int, int, int, bool>> ba, bb;
  for (const BondRecord& x : a.bonds) ba.push_back(key(x));
  for (const BondRecord& x : b.bonds) bb.push_back(key(x));
  std::sort(ba.begin(), ba.end());
  std::sort(bb.begin(), bb.end());
  return ba == bb;
}

MolGraph relabel(const MolGraph& g, const std::vector<int>& order) {
  // order[k] = original index of new node k
  std::vector<int> inverse(g.num_atoms());
  for (int k = 0; k < g.num_atoms(); ++k) inverse[order[k]] = k;
  MolGraph out;
  out.id = g.id;
  for (int k = 0; k < g.num_atoms(); ++k) out.atoms.push_back(g.atoms[order[k]]);
  for (const BondRecord& b : g.bonds) {
    BondRecord nb = b;
    nb.u = std::min(inverse[b.u], inverse[b.v]);
    nb.v = std::max(inverse[b.u], inverse[b.v]);
    out.bonds.push_back(nb);
  }
  return out;
}

}  // namespace

TEST_CASE("ethanol parses with expected hydrogens") {
  const MolGraph g = parse_smiles("CCO");
  CHECK(g.num_atoms() == 3);
  CHECK(g.num_bonds() == 2);
  CHECK(g.atoms[0].element == Element::C);
  CHECK(g.atoms[2].element == Element::O);
  CHECK(hydrogens(g) == std::vector<int>{3, 2, 1});
  for (const BondRecord& b : g.bonds) CHECK(b.order == BondOrder::Single);
}

TEST_CASE("benzene: six aromatic carbons, six aromatic ring bonds, 1 H each") {
  const MolGraph g = parse_smiles("c1ccccc1");
  CHECK(g.num_atoms() == 6);
  CHECK(g.num_bonds() == 6);
  for (const AtomRecord& a : g.atoms) {
    CHECK(a.element == Element::C);
    CHECK(a.aromatic);
    CHECK(a.in_ring);
    CHECK(a.num_h == 1);
  }
  for (const BondRecord& b : g.bonds) {
    CHECK(b.order == BondOrder::Aromatic);
    CHECK(b.in_ring);
    CHECK(b.conjugated);
  }
}

TEST_CASE("unclosed ring closure reports the digit offset") {
  try {
    parse_smiles("C1CC");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 1);
    CHECK(std::string(e.what()).find("unclosed ring closure 1") !=
          std::string::npos);
  }
}

TEST_CASE("parser error taxonomy") {
  CHECK_THROWS_AS(parse_smiles(""), ParseError);
  CHECK_THROWS_AS(parse_smiles("C(C"), ParseError);    // unbalanced paren
  CHECK_THROWS_AS(parse_smiles("C)C"), ParseError);    // unbalanced paren
  CHECK_THROWS_AS(parse_smiles("Xy"), ParseError);     // unknown symbol
  CHECK_THROWS_AS(parse_smiles("C(C)(C)(C)(C)C"), ParseError);  // valence
  CHECK_THROWS_AS(parse_smiles("C/C=C/C"), ParseError);  // stereo
  CHECK_THROWS_AS(parse_smiles("[13C]"), ParseError);    // isotope
  CHECK_THROWS_AS(parse_smiles("C%11CC%11"), ParseError);
  CHECK_THROWS_AS(parse_smiles("cc"), ParseError);  // aromatic outside ring
}

TEST_CASE("valence and aromatic hydrogen accounting") {
  // furan/thiophene: aromatic O/S carry no pi bond and no hydrogens
  const MolGraph furan = parse_smiles("c1ccoc1");
  int o_idx = -1;
  for (int i = 0; i < furan.num_atoms(); ++i)
    if (furan.atoms[i].element == Element::O) o_idx = i;
  REQUIRE(o_idx >= 0);
  CHECK(furan.atoms[o_idx].num_h == 0);

  // pyridine nitrogen: two ring bonds plus the pi electron, no H
  const MolGraph pyridine = parse_smiles("c1ccncc1");
  for (const AtomRecord& a : pyridine.atoms)
    if (a.element == Element::N) CHECK(a.num_h == 0);

  // pyrrole requires the explicit bracket H
  const MolGraph pyrrole = parse_smiles("c1cc[nH]c1");
  for (const AtomRecord& a : pyrrole.atoms)
    if (a.element == Element::N) CHECK(a.num_h == 1);

  // charges
  const MolGraph ammonium = parse_smiles("[NH4+]");
  CHECK(ammonium.atoms[0].formal_charge == 1);
  CHECK(ammonium.atoms[0].num_h == 4);
  const MolGraph alkoxide = parse_smiles("CC[O-]");
  CHECK(alkoxide.atoms[2].formal_charge == -1);
  CHECK(alkoxide.atoms[2].num_h == 0);
}

TEST_CASE("implicit hydrogens never exceed the valence table") {
  RngStream rng(11, "smiles_h");
  for (int trial = 0; trial < 50; ++trial) {
    const MolGraph g = synthetic::random_molecule(rng.next_int(2, 14), rng);
    for (int i = 0; i < g.num_atoms(); ++i) {
      CHECK(explicit_valence(g, i) + g.atoms[i].num_h <=
            max_valence(g.atoms[i].element));
    }
  }
}

TEST_CASE("ring detection marks exactly the cycle edges") {
  const MolGraph g = parse_smiles("C1CC1CC");  // cyclopropane with a tail
  int ring_bonds = 0, ring_atoms = 0;
  for (const BondRecord& b : g.bonds) ring_bonds += b.in_ring ? 1 : 0;
  for (const AtomRecord& a : g.atoms) ring_atoms += a.in_ring ? 1 : 0;
  CHECK(ring_bonds == 3);
  CHECK(ring_atoms == 3);
}

TEST_CASE("parse -> serialize -> parse is a fixed point") {
  const std::vector<std::string> samples = {
      "CCO",
      "c1ccccc1",
      "CC(=O)O",
      "C1CC1CC",
      "c1ccc(cc1)C(F)(F)F",
      "C#N",
      "CC[O-]",
      "[NH4+]",
      "c1cc[nH]c1",
      "O=C(N)c1ccccc1",
      "CC.OC",  // two components
      "C1CCC2(CC1)CC2",
  };
  for (const std::string& s : samples) {
    CAPTURE(s);
    const MolGraph g1 = parse_smiles(s);
    const SmilesWriteResult w = write_smiles(g1);
    const MolGraph g2 = parse_smiles(w.smiles);
    CHECK(graphs_equal(relabel(g1, w.atom_order), g2));
    // second pass: already-canonical order, byte-stable output
    const SmilesWriteResult w2 = write_smiles(g2);
    const MolGraph g3 = parse_smiles(w2.smiles);
    CHECK(graphs_equal(relabel(g2, w2.atom_order), g3));
  }
}

TEST_CASE("roundtrip holds on random molecules") {
  RngStream rng(42, "roundtrip");
  for (int trial = 0; trial < 60; ++trial) {
    const MolGraph g = synthetic::random_molecule(rng.next_int(1, 16), rng);
    const SmilesWriteResult w = write_smiles(g);
    CAPTURE(w.smiles);
    const MolGraph back = parse_smiles(w.smiles);
    CHECK(graphs_equal(relabel(g, w.atom_order), back));
  }
}

TEST_CASE("graph validation rejects broken invariants") {
  MolGraph g = parse_smiles("CC");
  g.bonds.push_back(g.bonds[0]);
  CHECK_THROWS_AS(g.validate(), ParseError);

  MolGraph h = parse_smiles("CC");
  h.atoms[0].aromatic = true;  // aromatic but not in a ring
  CHECK_THROWS_AS(h.validate(), ParseError);

  MolGraph q = parse_smiles("CC");
  q.atoms[0].formal_charge = 3;
  CHECK_THROWS_AS(q.validate(), ParseError);
}
