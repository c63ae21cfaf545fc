// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cpaformer/graph.hpp"

namespace cpaformer {

/// Parses a SMILES string over the supported subset: organic-subset atoms
/// (B C N O P S F Cl Br I), lowercase aromatic c/n/o/s, bracket atoms with
/// explicit H count and charge, bonds - = # :, branches, single-digit ring
/// closures 1-9, and '.' component separators. Stereo markers, isotopes and
/// %nn closures are rejected. Parsing stops at the first whitespace.
///
/// Implicit hydrogens are assigned from the valence table; ring membership,
/// aromatic consistency and conjugation are computed from the final graph.
/// Throws ParseError with a character offset on malformed input.
MolGraph parse_smiles(const std::string& text);

struct SmilesWriteResult {
  std::string smiles;
  /// Original atom indices in output order: atom_order[k] is the index in
  /// the input graph of the k-th atom written.
  std::vector<int> atom_order;
};

/// Serializes a graph back to the supported subset. Together with
/// parse_smiles this is a fixed point: re-parsing yields the input graph
/// relabeled by atom_order.
SmilesWriteResult write_smiles(const MolGraph& g);

}  // namespace cpaformer
