// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cpaformer/graph.hpp"

namespace cpaformer {

struct CorpusError {
  int line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<MolGraph> graphs;       // input order preserved
  std::vector<CorpusError> errors;    // malformed lines, never dropped silently
  std::vector<double> labels;         // aligned with graphs; NaN when absent
  bool has_labels = false;
};

/// One JSON object per line:
///   {"id","atoms":[{"el","chg","nH","arom","ring","mass"}],
///    "bonds":[[u,v,{"order","conj","ring"}]]}
/// An optional "label" number per record is picked up for supervised runs.
LoadResult load_jsonl(const std::string& path);

/// One molecule per line; "#" starts a comment; blank lines skipped.
/// An optional whitespace-separated id follows the SMILES.
LoadResult load_smiles_file(const std::string& path);

void save_jsonl(const std::vector<MolGraph>& graphs, const std::string& path);

std::string graph_to_json_line(const MolGraph& g);
MolGraph graph_from_json_line(const std::string& line);

}  // namespace cpaformer
