// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/corpus.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cpaformer/errors.hpp"
#include "cpaformer/smiles.hpp"

namespace cpaformer {

namespace {

using nlohmann::json;

const char* kOrderNames[kNumBondOrders] = {"single", "double", "triple",
                                           "aromatic"};

BondOrder order_from_name(const std::string& name) {
  for (int i = 0; i < kNumBondOrders; ++i) {
    if (name == kOrderNames[i]) return static_cast<BondOrder>(i);
  }
  throw ParseError("unknown bond order '" + name + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

std::string graph_to_json_line(const MolGraph& g) {
  json j;
  j["id"] = g.id;
  json atoms = json::array();
  for (const AtomRecord& a : g.atoms) {
    atoms.push_back({{"el", element_symbol(a.element)},
                     {"chg", a.formal_charge},
                     {"nH", a.num_h},
                     {"arom", a.aromatic},
                     {"ring", a.in_ring},
                     {"mass", a.mass}});
  }
  j["atoms"] = std::move(atoms);
  json bonds = json::array();
  for (const BondRecord& b : g.bonds) {
    bonds.push_back(json::array(
        {b.u, b.v,
         {{"order", kOrderNames[static_cast<int>(b.order)]},
          {"conj", b.conjugated},
          {"ring", b.in_ring}}}));
  }
  j["bonds"] = std::move(bonds);
  return j.dump();
}

MolGraph graph_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  MolGraph g;
  try {
    g.id = j.value("id", "");
    for (const json& ja : j.at("atoms")) {
      AtomRecord a;
      const std::string el = ja.at("el").get<std::string>();
      const auto e = element_from_symbol(el);
      if (!e) throw ParseError("unknown atom symbol '" + el + "'");
      a.element = *e;
      a.formal_charge = ja.at("chg").get<int>();
      a.num_h = ja.at("nH").get<int>();
      a.aromatic = ja.at("arom").get<bool>();
      a.in_ring = ja.at("ring").get<bool>();
      a.mass = ja.at("mass").get<double>();
      g.atoms.push_back(a);
    }
    for (const json& jb : j.at("bonds")) {
      if (!jb.is_array() || jb.size() != 3)
        throw ParseError("bond record must be [u, v, {fields}]");
      BondRecord b;
      int u = jb.at(0).get<int>();
      int v = jb.at(1).get<int>();
      b.u = std::min(u, v);
      b.v = std::max(u, v);
      const json& f = jb.at(2);
      b.order = order_from_name(f.at("order").get<std::string>());
      b.conjugated = f.at("conj").get<bool>();
      b.in_ring = f.at("ring").get<bool>();
      g.bonds.push_back(b);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("schema violation: ") + e.what());
  }
  g.validate();
  return g;
}

LoadResult load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  LoadResult out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      MolGraph g = graph_from_json_line(t);
      double label = std::numeric_limits<double>::quiet_NaN();
      const json j = json::parse(t);
      if (j.contains("label")) {
        label = j.at("label").get<double>();
        out.has_labels = true;
      }
      out.graphs.push_back(std::move(g));
      out.labels.push_back(label);
    } catch (const ParseError& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  return out;
}

LoadResult load_smiles_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  LoadResult out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::istringstream ss(t);
    std::string smiles, id;
    ss >> smiles >> id;
    try {
      MolGraph g = parse_smiles(smiles);
      g.id = id.empty() ? "line" + std::to_string(lineno) : id;
      out.graphs.push_back(std::move(g));
      out.labels.push_back(std::numeric_limits<double>::quiet_NaN());
    } catch (const ParseError& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  return out;
}

void save_jsonl(const std::vector<MolGraph>& graphs, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw IoError("cannot open '" + path + "' for writing");
  for (const MolGraph& g : graphs) outf << graph_to_json_line(g) << '\n';
  if (!outf) throw IoError("write failure on '" + path + "'");
}

}  // namespace cpaformer
