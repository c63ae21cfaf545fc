// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <utility>

#include "cpaformer/errors.hpp"

namespace cpaformer {

namespace {

struct ParsedAtom {
  AtomRecord record;
  int offset = 0;
  bool bracket = false;  // bracket atoms carry explicit H counts
};

struct RingOpening {
  int atom = -1;
  int bond = -1;  // pending BondOrder value, -1 if unspecified
  int offset = 0;
};

bool is_aromatic_symbol(char c) {
  return c == 'c' || c == 'n' || c == 'o' || c == 's';
}

Element aromatic_element(char c) {
  switch (c) {
    case 'c': return Element::C;
    case 'n': return Element::N;
    case 'o': return Element::O;
    default: return Element::S;
  }
}

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  MolGraph run() {
    if (text_.empty()) throw ParseError("empty SMILES", 0);
    while (pos_ < text_.size() && !std::isspace(
               static_cast<unsigned char>(text_[pos_]))) {
      step();
    }
    if (atoms_.empty()) throw ParseError("no atoms in SMILES", 0);
    if (!branch_stack_.empty())
      throw ParseError("unbalanced parenthesis", branch_stack_.back().second);
    for (const auto& [digit, open] : rings_) {
      throw ParseError("unclosed ring closure " + std::string(1, digit),
                       open.offset);
    }
    return finalize();
  }

 private:
  void step() {
    const char c = text_[pos_];
    const int offset = static_cast<int>(pos_);
    if (c == '(') {
      if (prev_ < 0) throw ParseError("branch before any atom", offset);
      branch_stack_.push_back({prev_, offset});
      ++pos_;
    } else if (c == ')') {
      if (branch_stack_.empty())
        throw ParseError("unbalanced parenthesis", offset);
      prev_ = branch_stack_.back().first;
      branch_stack_.pop_back();
      ++pos_;
    } else if (c == '-' || c == '=' || c == '#' || c == ':') {
      if (pending_bond_ != -1)
        throw ParseError("dangling bond symbol", offset);
      pending_bond_ = bond_from_char(c);
      ++pos_;
    } else if (c == '.') {
      if (pending_bond_ != -1)
        throw ParseError("bond symbol before component separator", offset);
      prev_ = -1;
      ++pos_;
    } else if (c >= '1' && c <= '9') {
      ring_closure(c, offset);
      ++pos_;
    } else if (c == '%') {
      throw ParseError("multi-digit ring closures are not supported", offset);
    } else if (c == '[') {
      bracket_atom(offset);
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      organic_atom(offset);
    } else if (is_aromatic_symbol(c)) {
      ParsedAtom a;
      a.record.element = aromatic_element(c);
      a.record.aromatic = true;
      a.offset = offset;
      add_atom(a);
      ++pos_;
    } else if (c == '/' || c == '\\' || c == '@') {
      throw ParseError("stereo markers are not supported", offset);
    } else {
      throw ParseError("unexpected character '" + std::string(1, c) + "'",
                       offset);
    }
  }

  static int bond_from_char(char c) {
    switch (c) {
      case '-': return static_cast<int>(BondOrder::Single);
      case '=': return static_cast<int>(BondOrder::Double);
      case '#': return static_cast<int>(BondOrder::Triple);
      default: return static_cast<int>(BondOrder::Aromatic);
    }
  }

  void organic_atom(int offset) {
    // two-letter symbols first
    std::string sym(1, text_[pos_]);
    if (pos_ + 1 < text_.size()) {
      const char n = text_[pos_ + 1];
      if ((sym == "C" && n == 'l') || (sym == "B" && n == 'r')) sym += n;
    }
    const auto el = element_from_symbol(sym);
    if (!el) throw ParseError("unknown atom symbol '" + sym + "'", offset);
    ParsedAtom a;
    a.record.element = *el;
    a.offset = offset;
    add_atom(a);
    pos_ += sym.size();
  }

  void bracket_atom(int offset) {
    std::size_t i = pos_ + 1;
    auto need = [&](const char* what) {
      if (i >= text_.size())
        throw ParseError(std::string("unterminated bracket atom, expected ") +
                             what,
                         offset);
    };
    need("symbol");
    if (std::isdigit(static_cast<unsigned char>(text_[i])))
      throw ParseError("isotope labels are not supported",
                       static_cast<int>(i));
    ParsedAtom a;
    a.bracket = true;
    a.offset = offset;
    const int sym_off = static_cast<int>(i);
    if (std::isupper(static_cast<unsigned char>(text_[i]))) {
      std::string sym(1, text_[i]);
      if (i + 1 < text_.size() &&
          std::islower(static_cast<unsigned char>(text_[i + 1])) &&
          text_[i + 1] != 'h') {
        const std::string two = sym + text_[i + 1];
        if (element_from_symbol(two)) {
          sym = two;
        }
      }
      const auto el = element_from_symbol(sym);
      if (!el)
        throw ParseError("unknown atom symbol '" + sym + "'", sym_off);
      a.record.element = *el;
      i += sym.size();
    } else if (is_aromatic_symbol(text_[i])) {
      a.record.element = aromatic_element(text_[i]);
      a.record.aromatic = true;
      ++i;
    } else {
      throw ParseError("unknown atom symbol '" + std::string(1, text_[i]) +
                           "'",
                       sym_off);
    }
    need("']'");
    if (text_[i] == '@')
      throw ParseError("stereo markers are not supported",
                       static_cast<int>(i));
    if (text_[i] == 'H') {
      ++i;
      need("']'");
      int count = 1;
      if (std::isdigit(static_cast<unsigned char>(text_[i]))) {
        count = text_[i] - '0';
        ++i;
      }
      a.record.num_h = count;
    }
    need("']'");
    if (text_[i] == '+' || text_[i] == '-') {
      const int sign = text_[i] == '+' ? 1 : -1;
      const char sym = text_[i];
      ++i;
      need("']'");
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(text_[i]))) {
        magnitude = text_[i] - '0';
        ++i;
      } else {
        while (i < text_.size() && text_[i] == sym) {
          ++magnitude;
          ++i;
        }
      }
      a.record.formal_charge = sign * magnitude;
      if (a.record.formal_charge < -2 || a.record.formal_charge > 2)
        throw ParseError("formal charge out of range", offset);
    }
    need("']'");
    if (text_[i] != ']')
      throw ParseError("unterminated bracket atom, expected ']'",
                       static_cast<int>(i));
    add_atom(a);
    pos_ = i + 1;
  }

  void add_atom(const ParsedAtom& a) {
    const int idx = static_cast<int>(atoms_.size());
    atoms_.push_back(a);
    if (prev_ >= 0) {
      add_bond(prev_, idx, take_pending_bond(prev_, idx), a.offset);
    } else if (pending_bond_ != -1) {
      throw ParseError("bond symbol before any atom", a.offset);
    }
    prev_ = idx;
  }

  int take_pending_bond(int u, int v) {
    const int b = pending_bond_;
    pending_bond_ = -1;
    if (b != -1) return b;
    return default_bond(u, v);
  }

  int default_bond(int u, int v) const {
    return atoms_[u].record.aromatic && atoms_[v].record.aromatic
               ? static_cast<int>(BondOrder::Aromatic)
               : static_cast<int>(BondOrder::Single);
  }

  void ring_closure(char digit, int offset) {
    if (prev_ < 0)
      throw ParseError("ring closure before any atom", offset);
    const int pending = pending_bond_;
    pending_bond_ = -1;
    auto it = rings_.find(digit);
    if (it == rings_.end()) {
      rings_[digit] = RingOpening{prev_, pending, offset};
      return;
    }
    const RingOpening open = it->second;
    rings_.erase(it);
    if (open.atom == prev_)
      throw ParseError("ring closure bonds an atom to itself", offset);
    int order;
    if (open.bond != -1 && pending != -1 && open.bond != pending)
      throw ParseError("conflicting ring closure bond orders", offset);
    if (open.bond != -1)
      order = open.bond;
    else if (pending != -1)
      order = pending;
    else
      order = default_bond(open.atom, prev_);
    add_bond(open.atom, prev_, order, offset);
  }

  void add_bond(int u, int v, int order, int offset) {
    const std::pair<int, int> key = std::minmax(u, v);
    for (const BondRecord& b : bonds_) {
      if (std::pair<int, int>(std::minmax(b.u, b.v)) == key)
        throw ParseError("duplicate bond", offset);
    }
    BondRecord b;
    b.u = key.first;
    b.v = key.second;
    b.order = static_cast<BondOrder>(order);
    bonds_.push_back(b);
  }

  MolGraph finalize() {
    MolGraph g;
    for (const ParsedAtom& a : atoms_) g.atoms.push_back(a.record);
    g.bonds = bonds_;

    const RingMembership rings = ring_membership(g);
    for (int i = 0; i < g.num_atoms(); ++i) {
      g.atoms[i].in_ring = rings.atoms[i];
      if (g.atoms[i].aromatic && !rings.atoms[i])
        throw ParseError("aromatic atom outside any ring", atoms_[i].offset);
    }
    for (int bi = 0; bi < g.num_bonds(); ++bi)
      g.bonds[bi].in_ring = rings.bonds[bi];

    // hydrogens and valence
    std::vector<int> base(g.num_atoms(), 0);
    for (const BondRecord& b : g.bonds) {
      base[b.u] += bond_order_value(b.order);
      base[b.v] += bond_order_value(b.order);
    }
    for (int i = 0; i < g.num_atoms(); ++i) {
      AtomRecord& a = g.atoms[i];
      if (atoms_[i].bracket) {
        const int total = base[i] +
                          aromatic_pi_valence(a.element, a.aromatic, base[i],
                                              a.num_h) +
                          a.num_h;
        const int cap = max_valence(a.element) +
                        std::max(0, a.formal_charge);
        if (total > cap)
          throw ParseError("valence overflow", atoms_[i].offset);
      } else {
        const int adj = base[i] + aromatic_pi_valence(a.element, a.aromatic,
                                                      base[i], 0);
        int chosen = -1;
        for (int v : element_valences(a.element)) {
          if (v >= adj) {
            chosen = v;
            break;
          }
        }
        if (chosen < 0)
          throw ParseError("valence overflow", atoms_[i].offset);
        a.num_h = chosen - adj;
      }
      a.mass = element_mass(a.element);
    }
    refresh_conjugation(g);
    g.validate();
    return g;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::vector<ParsedAtom> atoms_;
  std::vector<BondRecord> bonds_;
  std::vector<std::pair<int, int>> branch_stack_;  // (atom, '(' offset)
  std::map<char, RingOpening> rings_;
  int prev_ = -1;
  int pending_bond_ = -1;
};

/// Default hydrogen count a bare (non-bracket) atom token would get.
int default_implicit_h(const MolGraph& g, int atom) {
  int base = 0;
  for (const BondRecord& b : g.bonds) {
    if (b.u == atom || b.v == atom) base += bond_order_value(b.order);
  }
  const AtomRecord& a = g.atoms[atom];
  const int adj =
      base + aromatic_pi_valence(a.element, a.aromatic, base, 0);
  for (int v : element_valences(a.element)) {
    if (v >= adj) return v - adj;
  }
  return -1;
}

class Writer {
 public:
  explicit Writer(const MolGraph& g) : g_(g), adj_(g.num_atoms()) {
    for (int bi = 0; bi < g.num_bonds(); ++bi) {
      adj_[g.bonds[bi].u].push_back({g.bonds[bi].v, bi});
      adj_[g.bonds[bi].v].push_back({g.bonds[bi].u, bi});
    }
    for (auto& row : adj_) std::sort(row.begin(), row.end());
  }

  SmilesWriteResult run() {
    const int n = g_.num_atoms();
    visited_.assign(n, false);
    bond_used_.assign(g_.num_bonds(), false);
    plan_ring_digits();
    bool first = true;
    for (int i = 0; i < n; ++i) {
      if (visited_[i]) continue;
      if (!first) out_ += '.';
      first = false;
      emit(i, -1);
    }
    return {out_, order_};
  }

 private:
  // Assign ring-closure digits: DFS marks tree edges; every remaining edge
  // is a ring closure between an atom and an earlier-visited one.
  void plan_ring_digits() {
    const int n = g_.num_atoms();
    std::vector<bool> seen(n, false);
    std::vector<int> stack;
    std::vector<bool> tree(g_.num_bonds(), false);
    for (int root = 0; root < n; ++root) {
      if (seen[root]) continue;
      stack.push_back(root);
      seen[root] = true;
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (const auto& [v, bi] : adj_[u]) {
          if (!seen[v]) {
            seen[v] = true;
            tree[bi] = true;
            stack.push_back(v);
          }
        }
      }
    }
    ring_bond_.assign(g_.num_bonds(), false);
    for (int bi = 0; bi < g_.num_bonds(); ++bi)
      ring_bond_[bi] = !tree[bi];
  }

  void emit(int start, int parent_bond) {
    // iterative DFS with explicit frames so deep chains are safe
    struct Frame {
      int atom;
      int from_bond;
      std::size_t next = 0;
      bool opened = false;
      std::vector<int> todo;  // tree bonds to descend, in neighbor order
    };
    std::vector<Frame> frames;
    frames.push_back({start, parent_bond, 0, false, {}});
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (!f.opened) {
        f.opened = true;
        if (f.from_bond >= 0) out_ += bond_token(f.from_bond);
        write_atom(f.atom);
        visited_[f.atom] = true;
        order_.push_back(f.atom);
        // ring closures at this atom
        for (const auto& [v, bi] : adj_[f.atom]) {
          if (!ring_bond_[bi]) continue;
          auto it = open_digit_.find(bi);
          if (it == open_digit_.end()) {
            const int d = alloc_digit(bi);
            out_ += bond_token_ring(bi);
            out_ += static_cast<char>('0' + d);
          } else {
            out_ += bond_token_ring(bi);
            out_ += static_cast<char>('0' + it->second);
            free_digit(bi);
          }
        }
        for (const auto& [v, bi] : adj_[f.atom]) {
          if (ring_bond_[bi] || bond_used_[bi] || visited_[v]) continue;
          f.todo.push_back(bi);
        }
      }
      if (f.next < f.todo.size()) {
        const int bi = f.todo[f.next++];
        bond_used_[bi] = true;
        const int v = g_.bonds[bi].u == f.atom ? g_.bonds[bi].v
                                               : g_.bonds[bi].u;
        const bool branch = f.next < f.todo.size();
        if (branch) out_ += '(';
        pending_close_.push_back(branch);
        frames.push_back({v, bi, 0, false, {}});
      } else {
        frames.pop_back();
        if (!pending_close_.empty()) {
          if (pending_close_.back()) out_ += ')';
          pending_close_.pop_back();
        }
      }
    }
  }

  int alloc_digit(int bond) {
    for (int d = 1; d <= 9; ++d) {
      if (!digit_in_use_[d]) {
        digit_in_use_[d] = true;
        open_digit_[bond] = d;
        return d;
      }
    }
    throw ParseError("more than 9 simultaneously open ring closures");
  }

  void free_digit(int bond) {
    digit_in_use_[open_digit_[bond]] = false;
    open_digit_.erase(bond);
  }

  std::string bond_token(int bi) const {
    const BondRecord& b = g_.bonds[bi];
    const bool both_aromatic =
        g_.atoms[b.u].aromatic && g_.atoms[b.v].aromatic;
    switch (b.order) {
      case BondOrder::Single: return both_aromatic ? "-" : "";
      case BondOrder::Double: return "=";
      case BondOrder::Triple: return "#";
      case BondOrder::Aromatic: return "";
    }
    return "";
  }

  std::string bond_token_ring(int bi) const { return bond_token(bi); }

  void write_atom(int i) {
    const AtomRecord& a = g_.atoms[i];
    std::string sym = element_symbol(a.element);
    if (a.aromatic) {
      if (a.element != Element::C && a.element != Element::N &&
          a.element != Element::O && a.element != Element::S)
        throw ParseError("aromatic " + sym +
                         " is outside the supported subset");
      for (char& c : sym) c = static_cast<char>(std::tolower(c));
    }
    const bool bracket =
        a.formal_charge != 0 || a.num_h != default_implicit_h(g_, i);
    if (!bracket) {
      out_ += sym;
      return;
    }
    out_ += '[';
    out_ += sym;
    if (a.num_h == 1) {
      out_ += 'H';
    } else if (a.num_h > 1) {
      out_ += 'H';
      out_ += static_cast<char>('0' + a.num_h);
    }
    if (a.formal_charge != 0) {
      out_ += a.formal_charge > 0 ? '+' : '-';
      const int mag = std::abs(a.formal_charge);
      if (mag > 1) out_ += static_cast<char>('0' + mag);
    }
    out_ += ']';
  }

  const MolGraph& g_;
  std::vector<std::vector<std::pair<int, int>>> adj_;
  std::vector<bool> visited_, bond_used_, ring_bond_;
  std::map<int, int> open_digit_;
  std::array<bool, 10> digit_in_use_{};
  std::vector<bool> pending_close_;
  std::string out_;
  std::vector<int> order_;
};

}  // namespace

MolGraph parse_smiles(const std::string& text) { return Parser(text).run(); }

SmilesWriteResult write_smiles(const MolGraph& g) {
  g.validate();
  return Writer(g).run();
}

}  // namespace cpaformer
