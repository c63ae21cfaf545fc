// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/topo.hpp"

#include <algorithm>
#include <queue>

#include "cpaformer/errors.hpp"

namespace cpaformer::topo {

namespace {

void bfs_from(const std::vector<std::vector<int>>& adj, int src,
              std::vector<int>& dist, int max_depth = -1) {
  std::fill(dist.begin(), dist.end(), SpdMatrix::kUnreachable);
  std::vector<int> queue;
  queue.reserve(adj.size());
  queue.push_back(src);
  dist[src] = 0;
  std::size_t head = 0;
  while (head < queue.size()) {
    const int u = queue[head++];
    if (max_depth >= 0 && dist[u] >= max_depth) continue;
    for (int v : adj[u]) {
      if (dist[v] == SpdMatrix::kUnreachable) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
}

void sort_support(std::vector<SupportEntry>& s) {
  std::sort(s.begin(), s.end(), [](const SupportEntry& a,
                                   const SupportEntry& b) {
    return a.spd != b.spd ? a.spd < b.spd : a.node < b.node;
  });
}

}  // namespace

SpdMatrix all_pairs_spd(const MolGraph& g, std::optional<int> clip) {
  const int n = g.num_atoms();
  SpdMatrix m;
  m.n = n;
  m.d.assign(static_cast<std::size_t>(n) * n, SpdMatrix::kUnreachable);
  const auto adj = adjacency(g);
  std::vector<int> dist(n);
  for (int i = 0; i < n; ++i) {
    bfs_from(adj, i, dist);
    for (int j = 0; j < n; ++j) {
      int d = dist[j];
      if (clip && d != SpdMatrix::kUnreachable && d > *clip) d = *clip;
      m.d[static_cast<std::size_t>(i) * n + j] = d;
    }
  }
  return m;
}

int spd_bin(int d, int k) {
  if (d == SpdMatrix::kUnreachable)
    throw NumericError("spd_bin on unreachable pair");
  if (d < 0 || k < 1) throw NumericError("spd_bin preconditions violated");
  return std::min(d, k);
}

int degree_bin(int d) { return std::min(std::max(d, 0), 15); }

SupportSets truncated_spd(const MolGraph& g, int k) {
  if (k < 1) throw ConfigError("hop radius must be >= 1");
  const int n = g.num_atoms();
  SupportSets out;
  out.k = k;
  out.sets.resize(n);
  const auto adj = adjacency(g);
  std::vector<int> dist(n);
  for (int i = 0; i < n; ++i) {
    bfs_from(adj, i, dist, k);
    auto& s = out.sets[i];
    for (int j = 0; j < n; ++j) {
      if (dist[j] != SpdMatrix::kUnreachable && dist[j] <= k)
        s.push_back({j, dist[j], spd_bin(dist[j], k)});
    }
    sort_support(s);
  }
  return out;
}

SupportSets supports_from_spd(const SpdMatrix& spd, int k) {
  if (k < 1) throw ConfigError("hop radius must be >= 1");
  SupportSets out;
  out.k = k;
  out.sets.resize(spd.n);
  for (int i = 0; i < spd.n; ++i) {
    auto& s = out.sets[i];
    for (int j = 0; j < spd.n; ++j) {
      const int d = spd.at(i, j);
      if (d != SpdMatrix::kUnreachable && d <= k)
        s.push_back({j, d, spd_bin(d, k)});
    }
    sort_support(s);
  }
  return out;
}

SupportSets global_supports(const SpdMatrix& spd, int clip) {
  if (clip < 1) throw ConfigError("spd clip must be >= 1");
  SupportSets out;
  out.k = SupportSets::kGlobal;
  out.sets.resize(spd.n);
  for (int i = 0; i < spd.n; ++i) {
    auto& s = out.sets[i];
    for (int j = 0; j < spd.n; ++j) {
      const int d = spd.at(i, j);
      if (d != SpdMatrix::kUnreachable)
        s.push_back({j, d, std::min(d, clip)});
    }
    sort_support(s);
  }
  return out;
}

double coverage(const MolGraph& g, int k) {
  const SupportSets s = truncated_spd(g, k);
  const int n = g.num_atoms();
  long long total = 0;  // integer sum keeps the percentage exact
  for (int i = 0; i < n; ++i) total += s.size_of(i);
  return static_cast<double>(total) * 100.0 /
         (static_cast<double>(n) * static_cast<double>(n));
}

double corpus_coverage(const std::vector<MolGraph>& graphs, int k) {
  if (graphs.empty()) throw NumericError("empty corpus");
  std::vector<double> c;
  c.reserve(graphs.size());
  for (const MolGraph& g : graphs) c.push_back(coverage(g, k));
  std::sort(c.begin(), c.end());
  const std::size_t n = c.size();
  return n % 2 == 1 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
}

PathEdgeFeatures shortest_path_edge_features(const MolGraph& g,
                                             const SpdMatrix& spd) {
  const int n = g.num_atoms();
  PathEdgeFeatures out;
  out.n = n;
  out.f.assign(static_cast<std::size_t>(n) * n, {});
  const auto adj = adjacency(g);

  // shortest-path counts sigma(s, v) per source via BFS counting
  std::vector<std::vector<double>> sigma(n, std::vector<double>(n, 0.0));
  for (int s = 0; s < n; ++s) {
    auto& sig = sigma[s];
    sig[s] = 1.0;
    // process nodes in increasing distance
    std::vector<int> order;
    order.reserve(n);
    for (int v = 0; v < n; ++v)
      if (spd.at(s, v) != SpdMatrix::kUnreachable) order.push_back(v);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return spd.at(s, a) < spd.at(s, b);
    });
    for (int v : order) {
      if (v == s) continue;
      double acc = 0.0;
      for (int u : adj[v]) {
        if (spd.at(s, u) == spd.at(s, v) - 1) acc += sig[u];
      }
      sig[v] = acc;
    }
  }

  // An edge (u, v) with d(i,u) + 1 + d(v,j) = d(i,j) lies on shortest
  // paths; it is traversed by sigma(i,u) * sigma(j,v) of them. Dividing by
  // sigma(i,j) averages the per-type counts over all tied paths.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int dij = spd.at(i, j);
      if (dij == SpdMatrix::kUnreachable) continue;
      auto& cell = out.f[static_cast<std::size_t>(i) * n + j];
      const double total = sigma[i][j];
      for (const BondRecord& b : g.bonds) {
        for (int dir = 0; dir < 2; ++dir) {
          const int u = dir == 0 ? b.u : b.v;
          const int v = dir == 0 ? b.v : b.u;
          const int diu = spd.at(i, u);
          const int dvj = spd.at(v, j);
          if (diu == SpdMatrix::kUnreachable ||
              dvj == SpdMatrix::kUnreachable)
            continue;
          if (diu + 1 + dvj == dij) {
            cell[static_cast<int>(b.order)] +=
                sigma[i][u] * sigma[j][v] / total;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace cpaformer::topo
