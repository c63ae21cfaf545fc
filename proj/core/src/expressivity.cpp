// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/expressivity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cpaformer/errors.hpp"
#include "cpaformer/features.hpp"
#include "cpaformer/ssl.hpp"

namespace cpaformer::expressivity {

namespace {

Vec weighted_sum(const std::vector<Vec>& values,
                 const std::vector<double>& weights) {
  Vec out(values.empty() ? 0 : values[0].size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t d = 0; d < out.size(); ++d)
      out[d] += weights[i] * values[i][d];
  return out;
}

Vec plain_sum(const std::vector<Vec>& values) {
  Vec out(values.empty() ? 0 : values[0].size(), 0.0);
  for (const Vec& v : values)
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += v[d];
  return out;
}

double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

ReplicationPair build_replication_pair(const std::vector<Vec>& base,
                                       int lambda, int lambda_prime,
                                       AttentionProfile profile,
                                       RngStream* rng) {
  if (base.empty()) throw ConfigError("base multiset must be nonempty");
  if (lambda < 1 || lambda_prime < 1 || lambda == lambda_prime)
    throw ConfigError("multiplicities must be >= 1 and distinct");
  ReplicationPair pair;
  pair.base = base;
  pair.lambda = lambda;
  pair.lambda_prime = lambda_prime;

  std::vector<double> mass(base.size());
  if (profile == AttentionProfile::kUniform) {
    std::fill(mass.begin(), mass.end(), 1.0 / base.size());
  } else {
    if (rng == nullptr)
      throw ConfigError("random mass profile needs an rng stream");
    double total = 0.0;
    for (double& m : mass) {
      m = rng->next_uniform(0.05, 1.0);
      total += m;
    }
    for (double& m : mass) m /= total;
  }

  auto replicate = [&](int times, std::vector<Vec>* values,
                       std::vector<double>* weights) {
    for (int copy = 0; copy < times; ++copy) {
      for (std::size_t b = 0; b < base.size(); ++b) {
        values->push_back(base[b]);
        weights->push_back(mass[b] / times);
      }
    }
  };
  replicate(lambda, &pair.values_a, &pair.weights_a);
  replicate(lambda_prime, &pair.values_b, &pair.weights_b);
  return pair;
}

BlindnessResult check_blindness(const ReplicationPair& pair) {
  BlindnessResult r;
  r.output_a = weighted_sum(pair.values_a, pair.weights_a);
  r.output_b = weighted_sum(pair.values_b, pair.weights_b);
  r.max_abs_diff = max_abs_diff(r.output_a, r.output_b);
  r.equal = r.max_abs_diff <= 1e-12;
  return r;
}

namespace {

SeparationResult separation_impl(const ReplicationPair& pair, const Vec& gate,
                                 bool normalize) {
  const std::size_t dim = pair.base[0].size();
  if (gate.size() != dim) throw ShapeError("gate dimension mismatch");
  Vec mean(dim, 0.0);
  for (const Vec& b : pair.base)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += b[d];
  for (double& m : mean) m /= static_cast<double>(pair.base.size());

  SeparationResult r;
  const Vec soft_a = weighted_sum(pair.values_a, pair.weights_a);
  const Vec soft_b = weighted_sum(pair.values_b, pair.weights_b);
  Vec sum_a = plain_sum(pair.values_a);
  Vec sum_b = plain_sum(pair.values_b);
  if (normalize) {
    for (std::size_t d = 0; d < dim; ++d) {
      sum_a[d] /= static_cast<double>(pair.values_a.size());
      sum_b[d] /= static_cast<double>(pair.values_b.size());
    }
  }
  r.output_a.resize(dim);
  r.output_b.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    r.output_a[d] = soft_a[d] + gate[d] * sum_a[d];
    r.output_b[d] = soft_b[d] + gate[d] * sum_b[d];
  }

  // witnessing coordinate: the largest |g_r * mean_r|
  double best = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double score = std::abs(gate[d] * mean[d]);
    if (score > best) {
      best = score;
      r.witness_coord = static_cast<int>(d);
    }
  }
  const bool mean_nonzero = best > 0.0;
  if (!mean_nonzero) {
    r.inconclusive = true;
    return r;
  }
  if (!normalize) {
    r.predicted_diff = std::abs(
        gate[r.witness_coord] * (pair.lambda - pair.lambda_prime) *
        static_cast<double>(pair.base.size()) * mean[r.witness_coord]);
  }
  r.witness_diff =
      std::abs(r.output_a[r.witness_coord] - r.output_b[r.witness_coord]);
  r.distinct = max_abs_diff(r.output_a, r.output_b) > 1e-12;
  return r;
}

}  // namespace

SeparationResult check_cpa_separation(const ReplicationPair& pair,
                                      const Vec& gate) {
  return separation_impl(pair, gate, false);
}

SeparationResult check_norm_cpa_collision(const ReplicationPair& pair,
                                          const Vec& gate) {
  return separation_impl(pair, gate, true);
}

MeanCollision mean_collision(const std::vector<Vec>& multiset) {
  if (multiset.empty()) throw ConfigError("multiset must be nonempty");
  MeanCollision out;
  out.multiset_a = multiset;
  out.multiset_b = multiset;
  const std::size_t dim = multiset[0].size();
  Vec mean(dim, 0.0);
  for (const Vec& v : multiset)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
  for (double& m : mean) m /= static_cast<double>(multiset.size());
  out.multiset_b.push_back(mean);

  auto mean_of = [dim](const std::vector<Vec>& m) {
    Vec out_mean(dim, 0.0);
    for (const Vec& v : m)
      for (std::size_t d = 0; d < dim; ++d) out_mean[d] += v[d];
    for (double& x : out_mean) x /= static_cast<double>(m.size());
    return out_mean;
  };
  out.mean_a = mean_of(out.multiset_a);
  out.mean_b = mean_of(out.multiset_b);
  out.sum_a = plain_sum(out.multiset_a);
  out.sum_b = plain_sum(out.multiset_b);
  out.mean_diff = max_abs_diff(out.mean_a, out.mean_b);
  return out;
}

RandomMlp::RandomMlp(int in, int hid, int out, std::uint64_t seed,
                     const std::string& name)
    : in_dim(in), hidden(hid), out_dim(out) {
  RngStream rng(seed, "mlp/" + name);
  auto fill = [&](std::vector<double>& w, int rows, int cols) {
    w.resize(static_cast<std::size_t>(rows) * cols);
    const double a = std::sqrt(6.0 / (rows + cols));
    for (double& v : w) v = rng.next_uniform(-a, a);
  };
  fill(w1, in, hid);
  fill(b1, 1, hid);
  fill(w2, hid, out);
  fill(b2, 1, out);
}

Vec RandomMlp::apply(const Vec& x) const {
  if (static_cast<int>(x.size()) != in_dim)
    throw ShapeError("RandomMlp input dimension mismatch");
  Vec h(hidden, 0.0);
  for (int j = 0; j < hidden; ++j) {
    double acc = b1[j];
    for (int i = 0; i < in_dim; ++i)
      acc += x[i] * w1[static_cast<std::size_t>(i) * hidden + j];
    h[j] = std::tanh(acc);
  }
  Vec y(out_dim, 0.0);
  for (int j = 0; j < out_dim; ++j) {
    double acc = b2[j];
    for (int i = 0; i < hidden; ++i)
      acc += h[i] * w2[static_cast<std::size_t>(i) * out_dim + j];
    y[j] = acc;
  }
  return y;
}

Vec composed_cpa(const Vec& x, const std::vector<Vec>& neighbors, double eps,
                 const RandomMlp& phi, const RandomMlp& psi, const Vec& gate) {
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  Vec acc = phi.apply(x);
  for (double& v : acc) v *= 1.0 + eps;
  if (static_cast<int>(gate.size()) != phi.out_dim)
    throw ShapeError("gate dimension mismatch");
  for (const Vec& nb : neighbors) {
    const Vec e = phi.apply(nb);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += gate[d] * e[d];
  }
  return psi.apply(acc);
}

namespace {

/// Enumerates multisets of size 0..max_size over `alphabet` symbols as
/// sorted index tuples.
void enumerate_multisets(int alphabet, int max_size,
                         std::vector<std::vector<int>>* out) {
  out->push_back({});
  std::vector<std::vector<int>> frontier{{}};
  for (int size = 1; size <= max_size; ++size) {
    std::vector<std::vector<int>> next;
    for (const auto& m : frontier) {
      const int lo = m.empty() ? 0 : m.back();
      for (int s = lo; s < alphabet; ++s) {
        std::vector<int> grown = m;
        grown.push_back(s);
        out->push_back(grown);
        next.push_back(std::move(grown));
      }
    }
    frontier = std::move(next);
  }
}

}  // namespace

InjectivityReport injectivity_trial(int alphabet, int max_size, int trials,
                                    double resolution, std::uint64_t seed) {
  if (alphabet < 2 || max_size < 0)
    throw ConfigError("injectivity trial domain too small");
  std::vector<std::vector<int>> multisets;
  enumerate_multisets(alphabet, max_size, &multisets);

  // one-hot encodings
  auto onehot = [alphabet](int s) {
    Vec v(alphabet, 0.0);
    v[s] = 1.0;
    return v;
  };

  std::vector<std::pair<int, std::vector<int>>> domain;
  for (int c = 0; c < alphabet; ++c)
    for (const auto& m : multisets) domain.push_back({c, m});

  RngStream rng(seed, "injectivity");
  if (trials < static_cast<int>(domain.size())) {
    rng.shuffle(domain);
    domain.resize(trials);
  }

  const int hidden = 32, dim = 16;
  const RandomMlp phi(alphabet, hidden, dim, seed, "phi");
  const RandomMlp psi(dim, hidden, dim, seed, "psi");
  Vec gate(dim);
  RngStream grng(seed, "gate");
  for (double& g : gate)
    g = 1.0 / (1.0 + std::exp(-grng.next_uniform(-1.0, 1.0)));
  const double eps = 0.31;

  std::vector<Vec> outputs;
  outputs.reserve(domain.size());
  for (const auto& [center, multiset] : domain) {
    std::vector<Vec> neighbors;
    neighbors.reserve(multiset.size());
    for (int s : multiset) neighbors.push_back(onehot(s));
    outputs.push_back(
        composed_cpa(onehot(center), neighbors, eps, phi, psi, gate));
  }

  InjectivityReport report;
  report.trials = static_cast<int>(domain.size());
  double min_dist = -1.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      const double d = max_abs_diff(outputs[i], outputs[j]);
      if (min_dist < 0.0 || d < min_dist) min_dist = d;
      if (d <= resolution) ++report.collisions;
    }
  }
  report.min_pairwise_distance = std::max(min_dist, 0.0);
  return report;
}

// ---- 1-WL -------------------------------------------------------------

int WlInterner::intern(const std::string& encoding) {
  auto [it, inserted] = table_.emplace(encoding,
                                       static_cast<int>(table_.size()));
  return it->second;
}

ColorMap wl_refine(const MolGraph& g, WlInit init, WlInterner& interner) {
  const int n = g.num_atoms();
  const auto adj = adjacency(g);
  std::vector<int> colors(n);
  if (init == WlInit::kUniform) {
    const int c = interner.intern("init/uniform");
    std::fill(colors.begin(), colors.end(), c);
  } else {
    for (int i = 0; i < n; ++i) {
      const AtomRecord& a = g.atoms[i];
      colors[i] = interner.intern(
          "init/" + std::string(element_symbol(a.element)) + "/" +
          std::to_string(a.formal_charge) + "/" + std::to_string(a.num_h) +
          "/" + std::to_string(a.aromatic) + "/" + std::to_string(a.in_ring));
    }
  }
  ColorMap map;
  for (int iter = 0; iter < n + 1; ++iter) {
    std::vector<int> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<int> neigh;
      neigh.reserve(adj[i].size());
      for (int j : adj[i]) neigh.push_back(colors[j]);
      std::sort(neigh.begin(), neigh.end());
      std::string enc = std::to_string(colors[i]) + "|";
      for (int c : neigh) enc += std::to_string(c) + ",";
      next[i] = interner.intern(enc);
    }
    // stable when the partition stops splitting
    std::map<int, std::set<int>> grouping;
    bool split = false;
    for (int i = 0; i < n; ++i) {
      auto& image = grouping[colors[i]];
      image.insert(next[i]);
      if (image.size() > 1) split = true;
    }
    std::set<int> old_distinct(colors.begin(), colors.end());
    std::set<int> new_distinct(next.begin(), next.end());
    const bool same_count = old_distinct.size() == new_distinct.size();
    colors = std::move(next);
    map.iterations = iter + 1;
    if (!split && same_count) break;
  }
  map.colors = std::move(colors);
  return map;
}

std::vector<std::pair<int, int>> wl_histogram(const ColorMap& map) {
  std::map<int, int> counts;
  for (int c : map.colors) ++counts[c];
  std::vector<std::pair<int, int>> hist(counts.begin(), counts.end());
  std::sort(hist.begin(), hist.end());
  return hist;
}

std::uint64_t wl_feature_hash(const MolGraph& g, int rounds) {
  const int n = g.num_atoms();
  const auto adj = adjacency(g);
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) {
    const AtomRecord& a = g.atoms[i];
    labels[i] = std::string(element_symbol(a.element)) + ":" +
                std::to_string(a.aromatic) + ":" + std::to_string(a.in_ring);
  }
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::string> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> neigh;
      for (int j : adj[i]) neigh.push_back(labels[j]);
      std::sort(neigh.begin(), neigh.end());
      std::string enc = "(" + labels[i] + "|";
      for (const std::string& s : neigh) enc += s + ",";
      enc += ")";
      next[i] = std::move(enc);
    }
    labels = std::move(next);
  }
  // the scaffold surrogate hashes the deduplicated label set: dropping
  // counts keeps the fingerprint size-invariant, so structural families
  // spanning size bins land in one group
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::string all;
  for (const std::string& s : labels) all += s + ";";
  return RngStream::fnv1a(all);
}

ModelPairCheck wl_hard_pair_model_check(const model::Encoder& enc,
                                        const MolGraph& a, const MolGraph& b) {
  const FeatureSchema schema = FeatureSchema::standard();
  CorpusStats stats;  // mean 0, std 1: raw masses, identical across graphs
  auto pooled = [&](const MolGraph& g) {
    tensor::Tape tape;
    tape.set_grad_enabled(false);
    model::BoundEncoder bound = enc.bind(tape, false);
    const Featurized f = featurize(g, schema, stats);
    model::EncoderInput in = model::make_encoder_input(
        g, f, ssl::supports_for(g, enc.config()), enc.config());
    return bound.readout(bound.forward(in)).values();
  };
  ModelPairCheck check;
  check.pooled_a = pooled(a);
  check.pooled_b = pooled(b);
  check.max_abs_diff = max_abs_diff(check.pooled_a, check.pooled_b);
  check.equal = check.max_abs_diff <= 1e-9;
  return check;
}

}  // namespace cpaformer::expressivity
