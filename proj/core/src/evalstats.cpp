// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cpaformer/errors.hpp"
#include "cpaformer/expressivity.hpp"
#include "cpaformer/rng.hpp"

namespace cpaformer::stats {

namespace {

void require_aligned(const std::vector<double>& a,
                     const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw NumericError("metric needs >= 2 aligned instances");
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) +
                     1.0;  // midrank, 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0)
    throw NumericError("correlation of a constant sequence");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& y) {
  require_aligned(pred, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += (pred[i] - y[i]) * (pred[i] - y[i]);
  return std::sqrt(acc / pred.size());
}

double mae(const std::vector<double>& pred, const std::vector<double>& y) {
  require_aligned(pred, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred[i] - y[i]);
  return acc / pred.size();
}

double roc_auc(const std::vector<double>& scores,
               const std::vector<double>& labels) {
  require_aligned(scores, labels);
  long long npos = 0, nneg = 0;
  for (double y : labels) (y > 0.5 ? npos : nneg) += 1;
  if (npos == 0 || nneg == 0)
    throw NumericError("roc_auc needs both classes present");
  const std::vector<double> ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] > 0.5) rank_sum += ranks[i];
  return (rank_sum - 0.5 * npos * (npos + 1)) /
         (static_cast<double>(npos) * nneg);
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<double>& labels) {
  require_aligned(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  long long npos = 0;
  for (double y : labels)
    if (y > 0.5) ++npos;
  if (npos == 0)
    throw NumericError("average precision needs at least one positive");
  double acc = 0.0;
  long long seen_pos = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0.5) {
      ++seen_pos;
      acc += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
    }
  }
  return acc / static_cast<double>(npos);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require_aligned(a, b);
  return pearson(average_ranks(a), average_ranks(b));
}

MultilabelAp multilabel_average_precision(
    const std::vector<std::vector<double>>& scores,
    const std::vector<std::vector<double>>& labels) {
  if (scores.size() != labels.size() || scores.size() < 2)
    throw NumericError("multilabel AP needs >= 2 aligned instances");
  const std::size_t n_labels = scores[0].size();
  MultilabelAp out;
  double acc = 0.0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    std::vector<double> s, y;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s.push_back(scores[i].at(l));
      y.push_back(labels[i].at(l));
    }
    try {
      acc += average_precision(s, y);
      ++out.labels_used;
    } catch (const NumericError&) {
      ++out.labels_skipped;  // no positives for this label
    }
  }
  if (out.labels_used == 0)
    throw NumericError("no label with positives for multilabel AP");
  out.mean_ap = acc / out.labels_used;
  return out;
}

MetricKind metric_from_name(const std::string& name) {
  if (name == "rmse") return MetricKind::kRmse;
  if (name == "mae") return MetricKind::kMae;
  if (name == "auc" || name == "roc_auc") return MetricKind::kRocAuc;
  if (name == "ap" || name == "average_precision")
    return MetricKind::kAveragePrecision;
  if (name == "spearman") return MetricKind::kSpearman;
  throw ConfigError("unknown metric '" + name + "'");
}

const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::kRmse: return "rmse";
    case MetricKind::kMae: return "mae";
    case MetricKind::kRocAuc: return "roc_auc";
    case MetricKind::kAveragePrecision: return "average_precision";
    case MetricKind::kSpearman: return "spearman";
  }
  return "?";
}

double evaluate_metric(MetricKind m, const std::vector<double>& pred,
                       const std::vector<double>& labels) {
  switch (m) {
    case MetricKind::kRmse: return rmse(pred, labels);
    case MetricKind::kMae: return mae(pred, labels);
    case MetricKind::kRocAuc: return roc_auc(pred, labels);
    case MetricKind::kAveragePrecision:
      return average_precision(pred, labels);
    case MetricKind::kSpearman: return spearman(pred, labels);
  }
  throw ConfigError("unhandled metric");
}

bool metric_higher_is_better(MetricKind m) {
  return m != MetricKind::kRmse && m != MetricKind::kMae;
}

BootstrapResult paired_bootstrap(const PairedRunResult& results,
                                 MetricKind metric, int resamples,
                                 std::uint64_t seed) {
  const std::size_t n = results.labels.size();
  if (results.pred_a.size() != n || results.pred_b.size() != n || n < 2)
    throw ConfigError("paired results misaligned or too small");
  if (resamples < 1) throw ConfigError("resamples must be >= 1");

  BootstrapResult out;
  out.delta_full = evaluate_metric(metric, results.pred_a, results.labels) -
                   evaluate_metric(metric, results.pred_b, results.labels);

  RngStream rng(seed, "bootstrap");
  std::vector<double> deltas;
  deltas.reserve(resamples);
  std::vector<double> a(n), b(n), y(n);
  for (int r = 0; r < resamples; ++r) {
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = rng.next_below(n);  // shared across models
        a[i] = results.pred_a[idx];
        b[i] = results.pred_b[idx];
        y[i] = results.labels[idx];
      }
      try {
        const double d = evaluate_metric(metric, a, y) -
                         evaluate_metric(metric, b, y);
        deltas.push_back(d);
        break;
      } catch (const NumericError&) {
        ++out.redraws;  // undefined on this resample: redraw
      }
    }
  }
  double mean = 0.0;
  long long le = 0, ge = 0;
  for (double d : deltas) {
    mean += d;
    if (d <= 0.0) ++le;
    if (d >= 0.0) ++ge;
  }
  out.delta_mean = mean / deltas.size();
  std::vector<double> sorted = deltas;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double h = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - lo;
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  out.ci_lo = quantile(0.025);
  out.ci_hi = quantile(0.975);
  const double r1 = static_cast<double>(le + 1) / (deltas.size() + 1);
  const double r2 = static_cast<double>(ge + 1) / (deltas.size() + 1);
  out.p_sign_flip = std::min(1.0, 2.0 * std::min(r1, r2));
  return out;
}

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
  const std::size_t m = p_values.size();
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0))
      throw ConfigError("p-values must lie in [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p_values[a] < p_values[b];
  });
  std::vector<double> adjusted(m, 0.0);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double step =
        std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
    running = std::max(running, step);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

double partial_correlation(const std::vector<double>& x,
                           const std::vector<double>& y,
                           const std::vector<double>& z) {
  const std::size_t n = x.size();
  if (y.size() != n || z.size() != n || n < 4)
    throw NumericError("partial correlation needs >= 4 aligned samples");
  double mz = 0.0;
  for (double v : z) mz += v;
  mz /= n;
  double szz = 0.0;
  for (double v : z) szz += (v - mz) * (v - mz);
  if (szz <= 0.0) throw NumericError("control variable is constant");
  auto variance = [n](const std::vector<double>& v) {
    double mv = 0.0;
    for (double u : v) mv += u;
    mv /= n;
    double acc = 0.0;
    for (double u : v) acc += (u - mv) * (u - mv);
    return acc;
  };
  // constant inputs carry no signal at all: that is the degenerate case
  const double vx = variance(x), vy = variance(y);
  if (vx <= 0.0 || vy <= 0.0)
    throw NumericError("zero-variance input to partial correlation");
  auto residualize = [&](const std::vector<double>& v) {
    double mv = 0.0;
    for (double u : v) mv += u;
    mv /= n;
    double svz = 0.0;
    for (std::size_t i = 0; i < n; ++i) svz += (v[i] - mv) * (z[i] - mz);
    const double beta = svz / szz;
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i)
      res[i] = v[i] - mv - beta * (z[i] - mz);
    return res;
  };
  const std::vector<double> rx = residualize(x), ry = residualize(y);
  // a residual explained away by the control leaves no partial signal
  if (variance(rx) <= 1e-12 * vx || variance(ry) <= 1e-12 * vy) return 0.0;
  return pearson(rx, ry);
}

// ---- size-only baselines --------------------------------------------

std::vector<double> size_features(const MolGraph& g, int k) {
  const topo::SupportSets s = topo::truncated_spd(g, k);
  double mean = 0.0;
  int mx = 0;
  for (int i = 0; i < g.num_atoms(); ++i) {
    mean += s.size_of(i);
    mx = std::max(mx, s.size_of(i));
  }
  mean /= g.num_atoms();
  return {static_cast<double>(g.num_atoms()), mean,
          static_cast<double>(mx)};
}

namespace {

/// Gaussian elimination with partial pivoting for the tiny normal systems.
std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                 std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300)
      throw NumericError("singular design matrix");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

std::vector<std::vector<double>> with_intercept(
    const std::vector<std::vector<double>>& x) {
  std::vector<std::vector<double>> out;
  out.reserve(x.size());
  for (const auto& row : x) {
    std::vector<double> r{1.0};
    r.insert(r.end(), row.begin(), row.end());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> fit_ridge(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& y, double lambda) {
  const auto xs = with_intercept(x);
  const std::size_t d = xs[0].size();
  std::vector<std::vector<double>> gram(d, std::vector<double>(d, 0.0));
  std::vector<double> rhs(d, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      rhs[a] += xs[i][a] * y[i];
      for (std::size_t b = 0; b < d; ++b) gram[a][b] += xs[i][a] * xs[i][b];
    }
  }
  for (std::size_t a = 1; a < d; ++a) gram[a][a] += lambda;  // skip intercept
  return solve_linear(std::move(gram), std::move(rhs));
}

std::vector<double> fit_logistic(const std::vector<std::vector<double>>& x,
                                 const std::vector<double>& y,
                                 double pos_weight, double lambda) {
  const auto xs = with_intercept(x);
  const std::size_t d = xs[0].size();
  std::vector<double> beta(d, 0.0);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> grad(d, 0.0);
    std::vector<std::vector<double>> hess(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double z = 0.0;
      for (std::size_t a = 0; a < d; ++a) z += beta[a] * xs[i][a];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double w = y[i] > 0.5 ? pos_weight : 1.0;
      const double resid = w * (p - y[i]);
      const double curv = std::max(w * p * (1.0 - p), 1e-12);
      for (std::size_t a = 0; a < d; ++a) {
        grad[a] += resid * xs[i][a];
        for (std::size_t b = 0; b < d; ++b)
          hess[a][b] += curv * xs[i][a] * xs[i][b];
      }
    }
    for (std::size_t a = 1; a < d; ++a) {
      grad[a] += lambda * beta[a];
      hess[a][a] += lambda;
    }
    double gnorm = 0.0;
    for (double g : grad) gnorm = std::max(gnorm, std::abs(g));
    if (gnorm < 1e-8) break;
    const std::vector<double> delta = solve_linear(hess, grad);
    for (std::size_t a = 0; a < d; ++a) beta[a] -= delta[a];
  }
  return beta;
}

}  // namespace

SizeOnlyModel train_size_only(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& y, bool classify,
                              double ridge_lambda,
                              const std::vector<std::vector<double>>* x_val,
                              const std::vector<double>* y_val) {
  if (x.size() != y.size() || x.size() < 5)
    throw ConfigError("size-only baseline needs >= 5 training instances");
  SizeOnlyModel m;
  m.logistic = classify;
  if (!classify) {
    m.coef = fit_ridge(x, y, ridge_lambda);
    return m;
  }
  std::vector<double> ratios{1.0};
  if (x_val && y_val && !x_val->empty())
    ratios = {0.25, 0.5, 1.0, 2.0, 4.0};
  double best_metric = -1.0;
  for (double ratio : ratios) {
    SizeOnlyModel cand;
    cand.logistic = true;
    cand.coef = fit_logistic(x, y, ratio, ridge_lambda);
    if (ratios.size() == 1) return cand;
    std::vector<double> scores;
    scores.reserve(x_val->size());
    for (const auto& row : *x_val)
      scores.push_back(predict_size_only(cand, row));
    double metric;
    try {
      metric = roc_auc(scores, *y_val);
    } catch (const NumericError&) {
      metric = 0.5;
    }
    if (metric > best_metric) {
      best_metric = metric;
      m = cand;
    }
  }
  return m;
}

double predict_size_only(const SizeOnlyModel& m,
                         const std::vector<double>& features) {
  if (features.size() + 1 != m.coef.size())
    throw ShapeError("feature width mismatch");
  double z = m.coef[0];
  for (std::size_t i = 0; i < features.size(); ++i)
    z += m.coef[i + 1] * features[i];
  return m.logistic ? 1.0 / (1.0 + std::exp(-z)) : z;
}

SizeStratum size_stratum(int n) {
  if (n < 30) return SizeStratum::kSmall;
  if (n < 50) return SizeStratum::kMid;
  return SizeStratum::kLarge;
}

SplitResult size_shift_split(const std::vector<MolGraph>& graphs) {
  std::map<std::uint64_t, std::vector<int>> groups;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    groups[expressivity::wl_feature_hash(graphs[i])].push_back(
        static_cast<int>(i));
  SplitResult split;
  for (const auto& [hash, members] : groups) {
    bool has_small = false, has_large = false;
    for (int gi : members) {
      const SizeStratum s = size_stratum(graphs[gi].num_atoms());
      has_small = has_small || s == SizeStratum::kSmall;
      has_large = has_large || s == SizeStratum::kLarge;
    }
    for (int gi : members) {
      const SizeStratum s = size_stratum(graphs[gi].num_atoms());
      if (has_small && has_large && s == SizeStratum::kLarge)
        split.test_indices.push_back(gi);
      else
        split.train_indices.push_back(gi);
    }
  }
  std::sort(split.train_indices.begin(), split.train_indices.end());
  std::sort(split.test_indices.begin(), split.test_indices.end());
  if (split.test_indices.empty())
    throw NumericError("size-shift split produced an empty test set");
  return split;
}

}  // namespace cpaformer::stats
