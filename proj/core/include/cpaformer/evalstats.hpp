// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpaformer/graph.hpp"
#include "cpaformer/topo.hpp"

namespace cpaformer::stats {

// ---- metrics ----------------------------------------------------------

double rmse(const std::vector<double>& pred, const std::vector<double>& y);
double mae(const std::vector<double>& pred, const std::vector<double>& y);

/// Rank statistic with midrank tie handling. Throws NumericError when only
/// one class is present.
double roc_auc(const std::vector<double>& scores,
               const std::vector<double>& labels);

/// Precision-at-positive averaged over positives, scores descending, ties
/// broken by original index. Throws NumericError without any positive.
double average_precision(const std::vector<double>& scores,
                         const std::vector<double>& labels);

/// Pearson correlation of average ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Mean over labels of per-label AP; labels without positives are skipped
/// and counted. scores/labels are instance-major (one row per instance).
struct MultilabelAp {
  double mean_ap = 0.0;
  int labels_used = 0;
  int labels_skipped = 0;
};
MultilabelAp multilabel_average_precision(
    const std::vector<std::vector<double>>& scores,
    const std::vector<std::vector<double>>& labels);

enum class MetricKind { kRmse, kMae, kRocAuc, kAveragePrecision, kSpearman };
MetricKind metric_from_name(const std::string& name);
const char* metric_name(MetricKind m);
double evaluate_metric(MetricKind m, const std::vector<double>& pred,
                       const std::vector<double>& labels);
/// True when larger values are better.
bool metric_higher_is_better(MetricKind m);

// ---- paired bootstrap ----------------------------------------------------

struct PairedRunResult {
  std::vector<double> pred_a, pred_b, labels;
};

struct BootstrapResult {
  double delta_full = 0.0;  // metric(A) - metric(B) on the full sample
  double delta_mean = 0.0;  // mean of resample deltas
  double ci_lo = 0.0, ci_hi = 0.0;  // percentile (2.5, 97.5)
  double p_sign_flip = 1.0;  // two-sided sign bootstrap p
  int redraws = 0;           // resamples redrawn due to undefined metrics
};

/// One shared index stream (stream key "bootstrap", n draws per resample)
/// keeps the pairing: both models are evaluated on identical indices.
/// Undefined resamples (e.g. single-class AUC) are redrawn and counted.
BootstrapResult paired_bootstrap(const PairedRunResult& results,
                                 MetricKind metric, int resamples,
                                 std::uint64_t seed);

/// Holm step-down adjustment; output order matches the input order.
std::vector<double> holm_adjust(const std::vector<double>& p_values);

/// Residualize x and y on [1, z] by least squares, then Pearson of the
/// residuals. Throws NumericError for constant z or zero-variance
/// residuals.
double partial_correlation(const std::vector<double>& x,
                           const std::vector<double>& y,
                           const std::vector<double>& z);

// ---- size-only baselines ---------------------------------------------

/// Features per instance: [N, mean |S(i)|, max |S(i)|].
std::vector<double> size_features(const MolGraph& g, int k);

struct SizeOnlyModel {
  bool logistic = false;
  std::vector<double> coef;  // intercept first
};

/// Ridge closed form for regression; weighted logistic regression via
/// Newton iterations to gradient tolerance 1e-8 for classification. The
/// class-weight ratio is tuned on the validation split when given.
SizeOnlyModel train_size_only(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& y, bool classify,
                              double ridge_lambda = 1.0,
                              const std::vector<std::vector<double>>* x_val =
                                  nullptr,
                              const std::vector<double>* y_val = nullptr);

double predict_size_only(const SizeOnlyModel& m,
                         const std::vector<double>& features);

// ---- size strata / size-shift split -----------------------------------

/// Boundaries: small N < 30, mid 30 <= N < 50, large N >= 50.
enum class SizeStratum { kSmall, kMid, kLarge };
SizeStratum size_stratum(int n);

struct SplitResult {
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

/// Groups graphs by the WL-histogram scaffold surrogate; within groups that
/// span both extremes, small-stratum members train and large-stratum
/// members test; everything else (including whole groups lacking one of
/// the extremes) goes to train. Throws NumericError when the test side
/// comes out empty.
SplitResult size_shift_split(const std::vector<MolGraph>& graphs);

}  // namespace cpaformer::stats
