#pragma once

#include "faircal/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace faircal {

/// One (score, label, group) observation.
struct ScoredSample {
  double score = 0.0;
  double label = 0.0;
  int group = 0;
};

enum class MetricKind { kEce, kEcceMean, kEcceMax, kMsce, kMmce, kBrier, kAccuracy };

std::string to_string(MetricKind kind);
/// Accepts "ece","ecce_mean","ecce_max","msce","mmce","brier","accuracy"; throws ConfigError otherwise.
MetricKind metric_kind_from_string(const std::string& id);
/// True for calibration errors (lower is better); false for accuracy.
bool is_error_metric(MetricKind kind);

struct MetricValue {
  double value = 0.0;
  MetricKind kind = MetricKind::kEcceMean;
  Index n_used = 0;
  /// Chosen bin count for MSCE, number of sampled pairs for sampled MMCE.
  std::optional<double> auxiliary;
};

enum class Binning { kEqualWidth, kEqualMass };

struct MetricSpec {
  MetricKind kind = MetricKind::kEcceMean;
  Index bins = 10;
  Binning binning = Binning::kEqualWidth;
  double kernel_width = 0.4;
  Index sampled_pairs = 0;  // 0 = exact O(n^2)
  std::optional<std::uint64_t> seed;
  double threshold = 0.5;
};

/// Expected calibration error: sum_m |B_m|/n |acc(B_m) - conf(B_m)|.
/// Equal-mass bins take contiguous runs of the score order (stable on ties).
MetricValue ece(const VectorCRef& scores, const VectorCRef& labels, Index bins, Binning binning);

enum class EcceVariant { kMean, kMax };

/// Partial sums C_k = (1/n) sum_{i<=k} (y_(i) - s_(i)) along ascending score, ties by index.
Vector cumulative_process(const VectorCRef& scores, const VectorCRef& labels);

/// Cumulative calibration error: mean or max of |C_k|.
MetricValue ecce(const VectorCRef& scores, const VectorCRef& labels, EcceVariant variant = EcceVariant::kMean);

/// max_k |C_k| / sigma_hat with sigma_hat = sqrt(sum s(1-s)) / n. A test statistic, not a metric value.
double ecce_statistic(const VectorCRef& scores, const VectorCRef& labels);

/// Equal-mass ECE at the largest bin count whose bin label means are non-decreasing.
MetricValue msce(const VectorCRef& scores, const VectorCRef& labels);

/// Kernel calibration error over correctness c_i = 1{1{s_i>=0.5} = y_i} and confidence
/// r_i = max(s_i, 1-s_i). `sampled_pairs` > 0 averages that many uniform (i, j) draws and
/// requires a seed.
MetricValue mmce(const VectorCRef& scores, const VectorCRef& labels, double kernel_width = 0.4,
                 Index sampled_pairs = 0, std::optional<std::uint64_t> seed = std::nullopt);

/// For the Laplacian kernel k(a, b) = exp(-|a - b| / width) on scalars:
/// sums[i] = sum_j d_j k(r_i, r_j) and signed[i] = sum_j d_j k(r_i, r_j) sign(r_i - r_j).
/// O(n log n) via sorting and running sums over tied blocks.
struct KernelSums {
  Vector sums;
  Vector signed_sums;
};
KernelSums laplace_kernel_sums(const VectorCRef& r, const VectorCRef& d, double width);

MetricValue brier(const VectorCRef& scores, const VectorCRef& labels);

MetricValue accuracy(const VectorCRef& scores, const VectorCRef& labels, double threshold = 0.5);

/// Dispatches on spec.kind.
MetricValue evaluate(const MetricSpec& spec, const VectorCRef& scores, const VectorCRef& labels);

struct WorstGroup {
  MetricValue value;
  int group = 0;
  std::vector<MetricValue> per_group;
};

/// Max of the metric over groups 0..n_groups-1; ties go to the lowest id.
/// Every group must have at least one sample.
WorstGroup worst_group(const VectorCRef& scores, const VectorCRef& labels, const IntVectorCRef& groups,
                       int n_groups, const MetricSpec& spec);

}  // namespace faircal
