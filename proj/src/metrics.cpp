#include "faircal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace faircal {

namespace {

void check_samples(const VectorCRef& scores, const VectorCRef& labels, const char* who) {
  if (scores.size() == 0) {
    throw Error(std::string(who) + ": no samples");
  }
  if (scores.size() != labels.size()) {
    throw Error(std::string(who) + ": scores and labels differ in length");
  }
}

std::vector<Index> order_by_score(const VectorCRef& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });
  return order;
}

Index mass_bin_start(Index k, Index n, Index bins) { return (k * n) / bins; }

}  // namespace

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kEce: return "ece";
    case MetricKind::kEcceMean: return "ecce_mean";
    case MetricKind::kEcceMax: return "ecce_max";
    case MetricKind::kMsce: return "msce";
    case MetricKind::kMmce: return "mmce";
    case MetricKind::kBrier: return "brier";
    case MetricKind::kAccuracy: return "accuracy";
  }
  return "unknown";
}

MetricKind metric_kind_from_string(const std::string& id) {
  for (auto kind : {MetricKind::kEce, MetricKind::kEcceMean, MetricKind::kEcceMax, MetricKind::kMsce,
                    MetricKind::kMmce, MetricKind::kBrier, MetricKind::kAccuracy}) {
    if (to_string(kind) == id) {
      return kind;
    }
  }
  throw ConfigError("unknown metric kind '" + id + "'");
}

bool is_error_metric(MetricKind kind) { return kind != MetricKind::kAccuracy; }

MetricValue ece(const VectorCRef& scores, const VectorCRef& labels, Index bins, Binning binning) {
  check_samples(scores, labels, "ece");
  const Index n = scores.size();
  if (bins < 1) {
    throw Error("ece: bin count must be >= 1");
  }
  Vector score_sum = Vector::Zero(bins);
  Vector label_sum = Vector::Zero(bins);
  Vector count = Vector::Zero(bins);

  if (binning == Binning::kEqualWidth) {
    for (Index i = 0; i < n; ++i) {
      const auto b = std::min<Index>(static_cast<Index>(std::floor(scores[i] * static_cast<double>(bins))), bins - 1);
      const Index bin = std::max<Index>(b, 0);
      score_sum[bin] += scores[i];
      label_sum[bin] += labels[i];
      count[bin] += 1.0;
    }
  } else {
    if (bins > n) {
      throw Error("ece: " + std::to_string(bins) + " equal-mass bins cannot be filled by " + std::to_string(n) +
                  " samples");
    }
    const auto order = order_by_score(scores);
    for (Index k = 0; k < bins; ++k) {
      for (Index r = mass_bin_start(k, n, bins); r < mass_bin_start(k + 1, n, bins); ++r) {
        const Index i = order[static_cast<std::size_t>(r)];
        score_sum[k] += scores[i];
        label_sum[k] += labels[i];
        count[k] += 1.0;
      }
    }
  }

  double total = 0.0;
  for (Index k = 0; k < bins; ++k) {
    if (count[k] > 0.0) {
      total += count[k] / static_cast<double>(n) * std::abs(label_sum[k] / count[k] - score_sum[k] / count[k]);
    }
  }
  return {total, MetricKind::kEce, n, std::nullopt};
}

Vector cumulative_process(const VectorCRef& scores, const VectorCRef& labels) {
  check_samples(scores, labels, "ecce");
  const Index n = scores.size();
  const auto order = order_by_score(scores);
  Vector c(n);
  double running = 0.0;
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<std::size_t>(k)];
    running += labels[i] - scores[i];
    c[k] = running / static_cast<double>(n);
  }
  return c;
}

MetricValue ecce(const VectorCRef& scores, const VectorCRef& labels, EcceVariant variant) {
  const Vector c = cumulative_process(scores, labels);
  if (variant == EcceVariant::kMean) {
    return {c.cwiseAbs().mean(), MetricKind::kEcceMean, c.size(), std::nullopt};
  }
  return {c.cwiseAbs().maxCoeff(), MetricKind::kEcceMax, c.size(), std::nullopt};
}

double ecce_statistic(const VectorCRef& scores, const VectorCRef& labels) {
  const Vector c = cumulative_process(scores, labels);
  const double n = static_cast<double>(scores.size());
  const double sigma = std::sqrt((scores.array() * (1.0 - scores.array())).sum()) / n;
  if (sigma <= 0.0) {
    return c.cwiseAbs().maxCoeff() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return c.cwiseAbs().maxCoeff() / sigma;
}

MetricValue msce(const VectorCRef& scores, const VectorCRef& labels) {
  check_samples(scores, labels, "msce");
  const Index n = scores.size();
  const auto order = order_by_score(scores);
  // Prefix sums of labels along score order. Labels are 0/1, so sums are exact integers
  // and the monotonicity test below compares exact rationals by cross-multiplication.
  Vector prefix(n + 1);
  prefix[0] = 0.0;
  for (Index k = 0; k < n; ++k) {
    prefix[k + 1] = prefix[k] + labels[order[static_cast<std::size_t>(k)]];
  }
  auto monotone = [&](Index bins) {
    double prev_sum = 0.0;
    double prev_count = 0.0;
    for (Index k = 0; k < bins; ++k) {
      const Index lo = mass_bin_start(k, n, bins);
      const Index hi = mass_bin_start(k + 1, n, bins);
      const double sum = prefix[hi] - prefix[lo];
      const double count = static_cast<double>(hi - lo);
      if (k > 0 && sum * prev_count < prev_sum * count) {
        return false;
      }
      prev_sum = sum;
      prev_count = count;
    }
    return true;
  };
  Index chosen = 1;
  for (Index b = n; b >= 1; --b) {
    if (monotone(b)) {
      chosen = b;
      break;
    }
  }
  MetricValue out = ece(scores, labels, chosen, Binning::kEqualMass);
  out.kind = MetricKind::kMsce;
  out.auxiliary = static_cast<double>(chosen);
  return out;
}

MetricValue mmce(const VectorCRef& scores, const VectorCRef& labels, double kernel_width, Index sampled_pairs,
                 std::optional<std::uint64_t> seed) {
  check_samples(scores, labels, "mmce");
  if (!(kernel_width > 0.0)) {
    throw Error("mmce: kernel width must be positive");
  }
  if (sampled_pairs < 0) {
    throw Error("mmce: sampled_pairs must be >= 0");
  }
  if (sampled_pairs > 0 && !seed) {
    throw Error("mmce: sampled estimation requires a seed");
  }
  const Index n = scores.size();
  Vector confidence(n);
  Vector gap(n);  // c_i - r_i
  for (Index i = 0; i < n; ++i) {
    const double s = scores[i];
    const double predicted = s >= 0.5 ? 1.0 : 0.0;
    const double correct = predicted == labels[i] ? 1.0 : 0.0;
    confidence[i] = std::max(s, 1.0 - s);
    gap[i] = correct - confidence[i];
  }
  auto kernel = [&](Index i, Index j) { return std::exp(-std::abs(confidence[i] - confidence[j]) / kernel_width); };

  double squared = 0.0;
  MetricValue out;
  out.kind = MetricKind::kMmce;
  out.n_used = n;
  if (sampled_pairs == 0) {
    const auto k = laplace_kernel_sums(confidence, gap, kernel_width);
    squared = gap.dot(k.sums) / (static_cast<double>(n) * static_cast<double>(n));
  } else {
    Rng rng(*seed);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    double sum = 0.0;
    for (Index m = 0; m < sampled_pairs; ++m) {
      const Index i = pick(rng);
      const Index j = pick(rng);
      sum += gap[i] * gap[j] * kernel(i, j);
    }
    squared = sum / static_cast<double>(sampled_pairs);
    out.auxiliary = static_cast<double>(sampled_pairs);
  }
  out.value = std::sqrt(std::max(squared, 0.0));
  return out;
}

KernelSums laplace_kernel_sums(const VectorCRef& r, const VectorCRef& d, double width) {
  const Index n = r.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return r[a] < r[b]; });
  // Blocks of equal r: value, summed d and [begin, end) into `order`.
  std::vector<double> value;
  std::vector<double> mass;
  std::vector<std::size_t> begin;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = r[order[k]];
    if (value.empty() || v != value.back()) {
      value.push_back(v);
      mass.push_back(0.0);
      begin.push_back(k);
    }
    mass.back() += d[order[k]];
  }
  begin.push_back(order.size());
  const std::size_t blocks = value.size();
  std::vector<double> below(blocks, 0.0);
  std::vector<double> above(blocks, 0.0);
  for (std::size_t t = 1; t < blocks; ++t) {
    below[t] = std::exp(-(value[t] - value[t - 1]) / width) * (below[t - 1] + mass[t - 1]);
  }
  for (std::size_t t = blocks - 1; t-- > 0;) {
    above[t] = std::exp(-(value[t + 1] - value[t]) / width) * (above[t + 1] + mass[t + 1]);
  }
  KernelSums out{Vector(n), Vector(n)};
  for (std::size_t t = 0; t < blocks; ++t) {
    for (std::size_t k = begin[t]; k < begin[t + 1]; ++k) {
      out.sums[order[k]] = below[t] + mass[t] + above[t];
      out.signed_sums[order[k]] = below[t] - above[t];
    }
  }
  return out;
}

MetricValue brier(const VectorCRef& scores, const VectorCRef& labels) {
  check_samples(scores, labels, "brier");
  return {(scores - labels).squaredNorm() / static_cast<double>(scores.size()), MetricKind::kBrier, scores.size(),
          std::nullopt};
}

MetricValue accuracy(const VectorCRef& scores, const VectorCRef& labels, double threshold) {
  check_samples(scores, labels, "accuracy");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error("accuracy: threshold must lie in (0, 1)");
  }
  Index hits = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    hits += ((scores[i] >= threshold ? 1.0 : 0.0) == labels[i]) ? 1 : 0;
  }
  return {static_cast<double>(hits) / static_cast<double>(scores.size()), MetricKind::kAccuracy, scores.size(),
          std::nullopt};
}

MetricValue evaluate(const MetricSpec& spec, const VectorCRef& scores, const VectorCRef& labels) {
  switch (spec.kind) {
    case MetricKind::kEce: return ece(scores, labels, spec.bins, spec.binning);
    case MetricKind::kEcceMean: return ecce(scores, labels, EcceVariant::kMean);
    case MetricKind::kEcceMax: return ecce(scores, labels, EcceVariant::kMax);
    case MetricKind::kMsce: return msce(scores, labels);
    case MetricKind::kMmce: return mmce(scores, labels, spec.kernel_width, spec.sampled_pairs, spec.seed);
    case MetricKind::kBrier: return brier(scores, labels);
    case MetricKind::kAccuracy: return accuracy(scores, labels, spec.threshold);
  }
  throw Error("evaluate: unhandled metric kind");
}

WorstGroup worst_group(const VectorCRef& scores, const VectorCRef& labels, const IntVectorCRef& groups,
                       int n_groups, const MetricSpec& spec) {
  if (scores.size() != groups.size() || labels.size() != groups.size()) {
    throw Error("worst_group: scores, labels and groups differ in length");
  }
  if (n_groups < 1) {
    throw Error("worst_group: need at least one group");
  }
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(n_groups));
  for (Index i = 0; i < groups.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= n_groups) {
      throw Error("worst_group: group id " + std::to_string(groups[i]) + " out of range");
    }
    members[static_cast<std::size_t>(groups[i])].push_back(i);
  }

  WorstGroup out;
  for (int g = 0; g < n_groups; ++g) {
    const auto& rows = members[static_cast<std::size_t>(g)];
    if (rows.empty()) {
      throw Error("worst_group: group " + std::to_string(g) + " has no samples");
    }
    MetricValue value;
    try {
      value = evaluate(spec, take(scores, rows), take(labels, rows));
    } catch (const Error& e) {
      throw Error("worst_group: group " + std::to_string(g) + ": " + e.what());
    }
    if (g == 0 || value.value > out.value.value) {
      out.value = value;
      out.group = g;
    }
    out.per_group.push_back(value);
  }
  return out;
}

}  // namespace faircal
