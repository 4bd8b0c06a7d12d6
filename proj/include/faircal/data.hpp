#pragma once

#include "faircal/core.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace faircal {

/// Tabular binary-classification data with a sensitive group column.
///
/// Rows are aligned across `features`, `labels` and `groups`. Group ids are dense
/// (0..G-1) in first-appearance order of the source file; `group_names` keeps the
/// original values for reporting.
struct Dataset {
  Matrix features;  // n x p
  Vector labels;    // 0.0 or 1.0
  IntVector groups;
  std::vector<std::string> feature_names;
  std::vector<std::string> group_names;

  Index size() const { return labels.size(); }
  Index n_features() const { return features.cols(); }
  int n_groups() const { return static_cast<int>(group_names.size()); }

  /// Checks every invariant of a freshly loaded or generated dataset, including that
  /// every group id appears at least once. Throws Error.
  void validate() const;

  /// Row subset. Keeps the group roster even if some groups become empty.
  Dataset subset(const std::vector<Index>& rows) const;

  /// Features with G group indicator columns appended (one per group, no reference drop).
  Matrix features_with_group_indicators() const;
};

Matrix group_indicators(const IntVectorCRef& groups, int n_groups);

struct CsvLoadOptions {
  std::string label_column;
  std::string group_column;
  std::vector<std::string> categorical_columns;
};

/// Loads an RFC-4180 CSV. Numeric columns pass through, categorical columns are one-hot
/// encoded as "col=value" in first-appearance order, columns whose name starts with "__"
/// are reserved sidecars and skipped.
Dataset load_csv(const std::string& path, const CsvLoadOptions& options);

/// Writes the dataset in the schema load_csv reads back; optional `__true_p` sidecar.
void write_csv(const Dataset& data, const std::string& path, const std::string& label_column = "label",
               const std::string& group_column = "group", const Vector* true_probabilities = nullptr);

struct SplitAssignment {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
  std::uint64_t seed = 0;
};

/// Seeded uniform permutation followed by contiguous slicing. Every partition is non-empty.
SplitAssignment split(Index n, const std::array<double, 3>& ratios, std::uint64_t seed);

inline SplitAssignment split(const Dataset& data, const std::array<double, 3>& ratios, std::uint64_t seed) {
  return split(data.size(), ratios, seed);
}

inline constexpr std::array<double, 3> kDefaultSplitRatios{0.6, 0.2, 0.2};

struct SynthConfig {
  Index n = 1000;
  Index p = 2;
  Matrix group_weights;  // G x p, row g is w_g
  Vector group_bias;     // G, b_g
  Vector group_proportions;
  std::uint64_t seed = 0;

  int n_groups() const { return static_cast<int>(group_bias.size()); }
  void validate() const;
};

struct SynthData {
  Dataset data;
  Vector true_probabilities;
};

/// x ~ N(0, I_p), g ~ Categorical(group_proportions), y ~ Bernoulli(sigmoid(w_g . x + b_g)).
SynthData synth_generate(const SynthConfig& config);

}  // namespace faircal
