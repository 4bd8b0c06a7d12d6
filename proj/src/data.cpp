#include "faircal/data.hpp"

#include "faircal/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace faircal {

Matrix take_rows(const MatrixCRef& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(rows[i]);
  }
  return out;
}

Vector take(const VectorCRef& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Index>(i)] = v[rows[i]];
  }
  return out;
}

IntVector take(const IntVectorCRef& v, const std::vector<Index>& rows) {
  IntVector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Index>(i)] = v[rows[i]];
  }
  return out;
}

std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void Dataset::validate() const {
  const Index n = labels.size();
  if (n < 1) {
    throw Error("dataset: no rows");
  }
  if (features.rows() != n || groups.size() != n) {
    throw Error("dataset: features, labels and groups must share length");
  }
  if (static_cast<Index>(feature_names.size()) != features.cols()) {
    throw Error("dataset: feature_names size does not match feature count");
  }
  const int g_count = n_groups();
  if (g_count < 1) {
    throw Error("dataset: at least one group required");
  }
  std::vector<bool> seen(static_cast<std::size_t>(g_count), false);
  for (Index i = 0; i < n; ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw Error("dataset: non-binary label at row " + std::to_string(i));
    }
    if (groups[i] < 0 || groups[i] >= g_count) {
      throw Error("dataset: group id out of range at row " + std::to_string(i));
    }
    seen[static_cast<std::size_t>(groups[i])] = true;
  }
  for (int g = 0; g < g_count; ++g) {
    if (!seen[static_cast<std::size_t>(g)]) {
      throw Error("dataset: group " + std::to_string(g) + " has no rows");
    }
  }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.features = take_rows(features, rows);
  out.labels = take(labels, rows);
  out.groups = take(groups, rows);
  out.feature_names = feature_names;
  out.group_names = group_names;
  return out;
}

Matrix group_indicators(const IntVectorCRef& groups, int n_groups) {
  Matrix out = Matrix::Zero(groups.size(), n_groups);
  for (Index i = 0; i < groups.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= n_groups) {
      throw Error("group id " + std::to_string(groups[i]) + " outside 0.." + std::to_string(n_groups - 1));
    }
    out(i, groups[i]) = 1.0;
  }
  return out;
}

Matrix Dataset::features_with_group_indicators() const {
  Matrix out(size(), n_features() + n_groups());
  out << features, group_indicators(groups, n_groups());
  return out;
}

namespace {

struct CategoricalColumn {
  int source = 0;
  std::vector<std::string> levels;  // first-appearance order
  std::unordered_map<std::string, int> level_index;
};

}  // namespace

Dataset load_csv(const std::string& path, const CsvLoadOptions& options) {
  const csv::Table table = csv::read_file(path);
  if (table.header.empty()) {
    throw Error("load_csv: empty file " + path);
  }
  if (table.rows.empty()) {
    throw Error("load_csv: no data rows in " + path);
  }

  const int label_col = table.column(options.label_column);
  if (label_col < 0) {
    throw Error("load_csv: missing column '" + options.label_column + "'");
  }
  const int group_col = table.column(options.group_column);
  if (group_col < 0) {
    throw Error("load_csv: missing column '" + options.group_column + "'");
  }
  std::set<int> categorical;
  for (const auto& name : options.categorical_columns) {
    const int c = table.column(name);
    if (c < 0) {
      throw Error("load_csv: missing column '" + name + "'");
    }
    categorical.insert(c);
  }

  const auto n = static_cast<Index>(table.rows.size());
  const auto width = table.header.size();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != width) {
      throw Error("load_csv: row " + std::to_string(r + 2) + " has " + std::to_string(table.rows[r].size()) +
                  " fields, expected " + std::to_string(width));
    }
  }

  // Feature layout: source columns in file order, categoricals expanded in place.
  struct Slot {
    int source;
    bool is_categorical;
    std::size_t categorical_index;
  };
  std::vector<Slot> slots;
  std::vector<CategoricalColumn> cats;
  for (std::size_t c = 0; c < width; ++c) {
    const int ci = static_cast<int>(c);
    if (ci == label_col || ci == group_col || table.header[c].rfind("__", 0) == 0) {
      continue;
    }
    if (categorical.count(ci) != 0) {
      CategoricalColumn cat;
      cat.source = ci;
      for (const auto& row : table.rows) {
        const auto& v = row[c];
        if (cat.level_index.emplace(v, static_cast<int>(cat.levels.size())).second) {
          cat.levels.push_back(v);
        }
      }
      slots.push_back({ci, true, cats.size()});
      cats.push_back(std::move(cat));
    } else {
      slots.push_back({ci, false, 0});
    }
  }

  Dataset data;
  Index p = 0;
  for (const auto& slot : slots) {
    if (slot.is_categorical) {
      for (const auto& level : cats[slot.categorical_index].levels) {
        data.feature_names.push_back(table.header[static_cast<std::size_t>(slot.source)] + "=" + level);
      }
      p += static_cast<Index>(cats[slot.categorical_index].levels.size());
    } else {
      data.feature_names.push_back(table.header[static_cast<std::size_t>(slot.source)]);
      ++p;
    }
  }

  data.features = Matrix::Zero(n, p);
  data.labels.resize(n);
  data.groups.resize(n);
  std::unordered_map<std::string, int> group_ids;

  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::string& label_cell = row[static_cast<std::size_t>(label_col)];
    double label = 0.0;
    if (label_cell == "true" || label_cell == "True") {
      label = 1.0;
    } else if (label_cell == "false" || label_cell == "False") {
      label = 0.0;
    } else if (!csv::parse_double(label_cell, label) || (label != 0.0 && label != 1.0)) {
      throw Error("load_csv: non-binary label '" + label_cell + "' at row " + std::to_string(i + 2));
    }
    data.labels[i] = label;

    const std::string& group_cell = row[static_cast<std::size_t>(group_col)];
    const auto [it, inserted] = group_ids.emplace(group_cell, static_cast<int>(data.group_names.size()));
    if (inserted) {
      data.group_names.push_back(group_cell);
    }
    data.groups[i] = it->second;

    Index col = 0;
    for (const auto& slot : slots) {
      const std::string& cell = row[static_cast<std::size_t>(slot.source)];
      if (slot.is_categorical) {
        const auto& cat = cats[slot.categorical_index];
        data.features(i, col + cat.level_index.at(cell)) = 1.0;
        col += static_cast<Index>(cat.levels.size());
      } else {
        double value = 0.0;
        if (!csv::parse_double(cell, value)) {
          throw Error("load_csv: unparseable numeric cell '" + cell + "' at row " + std::to_string(i + 2) +
                      ", column '" + table.header[static_cast<std::size_t>(slot.source)] + "'");
        }
        data.features(i, col++) = value;
      }
    }
  }
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::string& path, const std::string& label_column,
               const std::string& group_column, const Vector* true_probabilities) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("write_csv: cannot open " + path);
  }
  csv::Row header = data.feature_names;
  header.push_back(label_column);
  header.push_back(group_column);
  if (true_probabilities != nullptr) {
    header.emplace_back("__true_p");
  }
  csv::write_row(out, header);
  for (Index i = 0; i < data.size(); ++i) {
    csv::Row row;
    row.reserve(header.size());
    for (Index j = 0; j < data.n_features(); ++j) {
      row.push_back(csv::format_double(data.features(i, j)));
    }
    row.push_back(data.labels[i] == 1.0 ? "1" : "0");
    row.push_back(data.group_names[static_cast<std::size_t>(data.groups[i])]);
    if (true_probabilities != nullptr) {
      row.push_back(csv::format_double((*true_probabilities)[i]));
    }
    csv::write_row(out, row);
  }
  if (!out) {
    throw Error("write_csv: write failed for " + path);
  }
}

SplitAssignment split(Index n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (n < 3) {
    throw Error("split: need at least 3 rows to populate train/validation/test, got " + std::to_string(n));
  }
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) {
      throw Error("split: ratios must be positive");
    }
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("split: ratios must sum to 1");
  }

  std::array<Index, 3> sizes{};
  sizes[0] = static_cast<Index>(std::llround(ratios[0] * static_cast<double>(n)));
  sizes[1] = static_cast<Index>(std::llround(ratios[1] * static_cast<double>(n)));
  sizes[0] = std::min(sizes[0], n);
  sizes[1] = std::min(sizes[1], n - sizes[0]);
  sizes[2] = n - sizes[0] - sizes[1];
  for (auto& s : sizes) {
    if (s == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      s = 1;
    }
  }

  Rng rng(seed);
  const auto perm = permutation(n, rng);
  SplitAssignment out;
  out.seed = seed;
  auto it = perm.begin();
  out.train.assign(it, it + sizes[0]);
  it += sizes[0];
  out.validation.assign(it, it + sizes[1]);
  it += sizes[1];
  out.test.assign(it, perm.end());
  return out;
}

void SynthConfig::validate() const {
  const int g_count = n_groups();
  if (n < 1) throw Error("synth: n must be >= 1");
  if (p < 1) throw Error("synth: p must be >= 1");
  if (g_count < 1) throw Error("synth: at least one group");
  if (group_weights.rows() != g_count || group_weights.cols() != p) {
    throw Error("synth: group_weights must be G x p");
  }
  if (group_proportions.size() != g_count) {
    throw Error("synth: group_proportions must have G entries");
  }
  if ((group_proportions.array() < 0.0).any() || std::abs(group_proportions.sum() - 1.0) > 1e-9) {
    throw Error("synth: group_proportions must lie on the simplex");
  }
}

SynthData synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> pick_group(config.group_proportions.data(),
                                             config.group_proportions.data() + config.group_proportions.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthData out;
  Dataset& data = out.data;
  data.features.resize(config.n, config.p);
  data.labels.resize(config.n);
  data.groups.resize(config.n);
  out.true_probabilities.resize(config.n);
  for (Index j = 0; j < config.p; ++j) {
    data.feature_names.push_back("x" + std::to_string(j));
  }

  for (Index i = 0; i < config.n; ++i) {
    const int g = pick_group(rng);
    for (Index j = 0; j < config.p; ++j) {
      data.features(i, j) = normal(rng);
    }
    const double z = data.features.row(i).dot(config.group_weights.row(g)) + config.group_bias[g];
    const double prob = sigmoid(z);
    data.groups[i] = g;
    out.true_probabilities[i] = prob;
    data.labels[i] = unit(rng) < prob ? 1.0 : 0.0;
  }
  // Dense ids follow first appearance, as for loaded files; names keep the config index.
  std::vector<int> remap(static_cast<std::size_t>(config.n_groups()), -1);
  int next = 0;
  for (Index i = 0; i < config.n; ++i) {
    auto& id = remap[static_cast<std::size_t>(data.groups[i])];
    if (id < 0) id = next++;
  }
  for (auto& id : remap) {
    if (id < 0) id = next++;  // small n can leave a group empty; keep the roster
  }
  std::vector<std::string> names(remap.size());
  for (std::size_t g = 0; g < remap.size(); ++g) {
    names[static_cast<std::size_t>(remap[g])] = "g" + std::to_string(g);
  }
  data.group_names = std::move(names);
  for (Index i = 0; i < config.n; ++i) {
    data.groups[i] = remap[static_cast<std::size_t>(data.groups[i])];
  }
  return out;
}

}  // namespace faircal
