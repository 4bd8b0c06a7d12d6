#include "faircal/csv.hpp"
#include "faircal/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"

using namespace faircal;

namespace {

std::string temp_file(const std::string& name, const std::string& contents) {
  const auto path = std::filesystem::temp_directory_path() / ("faircal_" + name);
  std::ofstream(path) << contents;
  return path.string();
}

}  // namespace

TEST_CASE("load_csv one-hot encodes categoricals in first-appearance order") {
  const auto path = temp_file("cat.csv", "age,job,y,sex\n30,a,1,M\n40,b,0,F\n50,c,1,M\n60,a,0,F\n");
  CsvLoadOptions opts{"y", "sex", {"job"}};
  const Dataset d = load_csv(path, opts);
  CHECK(d.n_features() == 4);
  CHECK(d.feature_names == std::vector<std::string>{"age", "job=a", "job=b", "job=c"});
  CHECK(d.groups == (IntVector(4) << 0, 1, 0, 1).finished());
  CHECK(d.n_groups() == 2);
  CHECK(d.group_names == std::vector<std::string>{"M", "F"});
  CHECK(d.features(1, 2) == 1.0);
  CHECK(d.features(1, 1) == 0.0);
}

TEST_CASE("load_csv rejects a non-binary label") {
  const auto path = temp_file("bad.csv", "x,y,g\n1,0,a\n2,2,b\n");
  CsvLoadOptions opts{"y", "g", {}};
  CHECK_THROWS_WITH_AS(load_csv(path, opts), doctest::Contains("non-binary label"), Error);
}

TEST_CASE("load_csv skips sidecar columns and round-trips write_csv") {
  SynthConfig c;
  c.n = 50;
  c.p = 2;
  c.group_weights = Matrix::Ones(2, 2);
  c.group_bias = Vector::Zero(2);
  c.group_proportions = Vector::Constant(2, 0.5);
  c.seed = 3;
  const auto s = synth_generate(c);
  const auto path = (std::filesystem::temp_directory_path() / "faircal_roundtrip.csv").string();
  write_csv(s.data, path, "label", "group", &s.true_probabilities);
  const Dataset back = load_csv(path, {"label", "group", {}});
  CHECK(back.n_features() == 2);
  CHECK(back.features.isApprox(s.data.features, 0.0));
  CHECK(back.labels == s.data.labels);
  CHECK(back.groups.size() == s.data.groups.size());
}

TEST_CASE("split sizes and determinism") {
  const auto a = split(10, kDefaultSplitRatios, 7);
  CHECK(a.train.size() == 6);
  CHECK(a.validation.size() == 2);
  CHECK(a.test.size() == 2);
  const auto b = split(10, kDefaultSplitRatios, 7);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
  std::vector<Index> all = a.train;
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("split keeps group proportions in train within 2%") {
  SynthConfig c;
  c.n = 100000;
  c.p = 1;
  c.group_weights = Matrix::Zero(3, 1);
  c.group_bias = Vector::Zero(3);
  c.group_proportions = (Vector(3) << 0.6, 0.3, 0.1).finished();
  c.seed = 11;
  const auto d = synth_generate(c).data;
  Vector full = Vector::Zero(3);
  for (Index i = 0; i < d.size(); ++i) full[d.groups[i]] += 1.0;
  full /= static_cast<double>(d.size());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split(d, kDefaultSplitRatios, seed);
    Vector train = Vector::Zero(3);
    for (Index r : s.train) train[d.groups[r]] += 1.0;
    train /= static_cast<double>(s.train.size());
    CHECK((train - full).cwiseAbs().maxCoeff() <= 0.02);
  }
}

TEST_CASE("synth_generate label rates follow the logistic model") {
  SynthConfig c;
  c.n = 40000;
  c.p = 2;
  c.group_weights = Matrix::Zero(2, 2);
  c.group_bias = (Vector(2) << -2.0, 2.0).finished();
  c.group_proportions = Vector::Constant(2, 0.5);
  c.seed = 5;
  const auto s = synth_generate(c);
  for (int g = 0; g < 2; ++g) {
    const auto name = "g" + std::to_string(g);
    const auto id = std::find(s.data.group_names.begin(), s.data.group_names.end(), name) - s.data.group_names.begin();
    double sum = 0.0, count = 0.0;
    for (Index i = 0; i < s.data.size(); ++i) {
      if (s.data.groups[i] != id) continue;
      sum += s.data.labels[i];
      count += 1.0;
    }
    const double p = 1.0 / (1.0 + std::exp(-c.group_bias[g]));
    CHECK(std::abs(sum / count - p) <= 4.5 * std::sqrt(p * (1 - p) / count));
  }
  SynthConfig zero = c;
  zero.group_bias = Vector::Zero(2);
  const auto z = synth_generate(zero);
  CHECK((z.true_probabilities.array() == 0.5).all());
  CHECK(std::abs(z.data.labels.mean() - 0.5) <= 3.0 / std::sqrt(static_cast<double>(c.n)));
  const auto again = synth_generate(c);
  CHECK(again.data.features == s.data.features);
  CHECK(again.data.labels == s.data.labels);
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.features = Matrix::Zero(2, 1);
  d.labels = (Vector(2) << 0, 1).finished();
  d.groups = (IntVector(2) << 0, 0).finished();
  d.feature_names = {"x"};
  d.group_names = {"a", "b"};
  CHECK_THROWS_AS(d.validate(), Error);  // group b empty
  d.group_names = {"a"};
  CHECK_NOTHROW(d.validate());
  d.labels[0] = 0.5;
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("csv reader handles quoting") {
  std::istringstream in("\xEF\xBB\xBF" "a,b\r\n\"x,1\",\"he said \"\"hi\"\"\"\r\n\"multi\nline\",2\n");
  const auto t = csv::read(in);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header == csv::Row{"a", "b"});
  CHECK(t.rows[0][0] == "x,1");
  CHECK(t.rows[0][1] == "he said \"hi\"");
  CHECK(t.rows[1][0] == "multi\nline");
  double v = 0;
  CHECK(csv::parse_double(csv::format_double(0.1 + 0.2), v));
  CHECK(v == 0.1 + 0.2);
  CHECK_FALSE(csv::parse_double("1.5x", v));
}
