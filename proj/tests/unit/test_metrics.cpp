#include "faircal/metrics.hpp"

#include "../support/scenarios.hpp"
#include "../support/vec.hpp"

#include <algorithm>
#include <numeric>

#include "doctest.h"

using namespace faircal;

namespace {

using testing::vec;

// Direct O(n^2) evaluation of the kernel calibration error.
double mmce_oracle(const Vector& s, const Vector& y, double width) {
  const Index n = s.size();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double ri = std::max(s[i], 1 - s[i]);
    const double ci = ((s[i] >= 0.5) == (y[i] > 0.5)) ? 1.0 : 0.0;
    for (Index j = 0; j < n; ++j) {
      const double rj = std::max(s[j], 1 - s[j]);
      const double cj = ((s[j] >= 0.5) == (y[j] > 0.5)) ? 1.0 : 0.0;
      total += (ci - ri) * (cj - rj) * std::exp(-std::abs(ri - rj) / width);
    }
  }
  return std::sqrt(std::max(0.0, total) / static_cast<double>(n * n));
}

}  // namespace

TEST_CASE("ece hand examples") {
  CHECK(ece(vec({0.2, 0.2, 0.8, 0.8}), vec({0, 1, 1, 1}), 2, Binning::kEqualWidth).value == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ece(vec({0.1, 0.3, 0.6, 0.9}), vec({0, 0, 1, 1}), 2, Binning::kEqualMass).value == doctest::Approx(0.225).epsilon(1e-12));
  CHECK(ece(vec({0, 1, 1, 0}), vec({0, 1, 1, 0}), 7, Binning::kEqualWidth).value == 0.0);
}

TEST_CASE("ecce hand examples") {
  const auto c = cumulative_process(vec({0.5, 0.5}), vec({1, 0}));
  CHECK(c[0] == doctest::Approx(0.25));
  CHECK(c[1] == doctest::Approx(0.0));
  CHECK(ecce(vec({0.5, 0.5}), vec({1, 0}), EcceVariant::kMean).value == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(ecce(vec({0.5, 0.5}), vec({1, 0}), EcceVariant::kMax).value == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ecce(vec({0, 1, 1}), vec({0, 1, 1}), EcceVariant::kMax).value == 0.0);
}

TEST_CASE("ecce shrinks on calibrated data") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = testing::calibrated_scores(100000, seed);
    CHECK(ecce(d.scores, d.labels).value < 0.01);
  }
}

TEST_CASE("msce sweep") {
  auto a = msce(vec({0.1, 0.2, 0.8, 0.9}), vec({0, 1, 1, 1}));
  CHECK(a.value == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(*a.auxiliary == 4.0);
  auto b = msce(vec({0.1, 0.4, 0.6, 0.9}), vec({1, 0, 1, 1}));
  CHECK(b.value == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(*b.auxiliary == 2.0);
  auto c = msce(vec({0.5, 0.5, 0.5, 0.5}), vec({1, 0, 1, 0}));
  CHECK(c.value == doctest::Approx(0.0));
}

TEST_CASE("mmce exact and sampled") {
  CHECK(mmce(vec({0.8, 0.8}), vec({1, 0})).value == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(mmce(vec({1, 0, 1}), vec({1, 0, 1})).value == 0.0);
  Rng rng(4);
  std::uniform_real_distribution<double> u;
  Vector s(300), y(300);
  for (Index i = 0; i < 300; ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < s[i] * s[i] ? 1.0 : 0.0;
  }
  const double exact = mmce(s, y).value;
  CHECK(exact == doctest::Approx(mmce_oracle(s, y, 0.4)).epsilon(1e-10));
  const double sampled = mmce(s, y, 0.4, 100000, 9).value;
  CHECK(std::abs(sampled - exact) <= 5.0 / std::sqrt(100000.0));
  CHECK_THROWS_AS(mmce(s, y, 0.4, 100), Error);
}

TEST_CASE("brier and accuracy") {
  CHECK(brier(vec({0.2, 0.9}), vec({1, 1})).value == doctest::Approx(0.325).epsilon(1e-12));
  CHECK(brier(vec({0.5, 0.5}), vec({1, 0})).value == doctest::Approx(0.25));
  CHECK(accuracy(vec({0.4, 0.6}), vec({1, 0})).value == 0.0);
  CHECK(accuracy(vec({0.4, 0.6, 0.7}), vec({0, 0, 1})).value == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(vec({1, 0}), vec({1, 0})).value == 1.0);
}

TEST_CASE("worst_group matches per-group evaluation") {
  const auto d = testing::opposite_bias(2000, 1);
  const Vector s = Vector::Constant(d.data.size(), d.data.labels.mean());
  MetricSpec spec;
  const auto wg = worst_group(s, d.data.labels, d.data.groups, 2, spec);
  double best = -1;
  int arg = -1;
  for (int g = 0; g < 2; ++g) {
    std::vector<Index> rows;
    for (Index i = 0; i < d.data.size(); ++i) if (d.data.groups[i] == g) rows.push_back(i);
    const double v = ecce(take(s, rows), take(d.data.labels, rows)).value;
    if (v > best) { best = v; arg = g; }
  }
  CHECK(wg.value.value == best);
  CHECK(wg.group == arg);
  IntVector swapped = (1 - d.data.groups.array()).matrix();
  const auto ws = worst_group(s, d.data.labels, swapped, 2, spec);
  CHECK(ws.value.value == wg.value.value);
  CHECK(ws.group == 1 - wg.group);
  IntVector one = IntVector::Zero(d.data.size());
  CHECK(worst_group(s, d.data.labels, one, 1, spec).value.value == ecce(s, d.data.labels).value);
}

TEST_CASE("worst_group picks the constructed worse group") {
  const Vector s = vec({0.5, 0.5, 0.5, 0.5, 0.3, 0.3});
  const Vector y = vec({1, 0, 1, 0, 1, 1});
  const IntVector g = (IntVector(6) << 0, 0, 0, 0, 1, 1).finished();
  MetricSpec spec;
  const auto wg = worst_group(s, y, g, 2, spec);
  CHECK(wg.group == 1);
  CHECK(wg.value.value == doctest::Approx(ecce(vec({0.3, 0.3}), vec({1, 1})).value));
}

TEST_CASE("metric ids round trip") {
  for (auto k : {MetricKind::kEce, MetricKind::kEcceMean, MetricKind::kEcceMax, MetricKind::kMsce, MetricKind::kMmce,
                 MetricKind::kBrier, MetricKind::kAccuracy}) {
    CHECK(metric_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(metric_kind_from_string("kce"), ConfigError);
}
