#include "faircal/calibrators.hpp"
#include "faircal/metrics.hpp"

#include "../support/scenarios.hpp"
#include "../support/vec.hpp"

#include <set>

#include "doctest.h"

using namespace faircal;
using testing::vec;
using testing::ivec;

namespace {

// Isotonic least squares over equally weighted points in score order:
// f_i = max_{j <= i} min_{k >= i} mean(y_j..y_k).
std::vector<double> isotonic_minmax(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j <= i; ++j) {
      double inner = 1e300;
      for (std::size_t k = i; k < n; ++k) {
        double sum = 0.0;
        for (std::size_t t = j; t <= k; ++t) sum += y[t];
        inner = std::min(inner, sum / static_cast<double>(k - j + 1));
      }
      best = std::max(best, inner);
    }
    f[i] = best;
  }
  return f;
}

double max_identity_deviation(const Calibrator& c, double lo, double hi) {
  double worst = 0.0;
  for (double s = lo; s <= hi + 1e-12; s += 0.01) {
    worst = std::max(worst, std::abs(c.apply(vec({s}))[0] - s));
  }
  return worst;
}

}  // namespace

TEST_CASE("pava hand example and trivial cases") {
  const auto f = pava(vec({1, 2, 3}), vec({1, 0, 1}));
  CHECK(f(1) == doctest::Approx(0.5));
  CHECK(f(2) == doctest::Approx(0.5));
  CHECK(f(3) == doctest::Approx(1.0));
  const auto c = pava(vec({0.1, 0.5, 0.9}), vec({1, 1, 1}));
  for (double v : c.values) CHECK(v == 1.0);
  // already monotone with ties: per-unique-score means
  const auto m = pava(vec({0.1, 0.1, 0.4, 0.4, 0.8}), vec({0, 1, 1, 0, 1}));
  CHECK(m(0.1) == doctest::Approx(0.5));
  CHECK(m(0.4) == doctest::Approx(0.5));
  CHECK(m(0.8) == doctest::Approx(1.0));
}

TEST_CASE("pava equals min-max isotonic least squares on all n=8 label patterns") {
  Vector s(8);
  for (Index i = 0; i < 8; ++i) s[i] = 0.1 * static_cast<double>(i + 1);
  for (int mask = 0; mask < 256; ++mask) {
    std::vector<double> y(8);
    Vector yv(8);
    for (int i = 0; i < 8; ++i) {
      y[static_cast<std::size_t>(i)] = (mask >> i) & 1;
      yv[i] = y[static_cast<std::size_t>(i)];
    }
    const auto oracle = isotonic_minmax(y);
    const auto f = pava(s, yv);
    for (int i = 0; i < 8; ++i) CHECK(f(s[i]) == oracle[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("histogram binning") {
  const auto h = fit_histogram(vec({0.2, 0.4, 0.7, 0.9}), vec({0, 1, 1, 1}), 2, Binning::kEqualWidth);
  CHECK(h->apply(vec({0.3}))[0] == doctest::Approx(0.5));
  CHECK(h->apply(vec({0.8}))[0] == doctest::Approx(1.0));
  const auto one = fit_histogram(vec({0.2, 0.4, 0.7, 0.9}), vec({0, 1, 1, 1}), 1, Binning::kEqualMass);
  CHECK(one->apply(vec({0.01, 0.99}))[1] == doctest::Approx(0.75));
  const auto d = testing::calibrated_scores(5000, 2);
  const auto ten = fit_histogram(d.scores, d.labels, 10, Binning::kEqualMass);
  const Vector out = ten->apply(d.scores);
  std::set<double> distinct(out.data(), out.data() + out.size());
  CHECK(distinct.size() <= 10);
  CHECK_THROWS_AS(fit_histogram(vec({0.1, 0.2}), vec({0, 1}), 3, Binning::kEqualMass), Error);
}

TEST_CASE("platt") {
  Rng rng(1);
  std::uniform_real_distribution<double> u;
  Vector s(20000), y(20000);
  for (Index i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < 0.3 ? 1.0 : 0.0;
  }
  const auto flat = fit_platt(s, y);
  CHECK(std::abs(flat->a()) < 0.05);
  CHECK(std::abs(flat->apply(vec({0.5}))[0] - y.mean()) < 0.02);

  const auto d = testing::calibrated_scores(50000, 3);
  CHECK(max_identity_deviation(*fit_platt(d.scores, d.labels), 0.1, 0.9) < 0.02);

  const auto two = fit_platt(vec({0.3, 0.7}), vec({0, 1}));
  const Vector o = two->apply(vec({0.3, 0.7}));
  CHECK(o[0] < 0.5);
  CHECK(o[1] > 0.5);
}

TEST_CASE("beta calibration") {
  const auto d = testing::calibrated_scores(50000, 4);
  const auto b = fit_beta(d.scores, d.labels);
  CHECK(b->a() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(b->b() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(b->c()) < 0.1);
  CHECK(max_identity_deviation(*b, 0.1, 0.9) < 0.02);
  // anti-monotone labels must not produce negative slopes
  Vector s(200), y(200);
  for (Index i = 0; i < 200; ++i) {
    s[i] = (static_cast<double>(i) + 0.5) / 200.0;
    y[i] = s[i] < 0.5 ? 1.0 : 0.0;
  }
  const auto anti = fit_beta(s, y);
  CHECK(anti->a() >= 0.0);
  CHECK(anti->b() >= 0.0);
  const Vector out = anti->apply(s);
  CHECK((out.array() > 0.0).all());
  CHECK((out.array() < 1.0).all());
}

TEST_CASE("temperature scaling") {
  const auto d = testing::calibrated_scores(50000, 5);
  CHECK(fit_temperature(d.scores, d.labels)->temperature() == doctest::Approx(1.0).epsilon(0.05));
  const auto t = fit_temperature(vec({0.9, 0.9}), vec({1, 0}));
  CHECK(t->temperature() == TemperatureBounds{}.high);
  CHECK(t->apply(vec({0.9}))[0] == doctest::Approx(0.5).epsilon(0.03));
  const TemperatureCalibrator identity(1.0);
  const Vector s = vec({0.1, 0.5, 0.77});
  CHECK((identity.apply(s) - s).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bbq") {
  const auto d = testing::calibrated_scores(3000, 6);
  const auto single = fit_bbq(d.scores, d.labels, {7});
  const auto hist = fit_histogram(d.scores, d.labels, 7, Binning::kEqualMass);
  CHECK(single->apply(d.scores) == hist->apply(d.scores));
  const auto small = fit_bbq(d.scores.head(60), d.labels.head(60));
  double total = 0.0;
  for (double w : small->weights()) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const auto full = fit_bbq(d.scores, d.labels);
  double worst_member = 0.0;
  for (const auto& m : full->members()) worst_member = std::max(worst_member, max_identity_deviation(*m, 0.0, 1.0));
  CHECK(max_identity_deviation(*full, 0.0, 1.0) <= worst_member + 1e-12);
}

TEST_CASE("platt binner composes platt and histogram") {
  const auto d = testing::calibrated_scores(4000, 7);
  const auto pb = fit_platt_binner(d.scores, d.labels, 10, 3);
  const Vector direct = pb->apply(d.scores);
  const Vector composed = pb->binner().apply(pb->platt().apply(d.scores));
  CHECK(direct == composed);
  std::set<double> distinct(direct.data(), direct.data() + direct.size());
  CHECK(distinct.size() <= 10);
}

TEST_CASE("platt binner beats plain histogram on sigmoid-distorted scores") {
  // Many bins against a small calibration set; a large held-out set keeps ECCE noise low.
  const Index fit = 1000, bins = 100;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = testing::calibrated_scores(fit + 50000, 100 + seed);
    for (Index i = 0; i < d.scores.size(); ++i) d.scores[i] = sigmoid(3.0 * logit(d.scores[i]) + 0.5);
    const Index rest = d.scores.size() - fit;
    const auto pb = fit_platt_binner(d.scores.head(fit), d.labels.head(fit), bins, seed);
    const auto h = fit_histogram(d.scores.head(fit), d.labels.head(fit), bins, Binning::kEqualWidth);
    const double e_pb = ecce(pb->apply(d.scores.tail(rest)), d.labels.tail(rest)).value;
    const double e_h = ecce(h->apply(d.scores.tail(rest)), d.labels.tail(rest)).value;
    if (e_pb <= e_h) ++wins;
  }
  CHECK(wins >= 7);
}

TEST_CASE("per-group calibrator") {
  const auto d = testing::calibrated_scores(400, 8);
  // identical multisets in both groups
  Vector s(800), y(800);
  IntVector g(800);
  s << d.scores, d.scores;
  y << d.labels, d.labels;
  g << IntVector::Zero(400), IntVector::Ones(400);
  CalibratorSpec inner{CalibratorKind::kIsotonic, {}};
  const auto pg = fit_per_group(s, y, g, inner);
  const auto pooled = fit_isotonic(s, y);
  CHECK(pg->apply(s, &g) == pooled->apply(s));
  const IntVector unseen = IntVector::Constant(800, 5);
  CHECK_THROWS_AS(pg->apply(s, &unseen), Error);
  CHECK_THROWS_AS(pg->apply(s), Error);
  CHECK(pg->needs_groups());
}

TEST_CASE("per-group isotonic beats pooled isotonic on opposite bias") {
  int wins = 0;
  MetricSpec spec;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = testing::opposite_bias(4000, seed);
    // group-blind score: sigmoid(w . x)
    Vector s(d.data.size());
    for (Index i = 0; i < s.size(); ++i) s[i] = sigmoid(d.data.features(i, 0) - 0.5 * d.data.features(i, 1));
    const Index half = 2000;
    const IntVector g_fit = d.data.groups.head(half);
    const IntVector g_test = d.data.groups.tail(half);
    const auto pg = fit_per_group(s.head(half), d.data.labels.head(half), g_fit, {CalibratorKind::kIsotonic, {}});
    const auto pooled = fit_isotonic(s.head(half), d.data.labels.head(half));
    const double a = worst_group(pg->apply(s.tail(half), &g_test), d.data.labels.tail(half), g_test, 2, spec).value.value;
    const double b = worst_group(pooled->apply(s.tail(half)), d.data.labels.tail(half), g_test, 2, spec).value.value;
    if (a < b) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("group-robust calibrator") {
  MetricSpec spec;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = testing::opposite_bias(4000, 50 + seed, 1.0);
    // Base scores ignore the group and are skewed toward group 0.
    Vector s(d.data.size());
    for (Index i = 0; i < s.size(); ++i) s[i] = sigmoid(d.data.features(i, 0) - 0.5 * d.data.features(i, 1) + 0.8);
    const Index half = 2000;
    const IntVector g_fit = d.data.groups.head(half);
    const IntVector g_test = d.data.groups.tail(half);
    const auto gr = fit_group_robust(s.head(half), d.data.labels.head(half), g_fit);
    CHECK_FALSE(gr->needs_groups());
    const double after = worst_group(gr->apply(s.tail(half)), d.data.labels.tail(half), g_test, 2, spec).value.value;
    const double before = worst_group(s.tail(half), d.data.labels.tail(half), g_test, 2, spec).value.value;
    if (after < before) ++wins;
  }
  CHECK(wins >= 8);

  // G = 1 reduces to a Brier-objective GBT on the score.
  const auto c = testing::calibrated_scores(1000, 9);
  const IntVector one = IntVector::Zero(1000);
  const auto gr = fit_group_robust(c.scores, c.labels, one);
  Dataset data;
  data.features = c.scores;
  data.labels = c.labels;
  data.groups = one;
  data.feature_names = {"score"};
  data.group_names = {"0"};
  GbtParams p = default_group_robust_params();
  p.objective = GbtObjective::kBrier;
  const Model plain = gbt_train(data, p, GroupFeatureMode::kNone);
  CHECK((gr->apply(c.scores) - plain.predict(data.features)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("calibrator factory and serialization") {
  CHECK_THROWS_WITH_AS(calibrator_kind_from_string("enir"), doctest::Contains("enir"), ConfigError);
  CHECK_THROWS_AS(calibrator_kind_from_string("nope"), ConfigError);
  const auto d = testing::calibrated_scores(500, 10);
  const IntVector g = (d.scores.array() > 0.5).cast<int>();
  for (const char* kind : {"histogram", "isotonic", "platt", "beta", "temperature", "bbq", "platt_binner", "per_group",
                           "group_robust"}) {
    CAPTURE(kind);
    CalibratorSpec spec = CalibratorSpec::from_json(kind);
    const auto c = fit_calibrator(spec, d.scores, d.labels, &g);
    const auto back = Calibrator::from_json(c->to_json());
    CHECK(back->kind() == c->kind());
    CHECK(back->apply(d.scores, &g) == c->apply(d.scores, &g));
  }
  CHECK_THROWS_AS(fit_calibrator(CalibratorSpec::from_json("per_group"), d.scores, d.labels), Error);
}
