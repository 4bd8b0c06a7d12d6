#include "faircal/metrics.hpp"
#include "faircal/multicalibration.hpp"

#include "../support/scenarios.hpp"
#include "../support/vec.hpp"

#include "doctest.h"

using namespace faircal;
using testing::ivec;
using testing::vec;

namespace {

double pearson(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  double cov = 0, va = 0, vb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("partitions") {
  CHECK(partition(vec({0.1, 0.5, 0.9}), PartitionScheme::kQuantile, 1) == ivec({0, 0, 0}));
  CHECK(partition(vec({0.1, 0.5, 0.9}), PartitionScheme::kEven, 1) == ivec({0, 0, 0}));
  CHECK(partition(vec({0.05, 0.45, 0.55, 0.95}), PartitionScheme::kEven, 2) == ivec({0, 0, 1, 1}));
  CHECK(partition(vec({0.1, 0.2, 0.8, 0.81}), PartitionScheme::kQuantile, 2) == ivec({0, 0, 1, 1}));
  CHECK(partition(vec({0.1, 0.2, 0.8, 0.81}), PartitionScheme::kEven, 2) == ivec({0, 0, 1, 1}));
  CHECK(partition(vec({0.1, 0.11, 0.12, 0.9}), PartitionScheme::kQuantile, 2) == ivec({0, 0, 1, 1}));
  CHECK(partition(vec({0.1, 0.11, 0.12, 0.9}), PartitionScheme::kEven, 2) == ivec({0, 0, 0, 1}));
  const auto spec = make_partition(vec({0.1, 0.11, 0.12, 0.9}), PartitionScheme::kQuantile, 2);
  CHECK(PartitionSpec::from_json(spec.to_json()).assign(vec({0.105, 0.5})) == spec.assign(vec({0.105, 0.5})));
}

TEST_CASE("miscalibration is |pearson|") {
  CHECK(miscalibration(vec({0.1, 0.5, 0.2}), vec({0.1, 0.5, 0.2})) == doctest::Approx(1.0));
  CHECK(miscalibration(vec({2, 2, 2}), vec({0.1, 0.5, 0.2})) == 0.0);
  const Vector a = vec({1, -1, 1}), b = vec({1, 1, -1});
  CHECK(miscalibration(a, b) == doctest::Approx(std::abs(pearson(a, b))).epsilon(1e-12));
  CHECK(miscalibration(a, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ridge residual model recovers a linear residual") {
  Rng rng(2);
  std::normal_distribution<double> normal;
  Matrix x(2000, 3);
  Vector truth(2000), noisy(2000);
  for (Index i = 0; i < 2000; ++i) {
    for (Index f = 0; f < 3; ++f) x(i, f) = normal(rng);
    truth[i] = 0.3 * x(i, 0) - 0.2 * x(i, 2) + 0.05;
    noisy[i] = truth[i] + 0.3 * normal(rng);
  }
  const auto m = fit_ridge(x, noisy, 1.0);
  CHECK(pearson(m.predict(x), truth) > 0.9);
  CHECK(m.intercept == doctest::Approx(0.05).epsilon(0.5));
}

TEST_CASE("mc_fit stops on calibrated input") {
  const auto d = testing::calibrated_scores(4000, 3);
  Matrix x = Matrix::Random(4000, 2);
  McConfig c;
  c.stop_threshold = 0.5;
  const auto seq = mc_fit(d.scores, x, d.labels, c, 1);
  CHECK(seq.steps.empty());
  CHECK(seq.terminal == McTerminal::kThreshold);
  CHECK(mc_apply(seq, d.scores, x) == d.scores);
}

TEST_CASE("mc_fit replay, determinism and clipping") {
  const auto s = testing::miscalibrated_subgroup(3000, 4);
  for (auto rule : {UpdateRule::kAdditiveRepartition, UpdateRule::kMultiplicativeFixed}) {
    for (auto model : {ResidualModelKind::kRidge, ResidualModelKind::kTree}) {
      for (auto sampling : {McSampling::kNone, McSampling::kDisjoint, McSampling::kBootstrap}) {
        McConfig c;
        c.update_rule = rule;
        c.residual_model = model;
        c.sampling = sampling;
        c.stop_threshold = 0.0;
        c.max_iterations = 6;
        CAPTURE(c.to_json().dump());
        const auto seq = mc_fit(s.scores, s.features, s.labels, c, 9);
        CHECK(seq.terminal == McTerminal::kMaxIterations);
        CHECK(seq.steps.size() == 6);
        const Vector replay = mc_apply(seq, s.scores, s.features);
        CHECK(replay == seq.final_scores);
        CHECK(replay.minCoeff() >= kScoreEpsilon);
        CHECK(replay.maxCoeff() <= 1.0 - kScoreEpsilon);
        const auto again = mc_fit(s.scores, s.features, s.labels, c, 9);
        CHECK(again.to_json() == seq.to_json());
        const auto back = UpdateSequence::from_json(seq.to_json());
        CHECK(mc_apply(back, s.scores, s.features) == replay);
      }
    }
  }
  UpdateSequence empty;
  empty.n_features = 3;
  CHECK(mc_apply(empty, s.scores, s.features) == s.scores);
  McConfig bad;
  bad.n_partitions = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mc_select") {
  const auto s = testing::miscalibrated_subgroup(2000, 5);
  McConfig only;
  only.stop_threshold = 10.0;
  const auto one = mc_select(s.scores, s.features, s.labels, {only}, 1);
  CHECK(one.candidate == 0);
  CHECK(one.sequence.steps.empty());

  int picks = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = testing::miscalibrated_subgroup(4000, 200 + seed);
    McConfig identity;
    identity.stop_threshold = 10.0;
    McConfig active;
    active.stop_threshold = 0.0;
    active.n_partitions = 1;
    active.residual_model = ResidualModelKind::kTree;
    // One stump step matches the subgroup boundary; more steps start fitting label noise.
    active.tree_max_depth = 1;
    active.max_iterations = 1;
    const auto sel = mc_select(d.scores, d.features, d.labels, {identity, active}, seed);
    if (sel.candidate == 1) ++picks;
  }
  CHECK(picks >= 9);

  const auto grid = mc_config_grid(6, 3);
  CHECK(grid.size() == 6);
  CHECK(grid[0].to_json() == McConfig{}.to_json());
  const auto a = mc_select(s.scores, s.features, s.labels, grid, 11);
  const auto b = mc_select(s.scores, s.features, s.labels, grid, 11);
  CHECK(a.candidate == b.candidate);
  CHECK(a.holdout_scores == b.holdout_scores);
}
