#include "faircal/metrics.hpp"
#include "faircal/models.hpp"
#include "faircal/tuning.hpp"

#include "../support/scenarios.hpp"
#include "../support/vec.hpp"

#include "doctest.h"

using namespace faircal;
using testing::ivec;
using testing::vec;

namespace {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale < 1e-7 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
}

Dataset xor_data(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  Dataset d;
  d.features.resize(n, 2);
  d.labels.resize(n);
  d.groups = IntVector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const int a = coin(rng), b = coin(rng);
    d.features(i, 0) = a;
    d.features(i, 1) = b;
    d.labels[i] = a ^ b;
  }
  d.feature_names = {"a", "b"};
  d.group_names = {"all"};
  return d;
}

Dataset separable(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Dataset d;
  d.features.resize(n, 2);
  d.labels.resize(n);
  d.groups.resize(n);
  for (Index i = 0; i < n; ++i) {
    double x0 = normal(rng), x1 = normal(rng);
    const double m = x0 + x1;
    if (std::abs(m) < 0.3) x0 += m > 0 ? 0.6 : -0.6;  // margin
    d.features(i, 0) = x0;
    d.features(i, 1) = x1;
    d.labels[i] = x0 + x1 > 0 ? 1.0 : 0.0;
    d.groups[i] = static_cast<int>(i % 2);
  }
  d.feature_names = {"x0", "x1"};
  d.group_names = {"a", "b"};
  return d;
}

void check_mlp_gradient(const BatchContext& ctx, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const Index m = 5, p = 3;
  Matrix x(m, p);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < p; ++j) x(i, j) = normal(rng);
  const Vector y = vec({1, 0, 1, 1, 0});
  const IntVector g = ivec({0, 1, 0, 1, 1});
  MlpWeights w = MlpWeights::init(p, 4, 3, true, rng);
  // Move BN scale/shift away from their identity init so their gradients matter.
  Vector theta = w.flatten();
  for (Index k = 0; k < theta.size(); ++k) theta[k] += 0.1 * normal(rng);
  w.assign(theta);

  const BatchLoss base = mlp_batch_loss(w, x, y, g, ctx);
  REQUIRE(base.gradient.size() == theta.size());
  const double h = 1e-5;
  double worst = 0.0;
  for (Index k = 0; k < theta.size(); ++k) {
    Vector plus = theta, minus = theta;
    plus[k] += h;
    minus[k] -= h;
    MlpWeights wp = w, wm = w;
    wp.assign(plus);
    wm.assign(minus);
    const double numeric = (mlp_batch_loss(wp, x, y, g, ctx).loss - mlp_batch_loss(wm, x, y, g, ctx).loss) / (2 * h);
    worst = std::max(worst, relative_error(base.gradient[k], numeric));
  }
  CHECK(worst <= 1e-4);
}

}  // namespace

TEST_CASE("group_dro_step") {
  const Vector q = group_dro_step(vec({0.5, 0.5}), vec({1, 0}), std::log(2.0));
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Vector start = vec({0.2, 0.3, 0.5});
  CHECK((group_dro_step(start, vec({0.7, 0.7, 0.7}), 3.0) - start).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((group_dro_step(start, vec({0.1, 5, 2}), 0.0) - start).cwiseAbs().maxCoeff() < 1e-15);

  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Vector w = Vector::Constant(4, 0.25);
  bool ok = true;
  for (int step = 0; step < 10000; ++step) {
    Vector losses(4);
    for (Index g = 0; g < 4; ++g) losses[g] = u(rng);
    w = group_dro_step(w, losses, 0.05);
    ok = ok && (w.array() >= 0.0).all() && std::abs(w.sum() - 1.0) < 1e-12;
  }
  CHECK(ok);
}

TEST_CASE("gbt objective derivatives match finite differences") {
  const double h = 1e-5;
  double worst = 0.0;
  for (double y : {0.0, 1.0}) {
    for (double z = -4.0; z <= 4.0; z += 0.37) {
      for (auto f : {&logistic_objective, &brier_objective}) {
        const auto t = f(z, y);
        const double g = (f(z + h, y).loss - f(z - h, y).loss) / (2 * h);
        const double hh = (f(z + h, y).gradient - f(z - h, y).gradient) / (2 * h);
        worst = std::max({worst, relative_error(t.gradient, g), relative_error(t.hessian, hh)});
      }
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("gbt basics") {
  Dataset c = xor_data(200, 1);
  c.labels.setOnes();
  GbtParams p;
  const Model m = gbt_train(c, p, GroupFeatureMode::kNone);
  CHECK((m.predict(c.features).array() - 1.0).abs().maxCoeff() < 1e-3);

  const Dataset train = xor_data(2000, 2);
  const Dataset test = xor_data(1000, 3);
  GbtParams xp;
  xp.max_depth = 2;
  const Model x = gbt_train(train, xp, GroupFeatureMode::kNone);
  CHECK(accuracy(x.predict(test.features), test.labels).value >= 0.95);
}

TEST_CASE("gbt group reweighting off keeps unit weights") {
  const auto d = testing::opposite_bias(1000, 4).data;
  GbtParams p;
  p.boosting_rounds = 5;
  p.calibration_loss_weight = 0.5;
  p.dro_eta = 0.0;
  const Model a = gbt_train(d, p, GroupFeatureMode::kNone);
  CHECK(a.gbt().dro_weights.empty());
  Dataset shuffled = d;
  shuffled.groups = (1 - d.groups.array()).matrix();
  CHECK(gbt_train(shuffled, p, GroupFeatureMode::kNone).predict(d.features) == a.predict(d.features));
  p.calibration_loss_weight = 0.0;
  p.dro_eta = 2.0;
  CHECK(gbt_train(d, p, GroupFeatureMode::kNone).gbt().dro_weights.empty());
  p.calibration_loss_weight = 0.5;
  const Model r = gbt_train(d, p, GroupFeatureMode::kNone);
  CHECK(r.gbt().dro_weights.size() == 5);
  for (const auto& q : r.gbt().dro_weights) CHECK(q.sum() == doctest::Approx(1.0));
}

TEST_CASE("single-round depth-1 gbt equals a hand trace") {
  Dataset d;
  // Two copies per value so each child keeps hessian mass 1 (min_child_weight).
  d.features = (Matrix(8, 1) << 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0).finished();
  d.labels = vec({0, 0, 0, 0, 1, 1, 1, 1});
  d.groups = IntVector::Zero(8);
  d.feature_names = {"x"};
  d.group_names = {"all"};
  GbtParams p;
  p.boosting_rounds = 1;
  p.max_depth = 1;
  p.eta = 1.0;
  const Model m = gbt_train(d, p, GroupFeatureMode::kNone);
  const auto& tree = m.gbt().trees.at(0);
  REQUIRE(tree.nodes.size() == 3);
  const auto& root = tree.nodes[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold > 1.0);
  CHECK(root.threshold <= 2.0);
  // base margin 0 (balanced labels): g = p - y = +-0.5, h = 0.25 per row, lambda 1
  CHECK(m.gbt().base_margin == doctest::Approx(0.0));
  const double left = -(4 * 0.5) / (4 * 0.25 + 1.0);
  const double right = -(4 * -0.5) / (4 * 0.25 + 1.0);
  const Vector out = m.predict(d.features);
  CHECK(out[0] == doctest::Approx(sigmoid(left)).epsilon(1e-12));
  CHECK(out[7] == doctest::Approx(sigmoid(right)).epsilon(1e-12));
}

TEST_CASE("model predict contract and serialization") {
  const auto d = testing::opposite_bias(800, 5).data;
  GbtParams p;
  p.boosting_rounds = 5;
  const Model m = gbt_train(d, p, GroupFeatureMode::kNone);
  const IntVector flipped = (1 - d.groups.array()).matrix();
  CHECK(m.predict(d.features) == m.predict(d.features, &flipped));
  CHECK(m.predict(d.features) == m.predict(d.features));
  const Model back = Model::from_json(m.to_json());
  CHECK(back.predict(d.features) == m.predict(d.features));

  const Model f = gbt_train(d, p, GroupFeatureMode::kAsFeature);
  CHECK_THROWS_AS(f.predict(d.features), Error);
  CHECK(f.predict(d.features, &d.groups) != f.predict(d.features, &flipped));

  MlpParams mp;
  mp.layer1_units = 8;
  mp.layer2_units = 4;
  mp.num_epochs = 2;
  mp.batch_size = 64;
  const Model n = mlp_train(d, mp, {}, GroupFeatureMode::kNone);
  const Model nb = Model::from_json(n.to_json());
  CHECK(nb.predict(d.features) == n.predict(d.features));
}

TEST_CASE("mlp gradients match finite differences") {
  BatchContext ctx;
  ctx.l2_regularization = 1e-2;
  ctx.n_groups = 2;
  ctx.group_weights = vec({0.5, 0.5});
  SUBCASE("bce") {
    ctx.loss.kind = LossKind::kBce;
    check_mlp_gradient(ctx, 1);
  }
  SUBCASE("bce + mmce") {
    ctx.loss.kind = LossKind::kBceMmce;
    ctx.calibration_loss_weight = 0.7;
    check_mlp_gradient(ctx, 2);
  }
  SUBCASE("group dro") {
    ctx.loss.kind = LossKind::kGroupDro;
    ctx.calibration_loss_weight = 0.7;
    ctx.group_weights = vec({0.3, 0.7});
    check_mlp_gradient(ctx, 3);
  }
  SUBCASE("group dro, calibration only") {
    ctx.loss.kind = LossKind::kGroupDro;
    ctx.loss.dro_calibration_only = true;
    ctx.calibration_loss_weight = 0.7;
    ctx.group_weights = vec({0.8, 0.2});
    check_mlp_gradient(ctx, 4);
  }
}

TEST_CASE("mmce_with_gradient agrees with the metric") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Vector p(30), y(30);
  for (Index i = 0; i < 30; ++i) {
    p[i] = u(rng);
    y[i] = u(rng) < p[i] ? 1.0 : 0.0;
  }
  Vector grad;
  const double v = mmce_with_gradient(p, y, 0.4, &grad);
  CHECK(v == doctest::Approx(mmce(p, y, 0.4).value).epsilon(1e-12));
  const double h = 1e-6;
  for (Index i = 0; i < 30; ++i) {
    Vector a = p, b = p;
    a[i] += h;
    b[i] -= h;
    const double numeric = (mmce_with_gradient(a, y, 0.4, nullptr) - mmce_with_gradient(b, y, 0.4, nullptr)) / (2 * h);
    CHECK(relative_error(grad[i], numeric) <= 1e-4);
  }
}

TEST_CASE("mlp training") {
  const Dataset d = separable(2000, 6);
  MlpParams p;
  p.layer1_units = 16;
  p.layer2_units = 8;
  p.learning_rate = 0.05;
  p.batch_size = 64;
  p.num_epochs = 15;
  const Model m = mlp_train(d, p, {}, GroupFeatureMode::kNone);
  CHECK(accuracy(m.predict(d.features), d.labels).value >= 0.99);

  // Uniform q frozen, no calibration term: group DRO reproduces plain BCE exactly.
  MlpParams q = p;
  q.num_epochs = 3;
  q.calibration_loss_weight = 0.0;
  q.dro_eta = 0.0;
  q.dro_regularization = 0.0;
  const Model plain = mlp_train(d, q, {LossKind::kBce, false}, GroupFeatureMode::kNone);
  const Model dro = mlp_train(d, q, {LossKind::kGroupDro, false}, GroupFeatureMode::kNone);
  CHECK(plain.mlp().weights.flatten() == dro.mlp().weights.flatten());
  CHECK(plain.mlp().epoch_loss == dro.mlp().epoch_loss);

  MlpParams broken = q;
  broken.learning_rate = 1e30;
  CHECK_THROWS_AS(mlp_train(d, broken, {}, GroupFeatureMode::kNone), ComponentError);
}

TEST_CASE("tuning") {
  const auto space = default_search_space(ModelKind::kGbt, SearchVariant::kPlain);
  int calls = 0;
  const auto one = random_search(space, 1, 1, true, [&](const nlohmann::json&, int) { return ++calls; });
  CHECK(one.best == default_point(space));
  CHECK(one.best["eta"] == 0.3);

  auto prefers_depth = [](const nlohmann::json& point, int) { return point.at("max_depth").get<double>(); };
  const auto r = random_search(space, 40, 7, true, prefers_depth);
  bool seen = false;
  for (const auto& pt : r.points) seen = seen || pt.at("max_depth") == 8;
  REQUIRE(seen);
  CHECK(r.best.at("max_depth") == 8);
  const auto again = random_search(space, 40, 7, true, prefers_depth);
  CHECK(again.points == r.points);
  CHECK(again.best_trial == r.best_trial);

  const auto d = testing::opposite_bias(1200, 8).data;
  const auto parts = split(d, kDefaultSplitRatios, 1);
  FitRecipe recipe;
  nlohmann::json fixed = {{"boosting_rounds", 5}};
  recipe.fixed = fixed;
  const auto t = tune(d.subset(parts.train), d.subset(parts.validation), recipe, space, TuneObjective::kAccuracy, 3, 2);
  REQUIRE(t.best_model);
  const Model refit = fit_point(d.subset(parts.train), recipe, t.best, derive_seed(2, static_cast<std::uint64_t>(t.best_trial)));
  CHECK(refit.predict(d.features) == t.best_model->predict(d.features));
  const auto from = SearchSpace::from_json(space.to_json());
  CHECK(from.to_json() == space.to_json());
}
