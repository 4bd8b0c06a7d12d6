#include "faircal/models.hpp"

#include "faircal/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace faircal {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kBce: return "bce";
    case LossKind::kBceMmce: return "bce_mmce";
    case LossKind::kGroupDro: return "group_dro";
  }
  return "unknown";
}

void MlpParams::validate() const {
  if (layer1_units < 1 || layer2_units < 1) throw Error("mlp: layer units must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("mlp: learning_rate must be positive");
  if (l2_regularization < 0.0) throw Error("mlp: l2_regularization must be >= 0");
  if (batch_size < 1) throw Error("mlp: batch_size must be >= 1");
  if (num_epochs < 1) throw Error("mlp: num_epochs must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw Error("mlp: momentum must lie in [0, 1)");
  if (calibration_loss_weight < 0.0) throw Error("mlp: calibration_loss_weight must be >= 0");
  if (dro_eta < 0.0) throw Error("mlp: dro_eta must be >= 0");
  if (dro_regularization < 0.0) throw Error("mlp: dro_regularization must be >= 0");
  if (!(kernel_width > 0.0)) throw Error("mlp: kernel_width must be positive");
}

nlohmann::json MlpParams::to_json() const {
  return {{"layer1_units", layer1_units},
          {"layer2_units", layer2_units},
          {"learning_rate", learning_rate},
          {"l2_regularization", l2_regularization},
          {"batch_size", batch_size},
          {"num_epochs", num_epochs},
          {"batch_norm", batch_norm},
          {"momentum", momentum},
          {"calibration_loss_weight", calibration_loss_weight},
          {"dro_eta", dro_eta},
          {"dro_regularization", dro_regularization},
          {"kernel_width", kernel_width},
          {"seed", seed}};
}

MlpParams MlpParams::from_json(const nlohmann::json& j) {
  MlpParams p;
  p.layer1_units = j.value("layer1_units", p.layer1_units);
  p.layer2_units = j.value("layer2_units", p.layer2_units);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.l2_regularization = j.value("l2_regularization", p.l2_regularization);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.num_epochs = j.value("num_epochs", p.num_epochs);
  p.batch_norm = j.value("batch_norm", p.batch_norm);
  p.momentum = j.value("momentum", p.momentum);
  p.calibration_loss_weight = j.value("calibration_loss_weight", p.calibration_loss_weight);
  p.dro_eta = j.value("dro_eta", p.dro_eta);
  p.dro_regularization = j.value("dro_regularization", p.dro_regularization);
  p.kernel_width = j.value("kernel_width", p.kernel_width);
  p.seed = j.value("seed", p.seed);
  return p;
}

MlpWeights MlpWeights::init(Index inputs, int units1, int units2, bool batch_norm, Rng& rng) {
  auto uniform_fill = [&rng](Index rows, Index cols, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) {
        m(i, j) = dist(rng);
      }
    }
    return m;
  };
  MlpWeights w;
  w.batch_norm = batch_norm;
  w.w1 = uniform_fill(units1, inputs, inputs);
  w.b1 = uniform_fill(units1, 1, inputs);
  w.w2 = uniform_fill(units2, units1, units1);
  w.b2 = uniform_fill(units2, 1, units1);
  w.w3 = uniform_fill(units2, 1, units2);
  w.b3 = uniform_fill(1, 1, units2)(0, 0);
  w.gamma1 = Vector::Ones(units1);
  w.beta1 = Vector::Zero(units1);
  w.gamma2 = Vector::Ones(units2);
  w.beta2 = Vector::Zero(units2);
  w.running_mean1 = Vector::Zero(units1);
  w.running_var1 = Vector::Ones(units1);
  w.running_mean2 = Vector::Zero(units2);
  w.running_var2 = Vector::Ones(units2);
  return w;
}

Index MlpWeights::n_parameters() const {
  Index n = w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
  if (batch_norm) {
    n += gamma1.size() + beta1.size() + gamma2.size() + beta2.size();
  }
  return n;
}

namespace {

// Visits trainable blocks in flatten order.
template <typename Weights, typename Visitor>
void for_each_block(Weights& w, Visitor&& visit) {
  visit(w.w1.data(), w.w1.size());
  visit(w.b1.data(), w.b1.size());
  if (w.batch_norm) {
    visit(w.gamma1.data(), w.gamma1.size());
    visit(w.beta1.data(), w.beta1.size());
  }
  visit(w.w2.data(), w.w2.size());
  visit(w.b2.data(), w.b2.size());
  if (w.batch_norm) {
    visit(w.gamma2.data(), w.gamma2.size());
    visit(w.beta2.data(), w.beta2.size());
  }
  visit(w.w3.data(), w.w3.size());
  visit(&w.b3, Index{1});
}

}  // namespace

Vector MlpWeights::flatten() const {
  Vector flat(n_parameters());
  Index offset = 0;
  for_each_block(*this, [&](const double* data, Index size) {
    flat.segment(offset, size) = Eigen::Map<const Vector>(data, size);
    offset += size;
  });
  return flat;
}

void MlpWeights::assign(const VectorCRef& flat) {
  if (flat.size() != n_parameters()) {
    throw Error("MlpWeights::assign: parameter count mismatch");
  }
  Index offset = 0;
  for_each_block(*this, [&](double* data, Index size) {
    Eigen::Map<Vector>(data, size) = flat.segment(offset, size);
    offset += size;
  });
}

namespace {

struct BatchNormCache {
  Vector mean;
  Vector var;
  Vector inv_std;
  Matrix normalized;
};

struct ForwardCache {
  Matrix z1;
  Matrix a1;  // pre-activation after batch norm
  Matrix h1;
  BatchNormCache bn1;
  Matrix z2;
  Matrix a2;
  Matrix h2;
  BatchNormCache bn2;
  Vector logits;
  Vector probabilities;
};

Matrix batch_norm_train(const Matrix& z, const Vector& gamma, const Vector& beta, BatchNormCache& cache) {
  const auto m = static_cast<double>(z.rows());
  cache.mean = z.colwise().mean().transpose();
  const Matrix centered = z.rowwise() - cache.mean.transpose();
  cache.var = centered.colwise().squaredNorm().transpose() / m;
  cache.inv_std = (cache.var.array() + kBatchNormEpsilon).rsqrt().matrix();
  cache.normalized = centered * cache.inv_std.asDiagonal();
  return (cache.normalized * gamma.asDiagonal()).rowwise() + beta.transpose();
}

Matrix batch_norm_backward(const Matrix& d_out, const Vector& gamma, const BatchNormCache& cache, Vector& d_gamma,
                           Vector& d_beta) {
  const auto m = static_cast<double>(d_out.rows());
  d_gamma = d_out.cwiseProduct(cache.normalized).colwise().sum().transpose();
  d_beta = d_out.colwise().sum().transpose();
  const Matrix d_norm = d_out * gamma.asDiagonal();
  const Eigen::RowVectorXd sum_d = d_norm.colwise().sum();
  const Eigen::RowVectorXd sum_dx = d_norm.cwiseProduct(cache.normalized).colwise().sum();
  Matrix d_in = (m * d_norm).rowwise() - sum_d;
  d_in -= cache.normalized * sum_dx.asDiagonal();
  return d_in * (cache.inv_std / m).asDiagonal();
}

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

ForwardCache forward_train(const MlpWeights& w, const MatrixCRef& x) {
  ForwardCache c;
  c.z1 = (x * w.w1.transpose()).rowwise() + w.b1.transpose();
  c.a1 = w.batch_norm ? batch_norm_train(c.z1, w.gamma1, w.beta1, c.bn1) : c.z1;
  c.h1 = relu(c.a1);
  c.z2 = (c.h1 * w.w2.transpose()).rowwise() + w.b2.transpose();
  c.a2 = w.batch_norm ? batch_norm_train(c.z2, w.gamma2, w.beta2, c.bn2) : c.z2;
  c.h2 = relu(c.a2);
  c.logits = (c.h2 * w.w3).array() + w.b3;
  c.probabilities = sigmoid(c.logits);
  return c;
}

Vector backward(const MlpWeights& w, const MatrixCRef& x, const ForwardCache& c, const Vector& d_logits,
                double l2) {
  MlpWeights g = w;  // same shapes; every trainable block is overwritten below
  g.w3 = c.h2.transpose() * d_logits;
  g.b3 = d_logits.sum();
  Matrix d_a2 = (d_logits * w.w3.transpose()).cwiseProduct((c.a2.array() > 0.0).cast<double>().matrix());
  const Matrix d_z2 = w.batch_norm ? batch_norm_backward(d_a2, w.gamma2, c.bn2, g.gamma2, g.beta2) : d_a2;
  g.w2 = d_z2.transpose() * c.h1;
  g.b2 = d_z2.colwise().sum().transpose();
  Matrix d_a1 = (d_z2 * w.w2).cwiseProduct((c.a1.array() > 0.0).cast<double>().matrix());
  const Matrix d_z1 = w.batch_norm ? batch_norm_backward(d_a1, w.gamma1, c.bn1, g.gamma1, g.beta1) : d_a1;
  g.w1 = d_z1.transpose() * x;
  g.b1 = d_z1.colwise().sum().transpose();
  if (l2 > 0.0) {
    g.w1 += l2 * w.w1;
    g.w2 += l2 * w.w2;
    g.w3 += l2 * w.w3;
  }
  return g.flatten();
}

double l2_penalty(const MlpWeights& w, double l2) {
  return 0.5 * l2 * (w.w1.squaredNorm() + w.w2.squaredNorm() + w.w3.squaredNorm());
}

double bce_term(double p, double y, double logit) {
  // -[y log p + (1-y) log(1-p)] = softplus(z) - y z, stable for large |z|.
  (void)p;
  return std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit))) - y * logit;
}

bool has_both_classes(const VectorCRef& labels) {
  return (labels.array() > 0.5).any() && (labels.array() < 0.5).any();
}

/// Loss terms that sit on top of a forward pass; adds to d_logits.
struct LossAccumulator {
  double loss = 0.0;
  bool calibration_skipped = false;
  Vector per_group_loss;
};

struct GroupSlices {
  std::vector<std::vector<Index>> rows;
};

GroupSlices slice_groups(const IntVectorCRef& groups, int n_groups) {
  GroupSlices s;
  s.rows.resize(static_cast<std::size_t>(n_groups));
  for (Index i = 0; i < groups.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= n_groups) {
      throw Error("mlp: group id out of range");
    }
    s.rows[static_cast<std::size_t>(groups[i])].push_back(i);
  }
  return s;
}

struct GroupCalibration {
  bool present = false;
  bool skipped = false;
  double bce = 0.0;   // group mean BCE
  double mmce = 0.0;  // group MMCE
  Vector mmce_gradient;  // w.r.t. the group's probabilities
};

std::vector<GroupCalibration> group_terms(const ForwardCache& c, const VectorCRef& labels, const GroupSlices& slices,
                                          double kernel_width, bool want_mmce) {
  std::vector<GroupCalibration> out(slices.rows.size());
  for (std::size_t g = 0; g < slices.rows.size(); ++g) {
    const auto& rows = slices.rows[g];
    if (rows.empty()) {
      continue;
    }
    auto& t = out[g];
    t.present = true;
    double total = 0.0;
    for (Index i : rows) {
      total += bce_term(c.probabilities[i], labels[i], c.logits[i]);
    }
    t.bce = total / static_cast<double>(rows.size());
    if (want_mmce) {
      const Vector labels_g = take(labels, rows);
      if (has_both_classes(labels_g)) {
        t.mmce = mmce_with_gradient(take(c.probabilities, rows), labels_g, kernel_width, &t.mmce_gradient);
      } else {
        t.skipped = true;
      }
    }
  }
  return out;
}

/// Shared by the public batch loss and the trainer: loss value and d loss / d logits for
/// given group weights q.
LossAccumulator batch_objective(const ForwardCache& c, const VectorCRef& labels, const IntVectorCRef& groups,
                                const BatchContext& ctx, const std::vector<GroupCalibration>* precomputed,
                                Vector& d_logits) {
  const Index m = labels.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  const double gamma = ctx.calibration_loss_weight;
  LossAccumulator acc;
  d_logits.resize(m);

  if (ctx.loss.kind != LossKind::kGroupDro) {
    for (Index i = 0; i < m; ++i) {
      const double w = 1.0;
      acc.loss += w * bce_term(c.probabilities[i], labels[i], c.logits[i]);
      d_logits[i] = w * (c.probabilities[i] - labels[i]) * inv_m;
    }
    acc.loss *= inv_m;
    if (ctx.loss.kind == LossKind::kBceMmce && gamma > 0.0) {
      if (has_both_classes(labels)) {
        Vector grad;
        acc.loss += gamma * mmce_with_gradient(c.probabilities, labels, ctx.kernel_width, &grad);
        for (Index i = 0; i < m; ++i) {
          d_logits[i] += gamma * grad[i] * c.probabilities[i] * (1.0 - c.probabilities[i]);
        }
      } else {
        acc.calibration_skipped = true;
      }
    }
    return acc;
  }

  // Group DRO: per-sample weight G q_g on the BCE term (plain mean when only the calibration
  // term is reweighted), per-group calibration terms weighted by G q_g m_g / m.
  const int n_groups = ctx.n_groups;
  if (ctx.group_weights.size() != n_groups) {
    throw Error("mlp: group weights must have one entry per group");
  }
  const GroupSlices slices = slice_groups(groups, n_groups);
  std::vector<GroupCalibration> local;
  if (precomputed == nullptr) {
    local = group_terms(c, labels, slices, ctx.kernel_width, gamma > 0.0);
    precomputed = &local;
  }
  const auto& terms = *precomputed;
  const double g_count = static_cast<double>(n_groups);
  for (Index i = 0; i < m; ++i) {
    const double w = ctx.loss.dro_calibration_only ? 1.0 : g_count * ctx.group_weights[groups[i]];
    acc.loss += w * bce_term(c.probabilities[i], labels[i], c.logits[i]);
    d_logits[i] = w * (c.probabilities[i] - labels[i]) * inv_m;
  }
  acc.loss *= inv_m;
  acc.per_group_loss = Vector::Zero(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    const auto& t = terms[static_cast<std::size_t>(g)];
    if (!t.present) {
      continue;
    }
    acc.per_group_loss[g] = (ctx.loss.dro_calibration_only ? 0.0 : t.bce) + gamma * t.mmce;
    if (gamma > 0.0 && !t.skipped) {
      const auto& rows = slices.rows[static_cast<std::size_t>(g)];
      const double coef = g_count * ctx.group_weights[g] * static_cast<double>(rows.size()) * inv_m;
      acc.loss += gamma * coef * t.mmce;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const Index i = rows[k];
        d_logits[i] +=
            gamma * coef * t.mmce_gradient[static_cast<Index>(k)] * c.probabilities[i] * (1.0 - c.probabilities[i]);
      }
    }
    acc.calibration_skipped = acc.calibration_skipped || (gamma > 0.0 && t.skipped);
  }
  return acc;
}

}  // namespace

double mmce_with_gradient(const VectorCRef& probabilities, const VectorCRef& labels, double kernel_width,
                          Vector* gradient) {
  const Index m = probabilities.size();
  Vector r(m);
  Vector d(m);
  Vector dr_dp(m);
  for (Index i = 0; i < m; ++i) {
    const double p = probabilities[i];
    const double correct = ((p >= 0.5 ? 1.0 : 0.0) == labels[i]) ? 1.0 : 0.0;
    r[i] = std::max(p, 1.0 - p);
    dr_dp[i] = p >= 0.5 ? 1.0 : -1.0;
    d[i] = correct - r[i];
  }
  const double inv_m2 = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
  const auto k = laplace_kernel_sums(r, d, kernel_width);
  const double sum = d.dot(k.sums);
  const Vector du_dr = 2.0 * inv_m2 * (-k.sums.array() - d.array() * k.signed_sums.array() / kernel_width).matrix();
  const double squared = sum * inv_m2;
  const double value = std::sqrt(std::max(squared, 0.0));
  if (gradient != nullptr) {
    if (value > 1e-150) {
      *gradient = (du_dr.array() * dr_dp.array() / (2.0 * value)).matrix();
    } else {
      *gradient = Vector::Zero(m);
    }
  }
  return value;
}

BatchLoss mlp_batch_loss(const MlpWeights& weights, const MatrixCRef& inputs, const VectorCRef& labels,
                         const IntVectorCRef& groups, const BatchContext& context) {
  if (inputs.rows() != labels.size()) {
    throw Error("mlp_batch_loss: inputs and labels differ in length");
  }
  const ForwardCache cache = forward_train(weights, inputs);
  Vector d_logits;
  const LossAccumulator acc = batch_objective(cache, labels, groups, context, nullptr, d_logits);
  BatchLoss out;
  out.loss = acc.loss + l2_penalty(weights, context.l2_regularization);
  out.gradient = backward(weights, inputs, cache, d_logits, context.l2_regularization);
  out.calibration_skipped = acc.calibration_skipped;
  out.per_group_loss = acc.per_group_loss;
  return out;
}

Vector MlpModel::predict(const MatrixCRef& inputs) const {
  const auto& w = weights;
  auto eval_norm = [&](const Matrix& z, const Vector& mean, const Vector& var, const Vector& gamma,
                       const Vector& beta) -> Matrix {
    const Vector inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
    return (((z.rowwise() - mean.transpose()) * inv_std.asDiagonal()) * gamma.asDiagonal()).rowwise() +
           beta.transpose();
  };
  Matrix z1 = (inputs * w.w1.transpose()).rowwise() + w.b1.transpose();
  if (w.batch_norm) z1 = eval_norm(z1, w.running_mean1, w.running_var1, w.gamma1, w.beta1);
  const Matrix h1 = relu(z1);
  Matrix z2 = (h1 * w.w2.transpose()).rowwise() + w.b2.transpose();
  if (w.batch_norm) z2 = eval_norm(z2, w.running_mean2, w.running_var2, w.gamma2, w.beta2);
  const Matrix h2 = relu(z2);
  const Vector logits = (h2 * w.w3).array() + w.b3;
  return sigmoid(logits);
}

bool mlp_reads_groups(const LossSpec& loss, GroupFeatureMode mode) {
  return mode == GroupFeatureMode::kAsFeature || loss.kind == LossKind::kGroupDro;
}

Model mlp_train(const Dataset& train, const MlpParams& params, const LossSpec& loss, GroupFeatureMode group_mode) {
  params.validate();
  const Index n = train.size();
  if (n < 1) {
    throw Error("mlp_train: empty training partition");
  }
  if (mlp_reads_groups(loss, group_mode) && train.groups.size() != n) {
    throw Error("mlp_train: group column required but unavailable");
  }
  const int n_groups = std::max(1, train.n_groups());
  const Matrix inputs = group_mode == GroupFeatureMode::kAsFeature ? train.features_with_group_indicators()
                                                                   : train.features;

  Rng rng(params.seed);
  MlpModel model;
  model.weights = MlpWeights::init(inputs.cols(), params.layer1_units, params.layer2_units, params.batch_norm, rng);
  MlpWeights& w = model.weights;

  BatchContext ctx;
  ctx.loss = loss;
  ctx.calibration_loss_weight = params.calibration_loss_weight;
  ctx.l2_regularization = params.l2_regularization;
  ctx.kernel_width = params.kernel_width;
  ctx.n_groups = n_groups;
  ctx.group_weights = Vector::Constant(n_groups, 1.0 / n_groups);

  Vector size_penalty = Vector::Zero(n_groups);
  if (loss.kind == LossKind::kGroupDro) {
    Vector counts = Vector::Zero(n_groups);
    for (Index i = 0; i < n; ++i) counts[train.groups[i]] += 1.0;
    for (int g = 0; g < n_groups; ++g) {
      size_penalty[g] = counts[g] > 0.0 ? params.dro_regularization / std::sqrt(counts[g]) : 0.0;
    }
  }

  Vector velocity = Vector::Zero(w.n_parameters());
  const Index batch = std::min<Index>(params.batch_size, n);
  const IntVector empty_groups;

  for (int epoch = 0; epoch < params.num_epochs; ++epoch) {
    const auto order = permutation(n, rng);
    double epoch_total = 0.0;
    Index epoch_batches = 0;
    for (Index start = 0; start < n; start += batch) {
      const Index m = std::min(batch, n - start);
      if (w.batch_norm && m < 2) {
        continue;  // batch statistics undefined
      }
      const std::vector<Index> rows(order.begin() + start, order.begin() + start + m);
      const Matrix xb = take_rows(inputs, rows);
      const Vector yb = take(train.labels, rows);
      const IntVector gb = loss.kind == LossKind::kGroupDro ? take(train.groups, rows) : empty_groups;

      const ForwardCache cache = forward_train(w, xb);
      Vector d_logits;
      LossAccumulator acc;
      if (loss.kind == LossKind::kGroupDro) {
        const GroupSlices slices = slice_groups(gb, n_groups);
        const auto terms = group_terms(cache, yb, slices, params.kernel_width, params.calibration_loss_weight > 0.0);
        Vector group_loss = Vector::Zero(n_groups);
        std::vector<bool> active(static_cast<std::size_t>(n_groups), false);
        for (int g = 0; g < n_groups; ++g) {
          const auto& t = terms[static_cast<std::size_t>(g)];
          if (!t.present) continue;
          active[static_cast<std::size_t>(g)] = true;
          group_loss[g] = (loss.dro_calibration_only ? 0.0 : t.bce) +
                          params.calibration_loss_weight * t.mmce + size_penalty[g];
        }
        ctx.group_weights = group_dro_step(ctx.group_weights, group_loss, params.dro_eta, active);
        acc = batch_objective(cache, yb, gb, ctx, &terms, d_logits);
      } else {
        acc = batch_objective(cache, yb, gb, ctx, nullptr, d_logits);
      }
      const double total = acc.loss + l2_penalty(w, params.l2_regularization);
      if (!std::isfinite(total)) {
        throw ComponentError("mlp_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                             std::to_string(start) + " (lr " + std::to_string(params.learning_rate) + ")");
      }
      if (acc.calibration_skipped) {
        ++model.skipped_calibration_batches;
      }
      const Vector grad = backward(w, xb, cache, d_logits, params.l2_regularization);
      velocity = params.momentum * velocity + grad;
      w.assign(w.flatten() - params.learning_rate * velocity);

      if (w.batch_norm) {
        const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
        w.running_mean1 = kBatchNormMomentum * w.running_mean1 + (1.0 - kBatchNormMomentum) * cache.bn1.mean;
        w.running_var1 = kBatchNormMomentum * w.running_var1 + (1.0 - kBatchNormMomentum) * unbias * cache.bn1.var;
        w.running_mean2 = kBatchNormMomentum * w.running_mean2 + (1.0 - kBatchNormMomentum) * cache.bn2.mean;
        w.running_var2 = kBatchNormMomentum * w.running_var2 + (1.0 - kBatchNormMomentum) * unbias * cache.bn2.var;
      }
      epoch_total += total;
      ++epoch_batches;
    }
    model.epoch_loss.push_back(epoch_batches > 0 ? epoch_total / static_cast<double>(epoch_batches) : 0.0);
  }
  model.final_group_weights = ctx.group_weights;

  Model out;
  out.kind_ = ModelKind::kMlp;
  out.group_mode_ = group_mode;
  out.n_groups_ = n_groups;
  out.n_features_ = train.n_features();
  nlohmann::json config = params.to_json();
  config["loss"] = to_string(loss.kind);
  config["dro_calibration_only"] = loss.dro_calibration_only;
  out.config_ = std::move(config);
  out.impl_ = std::move(model);
  return out;
}

}  // namespace faircal
