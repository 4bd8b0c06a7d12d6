#include "faircal/models.hpp"

namespace faircal {

namespace {

constexpr int kModelFormatVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j));
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw Error("model json: matrix data does not match its shape");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) {
      m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::kGbt ? "gbt" : "mlp"; }

ModelKind model_kind_from_string(const std::string& id) {
  if (id == "gbt") return ModelKind::kGbt;
  if (id == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind '" + id + "' (expected gbt or mlp)");
}

Matrix Model::model_inputs(const MatrixCRef& features, const IntVector* groups) const {
  if (features.cols() != n_features_) {
    throw Error("predict: expected " + std::to_string(n_features_) + " features, got " +
                std::to_string(features.cols()));
  }
  if (group_mode_ == GroupFeatureMode::kNone) {
    return features;
  }
  if (groups == nullptr) {
    throw Error("predict: model uses group indicators; groups are required");
  }
  if (groups->size() != features.rows()) {
    throw Error("predict: groups and features differ in length");
  }
  for (Index i = 0; i < groups->size(); ++i) {
    if ((*groups)[i] < 0 || (*groups)[i] >= n_groups_) {
      throw Error("predict: group id " + std::to_string((*groups)[i]) + " was not seen in training");
    }
  }
  Matrix out(features.rows(), features.cols() + n_groups_);
  out << features, group_indicators(*groups, n_groups_);
  return out;
}

Vector Model::margin(const MatrixCRef& features, const IntVector* groups) const {
  const Matrix inputs = model_inputs(features, groups);
  if (kind_ == ModelKind::kGbt) {
    return gbt().margin(inputs);
  }
  return logit(mlp().predict(inputs));
}

Vector Model::predict(const MatrixCRef& features, const IntVector* groups) const {
  const Matrix inputs = model_inputs(features, groups);
  if (kind_ == ModelKind::kGbt) {
    return sigmoid(gbt().margin(inputs));
  }
  return mlp().predict(inputs);
}

nlohmann::json Model::to_json() const {
  nlohmann::json j{{"version", kModelFormatVersion},
                   {"kind", to_string(kind_)},
                   {"group_mode", group_mode_ == GroupFeatureMode::kAsFeature ? "as_feature" : "none"},
                   {"n_groups", n_groups_},
                   {"n_features", n_features_},
                   {"config", config_}};
  if (kind_ == ModelKind::kGbt) {
    const auto& m = gbt();
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(t.to_json());
    j["gbt"] = {{"base_margin", m.base_margin}, {"trees", std::move(trees)}};
  } else {
    const auto& w = mlp().weights;
    j["mlp"] = {{"batch_norm", w.batch_norm},
                {"w1", matrix_to_json(w.w1)},
                {"b1", vector_to_json(w.b1)},
                {"gamma1", vector_to_json(w.gamma1)},
                {"beta1", vector_to_json(w.beta1)},
                {"running_mean1", vector_to_json(w.running_mean1)},
                {"running_var1", vector_to_json(w.running_var1)},
                {"w2", matrix_to_json(w.w2)},
                {"b2", vector_to_json(w.b2)},
                {"gamma2", vector_to_json(w.gamma2)},
                {"beta2", vector_to_json(w.beta2)},
                {"running_mean2", vector_to_json(w.running_mean2)},
                {"running_var2", vector_to_json(w.running_var2)},
                {"w3", vector_to_json(w.w3)},
                {"b3", w.b3}};
  }
  return j;
}

Model Model::from_json(const nlohmann::json& j) {
  const int version = j.value("version", 0);
  if (version != kModelFormatVersion) {
    throw Error("model json: unsupported version " + std::to_string(version));
  }
  Model m;
  m.kind_ = model_kind_from_string(j.at("kind").get<std::string>());
  const auto mode = j.at("group_mode").get<std::string>();
  if (mode != "none" && mode != "as_feature") {
    throw Error("model json: unknown group_mode '" + mode + "'");
  }
  m.group_mode_ = mode == "as_feature" ? GroupFeatureMode::kAsFeature : GroupFeatureMode::kNone;
  m.n_groups_ = j.at("n_groups").get<int>();
  m.n_features_ = j.at("n_features").get<Index>();
  m.config_ = j.value("config", nlohmann::json::object());
  if (m.kind_ == ModelKind::kGbt) {
    GbtModel g;
    const auto& body = j.at("gbt");
    g.base_margin = body.at("base_margin").get<double>();
    for (const auto& t : body.at("trees")) g.trees.push_back(RegressionTree::from_json(t));
    m.impl_ = std::move(g);
  } else {
    MlpModel model;
    const auto& body = j.at("mlp");
    auto& w = model.weights;
    w.batch_norm = body.at("batch_norm").get<bool>();
    w.w1 = matrix_from_json(body.at("w1"));
    w.b1 = vector_from_json(body.at("b1"));
    w.gamma1 = vector_from_json(body.at("gamma1"));
    w.beta1 = vector_from_json(body.at("beta1"));
    w.running_mean1 = vector_from_json(body.at("running_mean1"));
    w.running_var1 = vector_from_json(body.at("running_var1"));
    w.w2 = matrix_from_json(body.at("w2"));
    w.b2 = vector_from_json(body.at("b2"));
    w.gamma2 = vector_from_json(body.at("gamma2"));
    w.beta2 = vector_from_json(body.at("beta2"));
    w.running_mean2 = vector_from_json(body.at("running_mean2"));
    w.running_var2 = vector_from_json(body.at("running_var2"));
    w.w3 = vector_from_json(body.at("w3"));
    w.b3 = body.at("b3").get<double>();
    if (w.w1.rows() != w.b1.size() || w.w2.cols() != w.w1.rows() || w.w3.size() != w.w2.rows()) {
      throw Error("model json: inconsistent layer shapes");
    }
    m.impl_ = std::move(model);
  }
  return m;
}

}  // namespace faircal
