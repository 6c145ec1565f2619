#include "adacbm/classifier.hpp"

#include <cmath>

#include "adacbm/error.hpp"

namespace adacbm {

namespace {

void check_input(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input has " + std::to_string(got) + " dims, model expects " +
                    std::to_string(expected));
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAdaCbm: return "adacbm";
    case ModelKind::kLinearProbe: return "linear_probe";
    case ModelKind::kLaboHead: return "labo_head";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "adacbm") return ModelKind::kAdaCbm;
  if (name == "linear_probe" || name == "linear") return ModelKind::kLinearProbe;
  if (name == "labo_head" || name == "labo") return ModelKind::kLaboHead;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind \"" + std::string(name) + "\"");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kInvalidArgument, "invalid train config: " + msg);
  };
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr0 > 0.0)) fail("lr0 must be > 0");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
    fail("lr_final_fraction must be in (0, 1]");
  }
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (adapter_layers < 1) fail("adapter_layers must be >= 1");
}

LinearProbe make_linear_probe(std::size_t dims, std::vector<std::string> class_names) {
  LinearProbe model;
  model.weight = Matrix(class_names.size(), dims);
  model.bias.assign(class_names.size(), 0.0);
  model.class_names = std::move(class_names);
  model.provenance.config.model_kind = ModelKind::kLinearProbe;
  return model;
}

LaboHead make_labo_head(ConceptBank concepts, Matrix mask,
                        std::vector<std::string> class_names) {
  if (mask.rows() != concepts.size() || mask.cols() != class_names.size()) {
    throw Error(ErrorCode::kInvalidArgument, "labo head mask shape mismatch");
  }
  LaboHead model;
  model.weights = mask;
  model.init_mask = std::move(mask);
  model.bias.assign(class_names.size(), 0.0);
  model.concepts = std::move(concepts);
  model.class_names = std::move(class_names);
  model.provenance.config.model_kind = ModelKind::kLaboHead;
  return model;
}

Vector linear_probe_logits(const LinearProbe& model, std::span<const double> x) {
  check_input(model.weight.cols(), x.size());
  Vector z(model.weight.rows());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = dot(model.weight.row(i), x) + model.bias[i];
  return z;
}

Vector labo_similarities(const LaboHead& model, std::span<const double> x) {
  check_input(model.concepts.embeddings.cols(), x.size());
  const double x_norm = std::sqrt(dot(x, x));
  Vector s(model.concepts.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    auto t = model.concepts.embeddings.row(j);
    const double denom = x_norm * std::sqrt(dot(t, t));
    s[j] = denom == 0.0 ? 0.0 : dot(x, t) / denom;
  }
  return s;
}

Vector labo_logits(const LaboHead& model, std::span<const double> x) {
  const auto s = labo_similarities(model, x);
  Vector z(model.bias.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) sum += model.weights(j, i) * s[j];
    z[i] = sum + model.bias[i];
  }
  return z;
}

ModelKind model_kind(const AnyModel& model) {
  return std::visit(Overloaded{[](const AdaCbmModel&) { return ModelKind::kAdaCbm; },
                               [](const LinearProbe&) { return ModelKind::kLinearProbe; },
                               [](const LaboHead&) { return ModelKind::kLaboHead; }},
                    model);
}

std::size_t model_dims(const AnyModel& model) {
  return std::visit(
      Overloaded{[](const AdaCbmModel& m) { return m.dims(); },
                 [](const LinearProbe& m) { return m.weight.cols(); },
                 [](const LaboHead& m) { return m.concepts.embeddings.cols(); }},
      model);
}

const std::vector<std::string>& model_class_names(const AnyModel& model) {
  return std::visit([](const auto& m) -> const std::vector<std::string>& {
    return m.class_names;
  }, model);
}

const Provenance& model_provenance(const AnyModel& model) {
  return std::visit([](const auto& m) -> const Provenance& { return m.provenance; }, model);
}

Provenance& model_provenance(AnyModel& model) {
  return std::visit([](auto& m) -> Provenance& { return m.provenance; }, model);
}

Vector model_logits(const AnyModel& model, std::span<const double> x) {
  return std::visit(
      Overloaded{[&](const AdaCbmModel& m) { return forward_logits(m, x); },
                 [&](const LinearProbe& m) { return linear_probe_logits(m, x); },
                 [&](const LaboHead& m) { return labo_logits(m, x); }},
      model);
}

std::vector<std::string> default_class_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

}  // namespace adacbm
