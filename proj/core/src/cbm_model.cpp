#include "adacbm/cbm_model.hpp"

#include <algorithm>
#include <cmath>

#include "adacbm/error.hpp"

namespace adacbm {

namespace {

void check_dims(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + " has " + std::to_string(got) +
                    " dims, model expects " + std::to_string(expected));
  }
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// F(x) and F(x) . t_j for every concept.
struct ConceptPass {
  Vector adapted;
  Vector dots;
};

ConceptPass concept_pass(const AdaCbmModel& model, std::span<const double> x) {
  check_dims(model.dims(), x.size(), "input");
  ConceptPass pass;
  pass.adapted = adapter_forward(model.adapter, x);
  pass.dots.resize(model.n_concepts());
  for (std::size_t j = 0; j < model.n_concepts(); ++j) {
    pass.dots[j] = dot(pass.adapted, model.concepts.embeddings.row(j));
  }
  return pass;
}

}  // namespace

std::size_t ConceptBank::row_of(std::string_view id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) {
    throw Error(ErrorCode::kUnknownConcept,
                "concept \"" + std::string(id) + "\" is not in the model");
  }
  return static_cast<std::size_t>(it - ids.begin());
}

AdapterParams AdapterParams::identity(std::size_t dims, std::size_t layer_count,
                                      double negative_slope) {
  AdapterParams adapter;
  adapter.negative_slope = negative_slope;
  for (std::size_t l = 0; l < layer_count; ++l) {
    adapter.layers.push_back({Matrix::identity(dims), Vector(dims, 0.0)});
  }
  return adapter;
}

void AdaCbmModel::validate() const {
  const std::size_t d = dims();
  const std::size_t k = n_concepts();
  const std::size_t n = n_classes();
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kInvalidArgument, "invalid model: " + msg);
  };
  if (adapter.layers.empty()) fail("adapter needs at least one layer");
  if (!(adapter.negative_slope > 0.0)) fail("negative slope must be > 0");
  for (const auto& layer : adapter.layers) {
    if (layer.weight.rows() != d || layer.weight.cols() != d || layer.bias.size() != d) {
      fail("adapter layers must be " + std::to_string(d) + "x" + std::to_string(d));
    }
  }
  if (concepts.embeddings.rows() != k || concepts.texts.size() != k) {
    fail("concept bank size mismatch");
  }
  if (head.weights.rows() != k || head.weights.cols() != n || head.mask.rows() != k ||
      head.mask.cols() != n || head.alpha_prime.size() != k || head.beta.size() != n) {
    fail("head shapes do not match K=" + std::to_string(k) + ", n=" + std::to_string(n));
  }
  for (double m : head.mask.values()) {
    if (m != 0.0 && m != 1.0) fail("mask must be binary");
  }
}

AdaCbmModel make_adacbm(ConceptBank concepts, Matrix mask,
                        std::vector<std::string> class_names,
                        std::size_t adapter_layers, double negative_slope) {
  AdaCbmModel model;
  const std::size_t d = concepts.embeddings.cols();
  const std::size_t k = concepts.size();
  const std::size_t n = class_names.size();
  model.adapter = AdapterParams::identity(d, adapter_layers, negative_slope);
  model.head.weights = mask;
  model.head.mask = std::move(mask);
  model.head.alpha_prime.assign(k, 0.0);
  model.head.beta.assign(n, 0.0);
  model.concepts = std::move(concepts);
  model.class_names = std::move(class_names);
  model.provenance.config.adapter_layers = adapter_layers;
  model.validate();
  return model;
}

Vector adapter_forward(const AdapterParams& adapter, std::span<const double> x) {
  check_dims(adapter.dims(), x.size(), "input");
  Vector h(x.begin(), x.end());
  for (std::size_t l = 0; l < adapter.layers.size(); ++l) {
    const auto& layer = adapter.layers[l];
    const bool last = l + 1 == adapter.layers.size();
    Vector next(layer.weight.rows());
    for (std::size_t r = 0; r < next.size(); ++r) {
      const double a = dot(layer.weight.row(r), h) + layer.bias[r];
      next[r] = last ? a : leaky_relu(a, adapter.negative_slope);
    }
    h = std::move(next);
  }
  return h;
}

Vector forward_logits(const AdaCbmModel& model, std::span<const double> x) {
  const auto pass = concept_pass(model, x);
  const auto& head = model.head;
  Vector logits(model.n_classes());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < model.n_concepts(); ++j) {
      if (head.mask(j, i) == 0.0) continue;
      sum += head.weights(j, i) * (pass.dots[j] + head.alpha_prime[j]);
    }
    logits[i] = sum + head.beta[i];
  }
  return logits;
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double max = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

Vector predict(const AdaCbmModel& model, std::span<const double> x) {
  return softmax(forward_logits(model, x));
}

std::size_t Interpretation::predicted_class() const {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                  logits.begin());
}

Interpretation decompose(const AdaCbmModel& model, std::span<const double> x) {
  auto pass = concept_pass(model, x);
  const auto& head = model.head;
  const double image_norm = norm(pass.adapted);

  Interpretation out;
  out.logits.resize(model.n_classes());
  for (std::size_t i = 0; i < model.n_classes(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < model.n_concepts(); ++j) {
      if (head.mask(j, i) == 0.0) continue;
      ConceptTerm term;
      term.concept_row = j;
      term.class_index = i;
      term.weight = head.weights(j, i);
      term.dot = pass.dots[j];
      term.image_norm = image_norm;
      term.text_norm = norm(model.concepts.embeddings.row(j));
      const double denom = term.image_norm * term.text_norm;
      term.degenerate = denom == 0.0;
      term.cosine = term.degenerate ? 0.0 : term.dot / denom;
      term.shift = head.alpha_prime[j];
      term.contribution = term.weight * (term.dot + term.shift);
      sum += term.contribution;
      out.terms.push_back(term);
    }
    out.logits[i] = sum + head.beta[i];
  }
  out.probabilities = softmax(out.logits);
  out.adapted = std::move(pass.adapted);
  return out;
}

std::vector<ConceptTerm> top_contributors(const Interpretation& interpretation,
                                          std::size_t class_index,
                                          std::size_t top_k) {
  if (top_k < 1) throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  std::vector<ConceptTerm> terms;
  for (const auto& term : interpretation.terms) {
    if (term.class_index == class_index) terms.push_back(term);
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const ConceptTerm& a, const ConceptTerm& b) {
                     if (a.contribution != b.contribution) {
                       return a.contribution > b.contribution;
                     }
                     return a.concept_row < b.concept_row;
                   });
  if (terms.size() > top_k) terms.resize(top_k);
  return terms;
}

InterventionResult intervene_rows(const AdaCbmModel& model, std::span<const double> x,
                                  std::span<const std::size_t> excluded_rows) {
  std::vector<bool> excluded(model.n_concepts(), false);
  for (std::size_t row : excluded_rows) {
    if (row >= model.n_concepts()) {
      throw Error(ErrorCode::kUnknownConcept,
                  "concept row " + std::to_string(row) + " out of range");
    }
    excluded[row] = true;
  }
  const auto interp = decompose(model, x);
  InterventionResult out;
  out.logits = interp.logits;
  for (std::size_t i = 0; i < model.n_classes(); ++i) {
    double removed = 0.0;
    for (const auto& term : interp.terms) {
      if (term.class_index == i && excluded[term.concept_row]) removed += term.contribution;
    }
    out.logits[i] -= removed;
  }
  out.probabilities = softmax(out.logits);
  return out;
}

InterventionResult intervene(const AdaCbmModel& model, std::span<const double> x,
                             std::span<const std::string> excluded_concept_ids) {
  std::vector<std::size_t> rows;
  rows.reserve(excluded_concept_ids.size());
  for (const auto& id : excluded_concept_ids) rows.push_back(model.concepts.row_of(id));
  return intervene_rows(model, x, rows);
}

std::string_view inhibited_quantity_name(InhibitedQuantity q) {
  switch (q) {
    case InhibitedQuantity::kImageNorm: return "image_norm";
    case InhibitedQuantity::kTextNorm: return "text_norm";
    case InhibitedQuantity::kCosine: return "cosine";
  }
  return "unknown";
}

InhibitedQuantity parse_inhibited_quantity(std::string_view name) {
  if (name == "image_norm" || name == "image-norm") return InhibitedQuantity::kImageNorm;
  if (name == "text_norm" || name == "text-norm") return InhibitedQuantity::kTextNorm;
  if (name == "cosine") return InhibitedQuantity::kCosine;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown inhibited quantity \"" + std::string(name) + "\"");
}

Vector inhibit(const AdaCbmModel& model, std::span<const double> x,
               InhibitedQuantity quantity) {
  const auto interp = decompose(model, x);
  Vector logits(model.n_classes());
  for (std::size_t i = 0; i < model.n_classes(); ++i) {
    double sum = 0.0;
    for (const auto& term : interp.terms) {
      if (term.class_index != i) continue;
      double image = term.image_norm;
      double text = term.text_norm;
      double cosine = term.cosine;
      switch (quantity) {
        case InhibitedQuantity::kImageNorm: image = 1.0; break;
        case InhibitedQuantity::kTextNorm: text = 1.0; break;
        case InhibitedQuantity::kCosine: cosine = 1.0; break;
      }
      sum += term.weight * (image * text * cosine + term.shift);
    }
    logits[i] = sum + model.head.beta[i];
  }
  return logits;
}

}  // namespace adacbm
