#include "adacbm/evaluator.hpp"

#include <algorithm>

#include "adacbm/error.hpp"
#include "json.hpp"

namespace adacbm {

namespace {

template <typename LogitsFn>
EvalReport evaluate_with(std::size_t model_dims, std::size_t n_classes,
                         const Dataset& dataset, LogitsFn logits_of) {
  if (model_dims != dataset.dims()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dataset has " + std::to_string(dataset.dims()) +
                    " dims, model expects " + std::to_string(model_dims));
  }
  if (dataset.n_classes > n_classes) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "dataset declares " + std::to_string(dataset.n_classes) +
                    " classes, model has " + std::to_string(n_classes));
  }
  EvalReport report;
  report.n_samples = dataset.size();
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto x = dataset.embeddings.row_as_vector(r);
    const std::size_t truth = dataset.records[r].label;
    const std::size_t guess = predicted_class(logits_of(x));
    ++report.confusion[truth][guess];
    if (truth == guess) ++hits;
  }
  report.overall_accuracy =
      report.n_samples == 0 ? 0.0
                            : static_cast<double>(hits) / static_cast<double>(report.n_samples);
  report.per_class_accuracy.assign(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t row_total = 0;
    for (std::size_t v : report.confusion[c]) row_total += v;
    if (row_total > 0) {
      report.per_class_accuracy[c] =
          static_cast<double>(report.confusion[c][c]) / static_cast<double>(row_total);
    }
  }
  return report;
}

int kind_rank(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAdaCbm: return 0;
    case ModelKind::kLinearProbe: return 1;
    case ModelKind::kLaboHead: return 2;
  }
  return 3;
}

}  // namespace

std::size_t predicted_class(std::span<const double> logits) {
  // max_element returns the first maximum.
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                  logits.begin());
}

EvalReport evaluate(const AnyModel& model, const Dataset& dataset) {
  return evaluate_with(model_dims(model), model_class_names(model).size(), dataset,
                       [&](const Vector& x) { return model_logits(model, x); });
}

EvalReport evaluate_inhibited(const AdaCbmModel& model, const Dataset& dataset,
                              InhibitedQuantity quantity) {
  return evaluate_with(model.dims(), model.n_classes(), dataset,
                       [&](const Vector& x) { return inhibit(model, x, quantity); });
}

std::map<std::string, double> inhibition_report(const AdaCbmModel& model,
                                                const Dataset& dataset) {
  std::map<std::string, double> out;
  out["baseline"] = evaluate(AnyModel(model), dataset).overall_accuracy;
  for (auto q : {InhibitedQuantity::kImageNorm, InhibitedQuantity::kTextNorm,
                 InhibitedQuantity::kCosine}) {
    out[std::string(inhibited_quantity_name(q))] =
        evaluate_inhibited(model, dataset, q).overall_accuracy;
  }
  return out;
}

std::vector<std::pair<ModelKind, EvalReport>> compare(std::span<const AnyModel> models,
                                                      const Dataset& dataset) {
  std::vector<std::size_t> order(models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return kind_rank(model_kind(models[a])) < kind_rank(model_kind(models[b]));
  });
  std::vector<std::pair<ModelKind, EvalReport>> rows;
  for (std::size_t i : order) {
    rows.emplace_back(model_kind(models[i]), evaluate(models[i], dataset));
  }
  return rows;
}

std::string eval_report_to_json(const EvalReport& report,
                                std::span<const std::string> class_names) {
  nlohmann::json doc{{"overall_accuracy", report.overall_accuracy},
                     {"per_class_accuracy", report.per_class_accuracy},
                     {"confusion", report.confusion},
                     {"n_samples", report.n_samples}};
  doc["class_names"] = std::vector<std::string>(class_names.begin(), class_names.end());
  return doc.dump(2) + "\n";
}

std::string confusion_to_csv(const EvalReport& report,
                             std::span<const std::string> class_names) {
  std::string out = "true\\predicted";
  for (const auto& name : class_names) out += "," + name;
  out += '\n';
  for (std::size_t r = 0; r < report.confusion.size(); ++r) {
    out += r < class_names.size() ? class_names[r] : std::to_string(r);
    for (std::size_t v : report.confusion[r]) out += "," + std::to_string(v);
    out += '\n';
  }
  return out;
}

}  // namespace adacbm
