#ifndef ADACBM_EVALUATOR_HPP_
#define ADACBM_EVALUATOR_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adacbm/classifier.hpp"
#include "adacbm/embedding_io.hpp"

namespace adacbm {

struct EvalReport {
  double overall_accuracy = 0.0;
  // NaN-free: classes with no samples report 0.
  std::vector<double> per_class_accuracy;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t n_samples = 0;

  bool operator==(const EvalReport&) const = default;
};

// Argmax of the logits; ties go to the lowest class index.
std::size_t predicted_class(std::span<const double> logits);

EvalReport evaluate(const AnyModel& model, const Dataset& dataset);

// Same as evaluate() but with one decomposition factor replaced by 1.
EvalReport evaluate_inhibited(const AdaCbmModel& model, const Dataset& dataset,
                              InhibitedQuantity quantity);

// Keys: "baseline", "image_norm", "text_norm", "cosine".
std::map<std::string, double> inhibition_report(const AdaCbmModel& model,
                                                const Dataset& dataset);

// Rows ordered by model kind (adacbm, linear_probe, labo_head), then by input
// position for repeated kinds.
std::vector<std::pair<ModelKind, EvalReport>> compare(std::span<const AnyModel> models,
                                                      const Dataset& dataset);

std::string eval_report_to_json(const EvalReport& report,
                                std::span<const std::string> class_names);
std::string confusion_to_csv(const EvalReport& report,
                             std::span<const std::string> class_names);

}  // namespace adacbm

#endif  // ADACBM_EVALUATOR_HPP_
