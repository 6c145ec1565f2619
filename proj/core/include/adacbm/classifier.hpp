#ifndef ADACBM_CLASSIFIER_HPP_
#define ADACBM_CLASSIFIER_HPP_

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "adacbm/cbm_model.hpp"

namespace adacbm {

// Frozen-embedding linear classifier: z = W x + b.
struct LinearProbe {
  Matrix weight;  // n x d
  Vector bias;    // n
  std::vector<std::string> class_names;
  Provenance provenance;
};

// Bottleneck head over frozen cosine similarities: z_i = sum_j W_ji s_j + b_i
// with s_j = cos(x, t_j). Every W entry is trainable; there is no adapter and
// no mask. `init_mask` records the selection W was initialized from.
struct LaboHead {
  Matrix weights;  // K x n
  Vector bias;     // n
  ConceptBank concepts;
  Matrix init_mask;
  std::vector<std::string> class_names;
  Provenance provenance;
};

using AnyModel = std::variant<AdaCbmModel, LinearProbe, LaboHead>;

// Zero weights and bias.
LinearProbe make_linear_probe(std::size_t dims, std::vector<std::string> class_names);
// W = selection mask, b = 0.
LaboHead make_labo_head(ConceptBank concepts, Matrix mask,
                        std::vector<std::string> class_names);

Vector linear_probe_logits(const LinearProbe& model, std::span<const double> x);
// cos(x, t_j) per concept; 0 when either norm is zero.
Vector labo_similarities(const LaboHead& model, std::span<const double> x);
Vector labo_logits(const LaboHead& model, std::span<const double> x);

ModelKind model_kind(const AnyModel& model);
std::size_t model_dims(const AnyModel& model);
const std::vector<std::string>& model_class_names(const AnyModel& model);
const Provenance& model_provenance(const AnyModel& model);
Provenance& model_provenance(AnyModel& model);
Vector model_logits(const AnyModel& model, std::span<const double> x);

// Default class names "class_0".."class_{n-1}".
std::vector<std::string> default_class_names(std::size_t n);

}  // namespace adacbm

#endif  // ADACBM_CLASSIFIER_HPP_
