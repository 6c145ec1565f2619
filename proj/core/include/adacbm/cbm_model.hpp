#ifndef ADACBM_CBM_MODEL_HPP_
#define ADACBM_CBM_MODEL_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adacbm/matrix.hpp"
#include "adacbm/train_config.hpp"

namespace adacbm {

struct DenseLayer {
  Matrix weight;  // d x d
  Vector bias;    // d
};

// x -> F(x): square linear layers with LeakyReLU between them. The last
// layer has no activation, so a single identity layer is the identity map.
struct AdapterParams {
  std::vector<DenseLayer> layers;
  double negative_slope = kDefaultNegativeSlope;

  std::size_t dims() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  static AdapterParams identity(std::size_t dims, std::size_t layer_count,
                                double negative_slope = kDefaultNegativeSlope);
};

// Masked bottleneck head: z_i = sum_j (M . V)_ji (F(x) . t_j + alpha'_j) + beta_i.
struct CbmHead {
  Matrix weights;     // V, K x n
  Matrix mask;        // M, K x n, binary, frozen
  Vector alpha_prime; // K
  Vector beta;        // n
};

// Frozen concept text embeddings (rows of `embeddings`) with their metadata.
struct ConceptBank {
  Matrix embeddings;  // K x d
  std::vector<std::string> ids;
  std::vector<std::string> texts;

  std::size_t size() const noexcept { return ids.size(); }
  // Throws kUnknownConcept.
  std::size_t row_of(std::string_view id) const;
};

// Where a model came from; written into checkpoints.
struct Provenance {
  TrainConfig config;
  std::size_t selection_k = 0;
  double selection_gamma = 0.0;
  TStatMode selection_mode = TStatMode::kPaper;
};

struct AdaCbmModel {
  AdapterParams adapter;
  CbmHead head;
  ConceptBank concepts;
  std::vector<std::string> class_names;
  Provenance provenance;

  std::size_t dims() const { return concepts.embeddings.cols(); }
  std::size_t n_concepts() const { return concepts.size(); }
  std::size_t n_classes() const { return class_names.size(); }

  // Checks the structural invariants (shapes, binary mask, slope > 0).
  void validate() const;
};

// Identity adapter, V = M, alpha' = 0, beta = 0.
AdaCbmModel make_adacbm(ConceptBank concepts, Matrix mask,
                        std::vector<std::string> class_names,
                        std::size_t adapter_layers,
                        double negative_slope = kDefaultNegativeSlope);

inline double leaky_relu(double v, double slope) { return v >= 0.0 ? v : slope * v; }

Vector adapter_forward(const AdapterParams& adapter, std::span<const double> x);

Vector forward_logits(const AdaCbmModel& model, std::span<const double> x);

// Max-subtracted softmax.
Vector softmax(std::span<const double> logits);

Vector predict(const AdaCbmModel& model, std::span<const double> x);

// One summand of a class logit, split into its geometric factors.
struct ConceptTerm {
  std::size_t concept_row = 0;
  std::size_t class_index = 0;
  double weight = 0.0;        // (M . V)_ji
  double dot = 0.0;           // F(x) . t_j
  double cosine = 0.0;
  double image_norm = 0.0;    // |F(x)|
  double text_norm = 0.0;     // |t_j|
  double shift = 0.0;         // alpha'_j
  double contribution = 0.0;  // weight * (dot + shift)
  bool degenerate = false;    // |F(x)| or |t_j| was zero; cosine forced to 0
};

struct Interpretation {
  Vector logits;
  Vector probabilities;
  Vector adapted;  // F(x)
  // Only unmasked (j, i) pairs, ordered by class then concept row.
  std::vector<ConceptTerm> terms;

  std::size_t predicted_class() const;
};

Interpretation decompose(const AdaCbmModel& model, std::span<const double> x);

// Terms for one class, sorted by contribution descending, ties by concept row.
std::vector<ConceptTerm> top_contributors(const Interpretation& interpretation,
                                          std::size_t class_index,
                                          std::size_t top_k);

struct InterventionResult {
  Vector logits;
  Vector probabilities;
};

// Logits with the listed concepts' terms removed from every class:
// z_i - sum_{j in excluded} contribution_ji (excluded summed in row order).
InterventionResult intervene(const AdaCbmModel& model, std::span<const double> x,
                             std::span<const std::string> excluded_concept_ids);
InterventionResult intervene_rows(const AdaCbmModel& model, std::span<const double> x,
                                  std::span<const std::size_t> excluded_rows);

enum class InhibitedQuantity { kImageNorm, kTextNorm, kCosine };

std::string_view inhibited_quantity_name(InhibitedQuantity q);
// Accepts "image_norm"/"image-norm", "text_norm"/"text-norm", "cosine".
InhibitedQuantity parse_inhibited_quantity(std::string_view name);

// Logits with one factor of dot = |F(x)| |t_j| cos replaced by 1.
Vector inhibit(const AdaCbmModel& model, std::span<const double> x,
               InhibitedQuantity quantity);

}  // namespace adacbm

#endif  // ADACBM_CBM_MODEL_HPP_
