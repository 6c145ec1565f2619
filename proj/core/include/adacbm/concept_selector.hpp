#ifndef ADACBM_CONCEPT_SELECTOR_HPP_
#define ADACBM_CONCEPT_SELECTOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adacbm/embedding_io.hpp"
#include "adacbm/matrix.hpp"

namespace adacbm {

// Denominator of the utility t-statistic.
//   kPaper: sqrt(var_c / n_c) + sqrt(var_rest / n_rest)
//   kWelch: sqrt(var_c / n_c + var_rest / n_rest)
enum class TStatMode { kPaper, kWelch };

std::string_view tstat_mode_name(TStatMode mode);
TStatMode parse_tstat_mode(std::string_view name);

struct UtilityScore {
  std::size_t concept_index = 0;
  std::size_t class_index = 0;
  double t_value = 0.0;
  double mu_c = 0.0;
  double mu_not_c = 0.0;
  std::size_t n_c = 0;
  std::size_t n_not_c = 0;
  double var_c = 0.0;
  double var_not_c = 0.0;
  // Set when the denominator vanished and t_value was forced to 0.
  bool degenerate = false;
};

struct Correlation {
  double r = 0.0;
  // Set when either input had zero variance and r was forced to 0.
  bool degenerate = false;
};

struct SelectedConcept {
  std::size_t concept_index = 0;
  std::string concept_id;
  UtilityScore score;
};

struct ClassSelection {
  std::size_t class_index = 0;
  // Ordered by acceptance, i.e. by utility among accepted candidates.
  std::vector<SelectedConcept> selected;
};

// Binary concept-by-class mask over the union of selected concepts.
// Row j corresponds to concept_order[j] in the candidate pool.
struct ConceptMask {
  Matrix mask;
  std::vector<std::size_t> concept_order;
  std::vector<std::string> concept_ids;
};

struct SelectionResult {
  std::size_t k = 0;
  double gamma = 0.0;
  TStatMode mode = TStatMode::kPaper;
  std::size_t n_classes = 0;
  std::vector<ClassSelection> per_class;
  ConceptMask mask;
  std::vector<std::string> warnings;
};

// Element i is dot(x_i, concept) in float64.
Vector concept_responses(const Dataset& dataset, std::span<const double> concept_embedding);

UtilityScore utility_tstat(std::span<const double> responses,
                           std::span<const std::size_t> labels,
                           std::size_t target_class, TStatMode mode);

Correlation pearson_r(std::span<const double> a, std::span<const double> b);

struct SelectionOptions {
  std::size_t k = 10;
  double gamma = 0.9;
  TStatMode mode = TStatMode::kPaper;
};

// Per class: candidates ranked by utility (ties by index), greedily accepted
// while their |r| against every already-accepted concept stays below gamma.
SelectionResult select_concepts(const Dataset& dataset,
                                const EmbeddingMatrix& concept_embeddings,
                                std::span<const ConceptRecord> concepts,
                                const SelectionOptions& options);

// Rebuilds the mask from per-class selections; rows follow ascending pool
// index.
ConceptMask build_mask(std::span<const ClassSelection> per_class,
                       std::size_t n_classes);

// {k, gamma, mode, classes:[{class, selected:[{concept_id, t_value, rank}]}],
//  warnings:[...]}
std::string selection_to_json(const SelectionResult& result);

// Inverse of selection_to_json; concept ids are resolved against the pool.
SelectionResult selection_from_json(std::string_view json,
                                    std::span<const ConceptRecord> concepts);

}  // namespace adacbm

#endif  // ADACBM_CONCEPT_SELECTOR_HPP_
