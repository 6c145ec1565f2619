#ifndef ADACBM_TOOLS_RENDER_HPP_
#define ADACBM_TOOLS_RENDER_HPP_

#include <span>
#include <vector>

#include "adacbm/cbm_model.hpp"
#include "json.hpp"

namespace adacbm::tools {

// {concept_id, text, class, weight, dot, cosine, image_norm, text_norm, shift,
//  contribution}
nlohmann::json term_json(const AdaCbmModel& model, const ConceptTerm& term);

// Predict-shaped payload: {logits, probs, predicted_class, interpretation}.
// Terms whose concept row is flagged in `excluded` are omitted.
nlohmann::json prediction_json(const AdaCbmModel& model, const Interpretation& interp,
                               std::span<const double> logits,
                               const std::vector<bool>& excluded = {});

}  // namespace adacbm::tools

#endif  // ADACBM_TOOLS_RENDER_HPP_
