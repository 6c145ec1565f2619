#ifndef ADACBM_TRAIN_CONFIG_HPP_
#define ADACBM_TRAIN_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "adacbm/concept_selector.hpp"

namespace adacbm {

enum class ModelKind { kAdaCbm, kLinearProbe, kLaboHead };

std::string_view model_kind_name(ModelKind kind);
// Accepts "adacbm", "linear_probe"/"linear", "labo_head"/"labo".
ModelKind parse_model_kind(std::string_view name);

inline constexpr double kDefaultNegativeSlope = 0.01;

struct TrainConfig {
  std::size_t epochs = 300;
  double lr0 = 5e-4;
  double lr_final_fraction = 0.01;
  double weight_decay = 1e-4;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t adapter_layers = 1;
  std::size_t k = 10;
  TStatMode denominator_mode = TStatMode::kPaper;
  ModelKind model_kind = ModelKind::kAdaCbm;

  // Throws kInvalidArgument on any violated invariant.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace adacbm

#endif  // ADACBM_TRAIN_CONFIG_HPP_
