#ifndef ADACBM_CHECKPOINT_HPP_
#define ADACBM_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adacbm/classifier.hpp"

namespace adacbm {

// Checkpoint layout (little-endian):
//   "ACBM" | u32 version | u64 header_bytes | JSON header | float32 blob
//
// The JSON header carries format_version, model_kind, d, K, n, layer_count,
// negative_slope, concept_ids, concept_texts, class_names, selection and
// train_config. Blob contents by kind:
//   adacbm:       adapter weights (per layer), adapter biases (per layer),
//                 V, alpha_prime, beta, concept embeddings
//   linear_probe: W (n x d), b
//   labo_head:    W (K x n), b, concept embeddings
// The mask is rebuilt from the header's per-class concept lists.
inline constexpr char kCheckpointMagic[4] = {'A', 'C', 'B', 'M'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& model);
AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const AnyModel& model, const std::filesystem::path& path);
AnyModel load_checkpoint(const std::filesystem::path& path);

// Parameters as they would be after a save/load cycle (float32 rounding).
AnyModel round_trip_float32(const AnyModel& model);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(std::string_view json);

}  // namespace adacbm

#endif  // ADACBM_CHECKPOINT_HPP_
