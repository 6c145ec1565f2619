#ifndef ADACBM_SYNTHETIC_HPP_
#define ADACBM_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adacbm/embedding_io.hpp"
#include "adacbm/matrix.hpp"

namespace adacbm {

// Desk-scale stand-in for frozen image/text embeddings.
//
// Each class owns `planted_per_class` orthonormal concept directions; its
// images are
//   x = R (signal * p_c + noise * N(0, I) + offset)
// where p_c is the normalized sum of the class's planted directions, R is a
// fixed random rotation (identity unless `rotate`) and `offset` is a
// component shared by all images. Every class additionally gets
// `distractors_per_class` concepts drawn from the orthogonal complement of all
// planted directions, so dims must exceed n_classes * planted_per_class.
struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t dims = 16;
  std::size_t planted_per_class = 4;
  std::size_t distractors_per_class = 4;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 200;
  double signal = 1.0;
  double noise = 0.35;
  double shared_offset = 0.0;
  // Concept norms are drawn uniformly from [min, max].
  double text_norm_min = 1.0;
  double text_norm_max = 1.0;
  bool rotate = false;
  std::uint64_t seed = 0;
};

struct SyntheticProblem {
  Dataset train;
  Dataset test;
  EmbeddingMatrix concept_embeddings;
  std::vector<ConceptRecord> concepts;
  // planted[c] = pool indices of class c's planted concepts.
  std::vector<std::vector<std::size_t>> planted;
  Matrix rotation;
};

SyntheticProblem make_synthetic_problem(const SyntheticSpec& spec);

// Haar-distributed random orthogonal matrix.
Matrix random_rotation(std::size_t dims, std::uint64_t seed);

}  // namespace adacbm

#endif  // ADACBM_SYNTHETIC_HPP_
