#ifndef ADACBM_EMBEDDING_IO_HPP_
#define ADACBM_EMBEDDING_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adacbm/matrix.hpp"

namespace adacbm {

// Dense row-major float32 matrix of image or concept-text embeddings.
// Values are stored exactly as produced upstream; nothing is normalized.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws kLengthMismatch if data.size() != rows * dims, kNonFiniteValue on
  // NaN/Inf.
  EmbeddingMatrix(std::size_t rows, std::size_t dims, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return dims_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * dims_, dims_};
  }

  // Widened copy used by all numerical code.
  Matrix to_matrix() const;
  Vector row_as_vector(std::size_t r) const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dims_ = 0;
  std::vector<float> data_;
};

struct ImageRecord {
  std::string id;
  std::size_t label = 0;

  bool operator==(const ImageRecord&) const = default;
};

enum class ConceptCategory { kColor, kShape, kSize, kTexture };

std::string_view category_name(ConceptCategory category);

struct ConceptRecord {
  std::string id;
  std::string text;
  std::optional<std::size_t> class_tag;
  std::optional<ConceptCategory> category;

  bool operator==(const ConceptRecord&) const = default;
};

// Image embeddings paired row-by-row with their labels.
struct Dataset {
  EmbeddingMatrix embeddings;
  std::vector<ImageRecord> records;
  std::size_t n_classes = 0;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t dims() const noexcept { return embeddings.dims(); }
  std::vector<std::size_t> labels() const;
};

// "AEMB" binary layout: magic, u32 version, u64 rows, u64 dims, then
// rows*dims float32, all little-endian, no padding.
inline constexpr char kEmbeddingMagic[4] = {'A', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

void write_embedding_matrix(const EmbeddingMatrix& matrix,
                            const std::filesystem::path& path);
EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path);

// In-memory variants of the file format, also used by the file functions.
std::vector<std::uint8_t> encode_embedding_matrix(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embedding_matrix(std::span<const std::uint8_t> bytes);

// JSON-lines metadata. Blank lines are skipped; unknown keys are ignored.
// `n_classes`, when given, bounds the labels.
std::vector<ImageRecord> read_image_metadata(
    const std::filesystem::path& path,
    std::optional<std::size_t> n_classes = std::nullopt);
std::vector<ConceptRecord> read_concept_metadata(
    const std::filesystem::path& path,
    std::optional<std::size_t> n_classes = std::nullopt);

void write_image_metadata(std::span<const ImageRecord> records,
                          const std::filesystem::path& path);
void write_concept_metadata(std::span<const ConceptRecord> records,
                            const std::filesystem::path& path);

Dataset pair_dataset(EmbeddingMatrix matrix, std::vector<ImageRecord> records,
                     std::size_t n_classes);

// Smallest class count covering every label (max label + 1).
std::size_t infer_class_count(std::span<const ImageRecord> records);

}  // namespace adacbm

#endif  // ADACBM_EMBEDDING_IO_HPP_
