#include "adacbm/embedding_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "adacbm/error.hpp"
#include "byte_order.hpp"
#include "json.hpp"

namespace adacbm {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kMalformedJson: return "MalformedJson";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kInsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownConcept: return "UnknownConcept";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kMissingSelection: return "MissingSelection";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
  }
  return "Error";
}

namespace {

using internal::append_le;
using internal::load_le;

void check_finite(std::span<const float> data, std::size_t dims) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream msg;
      msg << "cell " << i << " (row " << i / std::max<std::size_t>(dims, 1)
          << ", col " << i % std::max<std::size_t>(dims, 1) << ") is not finite";
      throw Error(ErrorCode::kNonFiniteValue, msg.str());
    }
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

void write_lines(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

// Parses one JSON-lines file, calling `fn(object, line_number)` for each
// non-blank line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn fn) {
  auto in = open_text(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char ch) { return std::isspace(ch); })) {
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kMalformedJson, at_line(path, line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::kMalformedJson, at_line(path, line_no) + ": expected an object");
    }
    fn(obj, line_no);
  }
}

std::string required_string(const nlohmann::json& obj, const char* key,
                            const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::kMalformedJson,
                where + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

std::size_t class_index(const nlohmann::json& value, const char* key,
                        const std::string& where,
                        std::optional<std::size_t> n_classes) {
  if (!value.is_number_integer()) {
    throw Error(ErrorCode::kMalformedJson,
                where + ": field \"" + key + "\" must be an integer");
  }
  const auto raw = value.get<std::int64_t>();
  if (raw < 0 || (n_classes && static_cast<std::size_t>(raw) >= *n_classes)) {
    throw Error(ErrorCode::kLabelOutOfRange,
                where + ": " + key + " " + std::to_string(raw) + " out of range");
  }
  return static_cast<std::size_t>(raw);
}

std::optional<ConceptCategory> parse_category(const std::string& name) {
  if (name == "color") return ConceptCategory::kColor;
  if (name == "shape") return ConceptCategory::kShape;
  if (name == "size") return ConceptCategory::kSize;
  if (name == "texture") return ConceptCategory::kTexture;
  return std::nullopt;
}

}  // namespace

std::string_view category_name(ConceptCategory category) {
  switch (category) {
    case ConceptCategory::kColor: return "color";
    case ConceptCategory::kShape: return "shape";
    case ConceptCategory::kSize: return "size";
    case ConceptCategory::kTexture: return "texture";
  }
  return "unknown";
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dims,
                                 std::vector<float> data)
    : rows_(rows), dims_(dims), data_(std::move(data)) {
  if (data_.size() != rows_ * dims_) {
    throw Error(ErrorCode::kLengthMismatch,
                "embedding data has " + std::to_string(data_.size()) +
                    " values, expected " + std::to_string(rows_ * dims_));
  }
  check_finite(data_, dims_);
}

Matrix EmbeddingMatrix::to_matrix() const {
  Matrix out(rows_, dims_);
  auto dst = out.values();
  for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = data_[i];
  return out;
}

Vector EmbeddingMatrix::row_as_vector(std::size_t r) const {
  auto src = row(r);
  return Vector(src.begin(), src.end());
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.label);
  return out;
}

std::vector<std::uint8_t> encode_embedding_matrix(const EmbeddingMatrix& matrix) {
  if (matrix.rows() == 0 || matrix.dims() == 0) {
    throw Error(ErrorCode::kEmptyMatrix,
                "refusing to encode a " + std::to_string(matrix.rows()) + "x" +
                    std::to_string(matrix.dims()) + " matrix");
  }
  check_finite(matrix.data(), matrix.dims());
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + 4 * matrix.data().size());
  out.insert(out.end(), std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic));
  append_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  append_le<std::uint64_t>(out, matrix.rows());
  append_le<std::uint64_t>(out, matrix.dims());
  for (float v : matrix.data()) append_le<float>(out, v);
  return out;
}

EmbeddingMatrix decode_embedding_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw Error(ErrorCode::kTruncatedFile,
                "header needs " + std::to_string(kEmbeddingHeaderBytes) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic),
                  bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "bytes 0..3 are not \"AEMB\"");
  }
  const auto version = load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kEmbeddingFormatVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "version " + std::to_string(version) + " at byte offset 4");
  }
  const auto rows = load_le<std::uint64_t>(bytes.data() + 8);
  const auto dims = load_le<std::uint64_t>(bytes.data() + 16);
  if (rows == 0 || dims == 0) {
    throw Error(ErrorCode::kEmptyMatrix,
                std::to_string(rows) + "x" + std::to_string(dims) + " matrix");
  }
  constexpr std::uint64_t kMaxCells =
      (UINT64_MAX - kEmbeddingHeaderBytes) / sizeof(float);
  if (rows > kMaxCells / dims) {
    throw Error(ErrorCode::kTruncatedFile,
                "header declares " + std::to_string(rows) + "x" +
                    std::to_string(dims) + " floats, only " +
                    std::to_string(bytes.size()) + " bytes present");
  }
  const std::uint64_t expected = kEmbeddingHeaderBytes + 4 * rows * dims;
  if (expected != bytes.size()) {
    throw Error(expected > bytes.size() ? ErrorCode::kTruncatedFile
                                        : ErrorCode::kLengthMismatch,
                "expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(bytes.size()));
  }
  std::vector<float> data(rows * dims);
  const std::uint8_t* src = bytes.data() + kEmbeddingHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = load_le<float>(src + 4 * i);
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "cell " + std::to_string(i) + " at byte offset " +
                      std::to_string(kEmbeddingHeaderBytes + 4 * i));
    }
  }
  return EmbeddingMatrix(rows, dims, std::move(data));
}

void write_embedding_matrix(const EmbeddingMatrix& matrix,
                            const std::filesystem::path& path) {
  // Encode first so that invalid input never creates a file.
  const auto bytes = encode_embedding_matrix(matrix);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_embedding_matrix(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " +
                              std::string(e.what()).substr(
                                  error_code_name(e.code()).size() + 2));
  }
}

std::vector<ImageRecord> read_image_metadata(const std::filesystem::path& path,
                                             std::optional<std::size_t> n_classes) {
  std::vector<ImageRecord> records;
  std::set<std::string> seen;
  for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t line) {
    const auto where = at_line(path, line);
    ImageRecord rec;
    rec.id = required_string(obj, "id", where);
    auto label = obj.find("label");
    if (label == obj.end()) {
      throw Error(ErrorCode::kMalformedJson, where + ": missing field \"label\"");
    }
    rec.label = class_index(*label, "label", where, n_classes);
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorCode::kDuplicateId, where + ": duplicate id \"" + rec.id + "\"");
    }
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<ConceptRecord> read_concept_metadata(
    const std::filesystem::path& path, std::optional<std::size_t> n_classes) {
  std::vector<ConceptRecord> records;
  std::set<std::string> seen;
  for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t line) {
    const auto where = at_line(path, line);
    ConceptRecord rec;
    rec.id = required_string(obj, "id", where);
    rec.text = required_string(obj, "text", where);
    if (auto tag = obj.find("class_tag"); tag != obj.end() && !tag->is_null()) {
      rec.class_tag = class_index(*tag, "class_tag", where, n_classes);
    }
    if (auto cat = obj.find("category"); cat != obj.end() && !cat->is_null()) {
      if (!cat->is_string()) {
        throw Error(ErrorCode::kMalformedJson, where + ": category must be a string");
      }
      rec.category = parse_category(cat->get<std::string>());
      if (!rec.category) {
        throw Error(ErrorCode::kMalformedJson,
                    where + ": unknown category \"" + cat->get<std::string>() + "\"");
      }
    }
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorCode::kDuplicateId, where + ": duplicate id \"" + rec.id + "\"");
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void write_image_metadata(std::span<const ImageRecord> records,
                          const std::filesystem::path& path) {
  std::string text;
  for (const auto& rec : records) {
    text += nlohmann::json{{"id", rec.id}, {"label", rec.label}}.dump();
    text += '\n';
  }
  write_lines(path, text);
}

void write_concept_metadata(std::span<const ConceptRecord> records,
                            const std::filesystem::path& path) {
  std::string text;
  for (const auto& rec : records) {
    nlohmann::json obj{{"id", rec.id}, {"text", rec.text}};
    if (rec.class_tag) obj["class_tag"] = *rec.class_tag;
    if (rec.category) obj["category"] = std::string(category_name(*rec.category));
    text += obj.dump();
    text += '\n';
  }
  write_lines(path, text);
}

Dataset pair_dataset(EmbeddingMatrix matrix, std::vector<ImageRecord> records,
                     std::size_t n_classes) {
  if (matrix.rows() != records.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(matrix.rows()) + " embedding rows vs " +
                    std::to_string(records.size()) + " records");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].label >= n_classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "record " + std::to_string(i) + " (\"" + records[i].id +
                      "\") has label " + std::to_string(records[i].label) +
                      " but n_classes is " + std::to_string(n_classes));
    }
  }
  return Dataset{std::move(matrix), std::move(records), n_classes};
}

std::size_t infer_class_count(std::span<const ImageRecord> records) {
  std::size_t n = 0;
  for (const auto& rec : records) n = std::max(n, rec.label + 1);
  return n;
}

}  // namespace adacbm
