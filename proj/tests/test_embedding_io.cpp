#include <bit>
#include <cstring>
#include <fstream>

#include "adacbm/embedding_io.hpp"
#include "adacbm/error.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace adacbm;
using adacbm::testing::TempDir;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_lines(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an adacbm::Error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("1x2 matrix encodes to 32 bytes with little-endian payload") {
  const EmbeddingMatrix m(1, 2, {0.0f, 1.0f});
  const auto bytes = encode_embedding_matrix(m);
  REQUIRE(bytes.size() == 32);
  CHECK(std::memcmp(bytes.data(), "AEMB", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);   // rows
  CHECK(bytes[16] == 2);  // dims
  const std::uint8_t zero[4] = {0, 0, 0, 0};
  const std::uint8_t one[4] = {0x00, 0x00, 0x80, 0x3f};
  CHECK(std::memcmp(bytes.data() + 24, zero, 4) == 0);
  CHECK(std::memcmp(bytes.data() + 28, one, 4) == 0);
}

TEST_CASE("empty matrices are rejected on write") {
  TempDir dir;
  CHECK(code_of([&] { write_embedding_matrix(EmbeddingMatrix(0, 4, {}), dir / "e.aemb"); }) ==
        ErrorCode::kEmptyMatrix);
  CHECK_FALSE(std::filesystem::exists(dir / "e.aemb"));
}

TEST_CASE("non-finite values are rejected at construction") {
  CHECK(code_of([] { EmbeddingMatrix(1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}); }) ==
        ErrorCode::kNonFiniteValue);
  CHECK(code_of([] { EmbeddingMatrix(1, 2, {1.0f}); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("random matrices round-trip bit-identically") {
  TempDir dir;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng() % 6;
    const std::size_t dims = 1 + rng() % 6;
    std::vector<float> data(rows * dims);
    for (float& v : data) {
      v = static_cast<float>(std::normal_distribution<double>(0.0, 10.0)(rng));
    }
    const EmbeddingMatrix m(rows, dims, data);
    const auto path = dir / "m.aemb";
    write_embedding_matrix(m, path);
    const auto back = read_embedding_matrix(path);
    REQUIRE(back.rows() == rows);
    REQUIRE(back.dims() == dims);
    for (std::size_t i = 0; i < data.size(); ++i) {
      REQUIRE(std::bit_cast<std::uint32_t>(back.data()[i]) ==
              std::bit_cast<std::uint32_t>(data[i]));
    }
    CHECK(std::filesystem::file_size(path) == 24 + 4 * rows * dims);
  }
}

TEST_CASE("corrupted embedding files") {
  TempDir dir;
  const EmbeddingMatrix m(3, 4, std::vector<float>(12, 0.5f));
  auto bytes = encode_embedding_matrix(m);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(dir / "x.aemb", bad);
    CHECK(code_of([&] { read_embedding_matrix(dir / "x.aemb"); }) == ErrorCode::kBadMagic);
  }
  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 2;
    CHECK(code_of([&] { decode_embedding_matrix(bad); }) == ErrorCode::kUnsupportedVersion);
  }
  SUBCASE("truncated payload reports expected and actual sizes") {
    auto bad = bytes;
    bad.resize(bad.size() - 6);
    try {
      decode_embedding_matrix(bad);
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTruncatedFile);
      const std::string msg = e.what();
      CHECK(msg.find("72") != std::string::npos);
      CHECK(msg.find("66") != std::string::npos);
    }
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> bad(bytes.begin(), bytes.begin() + 10);
    CHECK(code_of([&] { decode_embedding_matrix(bad); }) == ErrorCode::kTruncatedFile);
  }
  SUBCASE("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK(code_of([&] { decode_embedding_matrix(bad); }) == ErrorCode::kLengthMismatch);
  }
  SUBCASE("NaN in payload") {
    auto bad = bytes;
    const std::uint8_t nan[4] = {0x00, 0x00, 0xc0, 0x7f};
    std::memcpy(bad.data() + 24 + 4 * 5, nan, 4);
    CHECK(code_of([&] { decode_embedding_matrix(bad); }) == ErrorCode::kNonFiniteValue);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { read_embedding_matrix(dir / "nope.aemb"); }) == ErrorCode::kIo);
  }
}

TEST_CASE("concept metadata parses one line") {
  TempDir dir;
  write_lines(dir / "c.jsonl",
              R"({"id":"c1","text":"round regular border","class_tag":0,"category":"shape"})"
              "\n");
  const auto records = read_concept_metadata(dir / "c.jsonl");
  REQUIRE(records.size() == 1);
  CHECK(records[0].id == "c1");
  CHECK(records[0].text == "round regular border");
  CHECK(records[0].class_tag == std::optional<std::size_t>(0));
  CHECK(records[0].category == std::optional(ConceptCategory::kShape));
}

TEST_CASE("concept metadata without optional fields") {
  TempDir dir;
  write_lines(dir / "c.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"b\",\"text\":\"y\"}\n");
  const auto records = read_concept_metadata(dir / "c.jsonl");
  REQUIRE(records.size() == 2);
  CHECK_FALSE(records[0].class_tag.has_value());
  CHECK_FALSE(records[1].category.has_value());
}

TEST_CASE("duplicate ids name the id") {
  TempDir dir;
  write_lines(dir / "i.jsonl", "{\"id\":\"dup\",\"label\":0}\n{\"id\":\"dup\",\"label\":1}\n");
  try {
    read_image_metadata(dir / "i.jsonl");
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateId);
    CHECK(std::string(e.what()).find("dup") != std::string::npos);
  }
}

TEST_CASE("malformed metadata lines") {
  TempDir dir;
  write_lines(dir / "bad.jsonl", "{\"id\":\"a\",\"label\":0}\n{not json\n");
  try {
    read_image_metadata(dir / "bad.jsonl");
    FAIL("expected MalformedJson");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedJson);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_lines(dir / "cat.jsonl", "{\"id\":\"a\",\"text\":\"t\",\"category\":\"smell\"}\n");
  CHECK(code_of([&] { read_concept_metadata(dir / "cat.jsonl"); }) == ErrorCode::kMalformedJson);
  write_lines(dir / "neg.jsonl", "{\"id\":\"a\",\"label\":-1}\n");
  CHECK(code_of([&] { read_image_metadata(dir / "neg.jsonl"); }) != ErrorCode::kIo);
}

TEST_CASE("50 generated records parse back in order") {
  TempDir dir;
  std::vector<ImageRecord> images;
  std::vector<ConceptRecord> concepts;
  for (std::size_t i = 0; i < 50; ++i) {
    images.push_back({"image_" + std::to_string(i), (i * 7) % 5});
    ConceptRecord c{"concept_" + std::to_string(i), "text with \"quotes\" " + std::to_string(i),
                    std::nullopt, std::nullopt};
    if (i % 3 == 0) c.class_tag = i % 4;
    if (i % 2 == 0) c.category = static_cast<ConceptCategory>(i % 4);
    concepts.push_back(c);
  }
  write_image_metadata(images, dir / "i.jsonl");
  write_concept_metadata(concepts, dir / "c.jsonl");
  CHECK(read_image_metadata(dir / "i.jsonl") == images);
  CHECK(read_concept_metadata(dir / "c.jsonl") == concepts);
}

TEST_CASE("pairing embeddings with records") {
  const EmbeddingMatrix m(3, 2, std::vector<float>(6, 1.0f));
  std::vector<ImageRecord> two{{"a", 0}, {"b", 1}};
  CHECK(code_of([&] { pair_dataset(m, two, 3); }) == ErrorCode::kLengthMismatch);

  std::vector<ImageRecord> ok{{"a", 0}, {"b", 1}, {"c", 2}};
  const auto ds = pair_dataset(m, ok, 3);
  CHECK(ds.size() == 3);
  CHECK(ds.dims() == 2);
  CHECK(ds.labels() == std::vector<std::size_t>{0, 1, 2});

  std::vector<ImageRecord> bad{{"a", 0}, {"b", 3}, {"c", 1}};
  CHECK(code_of([&] { pair_dataset(m, bad, 3); }) == ErrorCode::kLabelOutOfRange);
  CHECK(infer_class_count(bad) == 4);
}

TEST_CASE("label range is enforced while reading when the class count is known") {
  TempDir dir;
  write_lines(dir / "i.jsonl", "{\"id\":\"a\",\"label\":0}\n{\"id\":\"b\",\"label\":3}\n");
  CHECK(code_of([&] { read_image_metadata(dir / "i.jsonl", 3); }) ==
        ErrorCode::kLabelOutOfRange);
  CHECK(read_image_metadata(dir / "i.jsonl").size() == 2);
}
