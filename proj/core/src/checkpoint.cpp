#include "adacbm/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "adacbm/error.hpp"
#include "byte_order.hpp"
#include "json.hpp"

namespace adacbm {

namespace {

using internal::append_le;
using internal::load_le;
using nlohmann::json;

constexpr std::size_t kPreambleBytes = 16;

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr0", c.lr0},
          {"lr_final_fraction", c.lr_final_fraction},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"adapter_layers", c.adapter_layers},
          {"k", c.k},
          {"denominator_mode", std::string(tstat_mode_name(c.denominator_mode))},
          {"model_kind", std::string(model_kind_name(c.model_kind))}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_final_fraction = j.at("lr_final_fraction").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adapter_layers = j.at("adapter_layers").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.denominator_mode = parse_tstat_mode(j.at("denominator_mode").get<std::string>());
  c.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
  return c;
}

// {k, gamma, mode, classes:[{class, concept_ids}]} derived from a mask.
json selection_json(const Provenance& p, const Matrix& mask,
                    const std::vector<std::string>& concept_ids) {
  json classes = json::array();
  for (std::size_t i = 0; i < mask.cols(); ++i) {
    json ids = json::array();
    for (std::size_t j = 0; j < mask.rows(); ++j) {
      if (mask(j, i) != 0.0) ids.push_back(concept_ids[j]);
    }
    classes.push_back({{"class", i}, {"concept_ids", std::move(ids)}});
  }
  return {{"k", p.selection_k},
          {"gamma", p.selection_gamma},
          {"mode", std::string(tstat_mode_name(p.selection_mode))},
          {"classes", std::move(classes)}};
}

Matrix mask_from(const json& selection, const ConceptBank& bank, std::size_t n) {
  Matrix mask(bank.size(), n);
  for (const auto& entry : selection.at("classes")) {
    const auto cls = entry.at("class").get<std::size_t>();
    if (cls >= n) throw Error(ErrorCode::kMalformedJson, "selection class out of range");
    for (const auto& id : entry.at("concept_ids")) {
      mask(bank.row_of(id.get<std::string>()), cls) = 1.0;
    }
  }
  return mask;
}

void append_values(std::vector<std::uint8_t>& out, std::span<const double> values) {
  for (double v : values) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kNonFiniteValue, "model parameter is not finite as float32");
    }
    append_le<float>(out, f);
  }
}

class BlobReader {
 public:
  BlobReader(std::span<const std::uint8_t> bytes, std::size_t offset)
      : bytes_(bytes), offset_(offset) {}

  void fill(std::span<double> dst) {
    const std::size_t need = 4 * dst.size();
    if (bytes_.size() - offset_ < need) {
      throw Error(ErrorCode::kTruncatedFile,
                  "checkpoint blob needs " + std::to_string(offset_ + need) +
                      " bytes, file has " + std::to_string(bytes_.size()));
    }
    for (double& v : dst) {
      const float f = load_le<float>(bytes_.data() + offset_);
      if (!std::isfinite(f)) {
        throw Error(ErrorCode::kNonFiniteValue,
                    "checkpoint value at byte offset " + std::to_string(offset_));
      }
      v = f;
      offset_ += 4;
    }
  }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    fill(m.values());
    return m;
  }

  Vector vector(std::size_t n) {
    Vector v(n);
    fill(v);
    return v;
  }

  void expect_end() const {
    if (offset_ != bytes_.size()) {
      throw Error(ErrorCode::kLengthMismatch,
                  "checkpoint has " + std::to_string(bytes_.size() - offset_) +
                      " trailing bytes");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_;
};

json base_header(ModelKind kind, std::size_t d, std::size_t k, std::size_t n,
                 const Provenance& provenance,
                 const std::vector<std::string>& class_names) {
  return {{"format_version", kCheckpointFormatVersion},
          {"model_kind", std::string(model_kind_name(kind))},
          {"d", d},
          {"K", k},
          {"n", n},
          {"class_names", class_names},
          {"train_config", config_json(provenance.config)}};
}

void add_concepts(json& header, const ConceptBank& bank) {
  header["concept_ids"] = bank.ids;
  header["concept_texts"] = bank.texts;
}

Provenance provenance_from(const json& header) {
  Provenance p;
  p.config = config_from(header.at("train_config"));
  if (auto it = header.find("selection"); it != header.end() && !it->is_null()) {
    p.selection_k = it->at("k").get<std::size_t>();
    p.selection_gamma = it->at("gamma").get<double>();
    p.selection_mode = parse_tstat_mode(it->at("mode").get<std::string>());
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& any) {
  json header;
  std::vector<std::uint8_t> blob;
  if (const auto* m = std::get_if<AdaCbmModel>(&any)) {
    m->validate();
    header = base_header(ModelKind::kAdaCbm, m->dims(), m->n_concepts(), m->n_classes(),
                         m->provenance, m->class_names);
    header["layer_count"] = m->adapter.layers.size();
    header["negative_slope"] = m->adapter.negative_slope;
    add_concepts(header, m->concepts);
    header["selection"] = selection_json(m->provenance, m->head.mask, m->concepts.ids);
    for (const auto& layer : m->adapter.layers) append_values(blob, layer.weight.values());
    for (const auto& layer : m->adapter.layers) append_values(blob, layer.bias);
    append_values(blob, m->head.weights.values());
    append_values(blob, m->head.alpha_prime);
    append_values(blob, m->head.beta);
    append_values(blob, m->concepts.embeddings.values());
  } else if (const auto* m = std::get_if<LinearProbe>(&any)) {
    header = base_header(ModelKind::kLinearProbe, m->weight.cols(), 0, m->weight.rows(),
                         m->provenance, m->class_names);
    header["layer_count"] = 0;
    header["negative_slope"] = nullptr;
    header["concept_ids"] = json::array();
    header["concept_texts"] = json::array();
    header["selection"] = nullptr;
    append_values(blob, m->weight.values());
    append_values(blob, m->bias);
  } else {
    const auto& labo = std::get<LaboHead>(any);
    header = base_header(ModelKind::kLaboHead, labo.concepts.embeddings.cols(),
                         labo.concepts.size(), labo.bias.size(), labo.provenance, labo.class_names);
    header["layer_count"] = 0;
    header["negative_slope"] = nullptr;
    add_concepts(header, labo.concepts);
    header["selection"] = selection_json(labo.provenance, labo.init_mask, labo.concepts.ids);
    append_values(blob, labo.weights.values());
    append_values(blob, labo.bias);
    append_values(blob, labo.concepts.embeddings.values());
  }

  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPreambleBytes + text.size() + blob.size());
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  append_le<std::uint32_t>(out, kCheckpointFormatVersion);
  append_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreambleBytes) {
    throw Error(ErrorCode::kTruncatedFile, "checkpoint shorter than its preamble");
  }
  if (!std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "bytes 0..3 are not \"ACBM\"");
  }
  const auto version = load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "checkpoint version " + std::to_string(version));
  }
  const auto header_bytes = load_le<std::uint64_t>(bytes.data() + 8);
  if (header_bytes > bytes.size() - kPreambleBytes) {
    throw Error(ErrorCode::kTruncatedFile, "checkpoint header runs past end of file");
  }

  try {
    const json header = json::parse(bytes.begin() + kPreambleBytes,
                                    bytes.begin() + kPreambleBytes + header_bytes);
    BlobReader blob(bytes, kPreambleBytes + header_bytes);
    const auto kind = parse_model_kind(header.at("model_kind").get<std::string>());
    const auto d = header.at("d").get<std::size_t>();
    const auto k = header.at("K").get<std::size_t>();
    const auto n = header.at("n").get<std::size_t>();
    auto class_names = header.at("class_names").get<std::vector<std::string>>();
    if (class_names.size() != n) {
      throw Error(ErrorCode::kLengthMismatch, "class_names length != n");
    }
    auto provenance = provenance_from(header);

    auto read_bank = [&](ConceptBank& bank) {
      bank.ids = header.at("concept_ids").get<std::vector<std::string>>();
      bank.texts = header.at("concept_texts").get<std::vector<std::string>>();
      if (bank.ids.size() != k || bank.texts.size() != k) {
        throw Error(ErrorCode::kLengthMismatch, "concept metadata length != K");
      }
    };

    switch (kind) {
      case ModelKind::kAdaCbm: {
        AdaCbmModel m;
        const auto layers = header.at("layer_count").get<std::size_t>();
        m.adapter.negative_slope = header.at("negative_slope").get<double>();
        m.adapter.layers.resize(layers);
        for (auto& layer : m.adapter.layers) layer.weight = blob.matrix(d, d);
        for (auto& layer : m.adapter.layers) layer.bias = blob.vector(d);
        m.head.weights = blob.matrix(k, n);
        m.head.alpha_prime = blob.vector(k);
        m.head.beta = blob.vector(n);
        read_bank(m.concepts);
        m.concepts.embeddings = blob.matrix(k, d);
        blob.expect_end();
        m.head.mask = mask_from(header.at("selection"), m.concepts, n);
        m.class_names = std::move(class_names);
        m.provenance = provenance;
        m.validate();
        return m;
      }
      case ModelKind::kLinearProbe: {
        LinearProbe m;
        m.weight = blob.matrix(n, d);
        m.bias = blob.vector(n);
        blob.expect_end();
        m.class_names = std::move(class_names);
        m.provenance = provenance;
        return m;
      }
      case ModelKind::kLaboHead: {
        LaboHead m;
        m.weights = blob.matrix(k, n);
        m.bias = blob.vector(n);
        read_bank(m.concepts);
        m.concepts.embeddings = blob.matrix(k, d);
        blob.expect_end();
        m.init_mask = mask_from(header.at("selection"), m.concepts, n);
        m.class_names = std::move(class_names);
        m.provenance = provenance;
        return m;
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedJson, std::string("checkpoint header: ") + e.what());
  }
  throw Error(ErrorCode::kMalformedJson, "checkpoint header: unknown model kind");
}

void save_checkpoint(const AnyModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

AnyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

AnyModel round_trip_float32(const AnyModel& model) {
  return decode_checkpoint(encode_checkpoint(model));
}

std::string train_config_to_json(const TrainConfig& config) {
  return config_json(config).dump();
}

TrainConfig train_config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedJson, std::string("train config: ") + e.what());
  }
}

}  // namespace adacbm
