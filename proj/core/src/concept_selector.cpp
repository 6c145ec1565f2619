#include "adacbm/concept_selector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "adacbm/error.hpp"
#include "json.hpp"

namespace adacbm {

std::string_view tstat_mode_name(TStatMode mode) {
  return mode == TStatMode::kPaper ? "paper" : "welch";
}

TStatMode parse_tstat_mode(std::string_view name) {
  if (name == "paper") return TStatMode::kPaper;
  if (name == "welch") return TStatMode::kWelch;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown t-statistic mode \"" + std::string(name) + "\"");
}

Vector concept_responses(const Dataset& dataset,
                         std::span<const double> concept_embedding) {
  if (concept_embedding.size() != dataset.dims()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "concept has " + std::to_string(concept_embedding.size()) +
                    " dims, dataset has " + std::to_string(dataset.dims()));
  }
  const auto& emb = dataset.embeddings;
  Vector out(emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    auto x = emb.row(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum += static_cast<double>(x[k]) * concept_embedding[k];
    }
    out[i] = sum;
  }
  return out;
}

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

template <typename Pred>
Moments group_moments(std::span<const double> values, Pred in_group) {
  Moments m;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (in_group(i)) {
      sum += values[i];
      ++m.n;
    }
  }
  if (m.n == 0) return m;
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (in_group(i)) {
      const double dev = values[i] - m.mean;
      ss += dev * dev;
    }
  }
  m.var = m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0;
  return m;
}

}  // namespace

UtilityScore utility_tstat(std::span<const double> responses,
                           std::span<const std::size_t> labels,
                           std::size_t target_class, TStatMode mode) {
  if (responses.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(responses.size()) + " responses vs " +
                    std::to_string(labels.size()) + " labels");
  }
  const auto in = group_moments(responses, [&](std::size_t i) {
    return labels[i] == target_class;
  });
  const auto out = group_moments(responses, [&](std::size_t i) {
    return labels[i] != target_class;
  });
  if (in.n < 2 || out.n < 2) {
    throw Error(ErrorCode::kInsufficientSamples,
                "class " + std::to_string(target_class) + " has " +
                    std::to_string(in.n) + " in-class and " +
                    std::to_string(out.n) +
                    " out-of-class samples; need at least 2 of each");
  }

  UtilityScore score;
  score.class_index = target_class;
  score.mu_c = in.mean;
  score.mu_not_c = out.mean;
  score.n_c = in.n;
  score.n_not_c = out.n;
  score.var_c = in.var;
  score.var_not_c = out.var;

  const double se_c = in.var / static_cast<double>(in.n);
  const double se_rest = out.var / static_cast<double>(out.n);
  const double denom = mode == TStatMode::kPaper
                           ? std::sqrt(se_c) + std::sqrt(se_rest)
                           : std::sqrt(se_c + se_rest);
  if (denom == 0.0) {
    score.degenerate = true;
    score.t_value = 0.0;
  } else {
    score.t_value = (in.mean - out.mean) / denom;
  }
  return score;
}

Correlation pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.size() < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "pearson_r needs at least 2 values");
  }
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return {0.0, true};
  // sqrt(v*v) == v exactly, so identical inputs give exactly 1.
  const double r = cov / std::sqrt(var_a * var_b);
  return {std::clamp(r, -1.0, 1.0), false};
}

ConceptMask build_mask(std::span<const ClassSelection> per_class,
                       std::size_t n_classes) {
  std::map<std::size_t, std::string> union_ids;
  for (const auto& cls : per_class) {
    for (const auto& sel : cls.selected) union_ids.emplace(sel.concept_index, sel.concept_id);
  }
  ConceptMask out;
  std::unordered_map<std::size_t, std::size_t> row_of;
  for (const auto& [index, id] : union_ids) {
    row_of[index] = out.concept_order.size();
    out.concept_order.push_back(index);
    out.concept_ids.push_back(id);
  }
  out.mask = Matrix(out.concept_order.size(), n_classes);
  for (const auto& cls : per_class) {
    for (const auto& sel : cls.selected) {
      out.mask(row_of.at(sel.concept_index), cls.class_index) = 1.0;
    }
  }
  return out;
}

SelectionResult select_concepts(const Dataset& dataset,
                                const EmbeddingMatrix& concept_embeddings,
                                std::span<const ConceptRecord> concepts,
                                const SelectionOptions& options) {
  if (options.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!(options.gamma > 0.0 && options.gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must be in (0, 1]");
  }
  if (concept_embeddings.rows() != concepts.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(concept_embeddings.rows()) + " concept embeddings vs " +
                    std::to_string(concepts.size()) + " concept records");
  }
  if (concept_embeddings.dims() != dataset.dims()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "concept dims " + std::to_string(concept_embeddings.dims()) +
                    " != image dims " + std::to_string(dataset.dims()));
  }

  const auto labels = dataset.labels();
  std::vector<Vector> responses;
  responses.reserve(concepts.size());
  for (std::size_t j = 0; j < concepts.size(); ++j) {
    responses.push_back(
        concept_responses(dataset, concept_embeddings.row_as_vector(j)));
  }

  SelectionResult result;
  result.k = options.k;
  result.gamma = options.gamma;
  result.mode = options.mode;
  result.n_classes = dataset.n_classes;

  for (std::size_t c = 0; c < dataset.n_classes; ++c) {
    std::vector<UtilityScore> ranked;
    for (std::size_t j = 0; j < concepts.size(); ++j) {
      if (concepts[j].class_tag && *concepts[j].class_tag != c) continue;
      auto score = utility_tstat(responses[j], labels, c, options.mode);
      score.concept_index = j;
      ranked.push_back(score);
    }
    if (ranked.size() < options.k) {
      throw Error(ErrorCode::kInsufficientCandidates,
                  "class " + std::to_string(c) + " has " +
                      std::to_string(ranked.size()) + " candidates, k is " +
                      std::to_string(options.k));
    }
    std::sort(ranked.begin(), ranked.end(),
              [](const UtilityScore& a, const UtilityScore& b) {
                if (a.t_value != b.t_value) return a.t_value > b.t_value;
                return a.concept_index < b.concept_index;
              });

    ClassSelection cls{c, {}};
    std::vector<bool> taken(ranked.size(), false);
    for (std::size_t r = 0; r < ranked.size() && cls.selected.size() < options.k; ++r) {
      const auto& candidate = responses[ranked[r].concept_index];
      bool redundant = false;
      for (const auto& sel : cls.selected) {
        if (std::abs(pearson_r(candidate, responses[sel.concept_index]).r) >=
            options.gamma) {
          redundant = true;
          break;
        }
      }
      if (redundant) continue;
      taken[r] = true;
      cls.selected.push_back(
          {ranked[r].concept_index, concepts[ranked[r].concept_index].id, ranked[r]});
    }
    if (cls.selected.size() < options.k) {
      result.warnings.push_back(
          "class " + std::to_string(c) + ": only " +
          std::to_string(cls.selected.size()) + " of " + std::to_string(options.k) +
          " concepts passed the correlation filter (gamma " +
          nlohmann::json(options.gamma).dump() +
          "); filled the rest by utility ignoring gamma");
      for (std::size_t r = 0; r < ranked.size() && cls.selected.size() < options.k; ++r) {
        if (taken[r]) continue;
        cls.selected.push_back(
            {ranked[r].concept_index, concepts[ranked[r].concept_index].id, ranked[r]});
      }
    }
    result.per_class.push_back(std::move(cls));
  }
  result.mask = build_mask(result.per_class, result.n_classes);
  return result;
}

std::string selection_to_json(const SelectionResult& result) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& cls : result.per_class) {
    nlohmann::json selected = nlohmann::json::array();
    for (std::size_t r = 0; r < cls.selected.size(); ++r) {
      selected.push_back({{"concept_id", cls.selected[r].concept_id},
                          {"t_value", cls.selected[r].score.t_value},
                          {"rank", r + 1}});
    }
    classes.push_back({{"class", cls.class_index}, {"selected", std::move(selected)}});
  }
  nlohmann::json doc{{"k", result.k},
                     {"gamma", result.gamma},
                     {"mode", std::string(tstat_mode_name(result.mode))},
                     {"classes", std::move(classes)},
                     {"warnings", result.warnings}};
  return doc.dump(2) + "\n";
}

SelectionResult selection_from_json(std::string_view json,
                                    std::span<const ConceptRecord> concepts) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedJson, std::string("selection: ") + e.what());
  }
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t j = 0; j < concepts.size(); ++j) index_of[concepts[j].id] = j;

  SelectionResult result;
  try {
    result.k = doc.at("k").get<std::size_t>();
    result.gamma = doc.at("gamma").get<double>();
    result.mode = parse_tstat_mode(doc.at("mode").get<std::string>());
    result.warnings = doc.value("warnings", std::vector<std::string>{});
    const auto& classes = doc.at("classes");
    result.n_classes = classes.size();
    for (const auto& entry : classes) {
      ClassSelection cls;
      cls.class_index = entry.at("class").get<std::size_t>();
      if (cls.class_index >= result.n_classes) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    "selection class " + std::to_string(cls.class_index));
      }
      for (const auto& sel : entry.at("selected")) {
        const auto id = sel.at("concept_id").get<std::string>();
        auto it = index_of.find(id);
        if (it == index_of.end()) {
          throw Error(ErrorCode::kUnknownConcept,
                      "selection names concept \"" + id +
                          "\" which is not in the concept metadata");
        }
        SelectedConcept sc;
        sc.concept_index = it->second;
        sc.concept_id = id;
        sc.score.concept_index = it->second;
        sc.score.class_index = cls.class_index;
        sc.score.t_value = sel.at("t_value").get<double>();
        cls.selected.push_back(std::move(sc));
      }
      result.per_class.push_back(std::move(cls));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedJson, std::string("selection: ") + e.what());
  }
  std::sort(result.per_class.begin(), result.per_class.end(),
            [](const auto& a, const auto& b) { return a.class_index < b.class_index; });
  result.mask = build_mask(result.per_class, result.n_classes);
  return result;
}

}  // namespace adacbm
