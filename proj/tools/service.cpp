#include "service.hpp"

#include <unordered_map>

#include "adacbm/error.hpp"
#include "adacbm/evaluator.hpp"
#include "httplib.h"
#include "render.hpp"

namespace adacbm::tools {

using nlohmann::json;

json term_json(const AdaCbmModel& model, const ConceptTerm& term) {
  return {{"concept_id", model.concepts.ids[term.concept_row]},
          {"text", model.concepts.texts[term.concept_row]},
          {"class", term.class_index},
          {"weight", term.weight},
          {"dot", term.dot},
          {"cosine", term.cosine},
          {"image_norm", term.image_norm},
          {"text_norm", term.text_norm},
          {"shift", term.shift},
          {"contribution", term.contribution}};
}

json prediction_json(const AdaCbmModel& model, const Interpretation& interp,
                     std::span<const double> logits,
                     const std::vector<bool>& excluded) {
  json terms = json::array();
  for (const auto& term : interp.terms) {
    if (!excluded.empty() && excluded[term.concept_row]) continue;
    terms.push_back(term_json(model, term));
  }
  const Vector probs = softmax(logits);
  return {{"logits", Vector(logits.begin(), logits.end())},
          {"probs", probs},
          {"predicted_class", predicted_class(logits)},
          {"interpretation", std::move(terms)}};
}

namespace {

HttpResponse json_response(int status, const json& body) {
  return {status, body.dump(), "application/json"};
}

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

// Thrown inside handlers to short-circuit with an HTTP status.
struct HttpError {
  int status;
  std::string message;
};

json parse_body(std::string_view body) {
  try {
    json doc = json::parse(body);
    if (!doc.is_object()) throw HttpError{400, "request body must be a JSON object"};
    return doc;
  } catch (const json::parse_error& e) {
    throw HttpError{400, std::string("malformed JSON body: ") + e.what()};
  }
}

}  // namespace

ExplanationService::ExplanationService(AdaCbmModel model, std::optional<Dataset> browse)
    : model_(std::move(model)), browse_(std::move(browse)) {
  model_.validate();
  if (browse_ && browse_->dims() != model_.dims()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "browse dataset has " + std::to_string(browse_->dims()) +
                    " dims, model expects " + std::to_string(model_.dims()));
  }
}

HttpResponse ExplanationService::handle(std::string_view method, std::string_view path,
                                        std::string_view body) const {
  if (path == "/healthz" && method == "GET") return {200, "ok", "text/plain"};
  if (path == "/api/model" && method == "GET") return model_summary();
  if (path == "/api/images" && method == "GET") return images();
  if (path == "/api/predict" && method == "POST") return predict(body);
  if (path == "/api/intervene" && method == "POST") return intervene(body);
  return error_response(404, "no route for " + std::string(method) + " " + std::string(path));
}

HttpResponse ExplanationService::model_summary() const {
  json classes = json::array();
  for (std::size_t i = 0; i < model_.n_classes(); ++i) {
    json concepts = json::array();
    for (std::size_t j = 0; j < model_.n_concepts(); ++j) {
      if (model_.head.mask(j, i) == 0.0) continue;
      concepts.push_back({{"id", model_.concepts.ids[j]}, {"text", model_.concepts.texts[j]}});
    }
    classes.push_back(
        {{"class", i}, {"name", model_.class_names[i]}, {"concepts", std::move(concepts)}});
  }
  const auto& cfg = model_.provenance.config;
  json config{{"epochs", cfg.epochs},
              {"lr0", cfg.lr0},
              {"lr_final_fraction", cfg.lr_final_fraction},
              {"weight_decay", cfg.weight_decay},
              {"batch_size", cfg.batch_size},
              {"seed", cfg.seed},
              {"adapter_layers", model_.adapter.layers.size()},
              {"negative_slope", model_.adapter.negative_slope},
              {"selection_gamma", model_.provenance.selection_gamma},
              {"tstat_mode", std::string(tstat_mode_name(model_.provenance.selection_mode))}};
  return json_response(200, json{{"classes", model_.class_names},
                                  {"d", model_.dims()},
                                  {"K", model_.n_concepts()},
                                  {"k", model_.provenance.selection_k},
                                  {"concepts", std::move(classes)},
                                  {"config", std::move(config)}});
}

HttpResponse ExplanationService::images() const {
  if (!browse_) return error_response(404, "no browse dataset loaded");
  json out = json::array();
  for (const auto& rec : browse_->records) out.push_back({{"id", rec.id}, {"label", rec.label}});
  return json_response(200, out);
}

namespace {

Vector resolve_input(const json& body, const AdaCbmModel& model,
                     const std::optional<Dataset>& browse) {
  const bool has_id = body.contains("image_id");
  const bool has_embedding = body.contains("embedding");
  if (has_id == has_embedding) {
    throw HttpError{400, "body needs exactly one of \"image_id\" or \"embedding\""};
  }
  if (has_id) {
    if (!body["image_id"].is_string()) throw HttpError{400, "image_id must be a string"};
    const auto id = body["image_id"].get<std::string>();
    if (!browse) throw HttpError{404, "unknown image id \"" + id + "\" (no browse dataset)"};
    for (std::size_t r = 0; r < browse->size(); ++r) {
      if (browse->records[r].id == id) return browse->embeddings.row_as_vector(r);
    }
    throw HttpError{404, "unknown image id \"" + id + "\""};
  }
  const auto& emb = body["embedding"];
  if (!emb.is_array()) throw HttpError{400, "embedding must be an array of numbers"};
  if (emb.size() != model.dims()) {
    throw HttpError{400, "embedding has " + std::to_string(emb.size()) +
                             " values, expected d = " + std::to_string(model.dims())};
  }
  Vector x;
  x.reserve(emb.size());
  for (const auto& v : emb) {
    if (!v.is_number()) throw HttpError{400, "embedding must be an array of numbers"};
    x.push_back(v.get<double>());
    if (!std::isfinite(x.back())) throw HttpError{400, "embedding values must be finite"};
  }
  return x;
}

template <typename Fn>
HttpResponse guarded(Fn fn) {
  try {
    return fn();
  } catch (const HttpError& e) {
    return error_response(e.status, e.message);
  } catch (const Error& e) {
    return error_response(e.code() == ErrorCode::kUnknownConcept ? 422 : 400, e.what());
  }
}

}  // namespace

HttpResponse ExplanationService::predict(std::string_view body) const {
  return guarded([&] {
    const auto request = parse_body(body);
    const auto x = resolve_input(request, model_, browse_);
    const auto interp = decompose(model_, x);
    return json_response(200, prediction_json(model_, interp, interp.logits));
  });
}

HttpResponse ExplanationService::intervene(std::string_view body) const {
  return guarded([&] {
    const auto request = parse_body(body);
    const auto x = resolve_input(request, model_, browse_);
    std::vector<std::string> excluded_ids;
    if (auto it = request.find("excluded_concept_ids"); it != request.end()) {
      if (!it->is_array()) throw HttpError{400, "excluded_concept_ids must be an array"};
      for (const auto& id : *it) {
        if (!id.is_string()) throw HttpError{400, "excluded_concept_ids must hold strings"};
        excluded_ids.push_back(id.get<std::string>());
      }
    }
    std::vector<std::size_t> rows;
    for (const auto& id : excluded_ids) {
      auto pos = std::find(model_.concepts.ids.begin(), model_.concepts.ids.end(), id);
      if (pos == model_.concepts.ids.end()) {
        throw HttpError{422, "unknown concept id \"" + id + "\""};
      }
      rows.push_back(static_cast<std::size_t>(pos - model_.concepts.ids.begin()));
    }
    const auto interp = decompose(model_, x);
    const auto after = intervene_rows(model_, x, rows);
    std::vector<bool> excluded_flags(model_.n_concepts(), false);
    for (std::size_t r : rows) excluded_flags[r] = true;
    auto payload = prediction_json(model_, interp, after.logits, excluded_flags);
    Vector delta(after.logits.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = after.logits[i] - interp.logits[i];
    payload["delta_logits"] = delta;
    payload["excluded_concept_ids"] = excluded_ids;
    return json_response(200, payload);
  });
}

std::unique_ptr<httplib::Server> make_http_server(
    const ExplanationService& service,
    const std::optional<std::filesystem::path>& static_dir) {
  auto server = std::make_unique<httplib::Server>();
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto out = service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  // The browser frontend may be served from another origin during development.
  server->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", "Content-Type"}});
  server->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server->Get("/healthz", route);
  server->Get("/api/model", route);
  server->Get("/api/images", route);
  server->Post("/api/predict", route);
  server->Post("/api/intervene", route);
  if (static_dir && !server->set_mount_point("/", static_dir->string())) {
    throw Error(ErrorCode::kIo, "static directory " + static_dir->string() + " not found");
  }
  return server;
}

}  // namespace adacbm::tools
