#ifndef ADACBM_TOOLS_SERVICE_HPP_
#define ADACBM_TOOLS_SERVICE_HPP_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "adacbm/cbm_model.hpp"
#include "adacbm/embedding_io.hpp"

namespace httplib {
class Server;
}

namespace adacbm::tools {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Read-only JSON facade over one AdaCBM checkpoint. Handlers never mutate
// state, so a single instance serves concurrent requests.
//
//   GET  /api/model      model summary
//   GET  /api/images     browse dataset ids and labels (404 without one)
//   POST /api/predict    {image_id} | {embedding:[...]}
//   POST /api/intervene  same plus {excluded_concept_ids:[...]}
//   GET  /healthz        "ok"
class ExplanationService {
 public:
  explicit ExplanationService(AdaCbmModel model, std::optional<Dataset> browse = std::nullopt);

  HttpResponse handle(std::string_view method, std::string_view path,
                      std::string_view body) const;

  HttpResponse model_summary() const;
  HttpResponse images() const;
  HttpResponse predict(std::string_view body) const;
  HttpResponse intervene(std::string_view body) const;

  const AdaCbmModel& model() const { return model_; }

 private:
  AdaCbmModel model_;
  std::optional<Dataset> browse_;
};

// httplib server routing to `service`; static files are mounted at "/" when
// `static_dir` is given. The service must outlive the server.
std::unique_ptr<httplib::Server> make_http_server(
    const ExplanationService& service,
    const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace adacbm::tools

#endif  // ADACBM_TOOLS_SERVICE_HPP_
