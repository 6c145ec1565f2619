#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "render.hpp"
#include "service.hpp"
#include "test_support.hpp"

using namespace adacbm;
using namespace adacbm::testing;
using adacbm::tools::ExplanationService;
using nlohmann::json;

namespace {

struct Fixture {
  AdaCbmModel model;
  Dataset browse;
  Fixture() {
    std::mt19937_64 rng(17);
    model = random_model(4, 6, 3, 1, rng);
    browse = random_dataset(5, 4, 3, rng);
  }
};

json body_of(const tools::HttpResponse& r) { return json::parse(r.body); }

json without_extras(json doc) {
  doc.erase("delta_logits");
  doc.erase("excluded_concept_ids");
  return doc;
}

}  // namespace

TEST_CASE("model summary") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  const auto res = svc.handle("GET", "/api/model", "");
  CHECK(res.status == 200);
  const auto doc = body_of(res);
  CHECK(doc["classes"].size() == 3);
  CHECK(doc["d"] == 4);
  CHECK(doc["K"] == 6);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < 6; ++j) count += fx.model.head.mask(j, i) != 0.0;
    CHECK(doc["concepts"][i]["concepts"].size() == count);
  }
}

TEST_CASE("health and images") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  CHECK(svc.handle("GET", "/healthz", "").body == "ok");
  CHECK(body_of(svc.handle("GET", "/api/images", "")).size() == 5);
  const ExplanationService bare(fx.model);
  CHECK(bare.handle("GET", "/api/images", "").status == 404);
  CHECK(svc.handle("GET", "/api/nothing", "").status == 404);
}

TEST_CASE("predict matches the model") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  const auto x = fx.browse.embeddings.row_as_vector(2);
  const auto res = svc.handle("POST", "/api/predict", json{{"image_id", "img_2"}}.dump());
  REQUIRE(res.status == 200);
  const auto doc = body_of(res);
  const auto z = forward_logits(fx.model, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(doc["logits"][i].get<double>() == z[i]);
  const auto interp = decompose(fx.model, x);
  CHECK(doc["predicted_class"] == interp.predicted_class());
  CHECK(doc["interpretation"].size() == interp.terms.size());

  const auto by_vector = svc.handle("POST", "/api/predict", json{{"embedding", x}}.dump());
  CHECK(body_of(by_vector) == doc);
}

TEST_CASE("request errors") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  const auto wrong = svc.handle("POST", "/api/predict", json{{"embedding", {1.0, 2.0}}}.dump());
  CHECK(wrong.status == 400);
  CHECK(body_of(wrong)["error"].get<std::string>().find("d = 4") != std::string::npos);
  CHECK(svc.handle("POST", "/api/predict", "{oops").status == 400);
  CHECK(svc.handle("POST", "/api/predict", "{}").status == 400);
  CHECK(svc.handle("POST", "/api/predict", json{{"image_id", "zzz"}}.dump()).status == 404);
  const auto unknown = svc.handle(
      "POST", "/api/intervene",
      json{{"image_id", "img_0"}, {"excluded_concept_ids", {"nope"}}}.dump());
  CHECK(unknown.status == 422);
}

TEST_CASE("intervention over the service") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  for (std::size_t r = 0; r < fx.browse.size(); ++r) {
    const json req{{"image_id", fx.browse.records[r].id}};
    const auto predict = body_of(svc.handle("POST", "/api/predict", req.dump()));

    json empty = req;
    empty["excluded_concept_ids"] = json::array();
    const auto same = body_of(svc.handle("POST", "/api/intervene", empty.dump()));
    CHECK(without_extras(same) == predict);

    const std::size_t cls = predict["predicted_class"];
    const auto interp = decompose(fx.model, fx.browse.embeddings.row_as_vector(r));
    const auto top = top_contributors(interp, cls, 1).front();
    json drop = req;
    drop["excluded_concept_ids"] = {fx.model.concepts.ids[top.concept_row]};
    const auto after = body_of(svc.handle("POST", "/api/intervene", drop.dump()));
    const double before_logit = predict["logits"][cls];
    const double after_logit = after["logits"][cls];
    CHECK(std::abs((before_logit - after_logit) - top.contribution) <= 1e-9);
    CHECK(after["delta_logits"][cls].get<double>() == after_logit - before_logit);
    for (const auto& term : after["interpretation"]) {
      CHECK(term["concept_id"] != fx.model.concepts.ids[top.concept_row]);
    }
  }
}

TEST_CASE("live HTTP round trip") {
  Fixture fx;
  const ExplanationService svc(fx.model, fx.browse);
  auto server = tools::make_http_server(svc);
  const int port = server->bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server->listen_after_bind(); });
  server->wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

  const std::string body = json{{"image_id", "img_1"}}.dump();
  const auto res = client.Post("/api/predict", body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == svc.handle("POST", "/api/predict", body).body);

  const auto bad = client.Post("/api/predict", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  server->stop();
  worker.join();
}

TEST_CASE("browse data must match the model width") {
  Fixture fx;
  std::mt19937_64 rng(1);
  CHECK_THROWS(ExplanationService(fx.model, random_dataset(3, 5, 3, rng)));
}
