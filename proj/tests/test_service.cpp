#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "strokescope/errors.hpp"
#include "strokescope/image_io.hpp"
#include "strokescope/service.hpp"
#include "support.hpp"

using namespace strokescope;
using nlohmann::json;

namespace {

ModelRegistry test_registry() {
  ModelRegistry reg;
  reg.add({"lin", testing::random_linear(32, 32, 3, 1), {}, {}});
  LoadedModel emb{"emb", Scorer::embedding(32, 32, 8, 2), {}, {}};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 4; ++i) {
    emb.gallery_names.push_back("g" + std::to_string(i));
    emb.gallery.push_back(embed(emb.scorer, rasterise(testing::random_sketch(rng, 32, 32, 8))));
  }
  reg.add(std::move(emb));
  return reg;
}

const char* kSketch = R"({"canvas":[32,32],"points":[[2,2,1,0,0],[20,4,1,0,0],[25,25,0,1,0],)"
                      R"([5,20,1,0,0],[12,28,0,1,0],[30,5,1,0,0],[28,12,0,1,0],[28,12,0,0,1]]})";

json body(const std::string& model, const json& params = json::object()) {
  json b = {{"sketch", json::parse(kSketch)}, {"params", params}};
  if (!model.empty()) b["model"] = model;
  return b;
}

json call(const Service& s, const char* method, const char* path, const std::string& text, int expect) {
  const auto r = s.handle(method, path, text);
  CHECK(r.status == expect);
  return json::parse(r.body);
}

} // namespace

TEST_CASE("routes and methods") {
  const Service s(test_registry());
  CHECK(call(s, "GET", "/health", "", 200)["status"] == "ok");
  call(s, "POST", "/health", "", 405);
  call(s, "GET", "/v1/attribute", "", 405);
  const auto nf = call(s, "GET", "/v1/nothing", "", 404);
  CHECK(nf["status"] == "error");
  CHECK(nf["error"]["code"] == "not_found");

  const auto models = call(s, "GET", "/v1/models", "", 200)["payload"]["models"];
  REQUIRE(models.size() == 2);
  CHECK(models[0]["id"] == "emb");
  CHECK(models[0]["gallery"].size() == 4);
  CHECK(models[1]["kind"] == "linear");
}

TEST_CASE("render returns a PNG of the canvas size") {
  const Service s(test_registry());
  for (const char* renderer : {"bresenham", "soft"}) {
    const auto r = call(s, "POST", "/v1/render", body("", {{"renderer", renderer}}).dump(), 200);
    CHECK(r["status"] == "ok");
    REQUIRE(r["artifacts"].size() == 1);
    CHECK(r["artifacts"][0]["media_type"] == "image/png");
    const auto png = base64_decode(r["artifacts"][0]["base64"].get<std::string>());
    CHECK(png_dimensions(png) == std::pair{32, 32});
  }
}

TEST_CASE("attribution payloads") {
  const Service s(test_registry());
  const auto psla = call(s, "POST", "/v1/attribute", body("lin", {{"mode", "psla"}}).dump(), 200);
  CHECK(psla["payload"]["scores"].size() == 8);
  CHECK(psla["payload"]["point_gradients"].size() == 8);
  CHECK(psla["payload"]["stroke_scores"].size() == 3);

  const auto sla = call(s, "POST", "/v1/attribute", body("lin", {{"target", "class:1"}}).dump(), 200);
  CHECK(sla["payload"]["scores"].size() == 3);
  CHECK(sla["payload"]["corr"]["n_strokes"] == 3);
  std::vector<std::string> names;
  for (const auto& a : sla["artifacts"]) names.push_back(a["name"]);
  CHECK(names == std::vector<std::string>{"scores.json", "overlay.svg", "heatmap.png"});

  const auto cos = call(s, "POST", "/v1/attribute", body("emb", {{"target", "gallery:2"}}).dump(), 200);
  CHECK(cos["payload"]["scores"].size() == 3);
}

TEST_CASE("filter, attack and reliability jobs") {
  const Service s(test_registry());
  const auto f = call(s, "POST", "/v1/filter", body("emb", {{"target", "gallery:0"}}).dump(), 200);
  CHECK(f["payload"]["kept"].size() + f["payload"]["removed"].size() == 3);
  call(s, "POST", "/v1/filter", body("lin", {{"target", "gallery:0"}}).dump(), 400);

  const auto a = call(s, "POST", "/v1/attack", body("lin", {{"mode", "psla"}, {"epsilon", 2}}).dump(), 200);
  CHECK(a["payload"]["removed"].size() == 2);
  const auto nc = call(s, "POST", "/v1/attack", body("lin", {{"epsilon", 1}}).dump(), 400);
  CHECK(nc["error"]["code"] == "no_candidate");

  const auto r = call(s, "POST", "/v1/reliability", body("emb", {{"true_index", 1}}).dump(), 200);
  CHECK(r["payload"].contains("retrieved_name"));
  CHECK(r["payload"]["true_rank"].get<int>() >= 1);
}

TEST_CASE("error mapping") {
  const Service s(test_registry());
  CHECK(call(s, "POST", "/v1/render", "{not json", 400)["error"]["code"] == "bad_request");
  CHECK(call(s, "POST", "/v1/render", R"({"params":{}})", 400)["error"]["code"] == "bad_request");
  CHECK(call(s, "POST", "/v1/attribute", body("nope").dump(), 404)["error"]["code"] == "unknown_model");
  CHECK(call(s, "POST", "/v1/attribute", body("").dump(), 400)["status"] == "error");

  const std::string huge(std::size_t{1} << 20 | 1, ' ');
  CHECK(call(s, "POST", "/v1/render", huge, 413)["error"]["code"] == "payload_too_large");

  json many = {{"sketch", {{"canvas", {32, 32}}, {"points", json::array()}}}};
  for (int i = 0; i < 5001; ++i) many["sketch"]["points"].push_back({i % 32, i % 31, 1, 0, 0});
  CHECK(call(s, "POST", "/v1/render", many.dump(), 413)["error"]["code"] == "too_many_points");

  const auto bad = body("", json::object());
  auto broken = bad;
  broken["sketch"]["points"][0] = {1, 2, 1, 1, 0};
  CHECK(call(s, "POST", "/v1/render", broken.dump(), 400)["error"]["code"] == "validation_error");

  CHECK(http_status_for(IoError("x")) == 500);
  CHECK(http_status_for(BudgetError("x")) == 400);
  CHECK(http_status_for(std::runtime_error("x")) == 500);
}

TEST_CASE("slow jobs time out") {
  ServiceConfig cfg;
  cfg.timeout = std::chrono::milliseconds(1);
  const Service s(test_registry(), cfg);
  // A soft render of 300 points on 256x256 takes tens of milliseconds.
  json big = {{"sketch", {{"canvas", {256, 256}}, {"points", json::array()}}}, {"params", {{"renderer", "soft"}}}};
  for (int i = 0; i < 300; ++i) big["sketch"]["points"].push_back({(i * 37) % 256, (i * 91) % 256, 1, 0, 0});
  CHECK(call(s, "POST", "/v1/render", big.dump(), 504)["error"]["code"] == "timeout");
}

TEST_CASE("HTTP front end") {
  Service s(test_registry());
  const int port = s.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server([&] { s.listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);
  for (int tries = 0; tries < 100; ++tries) {
    if (auto r = client.Get("/health")) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto r1 = client.Post("/v1/attribute", body("lin", {{"mode", "psla"}}).dump(), "application/json");
  auto r2 = client.Post("/v1/attribute", body("lin", {{"mode", "psla"}}).dump(), "application/json");
  REQUIRE(r1);
  REQUIRE(r2);
  CHECK(r1->status == 200);
  CHECK(r1->body == r2->body);
  CHECK(json::parse(r1->body)["payload"]["scores"].size() == 8);

  auto missing = client.Post("/v1/attack", body("nope").dump(), "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  s.stop();
  server.join();
}
