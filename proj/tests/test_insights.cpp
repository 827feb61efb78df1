#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "attrkit/insights/service.hpp"
#include "attrkit/io/demo.hpp"

namespace attrkit {
namespace {

using insights::Response;
using insights::Service;
using json = nlohmann::json;

Service make_service(Model model, std::vector<io::SampleBundle> samples, insights::ServiceOptions options = {}) {
  if (options.model_path.empty()) options.model_path = "demo/" + model.spec().name + ".attrmodel";
  return Service(std::make_shared<const app::Workspace>(app::Workspace{std::move(model), std::move(samples)}),
                 std::move(options));
}

Response get(const Service& s, const std::string& path, insights::Query q = {}) { return s.handle("GET", path, q, ""); }
Response post(const Service& s, const std::string& path, const json& body) {
  return s.handle("POST", path, {}, body.dump());
}

json body_of(const Response& r) { return json::parse(r.body); }

TEST(InsightsApi, ModelDescriptor) {
  const auto s = make_service(io::build_multimodal_classifier(), io::demo_multimodal_samples());
  const auto r = get(s, "/api/model");
  ASSERT_EQ(r.status, 200);
  const auto doc = body_of(r);
  EXPECT_EQ(doc["name"], "multimodal_classifier");
  ASSERT_EQ(doc["inputs"].size(), 2u);
  EXPECT_EQ(doc["inputs"][0]["modality"], "text");
  EXPECT_EQ(doc["inputs"][1]["modality"], "tabular");
  EXPECT_EQ(doc["classes"], (json{"negative", "positive"}));
}

TEST(InsightsApi, RosterListsEveryMethod) {
  const auto s = make_service(io::build_text_classifier(), io::demo_text_samples());
  const auto doc = body_of(get(s, "/api/methods"));
  std::set<std::string> ids;
  for (const auto& m : doc["methods"]) ids.insert(m["id"].get<std::string>());
  for (const auto& m : method_roster()) EXPECT_TRUE(ids.contains(m.id)) << m.id;
  EXPECT_EQ(ids.size(), method_roster().size());
}

TEST(InsightsApi, EmptyDatasetPagesToNothing) {
  const auto s = make_service(io::build_text_classifier(), {});
  const auto doc = body_of(get(s, "/api/samples"));
  EXPECT_EQ(doc["samples"], json::array());
  EXPECT_EQ(doc["total"], 0);
}

TEST(InsightsApi, PagingArithmetic) {
  const auto samples = io::demo_text_samples();
  ASSERT_EQ(samples.size(), 5u);
  const auto s = make_service(io::build_text_classifier(), samples);
  auto doc = body_of(get(s, "/api/samples", {{"limit", "2"}}));
  EXPECT_EQ(doc["total"], 5);
  ASSERT_EQ(doc["samples"].size(), 2u);
  EXPECT_EQ(doc["samples"][0]["id"], samples[0].id);
  doc = body_of(get(s, "/api/samples", {{"offset", "4"}, {"limit", "2"}}));
  ASSERT_EQ(doc["samples"].size(), 1u);
  EXPECT_EQ(doc["samples"][0]["id"], samples[4].id);
  doc = body_of(get(s, "/api/samples", {{"offset", "9"}}));
  EXPECT_EQ(doc["samples"].size(), 0u);
}

TEST(InsightsApi, BadPagingIs400) {
  const auto s = make_service(io::build_text_classifier(), io::demo_text_samples());
  EXPECT_EQ(get(s, "/api/samples", {{"limit", "0"}}).status, 400);
  EXPECT_EQ(get(s, "/api/samples", {{"limit", "two"}}).status, 400);
  EXPECT_EQ(get(s, "/api/samples", {{"offset", "-1"}}).status, 400);
  EXPECT_EQ(get(s, "/api/samples", {{"offset", "1.5"}}).status, 400);
}

TEST(InsightsAttribute, SingleModalityFractionIsOne) {
  const auto s = make_service(io::build_text_classifier(), io::demo_text_samples());
  const auto r = post(s, "/api/attribute", {{"sample_id", "text00"}, {"method", "integrated_gradients"}});
  ASSERT_EQ(r.status, 200) << r.body;
  const auto doc = body_of(r);
  EXPECT_EQ(doc["aggregate"]["fractions"]["text"], 1.0);
  EXPECT_EQ(doc["aggregate"]["all_zero"], false);
  const auto& text = doc["modalities"][0];
  EXPECT_EQ(text["kind"], "text");
  EXPECT_EQ(text["tokens"].size(), 7u);
  EXPECT_EQ(text["values"].size(), 7u);
}

TEST(InsightsAttribute, ModalityAtItsBaselineHasZeroFraction) {
  const auto samples = io::demo_multimodal_samples();
  const auto s = make_service(io::build_multimodal_classifier(), samples);
  const auto& sample = samples[0];
  const json baseline = {{"kind", "tensor"}, {"inputs", {{"features", sample.modalities.at("features").values()}}}};
  const auto r = post(s, "/api/attribute",
                      {{"sample_id", sample.id}, {"method", "integrated_gradients"}, {"baseline", baseline}});
  ASSERT_EQ(r.status, 200) << r.body;
  const auto doc = body_of(r);
  EXPECT_EQ(doc["aggregate"]["fractions"]["features"], 0.0);
  EXPECT_EQ(doc["aggregate"]["fractions"]["text"], 1.0);
  const auto& tab = doc["modalities"][1];
  EXPECT_EQ(tab["kind"], "tabular");
  EXPECT_EQ(tab["names"].size(), 5u);
}

TEST(InsightsAttribute, FractionsSumToOne) {
  const auto samples = io::demo_multimodal_samples();
  const auto s = make_service(io::build_multimodal_classifier(), samples);
  for (const auto& sample : samples) {
    const auto doc = body_of(post(s, "/api/attribute", {{"sample_id", sample.id}, {"method", "saliency"}}));
    double sum = 0.0;
    for (const auto& [name, f] : doc["aggregate"]["fractions"].items()) {
      EXPECT_GE(f.get<double>(), 0.0);
      sum += f.get<double>();
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(InsightsAttribute, AllZeroAttributionsAreFlagged) {
  const auto samples = io::demo_tabular_samples();
  const auto s = make_service(io::build_tabular_regressor(), samples);
  const json baseline = {{"kind", "tensor"}, {"inputs", {{"features", samples[0].modalities.at("features").values()}}}};
  const auto doc = body_of(post(s, "/api/attribute",
                                {{"sample_id", samples[0].id}, {"method", "integrated_gradients"}, {"baseline", baseline}}));
  EXPECT_EQ(doc["aggregate"]["all_zero"], true);
  EXPECT_EQ(doc["aggregate"]["fractions"]["features"], 0.0);
}

TEST(InsightsAttribute, IdenticalRequestsGiveIdenticalBytes) {
  const auto s = make_service(io::build_multimodal_classifier(), io::demo_multimodal_samples());
  const json body = {{"sample_id", "pair01"},
                     {"method", "gradient_shap"},
                     {"params", {{"n_samples", 6}, {"noise_tunnel", {{"type", "smoothgrad"}, {"n_samples", 3}}}}},
                     {"seed", 17}};
  const auto a = post(s, "/api/attribute", body);
  const auto b = post(s, "/api/attribute", body);
  ASSERT_EQ(a.status, 200) << a.body;
  EXPECT_EQ(a.body, b.body);
}

TEST(InsightsAttribute, ImageViewCarriesBase64Heatmap) {
  const auto s = make_service(io::build_small_convnet(), io::demo_image_samples());
  for (const std::string method : {"saliency", "gradcam"}) {
    json body = {{"sample_id", "image00"}, {"method", method}};
    if (method == "gradcam") body["params"] = {{"layer", "conv2"}};
    const auto r = post(s, "/api/attribute", body);
    ASSERT_EQ(r.status, 200) << r.body;
    const auto doc = body_of(r);
    const auto& img = doc["modalities"][0];
    EXPECT_EQ(img["heatmap"]["width"], 16);
    EXPECT_EQ(img["heatmap"]["height"], 16);
    const auto b64 = img["heatmap"]["base64"].get<std::string>();
    EXPECT_EQ(b64.rfind("UDYK", 0), 0u);  // "P6\n"
    EXPECT_EQ(doc["aggregate"]["fractions"]["image"], 1.0);
    EXPECT_TRUE(doc["target"]["score"].is_number());
  }
}

TEST(InsightsAttribute, ErrorStatuses) {
  const auto s = make_service(io::build_text_classifier(), io::demo_text_samples());
  auto r = post(s, "/api/attribute", {{"sample_id", "nope"}, {"method", "saliency"}});
  EXPECT_EQ(r.status, 404);
  r = post(s, "/api/attribute", {{"sample_id", "text00"}, {"method", "integrated_gradients"}, {"params", {{"steps", 0}}}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(body_of(r)["path"], "params.steps");
  r = post(s, "/api/attribute", {{"sample_id", "text00"}, {"method", "no_such_method"}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(body_of(r)["path"], "method");
  r = s.handle("POST", "/api/attribute", {}, "{not json");
  EXPECT_EQ(r.status, 400);
  r = post(s, "/api/attribute", {{"sample_id", "text00"}, {"method", "layer_activation"}, {"params", {{"layer", "fc1"}}}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(get(s, "/api/nothing").status, 404);
}

TEST(InsightsAttribute, NonFiniteAttributionIs500) {
  const auto s = make_service(io::build_linear_regressor(), io::demo_tabular_samples());
  // The baseline overflows the model's f32 storage.
  const auto r = post(s, "/api/attribute",
                      {{"sample_id", "house00"}, {"method", "integrated_gradients"}, {"baseline", 1e300}});
  EXPECT_EQ(r.status, 500) << r.body;
  EXPECT_EQ(body_of(r)["error"], "NumericFailure");
}

TEST(InsightsAttribute, ReplayReproducesTheView) {
  const auto samples = io::demo_text_samples();
  insights::ServiceOptions options;
  options.model_path = "m.attrmodel";
  options.weights_path = "m.attrw";
  options.dataset_path = "it's.attrds";
  const auto s = make_service(io::build_text_classifier(), samples, options);
  const auto doc = body_of(post(s, "/api/attribute",
                                {{"sample_id", "text02"}, {"method", "deeplift"}, {"seed", 5}}));
  const auto replay = doc["replay"].get<std::string>();
  EXPECT_EQ(replay.rfind("attrkit run --model 'm.attrmodel' --weights 'm.attrw' --dataset 'it'\\''s.attrds' --request '", 0),
            0u);
  const auto start = replay.find("--request '") + 11;
  const auto echo = json::parse(replay.substr(start, replay.size() - start - 1));
  EXPECT_EQ(echo["sample"], "text02");
  EXPECT_EQ(echo["request"], doc["request"]);
  const app::Workspace ws{io::build_text_classifier(), samples};
  const auto again = app::run_attribution(ws, samples[2], echo["request"]);
  EXPECT_EQ(again.document["result"]["attributions"]["text"]["values"].size(), 7u * 8u);
  EXPECT_EQ(again.document["request"], doc["request"]);
}

TEST(InsightsMetric, LinearSaliencyInfidelityAndDeterminism) {
  const auto s = make_service(io::build_linear_regressor(), io::demo_tabular_samples());
  const json body = {{"sample_id", "house03"}, {"method", "saliency"}, {"metric", {{"metric", "infidelity"}}}, {"seed", 8}};
  const auto a = post(s, "/api/metric", body);
  ASSERT_EQ(a.status, 200) << a.body;
  EXPECT_LE(std::abs(body_of(a)["result"]["value"].get<double>()), 1e-10);
  EXPECT_EQ(a.body, post(s, "/api/metric", body).body);
  EXPECT_NE(body_of(a)["replay"].get<std::string>().find("attrkit eval"), std::string::npos);
}

TEST(InsightsMetric, NonPositiveRadiusIs422) {
  const auto s = make_service(io::build_linear_regressor(), io::demo_tabular_samples());
  for (double radius : {0.0, -0.03}) {
    const auto r = post(s, "/api/metric",
                        {{"sample_id", "house00"}, {"method", "saliency"},
                         {"metric", {{"metric", "max_sensitivity"}, {"radius", radius}}}});
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(body_of(r)["path"], "metric.radius");
  }
  EXPECT_EQ(post(s, "/api/metric", {{"sample_id", "zz"}, {"method", "saliency"}}).status, 404);
}

TEST(InsightsStatic, PlaceholderAndAssetDirectory) {
  auto s = make_service(io::build_linear_regressor(), {});
  auto r = get(s, "/");
  EXPECT_EQ(r.status, 200);
  EXPECT_NE(r.body.find("<html>"), std::string::npos);

  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / ("attrkit_ui_" + std::to_string(::getpid()));
  fs::create_directories(dir / "assets");
  std::ofstream(dir / "index.html") << "<p>ui</p>";
  std::ofstream(dir / "assets" / "app.js") << "console.log(1)";
  insights::ServiceOptions options;
  options.ui_dir = dir;
  s = make_service(io::build_linear_regressor(), {}, options);
  r = get(s, "/");
  EXPECT_EQ(r.body, "<p>ui</p>");
  r = get(s, "/assets/app.js");
  EXPECT_EQ(r.content_type, "text/javascript");
  EXPECT_EQ(get(s, "/../etc/passwd").status, 404);
  EXPECT_EQ(get(s, "/missing.css").status, 404);
  fs::remove_all(dir);
}

TEST(InsightsTimeout, SlowComputationIs504) {
  insights::ServiceOptions options;
  options.timeout = std::chrono::milliseconds(1);
  const auto s = make_service(io::build_small_convnet(), io::demo_image_samples(), options);
  const auto r = post(s, "/api/attribute",
                      {{"sample_id", "image00"}, {"method", "integrated_gradients"}, {"params", {{"steps", 64}}}});
  EXPECT_EQ(r.status, 504);
  EXPECT_EQ(body_of(r)["error"], "timeout");
  // Let the abandoned run finish before the test binary exits.
  std::this_thread::sleep_for(std::chrono::seconds(2));
}

TEST(InsightsHttp, ServesOverSockets) {
  const auto s = make_service(io::build_text_classifier(), io::demo_text_samples());
  insights::HttpServer server(s);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);
  auto samples = client.Get("/api/samples?offset=1&limit=2");
  ASSERT_TRUE(samples);
  EXPECT_EQ(samples->status, 200);
  EXPECT_EQ(json::parse(samples->body)["samples"].size(), 2u);
  const json body = {{"sample_id", "text01"}, {"method", "saliency"}};
  auto view = client.Post("/api/attribute", body.dump(), "application/json");
  ASSERT_TRUE(view);
  EXPECT_EQ(view->status, 200);
  EXPECT_EQ(view->body, post(s, "/api/attribute", body).body);
  auto bad = client.Get("/api/samples?limit=-3");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  server.stop();
  runner.join();
}

}  // namespace
}  // namespace attrkit
