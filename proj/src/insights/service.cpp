#include "attrkit/insights/service.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "attrkit/cli/render.hpp"
#include "attrkit/engine/error.hpp"
#include "attrkit/io/request_json.hpp"

namespace attrkit::insights {

using json = nlohmann::json;

namespace {

constexpr std::int64_t kDefaultLimit = 20;
constexpr std::int64_t kMaxLimit = 1000;

Response json_response(int status, const json& doc) { return {status, "application/json", doc.dump() + "\n"}; }

Response error_response(int status, const std::string& code, const std::string& message) {
  json doc = {{"error", code}, {"message", message}};
  // Schema errors read "<path>: <what>"; expose the path for field-level display.
  if (const auto colon = message.find(": "); colon != std::string::npos) {
    const auto path = message.substr(0, colon);
    if (path.find(' ') == std::string::npos) doc["path"] = path;
  }
  return json_response(status, doc);
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::numeric_failure:
    case ErrorCode::degenerate_zero_vector:
    case ErrorCode::result_divergence:
    case ErrorCode::chunk_failure:
    case ErrorCode::io_error:
      return 500;
    default:
      return 422;
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

// Splits the sample id off a POST body; the rest is the request document.
struct Body {
  std::string sample_id;
  json request;
  json metric;
};

Body parse_body(const std::string& text, bool with_metric) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("body: not valid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) throw Error(ErrorCode::parse_error, "body: expected a JSON object");
  Body b;
  if (!doc.contains("sample_id") || !doc["sample_id"].is_string()) {
    throw Error(ErrorCode::invalid_parameter, "sample_id: expected a string");
  }
  b.sample_id = doc["sample_id"].get<std::string>();
  doc.erase("sample_id");
  if (with_metric) {
    b.metric = doc.value("metric", json::object());
    doc.erase("metric");
  }
  b.request = std::move(doc);
  return b;
}

bool parse_index(const Query& q, const std::string& key, std::int64_t fallback, std::int64_t& out) {
  auto it = q.find(key);
  if (it == q.end()) {
    out = fallback;
    return true;
  }
  try {
    std::size_t used = 0;
    out = std::stoll(it->second, &used);
    return used == it->second.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

const char* kPlaceholder =
    "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attrkit insights</title></head>\n"
    "<body><h1>attrkit insights</h1><p>The UI assets are not installed. Start the server with --ui-dir to serve "
    "them. The API is available under <code>/api/</code>: <a href=\"/api/model\">model</a>, "
    "<a href=\"/api/methods\">methods</a>, <a href=\"/api/samples\">samples</a>.</p></body></html>\n";

}  // namespace

ModalityFractions modality_fractions(const TensorMap& attributions) {
  ModalityFractions out;
  double all = 0.0;
  std::map<std::string, double> mass;
  for (const auto& [name, t] : attributions) {
    double m = 0.0;
    for (double v : t.values()) m += std::abs(v);
    mass[name] = m;
    all += m;
  }
  out.all_zero = !(all > 0.0);
  for (const auto& [name, m] : mass) out.fractions[name] = out.all_zero ? 0.0 : m / all;
  return out;
}

std::string replay_command(const ServiceOptions& options, const std::string& subcommand, const json& replay) {
  std::string cmd = "attrkit " + subcommand + " --model " + shell_quote(options.model_path);
  if (!options.weights_path.empty()) cmd += " --weights " + shell_quote(options.weights_path);
  if (!options.dataset_path.empty()) cmd += " --dataset " + shell_quote(options.dataset_path);
  return cmd + " --request " + shell_quote(replay.dump());
}

Service::Service(std::shared_ptr<const app::Workspace> workspace, ServiceOptions options)
    : ws_(std::move(workspace)), options_(std::move(options)) {}

Response Service::handle(const std::string& method, const std::string& path, const Query& query,
                         const std::string& body) const {
  try {
    if (path.rfind("/api/", 0) == 0) {
      if (method == "GET" && path == "/api/model") return get_model();
      if (method == "GET" && path == "/api/methods") return get_methods();
      if (method == "GET" && path == "/api/samples") return get_samples(query);
      if (method == "POST" && path == "/api/attribute") {
        return with_timeout([self = *this, body] { return self.post_attribute(body); });
      }
      if (method == "POST" && path == "/api/metric") {
        return with_timeout([self = *this, body] { return self.post_metric(body); });
      }
      return error_response(404, "not_found", "no endpoint " + method + " " + path);
    }
    if (method == "GET") return get_static(path);
    return error_response(405, "method_not_allowed", method + " " + path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse_error) return error_response(400, "parse_error", e.message());
    return error_response(status_for(e.code()), std::string(error_code_name(e.code())), e.message());
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

Response Service::with_timeout(std::function<Response()> job) const {
  if (options_.timeout.count() <= 0) return job();
  // Jobs own a copy of the service, so an abandoned run can still finish safely.
  auto task = std::make_shared<std::packaged_task<Response()>>(std::move(job));
  auto result = task->get_future();
  std::thread([task] { (*task)(); }).detach();
  if (result.wait_for(options_.timeout) == std::future_status::timeout) {
    return error_response(504, "timeout",
                          "computation exceeded " + std::to_string(options_.timeout.count()) + " ms");
  }
  return result.get();
}

Response Service::get_model() const {
  const auto& spec = ws_->model.spec();
  json inputs = json::array();
  for (const auto& in : spec.inputs) {
    inputs.push_back({{"name", in.name}, {"shape", in.shape}, {"modality", to_string(in.modality)}});
  }
  return json_response(200, {{"name", spec.name},
                             {"inputs", inputs},
                             {"output", {{"layer", spec.output}, {"size", ws_->model.output_size()}}},
                             {"classes", spec.class_names},
                             {"dtype", ws_->model.dtype() == DType::f32 ? "f32" : "f64"},
                             {"samples", ws_->samples.size()}});
}

Response Service::get_methods() const { return json_response(200, {{"methods", io::roster_to_json()}}); }

Response Service::get_samples(const Query& query) const {
  std::int64_t offset = 0, limit = 0;
  if (!parse_index(query, "offset", 0, offset) || offset < 0) {
    return error_response(400, "bad_paging", "offset: expected a non-negative integer");
  }
  if (!parse_index(query, "limit", kDefaultLimit, limit) || limit < 1 || limit > kMaxLimit) {
    return error_response(400, "bad_paging", "limit: expected an integer in [1, " + std::to_string(kMaxLimit) + "]");
  }
  const auto total = static_cast<std::int64_t>(ws_->samples.size());
  json samples = json::array();
  for (std::int64_t i = offset; i < total && i < offset + limit; ++i) {
    const auto& s = ws_->samples[static_cast<std::size_t>(i)];
    json modalities = json::array();
    for (const auto& [name, t] : s.modalities) {
      json m = {{"name", name}, {"shape", t.shape()}};
      if (auto info = s.info.find(name); info != s.info.end()) {
        m["kind"] = to_string(info->second.kind);
        if (!info->second.tokens.empty()) m["tokens"] = info->second.tokens;
        if (!info->second.feature_names.empty()) m["feature_names"] = info->second.feature_names;
      }
      modalities.push_back(std::move(m));
    }
    json entry = {{"id", s.id}, {"modalities", modalities}};
    entry["label"] = s.label ? json(*s.label) : json(nullptr);
    samples.push_back(std::move(entry));
  }
  return json_response(200, {{"total", total}, {"offset", offset}, {"limit", limit}, {"samples", samples}});
}

Response Service::post_attribute(const std::string& text) const {
  const auto body = parse_body(text, false);
  const auto* sample = ws_->find_sample(body.sample_id);
  if (!sample) return error_response(404, "unknown_sample", "sample_id: no sample '" + body.sample_id + "'");
  const auto outcome = app::run_attribution(*ws_, *sample, body.request);
  const auto& model = ws_->model;
  const auto& r = outcome.result;

  // Per-input payloads; a layer map (GradCAM) is shown on the image it explains.
  TensorMap per_input;
  bool layer_keyed = false;
  for (const auto& [name, t] : r.attributions) {
    bool is_input = false;
    for (const auto& in : model.spec().inputs) is_input = is_input || in.name == name;
    layer_keyed = layer_keyed || !is_input;
  }
  std::string image_input;
  for (const auto& in : model.spec().inputs) {
    if (in.modality == Modality::image) image_input = in.name;
  }
  if (!layer_keyed) {
    per_input = r.attributions;
  } else if (!image_input.empty()) {
    per_input.emplace(image_input, app::image_map(model, r));
  } else {
    throw Error(ErrorCode::invalid_parameter,
                "method: " + r.method + " attributes an internal layer; use the CLI for layer results");
  }

  const auto fractions = modality_fractions(per_input);
  double sum = 0.0;
  for (const auto& [name, f] : fractions.fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::numeric_failure, "negative modality fraction for " + name);
    sum += f;
  }
  if (!fractions.all_zero && std::abs(sum - 1.0) > 1e-12) {
    throw Error(ErrorCode::numeric_failure, "modality fractions sum to " + std::to_string(sum));
  }

  json modalities = json::array();
  for (const auto& in : model.spec().inputs) {
    auto it = per_input.find(in.name);
    if (it == per_input.end()) continue;
    json m = {{"name", in.name}, {"kind", to_string(in.modality)}, {"fraction", fractions.fractions.at(in.name)}};
    const auto info = sample->info.find(in.name);
    switch (in.modality) {
      case Modality::text: {
        AttributionResult only{r.method, {{in.name, it->second}}, {}};
        const auto view = app::token_view(model, *sample, only);
        m["tokens"] = view.tokens;
        m["values"] = view.scores;
        break;
      }
      case Modality::image: {
        const Tensor map = it->second.rank() == 2 ? it->second : cli::channel_abs_sum(it->second);
        m["heatmap"] = {{"format", "ppm"},
                        {"height", map.shape()[0]},
                        {"width", map.shape()[1]},
                        {"base64", httplib::detail::base64_encode(cli::render_heatmap_ppm(map))}};
        m["values"] = map.values();
        break;
      }
      case Modality::tabular: {
        std::vector<std::string> names;
        if (info != sample->info.end()) names = info->second.feature_names;
        if (names.size() != it->second.size()) {
          names.clear();
          for (std::size_t i = 0; i < it->second.size(); ++i) names.push_back(in.name + "[" + std::to_string(i) + "]");
        }
        m["names"] = names;
        m["values"] = it->second.values();
        break;
      }
    }
    modalities.push_back(std::move(m));
  }

  const auto& echo = outcome.document.at("request");
  json target = {{"class", echo.at("target")}, {"score", nullptr}};
  if (echo.at("target").is_number_integer()) {
    const auto t = echo.at("target").get<std::int64_t>();
    target["label"] = app::class_name(model, t);
    if (t >= 0 && static_cast<std::size_t>(t) < outcome.prediction.outputs.size()) {
      target["score"] = outcome.prediction.outputs[static_cast<std::size_t>(t)];
    }
  } else if (model.scalar_output()) {
    target["score"] = outcome.prediction.outputs[0];
  }
  const json replay = {{"sample", sample->id}, {"request", echo}};
  return json_response(200, {{"sample_id", sample->id},
                             {"method", r.method},
                             {"request", echo},
                             {"seed", echo.at("seed")},
                             {"target", target},
                             {"prediction", outcome.document.at("prediction")},
                             {"modalities", modalities},
                             {"aggregate", {{"fractions", fractions.fractions}, {"all_zero", fractions.all_zero}}},
                             {"diagnostics", io::diagnostics_to_json(r.diagnostics)},
                             {"replay", replay_command(options_, "run", replay)}});
}

Response Service::post_metric(const std::string& text) const {
  const auto body = parse_body(text, true);
  const auto* sample = ws_->find_sample(body.sample_id);
  if (!sample) return error_response(404, "unknown_sample", "sample_id: no sample '" + body.sample_id + "'");
  const auto outcome = app::run_metric(*ws_, *sample, body.request, body.metric);
  const auto& doc = outcome.document;
  const json replay = {{"sample", sample->id}, {"request", doc.at("request")}, {"metric", doc.at("metric")}};
  return json_response(200, {{"sample_id", sample->id},
                             {"request", doc.at("request")},
                             {"metric", doc.at("metric")},
                             {"result", doc.at("result")},
                             {"replay", replay_command(options_, "eval", replay)}});
}

Response Service::get_static(const std::string& path) const {
  if (options_.ui_dir.empty()) {
    if (path == "/" || path == "/index.html") return {200, "text/html; charset=utf-8", kPlaceholder};
    return error_response(404, "not_found", path);
  }
  const std::string rel = path == "/" ? "index.html" : path.substr(1);
  if (rel.find("..") != std::string::npos) return error_response(404, "not_found", path);
  const auto file = options_.ui_dir / rel;
  std::ifstream in(file, std::ios::binary);
  if (!in || std::filesystem::is_directory(file)) return error_response(404, "not_found", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {200, content_type_for(file), ss.str()};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>()) {
  const auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    Query query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = service.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  const auto timeout = std::chrono::duration_cast<std::chrono::seconds>(service.options().timeout).count();
  if (timeout > 0) {
    impl_->server.set_read_timeout(timeout, 0);
    impl_->server.set_write_timeout(timeout + 1, 0);
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() {
  if (!impl_->server.listen_after_bind()) throw Error(ErrorCode::io_error, "server stopped unexpectedly");
}

void HttpServer::stop() { impl_->server.stop(); }

void serve(const Service& service, const std::string& host, int port) {
  HttpServer server(service);
  server.bind(host, port);
  server.run();
}

}  // namespace attrkit::insights
