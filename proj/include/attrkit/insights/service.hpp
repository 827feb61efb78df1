#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "attrkit/app/session.hpp"

namespace attrkit::insights {

struct ServiceOptions {
  // Artifact paths, quoted verbatim in replay commands.
  std::string model_path, weights_path, dataset_path;
  std::filesystem::path ui_dir;  // static assets served at "/"; empty for a placeholder page
  std::chrono::milliseconds timeout{60000};  // per computation; zero waits forever
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::map<std::string, std::string>;

/// Request handling for the Insights endpoints, independent of any socket:
///
///     GET  /api/model
///     GET  /api/methods
///     GET  /api/samples?offset=0&limit=20
///     POST /api/attribute  {"sample_id", "method", "target", "baseline", "params", "seed", "exec"}
///     POST /api/metric     same fields plus "metric": {...}
///
/// Responses are pure functions of the loaded artifacts and the request.
class Service {
 public:
  Service(std::shared_ptr<const app::Workspace> workspace, ServiceOptions options);

  Response handle(const std::string& method, const std::string& path, const Query& query,
                  const std::string& body) const;

  const ServiceOptions& options() const noexcept { return options_; }

 private:
  Response get_model() const;
  Response get_methods() const;
  Response get_samples(const Query& query) const;
  Response post_attribute(const std::string& body) const;
  Response post_metric(const std::string& body) const;
  Response get_static(const std::string& path) const;
  Response with_timeout(std::function<Response()> job) const;

  std::shared_ptr<const app::Workspace> ws_;
  ServiceOptions options_;
};

/// Aggregate importance of each attributed input: sum |phi_m| / sum |phi|.
/// All fractions are zero, and `all_zero` is set, when every attribution is zero.
struct ModalityFractions {
  std::map<std::string, double> fractions;
  bool all_zero = false;
};

ModalityFractions modality_fractions(const TensorMap& attributions);

std::string replay_command(const ServiceOptions& options, const std::string& subcommand, const nlohmann::json& replay);

/// HTTP/1.1 front end for a Service.
class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();

  // Binds without serving; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void run();   // serves until stop(); blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Serves `service` until the process stops. Blocks.
void serve(const Service& service, const std::string& host, int port);

}  // namespace attrkit::insights
