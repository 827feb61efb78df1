// attrkit command-line driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attrkit/app/session.hpp"
#include "attrkit/cli/exit_codes.hpp"
#include "attrkit/cli/render.hpp"
#include "attrkit/exec/memory.hpp"
#include "attrkit/insights/service.hpp"
#include "attrkit/io/demo.hpp"

namespace fs = std::filesystem;
using attrkit::Error;
using attrkit::ErrorCode;
using json = nlohmann::json;

namespace {

struct Artifacts {
  std::string model, weights, dataset;
};

// Flags shared by every command that runs an attribution.
struct RequestFlags {
  Artifacts paths;
  std::optional<std::string> sample;
  std::optional<std::string> request;
  std::optional<std::string> method;
  std::optional<std::string> target;
  std::optional<std::string> baseline;
  std::optional<std::int64_t> steps, n_samples, neuron;
  std::optional<double> stdev;
  std::optional<std::string> layer, window, params;
  std::optional<std::string> nt_type;
  std::optional<std::int64_t> nt_samples;
  std::optional<double> nt_stdev;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> chunk_size, ppe;
  std::optional<int> workers;
  std::string out;
  std::string format = "structured";
};

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::invalid_parameter, message); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Inline JSON, or "@path" naming a file that holds it.
json json_arg(const std::string& flag, const std::string& text) {
  const std::string source = !text.empty() && text[0] == '@' ? read_file(text.substr(1)) : text;
  try {
    return json::parse(source);
  } catch (const json::parse_error& e) {
    config_error(flag + ": not valid JSON (" + e.what() + ")");
  }
}

void add_artifact_flags(CLI::App* cmd, Artifacts& a) {
  cmd->add_option("--model", a.model, "model spec (.attrmodel)")->required();
  cmd->add_option("--weights", a.weights, "weight store (.attrw); defaults to the spec path with .attrw");
  cmd->add_option("--dataset", a.dataset, "dataset directory (.attrds); defaults to the spec path with .attrds");
}

void add_request_flags(CLI::App* cmd, RequestFlags& f, bool exec_flags = true) {
  add_artifact_flags(cmd, f.paths);
  cmd->add_option("--sample", f.sample, "sample id (default: first sample)");
  cmd->add_option("--request", f.request,
                  "request JSON or @file; an earlier output document replays its embedded request");
  cmd->add_option("--method", f.method, "attribution method id");
  cmd->add_option("--target", f.target, "output index, 'none', or LAYER:NEURON");
  cmd->add_option("--baseline", f.baseline, "'zero', a fill value, or baseline JSON / @file");
  cmd->add_option("--steps", f.steps, "integration steps");
  cmd->add_option("--n-samples", f.n_samples, "samples for stochastic methods");
  cmd->add_option("--stdev", f.stdev, "noise standard deviation for gradient_shap");
  cmd->add_option("--layer", f.layer, "layer id for layer, neuron and gradcam methods");
  cmd->add_option("--neuron", f.neuron, "flat neuron index");
  cmd->add_option("--window", f.window, "occlusion window as AxBxC[/SxSxS] (shape / strides)");
  cmd->add_option("--params", f.params, "extra method parameters as a JSON object or @file");
  cmd->add_option("--noise-tunnel", f.nt_type, "smoothgrad, smoothgrad_sq or vargrad");
  cmd->add_option("--nt-samples", f.nt_samples, "noise tunnel samples");
  cmd->add_option("--nt-stdev", f.nt_stdev, "noise tunnel standard deviation");
  cmd->add_option("--seed", f.seed, "random seed");
  if (exec_flags) {
    cmd->add_option("--chunk-size", f.chunk_size, "rows per forward/backward batch");
    cmd->add_option("--perturbations-per-eval", f.ppe, "perturbed copies per forward batch");
    cmd->add_option("--workers", f.workers, "worker threads");
  }
  cmd->add_option("--out", f.out, "output path (default: stdout)");
}

attrkit::Shape parse_dims(const std::string& text) {
  attrkit::Shape out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      config_error("--window: '" + text + "' is not of the form AxBxC");
    }
  }
  return out;
}

struct Loaded {
  attrkit::app::Workspace ws;
  Artifacts paths;
};

Artifacts resolve_paths(Artifacts a) {
  if (!fs::exists(a.model)) config_error("--model: " + a.model + " does not exist");
  if (a.weights.empty()) a.weights = fs::path(a.model).replace_extension(".attrw").string();
  if (!fs::exists(a.weights)) config_error("--weights: " + a.weights + " does not exist");
  if (a.dataset.empty()) {
    const auto guess = fs::path(a.model).replace_extension(".attrds");
    if (fs::is_directory(guess)) a.dataset = guess.string();
  } else if (!fs::is_directory(a.dataset)) {
    config_error("--dataset: " + a.dataset + " is not a directory");
  }
  return a;
}

Loaded load(const Artifacts& flags) {
  auto paths = resolve_paths(flags);
  return {attrkit::app::load_workspace(paths.model, paths.weights, paths.dataset), paths};
}

// The request document with every explicitly given flag applied on top.
struct Assembled {
  json request = json::object();
  std::optional<std::string> sample;
  json metric;
};

Assembled assemble(const RequestFlags& f) {
  Assembled a;
  if (f.request) {
    json doc = json_arg("--request", *f.request);
    if (doc.is_object() && doc.contains("request")) {
      if (doc.contains("sample") && doc["sample"].is_string()) a.sample = doc["sample"].get<std::string>();
      if (doc.contains("metric")) a.metric = doc["metric"];
      doc = doc["request"];
    }
    if (!doc.is_object()) config_error("--request: expected a JSON object");
    a.request = std::move(doc);
  }
  if (f.sample) a.sample = f.sample;
  json& r = a.request;
  if (f.method) r["method"] = *f.method;
  if (!r.contains("method")) config_error("method: required; available: " + attrkit::roster_listing());
  if (f.target) {
    const auto& t = *f.target;
    if (t == "none") {
      r["target"] = nullptr;
    } else if (auto colon = t.find(':'); colon != std::string::npos) {
      try {
        r["target"] = {{"layer", t.substr(0, colon)}, {"neuron", std::stoll(t.substr(colon + 1))}};
      } catch (const std::exception&) {
        config_error("--target: expected LAYER:NEURON, got '" + t + "'");
      }
    } else {
      try {
        std::size_t used = 0;
        r["target"] = std::stoll(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        config_error("--target: expected an integer, 'none' or LAYER:NEURON, got '" + t + "'");
      }
    }
  }
  if (f.baseline) {
    const auto& b = *f.baseline;
    char* end = nullptr;
    const double fill = std::strtod(b.c_str(), &end);
    if (b == "zero") {
      r["baseline"] = {{"kind", "zero"}};
    } else if (!b.empty() && end == b.c_str() + b.size()) {
      r["baseline"] = {{"kind", "fill"}, {"value", fill}};
    } else {
      r["baseline"] = json_arg("--baseline", b);
    }
  }
  if (!r.contains("params")) r["params"] = json::object();
  json& p = r["params"];
  if (f.params) {
    const json extra = json_arg("--params", *f.params);
    if (!extra.is_object()) config_error("--params: expected a JSON object");
    for (const auto& [k, v] : extra.items()) p[k] = v;
  }
  if (f.steps) p["steps"] = *f.steps;
  if (f.n_samples) p["n_samples"] = *f.n_samples;
  if (f.stdev) p["stdev"] = *f.stdev;
  if (f.layer) p["layer"] = *f.layer;
  if (f.neuron) p["neuron"] = *f.neuron;
  if (f.window) {
    const auto slash = f.window->find('/');
    const auto shape = parse_dims(f.window->substr(0, slash));
    const auto strides = slash == std::string::npos ? shape : parse_dims(f.window->substr(slash + 1));
    p["window"] = {{"*", {{"shape", shape}, {"strides", strides}}}};
  }
  if (f.nt_type || f.nt_samples || f.nt_stdev) {
    json nt = p.value("noise_tunnel", json::object());
    if (f.nt_type) nt["type"] = *f.nt_type;
    if (f.nt_samples) nt["n_samples"] = *f.nt_samples;
    if (f.nt_stdev) nt["stdev"] = *f.nt_stdev;
    p["noise_tunnel"] = nt;
  }
  if (f.seed) r["seed"] = *f.seed;
  if (f.chunk_size || f.ppe || f.workers) {
    json e = r.value("exec", json::object());
    if (f.chunk_size) e["chunk_size"] = *f.chunk_size;
    if (f.ppe) e["perturbations_per_eval"] = *f.ppe;
    if (f.workers) e["workers"] = *f.workers;
    r["exec"] = e;
  }
  return a;
}

const attrkit::io::SampleBundle& pick_sample(const attrkit::app::Workspace& ws, const std::optional<std::string>& id) {
  if (ws.samples.empty()) config_error("--sample: the model has no dataset; pass --dataset");
  if (!id) return ws.samples.front();
  if (const auto* s = ws.find_sample(*id)) return *s;
  config_error("--sample: no sample '" + *id + "' in the dataset");
}

void emit(const std::string& out, const std::string& bytes) {
  if (out.empty() || out == "-") {
    std::cout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    std::cout.flush();
    return;
  }
  std::ofstream file(out, std::ios::binary);
  if (!file) config_error("--out: cannot write " + out);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::cerr << "wrote " << out << "\n";
}

std::string structured(const json& doc) { return doc.dump(2) + "\n"; }

int cmd_run(const RequestFlags& f) {
  if (f.format != "structured" && f.format != "html" && f.format != "ppm") {
    config_error("--format: must be one of structured, html, ppm");
  }
  const auto loaded = load(f.paths);
  const auto a = assemble(f);
  const auto& sample = pick_sample(loaded.ws, a.sample);
  const auto outcome = attrkit::app::run_attribution(loaded.ws, sample, a.request);
  if (outcome.result.diagnostics.delta) {
    std::cerr << outcome.result.method << ": completeness delta " << *outcome.result.diagnostics.delta << "\n";
  }
  if (f.format == "html") {
    const auto view = attrkit::app::token_view(loaded.ws.model, sample, outcome.result);
    emit(f.out, attrkit::cli::render_text_html(view.tokens, view.scores,
                                               attrkit::app::class_name(loaded.ws.model, outcome.prediction.predicted)));
  } else if (f.format == "ppm") {
    emit(f.out, attrkit::cli::render_heatmap_ppm(attrkit::app::image_map(loaded.ws.model, outcome.result)));
  } else {
    emit(f.out, structured(outcome.document));
  }
  return attrkit::cli::kExitOk;
}

struct MetricFlags {
  std::optional<std::string> metric, kind;
  std::optional<double> radius, sigma, p;
  std::optional<std::int64_t> samples, batch;
};

int cmd_eval(const RequestFlags& f, const MetricFlags& m) {
  if (f.format != "structured") config_error("--format: eval only writes structured output");
  const auto loaded = load(f.paths);
  auto a = assemble(f);
  json metric = a.metric.is_object() ? a.metric : json::object();
  if (m.metric) metric["metric"] = *m.metric;
  if (m.kind) metric["kind"] = *m.kind;
  if (m.radius) metric["radius"] = *m.radius;
  if (m.sigma) metric["stdev"] = *m.sigma;
  if (m.p) metric["p"] = *m.p;
  if (m.samples) metric["n_samples"] = *m.samples;
  if (m.batch) metric["batch_size"] = *m.batch;
  const auto& sample = pick_sample(loaded.ws, a.sample);
  const auto outcome = attrkit::app::run_metric(loaded.ws, sample, a.request, metric);
  emit(f.out, structured(outcome.document));
  return attrkit::cli::kExitOk;
}

struct BenchFlags {
  std::vector<int> workers{1};
  std::vector<std::int64_t> ppe{1};
  std::vector<std::int64_t> chunks{64};
  int repetitions = 3;
};

int cmd_bench(const RequestFlags& f, const BenchFlags& b) {
  const auto loaded = load(f.paths);
  const auto a = assemble(f);
  const auto& sample = pick_sample(loaded.ws, a.sample);
  emit(f.out, structured(attrkit::app::bench_document(loaded.ws, sample, a.request, b.workers, b.ppe, b.chunks,
                                                      b.repetitions)));
  return attrkit::cli::kExitOk;
}

int cmd_layer_report(const RequestFlags& f) {
  const auto loaded = load(f.paths);
  RequestFlags g = f;
  if (!g.layer) config_error("--layer: required");
  const std::string layer = *g.layer;
  g.layer.reset();
  if (!g.method && !g.request) g.method = "layer_conductance";
  const auto a = assemble(g);
  const auto& sample = pick_sample(loaded.ws, a.sample);
  emit(f.out, structured(attrkit::app::layer_report_document(loaded.ws, sample, layer, a.request)));
  return attrkit::cli::kExitOk;
}

struct ServeFlags {
  Artifacts paths;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
  double timeout = 60.0;
};

int cmd_serve(const ServeFlags& s) {
  auto loaded = load(s.paths);
  attrkit::insights::ServiceOptions options;
  options.model_path = loaded.paths.model;
  options.weights_path = loaded.paths.weights;
  options.dataset_path = loaded.paths.dataset;
  options.ui_dir = s.ui_dir;
  options.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(s.timeout * 1000.0));
  const attrkit::insights::Service service(
      std::make_shared<const attrkit::app::Workspace>(std::move(loaded.ws)), std::move(options));
  std::cerr << "serving " << service.options().model_path << " on http://" << s.host << ":" << s.port << "\n";
  attrkit::insights::serve(service, s.host, s.port);
  return attrkit::cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  attrkit::retain_freed_memory();
  CLI::App app{"attrkit: attribution, metrics and benchmarks for declarative models"};
  app.require_subcommand(1);

  RequestFlags run_flags;
  auto* run = app.add_subcommand("run", "compute an attribution");
  add_request_flags(run, run_flags);
  run->add_option("--format", run_flags.format, "structured, html (text inputs) or ppm (image inputs)");

  RequestFlags eval_flags;
  MetricFlags metric_flags;
  auto* eval = app.add_subcommand("eval", "score an attribution with infidelity or max-sensitivity");
  add_request_flags(eval, eval_flags);
  eval->add_option("--format", eval_flags.format, "structured");
  eval->add_option("--metric", metric_flags.metric, "infidelity (default) or max_sensitivity");
  eval->add_option("--kind", metric_flags.kind, "infidelity perturbation: local (default) or global");
  eval->add_option("--radius", metric_flags.radius, "max-sensitivity L-infinity radius (default 0.03)");
  eval->add_option("--sigma", metric_flags.sigma, "local infidelity noise standard deviation (default 0.03)");
  eval->add_option("--subset-p", metric_flags.p, "global infidelity subset probability (default 0.5)");
  eval->add_option("--metric-samples", metric_flags.samples, "perturbation samples (default 10)");
  eval->add_option("--batch-size", metric_flags.batch, "perturbed copies per forward batch (default 16)");

  RequestFlags bench_flags;
  BenchFlags bench_lists;
  auto* bench = app.add_subcommand("bench", "time a method across scheduling settings");
  add_request_flags(bench, bench_flags, false);
  bench->add_option("--workers", bench_lists.workers, "worker counts, comma separated")->delimiter(',');
  bench->add_option("--perturbations-per-eval", bench_lists.ppe, "batch sizes, comma separated")->delimiter(',');
  bench->add_option("--chunk-size", bench_lists.chunks, "chunk sizes, comma separated")->delimiter(',');
  bench->add_option("--repetitions", bench_lists.repetitions, "timed runs per setting (>= 3)");

  RequestFlags report_flags;
  auto* report = app.add_subcommand("layer-report", "normalized layer conductance next to the final weight row");
  add_request_flags(report, report_flags);

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "serve the Insights API and UI");
  add_artifact_flags(serve, serve_flags.paths);
  serve->add_option("--host", serve_flags.host, "bind address");
  serve->add_option("--port", serve_flags.port, "port");
  serve->add_option("--ui-dir", serve_flags.ui_dir, "directory of built UI assets served at /");
  serve->add_option("--timeout", serve_flags.timeout, "per-request computation timeout in seconds (0: none)");

  std::string demo_dir;
  std::string demo_dtype = "f32";
  auto* demo = app.add_subcommand("demo", "write the bundled demo models and datasets");
  demo->add_option("--out", demo_dir, "output directory")->required();
  demo->add_option("--dtype", demo_dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* methods = app.add_subcommand("methods", "print the method roster with parameter schemas");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : attrkit::cli::kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (eval->parsed()) return cmd_eval(eval_flags, metric_flags);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_lists);
    if (report->parsed()) return cmd_layer_report(report_flags);
    if (serve->parsed()) return cmd_serve(serve_flags);
    if (demo->parsed()) {
      attrkit::io::write_demo_bundle(demo_dir, demo_dtype == "f64" ? attrkit::DType::f64 : attrkit::DType::f32);
      std::cerr << "wrote demo bundle to " << demo_dir << "\n";
      return attrkit::cli::kExitOk;
    }
    if (methods->parsed()) {
      std::cout << attrkit::io::roster_to_json().dump(2) << "\n";
      return attrkit::cli::kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return attrkit::cli::exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return attrkit::cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return attrkit::cli::kExitConfig;
  }
  return attrkit::cli::kExitOk;
}
