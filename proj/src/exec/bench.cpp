#include "attrkit/exec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <tuple>

#include "attrkit/engine/error.hpp"

namespace attrkit {

namespace {

bool same(const AttributionResult& a, const AttributionResult& b) {
  if (a.attributions.size() != b.attributions.size()) return false;
  for (const auto& [name, t] : a.attributions) {
    auto it = b.attributions.find(name);
    if (it == b.attributions.end() || !t.identical(it->second)) return false;
  }
  return true;
}

std::string describe(const ExecPlan& p) {
  return "workers=" + std::to_string(p.workers) + " perturbations_per_eval=" +
         std::to_string(p.perturbations_per_eval) + " chunk_size=" + std::to_string(p.chunk_size);
}

}  // namespace

BenchReport bench(const Model& model, const Features& x, const AttributionRequest& request,
                  std::vector<ExecPlan> plans, int repetitions) {
  return bench(request.method, std::move(plans), repetitions,
               [&](const ExecPlan& plan) { return attribute(model, x, request, plan); });
}

BenchReport bench(const std::string& label, std::vector<ExecPlan> plans, int repetitions,
                  const std::function<AttributionResult(const ExecPlan&)>& run) {
  if (repetitions < 3) throw Error(ErrorCode::invalid_parameter, "bench needs at least 3 repetitions");
  if (plans.empty()) throw Error(ErrorCode::invalid_parameter, "bench needs at least one configuration");
  for (const auto& p : plans) p.validate();
  std::stable_sort(plans.begin(), plans.end(), [](const ExecPlan& a, const ExecPlan& b) {
    return std::tie(a.workers, a.perturbations_per_eval, a.chunk_size) <
           std::tie(b.workers, b.perturbations_per_eval, b.chunk_size);
  });

  BenchReport report{label, {}};
  std::optional<AttributionResult> reference;
  for (const auto& plan : plans) {
    BenchEntry entry{plan, {}, 0.0, 1.0};
    for (int r = 0; r < repetitions; ++r) {
      const auto start = std::chrono::steady_clock::now();
      auto result = run(plan);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      entry.seconds.push_back(elapsed.count());
      if (!reference) {
        reference = std::move(result);
      } else if (!same(*reference, result)) {
        throw Error(ErrorCode::result_divergence,
                    label + " under " + describe(plan) + " differs from " + describe(plans.front()));
      }
    }
    auto sorted = entry.seconds;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    entry.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    report.entries.push_back(std::move(entry));
  }
  for (auto& e : report.entries) e.speedup = report.entries.front().median / e.median;
  return report;
}

nlohmann::json bench_report_to_json(const BenchReport& report) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"workers", e.plan.workers},
                       {"perturbations_per_eval", e.plan.perturbations_per_eval},
                       {"chunk_size", e.plan.chunk_size},
                       {"seconds", e.seconds},
                       {"median_seconds", e.median},
                       {"speedup", e.speedup}});
  }
  return {{"method", report.method}, {"configurations", entries}};
}

}  // namespace attrkit
