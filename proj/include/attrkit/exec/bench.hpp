#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attrkit/attribution/registry.hpp"

namespace attrkit {

struct BenchEntry {
  ExecPlan plan;
  std::vector<double> seconds;  // one wall-clock time per repetition
  double median = 0.0;
  double speedup = 1.0;         // first entry's median over this one's
};

struct BenchReport {
  std::string method;
  std::vector<BenchEntry> entries;  // ascending by workers, then perturbations_per_eval, then chunk_size
};

/// Times `request` under every plan. Before reporting, every repetition of
/// every plan must reproduce the first result bit for bit; otherwise throws
/// ResultDivergence. Needs at least 3 repetitions.
BenchReport bench(const Model& model, const Features& x, const AttributionRequest& request,
                  std::vector<ExecPlan> plans, int repetitions);

// Same harness around any runner; `label` names the method in the report.
BenchReport bench(const std::string& label, std::vector<ExecPlan> plans, int repetitions,
                  const std::function<AttributionResult(const ExecPlan&)>& run);

nlohmann::json bench_report_to_json(const BenchReport& report);

}  // namespace attrkit
