#pragma once

#include "atrim/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace atrim {

struct ModelReport {
  std::string model;
  SplitMetrics train, validation, test;
  std::vector<double> test_mape;  // per step ahead, re-scaled prices
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  bool diverged = false;
  double seconds = 0.0;  // wall clock, kept out of the canonical form
};

struct ExperimentReport {
  std::string dataset;
  int lookback = 0;
  int horizon = 0;
  int features = 0;
  std::vector<ModelReport> models;
};

ModelReport make_model_report(const std::string& name, const TrainResult& r, std::uint64_t seed);

/// Machine-readable emission. The canonical form omits wall-clock timings so
/// that identical seeds yield byte-identical text.
std::string report_to_json(const ExperimentReport& report, bool include_timings = true);
ExperimentReport report_from_json(const std::string& text);

/// Two tables: per-split mse/mae per model, then per-step MAPE with one row
/// per horizon step and one column per model, lowest value per row flagged.
std::string render_report(const ExperimentReport& report);

}  // namespace atrim
