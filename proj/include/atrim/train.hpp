#pragma once

#include "atrim/data.hpp"
#include "atrim/hyper.hpp"
#include "atrim/model.hpp"

#include <memory>
#include <string>
#include <vector>

namespace atrim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector.
class Adam {
 public:
  Adam(Index n, AdamConfig cfg = {});

  void step(Vector& params, const Vector& grads);
  int steps_taken() const { return steps_; }

 private:
  AdamConfig cfg_;
  Vector m_, v_;
  int steps_ = 0;
};

struct TrainOptions {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double l1_weight = 0.0;
  bool early_stop = true;
  int patience = 20;
  std::uint64_t seed = 1;
};

struct SplitMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

struct TrainResult {
  SplitMetrics train, validation, test;
  Vector test_mape;  // per step ahead, original price units
  int epochs_run = 0;
  int best_epoch = 0;
  bool diverged = false;
  double seconds = 0.0;
};

/// Average metrics of a model over a windowed split, dropout off.
SplitMetrics evaluate_split(const Forecaster& model, const WindowedDataset& data);

/// Per-step mean absolute percentage error on re-scaled prices: row n of each
/// matrix is one window's horizon. Actuals must be strictly positive.
Vector mape_per_step(const Matrix& predictions, const Matrix& actuals);

/// MAPE of a model over a split after inverting the price transform.
Vector evaluate_mape(const Forecaster& model, const WindowedDataset& data);

/// Mini-batch training with reproducible shuffling, optional early stopping
/// on validation mse (best parameters restored). A non-finite loss aborts
/// with `diverged` set and the last finite state kept.
TrainResult train_model(Forecaster& model, const WindowedDataset& train,
                        const WindowedDataset& validation, const WindowedDataset& test,
                        const TrainOptions& opts);

/// Build a model for `hyper` and train it. The rng consumed for
/// initialization and shuffling derives solely from opts.seed.
struct TrainedModel {
  std::unique_ptr<Forecaster> model;
  ModelConfig config;
  TrainResult result;
};
TrainedModel train(const std::string& kind, const SplitWindows& data, const HyperDict& hyper,
                   const TrainOptions& opts);

/// Expanding-window cross-validation over the training windows: fold i
/// trains on the first i of folds+1 equal segments and validates on segment
/// i+1. Returns the candidate with the lowest mean validation mse, ties
/// resolved by grid order.
struct CvOutcome {
  HyperDict best;
  std::size_t best_index = 0;
  std::vector<double> mean_val_mse;  // per candidate
};

/// Positions cutting n windows into folds+1 equal segments (element i is the
/// start of segment i; the last element is n).
std::vector<std::size_t> cv_fold_boundaries(std::size_t n_windows, int folds);
CvOutcome ts_cross_validate(const std::string& kind, const WindowedDataset& train_windows,
                            const std::vector<HyperDict>& grid, int folds,
                            const TrainOptions& opts);

/// Median of a non-empty sample (midpoint rule for even sizes).
double median(std::vector<double> values);

}  // namespace atrim
