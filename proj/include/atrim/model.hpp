#pragma once

#include "atrim/cells.hpp"
#include "atrim/rim.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace atrim {

/// Flat view over a model's named parameter tensors. Entries keep pointers
/// into the owning structs, so a registry is only valid while its model
/// lives and its tensors never resize.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    double* data;
    Index rows, cols;
    bool weight;  // participates in L1 (biases and smoothing scalars do not)
  };

  void add(const std::string& name, Matrix& m, bool weight);
  void add(const std::string& name, Vector& v, bool weight);
  void add(const std::string& name, double& s, bool weight);

  const std::vector<Entry>& entries() const { return entries_; }
  Index size() const { return total_; }

  Vector flatten() const;
  void assign(const Vector& flat);
  double weight_abs_sum() const;
  Vector l1_subgradient() const;  // sign(w) on weight entries, zero elsewhere

 private:
  std::vector<Entry> entries_;
  Index total_ = 0;
};

void register_params(RnnParams& p, const std::string& prefix, ParamRegistry& reg);
void register_params(LstmParams& p, const std::string& prefix, ParamRegistry& reg);
void register_params(AlphaRnnParams& p, const std::string& prefix, ParamRegistry& reg);
void register_params(AlphaTRnnParams& p, const std::string& prefix, ParamRegistry& reg);
void register_params(AttentionParams& p, const std::string& prefix, ParamRegistry& reg);
void register_params(RimParams& p, const std::string& prefix, ParamRegistry& reg);

// ---------------------------------------------------------------------------

/// Model kind plus everything needed to build it for a dataset.
struct ModelConfig {
  std::string kind = "alpha_t_rim";  // rnn | lstm | alpha_rnn | alpha_t_rnn | alpha_t_rim
  int lookback = 10;
  int horizon = 5;
  int features = 1;

  // Baseline cells.
  int units = 20;
  double dropout = 0.0;  // output dropout rate during training
  double alpha = 0.5;    // initial coefficient of the fixed-smoothing cell

  RimConfig rim;

  void validate() const;
};

/// A sequence model mapping one lookback window to the joint horizon
/// prediction, with hand-derived reverse-mode gradients.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  Forecaster(const Forecaster&) = delete;
  Forecaster& operator=(const Forecaster&) = delete;

  virtual std::string kind() const = 0;
  virtual int feature_count() const = 0;
  virtual int horizon() const = 0;

  ParamRegistry& registry() { return registry_; }
  const ParamRegistry& registry() const { return registry_; }

  /// Deterministic prediction, dropout off.
  virtual Vector predict(const Matrix& window) const = 0;

  /// Train-mode forward and backward for one example. Adds the gradient of
  /// mean squared error against the target into grad_acc (registry order)
  /// and returns the prediction.
  virtual Vector accumulate_gradient(const Matrix& window, const Vector& target,
                                     SeededRng& rng, Vector& grad_acc) = 0;

  /// One train-mode pass with its stochastic choices frozen: the returned
  /// loss closure re-runs the same computation at any flat parameter vector,
  /// and analytic_grad is the recorded backward pass at the current one.
  struct FrozenCheck {
    std::function<double(const Vector&)> loss;
    Vector analytic_grad;
  };
  virtual FrozenCheck make_frozen_check(const Matrix& window, const Vector& target,
                                        SeededRng& rng) = 0;

  /// Hook for constraint upkeep after an optimizer update.
  virtual void after_update() {}

 protected:
  Forecaster() = default;
  ParamRegistry registry_;
};

std::unique_ptr<Forecaster> make_forecaster(const ModelConfig& cfg, SeededRng& rng);

/// Mean squared error over the horizon and its gradient in the prediction.
double mse(const Vector& prediction, const Vector& target);
Vector mse_gradient(const Vector& prediction, const Vector& target);
double mae(const Vector& prediction, const Vector& target);

/// Training objective: mse + l1_weight * sum|w| over weight matrices.
double loss_value(const Forecaster& model, const Vector& prediction, const Vector& target,
                  double l1_weight);

/// Worst relative disagreement between the model's recorded backward pass and
/// central finite differences of the same frozen-choice loss, over every
/// parameter. Denominators are floored at 1e-8.
double frozen_gradcheck_error(Forecaster& model, const Matrix& window, const Vector& target,
                              SeededRng& rng);

}  // namespace atrim
