#include "atrim/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace atrim {

Adam::Adam(Index n, AdamConfig cfg)
    : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam: parameter/gradient size mismatch");
  }
  ++steps_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grads;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(cfg_.beta1, steps_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, steps_);
  params -= (cfg_.learning_rate / c1) *
            m_.cwiseQuotient(((v_ / c2).cwiseSqrt().array() + cfg_.epsilon).matrix());
}

SplitMetrics evaluate_split(const Forecaster& model, const WindowedDataset& data) {
  SplitMetrics out;
  if (data.windows.empty()) return out;
  for (const WindowPair& w : data.windows) {
    const Vector pred = model.predict(w.input);
    out.mse += mse(pred, w.target);
    out.mae += mae(pred, w.target);
  }
  out.mse /= static_cast<double>(data.size());
  out.mae /= static_cast<double>(data.size());
  return out;
}

Vector mape_per_step(const Matrix& predictions, const Matrix& actuals) {
  if (predictions.rows() != actuals.rows() || predictions.cols() != actuals.cols()) {
    throw ShapeError("mape: predictions " + shape_str(predictions) + " against actuals " +
                     shape_str(actuals));
  }
  if (predictions.rows() == 0) throw ShapeError("mape: no rows");
  if ((actuals.array() <= 0.0).any()) {
    throw std::invalid_argument("mape: actuals must be strictly positive");
  }
  Vector out(predictions.cols());
  for (Index s = 0; s < predictions.cols(); ++s) {
    out(s) = 100.0 *
             ((actuals.col(s) - predictions.col(s)).cwiseAbs().cwiseQuotient(actuals.col(s))).mean();
  }
  return out;
}

Vector evaluate_mape(const Forecaster& model, const WindowedDataset& data) {
  if (data.windows.empty()) return Vector::Zero(model.horizon());
  Matrix pred(static_cast<Index>(data.size()), model.horizon());
  Matrix actual(static_cast<Index>(data.size()), model.horizon());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector z = model.predict(data.windows[i].input);
    for (int s = 0; s < model.horizon(); ++s) {
      pred(static_cast<Index>(i), s) = rescale(z(s), data.stats);
    }
    actual.row(static_cast<Index>(i)) = data.windows[i].target_raw.transpose();
  }
  return mape_per_step(pred, actual);
}

TrainResult train_model(Forecaster& model, const WindowedDataset& train,
                        const WindowedDataset& validation, const WindowedDataset& test,
                        const TrainOptions& opts) {
  if (train.windows.empty()) throw std::invalid_argument("train: empty training set");
  if (opts.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");

  const auto started = std::chrono::steady_clock::now();
  SeededRng rng(opts.seed);
  Adam adam(model.registry().size(), AdamConfig{opts.learning_rate, 0.9, 0.999, 1e-8});

  TrainResult result;
  Vector best_params = model.registry().flatten();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    bool finite = true;

    for (std::size_t at = 0; at < order.size() && finite; at += opts.batch_size) {
      const std::size_t batch_end = std::min(at + opts.batch_size, order.size());
      const double batch_n = static_cast<double>(batch_end - at);

      Vector grads = Vector::Zero(model.registry().size());
      double batch_loss = 0.0;
      for (std::size_t i = at; i < batch_end; ++i) {
        const WindowPair& w = train.windows[order[i]];
        const Vector pred = model.accumulate_gradient(w.input, w.target, rng, grads);
        batch_loss += mse(pred, w.target);
      }
      grads /= batch_n;
      batch_loss /= batch_n;
      if (opts.l1_weight > 0.0) {
        grads += opts.l1_weight * model.registry().l1_subgradient();
        batch_loss += opts.l1_weight * model.registry().weight_abs_sum();
      }
      if (!std::isfinite(batch_loss) || !grads.allFinite()) {
        finite = false;
        break;
      }
      Vector params = model.registry().flatten();
      adam.step(params, grads);
      model.registry().assign(params);
      model.after_update();
      epoch_loss += batch_loss * batch_n;
    }

    if (!finite) {
      result.diverged = true;
      break;
    }
    result.epochs_run = epoch + 1;

    const double val_mse =
        validation.windows.empty() ? epoch_loss : evaluate_split(model, validation).mse;
    if (val_mse < best_val) {
      best_val = val_mse;
      best_params = model.registry().flatten();
      result.best_epoch = epoch + 1;
      since_best = 0;
    } else if (opts.early_stop && ++since_best >= opts.patience) {
      break;
    }
  }

  model.registry().assign(best_params);
  result.train = evaluate_split(model, train);
  result.validation = evaluate_split(model, validation);
  result.test = evaluate_split(model, test);
  result.test_mape = test.windows.empty() ? Vector::Zero(model.horizon())
                                          : evaluate_mape(model, test);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

TrainedModel train(const std::string& kind, const SplitWindows& data, const HyperDict& hyper,
                   const TrainOptions& opts) {
  TrainedModel out;
  out.config = hyper_to_config(kind, hyper, data.train.lookback, data.train.features,
                               data.train.horizon);
  SeededRng init_rng(opts.seed);
  out.model = make_forecaster(out.config, init_rng);
  TrainOptions o = opts;
  if (kind != "alpha_t_rim" && o.l1_weight == 0.0) o.l1_weight = hyper.l1_weight;
  out.result = train_model(*out.model, data.train, data.validation, data.test, o);
  return out;
}

std::vector<std::size_t> cv_fold_boundaries(std::size_t n_windows, int folds) {
  if (folds < 2) throw std::invalid_argument("cross-validation: need at least two folds");
  const std::size_t segments = static_cast<std::size_t>(folds) + 1;
  if (n_windows < segments) {
    throw std::invalid_argument("cross-validation: " + std::to_string(n_windows) +
                                " windows cannot form " + std::to_string(segments) + " segments");
  }
  std::vector<std::size_t> bounds(segments + 1);
  for (std::size_t i = 0; i <= segments; ++i) bounds[i] = i * n_windows / segments;
  return bounds;
}

CvOutcome ts_cross_validate(const std::string& kind, const WindowedDataset& train_windows,
                            const std::vector<HyperDict>& grid, int folds,
                            const TrainOptions& opts) {
  if (grid.empty()) throw std::invalid_argument("cross-validation: empty grid");
  const std::vector<std::size_t> bounds = cv_fold_boundaries(train_windows.size(), folds);
  auto boundary = [&](std::size_t i) { return bounds[i]; };
  auto slice = [&](std::size_t from, std::size_t to) {
    WindowedDataset d;
    d.stats = train_windows.stats;
    d.lookback = train_windows.lookback;
    d.horizon = train_windows.horizon;
    d.features = train_windows.features;
    d.windows.assign(train_windows.windows.begin() + from, train_windows.windows.begin() + to);
    return d;
  };

  CvOutcome out;
  out.mean_val_mse.assign(grid.size(), 0.0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double total = 0.0;
    for (int f = 1; f <= folds; ++f) {
      const WindowedDataset fold_train = slice(0, boundary(f));
      const WindowedDataset fold_val = slice(boundary(f), boundary(f + 1));
      const ModelConfig cfg = hyper_to_config(kind, grid[c], train_windows.lookback,
                                              train_windows.features, train_windows.horizon);
      SeededRng init_rng(opts.seed);
      auto model = make_forecaster(cfg, init_rng);
      TrainOptions o = opts;
      if (kind != "alpha_t_rim" && o.l1_weight == 0.0) o.l1_weight = grid[c].l1_weight;
      const TrainResult r = train_model(*model, fold_train, fold_val, fold_val, o);
      total += r.validation.mse;
    }
    out.mean_val_mse[c] = total / folds;
    if (c == 0 || out.mean_val_mse[c] < out.mean_val_mse[out.best_index]) {
      out.best_index = c;
    }
  }
  out.best = grid[out.best_index];
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace atrim
