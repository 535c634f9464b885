#include "atrim/model.hpp"

#include <algorithm>
#include <cmath>

namespace atrim {

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void ParamRegistry::add(const std::string& name, Matrix& m, bool weight) {
  entries_.push_back({name, m.data(), m.rows(), m.cols(), weight});
  total_ += m.size();
}

void ParamRegistry::add(const std::string& name, Vector& v, bool weight) {
  entries_.push_back({name, v.data(), v.size(), 1, weight});
  total_ += v.size();
}

void ParamRegistry::add(const std::string& name, double& s, bool weight) {
  entries_.push_back({name, &s, 1, 1, weight});
  total_ += 1;
}

Vector ParamRegistry::flatten() const {
  Vector out(total_);
  Index at = 0;
  for (const Entry& e : entries_) {
    const Index n = e.rows * e.cols;
    out.segment(at, n) = Eigen::Map<const Vector>(e.data, n);
    at += n;
  }
  return out;
}

void ParamRegistry::assign(const Vector& flat) {
  if (flat.size() != total_) {
    throw ShapeError("registry assign: " + std::to_string(flat.size()) + " values against " +
                     std::to_string(total_) + " parameters");
  }
  Index at = 0;
  for (const Entry& e : entries_) {
    const Index n = e.rows * e.cols;
    Eigen::Map<Vector>(e.data, n) = flat.segment(at, n);
    at += n;
  }
}

double ParamRegistry::weight_abs_sum() const {
  double total = 0.0;
  for (const Entry& e : entries_) {
    if (!e.weight) continue;
    total += Eigen::Map<const Vector>(e.data, e.rows * e.cols).cwiseAbs().sum();
  }
  return total;
}

Vector ParamRegistry::l1_subgradient() const {
  Vector out = Vector::Zero(total_);
  Index at = 0;
  for (const Entry& e : entries_) {
    const Index n = e.rows * e.cols;
    if (e.weight) {
      const auto v = Eigen::Map<const Vector>(e.data, n);
      out.segment(at, n) = v.array().sign();
    }
    at += n;
  }
  return out;
}

void register_params(RnnParams& p, const std::string& prefix, ParamRegistry& reg) {
  reg.add(prefix + "w_in", p.w_in, true);
  reg.add(prefix + "u_rec", p.u_rec, true);
  reg.add(prefix + "b", p.b, false);
}

void register_params(LstmParams& p, const std::string& prefix, ParamRegistry& reg) {
  reg.add(prefix + "w_i", p.w_i, true);
  reg.add(prefix + "w_f", p.w_f, true);
  reg.add(prefix + "w_g", p.w_g, true);
  reg.add(prefix + "w_o", p.w_o, true);
  reg.add(prefix + "u_i", p.u_i, true);
  reg.add(prefix + "u_f", p.u_f, true);
  reg.add(prefix + "u_g", p.u_g, true);
  reg.add(prefix + "u_o", p.u_o, true);
  reg.add(prefix + "b_i", p.b_i, false);
  reg.add(prefix + "b_f", p.b_f, false);
  reg.add(prefix + "b_g", p.b_g, false);
  reg.add(prefix + "b_o", p.b_o, false);
}

void register_params(AlphaRnnParams& p, const std::string& prefix, ParamRegistry& reg) {
  register_params(p.cell, prefix + "cell.", reg);
  reg.add(prefix + "alpha", p.alpha, false);
}

void register_params(AlphaTRnnParams& p, const std::string& prefix, ParamRegistry& reg) {
  register_params(p.cell, prefix + "cell.", reg);
  reg.add(prefix + "gate.w_x", p.gate.w_x, true);
  reg.add(prefix + "gate.u_mem", p.gate.u_mem, true);
  reg.add(prefix + "gate.b", p.gate.b, false);
}

void register_params(AttentionParams& p, const std::string& prefix, ParamRegistry& reg) {
  for (std::size_t k = 0; k < p.w_query.size(); ++k) {
    reg.add(prefix + "w_query." + std::to_string(k), p.w_query[k], true);
  }
  reg.add(prefix + "w_key", p.w_key, true);
  reg.add(prefix + "w_value", p.w_value, true);
  if (p.has_output_projection()) reg.add(prefix + "w_out", p.w_out, true);
}

void register_params(RimParams& p, const std::string& prefix, ParamRegistry& reg) {
  for (std::size_t k = 0; k < p.cells.size(); ++k) {
    register_params(p.cells[k], prefix + "module." + std::to_string(k) + ".", reg);
  }
  register_params(p.input_attn, prefix + "input_attn.", reg);
  register_params(p.comm_attn, prefix + "comm_attn.", reg);
  reg.add(prefix + "readout.w", p.w_readout, true);
  reg.add(prefix + "readout.b", p.b_readout, false);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double mse(const Vector& prediction, const Vector& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError("mse: " + std::to_string(prediction.size()) + " predictions against " +
                     std::to_string(target.size()) + " targets");
  }
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Vector mse_gradient(const Vector& prediction, const Vector& target) {
  return 2.0 / static_cast<double>(prediction.size()) * (prediction - target);
}

double mae(const Vector& prediction, const Vector& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError("mae: size mismatch");
  }
  return (prediction - target).cwiseAbs().sum() / static_cast<double>(prediction.size());
}

double loss_value(const Forecaster& model, const Vector& prediction, const Vector& target,
                  double l1_weight) {
  return mse(prediction, target) + l1_weight * model.registry().weight_abs_sum();
}

// ---------------------------------------------------------------------------
// Cell-based forecasters
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (kind != "rnn" && kind != "lstm" && kind != "alpha_rnn" && kind != "alpha_t_rnn" &&
      kind != "alpha_t_rim") {
    throw std::invalid_argument("unknown model kind '" + kind + "'");
  }
  if (lookback < 1 || horizon < 1 || features < 1) {
    throw std::invalid_argument("model config: bad window geometry");
  }
  if (kind == "alpha_t_rim") {
    RimConfig r = rim;
    r.lookback = lookback;
    r.horizon = horizon;
    r.feature_count = features;
    r.validate();
  } else {
    if (units < 1) throw std::invalid_argument("model config: units must be positive");
    if (dropout < 0.0 || dropout >= 1.0) {
      throw std::invalid_argument("model config: dropout rate must lie in [0, 1)");
    }
    if (kind == "alpha_rnn" && !(alpha > 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("model config: alpha must lie in (0, 1]");
    }
  }
}

namespace {

template <class P>
struct CellTraits;

template <>
struct CellTraits<RnnParams> {
  static constexpr const char* kind = "rnn";
  static constexpr bool has_cell_memory = false;
  static RnnParams make(const ModelConfig& c, SeededRng& rng) {
    return make_rnn_params(c.units, c.features, rng);
  }
};

template <>
struct CellTraits<LstmParams> {
  static constexpr const char* kind = "lstm";
  static constexpr bool has_cell_memory = true;
  static LstmParams make(const ModelConfig& c, SeededRng& rng) {
    return make_lstm_params(c.units, c.features, rng);
  }
};

template <>
struct CellTraits<AlphaRnnParams> {
  static constexpr const char* kind = "alpha_rnn";
  static constexpr bool has_cell_memory = false;
  static AlphaRnnParams make(const ModelConfig& c, SeededRng& rng) {
    return make_alpha_rnn_params(c.units, c.features, c.alpha, rng);
  }
};

template <>
struct CellTraits<AlphaTRnnParams> {
  static constexpr const char* kind = "alpha_t_rnn";
  static constexpr bool has_cell_memory = false;
  static AlphaTRnnParams make(const ModelConfig& c, SeededRng& rng) {
    return make_alpha_t_rnn_params(c.units, c.features, rng);
  }
};

CellState dispatch_step(const CellState& s, const Vector& x, const RnnParams& p, StepTape& t) {
  return rnn_step(s, x, p, t);
}
CellState dispatch_step(const CellState& s, const Vector& x, const LstmParams& p, StepTape& t) {
  return lstm_step(s, x, p, t);
}
CellState dispatch_step(const CellState& s, const Vector& x, const AlphaRnnParams& p, StepTape& t) {
  return alpha_rnn_step(s, x, p, t);
}
CellState dispatch_step(const CellState& s, const Vector& x, const AlphaTRnnParams& p, StepTape& t) {
  return alpha_t_step(s, x, p, t);
}

Vector dispatch_backward(const StepTape& t, const RnnParams& p, BackState& b, RnnParams& g) {
  return rnn_step_backward(t, p, b, g);
}
Vector dispatch_backward(const StepTape& t, const LstmParams& p, BackState& b, LstmParams& g) {
  return lstm_step_backward(t, p, b, g);
}
Vector dispatch_backward(const StepTape& t, const AlphaRnnParams& p, BackState& b, AlphaRnnParams& g) {
  return alpha_rnn_step_backward(t, p, b, g);
}
Vector dispatch_backward(const StepTape& t, const AlphaTRnnParams& p, BackState& b, AlphaTRnnParams& g) {
  return alpha_t_step_backward(t, p, b, g);
}

/// Single recurrent cell unrolled over the window, inverted dropout on the
/// final state during training, affine readout to the joint horizon.
template <class P>
class CellForecaster final : public Forecaster {
 public:
  CellForecaster(const ModelConfig& cfg, SeededRng& rng)
      : cfg_(cfg),
        params_(CellTraits<P>::make(cfg, rng)),
        w_out_(glorot_uniform(cfg.horizon, cfg.units, rng)),
        b_out_(Vector::Zero(cfg.horizon)) {
    register_params(params_, "cell.", registry_);
    registry_.add("readout.w", w_out_, true);
    registry_.add("readout.b", b_out_, false);
  }

  std::string kind() const override { return CellTraits<P>::kind; }
  int feature_count() const override { return cfg_.features; }
  int horizon() const override { return cfg_.horizon; }

  void after_update() override {
    if constexpr (std::is_same_v<P, AlphaRnnParams>) {
      params_.alpha = std::clamp(params_.alpha, 1e-6, 1.0);
    }
  }

  Vector predict(const Matrix& window) const override {
    CellState s = run(window, nullptr);
    return w_out_ * s.h + b_out_;
  }

  Vector accumulate_gradient(const Matrix& window, const Vector& target, SeededRng& rng,
                             Vector& grad_acc) override {
    Tape tape;
    const Vector pred = forward_train(window, rng, tape);
    backward(tape, mse_gradient(pred, target), grad_acc);
    return pred;
  }

  FrozenCheck make_frozen_check(const Matrix& window, const Vector& target,
                                SeededRng& rng) override {
    auto tape = std::make_shared<Tape>();
    const Vector pred = forward_train(window, rng, *tape);

    Vector grad = Vector::Zero(registry_.size());
    backward(*tape, mse_gradient(pred, target), grad);

    FrozenCheck check;
    check.analytic_grad = std::move(grad);
    check.loss = [this, window, target, tape](const Vector& theta) {
      const Vector saved = registry_.flatten();
      registry_.assign(theta);
      CellState s = run(window, nullptr);
      const Vector h = s.h.cwiseProduct(tape->mask);
      const double value = mse(w_out_ * h + b_out_, target);
      registry_.assign(saved);
      return value;
    };
    return check;
  }

 private:
  struct Tape {
    std::vector<StepTape> steps;
    Vector mask;  // readout dropout
    Vector h_dropped;
  };

  CellState run(const Matrix& window, std::vector<StepTape>* steps) const {
    if (window.cols() != cfg_.features) {
      throw ShapeError("forecaster: window " + shape_str(window) + " against " +
                       std::to_string(cfg_.features) + " features");
    }
    CellState s = zero_state(cfg_.units, CellTraits<P>::has_cell_memory);
    StepTape scratch;
    for (Index t = 0; t < window.rows(); ++t) {
      StepTape& tape = steps ? (*steps)[t] : scratch;
      s = dispatch_step(s, window.row(t).transpose(), params_, tape);
    }
    return s;
  }

  Vector forward_train(const Matrix& window, SeededRng& rng, Tape& tape) {
    tape.steps.resize(window.rows());
    CellState s = run(window, &tape.steps);
    const double keep = 1.0 - cfg_.dropout;
    tape.mask = dropout_mask(cfg_.units, 1, keep, rng).col(0);
    tape.h_dropped = s.h.cwiseProduct(tape.mask);
    return w_out_ * tape.h_dropped + b_out_;
  }

  void backward(const Tape& tape, const Vector& g_pred, Vector& grad_acc) {
    P grads = zeros_like(params_);
    Matrix g_w_out = g_pred * tape.h_dropped.transpose();
    Vector g_b_out = g_pred;

    BackState back = zero_back_state(cfg_.units, CellTraits<P>::has_cell_memory);
    back.g_h = (w_out_.transpose() * g_pred).cwiseProduct(tape.mask);
    for (std::size_t t = tape.steps.size(); t-- > 0;) {
      dispatch_backward(tape.steps[t], params_, back, grads);
    }

    ParamRegistry flat;
    register_params(grads, "cell.", flat);
    flat.add("readout.w", g_w_out, true);
    flat.add("readout.b", g_b_out, false);
    grad_acc += flat.flatten();
  }

  ModelConfig cfg_;
  P params_;
  Matrix w_out_;
  Vector b_out_;
};

class RimForecaster final : public Forecaster {
 public:
  RimForecaster(const ModelConfig& cfg, SeededRng& rng)
      : cfg_(cfg), net_(resolved_rim_config(cfg), rng) {
    register_params(net_.params(), "", registry_);
  }

  static RimConfig resolved_rim_config(const ModelConfig& cfg) {
    RimConfig r = cfg.rim;
    r.lookback = cfg.lookback;
    r.horizon = cfg.horizon;
    r.feature_count = cfg.features;
    return r;
  }

  std::string kind() const override { return "alpha_t_rim"; }
  int feature_count() const override { return cfg_.features; }
  int horizon() const override { return cfg_.horizon; }

  const RimNetwork& network() const { return net_; }

  Vector predict(const Matrix& window) const override {
    return net_.forward(window, RunMode::eval, nullptr);
  }

  Vector accumulate_gradient(const Matrix& window, const Vector& target, SeededRng& rng,
                             Vector& grad_acc) override {
    RimTape tape;
    const Vector pred = net_.forward(window, RunMode::train, &rng, &tape);
    RimParams grads = net_.backward(tape, mse_gradient(pred, target));
    ParamRegistry flat;
    register_params(grads, "", flat);
    grad_acc += flat.flatten();
    return pred;
  }

  FrozenCheck make_frozen_check(const Matrix& window, const Vector& target,
                                SeededRng& rng) override {
    RimTape tape;
    const Vector pred = net_.forward(window, RunMode::train, &rng, &tape);
    RimParams grads = net_.backward(tape, mse_gradient(pred, target));
    ParamRegistry flat;
    register_params(grads, "", flat);

    auto plans = std::make_shared<std::vector<RimStepPlan>>(net_.plans_of(tape));
    FrozenCheck check;
    check.analytic_grad = flat.flatten();
    check.loss = [this, window, target, plans](const Vector& theta) {
      const Vector saved = registry_.flatten();
      registry_.assign(theta);
      const Vector p = net_.forward(window, RunMode::train, nullptr, nullptr, plans.get());
      const double value = mse(p, target);
      registry_.assign(saved);
      return value;
    };
    return check;
  }

 private:
  ModelConfig cfg_;
  RimNetwork net_;
};

}  // namespace

std::unique_ptr<Forecaster> make_forecaster(const ModelConfig& cfg, SeededRng& rng) {
  cfg.validate();
  if (cfg.kind == "rnn") return std::make_unique<CellForecaster<RnnParams>>(cfg, rng);
  if (cfg.kind == "lstm") return std::make_unique<CellForecaster<LstmParams>>(cfg, rng);
  if (cfg.kind == "alpha_rnn") return std::make_unique<CellForecaster<AlphaRnnParams>>(cfg, rng);
  if (cfg.kind == "alpha_t_rnn") return std::make_unique<CellForecaster<AlphaTRnnParams>>(cfg, rng);
  return std::make_unique<RimForecaster>(cfg, rng);
}

double frozen_gradcheck_error(Forecaster& model, const Matrix& window, const Vector& target,
                              SeededRng& rng) {
  const auto check = model.make_frozen_check(window, target, rng);
  const Vector theta = model.registry().flatten();
  const Vector numeric = finite_diff_grad(check.loss, theta);
  double worst = 0.0;
  for (Index i = 0; i < theta.size(); ++i) {
    const double denom = std::max({std::abs(numeric(i)), std::abs(check.analytic_grad(i)), 1e-8});
    worst = std::max(worst, std::abs(numeric(i) - check.analytic_grad(i)) / denom);
  }
  return worst;
}

}  // namespace atrim
