#include "atrim/rim.hpp"

#include <algorithm>
#include <numeric>

namespace atrim {

void RimConfig::validate() const {
  if (units < 1) throw std::invalid_argument("rim config: units must be positive");
  if (num_modules_total < 1) throw std::invalid_argument("rim config: need at least one module");
  if (num_modules_active < 1 || num_modules_active > num_modules_total) {
    throw std::invalid_argument("rim config: active module count must lie in [1, total]");
  }
  if (input_key_size < 1 || input_value_size < 1 || input_query_size < 1 ||
      comm_key_size < 1 || comm_value_size < 1 || comm_query_size < 1) {
    throw std::invalid_argument("rim config: attention sizes must be positive");
  }
  if (input_query_size != input_key_size) {
    throw std::invalid_argument("rim config: input query size " + std::to_string(input_query_size) +
                                " must equal input key size " + std::to_string(input_key_size));
  }
  if (comm_query_size != comm_key_size) {
    throw std::invalid_argument("rim config: communication query size " + std::to_string(comm_query_size) +
                                " must equal communication key size " + std::to_string(comm_key_size));
  }
  if (input_heads < 1 || comm_heads < 1) {
    throw std::invalid_argument("rim config: head counts must be positive");
  }
  if (!(input_keep_prob > 0.0 && input_keep_prob <= 1.0) ||
      !(comm_keep_prob > 0.0 && comm_keep_prob <= 1.0)) {
    throw std::invalid_argument("rim config: keep probabilities must lie in (0, 1]");
  }
  if (horizon < 1) throw std::invalid_argument("rim config: horizon must be positive");
  if (feature_count < 1) throw std::invalid_argument("rim config: need at least one feature");
}

void RimConfig::validate_protocol() const {
  validate();
  if (lookback != 5 && lookback != 10 && lookback != 21) {
    throw std::invalid_argument("rim config: protocol lookback must be 5, 10 or 21");
  }
  if (horizon != 5) throw std::invalid_argument("rim config: protocol horizon is 5");
  if (feature_count != 1 && feature_count != 2) {
    throw std::invalid_argument("rim config: protocol features are close or close+sentiment");
  }
}

RimParams zeros_like(const RimParams& p) {
  RimParams z;
  z.cells.reserve(p.cells.size());
  for (const auto& c : p.cells) z.cells.push_back(zeros_like(c));
  z.input_attn = zeros_like(p.input_attn);
  z.comm_attn = zeros_like(p.comm_attn);
  z.w_readout = Matrix::Zero(p.w_readout.rows(), p.w_readout.cols());
  z.b_readout = Vector::Zero(p.b_readout.size());
  return z;
}

std::vector<int> select_active(const Vector& null_weights, int n_active) {
  const int n = static_cast<int>(null_weights.size());
  if (n_active > n) {
    throw std::invalid_argument("select_active: asked for " + std::to_string(n_active) +
                                " of " + std::to_string(n) + " modules");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (null_weights(a) != null_weights(b)) return null_weights(a) < null_weights(b);
    return a < b;
  });
  std::vector<int> active(order.begin(), order.begin() + n_active);
  std::sort(active.begin(), active.end());
  return active;
}

RimNetwork::RimNetwork(const RimConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.num_modules_total;
  params_.cells.reserve(n);
  const Index attended_width = static_cast<Index>(cfg_.input_heads) * cfg_.input_value_size;
  for (int k = 0; k < n; ++k) {
    params_.cells.push_back(make_alpha_t_rnn_params(cfg_.units, attended_width, rng));
  }
  params_.input_attn = make_attention_params(n, cfg_.units, 1, cfg_.input_heads,
                                             cfg_.input_key_size, cfg_.input_value_size, 0, rng);
  params_.comm_attn = make_attention_params(n, cfg_.units, cfg_.units, cfg_.comm_heads,
                                            cfg_.comm_key_size, cfg_.comm_value_size,
                                            cfg_.units, rng);
  // The residual read starts silent and opens as the projection learns.
  params_.comm_attn.w_out.setZero();
  params_.w_readout = glorot_uniform(cfg_.horizon, static_cast<Index>(n) * cfg_.units, rng);
  params_.b_readout = Vector::Zero(cfg_.horizon);
}

RimNetwork::RimNetwork(const RimConfig& cfg, RimParams params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

RimState RimNetwork::initial_state() const {
  RimState s;
  s.modules.reserve(cfg_.num_modules_total);
  for (int k = 0; k < cfg_.num_modules_total; ++k) s.modules.push_back(zero_state(cfg_.units));
  return s;
}

RimState RimNetwork::step(const RimState& state, const Vector& x, RunMode mode, SeededRng* rng,
                          RimStepTape* tape, const RimStepPlan* replay) const {
  const int n = cfg_.num_modules_total;
  if (static_cast<int>(state.modules.size()) != n) {
    throw ShapeError("rim step: state carries " + std::to_string(state.modules.size()) +
                     " modules, config names " + std::to_string(n));
  }
  if (x.size() != cfg_.feature_count) {
    throw ShapeError("rim step: input has " + std::to_string(x.size()) + " features, config names " +
                     std::to_string(cfg_.feature_count));
  }
  if (mode == RunMode::train && rng == nullptr && replay == nullptr) {
    throw std::invalid_argument("rim step: train mode needs a generator or a frozen plan");
  }

  Matrix h_before(n, cfg_.units);
  for (int k = 0; k < n; ++k) h_before.row(k) = state.modules[k].h.transpose();

  const Matrix x_objects = build_input_objects(x);
  InputAttentionResult input = input_attention(h_before, x_objects, params_.input_attn);

  std::vector<int> active = replay ? replay->active
                                   : select_active(input.null_weight, cfg_.num_modules_active);
  const int n_act = static_cast<int>(active.size());
  const Index att_width = input.attended.cols();

  Matrix input_mask;
  if (replay) {
    input_mask = replay->input_mask;
  } else if (mode == RunMode::train) {
    input_mask = Matrix(n_act, att_width);
    for (int i = 0; i < n_act; ++i)
      input_mask.row(i) = dropout_mask(1, att_width, cfg_.input_keep_prob, *rng);
  } else {
    input_mask = Matrix::Ones(n_act, att_width);
  }

  // Independent per-module transitions on the attended input.
  RimState out;
  out.modules = state.modules;
  out.step = state.step + 1;
  std::vector<StepTape> cell_tapes(n_act);
  Matrix h_mid = h_before;
  for (int i = 0; i < n_act; ++i) {
    const int k = active[i];
    const Vector attended_in = input.attended.row(k).cwiseProduct(input_mask.row(i)).transpose();
    out.modules[k] = alpha_t_step(state.modules[k], attended_in, params_.cells[k], cell_tapes[i]);
    h_mid.row(k) = out.modules[k].h.transpose();
  }

  CommAttentionResult comm =
      communication_attention(h_mid, active, params_.comm_attn, cfg_.include_self_in_comm);

  Matrix comm_mask;
  if (replay) {
    comm_mask = replay->comm_mask;
  } else if (mode == RunMode::train) {
    comm_mask = Matrix(n_act, cfg_.units);
    for (int i = 0; i < n_act; ++i)
      comm_mask.row(i) = dropout_mask(1, cfg_.units, cfg_.comm_keep_prob, *rng);
  } else {
    comm_mask = Matrix::Ones(n_act, cfg_.units);
  }

  for (int i = 0; i < n_act; ++i) {
    const int k = active[i];
    out.modules[k].h += comm.delta.row(k).cwiseProduct(comm_mask.row(i)).transpose();
  }

  if (tape) {
    tape->x = x;
    tape->x_objects = x_objects;
    tape->h_before = std::move(h_before);
    tape->h_mid = std::move(h_mid);
    tape->input = std::move(input);
    tape->comm = std::move(comm);
    tape->plan = RimStepPlan{active, std::move(input_mask), std::move(comm_mask)};
    tape->cell_tapes = std::move(cell_tapes);
  }
  return out;
}

Vector RimNetwork::forward(const Matrix& window, RunMode mode, SeededRng* rng, RimTape* tape,
                           const std::vector<RimStepPlan>* replay) const {
  if (window.cols() != cfg_.feature_count) {
    throw ShapeError("rim forward: window " + shape_str(window) + " against " +
                     std::to_string(cfg_.feature_count) + " features");
  }
  if (window.rows() < 1) throw ShapeError("rim forward: empty window");
  if (replay && static_cast<Index>(replay->size()) != window.rows()) {
    throw std::invalid_argument("rim forward: frozen plan length does not match the window");
  }

  RimState state = initial_state();
  if (tape) tape->steps.resize(window.rows());
  for (Index t = 0; t < window.rows(); ++t) {
    state = step(state, window.row(t).transpose(), mode, rng, tape ? &tape->steps[t] : nullptr,
                 replay ? &(*replay)[t] : nullptr);
  }

  const int n = cfg_.num_modules_total;
  Vector concat(static_cast<Index>(n) * cfg_.units);
  for (int k = 0; k < n; ++k) concat.segment(static_cast<Index>(k) * cfg_.units, cfg_.units) = state.modules[k].h;
  const Vector prediction = params_.w_readout * concat + params_.b_readout;
  if (tape) {
    tape->final_concat = concat.transpose();
    tape->prediction = prediction;
  }
  return prediction;
}

RimParams RimNetwork::backward(const RimTape& tape, const Vector& g_prediction) const {
  const int n = cfg_.num_modules_total;
  RimParams grads = zeros_like(params_);

  grads.w_readout += g_prediction * tape.final_concat;
  grads.b_readout += g_prediction;

  const Vector g_concat = params_.w_readout.transpose() * g_prediction;
  Matrix g_h(n, cfg_.units);
  for (int k = 0; k < n; ++k)
    g_h.row(k) = g_concat.segment(static_cast<Index>(k) * cfg_.units, cfg_.units).transpose();
  Vector g_mem = Vector::Zero(n);

  for (std::size_t ti = tape.steps.size(); ti-- > 0;) {
    const RimStepTape& st = tape.steps[ti];
    const std::vector<int>& active = st.plan.active;
    const int n_act = static_cast<int>(active.size());

    // Residual communication: the delta feeds active rows only.
    Matrix g_delta = Matrix::Zero(n, cfg_.units);
    for (int i = 0; i < n_act; ++i) {
      g_delta.row(active[i]) = g_h.row(active[i]).cwiseProduct(st.plan.comm_mask.row(i));
    }
    Matrix g_h_mid = g_h;
    g_h_mid += communication_attention_backward(st.h_mid, active, params_.comm_attn,
                                                cfg_.include_self_in_comm, st.comm, g_delta,
                                                grads.comm_attn);

    // Per-module transitions.
    Matrix g_attended = Matrix::Zero(n, st.input.attended.cols());
    Matrix g_h_before = g_h_mid;
    Vector g_mem_before = g_mem;
    for (int i = 0; i < n_act; ++i) {
      const int k = active[i];
      BackState back;
      back.g_h = g_h_mid.row(k).transpose();
      back.g_mem = g_mem(k);
      const Vector g_in = alpha_t_step_backward(st.cell_tapes[i], params_.cells[k], back,
                                                grads.cells[k]);
      g_attended.row(k) = g_in.transpose().cwiseProduct(st.plan.input_mask.row(i));
      g_h_before.row(k) = back.g_h.transpose();
      g_mem_before(k) = back.g_mem;
    }

    // Input attention: only consumed attended rows carry gradient; the
    // discrete selection contributes none.
    g_h_before += input_attention_backward(st.h_before, st.x_objects, params_.input_attn,
                                           st.input, g_attended, grads.input_attn);

    g_h = std::move(g_h_before);
    g_mem = std::move(g_mem_before);
  }
  return grads;
}

std::vector<RimStepPlan> RimNetwork::plans_of(const RimTape& tape) const {
  std::vector<RimStepPlan> plans;
  plans.reserve(tape.steps.size());
  for (const auto& st : tape.steps) plans.push_back(st.plan);
  return plans;
}

}  // namespace atrim
