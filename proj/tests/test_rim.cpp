#include <doctest.h>

#include "atrim/model.hpp"
#include "atrim/rim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace atrim;

namespace {

Matrix random_matrix(Index rows, Index cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

RimConfig small_config() {
  RimConfig cfg;
  cfg.units = 3;
  cfg.num_modules_total = 2;
  cfg.num_modules_active = 1;
  cfg.input_key_size = 4;
  cfg.input_query_size = 4;
  cfg.input_value_size = 3;
  cfg.input_keep_prob = 1.0;
  cfg.comm_heads = 2;
  cfg.comm_key_size = 3;
  cfg.comm_query_size = 3;
  cfg.comm_value_size = 2;
  cfg.comm_keep_prob = 1.0;
  cfg.lookback = 5;
  cfg.horizon = 5;
  cfg.feature_count = 2;
  return cfg;
}

// From-scratch re-implementation on flat C++ loops: one query per module over
// the null-plus-feature rows, least-null-mass selection, gated smoothing
// transitions, multi-head residual reads, affine readout. It reads the same
// parameter structs but shares no computation path with the library.
std::vector<double> naive_rim_forward(const RimConfig& cfg, const RimParams& p,
                                      const Matrix& window) {
  const int n = cfg.num_modules_total;
  const int units = cfg.units;
  const int features = cfg.feature_count;
  std::vector<std::vector<double>> h(n, std::vector<double>(units, 0.0));
  std::vector<double> mem(n, 0.0);

  for (int t = 0; t < window.rows(); ++t) {
    // Input objects: a zero row, then each feature value.
    std::vector<double> object(features + 1, 0.0);
    for (int f = 0; f < features; ++f) object[f + 1] = window(t, f);

    const int dk_in = static_cast<int>(cfg.input_key_size);
    const int dv_in = static_cast<int>(cfg.input_value_size);
    std::vector<std::vector<double>> attended(n, std::vector<double>(cfg.input_heads * dv_in, 0.0));
    std::vector<double> null_mass(n, 0.0);
    for (int k = 0; k < n; ++k) {
      for (int head = 0; head < cfg.input_heads; ++head) {
        std::vector<double> q(dk_in, 0.0);
        for (int j = 0; j < dk_in; ++j)
          for (int u = 0; u < units; ++u)
            q[j] += h[k][u] * p.input_attn.w_query[k](u, head * dk_in + j);
        std::vector<double> logits(features + 1, 0.0);
        for (int o = 0; o <= features; ++o) {
          double dot = 0.0;
          for (int j = 0; j < dk_in; ++j)
            dot += q[j] * object[o] * p.input_attn.w_key(0, head * dk_in + j);
          logits[o] = dot / std::sqrt(static_cast<double>(dk_in));
        }
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double z = 0.0;
        std::vector<double> w(features + 1, 0.0);
        for (int o = 0; o <= features; ++o) {
          w[o] = std::exp(logits[o] - mx);
          z += w[o];
        }
        for (double& v : w) v /= z;
        null_mass[k] += w[0] / cfg.input_heads;
        for (int j = 0; j < dv_in; ++j)
          for (int o = 0; o <= features; ++o)
            attended[k][head * dv_in + j] += w[o] * object[o] * p.input_attn.w_value(0, head * dv_in + j);
      }
    }

    // Pick the modules with the least null mass, low index first on ties.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (null_mass[a] != null_mass[b]) return null_mass[a] < null_mass[b];
      return a < b;
    });
    std::vector<bool> active(n, false);
    for (int i = 0; i < cfg.num_modules_active; ++i) active[order[i]] = true;

    // Gated smoothing transition for the active modules.
    auto h_mid = h;
    for (int k = 0; k < n; ++k) {
      if (!active[k]) continue;
      std::vector<double> h_hat(units, 0.0);
      for (int u = 0; u < units; ++u) {
        double z2 = p.cells[k].cell.b(u);
        for (int j = 0; j < dv_in; ++j) z2 += p.cells[k].cell.w_in(u, j) * attended[k][j];
        for (int v = 0; v < units; ++v) z2 += p.cells[k].cell.u_rec(u, v) * h[k][v];
        h_hat[u] = std::tanh(z2);
      }
      double a = p.cells[k].gate.b + p.cells[k].gate.u_mem * mem[k];
      for (int j = 0; j < dv_in; ++j) a += p.cells[k].gate.w_x(j) * attended[k][j];
      const double alpha = 1.0 / (1.0 + std::exp(-a));
      mem[k] = a;
      for (int u = 0; u < units; ++u) h_mid[k][u] = alpha * h_hat[u] + (1.0 - alpha) * h[k][u];
    }

    // Residual communication among the active modules.
    const int dk_c = static_cast<int>(cfg.comm_key_size);
    const int dv_c = static_cast<int>(cfg.comm_value_size);
    auto h_out = h_mid;
    for (int k = 0; k < n; ++k) {
      if (!active[k]) continue;
      std::vector<double> concat(cfg.comm_heads * dv_c, 0.0);
      for (int head = 0; head < cfg.comm_heads; ++head) {
        std::vector<double> q(dk_c, 0.0);
        for (int j = 0; j < dk_c; ++j)
          for (int u = 0; u < units; ++u)
            q[j] += h_mid[k][u] * p.comm_attn.w_query[k](u, head * dk_c + j);
        std::vector<double> logits(n, 0.0);
        for (int m = 0; m < n; ++m) {
          double dot = 0.0;
          for (int j = 0; j < dk_c; ++j) {
            double key = 0.0;
            for (int u = 0; u < units; ++u)
              key += h_mid[m][u] * p.comm_attn.w_key(u, head * dk_c + j);
            dot += q[j] * key;
          }
          logits[m] = dot / std::sqrt(static_cast<double>(dk_c));
        }
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double z = 0.0;
        std::vector<double> w(n, 0.0);
        for (int m = 0; m < n; ++m) {
          w[m] = std::exp(logits[m] - mx);
          z += w[m];
        }
        for (double& v : w) v /= z;
        for (int j = 0; j < dv_c; ++j) {
          for (int m = 0; m < n; ++m) {
            double value = 0.0;
            for (int u = 0; u < units; ++u)
              value += h_mid[m][u] * p.comm_attn.w_value(u, head * dv_c + j);
            concat[head * dv_c + j] += w[m] * value;
          }
        }
      }
      for (int u = 0; u < units; ++u) {
        double delta = 0.0;
        for (int j = 0; j < cfg.comm_heads * dv_c; ++j)
          delta += concat[j] * p.comm_attn.w_out(j, u);
        h_out[k][u] += delta;
      }
    }
    h = h_out;
  }

  std::vector<double> pred(cfg.horizon, 0.0);
  for (int i = 0; i < cfg.horizon; ++i) {
    pred[i] = p.b_readout(i);
    for (int k = 0; k < n; ++k)
      for (int u = 0; u < units; ++u) pred[i] += p.w_readout(i, k * units + u) * h[k][u];
  }
  return pred;
}

}  // namespace

TEST_SUITE("rim") {

TEST_CASE("select_active picks least null mass with index ties") {
  Vector w(3);
  w << 0.9, 0.1, 0.5;
  CHECK(select_active(w, 1) == std::vector<int>{1});
  CHECK(select_active(w, 2) == std::vector<int>{1, 2});

  const Vector equal = Vector::Constant(4, 0.25);
  CHECK(select_active(equal, 2) == std::vector<int>{0, 1});
  CHECK(select_active(equal, 4) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("config validation rejects bad geometry") {
  RimConfig cfg = small_config();
  cfg.num_modules_active = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.num_modules_active = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.input_query_size = cfg.input_key_size + 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.lookback = 7;
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS(cfg.validate_protocol(), std::invalid_argument);
}

TEST_CASE("zero parameters leave a zero state and predict the readout bias") {
  SeededRng rng(1);
  RimNetwork net(small_config(), rng);
  net.params() = zeros_like(net.params());
  net.params().b_readout << 1, 2, 3, 4, 5;

  const RimState s1 = net.step(net.initial_state(), Vector::Zero(2), RunMode::eval, nullptr);
  for (const CellState& m : s1.modules) CHECK(m.h.cwiseAbs().maxCoeff() == 0.0);

  const Vector pred = net.forward(Matrix::Zero(5, 2), RunMode::eval, nullptr);
  CHECK((pred - net.params().b_readout).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eval forward is a pure function of params and window") {
  SeededRng rng(2);
  RimNetwork net(small_config(), rng);
  const Matrix window = random_matrix(5, 2, rng);
  SeededRng r1(111), r2(999);
  const Vector a = net.forward(window, RunMode::eval, &r1);
  const Vector b = net.forward(window, RunMode::eval, &r2);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exactly n_active modules run and inactive states are bit-identical") {
  SeededRng rng(3);
  RimConfig cfg = small_config();
  cfg.num_modules_total = 5;
  cfg.num_modules_active = 2;
  RimNetwork net(cfg, rng);

  RimState state = net.initial_state();
  for (int t = 0; t < 6; ++t) {
    RimStepTape tape;
    const Vector x = random_matrix(2, 1, rng).col(0);
    const RimState next = net.step(state, x, RunMode::eval, nullptr, &tape);
    CHECK(tape.plan.active.size() == 2);
    for (int k = 0; k < 5; ++k) {
      const bool active = std::find(tape.plan.active.begin(), tape.plan.active.end(), k) !=
                          tape.plan.active.end();
      if (!active) {
        CHECK((next.modules[k].h - state.modules[k].h).cwiseAbs().maxCoeff() == 0.0);
        CHECK(next.modules[k].alpha_mem == state.modules[k].alpha_mem);
      }
    }
    state = next;
  }
}

TEST_CASE("single module with silenced communication is a plain gated cell") {
  SeededRng rng(4);
  RimConfig cfg = small_config();
  cfg.num_modules_total = 1;
  cfg.num_modules_active = 1;
  RimNetwork net(cfg, rng);
  net.params().comm_attn.w_out.setZero();

  RimState state = net.initial_state();
  CellState cell = zero_state(cfg.units);
  for (int t = 0; t < 7; ++t) {
    const Vector x = random_matrix(2, 1, rng).col(0);
    state = net.step(state, x, RunMode::eval, nullptr);

    Matrix h_row(1, cfg.units);
    h_row.row(0) = cell.h.transpose();
    const InputAttentionResult att =
        input_attention(h_row, build_input_objects(x), net.params().input_attn);
    cell = alpha_t_step(cell, att.attended.row(0).transpose(), net.params().cells[0]);

    CHECK((state.modules[0].h - cell.h).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(state.modules[0].alpha_mem - cell.alpha_mem) <= 1e-12);
  }
}

TEST_CASE("forward matches the straight-line re-implementation") {
  SeededRng rng(5);
  RimConfig cfg = small_config();
  cfg.num_modules_total = 2;
  cfg.num_modules_active = 1;
  RimNetwork net(cfg, rng);
  const Matrix window = random_matrix(5, 2, rng);

  const Vector pred = net.forward(window, RunMode::eval, nullptr);
  const std::vector<double> naive = naive_rim_forward(cfg, net.params(), window);
  REQUIRE(static_cast<Index>(naive.size()) == pred.size());
  for (Index i = 0; i < pred.size(); ++i) {
    CHECK(std::abs(pred(i) - naive[i]) <= 1e-10);
  }

  // Also with every module active so communication fires on all rows.
  cfg.num_modules_active = 2;
  SeededRng rng2(6);
  RimNetwork net2(cfg, rng2);
  const Vector pred2 = net2.forward(window, RunMode::eval, nullptr);
  const std::vector<double> naive2 = naive_rim_forward(cfg, net2.params(), window);
  for (Index i = 0; i < pred2.size(); ++i) {
    CHECK(std::abs(pred2(i) - naive2[i]) <= 1e-10);
  }
}

TEST_CASE("train-mode replay of a frozen plan reproduces the pass") {
  SeededRng rng(7);
  RimConfig cfg = small_config();
  cfg.input_keep_prob = 0.8;
  cfg.comm_keep_prob = 0.7;
  RimNetwork net(cfg, rng);
  const Matrix window = random_matrix(5, 2, rng);

  RimTape tape;
  SeededRng train_rng(42);
  const Vector pred = net.forward(window, RunMode::train, &train_rng, &tape);
  const std::vector<RimStepPlan> plans = net.plans_of(tape);
  const Vector replayed = net.forward(window, RunMode::train, nullptr, nullptr, &plans);
  CHECK((pred - replayed).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward is linear in the upstream gradient") {
  SeededRng rng(8);
  RimNetwork net(small_config(), rng);
  const Matrix window = random_matrix(5, 2, rng);
  RimTape tape;
  net.forward(window, RunMode::eval, nullptr, &tape);

  const Vector g = random_matrix(5, 1, rng).col(0);
  RimParams g1 = net.backward(tape, g);
  RimParams g2 = net.backward(tape, 2.0 * g);
  ParamRegistry r1, r2;
  register_params(g1, "", r1);
  register_params(g2, "", r2);
  CHECK((2.0 * r1.flatten() - r2.flatten()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("matching prediction and target zero the data-term gradient") {
  SeededRng rng(9);
  ModelConfig cfg;
  cfg.kind = "alpha_t_rim";
  cfg.lookback = 4;
  cfg.features = 2;
  cfg.rim = small_config();
  auto model = make_forecaster(cfg, rng);
  const Matrix window = random_matrix(4, 2, rng);
  const Vector target = model->predict(window);

  Vector grads = Vector::Zero(model->registry().size());
  SeededRng train_rng(1);  // keep probabilities are 1, so no dropout draws
  model->accumulate_gradient(window, target, train_rng, grads);
  CHECK(grads.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("modules never activated collect zero gradient") {
  SeededRng rng(10);
  RimConfig cfg = small_config();
  cfg.num_modules_total = 4;
  cfg.num_modules_active = 1;
  RimNetwork net(cfg, rng);
  const Matrix window = random_matrix(6, 2, rng);

  RimTape tape;
  net.forward(window, RunMode::eval, nullptr, &tape);
  std::vector<bool> ever_active(4, false);
  for (const RimStepTape& st : tape.steps)
    for (int k : st.plan.active) ever_active[k] = true;

  bool some_module_idle = false;
  RimParams grads = net.backward(tape, Vector::Ones(5));
  for (int k = 0; k < 4; ++k) {
    if (ever_active[k]) continue;
    some_module_idle = true;
    ParamRegistry reg;
    register_params(grads.cells[k], "", reg);
    CHECK(reg.flatten().cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.input_attn.w_query[k].cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.comm_attn.w_query[k].cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(some_module_idle);
}

TEST_CASE("full network gradients match finite differences under a frozen plan") {
  SeededRng rng(11);
  ModelConfig cfg;
  cfg.kind = "alpha_t_rim";
  cfg.lookback = 4;
  cfg.features = 2;
  cfg.rim = small_config();
  cfg.rim.units = 2;
  cfg.rim.num_modules_total = 2;
  cfg.rim.num_modules_active = 1;
  cfg.rim.input_keep_prob = 0.9;
  cfg.rim.comm_keep_prob = 0.9;
  auto model = make_forecaster(cfg, rng);

  const Matrix window = random_matrix(4, 2, rng);
  const Vector target = random_matrix(5, 1, rng).col(0);
  SeededRng mask_rng(77);
  auto check = model->make_frozen_check(window, target, mask_rng);

  const Vector theta = model->registry().flatten();
  const Vector numeric = finite_diff_grad(check.loss, theta);
  double worst = 0.0;
  for (Index i = 0; i < theta.size(); ++i) {
    const double denom = std::max({std::abs(numeric(i)), std::abs(check.analytic_grad(i)), 1e-8});
    worst = std::max(worst, std::abs(numeric(i) - check.analytic_grad(i)) / denom);
  }
  CHECK(worst <= 1e-4);
}

}  // TEST_SUITE
