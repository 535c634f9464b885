#include "atrim/cells.hpp"

#include <cmath>

namespace atrim {

namespace {

void check_step_shapes(const char* who, const CellState& s, const Vector& x,
                       Index units, Index in_dim) {
  if (s.h.size() != units) {
    throw ShapeError(std::string(who) + ": state has " + std::to_string(s.h.size()) +
                     " units, cell expects " + std::to_string(units));
  }
  if (x.size() != in_dim) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(x.size()) +
                     " features, cell expects " + std::to_string(in_dim));
  }
}

Vector tanh_of(const Vector& z) { return z.array().tanh(); }
Vector logistic_of(const Vector& z) { return 1.0 / (1.0 + (-z.array()).exp()); }

}  // namespace

RnnParams make_rnn_params(Index units, Index in_dim, SeededRng& rng) {
  RnnParams p;
  p.w_in = glorot_uniform(units, in_dim, rng);
  p.u_rec = orthogonal(units, rng);
  p.b = Vector::Zero(units);
  return p;
}

LstmParams make_lstm_params(Index units, Index in_dim, SeededRng& rng) {
  LstmParams p;
  p.w_i = glorot_uniform(units, in_dim, rng);
  p.w_f = glorot_uniform(units, in_dim, rng);
  p.w_g = glorot_uniform(units, in_dim, rng);
  p.w_o = glorot_uniform(units, in_dim, rng);
  p.u_i = orthogonal(units, rng);
  p.u_f = orthogonal(units, rng);
  p.u_g = orthogonal(units, rng);
  p.u_o = orthogonal(units, rng);
  p.b_i = Vector::Zero(units);
  p.b_f = Vector::Ones(units);  // forget gate starts open
  p.b_g = Vector::Zero(units);
  p.b_o = Vector::Zero(units);
  return p;
}

AlphaRnnParams make_alpha_rnn_params(Index units, Index in_dim, double alpha, SeededRng& rng) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha-RNN smoothing coefficient must lie in (0, 1]");
  }
  AlphaRnnParams p;
  p.cell = make_rnn_params(units, in_dim, rng);
  p.alpha = alpha;
  return p;
}

AlphaTRnnParams make_alpha_t_rnn_params(Index units, Index in_dim, SeededRng& rng) {
  AlphaTRnnParams p;
  p.cell = make_rnn_params(units, in_dim, rng);
  p.gate.w_x = glorot_uniform(1, in_dim, rng).transpose();
  // The gate carries its pre-squash value; |u_mem| < 1 keeps that scalar
  // recurrence contractive at the start.
  p.gate.u_mem = rng.uniform(-0.5, 0.5);
  p.gate.b = 0.0;
  return p;
}

RnnParams zeros_like(const RnnParams& p) {
  return {Matrix::Zero(p.w_in.rows(), p.w_in.cols()),
          Matrix::Zero(p.u_rec.rows(), p.u_rec.cols()), Vector::Zero(p.b.size())};
}

LstmParams zeros_like(const LstmParams& p) {
  LstmParams z;
  auto zm = [](const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); };
  auto zv = [](const Vector& v) { return Vector::Zero(v.size()); };
  z.w_i = zm(p.w_i); z.w_f = zm(p.w_f); z.w_g = zm(p.w_g); z.w_o = zm(p.w_o);
  z.u_i = zm(p.u_i); z.u_f = zm(p.u_f); z.u_g = zm(p.u_g); z.u_o = zm(p.u_o);
  z.b_i = zv(p.b_i); z.b_f = zv(p.b_f); z.b_g = zv(p.b_g); z.b_o = zv(p.b_o);
  return z;
}

AlphaRnnParams zeros_like(const AlphaRnnParams& p) {
  return {zeros_like(p.cell), 0.0};
}

AlphaTRnnParams zeros_like(const AlphaTRnnParams& p) {
  AlphaTRnnParams z;
  z.cell = zeros_like(p.cell);
  z.gate.w_x = Vector::Zero(p.gate.w_x.size());
  z.gate.u_mem = 0.0;
  z.gate.b = 0.0;
  return z;
}

CellState zero_state(Index units, bool with_cell_memory) {
  CellState s;
  s.h = Vector::Zero(units);
  s.h_hat = Vector::Zero(units);
  s.alpha_mem = 0.0;
  if (with_cell_memory) s.c = Vector::Zero(units);
  return s;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

CellState rnn_step(const CellState& s, const Vector& x, const RnnParams& p) {
  check_step_shapes("rnn_step", s, x, p.units(), p.input_dim());
  CellState out;
  out.h = tanh_of(p.w_in * x + p.u_rec * s.h + p.b);
  return out;
}

CellState lstm_step(const CellState& s, const Vector& x, const LstmParams& p) {
  StepTape scratch;
  return lstm_step(s, x, p, scratch);
}

CellState lstm_step(const CellState& s, const Vector& x, const LstmParams& p, StepTape& tape) {
  check_step_shapes("lstm_step", s, x, p.units(), p.input_dim());
  if (s.c.size() != p.units()) {
    throw ShapeError("lstm_step: state carries no cell memory of matching size");
  }
  const Vector i = logistic_of(p.w_i * x + p.u_i * s.h + p.b_i);
  const Vector f = logistic_of(p.w_f * x + p.u_f * s.h + p.b_f);
  const Vector g = tanh_of(p.w_g * x + p.u_g * s.h + p.b_g);
  const Vector o = logistic_of(p.w_o * x + p.u_o * s.h + p.b_o);
  CellState out;
  out.c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
  out.h = o.cwiseProduct(tanh_of(out.c));
  tape.x = x;
  tape.before = s;
  tape.after = out;
  tape.gate_i = i;
  tape.gate_f = f;
  tape.gate_g = g;
  tape.gate_o = o;
  return out;
}

CellState alpha_rnn_step(const CellState& s, const Vector& x, const AlphaRnnParams& p) {
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) {
    throw std::invalid_argument("alpha_rnn_step: smoothing coefficient outside (0, 1]");
  }
  check_step_shapes("alpha_rnn_step", s, x, p.cell.units(), p.cell.input_dim());
  CellState out;
  out.h_hat = tanh_of(p.cell.w_in * x + p.cell.u_rec * s.h + p.cell.b);
  out.h = p.alpha * out.h_hat + (1.0 - p.alpha) * s.h;
  return out;
}

CellState alpha_t_step(const CellState& s, const Vector& x, const AlphaTRnnParams& p) {
  check_step_shapes("alpha_t_step", s, x, p.cell.units(), p.cell.input_dim());
  if (p.gate.w_x.size() != x.size()) {
    throw ShapeError("alpha_t_step: gate input weights sized " + std::to_string(p.gate.w_x.size()) +
                     " against input of " + std::to_string(x.size()));
  }
  CellState out;
  out.h_hat = tanh_of(p.cell.w_in * x + p.cell.u_rec * s.h + p.cell.b);
  const double pre = p.gate.w_x.dot(x) + p.gate.u_mem * s.alpha_mem + p.gate.b;
  const double alpha = logistic(pre);
  out.alpha_mem = pre;  // the gate carries its pre-squash value forward
  out.h = alpha * out.h_hat + (1.0 - alpha) * s.h;
  return out;
}

CellState rnn_step(const CellState& s, const Vector& x, const RnnParams& p, StepTape& tape) {
  CellState out = rnn_step(s, x, p);
  tape.x = x;
  tape.before = s;
  tape.after = out;
  return out;
}

CellState alpha_rnn_step(const CellState& s, const Vector& x, const AlphaRnnParams& p, StepTape& tape) {
  CellState out = alpha_rnn_step(s, x, p);
  tape.x = x;
  tape.before = s;
  tape.after = out;
  return out;
}

CellState alpha_t_step(const CellState& s, const Vector& x, const AlphaTRnnParams& p, StepTape& tape) {
  CellState out = alpha_t_step(s, x, p);
  tape.x = x;
  tape.before = s;
  tape.after = out;
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing expansion
// ---------------------------------------------------------------------------

std::vector<double> alpha_unrolled_coefficients(const std::vector<double>& alpha_seq) {
  const std::size_t t = alpha_seq.size();
  std::vector<double> coeff(t + 1, 0.0);
  // Walking backwards, ĥ_j picks up alpha_j times every (1 - alpha) after it.
  double tail = 1.0;
  for (std::size_t j = t; j-- > 0;) {
    coeff[j] = alpha_seq[j] * tail;
    tail *= 1.0 - alpha_seq[j];
  }
  coeff[t] = tail;  // multiplies the initial smoothed state
  return coeff;
}

Vector alpha_unrolled(const std::vector<Vector>& h_hat_seq,
                      const std::vector<double>& alpha_seq, const Vector& h_init) {
  if (h_hat_seq.size() != alpha_seq.size()) {
    throw ShapeError("alpha_unrolled: " + std::to_string(h_hat_seq.size()) +
                     " candidate states against " + std::to_string(alpha_seq.size()) +
                     " smoothing coefficients");
  }
  if (h_hat_seq.empty()) throw ShapeError("alpha_unrolled: empty sequence");
  const std::vector<double> coeff = alpha_unrolled_coefficients(alpha_seq);
  Vector out = coeff.back() * h_init;
  for (std::size_t j = 0; j < h_hat_seq.size(); ++j) {
    if (h_hat_seq[j].size() != h_init.size()) {
      throw ShapeError("alpha_unrolled: candidate state size mismatch at step " + std::to_string(j));
    }
    out += coeff[j] * h_hat_seq[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

BackState zero_back_state(Index units, bool with_cell_memory) {
  BackState b;
  b.g_h = Vector::Zero(units);
  b.g_mem = 0.0;
  if (with_cell_memory) b.g_c = Vector::Zero(units);
  return b;
}

Vector rnn_step_backward(const StepTape& t, const RnnParams& p, BackState& back, RnnParams& grads) {
  const Vector& h_new = t.after.h;
  const Vector dz = back.g_h.cwiseProduct(Vector::Ones(h_new.size()) - h_new.cwiseProduct(h_new));
  grads.w_in += dz * t.x.transpose();
  grads.u_rec += dz * t.before.h.transpose();
  grads.b += dz;
  back.g_h = p.u_rec.transpose() * dz;
  return p.w_in.transpose() * dz;
}

Vector lstm_step_backward(const StepTape& t, const LstmParams& p, BackState& back, LstmParams& grads) {
  const Vector& i = t.gate_i;
  const Vector& f = t.gate_f;
  const Vector& g = t.gate_g;
  const Vector& o = t.gate_o;
  const Vector tc = t.after.c.array().tanh();
  const Vector ones = Vector::Ones(i.size());

  const Vector d_o = back.g_h.cwiseProduct(tc);
  const Vector dc = back.g_c + back.g_h.cwiseProduct(o).cwiseProduct(ones - tc.cwiseProduct(tc));
  const Vector d_f = dc.cwiseProduct(t.before.c);
  const Vector d_i = dc.cwiseProduct(g);
  const Vector d_g = dc.cwiseProduct(i);

  const Vector dzi = d_i.cwiseProduct(i).cwiseProduct(ones - i);
  const Vector dzf = d_f.cwiseProduct(f).cwiseProduct(ones - f);
  const Vector dzg = d_g.cwiseProduct(ones - g.cwiseProduct(g));
  const Vector dzo = d_o.cwiseProduct(o).cwiseProduct(ones - o);

  grads.w_i += dzi * t.x.transpose();
  grads.w_f += dzf * t.x.transpose();
  grads.w_g += dzg * t.x.transpose();
  grads.w_o += dzo * t.x.transpose();
  grads.u_i += dzi * t.before.h.transpose();
  grads.u_f += dzf * t.before.h.transpose();
  grads.u_g += dzg * t.before.h.transpose();
  grads.u_o += dzo * t.before.h.transpose();
  grads.b_i += dzi;
  grads.b_f += dzf;
  grads.b_g += dzg;
  grads.b_o += dzo;

  back.g_c = dc.cwiseProduct(f);
  back.g_h = p.u_i.transpose() * dzi + p.u_f.transpose() * dzf +
             p.u_g.transpose() * dzg + p.u_o.transpose() * dzo;
  return p.w_i.transpose() * dzi + p.w_f.transpose() * dzf +
         p.w_g.transpose() * dzg + p.w_o.transpose() * dzo;
}

Vector alpha_rnn_step_backward(const StepTape& t, const AlphaRnnParams& p, BackState& back,
                               AlphaRnnParams& grads) {
  const Vector& h_hat = t.after.h_hat;
  const Vector ones = Vector::Ones(h_hat.size());

  grads.alpha += back.g_h.dot(h_hat - t.before.h);
  const Vector d_hat = p.alpha * back.g_h;
  const Vector dz = d_hat.cwiseProduct(ones - h_hat.cwiseProduct(h_hat));

  grads.cell.w_in += dz * t.x.transpose();
  grads.cell.u_rec += dz * t.before.h.transpose();
  grads.cell.b += dz;

  back.g_h = (1.0 - p.alpha) * back.g_h + p.cell.u_rec.transpose() * dz;
  return p.cell.w_in.transpose() * dz;
}

Vector alpha_t_step_backward(const StepTape& t, const AlphaTRnnParams& p, BackState& back,
                             AlphaTRnnParams& grads) {
  const Vector& h_hat = t.after.h_hat;
  const Vector ones = Vector::Ones(h_hat.size());
  const double alpha = logistic(t.after.alpha_mem);

  const double d_alpha = back.g_h.dot(h_hat - t.before.h);
  const Vector d_hat = alpha * back.g_h;
  const Vector dz = d_hat.cwiseProduct(ones - h_hat.cwiseProduct(h_hat));
  const double d_pre = d_alpha * alpha * (1.0 - alpha) + back.g_mem;

  grads.cell.w_in += dz * t.x.transpose();
  grads.cell.u_rec += dz * t.before.h.transpose();
  grads.cell.b += dz;
  grads.gate.w_x += d_pre * t.x;
  grads.gate.u_mem += d_pre * t.before.alpha_mem;
  grads.gate.b += d_pre;

  back.g_h = (1.0 - alpha) * back.g_h + p.cell.u_rec.transpose() * dz;
  back.g_mem = d_pre * p.gate.u_mem;
  return p.cell.w_in.transpose() * dz + d_pre * p.gate.w_x;
}

}  // namespace atrim
