#pragma once

#include "atrim/linalg.hpp"

#include <vector>

namespace atrim {

enum class RunMode { train, eval };

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Plain recurrent transition: h' = tanh(w_in x + u_rec h + b).
struct RnnParams {
  Matrix w_in;   // units x in_dim
  Matrix u_rec;  // units x units
  Vector b;      // units

  Index units() const { return u_rec.rows(); }
  Index input_dim() const { return w_in.cols(); }
};

struct LstmParams {
  Matrix w_i, w_f, w_g, w_o;  // units x in_dim
  Matrix u_i, u_f, u_g, u_o;  // units x units
  Vector b_i, b_f, b_g, b_o;  // units

  Index units() const { return u_i.rows(); }
  Index input_dim() const { return w_i.cols(); }
};

/// Scalar gate that produces the smoothing coefficient from the current input
/// and its own pre-squash recurrent memory.
struct SmoothingGateParams {
  Vector w_x;          // in_dim
  double u_mem = 0.0;  // recurrence on the stored pre-squash value
  double b = 0.0;
};

/// Exponentially smoothed cell with a fixed smoothing coefficient in (0, 1].
struct AlphaRnnParams {
  RnnParams cell;
  double alpha = 0.5;
};

/// Exponentially smoothed cell whose coefficient is recomputed each step by a
/// recurrent scalar gate squashed through the logistic, so it stays in (0, 1).
struct AlphaTRnnParams {
  RnnParams cell;
  SmoothingGateParams gate;
};

RnnParams make_rnn_params(Index units, Index in_dim, SeededRng& rng);
LstmParams make_lstm_params(Index units, Index in_dim, SeededRng& rng);
AlphaRnnParams make_alpha_rnn_params(Index units, Index in_dim, double alpha, SeededRng& rng);
AlphaTRnnParams make_alpha_t_rnn_params(Index units, Index in_dim, SeededRng& rng);

RnnParams zeros_like(const RnnParams& p);
LstmParams zeros_like(const LstmParams& p);
AlphaRnnParams zeros_like(const AlphaRnnParams& p);
AlphaTRnnParams zeros_like(const AlphaTRnnParams& p);

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Carried state shared by all cell kinds; unused members stay empty.
struct CellState {
  Vector h;                // smoothed hidden state
  Vector h_hat;            // last candidate activation (smoothed cells)
  double alpha_mem = 0.0;  // pre-squash memory of the smoothing gate
  Vector c;                // LSTM cell memory
};

CellState zero_state(Index units, bool with_cell_memory = false);

// ---------------------------------------------------------------------------
// Forward steps. The returned h output equals the new state's h.
// ---------------------------------------------------------------------------

CellState rnn_step(const CellState& s, const Vector& x, const RnnParams& p);
CellState lstm_step(const CellState& s, const Vector& x, const LstmParams& p);
CellState alpha_rnn_step(const CellState& s, const Vector& x, const AlphaRnnParams& p);
CellState alpha_t_step(const CellState& s, const Vector& x, const AlphaTRnnParams& p);

/// Smoothing coefficient realised by the gate at the state reached after a step.
inline double alpha_of(const CellState& s) { return logistic(s.alpha_mem); }

/// Closed-form unrolled smoothing: the new state as a lag-weighted sum of the
/// candidate activations plus the initial-state remainder term,
///   a_t hh_t + sum_{s=1}^{t-1} a_{t-s} prod_{r=1}^{s} (1 - a_{t-r+1}) hh_{t-s}
///   + prod_{r=0}^{t-1} (1 - a_{t-r}) h_init.
Vector alpha_unrolled(const std::vector<Vector>& h_hat_seq,
                      const std::vector<double>& alpha_seq, const Vector& h_init);

/// Same expansion, reported as the coefficient applied to each h_hat (index
/// order matching h_hat_seq) with the h_init coefficient appended last.
std::vector<double> alpha_unrolled_coefficients(const std::vector<double>& alpha_seq);

// ---------------------------------------------------------------------------
// Backward. Each step backward consumes the gradient with respect to the
// post-step state, accumulates parameter gradients, and leaves the gradient
// with respect to the pre-step state behind, returning the input gradient.
// ---------------------------------------------------------------------------

struct StepTape {
  Vector x;
  CellState before;
  CellState after;
  // LSTM gate activations, empty for other cells.
  Vector gate_i, gate_f, gate_g, gate_o;
};

struct BackState {
  Vector g_h;           // d loss / d state.h
  double g_mem = 0.0;   // d loss / d state.alpha_mem
  Vector g_c;           // d loss / d state.c
};

BackState zero_back_state(Index units, bool with_cell_memory = false);

Vector rnn_step_backward(const StepTape& t, const RnnParams& p, BackState& back, RnnParams& grads);
Vector lstm_step_backward(const StepTape& t, const LstmParams& p, BackState& back, LstmParams& grads);
Vector alpha_rnn_step_backward(const StepTape& t, const AlphaRnnParams& p, BackState& back, AlphaRnnParams& grads);
Vector alpha_t_step_backward(const StepTape& t, const AlphaTRnnParams& p, BackState& back, AlphaTRnnParams& grads);

// Tape-recording step variants used by the sequence models.
CellState rnn_step(const CellState& s, const Vector& x, const RnnParams& p, StepTape& tape);
CellState lstm_step(const CellState& s, const Vector& x, const LstmParams& p, StepTape& tape);
CellState alpha_rnn_step(const CellState& s, const Vector& x, const AlphaRnnParams& p, StepTape& tape);
CellState alpha_t_step(const CellState& s, const Vector& x, const AlphaTRnnParams& p, StepTape& tape);

}  // namespace atrim
