#pragma once

#include "atrim/attention.hpp"
#include "atrim/cells.hpp"
#include "atrim/linalg.hpp"

#include <optional>
#include <vector>

namespace atrim {

/// Architecture and attention geometry of a modular smoothed-recurrence
/// network. Key and query widths name the same per-head dot space and must
/// agree.
struct RimConfig {
  int units = 10;
  int num_modules_total = 4;
  int num_modules_active = 2;

  int input_heads = 2;
  Index input_key_size = 8;
  Index input_value_size = 10;
  Index input_query_size = 8;
  double input_keep_prob = 0.9;

  int comm_heads = 2;
  Index comm_key_size = 8;
  Index comm_value_size = 8;
  Index comm_query_size = 8;
  double comm_keep_prob = 0.9;

  int lookback = 10;
  int horizon = 5;
  int feature_count = 1;
  bool include_self_in_comm = true;

  /// Structural invariants: module counts, positive sizes, key/query
  /// agreement, keep probabilities in (0, 1].
  void validate() const;

  /// Experiment-protocol constraints on top of validate(): lookback in
  /// {5, 10, 21}, horizon 5, one or two features.
  void validate_protocol() const;
};

struct RimState {
  std::vector<CellState> modules;
  int step = 0;
};

struct RimParams {
  std::vector<AlphaTRnnParams> cells;  // per module, private
  AttentionParams input_attn;          // single head
  AttentionParams comm_attn;           // multi head with output projection
  Matrix w_readout;                    // horizon x (units * num_modules_total)
  Vector b_readout;                    // horizon
};

RimParams zeros_like(const RimParams& p);

/// The n_active module indices with the smallest null-attention mass, i.e.
/// those whose input looks most relevant. Ties break toward the lower index.
/// The result is sorted ascending.
std::vector<int> select_active(const Vector& null_weights, int n_active);

/// One timestep's frozen stochastic choices, for replaying a forward pass
/// under parameter perturbation (the discrete selection and the dropout
/// draws are held constant while differentiating).
struct RimStepPlan {
  std::vector<int> active;
  Matrix input_mask;  // active_count x attended width (row per active, ascending)
  Matrix comm_mask;   // active_count x comm output width
};

struct RimStepTape {
  Vector x;
  Matrix x_objects;
  Matrix h_before;       // module states entering the step
  Matrix h_mid;          // after the per-module transitions, before communication
  InputAttentionResult input;
  CommAttentionResult comm;
  RimStepPlan plan;
  std::vector<StepTape> cell_tapes;  // one per active module, ascending order
};

struct RimTape {
  std::vector<RimStepTape> steps;
  Matrix final_concat;  // 1 x units*modules
  Vector prediction;
};

class RimNetwork {
 public:
  RimNetwork(const RimConfig& cfg, SeededRng& rng);
  RimNetwork(const RimConfig& cfg, RimParams params);

  const RimConfig& config() const { return cfg_; }
  RimParams& params() { return params_; }
  const RimParams& params() const { return params_; }

  RimState initial_state() const;

  /// Advance one step: read the input objects per module, activate the
  /// modules with the most relevant input, run their smoothed transitions on
  /// the attended input, then let the active modules read every module's
  /// state through the residual communication path. Inactive modules keep
  /// their state bit for bit.
  RimState step(const RimState& state, const Vector& x, RunMode mode, SeededRng* rng,
                RimStepTape* tape = nullptr, const RimStepPlan* replay = nullptr) const;

  /// Unroll over the window rows and read out all module states jointly.
  /// In train mode dropout masks come from rng (or from replay when given)
  /// and everything needed for backward is recorded in the tape.
  Vector forward(const Matrix& window, RunMode mode, SeededRng* rng, RimTape* tape = nullptr,
                 const std::vector<RimStepPlan>* replay = nullptr) const;

  /// Exact reverse-mode gradients of the recorded forward pass with respect
  /// to every parameter, seeded with d loss / d prediction. The discrete
  /// activation choice is treated as constant.
  RimParams backward(const RimTape& tape, const Vector& g_prediction) const;

  /// The per-step frozen choices of a recorded pass.
  std::vector<RimStepPlan> plans_of(const RimTape& tape) const;

 private:
  RimConfig cfg_;
  RimParams params_;
};

}  // namespace atrim
