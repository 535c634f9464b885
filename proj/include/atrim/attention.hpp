#pragma once

#include "atrim/linalg.hpp"

#include <vector>

namespace atrim {

/// Key-value attention weights for one attention site. Queries are produced
/// per module from its hidden state; keys and values share one projection of
/// whatever the attention reads (input rows or module states). An optional
/// output projection recombines the concatenated heads.
struct AttentionParams {
  std::vector<Matrix> w_query;  // per module: query_in x (heads * key_dim)
  Matrix w_key;                 // key_in x (heads * key_dim)
  Matrix w_value;               // key_in x (heads * value_dim)
  Matrix w_out;                 // (heads * value_dim) x out_dim, size 0 when unused
  int heads = 1;

  Index key_dim() const { return w_key.cols() / heads; }
  Index value_dim() const { return w_value.cols() / heads; }
  int modules() const { return static_cast<int>(w_query.size()); }
  bool has_output_projection() const { return w_out.size() > 0; }

  void validate() const;
};

AttentionParams make_attention_params(int modules, Index query_in, Index key_in,
                                      int heads, Index key_dim, Index value_dim,
                                      Index out_dim, SeededRng& rng);
AttentionParams zeros_like(const AttentionParams& p);

struct AttentionOutput {
  Matrix attended;  // queries x value_dim
  Matrix weights;   // queries x keys, rows convex
};

/// softmax(q k^T / sqrt(d)) v with d = q.cols().
AttentionOutput scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Input rows for one timestep: a leading all-zero null row, then one row per
/// scalar feature.
Matrix build_input_objects(const Vector& x);

struct InputAttentionResult {
  Matrix attended;               // modules x (heads * value_dim)
  Vector null_weight;            // modules; softmax mass on the null row, head mean
  std::vector<Matrix> weights;   // per head: modules x object rows
};

/// Per-module read of the input objects: queries from module states, keys and
/// values from the object rows. Heads are concatenated.
InputAttentionResult input_attention(const Matrix& h_modules, const Matrix& x_objects,
                                     const AttentionParams& p);

struct CommAttentionResult {
  Matrix delta;                 // modules x out_dim; exactly zero rows when inactive
  Matrix concat;                // modules x (heads * value_dim), pre-projection
  std::vector<Matrix> weights;  // per head: modules x modules, zero rows when inactive
};

/// Residual read among module states. Queries come from the active modules
/// only; keys and values come from every module. Inactive rows stay zero.
CommAttentionResult communication_attention(const Matrix& h_all, const std::vector<int>& active,
                                            const AttentionParams& p, bool include_self = true);

/// Backward passes. Each consumes the gradient of the site output, accumulates
/// parameter gradients into `grads` (same shapes as the params), and returns
/// the gradient with respect to the module states that formed the queries
/// (plus keys/values for the communication case, where they are the same
/// states). Rows of g_attended / g_delta must be zero for modules whose output
/// was not consumed.
Matrix input_attention_backward(const Matrix& h_modules, const Matrix& x_objects,
                                const AttentionParams& p, const InputAttentionResult& fwd,
                                const Matrix& g_attended, AttentionParams& grads);

Matrix communication_attention_backward(const Matrix& h_all, const std::vector<int>& active,
                                        const AttentionParams& p, bool include_self,
                                        const CommAttentionResult& fwd, const Matrix& g_delta,
                                        AttentionParams& grads);

/// Inverted-dropout mask: entries are 1/keep_prob with probability keep_prob,
/// else 0. keep_prob = 1 yields all ones.
Matrix dropout_mask(Index rows, Index cols, double keep_prob, SeededRng& rng);

}  // namespace atrim
