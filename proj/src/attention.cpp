#include "atrim/attention.hpp"

#include <cmath>

namespace atrim {

namespace {

constexpr double kMaskedLogit = -1e30;

// d logits for one softmax row: w .* (g - <g, w>).
Eigen::RowVectorXd softmax_backward_row(const Eigen::RowVectorXd& w,
                                        const Eigen::RowVectorXd& g) {
  const double dot = g.dot(w);
  return w.cwiseProduct((g.array() - dot).matrix());
}

}  // namespace

void AttentionParams::validate() const {
  if (heads < 1) throw std::invalid_argument("attention: head count must be positive");
  if (w_key.cols() % heads != 0) {
    throw ShapeError("attention: key width " + std::to_string(w_key.cols()) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  if (w_value.cols() % heads != 0) {
    throw ShapeError("attention: value width " + std::to_string(w_value.cols()) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  for (const Matrix& q : w_query) {
    if (q.cols() != w_key.cols()) {
      throw ShapeError("attention: query width " + std::to_string(q.cols()) +
                       " does not match key width " + std::to_string(w_key.cols()));
    }
  }
  if (has_output_projection() && w_out.rows() != w_value.cols()) {
    throw ShapeError("attention: output projection expects " + std::to_string(w_out.rows()) +
                     " inputs, heads deliver " + std::to_string(w_value.cols()));
  }
}

AttentionParams make_attention_params(int modules, Index query_in, Index key_in,
                                      int heads, Index key_dim, Index value_dim,
                                      Index out_dim, SeededRng& rng) {
  AttentionParams p;
  p.heads = heads;
  p.w_query.reserve(modules);
  for (int k = 0; k < modules; ++k) {
    p.w_query.push_back(glorot_uniform(query_in, heads * key_dim, rng));
  }
  p.w_key = glorot_uniform(key_in, heads * key_dim, rng);
  p.w_value = glorot_uniform(key_in, heads * value_dim, rng);
  if (out_dim > 0) p.w_out = glorot_uniform(heads * value_dim, out_dim, rng);
  p.validate();
  return p;
}

AttentionParams zeros_like(const AttentionParams& p) {
  AttentionParams z;
  z.heads = p.heads;
  z.w_query.reserve(p.w_query.size());
  for (const Matrix& q : p.w_query) z.w_query.push_back(Matrix::Zero(q.rows(), q.cols()));
  z.w_key = Matrix::Zero(p.w_key.rows(), p.w_key.cols());
  z.w_value = Matrix::Zero(p.w_value.rows(), p.w_value.cols());
  if (p.has_output_projection()) z.w_out = Matrix::Zero(p.w_out.rows(), p.w_out.cols());
  return z;
}

AttentionOutput scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) {
    throw ShapeError("scaled_attention: query " + shape_str(q) + " against keys " + shape_str(k));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("scaled_attention: keys " + shape_str(k) + " against values " + shape_str(v));
  }
  AttentionOutput out;
  out.weights = softmax_rows(q * k.transpose() / std::sqrt(static_cast<double>(q.cols())));
  out.attended = out.weights * v;
  return out;
}

Matrix build_input_objects(const Vector& x) {
  if (x.size() < 1) throw ShapeError("build_input_objects: need at least one feature");
  Matrix objects = Matrix::Zero(x.size() + 1, 1);
  objects.block(1, 0, x.size(), 1) = x;
  return objects;
}

InputAttentionResult input_attention(const Matrix& h_modules, const Matrix& x_objects,
                                     const AttentionParams& p) {
  p.validate();
  if (h_modules.rows() != p.modules()) {
    throw ShapeError("input_attention: " + std::to_string(h_modules.rows()) +
                     " module states against " + std::to_string(p.modules()) + " query maps");
  }
  if (x_objects.cols() != p.w_key.rows()) {
    throw ShapeError("input_attention: objects " + shape_str(x_objects) + " against key map " +
                     shape_str(p.w_key));
  }
  const int n = p.modules();
  const Index dk = p.key_dim();
  const Index dv = p.value_dim();
  const Index n_obj = x_objects.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Matrix keys = x_objects * p.w_key;      // n_obj x heads*dk
  const Matrix values = x_objects * p.w_value;  // n_obj x heads*dv

  InputAttentionResult out;
  out.attended = Matrix::Zero(n, p.heads * dv);
  out.null_weight = Vector::Zero(n);
  out.weights.assign(p.heads, Matrix::Zero(n, n_obj));

  for (int k = 0; k < n; ++k) {
    const Eigen::RowVectorXd q_full = h_modules.row(k) * p.w_query[k];
    for (int h = 0; h < p.heads; ++h) {
      const Eigen::RowVectorXd q = q_full.segment(h * dk, dk);
      const Matrix k_h = keys.middleCols(h * dk, dk);
      Matrix logits = (q * k_h.transpose()) * scale;
      const Matrix w = softmax_rows(logits);
      out.weights[h].row(k) = w.row(0);
      out.attended.row(k).segment(h * dv, dv) = w.row(0) * values.middleCols(h * dv, dv);
      out.null_weight(k) += w(0, 0);
    }
    out.null_weight(k) /= p.heads;
  }
  return out;
}

Matrix input_attention_backward(const Matrix& h_modules, const Matrix& x_objects,
                                const AttentionParams& p, const InputAttentionResult& fwd,
                                const Matrix& g_attended, AttentionParams& grads) {
  const int n = p.modules();
  const Index dk = p.key_dim();
  const Index dv = p.value_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Matrix keys = x_objects * p.w_key;
  const Matrix values = x_objects * p.w_value;

  Matrix g_keys = Matrix::Zero(keys.rows(), keys.cols());
  Matrix g_values = Matrix::Zero(values.rows(), values.cols());
  Matrix g_h = Matrix::Zero(h_modules.rows(), h_modules.cols());

  for (int k = 0; k < n; ++k) {
    if (g_attended.row(k).isZero(0.0)) continue;
    const Eigen::RowVectorXd q_full = h_modules.row(k) * p.w_query[k];
    Eigen::RowVectorXd g_q_full = Eigen::RowVectorXd::Zero(q_full.size());
    for (int h = 0; h < p.heads; ++h) {
      const Eigen::RowVectorXd g_att = g_attended.row(k).segment(h * dv, dv);
      const Matrix v_h = values.middleCols(h * dv, dv);
      const Matrix k_h = keys.middleCols(h * dk, dk);
      const Eigen::RowVectorXd w = fwd.weights[h].row(k);

      const Eigen::RowVectorXd g_w = g_att * v_h.transpose();
      g_values.middleCols(h * dv, dv) += w.transpose() * g_att;

      const Eigen::RowVectorXd g_logits = softmax_backward_row(w, g_w) * scale;
      g_q_full.segment(h * dk, dk) += g_logits * k_h;
      g_keys.middleCols(h * dk, dk) += g_logits.transpose() * q_full.segment(h * dk, dk);
    }
    grads.w_query[k] += h_modules.row(k).transpose() * g_q_full;
    g_h.row(k) += g_q_full * p.w_query[k].transpose();
  }
  grads.w_key += x_objects.transpose() * g_keys;
  grads.w_value += x_objects.transpose() * g_values;
  return g_h;
}

CommAttentionResult communication_attention(const Matrix& h_all, const std::vector<int>& active,
                                            const AttentionParams& p, bool include_self) {
  p.validate();
  if (!p.has_output_projection()) {
    throw ShapeError("communication_attention: output projection required");
  }
  if (h_all.rows() != p.modules()) {
    throw ShapeError("communication_attention: " + std::to_string(h_all.rows()) +
                     " module states against " + std::to_string(p.modules()) + " query maps");
  }
  const int n = p.modules();
  const Index dk = p.key_dim();
  const Index dv = p.value_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  CommAttentionResult out;
  out.delta = Matrix::Zero(n, p.w_out.cols());
  out.concat = Matrix::Zero(n, p.heads * dv);
  out.weights.assign(p.heads, Matrix::Zero(n, n));
  if (active.empty()) return out;

  const Matrix keys = h_all * p.w_key;
  const Matrix values = h_all * p.w_value;

  for (int k : active) {
    if (k < 0 || k >= n) throw std::out_of_range("communication_attention: module index out of range");
    const Eigen::RowVectorXd q_full = h_all.row(k) * p.w_query[k];
    for (int h = 0; h < p.heads; ++h) {
      Matrix logits = (q_full.segment(h * dk, dk) * keys.middleCols(h * dk, dk).transpose()) * scale;
      if (!include_self) logits(0, k) = kMaskedLogit;
      const Matrix w = softmax_rows(logits);
      out.weights[h].row(k) = w.row(0);
      out.concat.row(k).segment(h * dv, dv) = w.row(0) * values.middleCols(h * dv, dv);
    }
    out.delta.row(k) = out.concat.row(k) * p.w_out;
  }
  return out;
}

Matrix communication_attention_backward(const Matrix& h_all, const std::vector<int>& active,
                                        const AttentionParams& p, bool include_self,
                                        const CommAttentionResult& fwd, const Matrix& g_delta,
                                        AttentionParams& grads) {
  (void)include_self;  // the mask leaves zero weight, so no gradient crosses it
  const Index dk = p.key_dim();
  const Index dv = p.value_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Matrix keys = h_all * p.w_key;
  const Matrix values = h_all * p.w_value;

  Matrix g_keys = Matrix::Zero(keys.rows(), keys.cols());
  Matrix g_values = Matrix::Zero(values.rows(), values.cols());
  Matrix g_h = Matrix::Zero(h_all.rows(), h_all.cols());

  for (int k : active) {
    const Eigen::RowVectorXd g_concat = g_delta.row(k) * p.w_out.transpose();
    grads.w_out += fwd.concat.row(k).transpose() * g_delta.row(k);

    const Eigen::RowVectorXd q_full = h_all.row(k) * p.w_query[k];
    Eigen::RowVectorXd g_q_full = Eigen::RowVectorXd::Zero(q_full.size());
    for (int h = 0; h < p.heads; ++h) {
      const Eigen::RowVectorXd g_o = g_concat.segment(h * dv, dv);
      const Eigen::RowVectorXd w = fwd.weights[h].row(k);

      const Eigen::RowVectorXd g_w = g_o * values.middleCols(h * dv, dv).transpose();
      g_values.middleCols(h * dv, dv) += w.transpose() * g_o;

      const Eigen::RowVectorXd g_logits = softmax_backward_row(w, g_w) * scale;
      g_q_full.segment(h * dk, dk) += g_logits * keys.middleCols(h * dk, dk);
      g_keys.middleCols(h * dk, dk) += g_logits.transpose() * q_full.segment(h * dk, dk);
    }
    grads.w_query[k] += h_all.row(k).transpose() * g_q_full;
    g_h.row(k) += g_q_full * p.w_query[k].transpose();
  }
  grads.w_key += h_all.transpose() * g_keys;
  grads.w_value += h_all.transpose() * g_values;
  g_h += g_keys * p.w_key.transpose();
  g_h += g_values * p.w_value.transpose();
  return g_h;
}

Matrix dropout_mask(Index rows, Index cols, double keep_prob, SeededRng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout_mask: keep probability must lie in (0, 1]");
  }
  if (keep_prob == 1.0) return Matrix::Ones(rows, cols);
  Matrix mask(rows, cols);
  const double inv = 1.0 / keep_prob;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < keep_prob ? inv : 0.0;
  return mask;
}

}  // namespace atrim
