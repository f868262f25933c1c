#pragma once

#include <cmath>
#include <vector>

#include "vetime/encoders.hpp"
#include "vetime/image.hpp"
#include "vetime/nn.hpp"

namespace vetime::nn {

/// Combined inverse-fold map for visual tokens: reshape to the g x g patch
/// grid (row-major), linearly interpolate the column (time) axis to n_ts
/// positions with endpoint-aligned weights, and mean-pool the row (period)
/// axis. All of it is one fixed n_ts x g^2 linear operator.
inline Mat alignment_matrix(int g, int n_ts) {
  require(g >= 1 && n_ts >= 1, "bad alignment dimensions");
  Mat A = Mat::Zero(n_ts, Eigen::Index(g) * g);
  const double row_w = 1.0 / double(g);
  for (int j = 0; j < n_ts; ++j) {
    double u;
    if (n_ts == 1)
      u = 0.5 * double(g - 1);
    else
      u = double(j) * double(g - 1) / double(n_ts - 1);
    const int c0 = std::min(g - 1, int(std::floor(u)));
    const int c1 = std::min(g - 1, c0 + 1);
    const double w1 = u - double(c0);
    for (int r = 0; r < g; ++r) {
      A(j, Eigen::Index(r) * g + c0) += row_w * (1.0 - w1);
      if (w1 != 0.0) A(j, Eigen::Index(r) * g + c1) += row_w * w1;
    }
  }
  return A;
}

/// Variant for the multivariate composite: the column axis is first split
/// into n_v equal spans, one per variable, and each span is aligned
/// independently with the same geometry.
inline Mat alignment_matrix_multivariate(int g, int n_ts, int n_v,
                                         int variable) {
  require(n_v >= 1 && variable >= 0 && variable < n_v, "bad variable index");
  require(g % n_v == 0, "time axis not divisible into per-variable spans");
  const int span = g / n_v;
  const int c_base = variable * span;
  Mat A = Mat::Zero(n_ts, Eigen::Index(g) * g);
  const double row_w = 1.0 / double(g);
  for (int j = 0; j < n_ts; ++j) {
    double u;
    if (n_ts == 1)
      u = 0.5 * double(span - 1);
    else
      u = double(j) * double(span - 1) / double(n_ts - 1);
    const int c0 = c_base + std::min(span - 1, int(std::floor(u)));
    const int c1 = std::min(c_base + span - 1, c0 + 1);
    const double w1 = u - std::floor(u);
    for (int r = 0; r < g; ++r) {
      A(j, Eigen::Index(r) * g + c0) += row_w * (1.0 - w1);
      if (w1 != 0.0) A(j, Eigen::Index(r) * g + c1) += row_w * w1;
    }
  }
  return A;
}

/// Patch-Level Temporal Alignment: learnable positional encoding added to
/// the aligned tokens, projection to the temporal width, and one residual
/// self-attention block to restore intra-/inter-patch dependencies.
class TemporalAligner {
 public:
  TemporalAligner() = default;

  static TemporalAligner make(ParamStore& store, const EncoderConfig& cfg,
                              Rng& rng) {
    TemporalAligner a;
    a.e_pos_ = store.create("align.e_pos", cfg.max_tokens, cfg.model_dim,
                            Init::truncated_normal, rng);
    a.projection_ =
        Linear::make(store, "align.projection", cfg.model_dim, cfg.model_dim, rng);
    a.ln_ = LayerNorm::make(store, "align.ln", cfg.model_dim, rng);
    a.attn_ = MultiHeadSelfAttention::make(store, "align.attn", cfg.model_dim,
                                           cfg.heads, rng);
    return a;
  }

  /// F_V0 (N_V x D_V) -> aligned tokens (n_ts x D_V).
  Value align(const Value& f_v0, int n_ts) const {
    const int g = token_grid_edge(f_v0.rows());
    return ad::const_mul_left(alignment_matrix(g, n_ts), f_v0);
  }

  std::vector<Value> align_multivariate(const Value& f_v0, int n_ts,
                                        int n_v) const {
    const int g = token_grid_edge(f_v0.rows());
    std::vector<Value> per_variable;
    per_variable.reserve(n_v);
    for (int v = 0; v < n_v; ++v)
      per_variable.push_back(ad::const_mul_left(
          alignment_matrix_multivariate(g, n_ts, n_v, v), f_v0));
    return per_variable;
  }

  /// F_V = y + Attn(LN(y)) with y = Project(F_hat + E_POS).
  Value temporalize(const Value& aligned) const {
    const Eigen::Index n = aligned.rows();
    require(n <= e_pos_.rows(),
            "series produces more patches than max_tokens allows");
    Value y = projection_.apply(ad::add(aligned, ad::slice_rows(e_pos_, 0, n)));
    return ad::add(y, attn_.apply(ln_.apply(y)));
  }

  /// Ablation path: plain projection, no positional encoding, no attention.
  Value project_only(const Value& aligned) const {
    return projection_.apply(aligned);
  }

  static int token_grid_edge(Eigen::Index n_tokens) {
    const int g = static_cast<int>(std::llround(std::sqrt(double(n_tokens))));
    expect(Eigen::Index(g) * g == n_tokens,
           "visual token count is not a perfect square");
    return g;
  }

 private:
  Value e_pos_;
  Linear projection_;
  LayerNorm ln_;
  MultiHeadSelfAttention attn_;
};

/// Ablation replacement for the aligner: mean-pool the raster-ordered visual
/// tokens into n_ts contiguous groups.
inline Mat direct_pool_matrix(Eigen::Index n_tokens, int n_ts) {
  Mat A = Mat::Zero(n_ts, n_tokens);
  for (int j = 0; j < n_ts; ++j) {
    const Eigen::Index lo = Eigen::Index(j) * n_tokens / n_ts;
    const Eigen::Index hi =
        std::max(lo + 1, Eigen::Index(j + 1) * n_tokens / n_ts);
    for (Eigen::Index t = lo; t < hi; ++t) A(j, t) = 1.0 / double(hi - lo);
  }
  return A;
}

}  // namespace vetime::nn
