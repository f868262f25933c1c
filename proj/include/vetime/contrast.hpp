#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "vetime/nn.hpp"
#include "vetime/series.hpp"

namespace vetime::nn {

struct ContrastiveConfig {
  double tau = 0.1;
  double lambda_aw = 0.1;

  void validate() const { require(tau > 0.0, "tau must be positive"); }
};

/// Contiguous patch span [start, end) holding exactly one anomaly run
/// [a_start, a_end) plus bounded normal context. kind is short iff the run
/// covers a single patch.
struct AnomalyWindow {
  int start = 0;
  int end = 0;
  int a_start = 0;
  int a_end = 0;

  int anomaly_len() const { return a_end - a_start; }
  int window_len() const { return end - start; }
  bool is_short() const { return anomaly_len() == 1; }
};

/// One window per maximal anomaly run, total length at most 2 * L_a. Context
/// splits as evenly as possible with the extra patch on the right; truncation
/// at bounds or neighbors lets the far side grow up to ceil(L_a/2) + 1.
/// Built left to right, so windows never overlap each other or another run.
inline std::vector<AnomalyWindow> build_anomaly_windows(const PatchLabels& pl) {
  const int n = pl.n_patches();
  std::vector<std::pair<int, int>> runs;
  for (int i = 0; i < n;) {
    if (pl.flags[i]) {
      int j = i;
      while (j < n && pl.flags[j]) ++j;
      runs.emplace_back(i, j);
      i = j;
    } else {
      ++i;
    }
  }

  std::vector<AnomalyWindow> windows;
  int prev_claimed = 0;  // end of the previous window
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto [a0, a1] = runs[r];
    const int la = a1 - a0;
    const int next_start = r + 1 < runs.size() ? runs[r + 1].first : n;
    const int avail_left = a0 - prev_claimed;
    const int avail_right = next_start - a1;

    const int want_left = la / 2;
    const int want_right = la - want_left;
    const int cap = (la + 1) / 2 + 1;

    int left = std::min(want_left, avail_left);
    int right = std::min(want_right, avail_right);
    int spare = (want_left - left) + (want_right - right);
    {
      const int grow = std::min({spare, avail_right - right, cap - right});
      if (grow > 0) {
        right += grow;
        spare -= grow;
      }
    }
    {
      const int grow = std::min({spare, avail_left - left, cap - left});
      if (grow > 0) left += grow;
    }

    AnomalyWindow w;
    w.a_start = a0;
    w.a_end = a1;
    w.start = a0 - left;
    w.end = a1 + right;
    windows.push_back(w);
    prev_claimed = w.end;
  }
  return windows;
}

/// Maximal all-normal runs outside every anomaly window, chunked to spans of
/// at most chunk_len patches (negatives for the inter-window loss).
inline std::vector<std::pair<int, int>> build_normal_windows(
    const PatchLabels& pl, const std::vector<AnomalyWindow>& windows,
    int chunk_len) {
  require(chunk_len >= 1, "chunk_len must be >= 1");
  const int n = pl.n_patches();
  std::vector<std::uint8_t> claimed(n, 0);
  for (const auto& w : windows)
    for (int i = w.start; i < w.end; ++i) claimed[i] = 1;

  std::vector<std::pair<int, int>> chunks;
  for (int i = 0; i < n;) {
    if (!claimed[i] && !pl.flags[i]) {
      int j = i;
      while (j < n && !claimed[j] && !pl.flags[j]) ++j;
      for (int s = i; s < j; s += chunk_len)
        chunks.emplace_back(s, std::min(j, s + chunk_len));
      i = j;
    } else {
      ++i;
    }
  }
  return chunks;
}

/// Single-head cross-attention exactly as written: queries from X, keys and
/// values from Y, sqrt(d) scaling, no output projection.
struct CrossAttention {
  Value w_q, w_k, w_v;  // d x d
  Ffn ffn;

  static CrossAttention make(ParamStore& store, const std::string& prefix,
                             Eigen::Index dim, Eigen::Index ffn_dim, Rng& rng) {
    CrossAttention c;
    c.w_q = store.create(prefix + ".w_q", dim, dim, Init::truncated_normal, rng);
    c.w_k = store.create(prefix + ".w_k", dim, dim, Init::truncated_normal, rng);
    c.w_v = store.create(prefix + ".w_v", dim, dim, Init::truncated_normal, rng);
    c.ffn = Ffn::make(store, prefix + ".ffn", dim, ffn_dim, rng);
    return c;
  }

  Value attend(const Value& x, const Value& y) const {
    require(x.cols() == y.cols(), "cross-attention dim mismatch");
    const double inv_scale = 1.0 / std::sqrt(double(x.cols()));
    const Value scores = ad::scale(
        ad::matmul_nt(ad::matmul(x, w_q), ad::matmul(y, w_k)), inv_scale);
    return ad::matmul(ad::softmax_rows(scores), ad::matmul(y, w_v));
  }

  /// Z = Z0 + FFN(Z0).
  Value apply(const Value& x, const Value& y) const {
    const Value z0 = attend(x, y);
    return ad::add(z0, ffn.apply(z0));
  }
};

/// Mutual-query refinement producing Z_TS and Z_V.
struct DualCrossAttention {
  CrossAttention ts_dir;  // queries = temporal features
  CrossAttention v_dir;   // queries = visual features

  static DualCrossAttention make(ParamStore& store, const EncoderConfig& cfg,
                                 Rng& rng) {
    DualCrossAttention d;
    d.ts_dir = CrossAttention::make(store, "contrast.ts_dir", cfg.model_dim,
                                    cfg.ffn_dim, rng);
    d.v_dir = CrossAttention::make(store, "contrast.v_dir", cfg.model_dim,
                                   cfg.ffn_dim, rng);
    return d;
  }

  std::pair<Value, Value> apply(const Value& f_ts, const Value& f_v) const {
    require(f_ts.rows() == f_v.rows() && f_ts.cols() == f_v.cols(),
            "dual cross-attention expects row-aligned equal-dim features");
    return {ts_dir.apply(f_ts, f_v), v_dir.apply(f_v, f_ts)};
  }
};

namespace detail {

inline Value gather_rows(const Value& m, const std::vector<int>& rows) {
  std::vector<Value> parts;
  parts.reserve(rows.size());
  for (int r : rows) parts.push_back(ad::slice_rows(m, r, 1));
  return parts.size() == 1 ? parts.front() : ad::concat_rows_many(parts);
}

}  // namespace detail

/// Intra-window loss for a short window: anchor is the visual feature at the
/// anomaly patch, positive its temporal counterpart, negatives the normal
/// temporal features inside the window. The denominator holds only the
/// negatives, exactly as printed, so the loss may go negative.
inline std::optional<Value> intra_window_loss(const Value& z_v,
                                              const Value& z_ts,
                                              const AnomalyWindow& w,
                                              double tau) {
  require(w.is_short(), "intra-window loss is defined for short windows");
  std::vector<int> negatives;
  for (int i = w.start; i < w.end; ++i)
    if (i < w.a_start || i >= w.a_end) negatives.push_back(i);
  if (negatives.empty()) return std::nullopt;

  const Value anchor = ad::slice_rows(z_v, w.a_start, 1);
  const Value pos = ad::scale(
      ad::matmul_nt(anchor, ad::slice_rows(z_ts, w.a_start, 1)), 1.0 / tau);
  const Value neg_sims = ad::scale(
      ad::matmul_nt(anchor, detail::gather_rows(z_ts, negatives)), 1.0 / tau);
  return ad::sub(ad::logsumexp_rows(neg_sims), pos);
}

/// Inter-window loss for a long window: mean-pooled features, anchor from the
/// temporal side, negatives the pooled visual features of normal windows.
inline std::optional<Value> inter_window_loss(
    const Value& z_ts, const Value& z_v, const AnomalyWindow& w,
    const std::vector<std::pair<int, int>>& normal_windows, double tau) {
  require(!w.is_short(), "inter-window loss is defined for long windows");
  if (normal_windows.empty()) return std::nullopt;

  const Value anchor = ad::mean_rows(z_ts, w.start, w.end);
  const Value pos = ad::scale(
      ad::matmul_nt(anchor, ad::mean_rows(z_v, w.start, w.end)), 1.0 / tau);
  std::vector<Value> pooled;
  pooled.reserve(normal_windows.size());
  for (const auto& [s, e] : normal_windows)
    pooled.push_back(ad::mean_rows(z_v, s, e));
  const Value negs = pooled.size() == 1 ? pooled.front()
                                        : ad::concat_rows_many(pooled);
  const Value neg_sims = ad::scale(ad::matmul_nt(anchor, negs), 1.0 / tau);
  return ad::sub(ad::logsumexp_rows(neg_sims), pos);
}

/// Per-instance anomaly-window contrastive term: mean of intra losses over
/// contributing short windows plus mean of inter losses over contributing
/// long windows. Returns a zero constant when nothing contributes.
inline Value awcl_instance_loss(const Value& z_ts, const Value& z_v,
                                const PatchLabels& pl, double tau,
                                bool enable_intra = true,
                                bool enable_inter = true) {
  const auto windows = build_anomaly_windows(pl);
  std::vector<Value> intra, inter;
  for (const auto& w : windows) {
    if (w.is_short()) {
      if (!enable_intra) continue;
      if (auto l = intra_window_loss(z_v, z_ts, w, tau)) intra.push_back(*l);
    } else {
      if (!enable_inter) continue;
      const auto normals = build_normal_windows(pl, windows, w.window_len());
      if (auto l = inter_window_loss(z_ts, z_v, w, normals, tau))
        inter.push_back(*l);
    }
  }

  auto mean_of = [](const std::vector<Value>& parts) {
    Value acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
    return ad::scale(acc, 1.0 / double(parts.size()));
  };

  Value total = Value::constant(Mat::Zero(1, 1));
  if (!intra.empty()) total = ad::add(total, mean_of(intra));
  if (!inter.empty()) total = ad::add(total, mean_of(inter));
  return total;
}

/// F_A = FFN([Z_TS ; Z_V]).
struct AnomalyFuser {
  Ffn ffn;  // 2d -> hidden -> d

  static AnomalyFuser make(ParamStore& store, const EncoderConfig& cfg,
                           Rng& rng) {
    AnomalyFuser f;
    f.ffn.lin1 = Linear::make(store, "contrast.fuse.lin1", 2 * cfg.model_dim,
                              cfg.ffn_dim, rng);
    f.ffn.lin2 = Linear::make(store, "contrast.fuse.lin2", cfg.ffn_dim,
                              cfg.model_dim, rng);
    return f;
  }

  Value fuse(const Value& z_ts, const Value& z_v) const {
    return ffn.apply(ad::concat_cols(z_ts, z_v));
  }
};

}  // namespace vetime::nn
