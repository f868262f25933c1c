#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vetime/nn.hpp"

namespace vetime::nn {

constexpr int kNumExperts = 3;  // order: TS, V, A
constexpr int kNumTasks = 2;    // order: anomaly detection, reconstruction

struct LossWeights {
  double lambda_aw = 0.1;
  double lambda_e = 0.2;

  void validate() const {
    require(lambda_aw >= 0.0 && lambda_e >= 0.0,
            "loss weights must be non-negative");
  }
};

/// Per-patch, per-task simplex weights over the three experts. Column layout
/// of the backing matrix: task * 3 + expert.
struct RouterWeights {
  Mat w;  // n_ts x 6

  double at(Eigen::Index patch, int expert, int task) const {
    return w(patch, Eigen::Index(task) * kNumExperts + expert);
  }
  Eigen::Index n_patches() const { return w.rows(); }
};

/// Routing network: per-patch MLP over F_A produces 3 x 2 expert logits, a
/// learnable task bias (broadcast over patches) is added, and Softmax runs
/// across the expert dimension.
class Router {
 public:
  Router() = default;

  static Router make(ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
    Router r;
    r.hidden_ = Linear::make(store, "router.hidden", cfg.model_dim,
                             cfg.model_dim, rng);
    r.out_ = Linear::make(store, "router.out", cfg.model_dim,
                          kNumExperts * kNumTasks, rng);
    r.b_task_ = store.create("router.b_task", 1, kNumExperts * kNumTasks,
                             Init::zeros, rng);
    return r;
  }

  Value route(const Value& f_a) const {
    Value logits = out_.apply(ad::gelu(hidden_.apply(f_a)));
    logits = ad::add_rowvec(logits, b_task_);
    return ad::softmax_col_blocks(logits, kNumExperts);
  }

  Value task_bias() const { return b_task_; }

 private:
  Linear hidden_;
  Linear out_;
  Value b_task_;
};

/// L_e = 1/(2 N_TS) * sum_i sum_t sum_m w log w, with 0 log 0 := 0.
/// Bounded in [-ln 3, 0]; minimized at uniform routing.
inline Value entropy_regularizer(const Value& weights) {
  return ad::scale(ad::sum_all(ad::xlogx(weights)),
                   1.0 / (2.0 * double(weights.rows())));
}

inline double entropy_regularizer(const RouterWeights& weights) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.w.rows(); ++i)
    for (Eigen::Index j = 0; j < weights.w.cols(); ++j) {
      const double v = weights.w(i, j);
      if (v > 0.0) acc += v * std::log(v);
    }
  return acc / (2.0 * double(weights.w.rows()));
}

/// Weighted expert summation, one fused feature matrix per task.
/// F_t = sum_m w[:, m, t] * F_m (patchwise scalar times feature row).
inline std::array<Value, kNumTasks> fuse(const Value& weights,
                                         const Value& f_ts, const Value& f_v,
                                         const Value& f_a) {
  expect(weights.cols() == kNumExperts * kNumTasks, "bad router weight shape");
  const std::array<const Value*, kNumExperts> experts{&f_ts, &f_v, &f_a};
  std::array<Value, kNumTasks> fused;
  for (int t = 0; t < kNumTasks; ++t) {
    Value acc;
    for (int m = 0; m < kNumExperts; ++m) {
      const Value part = ad::colwise_scale(
          *experts[m], ad::slice_cols(weights, t * kNumExperts + m, 1));
      acc = m == 0 ? part : ad::add(acc, part);
    }
    fused[t] = acc;
  }
  return fused;
}

struct Predictions {
  Value probs;  // L x 1 anomaly-class probabilities in (0, 1)
  Value recon;  // L x 1 reconstruction
};

/// Dedicated heads: a two-logit per-timestep classifier (softmax over the
/// two classes, anomaly class reported) and a linear reconstruction head,
/// both expanded to sequence length through learnable token projections.
class PredictionHeads {
 public:
  PredictionHeads() = default;

  static PredictionHeads make(ParamStore& store, const EncoderConfig& cfg,
                              Rng& rng, int patch_size, bool recon_head) {
    PredictionHeads h;
    h.logit_normal_ = TokenProjection::make(store, "head.logit_normal",
                                            cfg.model_dim, patch_size, rng);
    h.logit_anomaly_ = TokenProjection::make(store, "head.logit_anomaly",
                                             cfg.model_dim, patch_size, rng);
    if (recon_head)
      h.recon_ = TokenProjection::make(store, "head.recon", cfg.model_dim,
                                       patch_size, rng);
    h.has_recon_ = recon_head;
    return h;
  }

  Value classify(const Value& f_ad, Eigen::Index L) const {
    const Value z0 = logit_normal_.project_tokens_to_length(f_ad, L);
    const Value z1 = logit_anomaly_.project_tokens_to_length(f_ad, L);
    const Value probs = ad::softmax_rows(ad::concat_cols(z0, z1));
    return ad::slice_cols(probs, 1, 1);
  }

  Value reconstruct(const Value& f_rec, Eigen::Index L) const {
    expect(has_recon_, "reconstruction head disabled");
    return recon_.project_tokens_to_length(f_rec, L);
  }

  bool has_recon() const { return has_recon_; }

 private:
  TokenProjection logit_normal_;
  TokenProjection logit_anomaly_;
  TokenProjection recon_;
  bool has_recon_ = true;
};

/// Binary cross-entropy over anomaly probabilities, clamped for stability.
inline Value bce_loss(const Value& probs,
                      const std::vector<std::uint8_t>& labels) {
  expect(probs.cols() == 1 && probs.rows() == Eigen::Index(labels.size()),
         "bce: shape mismatch");
  Mat y(labels.size(), 1), y_inv(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(i, 0) = double(labels[i]);
    y_inv(i, 0) = 1.0 - double(labels[i]);
  }
  const Value p = ad::clamp(probs, 1e-7, 1.0 - 1e-7);
  const Value pos = ad::cmul(ad::log(p), y);
  const Value neg = ad::cmul(ad::log(ad::affine(p, -1.0, 1.0)), y_inv);
  return ad::scale(ad::mean_all(ad::add(pos, neg)), -1.0);
}

inline Value mse_loss(const Value& recon, const std::vector<double>& target) {
  expect(recon.cols() == 1 && recon.rows() == Eigen::Index(target.size()),
         "mse: shape mismatch");
  Mat t(target.size(), 1);
  for (std::size_t i = 0; i < target.size(); ++i) t(i, 0) = target[i];
  const Value d = ad::sub(recon, Value::constant(std::move(t)));
  return ad::mean_all(ad::mul(d, d));
}

struct LossParts {
  Value bce;
  Value mse;
  Value aw;
  Value entropy;
};

/// L_total = L_BCE + L_MSE + lambda_aw * L_aw + lambda_e * L_e.
inline Value total_loss(const LossParts& parts, const LossWeights& weights) {
  Value total = parts.bce;
  if (parts.mse.defined()) total = ad::add(total, parts.mse);
  if (parts.aw.defined())
    total = ad::add(total, ad::scale(parts.aw, weights.lambda_aw));
  if (parts.entropy.defined())
    total = ad::add(total, ad::scale(parts.entropy, weights.lambda_e));
  return total;
}

}  // namespace vetime::nn
