#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vetime/alignment.hpp"
#include "vetime/contrast.hpp"
#include "vetime/encoders.hpp"
#include "vetime/fusion.hpp"
#include "vetime/image.hpp"
#include "vetime/series.hpp"

namespace vetime {

enum class FusionMode { router, concat, add };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::router: return "router";
    case FusionMode::concat: return "concat";
    case FusionMode::add: return "add";
  }
  return "router";
}

inline FusionMode fusion_mode_from_name(const std::string& s) {
  if (s == "router") return FusionMode::router;
  if (s == "concat") return FusionMode::concat;
  if (s == "add") return FusionMode::add;
  throw ValidationError("unknown fusion mode: " + s);
}

struct AblationConfig {
  bool disable_ric = false;   // line-plot canvas instead of the conversion
  bool disable_pta = false;   // direct mean-pool of visual tokens
  bool disable_awcl = false;  // skip cross-attention and contrastive terms
  bool disable_intra = false;
  bool disable_inter = false;
  FusionMode fusion = FusionMode::router;
  bool recon_head = true;
};

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  int batch_size = 32;
  int max_epochs = 10;  // paper caps at 25; desk-scale default
  int patience = 4;

  void validate() const {
    require(learning_rate > 0.0 && weight_decay >= 0.0,
            "bad optimizer settings");
    require(batch_size >= 1 && max_epochs >= 1 && patience >= 0,
            "bad optimizer settings");
    require(max_epochs <= 25, "max_epochs capped at 25");
  }
};

struct RunConfig {
  std::uint64_t seed = 42;
  int patch_size = 16;
  nn::EncoderConfig encoder;
  nn::ContrastiveConfig contrastive;
  nn::LossWeights loss;
  OptimizerConfig optimizer;
  AblationConfig ablation;
  int ma_kernel = 25;
  double norm_epsilon = 1e-8;
  double event_threshold = 0.5;
  int vus_max_buffer = -1;  // < 0 selects min(L/20, 16) per series

  void validate() const {
    require(patch_size >= 1, "patch_size must be >= 1");
    require(ma_kernel >= 1 && ma_kernel % 2 == 1, "ma_kernel must be odd");
    require(norm_epsilon > 0.0, "norm_epsilon must be positive");
    encoder.validate();
    contrastive.validate();
    loss.validate();
    optimizer.validate();
  }
};

/// Everything the forward pass needs, computed once per series: the
/// normalization, the patch grid, and the canvas-derived token inputs.
/// The canvas pixels are dropped after patch extraction; the plan is kept.
struct PreparedInstance {
  Series normalized;
  NormStats stats;
  PatchGrid patches;
  std::vector<std::uint8_t> labels;  // point labels, may be empty
  PatchLabels patch_labels;          // empty when unlabeled
  FoldPlan plan;
  nn::Mat visual_tokens;    // N_V x (visual_patch^2 * 3)
  nn::Mat temporal_tokens;  // N_TS x patch_size

  int n_ts() const { return patches.n_patches(); }
  Eigen::Index length() const {
    return static_cast<Eigen::Index>(normalized.length());
  }
  bool has_labels() const { return !labels.empty(); }
};

inline PreparedInstance prepare_instance(const LabeledSeries& inst,
                                         const RunConfig& cfg) {
  inst.validate();
  require(inst.series.length() >= std::size_t(cfg.patch_size),
          "series shorter than one patch");
  PreparedInstance prep;
  auto [norm, stats] = instance_normalize(inst.series, cfg.norm_epsilon);
  prep.normalized = std::move(norm);
  prep.stats = stats;
  prep.patches = patchify(prep.normalized, cfg.patch_size);
  prep.labels = inst.labels;
  if (!inst.labels.empty())
    prep.patch_labels = point_labels_to_patch_labels(inst.labels, cfg.patch_size);

  const CanvasImage canvas =
      cfg.ablation.disable_ric
          ? render_line_plot(prep.normalized)
          : convert(prep.normalized, cfg.encoder.visual_patch, cfg.ma_kernel);
  prep.plan = canvas.plan;
  prep.visual_tokens = nn::canvas_patch_matrix(canvas, cfg.encoder.visual_patch);
  prep.temporal_tokens = nn::TemporalEncoder::patch_token_matrix(prep.patches);
  return prep;
}

struct PreparedMulti {
  std::vector<PreparedInstance> variables;  // per-variable temporal inputs
  nn::Mat visual_tokens;                    // from the composite canvas
  FoldPlan plan;
  std::vector<std::uint8_t> labels;

  int n_variables() const { return static_cast<int>(variables.size()); }
};

inline PreparedMulti prepare_multivariate(const MultiSeries& ms,
                                          const RunConfig& cfg) {
  ms.validate();
  PreparedMulti prep;
  prep.labels = ms.labels;
  MultiSeries normalized = ms;
  for (std::size_t v = 0; v < ms.n_variables(); ++v) {
    LabeledSeries per_var{ms.variables[v], ms.labels};
    prep.variables.push_back(prepare_instance(per_var, cfg));
    normalized.variables[v] = prep.variables.back().normalized;
  }
  const CanvasImage canvas = convert_multivariate(
      normalized, default_gammas(ms.n_variables()), cfg.encoder.visual_patch,
      cfg.ma_kernel);
  prep.plan = canvas.plan;
  prep.visual_tokens = nn::canvas_patch_matrix(canvas, cfg.encoder.visual_patch);
  return prep;
}

struct ForwardResult {
  ad::Value probs;  // L x 1
  ad::Value recon;  // L x 1, undefined when the head is disabled
  nn::LossParts parts;
  ad::Value total;                        // defined when losses requested
  std::optional<nn::RouterWeights> router;  // router fusion only

  std::vector<double> scores() const {
    std::vector<double> out(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) out[i] = probs.val()(i, 0);
    return out;
  }
  std::vector<double> reconstruction() const {
    if (!recon.defined()) return {};
    std::vector<double> out(recon.rows());
    for (Eigen::Index i = 0; i < recon.rows(); ++i) out[i] = recon.val()(i, 0);
    return out;
  }
};

class VetimeModel {
 public:
  explicit VetimeModel(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed ^ splitmix64(cfg_.encoder.seed + 1));
    visual_ = nn::VisualEncoder::make(store_, cfg_.encoder, rng);
    temporal_ =
        nn::TemporalEncoder::make(store_, cfg_.encoder, rng, cfg_.patch_size);
    aligner_ = nn::TemporalAligner::make(store_, cfg_.encoder, rng);
    dca_ = nn::DualCrossAttention::make(store_, cfg_.encoder, rng);
    fuser_ = nn::AnomalyFuser::make(store_, cfg_.encoder, rng);
    router_ = nn::Router::make(store_, cfg_.encoder, rng);
    concat_fusion_ = nn::Linear::make(store_, "fusion.concat",
                                      3 * cfg_.encoder.model_dim,
                                      cfg_.encoder.model_dim, rng);
    heads_ = nn::PredictionHeads::make(store_, cfg_.encoder, rng,
                                       cfg_.patch_size,
                                       cfg_.ablation.recon_head);
  }

  const RunConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  /// Full pipeline on one prepared instance. with_losses requires labels
  /// and builds the graph for L_total; otherwise only predictions are made.
  ForwardResult forward(const PreparedInstance& prep, bool with_losses) const {
    const int n_ts = prep.n_ts();
    const Eigen::Index L = prep.length();
    const auto& ab = cfg_.ablation;

    const ad::Value f_v0 =
        visual_.encode_patches(ad::Value::constant(prep.visual_tokens));
    const ad::Value f_ts = temporal_.encode_tokens(
        ad::Value::constant(prep.temporal_tokens), true);

    ad::Value f_v;
    if (ab.disable_pta) {
      const ad::Value pooled = ad::const_mul_left(
          nn::direct_pool_matrix(f_v0.rows(), n_ts), f_v0);
      f_v = aligner_.project_only(pooled);
    } else {
      f_v = aligner_.temporalize(aligner_.align(f_v0, n_ts));
    }

    ad::Value z_ts = f_ts, z_v = f_v;
    if (!ab.disable_awcl) {
      auto [zt, zv] = dca_.apply(f_ts, f_v);
      z_ts = zt;
      z_v = zv;
    }
    const ad::Value f_a = fuser_.fuse(z_ts, z_v);

    ForwardResult res;
    ad::Value f_ad, f_rec;
    switch (ab.fusion) {
      case FusionMode::router: {
        const ad::Value w = router_.route(f_a);
        res.parts.entropy = nn::entropy_regularizer(w);
        auto fused = nn::fuse(w, f_ts, f_v, f_a);
        f_ad = fused[0];
        f_rec = fused[1];
        res.router = nn::RouterWeights{w.val()};
        break;
      }
      case FusionMode::concat: {
        const ad::Value cat = ad::concat_cols_many({f_ts, f_v, f_a});
        f_ad = concat_fusion_.apply(cat);
        f_rec = f_ad;
        break;
      }
      case FusionMode::add: {
        f_ad = ad::add(ad::add(f_ts, f_v), f_a);
        f_rec = f_ad;
        break;
      }
    }

    res.probs = heads_.classify(f_ad, L);
    if (heads_.has_recon()) res.recon = heads_.reconstruct(f_rec, L);

    if (with_losses) {
      require(prep.has_labels(), "training forward requires labels");
      res.parts.bce = nn::bce_loss(res.probs, prep.labels);
      if (heads_.has_recon())
        res.parts.mse = nn::mse_loss(res.recon, prep.normalized.values);
      if (!ab.disable_awcl)
        res.parts.aw = nn::awcl_instance_loss(
            z_ts, z_v, prep.patch_labels, cfg_.contrastive.tau,
            !ab.disable_intra, !ab.disable_inter);
      res.total = nn::total_loss(res.parts, cfg_.loss);
    }
    return res;
  }

  /// Multivariate pipeline: shared encoders, composite canvas, per-variable
  /// alignment / contrast / fusion. The combined anomaly score at each
  /// timestamp is the max over variables; losses average over variables.
  struct MultiResult {
    std::vector<ForwardResult> per_variable;
    std::vector<double> combined_scores;
    ad::Value total;  // defined when losses requested
  };

  MultiResult forward_multivariate(const PreparedMulti& prep,
                                   bool with_losses) const {
    const auto& ab = cfg_.ablation;
    require(!prep.variables.empty(), "empty multivariate instance");
    const int n_v = prep.n_variables();
    const int n_ts = prep.variables.front().n_ts();
    const Eigen::Index L = prep.variables.front().length();

    const ad::Value f_v0 =
        visual_.encode_patches(ad::Value::constant(prep.visual_tokens));
    std::vector<ad::Value> aligned;
    if (ab.disable_pta) {
      const ad::Value pooled = ad::const_mul_left(
          nn::direct_pool_matrix(f_v0.rows(), n_ts), f_v0);
      for (int v = 0; v < n_v; ++v) aligned.push_back(pooled);
    } else {
      aligned = aligner_.align_multivariate(f_v0, n_ts, n_v);
    }

    MultiResult out;
    out.combined_scores.assign(L, 0.0);
    ad::Value total_acc;
    for (int v = 0; v < n_v; ++v) {
      const auto& var = prep.variables[v];
      const ad::Value f_ts = temporal_.encode_tokens(
          ad::Value::constant(var.temporal_tokens), true);
      const ad::Value f_v = ab.disable_pta
                                ? aligner_.project_only(aligned[v])
                                : aligner_.temporalize(aligned[v]);

      ad::Value z_ts = f_ts, z_v = f_v;
      if (!ab.disable_awcl) {
        auto [zt, zv] = dca_.apply(f_ts, f_v);
        z_ts = zt;
        z_v = zv;
      }
      const ad::Value f_a = fuser_.fuse(z_ts, z_v);

      ForwardResult res;
      ad::Value f_ad, f_rec;
      if (ab.fusion == FusionMode::router) {
        const ad::Value w = router_.route(f_a);
        res.parts.entropy = nn::entropy_regularizer(w);
        auto fused = nn::fuse(w, f_ts, f_v, f_a);
        f_ad = fused[0];
        f_rec = fused[1];
        res.router = nn::RouterWeights{w.val()};
      } else if (ab.fusion == FusionMode::concat) {
        f_ad = concat_fusion_.apply(ad::concat_cols_many({f_ts, f_v, f_a}));
        f_rec = f_ad;
      } else {
        f_ad = ad::add(ad::add(f_ts, f_v), f_a);
        f_rec = f_ad;
      }
      res.probs = heads_.classify(f_ad, L);
      if (heads_.has_recon()) res.recon = heads_.reconstruct(f_rec, L);

      if (with_losses) {
        require(!prep.labels.empty(), "training forward requires labels");
        res.parts.bce = nn::bce_loss(res.probs, prep.labels);
        if (heads_.has_recon())
          res.parts.mse = nn::mse_loss(res.recon, var.normalized.values);
        if (!ab.disable_awcl)
          res.parts.aw = nn::awcl_instance_loss(
              z_ts, z_v, var.patch_labels, cfg_.contrastive.tau,
              !ab.disable_intra, !ab.disable_inter);
        res.total = nn::total_loss(res.parts, cfg_.loss);
        total_acc = total_acc.defined() ? ad::add(total_acc, res.total)
                                        : res.total;
      }
      for (Eigen::Index t = 0; t < L; ++t)
        out.combined_scores[t] =
            std::max(out.combined_scores[t], res.probs.val()(t, 0));
      out.per_variable.push_back(std::move(res));
    }
    if (with_losses) out.total = ad::scale(total_acc, 1.0 / double(n_v));
    return out;
  }

 private:
  RunConfig cfg_;
  nn::ParamStore store_;
  nn::VisualEncoder visual_;
  nn::TemporalEncoder temporal_;
  nn::TemporalAligner aligner_;
  nn::DualCrossAttention dca_;
  nn::AnomalyFuser fuser_;
  nn::Router router_;
  nn::Linear concat_fusion_;
  nn::PredictionHeads heads_;
};

}  // namespace vetime
