#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vetime/image.hpp"
#include "vetime/nn.hpp"
#include "vetime/series.hpp"

namespace vetime::nn {

struct EncoderConfig {
  int depth = 2;
  int heads = 4;
  int model_dim = 64;   // shared D_V = D_TS
  int ffn_dim = 128;
  int visual_patch = 16;
  int max_tokens = 128;  // capacity for learnable positional tables
  std::uint64_t seed = 0;

  void validate() const {
    require(depth >= 1 && heads >= 1 && model_dim >= 1 && ffn_dim >= 1 &&
                visual_patch >= 1 && max_tokens >= 1,
            "encoder config fields must be positive");
    require(model_dim % heads == 0, "model_dim must be divisible by heads");
  }
};

/// Extracts the flattened non-overlapping patches of a canvas, row-major
/// patch order, each row (patch*patch*3) wide.
inline Mat canvas_patch_matrix(const CanvasImage& img, int patch) {
  require(kCanvas % patch == 0, "visual_patch must divide the canvas size");
  const int g = kCanvas / patch;
  const Eigen::Index pdim = Eigen::Index(patch) * patch * 3;
  Mat out(Eigen::Index(g) * g, pdim);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const Eigen::Index row = Eigen::Index(gy) * g + gx;
      Eigen::Index at = 0;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int ch = 0; ch < 3; ++ch)
            out(row, at++) = img.at(gy * patch + py, gx * patch + px, ch);
    }
  return out;
}

/// Small trainable stand-in for the frozen ViT backbone: linear patch
/// embedding, fixed 2D sin/cos positions, pre-norm transformer blocks.
class VisualEncoder {
 public:
  VisualEncoder() = default;

  static VisualEncoder make(ParamStore& store, const EncoderConfig& cfg,
                            Rng& rng) {
    cfg.validate();
    require(kCanvas % cfg.visual_patch == 0,
            "visual_patch must divide the canvas size");
    VisualEncoder enc;
    enc.patch_ = cfg.visual_patch;
    enc.grid_ = kCanvas / cfg.visual_patch;
    const Eigen::Index pdim = Eigen::Index(enc.patch_) * enc.patch_ * 3;
    enc.embed_ = Linear::make(store, "visual.embed", pdim, cfg.model_dim, rng);
    enc.pos_ = sincos_positional_2d(enc.grid_, cfg.model_dim);
    for (int i = 0; i < cfg.depth; ++i)
      enc.blocks_.push_back(TransformerBlock::make(
          store, "visual.block" + std::to_string(i), cfg.model_dim, cfg.heads,
          cfg.ffn_dim, rng));
    return enc;
  }

  int grid() const { return grid_; }
  int n_tokens() const { return grid_ * grid_; }

  Value encode(const CanvasImage& img) const {
    return encode_patches(Value::constant(canvas_patch_matrix(img, patch_)));
  }

  Value encode_patches(const Value& patches) const {
    Value x = ad::add(embed_.apply(patches), Value::constant(pos_));
    for (const auto& b : blocks_) x = b.apply(x);
    return x;
  }

 private:
  int patch_ = 16;
  int grid_ = 14;
  Linear embed_;
  Mat pos_;
  std::vector<TransformerBlock> blocks_;
};

/// Patch-token transformer over the 1D series: linear patch embedding,
/// learnable positions, transformer blocks, layer-normalized output.
class TemporalEncoder {
 public:
  TemporalEncoder() = default;

  static TemporalEncoder make(ParamStore& store, const EncoderConfig& cfg,
                              Rng& rng, int patch_size) {
    cfg.validate();
    TemporalEncoder enc;
    enc.embed_ =
        Linear::make(store, "temporal.embed", patch_size, cfg.model_dim, rng);
    enc.pos_ = store.create("temporal.pos", cfg.max_tokens, cfg.model_dim,
                            Init::truncated_normal, rng);
    for (int i = 0; i < cfg.depth; ++i)
      enc.blocks_.push_back(TransformerBlock::make(
          store, "temporal.block" + std::to_string(i), cfg.model_dim,
          cfg.heads, cfg.ffn_dim, rng));
    enc.final_ln_ = LayerNorm::make(store, "temporal.ln", cfg.model_dim, rng);
    return enc;
  }

  static Mat patch_token_matrix(const PatchGrid& grid) {
    Mat out(grid.n_patches(), grid.patch_size);
    for (int i = 0; i < grid.n_patches(); ++i)
      for (int j = 0; j < grid.patch_size; ++j) out(i, j) = grid.tokens[i][j];
    return out;
  }

  Value encode(const PatchGrid& grid) const {
    return encode_tokens(Value::constant(patch_token_matrix(grid)), true);
  }

  /// `with_positions=false` drops the positional table (used by tests probing
  /// permutation equivariance).
  Value encode_tokens(const Value& tokens, bool with_positions) const {
    const Eigen::Index n = tokens.rows();
    require(n <= pos_.rows(),
            "series produces more patches than max_tokens allows");
    Value x = embed_.apply(tokens);
    if (with_positions) x = ad::add(x, ad::slice_rows(pos_, 0, n));
    for (const auto& b : blocks_) x = b.apply(x);
    return final_ln_.apply(x);
  }

 private:
  Linear embed_;
  Value pos_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_ln_;
};

}  // namespace vetime::nn
