#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vetime/autodiff.hpp"
#include "vetime/common.hpp"

namespace vetime::nn {

using ad::Mat;
using ad::Value;

enum class Init { truncated_normal, zeros, ones };

/// Named parameter registry. Registration order is the canonical order for
/// optimizer state and checkpoint layout, so model construction must create
/// parameters deterministically.
class ParamStore {
 public:
  Value create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
               Init init, Rng& rng) {
    require(!index_.count(name), "duplicate parameter name: " + name);
    Mat m(rows, cols);
    switch (init) {
      case Init::truncated_normal:
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.truncated_normal(0.02);
        break;
      case Init::zeros:
        m.setZero();
        break;
      case Init::ones:
        m.setOnes();
        break;
    }
    Value v = Value::param(std::move(m));
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Value>>& entries() const {
    return entries_;
  }

  Value get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second].second;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& [name, v] : entries_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Value>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Linear {
  Value weight;  // in x out
  Value bias;    // 1 x out

  static Linear make(ParamStore& store, const std::string& prefix,
                     Eigen::Index in, Eigen::Index out, Rng& rng) {
    Linear l;
    l.weight = store.create(prefix + ".weight", in, out,
                            Init::truncated_normal, rng);
    l.bias = store.create(prefix + ".bias", 1, out, Init::zeros, rng);
    return l;
  }

  Value apply(const Value& x) const {
    return ad::add_rowvec(ad::matmul(x, weight), bias);
  }
};

struct LayerNorm {
  Value gamma;
  Value beta;

  static LayerNorm make(ParamStore& store, const std::string& prefix,
                        Eigen::Index dim, Rng& rng) {
    LayerNorm ln;
    ln.gamma = store.create(prefix + ".gamma", 1, dim, Init::ones, rng);
    ln.beta = store.create(prefix + ".beta", 1, dim, Init::zeros, rng);
    return ln;
  }

  Value apply(const Value& x) const {
    return ad::layer_norm_rows(x, gamma, beta);
  }
};

struct Ffn {
  Linear lin1;
  Linear lin2;

  static Ffn make(ParamStore& store, const std::string& prefix,
                  Eigen::Index dim, Eigen::Index hidden, Rng& rng) {
    Ffn f;
    f.lin1 = Linear::make(store, prefix + ".lin1", dim, hidden, rng);
    f.lin2 = Linear::make(store, prefix + ".lin2", hidden, dim, rng);
    return f;
  }

  Value apply(const Value& x) const {
    return lin2.apply(ad::gelu(lin1.apply(x)));
  }
};

/// Multi-head self-attention; rows of the softmax weights sum to 1 per head.
struct MultiHeadSelfAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadSelfAttention make(ParamStore& store,
                                     const std::string& prefix,
                                     Eigen::Index dim, int heads, Rng& rng) {
    require(dim % heads == 0, "model_dim must be divisible by heads");
    MultiHeadSelfAttention a;
    a.heads = heads;
    a.q = Linear::make(store, prefix + ".q", dim, dim, rng);
    a.k = Linear::make(store, prefix + ".k", dim, dim, rng);
    a.v = Linear::make(store, prefix + ".v", dim, dim, rng);
    a.o = Linear::make(store, prefix + ".o", dim, dim, rng);
    return a;
  }

  Value apply(const Value& x) const {
    const Eigen::Index dim = x.cols();
    const Eigen::Index hd = dim / heads;
    const Value Q = q.apply(x), K = k.apply(x), V = v.apply(x);
    std::vector<Value> outs;
    outs.reserve(heads);
    const double inv_scale = 1.0 / std::sqrt(double(hd));
    for (int h = 0; h < heads; ++h) {
      const Value qh = ad::slice_cols(Q, h * hd, hd);
      const Value kh = ad::slice_cols(K, h * hd, hd);
      const Value vh = ad::slice_cols(V, h * hd, hd);
      const Value attn =
          ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_scale));
      outs.push_back(ad::matmul(attn, vh));
    }
    return o.apply(outs.size() == 1 ? outs.front()
                                    : ad::concat_cols_many(outs));
  }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadSelfAttention attn;
  Ffn ffn;

  static TransformerBlock make(ParamStore& store, const std::string& prefix,
                               Eigen::Index dim, int heads,
                               Eigen::Index ffn_dim, Rng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNorm::make(store, prefix + ".ln1", dim, rng);
    b.attn = MultiHeadSelfAttention::make(store, prefix + ".attn", dim, heads, rng);
    b.ln2 = LayerNorm::make(store, prefix + ".ln2", dim, rng);
    b.ffn = Ffn::make(store, prefix + ".ffn", dim, ffn_dim, rng);
    return b;
  }

  Value apply(const Value& x) const {
    Value h = ad::add(x, attn.apply(ln1.apply(x)));
    return ad::add(h, ffn.apply(ln2.apply(h)));
  }
};

/// Fixed 2D sin/cos positional table for a g x g patch grid, row-major
/// patch order. Half the channels encode the row position, half the column.
inline Mat sincos_positional_2d(int grid, Eigen::Index dim) {
  require(dim % 4 == 0, "positional dim must be divisible by 4");
  const Eigen::Index half = dim / 2;
  const Eigen::Index quarter = dim / 4;
  Mat table(Eigen::Index(grid) * grid, dim);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      const Eigen::Index row = Eigen::Index(r) * grid + c;
      for (Eigen::Index f = 0; f < quarter; ++f) {
        const double omega =
            std::pow(10000.0, -double(f) / double(quarter));
        table(row, 2 * f) = std::sin(r * omega);
        table(row, 2 * f + 1) = std::cos(r * omega);
        table(row, half + 2 * f) = std::sin(c * omega);
        table(row, half + 2 * f + 1) = std::cos(c * omega);
      }
    }
  return table;
}

/// Per-patch learnable expansion of token rows to patch_size per-timestep
/// values; concatenated and truncated to the original length.
struct TokenProjection {
  Value weight;  // in_dim x patch_size
  Value bias;    // 1 x patch_size

  static TokenProjection make(ParamStore& store, const std::string& prefix,
                              Eigen::Index in_dim, Eigen::Index patch_size,
                              Rng& rng) {
    TokenProjection p;
    p.weight = store.create(prefix + ".weight", in_dim, patch_size,
                            Init::truncated_normal, rng);
    p.bias = store.create(prefix + ".bias", 1, patch_size, Init::zeros, rng);
    return p;
  }

  /// tokens: N_TS x in_dim -> sequence of length L (padding dropped).
  Value project_tokens_to_length(const Value& tokens, Eigen::Index L) const {
    const Eigen::Index expanded = tokens.rows() * weight.cols();
    expect(expanded >= L, "token grid too short for requested length");
    Value per_step = ad::add_rowvec(ad::matmul(tokens, weight), bias);
    Value flat = ad::flatten_rowmajor(per_step);
    return L == expanded ? flat : ad::slice_rows(flat, 0, L);
  }
};

}  // namespace vetime::nn
