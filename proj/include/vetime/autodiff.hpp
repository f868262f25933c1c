#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vetime/common.hpp"

namespace vetime::ad {

using Mat = Eigen::MatrixXd;

/// Reverse-mode autodiff over double-precision matrices. Each op builds a
/// graph node holding the forward value and a closure that scatters the
/// output gradient to its parents. Parameters are leaf nodes whose gradients
/// accumulate across backward() calls until zero_grad().
struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
};

using NodePtr = std::shared_ptr<Node>;

inline void accum_grad(Node& n, const Mat& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : node(std::move(n)) {}

  static Value constant(Mat m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    return Value(n);
  }

  static Value param(Mat m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    n->requires_grad = true;
    return Value(n);
  }

  bool defined() const { return node != nullptr; }
  const Mat& val() const { return node->value; }
  // The wrapper shares node ownership, so in-place parameter updates
  // (optimizer steps, checkpoint restore) go through this accessor.
  Mat& mutable_val() const { return node->value; }
  const Mat& grad() const { return node->grad; }
  bool has_grad() const { return node->grad.size() != 0; }
  Eigen::Index rows() const { return node->value.rows(); }
  Eigen::Index cols() const { return node->value.cols(); }

  void zero_grad() { node->grad.setZero(node->value.rows(), node->value.cols()); }

  NodePtr node;
};

namespace detail {

inline Value make_op(Mat value, std::vector<NodePtr> parents,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Value(n);
}

}  // namespace detail

/// Seeds the root gradient and runs one reverse sweep in topological order.
inline void backward(const Value& root, double seed = 1.0) {
  expect(root.rows() == 1 && root.cols() == 1,
         "backward expects a scalar root");
  if (!root.node->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node.get(), 0}};
  visited.insert(root.node.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  accum_grad(*root.node, Mat::Constant(1, 1, seed));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

// ---- elementwise ----------------------------------------------------------

inline Value add(const Value& a, const Value& b) {
  expect(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return detail::make_op(a.val() + b.val(), {a.node, b.node}, [](Node& n) {
    accum_grad(*n.parents[0], n.grad);
    accum_grad(*n.parents[1], n.grad);
  });
}

inline Value sub(const Value& a, const Value& b) {
  expect(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return detail::make_op(a.val() - b.val(), {a.node, b.node}, [](Node& n) {
    accum_grad(*n.parents[0], n.grad);
    accum_grad(*n.parents[1], -n.grad);
  });
}

inline Value mul(const Value& a, const Value& b) {
  expect(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return detail::make_op(
      a.val().cwiseProduct(b.val()), {a.node, b.node}, [](Node& n) {
        accum_grad(*n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
        accum_grad(*n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
      });
}

inline Value affine(const Value& a, double alpha, double beta) {
  return detail::make_op((alpha * a.val()).array() + beta, {a.node},
                         [alpha](Node& n) {
                           accum_grad(*n.parents[0], alpha * n.grad);
                         });
}

inline Value scale(const Value& a, double s) { return affine(a, s, 0.0); }

inline Value add_rowvec(const Value& a, const Value& b) {
  expect(b.rows() == 1 && b.cols() == a.cols(), "add_rowvec: shape mismatch");
  Mat out = a.val();
  out.rowwise() += b.val().row(0);
  return detail::make_op(std::move(out), {a.node, b.node}, [](Node& n) {
    accum_grad(*n.parents[0], n.grad);
    accum_grad(*n.parents[1], n.grad.colwise().sum());
  });
}

inline Value cmul(const Value& a, const Mat& mask) {
  expect(a.rows() == mask.rows() && a.cols() == mask.cols(),
         "cmul: shape mismatch");
  return detail::make_op(a.val().cwiseProduct(mask), {a.node}, [mask](Node& n) {
    accum_grad(*n.parents[0], n.grad.cwiseProduct(mask));
  });
}

inline Value gelu(const Value& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  Mat out = a.val().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  });
  return detail::make_op(std::move(out), {a.node}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat d = x.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
    accum_grad(*n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline Value log(const Value& a) {
  return detail::make_op(a.val().array().log().matrix(), {a.node}, [](Node& n) {
    accum_grad(*n.parents[0],
               n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

inline Value clamp(const Value& a, double lo, double hi) {
  Mat out = a.val().cwiseMax(lo).cwiseMin(hi);
  return detail::make_op(std::move(out), {a.node}, [lo, hi](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat g = n.grad;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x(i) <= lo || x(i) >= hi) g(i) = 0.0;
    accum_grad(*n.parents[0], g);
  });
}

/// x * log(x) with the 0 log 0 := 0 convention.
inline Value xlogx(const Value& a) {
  Mat out = a.val().unaryExpr(
      [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; });
  return detail::make_op(std::move(out), {a.node}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat d = x.unaryExpr(
        [](double v) { return v > 0.0 ? std::log(v) + 1.0 : 0.0; });
    accum_grad(*n.parents[0], n.grad.cwiseProduct(d));
  });
}

// ---- linear algebra -------------------------------------------------------

inline Value matmul(const Value& a, const Value& b) {
  expect(a.cols() == b.rows(), "matmul: inner dim mismatch");
  return detail::make_op(a.val() * b.val(), {a.node, b.node}, [](Node& n) {
    accum_grad(*n.parents[0], n.grad * n.parents[1]->value.transpose());
    accum_grad(*n.parents[1], n.parents[0]->value.transpose() * n.grad);
  });
}

/// a * b^T without materializing a transpose node.
inline Value matmul_nt(const Value& a, const Value& b) {
  expect(a.cols() == b.cols(), "matmul_nt: inner dim mismatch");
  return detail::make_op(a.val() * b.val().transpose(), {a.node, b.node},
                         [](Node& n) {
                           accum_grad(*n.parents[0], n.grad * n.parents[1]->value);
                           accum_grad(*n.parents[1],
                                      n.grad.transpose() * n.parents[0]->value);
                         });
}

/// Fixed (non-learnable) linear map applied on the left: out = A * b.
inline Value const_mul_left(Mat A, const Value& b) {
  expect(A.cols() == b.rows(), "const_mul_left: inner dim mismatch");
  Mat out = A * b.val();
  return detail::make_op(std::move(out), {b.node}, [A = std::move(A)](Node& n) {
    accum_grad(*n.parents[0], A.transpose() * n.grad);
  });
}

/// out[i, :] = w(i) * a[i, :] for a column vector of per-row weights.
inline Value colwise_scale(const Value& a, const Value& w) {
  expect(w.cols() == 1 && w.rows() == a.rows(), "colwise_scale: shape mismatch");
  Mat out = a.val().array().colwise() * w.val().col(0).array();
  return detail::make_op(std::move(out), {a.node, w.node}, [](Node& n) {
    const Mat& a = n.parents[0]->value;
    const Mat& w = n.parents[1]->value;
    accum_grad(*n.parents[0], n.grad.array().colwise() * w.col(0).array());
    accum_grad(*n.parents[1],
               n.grad.cwiseProduct(a).rowwise().sum());
  });
}

// ---- shape ops ------------------------------------------------------------

inline Value slice_rows(const Value& a, Eigen::Index r0, Eigen::Index n) {
  expect(r0 >= 0 && r0 + n <= a.rows(), "slice_rows out of range");
  return detail::make_op(a.val().middleRows(r0, n), {a.node}, [r0, n](Node& nd) {
    Mat g = Mat::Zero(nd.parents[0]->value.rows(), nd.parents[0]->value.cols());
    g.middleRows(r0, n) = nd.grad;
    accum_grad(*nd.parents[0], g);
  });
}

inline Value slice_cols(const Value& a, Eigen::Index c0, Eigen::Index n) {
  expect(c0 >= 0 && c0 + n <= a.cols(), "slice_cols out of range");
  return detail::make_op(a.val().middleCols(c0, n), {a.node}, [c0, n](Node& nd) {
    Mat g = Mat::Zero(nd.parents[0]->value.rows(), nd.parents[0]->value.cols());
    g.middleCols(c0, n) = nd.grad;
    accum_grad(*nd.parents[0], g);
  });
}

inline Value concat_cols(const Value& a, const Value& b) {
  expect(a.rows() == b.rows(), "concat_cols: row mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.val(), b.val();
  return detail::make_op(std::move(out), {a.node, b.node}, [](Node& n) {
    const Eigen::Index ca = n.parents[0]->value.cols();
    accum_grad(*n.parents[0], n.grad.leftCols(ca));
    accum_grad(*n.parents[1], n.grad.rightCols(n.grad.cols() - ca));
  });
}

inline Value concat_cols_many(const std::vector<Value>& parts) {
  expect(!parts.empty(), "concat_cols_many: empty");
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.cols();
  Mat out(parts.front().rows(), total);
  std::vector<NodePtr> parents;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.val();
    at += p.cols();
    parents.push_back(p.node);
    widths.push_back(p.cols());
  }
  return detail::make_op(std::move(out), std::move(parents),
                         [widths](Node& n) {
                           Eigen::Index at = 0;
                           for (std::size_t i = 0; i < widths.size(); ++i) {
                             accum_grad(*n.parents[i],
                                        n.grad.middleCols(at, widths[i]));
                             at += widths[i];
                           }
                         });
}

inline Value concat_rows(const Value& a, const Value& b) {
  expect(a.cols() == b.cols(), "concat_rows: col mismatch");
  Mat out(a.rows() + b.rows(), a.cols());
  out << a.val(), b.val();
  return detail::make_op(std::move(out), {a.node, b.node}, [](Node& n) {
    const Eigen::Index ra = n.parents[0]->value.rows();
    accum_grad(*n.parents[0], n.grad.topRows(ra));
    accum_grad(*n.parents[1], n.grad.bottomRows(n.grad.rows() - ra));
  });
}

inline Value concat_rows_many(const std::vector<Value>& parts) {
  expect(!parts.empty(), "concat_rows_many: empty");
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.rows();
  Mat out(total, parts.front().cols());
  std::vector<NodePtr> parents;
  std::vector<Eigen::Index> heights;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.val();
    at += p.rows();
    parents.push_back(p.node);
    heights.push_back(p.rows());
  }
  return detail::make_op(std::move(out), std::move(parents),
                         [heights](Node& n) {
                           Eigen::Index at = 0;
                           for (std::size_t i = 0; i < heights.size(); ++i) {
                             accum_grad(*n.parents[i],
                                        n.grad.middleRows(at, heights[i]));
                             at += heights[i];
                           }
                         });
}

/// Row-major flatten to a single column vector.
inline Value flatten_rowmajor(const Value& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  Mat out(r * c, 1);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out(i * c + j, 0) = a.val()(i, j);
  return detail::make_op(std::move(out), {a.node}, [r, c](Node& n) {
    Mat g(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) g(i, j) = n.grad(i * c + j, 0);
    accum_grad(*n.parents[0], g);
  });
}

// ---- reductions -----------------------------------------------------------

inline Value sum_all(const Value& a) {
  return detail::make_op(Mat::Constant(1, 1, a.val().sum()), {a.node},
                         [](Node& n) {
                           accum_grad(*n.parents[0],
                                      Mat::Constant(n.parents[0]->value.rows(),
                                                    n.parents[0]->value.cols(),
                                                    n.grad(0, 0)));
                         });
}

inline Value mean_all(const Value& a) {
  return scale(sum_all(a), 1.0 / double(a.rows() * a.cols()));
}

/// Mean over the row range [r0, r1) -> 1 x C.
inline Value mean_rows(const Value& a, Eigen::Index r0, Eigen::Index r1) {
  expect(r0 >= 0 && r1 > r0 && r1 <= a.rows(), "mean_rows: bad range");
  Mat out = a.val().middleRows(r0, r1 - r0).colwise().mean();
  return detail::make_op(std::move(out), {a.node}, [r0, r1](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    const double inv = 1.0 / double(r1 - r0);
    for (Eigen::Index r = r0; r < r1; ++r) g.row(r) = inv * n.grad.row(0);
    accum_grad(*n.parents[0], g);
  });
}

// ---- softmax family -------------------------------------------------------

inline Value softmax_rows(const Value& a) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.val().row(i).maxCoeff();
    Eigen::RowVectorXd e = (a.val().row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return detail::make_op(std::move(out), {a.node}, [](Node& n) {
    const Mat& y = n.value;
    Mat g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = n.grad.row(i).cwiseProduct(y.row(i)).sum();
      g.row(i) = y.row(i).cwiseProduct(n.grad.row(i).array() - dot);
    }
    accum_grad(*n.parents[0], g);
  });
}

/// Softmax applied independently within each contiguous block of `block`
/// columns of every row (used by the expert router).
inline Value softmax_col_blocks(const Value& a, Eigen::Index block) {
  expect(a.cols() % block == 0, "softmax_col_blocks: width not divisible");
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index b = 0; b < a.cols(); b += block) {
      const auto seg = a.val().row(i).segment(b, block);
      const double m = seg.maxCoeff();
      Eigen::RowVectorXd e = (seg.array() - m).exp();
      out.row(i).segment(b, block) = e / e.sum();
    }
  return detail::make_op(std::move(out), {a.node}, [block](Node& n) {
    const Mat& y = n.value;
    Mat g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index b = 0; b < y.cols(); b += block) {
        const auto ys = y.row(i).segment(b, block);
        const auto gs = n.grad.row(i).segment(b, block);
        const double dot = gs.cwiseProduct(ys).sum();
        g.row(i).segment(b, block) = ys.cwiseProduct(gs.array() - dot);
      }
    accum_grad(*n.parents[0], g);
  });
}

/// Row-wise log(sum(exp(.))) -> N x 1, numerically stabilized.
inline Value logsumexp_rows(const Value& a) {
  Mat out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.val().row(i).maxCoeff();
    out(i, 0) = m + std::log((a.val().row(i).array() - m).exp().sum());
  }
  return detail::make_op(std::move(out), {a.node}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
      g.row(i) = n.grad(i, 0) * (e / e.sum());
    }
    accum_grad(*n.parents[0], g);
  });
}

// ---- normalization --------------------------------------------------------

inline Value layer_norm_rows(const Value& a, const Value& gamma,
                             const Value& beta, double eps = 1e-6) {
  expect(gamma.rows() == 1 && gamma.cols() == a.cols(), "layer_norm: gamma");
  expect(beta.rows() == 1 && beta.cols() == a.cols(), "layer_norm: beta");
  const Eigen::Index C = a.cols();
  Mat xhat(a.rows(), C);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mu = a.val().row(i).mean();
    const double var = (a.val().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (a.val().row(i).array() - mu) * inv_std(i);
  }
  Mat out = (xhat.array().rowwise() * gamma.val().row(0).array()).rowwise() +
            beta.val().row(0).array();
  return detail::make_op(
      std::move(out), {a.node, gamma.node, beta.node},
      [xhat, inv_std](Node& n) {
        const Eigen::Index C = xhat.cols();
        const Mat& gma = n.parents[1]->value;
        accum_grad(*n.parents[2], n.grad.colwise().sum());
        accum_grad(*n.parents[1], n.grad.cwiseProduct(xhat).colwise().sum());
        Mat gx(xhat.rows(), C);
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
          Eigen::RowVectorXd dxhat =
              n.grad.row(i).cwiseProduct(gma.row(0));
          const double m1 = dxhat.mean();
          const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
          gx.row(i) =
              inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
        }
        accum_grad(*n.parents[0], gx);
      });
}

}  // namespace vetime::ad
