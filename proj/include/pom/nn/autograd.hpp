/* Copyright 2026 The pom Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==========================================================================*/

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pom::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::function<void()> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
  template <class Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

using Var = std::shared_ptr<Node>;

inline Var leaf(Matrix value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

/// Reverse-mode tape. Ops append the nodes they create; backward() walks them
/// in reverse. With recording off, ops only compute values.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var make(Matrix value, std::initializer_list<const Var*> inputs) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (record_)
      for (const Var* in : inputs) n->requires_grad = n->requires_grad || (*in)->requires_grad;
    if (n->requires_grad) nodes_.push_back(n);
    return n;
  }

  void backward(const Var& loss) {
    if (loss->value.size() != 1) throw std::invalid_argument("backward expects a scalar loss");
    loss->grad = Matrix::Ones(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.backward && n.grad.size() != 0) n.backward();
    }
  }

 private:
  bool record_;
  std::vector<Var> nodes_;
};

inline bool needs(const Var& v) { return v->requires_grad; }

// Y = X W + b
inline Var linear(Tape& tape, const Var& x, const Var& w, const Var& b) {
  Matrix y = x->value * w->value;
  y.rowwise() += b->value.row(0);
  Var out = tape.make(std::move(y), {&x, &w, &b});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, w, b] {
      if (needs(x)) x->accumulate_expr(o->grad * w->value.transpose());
      if (needs(w)) w->accumulate_expr(x->value.transpose() * o->grad);
      if (needs(b)) b->accumulate_expr(o->grad.colwise().sum());
    };
  }
  return out;
}

inline Var add(Tape& tape, const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw std::invalid_argument("add: shape mismatch");
  Var out = tape.make(a->value + b->value, {&a, &b});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, a, b] {
      if (needs(a)) a->accumulate(o->grad);
      if (needs(b)) b->accumulate(o->grad);
    };
  }
  return out;
}

/// X[B*N, C] + P[N, C] broadcast over the B groups of N rows.
inline Var add_tiled(Tape& tape, const Var& x, const Var& p) {
  const Eigen::Index n = p->value.rows();
  if (x->value.rows() % n != 0 || x->value.cols() != p->value.cols())
    throw std::invalid_argument("add_tiled: shape mismatch");
  Matrix y = x->value;
  for (Eigen::Index r = 0; r < y.rows(); r += n) y.middleRows(r, n) += p->value;
  Var out = tape.make(std::move(y), {&x, &p});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, p, n] {
      if (needs(x)) x->accumulate(o->grad);
      if (needs(p)) {
        Matrix g = Matrix::Zero(n, p->value.cols());
        for (Eigen::Index r = 0; r < o->grad.rows(); r += n) g += o->grad.middleRows(r, n);
        p->accumulate(g);
      }
    };
  }
  return out;
}

namespace detail {
inline constexpr float kGeluK = 0.7978845608028654f;  // sqrt(2/pi)
inline constexpr float kGeluC = 0.044715f;
}  // namespace detail

/// tanh-approximated GELU.
inline Var gelu(Tape& tape, const Var& x) {
  using detail::kGeluC;
  using detail::kGeluK;
  const auto v = x->value.array();
  // Eigen's packet tanh is far cheaper than scalar std::tanh here.
  Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> t = (kGeluK * (v + kGeluC * v.cube())).tanh();
  Matrix y = (0.5f * v * (1.0f + t)).matrix();
  Var out = tape.make(std::move(y), {&x});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, t = std::move(t)] {
      const auto v = x->value.array();
      const auto d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t.square()) * kGeluK * (1.0f + 3.0f * kGeluC * v.square());
      x->accumulate_expr((o->grad.array() * d).matrix());
    };
  }
  return out;
}

/// RMS normalization over features with optional per-sample modulation:
/// y = x / rms(x) * (1 + scale[b]), rows grouped into samples of `tokens` rows.
inline Var rms_norm(Tape& tape, const Var& x, const Var* scale, Eigen::Index tokens, float eps = 1e-6f) {
  const Eigen::Index rows = x->value.rows(), cols = x->value.cols();
  Matrix normed(rows, cols);
  Eigen::VectorXf inv_rms(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float ms = x->value.row(r).squaredNorm() / static_cast<float>(cols);
    inv_rms[r] = 1.0f / std::sqrt(ms + eps);
    normed.row(r) = x->value.row(r) * inv_rms[r];
  }
  Matrix y = normed;
  if (scale) {
    const Matrix& s = (*scale)->value;
    for (Eigen::Index r = 0; r < rows; ++r) y.row(r) = normed.row(r).cwiseProduct((s.row(r / tokens).array() + 1.0f).matrix());
  }
  Var out = scale ? tape.make(std::move(y), {&x, scale}) : tape.make(std::move(y), {&x});
  if (out->requires_grad) {
    Node* o = out.get();
    Var s = scale ? *scale : nullptr;
    out->backward = [o, x, s, normed = std::move(normed), inv_rms = std::move(inv_rms), tokens, cols] {
      Matrix dn = o->grad;
      if (s) {
        Matrix ds = Matrix::Zero(s->value.rows(), s->value.cols());
        for (Eigen::Index r = 0; r < dn.rows(); ++r) {
          ds.row(r / tokens) += o->grad.row(r).cwiseProduct(normed.row(r));
          dn.row(r) = o->grad.row(r).cwiseProduct((s->value.row(r / tokens).array() + 1.0f).matrix());
        }
        if (needs(s)) s->accumulate(ds);
      }
      if (needs(x)) {
        Matrix dx(dn.rows(), dn.cols());
        for (Eigen::Index r = 0; r < dn.rows(); ++r) {
          const float proj = dn.row(r).dot(normed.row(r)) / static_cast<float>(cols);
          dx.row(r) = (dn.row(r) - normed.row(r) * proj) * inv_rms[r];
        }
        x->accumulate(dx);
      }
    };
  }
  return out;
}

/// Global multi-head self-attention. qkv is [B*N, 3C] laid out as [Q | K | V],
/// each split into `heads` contiguous column blocks. Returns [B*N, C].
inline Var attention(Tape& tape, const Var& qkv, Eigen::Index tokens, int heads) {
  const Eigen::Index rows = qkv->value.rows();
  const Eigen::Index width = qkv->value.cols() / 3;
  if (qkv->value.cols() != 3 * width || width % heads != 0 || rows % tokens != 0)
    throw std::invalid_argument("attention: bad qkv shape");
  const Eigen::Index dim = width / heads;
  const Eigen::Index batch = rows / tokens;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dim));

  Matrix y(rows, width);
  std::vector<Matrix> probs(static_cast<std::size_t>(batch * heads));
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv->value.block(b * tokens, h * dim, tokens, dim);
      const auto k = qkv->value.block(b * tokens, width + h * dim, tokens, dim);
      const auto v = qkv->value.block(b * tokens, 2 * width + h * dim, tokens, dim);
      Matrix s = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < tokens; ++r) {
        const float m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      y.block(b * tokens, h * dim, tokens, dim) = s * v;
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }

  Var out = tape.make(std::move(y), {&qkv});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, qkv, probs = std::move(probs), tokens, heads, width, dim, batch, scale] {
      Matrix g = Matrix::Zero(qkv->value.rows(), qkv->value.cols());
      for (Eigen::Index b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
          const auto q = qkv->value.block(b * tokens, h * dim, tokens, dim);
          const auto k = qkv->value.block(b * tokens, width + h * dim, tokens, dim);
          const auto v = qkv->value.block(b * tokens, 2 * width + h * dim, tokens, dim);
          const auto dy = o->grad.block(b * tokens, h * dim, tokens, dim);
          g.block(b * tokens, 2 * width + h * dim, tokens, dim) = p.transpose() * dy;
          Matrix dp = dy * v.transpose();
          Matrix ds = p.cwiseProduct(dp);
          const Eigen::VectorXf row_dot = ds.rowwise().sum();
          ds -= p.cwiseProduct(row_dot.replicate(1, tokens));
          ds *= scale;
          g.block(b * tokens, h * dim, tokens, dim) = ds * k;
          g.block(b * tokens, width + h * dim, tokens, dim) = ds.transpose() * q;
        }
      qkv->accumulate(g);
    };
  }
  return out;
}

/// Index map for gather: output element j (row-major) reads input element index[j].
struct GatherMap {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<Eigen::Index> index;
};

/// Pure data rearrangement (patchify, token merge/split). Backward scatters.
inline Var gather(Tape& tape, const Var& x, std::shared_ptr<const GatherMap> map) {
  Matrix y(map->rows, map->cols);
  const float* src = x->value.data();
  float* dst = y.data();
  const auto n = static_cast<Eigen::Index>(map->index.size());
  if (n != map->rows * map->cols) throw std::invalid_argument("gather: bad map");
  for (Eigen::Index j = 0; j < n; ++j) dst[j] = src[map->index[static_cast<std::size_t>(j)]];
  Var out = tape.make(std::move(y), {&x});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, map] {
      Matrix g = Matrix::Zero(x->value.rows(), x->value.cols());
      float* gd = g.data();
      const float* od = o->grad.data();
      for (std::size_t j = 0; j < map->index.size(); ++j) gd[map->index[j]] += od[j];
      x->accumulate(g);
    };
  }
  return out;
}

/// mean((x - target)^2) as a 1x1 node.
inline Var mse(Tape& tape, const Var& x, const Matrix& target) {
  if (x->value.rows() != target.rows() || x->value.cols() != target.cols())
    throw std::invalid_argument("mse: shape mismatch");
  Matrix diff = x->value - target;
  const double n = static_cast<double>(diff.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) sum += static_cast<double>(diff.data()[i]) * diff.data()[i];
  Matrix y(1, 1);
  y(0, 0) = static_cast<float>(sum / n);
  Var out = tape.make(std::move(y), {&x});
  if (out->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, diff = std::move(diff), n] {
      x->accumulate_expr(diff * static_cast<float>(2.0 * o->grad(0, 0) / n));
    };
  }
  return out;
}

}  // namespace pom::nn
