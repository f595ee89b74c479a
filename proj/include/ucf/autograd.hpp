#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ucf/tensor.hpp"

namespace ucf::ag {

template <typename S>
using Mat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const Mat<S>>;

template <typename S>
struct VarNode;

template <typename S>
using Var = std::shared_ptr<VarNode<S>>;

// Define-by-run graph node. Creation order is a valid topological order, so
// backward() just walks ids downwards.
template <typename S>
struct VarNode {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::int64_t id = 0;
  std::vector<Var<S>> parents;
  std::function<void(VarNode<S>&)> backward_fn;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor<S>::zeros(value.shape);
  }
};

template <typename S>
inline std::int64_t next_id() {
  static std::int64_t counter = 0;
  return ++counter;
}

template <typename S>
Var<S> make_var(Tensor<S> value, bool requires_grad) {
  auto n = std::make_shared<VarNode<S>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = next_id<S>();
  return n;
}

template <typename S>
Var<S> constant(Tensor<S> value) {
  return make_var(std::move(value), false);
}

template <typename S>
void accumulate(const Var<S>& p, const Tensor<S>& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  for (std::int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
}

template <typename S, typename... Parents>
Var<S> make_op(Tensor<S> value, std::function<void(VarNode<S>&)> bwd,
               Parents... parents) {
  auto n = std::make_shared<VarNode<S>>();
  n->value = std::move(value);
  n->id = next_id<S>();
  (n->parents.push_back(parents), ...);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(bwd);
  return n;
}

// Run reverse accumulation from a scalar root.
template <typename S>
void backward(const Var<S>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  root->ensure_grad();
  root->grad[0] = S(1);

  std::vector<VarNode<S>*> reachable;
  std::unordered_set<VarNode<S>*> seen;
  std::vector<VarNode<S>*> stack{root.get()};
  while (!stack.empty()) {
    VarNode<S>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    reachable.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(reachable.begin(), reachable.end(),
            [](auto* a, auto* b) { return a->id > b->id; });
  for (VarNode<S>* n : reachable) {
    if (n->requires_grad && n->backward_fn && !n->grad.data.empty())
      n->backward_fn(*n);
  }
}

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a->value.shape) + " vs " +
                                shape_str(b->value.shape));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_op<S>(
      std::move(out),
      [a, b](VarNode<S>& n) {
        accumulate(a, n.grad);
        accumulate(b, n.grad);
      },
      a, b);
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor<S> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_op<S>(
      std::move(out),
      [a, b](VarNode<S>& n) {
        accumulate(a, n.grad);
        if (b->requires_grad) {
          b->ensure_grad();
          for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            b->grad[i] -= n.grad[i];
        }
      },
      a, b);
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_op<S>(
      std::move(out),
      [a, b](VarNode<S>& n) {
        if (a->requires_grad) {
          a->ensure_grad();
          for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            b->grad[i] += n.grad[i] * a->value[i];
        }
      },
      a, b);
}

template <typename S>
Var<S> scalar_mul(const Var<S>& a, S k) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v *= k;
  return make_op<S>(
      std::move(out),
      [a, k](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] += n.grad[i] * k;
      },
      a);
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S k) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v += k;
  return make_op<S>(
      std::move(out), [a](VarNode<S>& n) { accumulate(a, n.grad); }, a);
}

template <typename S>
Var<S> square(const Var<S>& a) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v *= v;
  return make_op<S>(
      std::move(out),
      [a](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] += n.grad[i] * S(2) * a->value[i];
      },
      a);
}

// sqrt with zero-subgradient at 0 so hinge/triplet corner cases stay finite
template <typename S>
Var<S> sqrt_safe(const Var<S>& a) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v = v > S(0) ? std::sqrt(v) : S(0);
  Tensor<S> saved = out;
  return make_op<S>(
      std::move(out),
      [a, saved](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          if (saved[i] > S(0))
            a->grad[i] += n.grad[i] * S(0.5) / saved[i];
      },
      a);
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v = v > S(0) ? v : S(0);
  return make_op<S>(
      std::move(out),
      [a](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          if (a->value[i] > S(0)) a->grad[i] += n.grad[i];
      },
      a);
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v = v > S(0) ? v : slope * v;
  return make_op<S>(
      std::move(out),
      [a, slope](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] += n.grad[i] * (a->value[i] > S(0) ? S(1) : slope);
      },
      a);
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v = S(1) / (S(1) + std::exp(-v));
  Tensor<S> saved = out;
  return make_op<S>(
      std::move(out),
      [a, saved](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] += n.grad[i] * saved[i] * (S(1) - saved[i]);
      },
      a);
}

// ---------------------------------------------------------------------------
// reductions and broadcasts over (N,C,H,W) with per-(N,C) statistics
// ---------------------------------------------------------------------------

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  const std::int64_t n = a->value.numel();
  S acc = S(0);
  for (S v : a->value.data) acc += v;
  Tensor<S> out({1}, {acc / static_cast<S>(n)});
  return make_op<S>(
      std::move(out),
      [a, n](VarNode<S>& nd) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const S g = nd.grad[0] / static_cast<S>(n);
        for (std::int64_t i = 0; i < n; ++i) a->grad[i] += g;
      },
      a);
}

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  S acc = S(0);
  for (S v : a->value.data) acc += v;
  Tensor<S> out({1}, {acc});
  return make_op<S>(
      std::move(out),
      [a](VarNode<S>& nd) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const S g = nd.grad[0];
        for (std::int64_t i = 0; i < a->value.numel(); ++i) a->grad[i] += g;
      },
      a);
}

// (N,C,H,W) -> (N,C), mean over spatial positions
template <typename S>
Var<S> spatial_mean(const Var<S>& a) {
  const auto& shp = a->value.shape;
  if (shp.size() != 4) throw std::invalid_argument("spatial_mean: want NCHW");
  const int N = shp[0], C = shp[1];
  const std::int64_t hw = static_cast<std::int64_t>(shp[2]) * shp[3];
  Tensor<S> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* p = a->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
      S acc = S(0);
      for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      out[static_cast<std::int64_t>(n) * C + c] = acc / static_cast<S>(hw);
    }
  return make_op<S>(
      std::move(out),
      [a, N, C, hw](VarNode<S>& nd) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const S g = nd.grad[static_cast<std::int64_t>(n) * C + c] /
                        static_cast<S>(hw);
            S* p = a->grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += g;
          }
      },
      a);
}

enum class BcOp { Add, Sub, Mul };

// x (N,C,H,W) op s (N,C) broadcast over spatial dims
template <typename S>
Var<S> broadcast_nc(const Var<S>& x, const Var<S>& s, BcOp op) {
  const auto& shp = x->value.shape;
  if (shp.size() != 4) throw std::invalid_argument("broadcast_nc: want NCHW");
  const int N = shp[0], C = shp[1];
  if (s->value.shape != std::vector<int>{N, C})
    throw std::invalid_argument("broadcast_nc: stats must be (N,C)");
  const std::int64_t hw = static_cast<std::int64_t>(shp[2]) * shp[3];
  Tensor<S> out = x->value;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S sv = s->value[static_cast<std::int64_t>(n) * C + c];
      S* p = out.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
      switch (op) {
        case BcOp::Add:
          for (std::int64_t i = 0; i < hw; ++i) p[i] += sv;
          break;
        case BcOp::Sub:
          for (std::int64_t i = 0; i < hw; ++i) p[i] -= sv;
          break;
        case BcOp::Mul:
          for (std::int64_t i = 0; i < hw; ++i) p[i] *= sv;
          break;
      }
    }
  return make_op<S>(
      std::move(out),
      [x, s, N, C, hw, op](VarNode<S>& nd) {
        if (x->requires_grad) {
          x->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const std::int64_t base =
                  (static_cast<std::int64_t>(n) * C + c) * hw;
              const S sv = s->value[static_cast<std::int64_t>(n) * C + c];
              for (std::int64_t i = 0; i < hw; ++i) {
                const S g = nd.grad[base + i];
                x->grad[base + i] += op == BcOp::Mul ? g * sv : g;
              }
            }
        }
        if (s->requires_grad) {
          s->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const std::int64_t base =
                  (static_cast<std::int64_t>(n) * C + c) * hw;
              S acc = S(0);
              for (std::int64_t i = 0; i < hw; ++i) {
                const S g = nd.grad[base + i];
                switch (op) {
                  case BcOp::Add:
                    acc += g;
                    break;
                  case BcOp::Sub:
                    acc -= g;
                    break;
                  case BcOp::Mul:
                    acc += g * x->value[base + i];
                    break;
                }
              }
              s->grad[static_cast<std::int64_t>(n) * C + c] += acc;
            }
        }
      },
      x, s);
}

template <typename S>
Var<S> recip(const Var<S>& a) {
  Tensor<S> out = a->value;
  for (auto& v : out.data) v = S(1) / v;
  Tensor<S> saved = out;
  return make_op<S>(
      std::move(out),
      [a, saved](VarNode<S>& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          a->grad[i] -= n.grad[i] * saved[i] * saved[i];
      },
      a);
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> channel_slice(const Var<S>& x, int c0, int c1) {
  const auto& shp = x->value.shape;
  if (shp.size() != 4) throw std::invalid_argument("channel_slice: want NCHW");
  const int N = shp[0], C = shp[1], H = shp[2], W = shp[3];
  if (c0 < 0 || c1 > C || c0 >= c1)
    throw std::invalid_argument("channel_slice: bad range");
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  Tensor<S> out({N, c1 - c0, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = c0; c < c1; ++c)
      std::copy_n(x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw,
                  hw,
                  out.ptr() + (static_cast<std::int64_t>(n) * (c1 - c0) +
                               (c - c0)) *
                                  hw);
  return make_op<S>(
      std::move(out),
      [x, c0, c1, N, C, hw](VarNode<S>& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = c0; c < c1; ++c) {
            const S* g = nd.grad.ptr() +
                         (static_cast<std::int64_t>(n) * (c1 - c0) + (c - c0)) *
                             hw;
            S* dst =
                x->grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] += g[i];
          }
      },
      x);
}

template <typename S>
Var<S> channel_concat(const Var<S>& a, const Var<S>& b) {
  const auto& sa = a->value.shape;
  const auto& sb = b->value.shape;
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] ||
      sa[3] != sb[3])
    throw std::invalid_argument("channel_concat: incompatible shapes");
  const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  Tensor<S> out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a->value.ptr() + static_cast<std::int64_t>(n) * Ca * hw,
                Ca * hw,
                out.ptr() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw);
    std::copy_n(
        b->value.ptr() + static_cast<std::int64_t>(n) * Cb * hw, Cb * hw,
        out.ptr() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw + Ca * hw);
  }
  return make_op<S>(
      std::move(out),
      [a, b, N, Ca, Cb, hw](VarNode<S>& nd) {
        for (int n = 0; n < N; ++n) {
          const S* g = nd.grad.ptr() + static_cast<std::int64_t>(n) *
                                           (Ca + Cb) * hw;
          if (a->requires_grad) {
            a->ensure_grad();
            S* dst = a->grad.ptr() + static_cast<std::int64_t>(n) * Ca * hw;
            for (std::int64_t i = 0; i < Ca * hw; ++i) dst[i] += g[i];
          }
          if (b->requires_grad) {
            b->ensure_grad();
            S* dst = b->grad.ptr() + static_cast<std::int64_t>(n) * Cb * hw;
            for (std::int64_t i = 0; i < Cb * hw; ++i) dst[i] += g[Ca * hw + i];
          }
        }
      },
      a, b);
}

// contiguous sub-range [n0, n1) along the batch dimension
template <typename S>
Var<S> batch_slice(const Var<S>& x, int n0, int n1) {
  const auto& shp = x->value.shape;
  if (shp.empty() || n0 < 0 || n1 > shp[0] || n0 >= n1)
    throw std::invalid_argument("batch_slice: bad range");
  std::int64_t inner = 1;
  for (std::size_t i = 1; i < shp.size(); ++i) inner *= shp[i];
  std::vector<int> out_shape = shp;
  out_shape[0] = n1 - n0;
  Tensor<S> out(out_shape);
  std::copy_n(x->value.ptr() + n0 * inner, (n1 - n0) * inner, out.ptr());
  return make_op<S>(
      std::move(out),
      [x, n0, n1, inner](VarNode<S>& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        S* dst = x->grad.ptr() + n0 * inner;
        for (std::int64_t i = 0; i < (n1 - n0) * inner; ++i)
          dst[i] += nd.grad[i];
      },
      x);
}

// gather rows of a (N,C) matrix; backward scatter-adds
template <typename S>
Var<S> gather_rows(const Var<S>& x, std::vector<int> idx) {
  const auto& shp = x->value.shape;
  if (shp.size() != 2) throw std::invalid_argument("gather_rows: want (N,C)");
  const int C = shp[1];
  Tensor<S> out({static_cast<int>(idx.size()), C});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x->value.ptr() + static_cast<std::int64_t>(idx[r]) * C, C,
                out.ptr() + static_cast<std::int64_t>(r) * C);
  return make_op<S>(
      std::move(out),
      [x, idx, C](VarNode<S>& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const S* g = nd.grad.ptr() + static_cast<std::int64_t>(r) * C;
          S* dst = x->grad.ptr() + static_cast<std::int64_t>(idx[r]) * C;
          for (int i = 0; i < C; ++i) dst[i] += g[i];
        }
      },
      x);
}

// (N,C) -> (N), sum over columns
template <typename S>
Var<S> row_sum(const Var<S>& x) {
  const auto& shp = x->value.shape;
  if (shp.size() != 2) throw std::invalid_argument("row_sum: want (N,C)");
  const int N = shp[0], C = shp[1];
  Tensor<S> out({N});
  for (int n = 0; n < N; ++n) {
    S acc = S(0);
    for (int c = 0; c < C; ++c)
      acc += x->value[static_cast<std::int64_t>(n) * C + c];
    out[n] = acc;
  }
  return make_op<S>(
      std::move(out),
      [x, N, C](VarNode<S>& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int n = 0; n < N; ++n) {
          const S g = nd.grad[n];
          for (int c = 0; c < C; ++c)
            x->grad[static_cast<std::int64_t>(n) * C + c] += g;
        }
      },
      x);
}

// ---------------------------------------------------------------------------
// dense / conv layers
// ---------------------------------------------------------------------------

// x (N,K) * w (K,M) + b (M)
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
    throw std::invalid_argument("linear: shape mismatch " + shape_str(xs) +
                                " x " + shape_str(ws));
  const int N = xs[0], K = xs[1], M = ws[1];
  if (b->value.shape != std::vector<int>{M})
    throw std::invalid_argument("linear: bias shape");
  Tensor<S> out({N, M});
  {
    CMatMap<S> X(x->value.ptr(), N, K), W(w->value.ptr(), K, M);
    MatMap<S> Y(out.ptr(), N, M);
    Y.noalias() = X * W;
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m) out[static_cast<std::int64_t>(n) * M + m] +=
          b->value[m];
  }
  return make_op<S>(
      std::move(out),
      [x, w, b, N, K, M](VarNode<S>& nd) {
        CMatMap<S> G(nd.grad.ptr(), N, M);
        if (x->requires_grad) {
          x->ensure_grad();
          MatMap<S> DX(x->grad.ptr(), N, K);
          CMatMap<S> W(w->value.ptr(), K, M);
          DX.noalias() += G * W.transpose();
        }
        if (w->requires_grad) {
          w->ensure_grad();
          MatMap<S> DW(w->grad.ptr(), K, M);
          CMatMap<S> X(x->value.ptr(), N, K);
          DW.noalias() += X.transpose() * G;
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int m = 0; m < M; ++m)
              b->grad[m] += nd.grad[static_cast<std::int64_t>(n) * M + m];
        }
      },
      x, w, b);
}

namespace detail {

template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int oh, int ow, S* cols) {
  // cols is (C*kh*kw) x (oh*ow), row-major
  const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        S* row = cols + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * P;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + static_cast<std::int64_t>(oy) * ow, ow, S(0));
            continue;
          }
          const S* src = x + (static_cast<std::int64_t>(c) * H + iy) * W;
          S* dst = row + static_cast<std::int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
}

template <typename S>
void col2im_acc(const S* cols, int C, int H, int W, int kh, int kw, int stride,
                int pad, int oh, int ow, S* dx) {
  const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const S* row =
            cols + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * P;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          S* dst = dx + (static_cast<std::int64_t>(c) * H + iy) * W;
          const S* src = row + static_cast<std::int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// x (N,C,H,W), w (OC,C,kh,kw), b (OC). Samples are processed in parallel;
// per-thread weight-gradient partials are reduced in fixed order, so results
// are reproducible for a fixed thread count. 1x1/stride-1 kernels skip
// im2col entirely.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride,
              int pad) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw std::invalid_argument("conv2d: shape mismatch " + shape_str(xs) +
                                " with kernel " + shape_str(ws));
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int OC = ws[0], kh = ws[2], kw = ws[3];
  const int oh = detail::conv_out_dim(H, kh, stride, pad);
  const int ow = detail::conv_out_dim(W, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  const std::int64_t K = static_cast<std::int64_t>(C) * kh * kw;
  const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  Tensor<S> out({N, OC, oh, ow});
  CMatMap<S> Wm(w->value.ptr(), OC, K);
#pragma omp parallel if (N > 1)
  {
    std::vector<S> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < N; ++n) {
      const S* xn = x->value.ptr() + static_cast<std::int64_t>(n) * C * H * W;
      MatMap<S> Y(out.ptr() + static_cast<std::int64_t>(n) * OC * P, OC, P);
      if (pointwise) {
        CMatMap<S> Xm(xn, C, P);
        Y.noalias() = Wm * Xm;
      } else {
        detail::im2col(xn, C, H, W, kh, kw, stride, pad, oh, ow, cols.data());
        CMatMap<S> Cm(cols.data(), K, P);
        Y.noalias() = Wm * Cm;
      }
      for (int oc = 0; oc < OC; ++oc) {
        S* p = out.ptr() + (static_cast<std::int64_t>(n) * OC + oc) * P;
        const S bv = b->value[oc];
        for (std::int64_t i = 0; i < P; ++i) p[i] += bv;
      }
    }
  }

  const int sh = stride, pd = pad;
  return make_op<S>(
      std::move(out),
      [x, w, b, N, C, H, W, OC, kh, kw, oh, ow, K, P, sh, pd,
       pointwise](VarNode<S>& nd) {
        if (w->requires_grad) w->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        CMatMap<S> Wm(w->value.ptr(), OC, K);
        int used_threads = 1;
        std::vector<Tensor<S>> dw_part, db_part;
#pragma omp parallel if (N > 1)
        {
#pragma omp single
          {
#ifdef _OPENMP
            used_threads = omp_get_num_threads();
#endif
            if (w->requires_grad)
              dw_part.assign(used_threads, Tensor<S>::zeros({OC, (int)K}));
            if (b->requires_grad)
              db_part.assign(used_threads, Tensor<S>::zeros({OC}));
          }
          std::vector<S> cols(pointwise ? 0
                                        : static_cast<std::size_t>(K) * P);
          std::vector<S> dcols(x->requires_grad && !pointwise
                                   ? static_cast<std::size_t>(K) * P
                                   : 0);
          int tid = 0;
#ifdef _OPENMP
          tid = omp_get_thread_num();
#endif
#pragma omp for schedule(static)
          for (int n = 0; n < N; ++n) {
            const S* xn =
                x->value.ptr() + static_cast<std::int64_t>(n) * C * H * W;
            CMatMap<S> G(nd.grad.ptr() + static_cast<std::int64_t>(n) * OC * P,
                         OC, P);
            if (pointwise) {
              if (w->requires_grad) {
                MatMap<S> DW(dw_part[tid].ptr(), OC, K);
                CMatMap<S> Xm(xn, C, P);
                DW.noalias() += G * Xm.transpose();
              }
              if (x->requires_grad) {
                MatMap<S> DX(
                    x->grad.ptr() + static_cast<std::int64_t>(n) * C * H * W,
                    C, P);
                DX.noalias() += Wm.transpose() * G;
              }
            } else {
              if (w->requires_grad || x->requires_grad)
                detail::im2col(xn, C, H, W, kh, kw, sh, pd, oh, ow,
                               cols.data());
              if (w->requires_grad) {
                MatMap<S> DW(dw_part[tid].ptr(), OC, K);
                CMatMap<S> Cm(cols.data(), K, P);
                DW.noalias() += G * Cm.transpose();
              }
              if (x->requires_grad) {
                MatMap<S> DC(dcols.data(), K, P);
                DC.noalias() = Wm.transpose() * G;
                detail::col2im_acc(
                    dcols.data(), C, H, W, kh, kw, sh, pd, oh, ow,
                    x->grad.ptr() + static_cast<std::int64_t>(n) * C * H * W);
              }
            }
            if (b->requires_grad)
              for (int oc = 0; oc < OC; ++oc) {
                const S* p = nd.grad.ptr() +
                             (static_cast<std::int64_t>(n) * OC + oc) * P;
                S acc = S(0);
                for (std::int64_t i = 0; i < P; ++i) acc += p[i];
                db_part[tid][oc] += acc;
              }
          }
        }
        if (w->requires_grad)
          for (const auto& part : dw_part)
            for (std::int64_t i = 0; i < w->grad.numel(); ++i)
              w->grad[i] += part[i];
        if (b->requires_grad)
          for (const auto& part : db_part)
            for (int oc = 0; oc < OC; ++oc) b->grad[oc] += part[oc];
      },
      x, w, b);
}

// depthwise conv: x (N,C,H,W), w (C,1,kh,kw), b (C)
template <typename S>
Var<S> depthwise_conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b,
                        int stride, int pad) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != 1 || xs[1] != ws[0])
    throw std::invalid_argument("depthwise_conv2d: shape mismatch");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int kh = ws[2], kw = ws[3];
  const int oh = detail::conv_out_dim(H, kh, stride, pad);
  const int ow = detail::conv_out_dim(W, kw, stride, pad);
  Tensor<S> out({N, C, oh, ow});
  const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* xs_p = x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) *
                                           H * W;
      const S* wp = w->value.ptr() + static_cast<std::int64_t>(c) * kh * kw;
      S* yp = out.ptr() + (static_cast<std::int64_t>(n) * C + c) * P;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          S acc = b->value[c];
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              acc += wp[ky * kw + kx] * xs_p[iy * W + ix];
            }
          }
          yp[oy * ow + ox] = acc;
        }
    }
  const int sh = stride, pd = pad;
  return make_op<S>(
      std::move(out),
      [x, w, b, N, C, H, W, kh, kw, oh, ow, P, sh, pd](VarNode<S>& nd) {
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const S* g =
                nd.grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * P;
            const S* xs_p =
                x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            const S* wp =
                w->value.ptr() + static_cast<std::int64_t>(c) * kh * kw;
            S* dxp = x->requires_grad
                         ? x->grad.ptr() +
                               (static_cast<std::int64_t>(n) * C + c) * H * W
                         : nullptr;
            S* dwp = w->requires_grad
                         ? w->grad.ptr() + static_cast<std::int64_t>(c) * kh * kw
                         : nullptr;
            S db = S(0);
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox) {
                const S gv = g[oy * ow + ox];
                db += gv;
                for (int ky = 0; ky < kh; ++ky) {
                  const int iy = oy * sh - pd + ky;
                  if (iy < 0 || iy >= H) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * sh - pd + kx;
                    if (ix < 0 || ix >= W) continue;
                    if (dxp) dxp[iy * W + ix] += gv * wp[ky * kw + kx];
                    if (dwp) dwp[ky * kw + kx] += gv * xs_p[iy * W + ix];
                  }
                }
              }
            if (b->requires_grad) b->grad[c] += db;
          }
      },
      x, w, b);
}

template <typename S>
Var<S> upsample_nearest2(const Var<S>& x) {
  const auto& xs = x->value.shape;
  if (xs.size() != 4) throw std::invalid_argument("upsample: want NCHW");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  Tensor<S> out({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* src = x->value.ptr() + static_cast<std::int64_t>(nc) * H * W;
    S* dst = out.ptr() + static_cast<std::int64_t>(nc) * 4 * H * W;
    for (int y = 0; y < H; ++y)
      for (int xq = 0; xq < W; ++xq) {
        const S v = src[y * W + xq];
        S* d = dst + (2 * y) * (2 * W) + 2 * xq;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  return make_op<S>(
      std::move(out),
      [x, N, C, H, W](VarNode<S>& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          S* dst = x->grad.ptr() + static_cast<std::int64_t>(nc) * H * W;
          const S* g = nd.grad.ptr() + static_cast<std::int64_t>(nc) * 4 * H * W;
          for (int y = 0; y < H; ++y)
            for (int xq = 0; xq < W; ++xq) {
              const S* s = g + (2 * y) * (2 * W) + 2 * xq;
              dst[y * W + xq] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
            }
        }
      },
      x);
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

// Training mode uses biased batch statistics and updates the running buffers
// (the update itself is not differentiated). Eval mode is a fixed affine map.
template <typename S>
Var<S> batchnorm2d(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                   Tensor<S>& running_mean, Tensor<S>& running_var,
                   bool training, S momentum = S(0.1), S eps = S(1e-5)) {
  const auto& xs = x->value.shape;
  if (xs.size() != 4) throw std::invalid_argument("batchnorm2d: want NCHW");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;

  std::vector<S> mean(C), var(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      S acc = S(0);
      for (int n = 0; n < N; ++n) {
        const S* p =
            x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      }
      mean[c] = acc / static_cast<S>(m);
      S vacc = S(0);
      for (int n = 0; n < N; ++n) {
        const S* p =
            x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const S d = p[i] - mean[c];
          vacc += d * d;
        }
      }
      var[c] = vacc / static_cast<S>(m);
      running_mean[c] =
          (S(1) - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (S(1) - momentum) * running_var[c] + momentum * var[c];
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }

  Tensor<S> out(xs);
  std::vector<S> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = S(1) / std::sqrt(var[c] + eps);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* p = x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
      S* q = out.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
      const S g = gamma->value[c], bta = beta->value[c], mu = mean[c],
              is = inv_std[c];
      for (std::int64_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * is + bta;
    }

  return make_op<S>(
      std::move(out),
      [x, gamma, beta, mean, inv_std, N, C, hw, m, training](VarNode<S>& nd) {
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        for (int c = 0; c < C; ++c) {
          // per-channel reductions over (N, H, W)
          S sum_g = S(0), sum_gx = S(0);
          for (int n = 0; n < N; ++n) {
            const S* g =
                nd.grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
            const S* p =
                x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_g += g[i];
              sum_gx += g[i] * (p[i] - mean[c]) * inv_std[c];
            }
          }
          if (gamma->requires_grad) gamma->grad[c] += sum_gx;
          if (beta->requires_grad) beta->grad[c] += sum_g;
          if (!x->requires_grad) continue;
          const S gm = gamma->value[c];
          if (training) {
            const S inv_m = S(1) / static_cast<S>(m);
            for (int n = 0; n < N; ++n) {
              const S* g =
                  nd.grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
              const S* p =
                  x->value.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
              S* dx =
                  x->grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
              for (std::int64_t i = 0; i < hw; ++i) {
                const S xhat = (p[i] - mean[c]) * inv_std[c];
                dx[i] += gm * inv_std[c] *
                         (g[i] - inv_m * sum_g - inv_m * xhat * sum_gx);
              }
            }
          } else {
            for (int n = 0; n < N; ++n) {
              const S* g =
                  nd.grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
              S* dx =
                  x->grad.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
              for (std::int64_t i = 0; i < hw; ++i)
                dx[i] += gm * inv_std[c] * g[i];
            }
          }
        }
      },
      x, gamma, beta);
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// mean cross-entropy of logits (N,K) against integer labels
template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits,
                             const std::vector<int>& labels) {
  const auto& shp = logits->value.shape;
  if (shp.size() != 2) throw std::invalid_argument("softmax_ce: want (N,K)");
  const int N = shp[0], K = shp[1];
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("softmax_ce: labels/logits length mismatch");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= K)
      throw std::invalid_argument("softmax_ce: label " + std::to_string(lbl) +
                                  " out of range for " + std::to_string(K) +
                                  " classes");
  Tensor<S> probs({N, K});
  S loss = S(0);
  for (int n = 0; n < N; ++n) {
    const S* row = logits->value.ptr() + static_cast<std::int64_t>(n) * K;
    S mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    S denom = S(0);
    for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
    const S lse = mx + std::log(denom);
    for (int k = 0; k < K; ++k)
      probs[static_cast<std::int64_t>(n) * K + k] = std::exp(row[k] - lse);
    loss += lse - row[labels[n]];
  }
  Tensor<S> out({1}, {loss / static_cast<S>(N)});
  return make_op<S>(
      std::move(out),
      [logits, labels, probs, N, K](VarNode<S>& nd) {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        const S g = nd.grad[0] / static_cast<S>(N);
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < K; ++k) {
            const std::int64_t i = static_cast<std::int64_t>(n) * K + k;
            logits->grad[i] +=
                g * (probs[i] - (labels[n] == k ? S(1) : S(0)));
          }
      },
      logits);
}

// mean absolute difference over all elements
template <typename S>
Var<S> l1_mean(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "l1_mean");
  const std::int64_t n = a->value.numel();
  S acc = S(0);
  for (std::int64_t i = 0; i < n; ++i)
    acc += std::abs(a->value[i] - b->value[i]);
  Tensor<S> out({1}, {acc / static_cast<S>(n)});
  return make_op<S>(
      std::move(out),
      [a, b, n](VarNode<S>& nd) {
        const S g = nd.grad[0] / static_cast<S>(n);
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          const S d = a->value[i] - b->value[i];
          const S sg = d > S(0) ? g : (d < S(0) ? -g : S(0));
          if (a->requires_grad) a->grad[i] += sg;
          if (b->requires_grad) b->grad[i] -= sg;
        }
      },
      a, b);
}

}  // namespace ucf::ag
