#include "mmb/numerics/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mmb/numerics/kernels.hpp"
#include "mmb/numerics/rng.hpp"

namespace mmb::num {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

template <typename T>
void require_2d(const char* op, const Tensor<T>& t) {
  require(t.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

template <typename T>
void accumulate(Node<T>& target, std::span<const T> delta) {
  if (!target.requires_grad) return;
  auto& g = target.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<T> out(m * n);
  kernel::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>("matmul", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](Node<T>& o) {
    if (an->requires_grad) {
      // dA = dC · Bᵀ
      kernel::gemm_nt(m, n, k, o.grad.data(), bn->value.data(), an->ensure_grad().data(), true);
    }
    if (bn->requires_grad) {
      // dB = Aᵀ · dC
      kernel::gemm_tn_acc(m, k, n, an->value.data(), o.grad.data(), bn->ensure_grad().data());
    }
  });
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d("matmul_bt", a);
  require_2d("matmul_bt", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_bt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  std::vector<T> out(m * n);
  kernel::gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>("matmul_bt", {m, n}, std::move(out), {an, bn},
                         [an, bn, m, k, n](Node<T>& o) {
                           if (an->requires_grad) {
                             // dA = dC · B
                             kernel::gemm_nn(m, n, k, o.grad.data(), bn->value.data(),
                                             an->ensure_grad().data(), true);
                           }
                           if (bn->requires_grad) {
                             // dB = dCᵀ · A
                             kernel::gemm_tn_acc(m, n, k, o.grad.data(), an->value.data(),
                                                 bn->ensure_grad().data());
                           }
                         });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>("add", a.shape(), std::move(out), {an, bn}, [an, bn](Node<T>& o) {
    accumulate<T>(*an, o.grad);
    accumulate<T>(*bn, o.grad);
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias) {
  require_2d("add_row", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(bias.numel() == n, "add_row: bias length " + std::to_string(bias.numel()) +
                                 " does not match " + std::to_string(n) + " columns");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  auto an = a.node_ptr(), bn = bias.node_ptr();
  return make_result<T>("add_row", a.shape(), std::move(out), {an, bn}, [an, bn, m, n](Node<T>& o) {
    accumulate<T>(*an, o.grad);
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  auto an = a.node_ptr();
  return make_result<T>("scale", a.shape(), std::move(out), {an}, [an, factor](Node<T>& o) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>("mul", a.shape(), std::move(out), {an, bn}, [an, bn](Node<T>& o) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  auto an = a.node_ptr();
  return make_result<T>("sum", {1}, {s}, {an}, [an](Node<T>& o) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (auto& gi : g) gi += o.grad[0];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);

  std::vector<T> out(x.numel());
  std::vector<T> lane(n);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      for (std::size_t i = 0; i < n; ++i) lane[i] = xv[base + i * inner];
      kernel::softmax_row(lane.data(), n);
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] = lane[i];
    }
  }
  auto xn = x.node_ptr();
  return make_result<T>("softmax", x.shape(), out, {xn},
                        [xn, out, outer, inner, n](Node<T>& o) {
                          if (!xn->requires_grad) return;
                          auto& g = xn->ensure_grad();
                          for (std::size_t a = 0; a < outer; ++a) {
                            for (std::size_t in = 0; in < inner; ++in) {
                              const std::size_t base = a * n * inner + in;
                              T dotp = 0;
                              for (std::size_t i = 0; i < n; ++i)
                                dotp += o.grad[base + i * inner] * out[base + i * inner];
                              for (std::size_t i = 0; i < n; ++i) {
                                const std::size_t idx = base + i * inner;
                                g[idx] += out[idx] * (o.grad[idx] - dotp);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  require(gamma.numel() == n && beta.numel() == n,
          "layer_norm: gamma/beta must have " + std::to_string(n) + " entries");
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    rstd[r] = kernel::layer_norm_row(x.data().data() + r * n, n, eps, gamma.data().data(),
                                     beta.data().data(), xhat.data() + r * n, out.data() + r * n);
  }
  auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), rows, n](Node<T>& o) {
        if (gn->requires_grad || bn->requires_grad) {
          auto& gg = gn->ensure_grad();
          auto& gb = bn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) {
              gg[j] += o.grad[r * n + j] * xhat[r * n + j];
              gb[j] += o.grad[r * n + j];
            }
        }
        if (!xn->requires_grad) return;
        auto& gx = xn->ensure_grad();
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = o.grad.data() + r * n;
          const T* h = xhat.data() + r * n;
          T sum_dh = 0, sum_dh_h = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T dh = dy[j] * gn->value[j];
            sum_dh += dh;
            sum_dh_h += dh * h[j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const T dh = dy[j] * gn->value[j];
            gx[r * n + j] += rstd[r] * (dh - inv_n * sum_dh - h[j] * inv_n * sum_dh_h);
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernel::gelu(x.data()[i]);
  auto xn = x.node_ptr();
  return make_result<T>("gelu", x.shape(), std::move(out), {xn}, [xn](Node<T>& o) {
    if (!xn->requires_grad) return;
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * kernel::gelu_grad(xn->value[i]);
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  SplitMix64 rng(seed);
  std::vector<T> keep(x.numel());
  const T factor = static_cast<T>(1.0 / (1.0 - p));
  for (auto& k : keep) k = rng.uniform() >= p ? factor : T(0);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * keep[i];
  auto xn = x.node_ptr();
  return make_result<T>("dropout", x.shape(), std::move(out), {xn},
                        [xn, keep = std::move(keep)](Node<T>& o) {
                          if (!xn->requires_grad) return;
                          auto& g = xn->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * keep[i];
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows) {
  require_2d("gather_rows", table);
  const std::size_t n = table.dim(1), limit = table.dim(0);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < limit, "gather_rows: row " + std::to_string(idx[r]) + " out of range " +
                                std::to_string(limit));
    std::copy_n(table.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  auto tn = table.node_ptr();
  const std::size_t count = idx.size();
  return make_result<T>("gather_rows", {count, n}, std::move(out), {tn},
                        [tn, idx = std::move(idx), n](Node<T>& o) {
                          if (!tn->requires_grad) return;
                          auto& g = tn->ensure_grad();
                          for (std::size_t r = 0; r < idx.size(); ++r)
                            for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += o.grad[r * n + j];
                        });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d("concat_rows", a);
  require_2d("concat_rows", b);
  require(a.dim(1) == b.dim(1), "concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  std::vector<T> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node_ptr(), bn = b.node_ptr();
  const std::size_t na = a.numel();
  return make_result<T>("concat_rows", {a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), {an, bn},
                        [an, bn, na](Node<T>& o) {
                          std::span<const T> g(o.grad);
                          accumulate<T>(*an, g.subspan(0, na));
                          accumulate<T>(*bn, g.subspan(na));
                        });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionLayout& lay) {
  require_2d("attention", q);
  require_2d("attention", k);
  require_2d("attention", v);
  const std::size_t d = q.dim(1);
  require(k.dim(1) == d && v.dim(1) == d, "attention: q/k/v widths differ");
  require(q.dim(0) == lay.batch * lay.q_len, "attention: query rows do not match layout");
  require(k.dim(0) == lay.batch * lay.k_len && v.dim(0) == k.dim(0),
          "attention: key/value rows do not match layout");
  require(lay.heads > 0 && d % lay.heads == 0, "attention: width not divisible by heads");
  require(lay.key_mask.empty() || lay.key_mask.size() == lay.batch * lay.k_len,
          "attention: key mask size mismatch");
  const std::size_t dh = d / lay.heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t B = lay.batch, Sq = lay.q_len, Sk = lay.k_len, H = lay.heads;
  const std::size_t offset = Sk >= Sq ? Sk - Sq : 0;

  auto visible = [&lay, Sk, offset](std::size_t b, std::size_t i, std::size_t j) {
    if (!lay.key_mask.empty() && !lay.key_mask[b * Sk + j]) return false;
    if (lay.causal && j > i + offset) return false;
    return true;
  };

  // probs[b][h][i][j]
  std::vector<T> probs(B * H * Sq * Sk, T(0));
  std::vector<T> out(B * Sq * d, T(0));
  const T* qv = q.data().data();
  const T* kv = k.data().data();
  const T* vv = v.data().data();
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Sq; ++i) {
        T* p = probs.data() + ((b * H + h) * Sq + i) * Sk;
        const T* qi = qv + (b * Sq + i) * d + h * dh;
        for (std::size_t j = 0; j < Sk; ++j) {
          p[j] = visible(b, i, j) ? kernel::dot(qi, kv + (b * Sk + j) * d + h * dh, dh) * inv_sqrt
                                  : neg_inf;
        }
        kernel::softmax_row(p, Sk);
        T* oi = out.data() + (b * Sq + i) * d + h * dh;
        for (std::size_t j = 0; j < Sk; ++j) {
          if (p[j] == T(0)) continue;
          const T* vj = vv + (b * Sk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }

  auto qn = q.node_ptr(), kn = k.node_ptr(), vn = v.node_ptr();
  return make_result<T>(
      "attention", {B * Sq, d}, std::move(out), {qn, kn, vn},
      [qn, kn, vn, probs = std::move(probs), B, Sq, Sk, H, d, dh, inv_sqrt](Node<T>& o) {
        std::vector<T> dq(qn->value.size(), T(0)), dk(kn->value.size(), T(0)),
            dv(vn->value.size(), T(0));
        std::vector<T> dp(Sk);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < Sq; ++i) {
              const T* p = probs.data() + ((b * H + h) * Sq + i) * Sk;
              const T* go = o.grad.data() + (b * Sq + i) * d + h * dh;
              T row_dot = 0;
              for (std::size_t j = 0; j < Sk; ++j) {
                if (p[j] == T(0)) {
                  dp[j] = 0;
                  continue;
                }
                dp[j] = kernel::dot(go, vn->value.data() + (b * Sk + j) * d + h * dh, dh);
                row_dot += p[j] * dp[j];
                T* dvj = dv.data() + (b * Sk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * go[c];
              }
              const T* qi = qn->value.data() + (b * Sq + i) * d + h * dh;
              T* dqi = dq.data() + (b * Sq + i) * d + h * dh;
              for (std::size_t j = 0; j < Sk; ++j) {
                if (p[j] == T(0)) continue;
                const T ds = p[j] * (dp[j] - row_dot) * inv_sqrt;
                const T* kj = kn->value.data() + (b * Sk + j) * d + h * dh;
                T* dkj = dk.data() + (b * Sk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  dqi[c] += ds * kj[c];
                  dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
        accumulate<T>(*qn, dq);
        accumulate<T>(*kn, dk);
        accumulate<T>(*vn, dv);
      });
}

template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                                    int pad_id) {
  require_2d("cross_entropy", logits);
  const std::size_t N = logits.dim(0), V = logits.dim(1);
  require(targets.size() == N, "cross_entropy: " + std::to_string(targets.size()) +
                                   " targets for " + std::to_string(N) + " rows");
  std::size_t count = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    require(t >= 0 && static_cast<std::size_t>(t) < V,
            "cross_entropy: target " + std::to_string(t) + " outside vocabulary");
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: no supervised positions");

  std::vector<T> probs(N * V);
  double nll = 0.0;
  T loss_sum = 0;
  for (std::size_t r = 0; r < N; ++r) {
    if (targets[r] == pad_id) continue;
    const T* x = logits.data().data() + r * V;
    T mx = x[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, x[j]);
    T s = 0;
    for (std::size_t j = 0; j < V; ++j) s += std::exp(x[j] - mx);
    const T lse = mx + std::log(s);
    const T l = lse - x[targets[r]];
    loss_sum += l;
    nll += static_cast<double>(l);
    T* pr = probs.data() + r * V;
    for (std::size_t j = 0; j < V; ++j) pr[j] = std::exp(x[j] - lse);
  }
  const T inv = T(1) / static_cast<T>(count);
  std::vector<int> tgt(targets.begin(), targets.end());
  auto ln = logits.node_ptr();
  auto loss = make_result<T>(
      "cross_entropy", {1}, {loss_sum * inv}, {ln},
      [ln, probs = std::move(probs), tgt = std::move(tgt), pad_id, N, V, inv](Node<T>& o) {
        if (!ln->requires_grad) return;
        auto& g = ln->ensure_grad();
        const T scale_factor = o.grad[0] * inv;
        for (std::size_t r = 0; r < N; ++r) {
          if (tgt[r] == pad_id) continue;
          const T* pr = probs.data() + r * V;
          T* gr = g.data() + r * V;
          for (std::size_t j = 0; j < V; ++j) gr[j] += scale_factor * pr[j];
          gr[tgt[r]] -= scale_factor;
        }
      });
  return {loss, count, nll};
}

#define MMB_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> matmul_bt<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                  \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                 \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, std::uint64_t);                       \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> concat_rows<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                  const AttentionLayout&);                                      \
  template CrossEntropyResult<T> cross_entropy<T>(const Tensor<T>&, std::span<const int>, int);

MMB_INSTANTIATE_OPS(float)
MMB_INSTANTIATE_OPS(double)

}  // namespace mmb::num
