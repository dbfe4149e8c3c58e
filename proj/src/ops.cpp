#include "cts/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "cts/errors.hpp"

namespace cts {
namespace detail {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto ek = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMat> out(c, em, en);
  if (!accumulate) out.setZero();
  // op(A) is m x k, op(B) is k x n.
  Eigen::Map<const RowMat> amat(a, trans_a ? ek : em, trans_a ? em : ek);
  Eigen::Map<const RowMat> bmat(b, trans_b ? en : ek, trans_b ? ek : en);
  if (!trans_a && !trans_b) {
    out.noalias() += amat * bmat;
  } else if (trans_a && !trans_b) {
    out.noalias() += amat.transpose() * bmat;
  } else if (!trans_a && trans_b) {
    out.noalias() += amat * bmat.transpose();
  } else {
    out.noalias() += amat.transpose() * bmat.transpose();
  }
}

}  // namespace detail

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  const bool rec = should_record({&a, &b});
  Tensor out({m, n}, rec);
  detail::gemm(false, false, m, n, k, a.data().data(), b.data().data(),
               out.mutable_data().data(), false);
  if (rec) {
    active_tape()->record("matmul", {a, b}, out,
                          [a, b, m, n, k](std::span<const double> g) {
                            if (a.requires_grad()) {
                              detail::gemm(false, true, m, k, n, g.data(), b.data().data(),
                                           a.grad_buffer().data(), true);
                            }
                            if (b.requires_grad()) {
                              detail::gemm(true, false, k, n, m, a.data().data(), g.data(),
                                           b.grad_buffer().data(), true);
                            }
                          });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const bool rec = should_record({&a});
  Tensor out({n, m}, rec);
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  if (rec) {
    active_tape()->record("transpose", {a}, out, [a, m, n](std::span<const double> g) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool rec = should_record({&a, &b});
  Tensor out(a.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  if (rec) {
    active_tape()->record("add", {a, b}, out, [a, b](std::span<const double> g) {
      accumulate_grad(a, g);
      accumulate_grad(b, g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool rec = should_record({&a, &b});
  Tensor out(a.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  if (rec) {
    active_tape()->record("sub", {a, b}, out, [a, b](std::span<const double> g) {
      accumulate_grad(a, g);
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool rec = should_record({&a, &b});
  Tensor out(a.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  if (rec) {
    active_tape()->record("mul", {a, b}, out, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  const bool rec = should_record({&a});
  Tensor out(a.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * factor;
  if (rec) {
    active_tape()->record("scale", {a}, out, [a, factor](std::span<const double> g) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  require(x.rank() >= 1 && x.shape().back() == bias.dim(0),
          "add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  const std::size_t n = bias.dim(0);
  const bool rec = should_record({&x, &bias});
  Tensor out(x.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + bias[i % n];
  if (rec) {
    active_tape()->record("add_bias", {x, bias}, out,
                          [x, bias, n](std::span<const double> g) {
                            accumulate_grad(x, g);
                            if (bias.requires_grad()) {
                              auto gb = bias.grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                            }
                          });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool rec = should_record({&x});
  Tensor out(x.shape(), rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (rec) {
    active_tape()->record("relu", {x}, out, [x](std::span<const double> g) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  const bool rec = should_record({&x});
  Tensor out(x.shape(), rec);
  auto o = out.mutable_data();
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
  if (rec) {
    active_tape()->record("gelu", {x}, out, [x](std::span<const double> g) {
      constexpr double inv_sqrt2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " invalid for shape " +
                               shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t n = x.dim(axis);

  const bool rec = should_record({&x});
  Tensor out(x.shape(), rec);
  auto y = out.mutable_data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(x[base + i * inner] - mx);
        y[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= total;
    }
  }
  if (rec) {
    active_tape()->record("softmax", {x}, out,
                          [x, out, outer, inner, n](std::span<const double> g) {
                            auto gx = x.grad_buffer();
                            for (std::size_t o = 0; o < outer; ++o) {
                              for (std::size_t j = 0; j < inner; ++j) {
                                const std::size_t base = o * n * inner + j;
                                double dot = 0.0;
                                for (std::size_t i = 0; i < n; ++i)
                                  dot += out[base + i * inner] * g[base + i * inner];
                                for (std::size_t i = 0; i < n; ++i) {
                                  const std::size_t idx = base + i * inner;
                                  gx[idx] += out[idx] * (g[idx] - dot);
                                }
                              }
                            }
                          });
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.rank() >= 1, "layernorm: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  require(gamma.shape() == Shape{n} && beta.shape() == Shape{n},
          "layernorm: affine parameters must have shape [" + std::to_string(n) + "]");

  const bool rec = should_record({&x, &gamma, &beta});
  Tensor out(x.shape(), rec);
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto y = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (row[i] - mu) * inv_std[r];
      xhat[r * n + i] = h;
      y[r * n + i] = gamma[i] * h + beta[i];
    }
  }
  if (rec) {
    active_tape()->record(
        "layernorm", {x, gamma, beta}, out,
        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
         rows](std::span<const double> g) {
          if (gamma.requires_grad() || beta.requires_grad()) {
            auto gg = gamma.requires_grad() ? gamma.grad_buffer() : std::span<double>{};
            auto gb = beta.requires_grad() ? beta.grad_buffer() : std::span<double>{};
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t i = 0; i < n; ++i) {
                if (!gg.empty()) gg[i] += g[r * n + i] * xhat[r * n + i];
                if (!gb.empty()) gb[i] += g[r * n + i];
              }
            }
          }
          if (x.requires_grad()) {
            auto gx = x.grad_buffer();
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t r = 0; r < rows; ++r) {
              double mean_d = 0.0, mean_dh = 0.0;
              for (std::size_t i = 0; i < n; ++i) {
                const double d = g[r * n + i] * gamma[i];
                mean_d += d;
                mean_dh += d * xhat[r * n + i];
              }
              mean_d *= inv_n;
              mean_dh *= inv_n;
              for (std::size_t i = 0; i < n; ++i) {
                const double d = g[r * n + i] * gamma[i];
                gx[r * n + i] += inv_std[r] * (d - mean_d - xhat[r * n + i] * mean_dh);
              }
            }
          }
        });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  require(targets.size() == n, "cross_entropy: " + std::to_string(targets.size()) +
                                   " targets for " + std::to_string(n) + " rows");
  if (n == 0) throw DimensionError("cross_entropy: empty batch");
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw InputError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  const bool rec = should_record({&logits});
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data().data() + r * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - z[targets[r]];
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(z[j] - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n), rec);
  if (rec) {
    std::vector<int> tgt(targets.begin(), targets.end());
    active_tape()->record("cross_entropy", {logits}, out,
                          [logits, probs = std::move(probs), tgt = std::move(tgt), n,
                           c](std::span<const double> g) {
                            auto gl = logits.grad_buffer();
                            const double s = g[0] / static_cast<double>(n);
                            for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t j = 0; j < c; ++j) {
                                const double onehot = static_cast<int>(j) == tgt[r] ? 1.0 : 0.0;
                                gl[r * c + j] += s * (probs[r * c + j] - onehot);
                              }
                            }
                          });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool rec = should_record({&x});
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s, rec);
  if (rec) {
    active_tape()->record("sum", {x}, out, [x](std::span<const double> g) {
      auto gx = x.grad_buffer();
      for (double& v : gx) v += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  const bool rec = should_record({&x});
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), rec);
  if (rec) {
    active_tape()->record("reshape", {x}, out,
                          [x](std::span<const double> g) { accumulate_grad(x, g); });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(start + count <= n, "slice_cols: range exceeds " + std::to_string(n) + " columns");
  const bool rec = should_record({&x});
  Tensor out({m, count}, rec);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().data() + i * n + start, count, o.data() + i * count);
  if (rec) {
    active_tape()->record("slice_cols", {x}, out,
                          [x, m, n, start, count](std::span<const double> g) {
                            auto gx = x.grad_buffer();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < count; ++j)
                                gx[i * n + start + j] += g[i * count + j];
                          });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t total = 0;
  bool rec = false;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    require(p.dim(0) == m, "concat_cols: row counts differ");
    total += p.dim(1);
    rec = rec || should_record({&p});
  }
  Tensor out({m, total}, rec);
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.data().data() + i * w, w, o.data() + i * total + offset);
    offset += w;
  }
  if (rec) {
    active_tape()->record("concat_cols", parts, out,
                          [parts, m, total](std::span<const double> g) {
                            std::size_t off = 0;
                            for (auto& p : parts) {
                              const std::size_t w = p.dim(1);
                              if (p.requires_grad()) {
                                auto gp = p.grad_buffer();
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < w; ++j)
                                    gp[i * w + j] += g[i * total + off + j];
                              }
                              off += w;
                            }
                          });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  for (auto i : index)
    require(i < rows, "gather_rows: index " + std::to_string(i) + " >= " + std::to_string(rows));
  const bool rec = should_record({&x});
  Tensor out({index.size(), d}, rec);
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(x.data().data() + index[r] * d, d, o.data() + r * d);
  if (rec) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    active_tape()->record("gather_rows", {x}, out,
                          [x, idx = std::move(idx), d](std::span<const double> g) {
                            auto gx = x.grad_buffer();
                            for (std::size_t r = 0; r < idx.size(); ++r)
                              for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
                          });
  }
  return out;
}

Tensor pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups) {
  require_rank(x, 2, "pool_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  for (const auto& grp : groups) {
    require(!grp.empty(), "pool_rows: empty group");
    for (auto i : grp) require(i < rows, "pool_rows: index out of range");
  }
  const bool rec = should_record({&x});
  Tensor out({groups.size(), d}, rec);
  auto o = out.mutable_data();
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const double inv = 1.0 / static_cast<double>(groups[gi].size());
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (auto r : groups[gi]) s += x[r * d + j];
      o[gi * d + j] = s * inv;
    }
  }
  if (rec) {
    active_tape()->record("pool_rows", {x}, out, [x, groups, d](std::span<const double> g) {
      auto gx = x.grad_buffer();
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double inv = 1.0 / static_cast<double>(groups[gi].size());
        for (auto r : groups[gi])
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[gi * d + j] * inv;
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == cin, "conv2d: kernel expects " + std::to_string(w.dim(1)) +
                               " input channels, got " + std::to_string(cin));
  require(h + 2 * padding >= kh && wd + 2 * padding >= kw,
          "conv2d: kernel larger than padded input");
  if (bias.defined()) {
    require(bias.shape() == Shape{cout}, "conv2d: bias must have shape [C_out]");
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - kw) / stride + 1;
  const std::size_t k = cin * kh * kw;
  const std::size_t p = ho * wo;

  std::vector<double> cols(k * p, 0.0);
  const auto xd = x.data();
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = cols.data() + ((c * kh + ki) * kw + kj) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
            row[oy * wo + ox] = xd[(c * h + iy) * wd + ix];
          }
        }
      }

  const bool rec = should_record({&x, &w, &bias});
  Tensor out({cout, ho, wo}, rec);
  auto o = out.mutable_data();
  detail::gemm(false, false, cout, p, k, w.data().data(), cols.data(), o.data(), false);
  if (bias.defined()) {
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t i = 0; i < p; ++i) o[c * p + i] += bias[c];
  }
  if (rec) {
    std::vector<Tensor> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    active_tape()->record(
        "conv2d", std::move(inputs), out,
        [x, w, bias, cols = std::move(cols), cin, h, wd, cout, kh, kw, ho, wo, k, p, stride,
         padding](std::span<const double> g) {
          if (w.requires_grad()) {
            detail::gemm(false, true, cout, k, p, g.data(), cols.data(), w.grad_buffer().data(),
                         true);
          }
          if (bias.defined() && bias.requires_grad()) {
            auto gb = bias.grad_buffer();
            for (std::size_t c = 0; c < cout; ++c)
              for (std::size_t i = 0; i < p; ++i) gb[c] += g[c * p + i];
          }
          if (x.requires_grad()) {
            std::vector<double> dcols(k * p);
            detail::gemm(true, false, k, p, cout, w.data().data(), g.data(), dcols.data(), false);
            auto gx = x.grad_buffer();
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t ki = 0; ki < kh; ++ki)
                for (std::size_t kj = 0; kj < kw; ++kj) {
                  const double* row = dcols.data() + ((c * kh + ki) * kw + kj) * p;
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                      const long ix =
                          static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
                      if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                      gx[(c * h + iy) * wd + ix] += row[oy * wo + ox];
                    }
                  }
                }
          }
        });
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w;  // weight of i1
};

// Half-pixel-center source coordinates, clamped at the borders.
std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h >= 1 && w >= 1, "bilinear_resize: empty input");
  auto ty = resize_taps(h, out_h);
  auto tx = resize_taps(w, out_w);

  const bool rec = should_record({&x});
  Tensor out({c, out_h, out_w}, rec);
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = xd.data() + ch * h * w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& yt = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& xt = tx[ox];
        // Lerp form keeps constant regions exactly constant.
        const double a = plane[yt.i0 * w + xt.i0], b = plane[yt.i0 * w + xt.i1];
        const double cc = plane[yt.i1 * w + xt.i0], d = plane[yt.i1 * w + xt.i1];
        const double top = a + xt.w * (b - a);
        const double bot = cc + xt.w * (d - cc);
        o[(ch * out_h + oy) * out_w + ox] = top + yt.w * (bot - top);
      }
    }
  }
  if (rec) {
    active_tape()->record(
        "bilinear_resize", {x}, out,
        [x, ty = std::move(ty), tx = std::move(tx), c, h, w, out_h,
         out_w](std::span<const double> g) {
          auto gx = x.grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) {
            double* plane = gx.data() + ch * h * w;
            for (std::size_t oy = 0; oy < out_h; ++oy) {
              const Tap& yt = ty[oy];
              for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& xt = tx[ox];
                const double go = g[(ch * out_h + oy) * out_w + ox];
                plane[yt.i0 * w + xt.i0] += go * (1 - yt.w) * (1 - xt.w);
                plane[yt.i0 * w + xt.i1] += go * (1 - yt.w) * xt.w;
                plane[yt.i1 * w + xt.i0] += go * yt.w * (1 - xt.w);
                plane[yt.i1 * w + xt.i1] += go * yt.w * xt.w;
              }
            }
          }
        });
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& x) {
  require_rank(x, 2, "argmax_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data().data() + r * c;
    out[r] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace cts
