#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cts/tensor.hpp"

// Differentiable operations. Every op validates shapes and throws
// DimensionError on mismatch; gradients are recorded on the active tape.
namespace cts {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[..., n] + bias[n]; the only broadcasting op.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
// Exact (erf) form.
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
// Row-wise over the last axis of a [m, n] tensor.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

/// Mean negative log-likelihood of `targets` under softmax(logits) for
/// logits of shape [n, C]. Throws InputError for targets outside [0, C).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
// out[i] = x[index[i]]; backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// out[g] = mean of x rows listed in groups[g].
Tensor pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups);

/// x[C_in, H, W] * w[C_out, C_in, kh, kw] (+ bias[C_out] when defined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Bilinear resampling of x[C, H, W] with half-pixel centers and edge clamp.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Convenience for tests and inference: row-wise argmax of a [n, C] tensor.
std::vector<int> argmax_rows(const Tensor& x);

namespace detail {
// C[m,n] (+)= op(A) * op(B) on raw row-major buffers.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
}  // namespace detail

}  // namespace cts
