#pragma once

#include <cstdint>

#include "halo/parallel.hpp"

namespace halo::kernels {

// Dense row-major kernels. Every kernel honors the global Mode (see
// parallel.hpp) and produces bitwise-identical results in both modes.

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, int m, int k, const double* b, int n, double* c);

// at[n,m] = a[m,n]^T
void transpose(const double* a, int m, int n, double* at);

// 2-D convolution, CHW layout, zero padding.
void conv2d_forward(const double* x, int cin, int h, int w, const double* wgt, int cout, int kh,
                    int kw, const double* bias, int stride, int pad, double* y);
void conv2d_backward_input(const double* wgt, int cin, int cout, int kh, int kw, const double* dy,
                           int ho, int wo, int stride, int pad, double* dx, int h, int w);
void conv2d_backward_params(const double* x, int cin, int h, int w, const double* dy, int cout,
                            int ho, int wo, int kh, int kw, int stride, int pad, double* dwgt,
                            double* dbias);
inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Bilinear resize with half-pixel centers.
void resize_bilinear_forward(const double* x, int c, int h, int w, double* y, int ho, int wo);
void resize_bilinear_backward(const double* dy, int c, int ho, int wo, double* dx, int h, int w);

// Row-wise softmax over [m,n] (max-subtracted).
void softmax_rows(const double* x, int m, int n, double* y);

// Per-row layer normalization over [t,c]; mean/rstd are length-t scratch
// saved by the forward pass for the backward pass.
void layernorm_forward(const double* x, int t, int c, const double* gamma, const double* beta,
                       double eps, double* y, double* mean, double* rstd);
void layernorm_backward(const double* x, int t, int c, const double* gamma, const double* mean,
                        const double* rstd, const double* dy, double* dx, double* dgamma,
                        double* dbeta);

// Multi-head self-attention over t tokens of width c with an optional
// per-key additive logit bias (shared by every query row and head).
// Backward recomputes the softmax rows instead of storing the t*t matrix.
void attention_forward(const double* q, const double* k, const double* v, const double* bias,
                       int t, int c, int heads, double* out);
void attention_backward(const double* q, const double* k, const double* v, const double* bias,
                        const double* dout, int t, int c, int heads, double* dq, double* dk,
                        double* dv, double* dbias);

// raw[i] = cos(f[:,i], p) over a [c,hw] feature block; zero-norm pixels get 0.
void cosine_map_forward(const double* f, int c, int64_t hw, const double* p, double* raw);
void cosine_map_backward(const double* f, int c, int64_t hw, const double* p, const double* raw,
                         const double* draw, double* df, double* dp);

// out[n,c] = sum_i f[c,i]*w[n,i] / sum_i w[n,i]; wsum holds the n weight sums.
void map_pool_forward(const double* f, int c, int64_t hw, const double* wstack, int n,
                      const double* wsum, double* out);
void map_pool_backward(const double* wstack, int n, int64_t hw, const double* wsum,
                       const double* dout, int c, double* df);

// Unnormalized peak-1 Gaussian centered at (row, col) -- see geometry.
void gaussian_stamp(double row, double col, double sigma, int h, int w, double* out);

// Square binary dilation, radius (r-1)/2 in Chebyshev distance, border-clipped.
void dilate_square(const uint8_t* m, int h, int w, int r, uint8_t* out);

}  // namespace halo::kernels
