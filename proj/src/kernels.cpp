#include "halo/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace halo::kernels {

namespace {
Mode g_mode = Mode::Parallel;
}

Mode mode() { return g_mode; }
void set_mode(Mode m) { g_mode = m; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// ---------------------------------------------------------------------------
// matmul / transpose

void matmul(const double* a, int m, int k, const double* b, int n, double* c) {
  parallel_for(m, [&](int64_t i) {
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  });
}

void transpose(const double* a, int m, int n, double* at) {
  parallel_for(n, [&](int64_t j) {
    for (int i = 0; i < m; ++i) at[j * m + i] = a[static_cast<int64_t>(i) * n + j];
  });
}

// ---------------------------------------------------------------------------
// conv2d

void conv2d_forward(const double* x, int cin, int h, int w, const double* wgt, int cout, int kh,
                    int kw, const double* bias, int stride, int pad, double* y) {
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(w, kw, stride, pad);
  parallel_for(static_cast<int64_t>(cout) * ho, [&](int64_t idx) {
    const int oc = static_cast<int>(idx / ho);
    const int oy = static_cast<int>(idx % ho);
    double* yrow = y + (static_cast<int64_t>(oc) * ho + oy) * wo;
    for (int ox = 0; ox < wo; ++ox) {
      double acc = bias ? bias[oc] : 0.0;
      for (int ic = 0; ic < cin; ++ic) {
        const double* xc = x + static_cast<int64_t>(ic) * h * w;
        const double* wc = wgt + ((static_cast<int64_t>(oc) * cin + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            acc += xc[static_cast<int64_t>(iy) * w + ix] * wc[ky * kw + kx];
          }
        }
      }
      yrow[ox] = acc;
    }
  });
}

void conv2d_backward_input(const double* wgt, int cin, int cout, int kh, int kw, const double* dy,
                           int ho, int wo, int stride, int pad, double* dx, int h, int w) {
  // gather form: each input pixel sums the output positions that touch it
  parallel_for(static_cast<int64_t>(cin) * h, [&](int64_t idx) {
    const int ic = static_cast<int>(idx / h);
    const int iy = static_cast<int>(idx % h);
    double* dxrow = dx + (static_cast<int64_t>(ic) * h + iy) * w;
    for (int ix = 0; ix < w; ++ix) {
      double acc = 0.0;
      for (int oc = 0; oc < cout; ++oc) {
        const double* dyc = dy + static_cast<int64_t>(oc) * ho * wo;
        const double* wc = wgt + ((static_cast<int64_t>(oc) * cin + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int num = iy + pad - ky;
          if (num < 0 || num % stride != 0) continue;
          const int oy = num / stride;
          if (oy >= ho) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int numx = ix + pad - kx;
            if (numx < 0 || numx % stride != 0) continue;
            const int ox = numx / stride;
            if (ox >= wo) continue;
            acc += dyc[static_cast<int64_t>(oy) * wo + ox] * wc[ky * kw + kx];
          }
        }
      }
      dxrow[ix] = acc;
    }
  });
}

void conv2d_backward_params(const double* x, int cin, int h, int w, const double* dy, int cout,
                            int ho, int wo, int kh, int kw, int stride, int pad, double* dwgt,
                            double* dbias) {
  // each output channel owns a disjoint slice of dwgt/dbias
  parallel_for(cout, [&](int64_t oc) {
    const double* dyc = dy + oc * ho * wo;
    double bacc = 0.0;
    for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) bacc += dyc[i];
    if (dbias) dbias[oc] = bacc;
    for (int ic = 0; ic < cin; ++ic) {
      const double* xc = x + static_cast<int64_t>(ic) * h * w;
      double* wc = dwgt + ((oc * cin + ic) * kh) * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              acc += dyc[static_cast<int64_t>(oy) * wo + ox] * xc[static_cast<int64_t>(iy) * w + ix];
            }
          }
          wc[ky * kw + kx] = acc;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// bilinear resize (half-pixel centers)

namespace {
inline void src_coord(int o, int out_dim, int in_dim, int* i0, int* i1, double* t) {
  const double s = (static_cast<double>(o) + 0.5) * in_dim / out_dim - 0.5;
  double f = std::floor(s);
  *t = s - f;
  int i = static_cast<int>(f);
  if (i < 0) {
    i = 0;
    *t = 0.0;
  }
  if (i >= in_dim - 1) {
    i = in_dim - 1;
    *t = 0.0;
  }
  *i0 = i;
  *i1 = std::min(i + 1, in_dim - 1);
}
}  // namespace

void resize_bilinear_forward(const double* x, int c, int h, int w, double* y, int ho, int wo) {
  parallel_for(static_cast<int64_t>(c) * ho, [&](int64_t idx) {
    const int ch = static_cast<int>(idx / ho);
    const int oy = static_cast<int>(idx % ho);
    int y0, y1;
    double ty;
    src_coord(oy, ho, h, &y0, &y1, &ty);
    const double* xc = x + static_cast<int64_t>(ch) * h * w;
    double* yrow = y + (static_cast<int64_t>(ch) * ho + oy) * wo;
    for (int ox = 0; ox < wo; ++ox) {
      int x0, x1;
      double tx;
      src_coord(ox, wo, w, &x0, &x1, &tx);
      const double v00 = xc[static_cast<int64_t>(y0) * w + x0];
      const double v01 = xc[static_cast<int64_t>(y0) * w + x1];
      const double v10 = xc[static_cast<int64_t>(y1) * w + x0];
      const double v11 = xc[static_cast<int64_t>(y1) * w + x1];
      yrow[ox] = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11);
    }
  });
}

void resize_bilinear_backward(const double* dy, int c, int ho, int wo, double* dx, int h, int w) {
  // gather form over input pixels so the parallel loop has disjoint writes
  const double sy = static_cast<double>(h) / ho;
  const double sx = static_cast<double>(w) / wo;
  parallel_for(static_cast<int64_t>(c) * h, [&](int64_t idx) {
    const int ch = static_cast<int>(idx / h);
    const int iy = static_cast<int>(idx % h);
    const double* dyc = dy + static_cast<int64_t>(ch) * ho * wo;
    double* dxrow = dx + (static_cast<int64_t>(ch) * h + iy) * w;
    // output rows that may reference input row iy
    const int oy_lo = std::max(0, static_cast<int>(std::floor((iy - 1) / sy)) - 1);
    const int oy_hi = std::min(ho - 1, static_cast<int>(std::ceil((iy + 2) / sy)) + 1);
    for (int ix = 0; ix < w; ++ix) {
      const int ox_lo = std::max(0, static_cast<int>(std::floor((ix - 1) / sx)) - 1);
      const int ox_hi = std::min(wo - 1, static_cast<int>(std::ceil((ix + 2) / sx)) + 1);
      double acc = 0.0;
      for (int oy = oy_lo; oy <= oy_hi; ++oy) {
        int y0, y1;
        double ty;
        src_coord(oy, ho, h, &y0, &y1, &ty);
        double wy = 0.0;
        if (y0 == iy) wy += 1.0 - ty;
        if (y1 == iy) wy += ty;
        if (wy == 0.0) continue;
        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
          int x0, x1;
          double tx;
          src_coord(ox, wo, w, &x0, &x1, &tx);
          double wx = 0.0;
          if (x0 == ix) wx += 1.0 - tx;
          if (x1 == ix) wx += tx;
          if (wx == 0.0) continue;
          acc += wy * wx * dyc[static_cast<int64_t>(oy) * wo + ox];
        }
      }
      dxrow[ix] = acc;
    }
  });
}

// ---------------------------------------------------------------------------
// softmax / layernorm

void softmax_rows(const double* x, int m, int n, double* y) {
  parallel_for(m, [&](int64_t i) {
    const double* xr = x + i * n;
    double* yr = y + i * n;
    double mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < n; ++j) yr[j] *= inv;
  });
}

void layernorm_forward(const double* x, int t, int c, const double* gamma, const double* beta,
                       double eps, double* y, double* mean, double* rstd) {
  parallel_for(t, [&](int64_t i) {
    const double* xr = x + i * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xr[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= c;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    rstd[i] = rs;
    double* yr = y + i * c;
    for (int j = 0; j < c; ++j) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
  });
}

void layernorm_backward(const double* x, int t, int c, const double* gamma, const double* mean,
                        const double* rstd, const double* dy, double* dx, double* dgamma,
                        double* dbeta) {
  parallel_for(t, [&](int64_t i) {
    const double* xr = x + i * c;
    const double* dyr = dy + i * c;
    double* dxr = dx + i * c;
    const double mu = mean[i], rs = rstd[i];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int j = 0; j < c; ++j) {
      const double g = dyr[j] * gamma[j];
      sum_g += g;
      sum_gx += g * (xr[j] - mu) * rs;
    }
    for (int j = 0; j < c; ++j) {
      const double g = dyr[j] * gamma[j];
      const double xhat = (xr[j] - mu) * rs;
      dxr[j] = (g - sum_g / c - xhat * sum_gx / c) * rs;
    }
  });
  // dgamma/dbeta: gather per channel over tokens
  parallel_for(c, [&](int64_t j) {
    double dg = 0.0, db = 0.0;
    for (int i = 0; i < t; ++i) {
      const double xhat = (x[static_cast<int64_t>(i) * c + j] - mean[i]) * rstd[i];
      dg += dy[static_cast<int64_t>(i) * c + j] * xhat;
      db += dy[static_cast<int64_t>(i) * c + j];
    }
    dgamma[j] = dg;
    dbeta[j] = db;
  });
}

// ---------------------------------------------------------------------------
// attention

namespace {
// softmax row for one (query, head): probs[j] over t keys
inline void attn_row(const double* q, const double* k, const double* bias, int t, int c, int dh,
                     int head, int ti, double scale, double* probs) {
  const double* qr = q + static_cast<int64_t>(ti) * c + head * dh;
  double mx = -1e300;
  for (int j = 0; j < t; ++j) {
    const double* kr = k + static_cast<int64_t>(j) * c + head * dh;
    double dot = 0.0;
    for (int d = 0; d < dh; ++d) dot += qr[d] * kr[d];
    dot = dot * scale + (bias ? bias[j] : 0.0);
    probs[j] = dot;
    mx = std::max(mx, dot);
  }
  double s = 0.0;
  for (int j = 0; j < t; ++j) {
    probs[j] = std::exp(probs[j] - mx);
    s += probs[j];
  }
  const double inv = 1.0 / s;
  for (int j = 0; j < t; ++j) probs[j] *= inv;
}
}  // namespace

void attention_forward(const double* q, const double* k, const double* v, const double* bias,
                       int t, int c, int heads, double* out) {
  const int dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  parallel_for(t, [&](int64_t ti) {
    std::vector<double> probs(static_cast<size_t>(t));
    double* orow = out + ti * c;
    for (int h = 0; h < heads; ++h) {
      attn_row(q, k, bias, t, c, dh, h, static_cast<int>(ti), scale, probs.data());
      double* oh = orow + h * dh;
      std::fill(oh, oh + dh, 0.0);
      for (int j = 0; j < t; ++j) {
        const double p = probs[j];
        const double* vr = v + static_cast<int64_t>(j) * c + h * dh;
        for (int d = 0; d < dh; ++d) oh[d] += p * vr[d];
      }
    }
  });
}

void attention_backward(const double* q, const double* k, const double* v, const double* bias,
                        const double* dout, int t, int c, int heads, double* dq, double* dk,
                        double* dv, double* dbias) {
  const int dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // dq is per-query (disjoint writes); dk/dv/dbias accumulate over queries,
  // done with a fixed chunk decomposition so both modes fold identically.
  const int64_t kc = static_cast<int64_t>(t) * c;
  std::vector<double> pk(static_cast<size_t>(kReduceChunks) * kc, 0.0);
  std::vector<double> pv(static_cast<size_t>(kReduceChunks) * kc, 0.0);
  std::vector<double> pb(bias ? static_cast<size_t>(kReduceChunks) * t : 0, 0.0);

  parallel_for(kReduceChunks, [&](int64_t chunk) {
    std::vector<double> probs(static_cast<size_t>(t));
    std::vector<double> dlog(static_cast<size_t>(t));
    double* dkp = pk.data() + chunk * kc;
    double* dvp = pv.data() + chunk * kc;
    double* dbp = bias ? pb.data() + chunk * t : nullptr;
    for (int64_t ti = chunk_begin(t, static_cast<int>(chunk));
         ti < chunk_end(t, static_cast<int>(chunk)); ++ti) {
      const double* dor = dout + ti * c;
      double* dqr = dq + ti * c;
      std::fill(dqr, dqr + c, 0.0);
      for (int h = 0; h < heads; ++h) {
        attn_row(q, k, bias, t, c, dh, h, static_cast<int>(ti), scale, probs.data());
        const double* doh = dor + h * dh;
        // dP_j = dO . v_j ; dlogits = P o (dP - sum_j dP_j P_j)
        double dot_pp = 0.0;
        for (int j = 0; j < t; ++j) {
          const double* vr = v + static_cast<int64_t>(j) * c + h * dh;
          double dp = 0.0;
          for (int d = 0; d < dh; ++d) dp += doh[d] * vr[d];
          dlog[j] = dp;
          dot_pp += dp * probs[j];
        }
        for (int j = 0; j < t; ++j) dlog[j] = probs[j] * (dlog[j] - dot_pp);
        // accumulate
        const double* qr = q + ti * c + h * dh;
        double* dqh = dqr + h * dh;
        for (int j = 0; j < t; ++j) {
          const double dl = dlog[j] * scale;
          const double* kr = k + static_cast<int64_t>(j) * c + h * dh;
          double* dkh = dkp + static_cast<int64_t>(j) * c + h * dh;
          double* dvh = dvp + static_cast<int64_t>(j) * c + h * dh;
          for (int d = 0; d < dh; ++d) {
            dqh[d] += dl * kr[d];
            dkh[d] += dl * qr[d];
            dvh[d] += probs[j] * doh[d];
          }
          if (dbp) dbp[j] += dlog[j];
        }
      }
    }
  });

  // fold partials in fixed chunk order
  std::memset(dk, 0, sizeof(double) * kc);
  std::memset(dv, 0, sizeof(double) * kc);
  if (dbias) std::memset(dbias, 0, sizeof(double) * t);
  for (int chunk = 0; chunk < kReduceChunks; ++chunk) {
    const double* dkp = pk.data() + static_cast<int64_t>(chunk) * kc;
    const double* dvp = pv.data() + static_cast<int64_t>(chunk) * kc;
    for (int64_t i = 0; i < kc; ++i) {
      dk[i] += dkp[i];
      dv[i] += dvp[i];
    }
    if (dbias) {
      const double* dbp = pb.data() + static_cast<int64_t>(chunk) * t;
      for (int j = 0; j < t; ++j) dbias[j] += dbp[j];
    }
  }
}

// ---------------------------------------------------------------------------
// cosine map

void cosine_map_forward(const double* f, int c, int64_t hw, const double* p, double* raw) {
  double pn = 0.0;
  for (int ch = 0; ch < c; ++ch) pn += p[ch] * p[ch];
  pn = std::sqrt(pn);
  parallel_for(hw, [&](int64_t i) {
    double dot = 0.0, fn = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double fv = f[static_cast<int64_t>(ch) * hw + i];
      dot += fv * p[ch];
      fn += fv * fv;
    }
    fn = std::sqrt(fn);
    raw[i] = (fn > 0.0 && pn > 0.0) ? dot / (fn * pn) : 0.0;
  });
}

void cosine_map_backward(const double* f, int c, int64_t hw, const double* p, const double* raw,
                         const double* draw, double* df, double* dp) {
  double pn2 = 0.0;
  for (int ch = 0; ch < c; ++ch) pn2 += p[ch] * p[ch];
  const double pn = std::sqrt(pn2);

  // df: per-pixel disjoint writes
  parallel_for(hw, [&](int64_t i) {
    double fn2 = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double fv = f[static_cast<int64_t>(ch) * hw + i];
      fn2 += fv * fv;
    }
    const double fn = std::sqrt(fn2);
    if (fn == 0.0 || pn == 0.0) {
      for (int ch = 0; ch < c; ++ch) df[static_cast<int64_t>(ch) * hw + i] += 0.0;
      return;
    }
    const double g = draw[i];
    const double inv = 1.0 / (fn * pn);
    for (int ch = 0; ch < c; ++ch) {
      const double fv = f[static_cast<int64_t>(ch) * hw + i];
      df[static_cast<int64_t>(ch) * hw + i] += g * (p[ch] * inv - raw[i] * fv / fn2);
    }
  });

  // dp: gather per channel
  if (dp) {
    parallel_for(c, [&](int64_t ch) {
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) {
        double fn2 = 0.0;
        for (int cc = 0; cc < c; ++cc) {
          const double fv = f[static_cast<int64_t>(cc) * hw + i];
          fn2 += fv * fv;
        }
        const double fn = std::sqrt(fn2);
        if (fn == 0.0 || pn == 0.0) continue;
        const double fv = f[ch * hw + i];
        acc += draw[i] * (fv / (fn * pn) - raw[i] * p[ch] / pn2);
      }
      dp[ch] += acc;
    });
  }
}

// ---------------------------------------------------------------------------
// weighted pooling

void map_pool_forward(const double* f, int c, int64_t hw, const double* wstack, int n,
                      const double* wsum, double* out) {
  parallel_for(static_cast<int64_t>(n) * c, [&](int64_t idx) {
    const int i = static_cast<int>(idx / c);
    const int ch = static_cast<int>(idx % c);
    const double* wrow = wstack + static_cast<int64_t>(i) * hw;
    const double* frow = f + static_cast<int64_t>(ch) * hw;
    double acc = 0.0;
    for (int64_t p = 0; p < hw; ++p) acc += frow[p] * wrow[p];
    out[idx] = acc / wsum[i];
  });
}

void map_pool_backward(const double* wstack, int n, int64_t hw, const double* wsum,
                       const double* dout, int c, double* df) {
  parallel_for(static_cast<int64_t>(c) * hw, [&](int64_t idx) {
    const int ch = static_cast<int>(idx / hw);
    const int64_t p = idx % hw;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += dout[static_cast<int64_t>(i) * c + ch] * wstack[static_cast<int64_t>(i) * hw + p] /
             wsum[i];
    df[idx] += acc;
  });
}

// ---------------------------------------------------------------------------
// gaussian stamp / dilation

void gaussian_stamp(double row, double col, double sigma, int h, int w, double* out) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  parallel_for(h, [&](int64_t u) {
    const double du = static_cast<double>(u) - row;
    double* orow = out + u * w;
    for (int v = 0; v < w; ++v) {
      const double dv = static_cast<double>(v) - col;
      orow[v] = std::exp(-(du * du + dv * dv) * inv);
    }
  });
}

void dilate_square(const uint8_t* m, int h, int w, int r, uint8_t* out) {
  const int rad = (r - 1) / 2;
  std::vector<uint8_t> tmp(static_cast<size_t>(h) * w, 0);
  // horizontal pass
  parallel_for(h, [&](int64_t y) {
    const uint8_t* mrow = m + y * w;
    uint8_t* trow = tmp.data() + y * w;
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      const int lo = std::max(0, x - rad), hi = std::min(w - 1, x + rad);
      for (int i = lo; i <= hi && !v; ++i) v = mrow[i];
      trow[x] = v;
    }
  });
  // vertical pass
  parallel_for(w, [&](int64_t x) {
    for (int y = 0; y < h; ++y) {
      uint8_t v = 0;
      const int lo = std::max(0, y - rad), hi = std::min(h - 1, y + rad);
      for (int i = lo; i <= hi && !v; ++i) v = tmp[static_cast<size_t>(i) * w + x];
      out[static_cast<size_t>(y) * w + x] = v;
    }
  });
}

}  // namespace halo::kernels
