/* Hot loops for the fpsim compiled backend.
 *
 * Numerics contract (shared with the numpy fallback): float32 in/out,
 * float64 accumulation, fixed term order. Inner loops accumulate into
 * independent per-cell lanes (row buffers), so the compiler may SIMD
 * them without reassociating any individual sum. Must be compiled with
 * -ffp-contract=off. conv/dense weight gradients use a fixed 8-way
 * striped reduction; that order is part of this backend's definition
 * and differs from the fallback's (both deterministic, results agree
 * to float32 rounding).
 */

#include "core_impl.h"

#define RESTRICT restrict

/* The conv kernels copy each sample into a zero-padded plane so every
 * (channel, kernel-tap) pass is a single contiguous strip over the whole
 * output plane. Cells in the row margins (and reads running into the
 * spare zeroed row at the end of each padded plane) are computed and
 * discarded; padding contributes exact ±0.0 terms, which cannot change
 * any accumulated value. xpad must arrive zeroed with (h+2*pad+1)*wp
 * floats per input channel, wp = wd + 2*pad. */

void fps_conv2d_fwd(const float *RESTRICT x, const float *RESTRICT w,
                    const float *RESTRICT b, float *RESTRICT y,
                    float *RESTRICT xpad, double *RESTRICT opad, ptrdiff_t bsz,
                    ptrdiff_t cin, ptrdiff_t h, ptrdiff_t wd, ptrdiff_t cout,
                    ptrdiff_t kh, ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho,
                    ptrdiff_t wo) {
  const ptrdiff_t wp = wd + 2 * pad;
  const ptrdiff_t hpp = h + 2 * pad + 1;
  const ptrdiff_t n = ho * wp;
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ci = 0; ci < cin; ci++) {
      const float *xc = x + ((bi * cin + ci) * h) * wd;
      float *xp = xpad + ci * hpp * wp + pad * wp + pad;
      for (ptrdiff_t r = 0; r < h; r++)
        for (ptrdiff_t c = 0; c < wd; c++) xp[r * wp + c] = xc[r * wd + c];
    }
    for (ptrdiff_t co = 0; co < cout; co++) {
      const double bv = b[co];
      const float *wc = w + co * cin * kh * kw;
      for (ptrdiff_t u = 0; u < n; u++) opad[u] = 0.0;
      for (ptrdiff_t ci = 0; ci < cin; ci++) {
        const float *base = xpad + ci * hpp * wp;
        const float *wk = wc + ci * kh * kw;
        for (ptrdiff_t dh = 0; dh < kh; dh++) {
          for (ptrdiff_t dw = 0; dw < kw; dw++) {
            const double wv = wk[dh * kw + dw];
            const float *src = base + dh * wp + dw;
            for (ptrdiff_t u = 0; u < n; u++) opad[u] += (double)src[u] * wv;
          }
        }
      }
      float *yp = y + ((bi * cout + co) * ho) * wo;
      for (ptrdiff_t i = 0; i < ho; i++)
        for (ptrdiff_t j = 0; j < wo; j++)
          yp[i * wo + j] = (float)(opad[i * wp + j] + bv);
    }
  }
}

/* gypad must arrive zeroed with hpg*wpg floats per output channel plus
 * one spare zeroed row at the very end, where mh = max(kh-1-pad, 0),
 * mw = max(kw-1-pad, 0), hpg = ho + 2*mh, wpg = wo + 2*mw. */
void fps_conv2d_bwd_input(const float *RESTRICT gy, const float *RESTRICT w,
                          float *RESTRICT gx, float *RESTRICT gypad,
                          double *RESTRICT gxbuf, ptrdiff_t bsz, ptrdiff_t cin,
                          ptrdiff_t h, ptrdiff_t wd, ptrdiff_t cout,
                          ptrdiff_t kh, ptrdiff_t kw, ptrdiff_t pad,
                          ptrdiff_t ho, ptrdiff_t wo) {
  const ptrdiff_t mh = kh - 1 - pad > 0 ? kh - 1 - pad : 0;
  const ptrdiff_t mw = kw - 1 - pad > 0 ? kw - 1 - pad : 0;
  const ptrdiff_t hpg = ho + 2 * mh;
  const ptrdiff_t wpg = wo + 2 * mw;
  const ptrdiff_t n = h * wpg;
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t co = 0; co < cout; co++) {
      const float *gc = gy + ((bi * cout + co) * ho) * wo;
      float *gp = gypad + co * hpg * wpg + mh * wpg + mw;
      for (ptrdiff_t r = 0; r < ho; r++)
        for (ptrdiff_t c = 0; c < wo; c++) gp[r * wpg + c] = gc[r * wo + c];
    }
    for (ptrdiff_t ci = 0; ci < cin; ci++) {
      for (ptrdiff_t u = 0; u < n; u++) gxbuf[u] = 0.0;
      for (ptrdiff_t co = 0; co < cout; co++) {
        const float *base = gypad + co * hpg * wpg;
        const float *wk = w + (co * cin + ci) * kh * kw;
        for (ptrdiff_t dh = 0; dh < kh; dh++) {
          for (ptrdiff_t dw = 0; dw < kw; dw++) {
            const double wv = wk[dh * kw + dw];
            const float *src = base + (mh + pad - dh) * wpg + (mw + pad - dw);
            for (ptrdiff_t u = 0; u < n; u++) gxbuf[u] += (double)src[u] * wv;
          }
        }
      }
      float *out = gx + ((bi * cin + ci) * h) * wd;
      for (ptrdiff_t yi = 0; yi < h; yi++)
        for (ptrdiff_t xx = 0; xx < wd; xx++)
          out[yi * wd + xx] = (float)gxbuf[yi * wpg + xx];
    }
  }
}

/* 8-way striped dot product over [j0, j1); fixed combine order. */
static double striped_dot(const float *RESTRICT a, const float *RESTRICT bp,
                          ptrdiff_t j0, ptrdiff_t j1) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
  ptrdiff_t j = j0;
  for (; j + 8 <= j1; j += 8) {
    s0 += (double)a[j] * bp[j];
    s1 += (double)a[j + 1] * bp[j + 1];
    s2 += (double)a[j + 2] * bp[j + 2];
    s3 += (double)a[j + 3] * bp[j + 3];
    s4 += (double)a[j + 4] * bp[j + 4];
    s5 += (double)a[j + 5] * bp[j + 5];
    s6 += (double)a[j + 6] * bp[j + 6];
    s7 += (double)a[j + 7] * bp[j + 7];
  }
  for (; j < j1; j++) s0 += (double)a[j] * bp[j];
  return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
}

static double striped_sum(const float *RESTRICT a, ptrdiff_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
  ptrdiff_t j = 0;
  for (; j + 8 <= n; j += 8) {
    s0 += a[j];
    s1 += a[j + 1];
    s2 += a[j + 2];
    s3 += a[j + 3];
    s4 += a[j + 4];
    s5 += a[j + 5];
    s6 += a[j + 6];
    s7 += a[j + 7];
  }
  for (; j < n; j++) s0 += a[j];
  return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
}

/* xpad as in fps_conv2d_fwd; gyp must arrive zeroed with ho*wp floats
 * per output channel (gy copied in with zero row margins). */
void fps_conv2d_bwd_params(const float *RESTRICT x, const float *RESTRICT gy,
                           double *RESTRICT gw64, double *RESTRICT gb64,
                           float *RESTRICT xpad, float *RESTRICT gyp,
                           ptrdiff_t bsz, ptrdiff_t cin, ptrdiff_t h,
                           ptrdiff_t wd, ptrdiff_t cout, ptrdiff_t kh,
                           ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho,
                           ptrdiff_t wo) {
  const ptrdiff_t wp = wd + 2 * pad;
  const ptrdiff_t hpp = h + 2 * pad + 1;
  const ptrdiff_t n = ho * wp;
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ci = 0; ci < cin; ci++) {
      const float *xc = x + ((bi * cin + ci) * h) * wd;
      float *xp = xpad + ci * hpp * wp + pad * wp + pad;
      for (ptrdiff_t r = 0; r < h; r++)
        for (ptrdiff_t c = 0; c < wd; c++) xp[r * wp + c] = xc[r * wd + c];
    }
    for (ptrdiff_t co = 0; co < cout; co++) {
      const float *gc = gy + ((bi * cout + co) * ho) * wo;
      float *gp = gyp + co * n;
      for (ptrdiff_t r = 0; r < ho; r++)
        for (ptrdiff_t c = 0; c < wo; c++) gp[r * wp + c] = gc[r * wo + c];
    }
    for (ptrdiff_t co = 0; co < cout; co++) {
      const float *gp = gyp + co * n;
      for (ptrdiff_t ci = 0; ci < cin; ci++) {
        const float *base = xpad + ci * hpp * wp;
        double *gwp = gw64 + (co * cin + ci) * kh * kw;
        for (ptrdiff_t dh = 0; dh < kh; dh++)
          for (ptrdiff_t dw = 0; dw < kw; dw++)
            gwp[dh * kw + dw] += striped_dot(gp, base + dh * wp + dw, 0, n);
      }
      gb64[co] += striped_sum(gy + ((bi * cout + co) * ho) * wo, ho * wo);
    }
  }
}

void fps_dense_fwd(const float *RESTRICT x, const float *RESTRICT w,
                   const float *RESTRICT b, float *RESTRICT y,
                   float *RESTRICT wt, double *RESTRICT row, ptrdiff_t bsz,
                   ptrdiff_t k, ptrdiff_t j) {
  /* transpose weights once so the j-lane loop reads contiguously */
  for (ptrdiff_t ji = 0; ji < j; ji++)
    for (ptrdiff_t ki = 0; ki < k; ki++) wt[ki * j + ji] = w[ji * k + ki];
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ji = 0; ji < j; ji++) row[ji] = 0.0;
    const float *xr = x + bi * k;
    for (ptrdiff_t ki = 0; ki < k; ki++) {
      const double xv = xr[ki];
      const float *wr = wt + ki * j;
      for (ptrdiff_t ji = 0; ji < j; ji++) row[ji] += xv * (double)wr[ji];
    }
    float *yr = y + bi * j;
    for (ptrdiff_t ji = 0; ji < j; ji++) yr[ji] = (float)(row[ji] + b[ji]);
  }
}

void fps_dense_bwd_input(const float *RESTRICT gy, const float *RESTRICT w,
                         float *RESTRICT gx, double *RESTRICT row,
                         ptrdiff_t bsz, ptrdiff_t j, ptrdiff_t k) {
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ki = 0; ki < k; ki++) row[ki] = 0.0;
    const float *gr = gy + bi * j;
    for (ptrdiff_t ji = 0; ji < j; ji++) {
      const double gv = gr[ji];
      const float *wr = w + ji * k;
      for (ptrdiff_t ki = 0; ki < k; ki++) row[ki] += gv * (double)wr[ki];
    }
    float *gp = gx + bi * k;
    for (ptrdiff_t ki = 0; ki < k; ki++) gp[ki] = (float)row[ki];
  }
}

void fps_dense_bwd_params(const float *RESTRICT x, const float *RESTRICT gy,
                          double *RESTRICT gw64, double *RESTRICT gb64,
                          ptrdiff_t bsz, ptrdiff_t j, ptrdiff_t k) {
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    const float *xr = x + bi * k;
    const float *gr = gy + bi * j;
    for (ptrdiff_t ji = 0; ji < j; ji++) {
      const double gv = gr[ji];
      gb64[ji] += gv;
      double *gwr = gw64 + ji * k;
      for (ptrdiff_t ki = 0; ki < k; ki++) gwr[ki] += gv * (double)xr[ki];
    }
  }
}

void fps_maxpool2d_fwd(const float *RESTRICT x, float *RESTRICT y,
                       int64_t *RESTRICT idx, ptrdiff_t bsz, ptrdiff_t c,
                       ptrdiff_t h, ptrdiff_t wd, ptrdiff_t k) {
  ptrdiff_t ho = h / k, wo = wd / k;
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ci = 0; ci < c; ci++) {
      const float *xp = x + (bi * c + ci) * h * wd;
      float *yp = y + ((bi * c + ci) * ho) * wo;
      int64_t *ip = idx + ((bi * c + ci) * ho) * wo;
      for (ptrdiff_t oi = 0; oi < ho; oi++) {
        for (ptrdiff_t oj = 0; oj < wo; oj++) {
          float best = xp[(oi * k) * wd + oj * k];
          ptrdiff_t bidx = (oi * k) * wd + oj * k;
          for (ptrdiff_t di = 0; di < k; di++) {
            for (ptrdiff_t dj = 0; dj < k; dj++) {
              ptrdiff_t fi = (oi * k + di) * wd + (oj * k + dj);
              float v = xp[fi];
              if (v > best) {
                best = v;
                bidx = fi;
              }
            }
          }
          yp[oi * wo + oj] = best;
          ip[oi * wo + oj] = (int64_t)bidx;
        }
      }
    }
  }
}

void fps_maxpool2d_scatter(const float *RESTRICT g, const int64_t *RESTRICT idx,
                           float *RESTRICT out, ptrdiff_t bsz, ptrdiff_t c,
                           ptrdiff_t h, ptrdiff_t wd, ptrdiff_t k) {
  ptrdiff_t ho = h / k, wo = wd / k;
  ptrdiff_t n = ho * wo;
  for (ptrdiff_t bi = 0; bi < bsz; bi++) {
    for (ptrdiff_t ci = 0; ci < c; ci++) {
      const float *gp = g + (bi * c + ci) * n;
      const int64_t *ip = idx + (bi * c + ci) * n;
      float *op = out + (bi * c + ci) * h * wd;
      for (ptrdiff_t e = 0; e < n; e++) op[ip[e]] = gp[e];
    }
  }
}
