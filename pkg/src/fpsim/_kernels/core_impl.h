#ifndef FPSIM_CORE_IMPL_H
#define FPSIM_CORE_IMPL_H

#include <stddef.h>
#include <stdint.h>

void fps_conv2d_fwd(const float *x, const float *w, const float *b, float *y,
                    float *xpad, double *opad, ptrdiff_t bsz, ptrdiff_t cin,
                    ptrdiff_t h, ptrdiff_t wd, ptrdiff_t cout, ptrdiff_t kh,
                    ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho, ptrdiff_t wo);

void fps_conv2d_bwd_input(const float *gy, const float *w, float *gx,
                          float *gypad, double *gxbuf, ptrdiff_t bsz,
                          ptrdiff_t cin, ptrdiff_t h, ptrdiff_t wd,
                          ptrdiff_t cout, ptrdiff_t kh, ptrdiff_t kw,
                          ptrdiff_t pad, ptrdiff_t ho, ptrdiff_t wo);

void fps_conv2d_bwd_params(const float *x, const float *gy, double *gw64,
                           double *gb64, float *xpad, float *gyp,
                           ptrdiff_t bsz, ptrdiff_t cin, ptrdiff_t h,
                           ptrdiff_t wd, ptrdiff_t cout, ptrdiff_t kh,
                           ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho,
                           ptrdiff_t wo);

void fps_dense_fwd(const float *x, const float *w, const float *b, float *y,
                   float *wt, double *row, ptrdiff_t bsz, ptrdiff_t k,
                   ptrdiff_t j);

void fps_dense_bwd_input(const float *gy, const float *w, float *gx,
                         double *row, ptrdiff_t bsz, ptrdiff_t j, ptrdiff_t k);

void fps_dense_bwd_params(const float *x, const float *gy, double *gw64,
                          double *gb64, ptrdiff_t bsz, ptrdiff_t j,
                          ptrdiff_t k);

void fps_maxpool2d_fwd(const float *x, float *y, int64_t *idx, ptrdiff_t bsz,
                       ptrdiff_t c, ptrdiff_t h, ptrdiff_t wd, ptrdiff_t k);

void fps_maxpool2d_scatter(const float *g, const int64_t *idx, float *out,
                           ptrdiff_t bsz, ptrdiff_t c, ptrdiff_t h,
                           ptrdiff_t wd, ptrdiff_t k);

#endif
