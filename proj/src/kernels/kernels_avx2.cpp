#include <cmath>

#include "trtm/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <vector>

namespace trtm::kern {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// ---------------------------------------------------------------- f32 gemm

// 4x16 tile: C[i0..i0+4, j0..j0+16] accumulated over the full k range.
// aidx(i, p) maps logical A(i, p); lets the same microkernel serve the
// normal and transposed A layouts.
template <typename AIdx>
inline void tile4x16_f32(const float* a, const float* b, float* c, int n,
                         int k, int i0, int j0, AIdx aidx) {
  __m256 acc[4][2];
  for (int r = 0; r < 4; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<long>(p) * n + j0;
    __m256 b0 = _mm256_loadu_ps(brow);
    __m256 b1 = _mm256_loadu_ps(brow + 8);
    for (int r = 0; r < 4; ++r) {
      __m256 av = _mm256_set1_ps(a[aidx(i0 + r, p)]);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < 4; ++r) {
    float* crow = c + static_cast<long>(i0 + r) * n + j0;
    _mm256_storeu_ps(crow, acc[r][0]);
    _mm256_storeu_ps(crow + 8, acc[r][1]);
  }
}

template <typename AIdx>
void gemm_bc_f32(const float* a, const float* b, float* c, int m, int n, int k,
                 AIdx aidx) {
  int mw = m - m % 4;
  int nw = n - n % 16;
  for (int i0 = 0; i0 < mw; i0 += 4)
    for (int j0 = 0; j0 < nw; j0 += 16) tile4x16_f32(a, b, c, n, k, i0, j0, aidx);
  // Edge rows/columns.
  for (int i = 0; i < m; ++i) {
    int jstart = i < mw ? nw : 0;
    if (jstart == n) continue;
    float* crow = c + static_cast<long>(i) * n;
    for (int j = jstart; j < n; ++j) crow[j] = 0.0f;
    for (int p = 0; p < k; ++p) {
      float av = a[aidx(i, p)];
      const float* brow = b + static_cast<long>(p) * n;
      for (int j = jstart; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nn_f32(const float* a, const float* b, float* c, int m, int n,
                 int k) {
  gemm_bc_f32(a, b, c, m, n, k,
              [k](int i, int p) { return static_cast<long>(i) * k + p; });
}

void gemm_tn_f32(const float* a, const float* b, float* c, int m, int n,
                 int k) {
  gemm_bc_f32(a, b, c, m, n, k,
              [m](int i, int p) { return static_cast<long>(p) * m + i; });
}

void gemm_nt_f32(const float* a, const float* b, float* c, int m, int n,
                 int k) {
  int kw = k - k % 8;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<long>(i) * k;
    float* crow = c + static_cast<long>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
      const float* b0 = b + static_cast<long>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      for (int p = 0; p < kw; p += 8) {
        __m256 av = _mm256_loadu_ps(arow + p);
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (int p = kw; p < k; ++p) {
        float av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      crow[j] = s0;
      crow[j + 1] = s1;
      crow[j + 2] = s2;
      crow[j + 3] = s3;
    }
    for (; j < n; ++j) {
      const float* brow = b + static_cast<long>(j) * k;
      __m256 acc = _mm256_setzero_ps();
      for (int p = 0; p < kw; p += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p),
                              _mm256_loadu_ps(brow + p), acc);
      float s = hsum(acc);
      for (int p = kw; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = s;
    }
  }
}

// ---------------------------------------------------------------- f64 gemm

template <typename AIdx>
inline void tile4x8_f64(const double* a, const double* b, double* c, int n,
                        int k, int i0, int j0, AIdx aidx) {
  __m256d acc[4][2];
  for (int r = 0; r < 4; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<long>(p) * n + j0;
    __m256d b0 = _mm256_loadu_pd(brow);
    __m256d b1 = _mm256_loadu_pd(brow + 4);
    for (int r = 0; r < 4; ++r) {
      __m256d av = _mm256_set1_pd(a[aidx(i0 + r, p)]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < 4; ++r) {
    double* crow = c + static_cast<long>(i0 + r) * n + j0;
    _mm256_storeu_pd(crow, acc[r][0]);
    _mm256_storeu_pd(crow + 4, acc[r][1]);
  }
}

template <typename AIdx>
void gemm_bc_f64(const double* a, const double* b, double* c, int m, int n,
                 int k, AIdx aidx) {
  int mw = m - m % 4;
  int nw = n - n % 8;
  for (int i0 = 0; i0 < mw; i0 += 4)
    for (int j0 = 0; j0 < nw; j0 += 8) tile4x8_f64(a, b, c, n, k, i0, j0, aidx);
  for (int i = 0; i < m; ++i) {
    int jstart = i < mw ? nw : 0;
    if (jstart == n) continue;
    double* crow = c + static_cast<long>(i) * n;
    for (int j = jstart; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      double av = a[aidx(i, p)];
      const double* brow = b + static_cast<long>(p) * n;
      for (int j = jstart; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nn_f64(const double* a, const double* b, double* c, int m, int n,
                 int k) {
  gemm_bc_f64(a, b, c, m, n, k,
              [k](int i, int p) { return static_cast<long>(i) * k + p; });
}

void gemm_tn_f64(const double* a, const double* b, double* c, int m, int n,
                 int k) {
  gemm_bc_f64(a, b, c, m, n, k,
              [m](int i, int p) { return static_cast<long>(p) * m + i; });
}

void gemm_nt_f64(const double* a, const double* b, double* c, int m, int n,
                 int k) {
  int kw = k - k % 4;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<long>(i) * k;
    double* crow = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<long>(j) * k;
      __m256d acc = _mm256_setzero_pd();
      for (int p = 0; p < kw; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                              _mm256_loadu_pd(brow + p), acc);
      double s = hsum(acc);
      for (int p = kw; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = s;
    }
  }
}

// --------------------------------------------------------------- pointwise

void add_f32(float* y, const float* a, const float* b, int n) {
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f32(float* y, const float* a, const float* b, int n) {
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f32(float* y, const float* a, const float* b, int n) {
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void add_into_f32(float* y, const float* x, int n) {
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void axpy_f32(float* y, float a, const float* x, int n) {
  __m256 av = _mm256_set1_ps(a);
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f32(float* y, const float* x, float a, int n) {
  __m256 av = _mm256_set1_ps(a);
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void relu_f32(float* y, const float* x, int n) {
  __m256 z = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(z, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(float* dx, const float* x, const float* dy, int n) {
  __m256 z = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void add_f64(double* y, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f64(double* y, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f64(double* y, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void add_into_f64(double* y, const double* x, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void axpy_f64(double* y, double a, const double* x, int n) {
  __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f64(double* y, const double* x, double a, int n) {
  __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void relu_f64(double* y, const double* x, int n) {
  __m256d z = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(z, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64(double* dx, const double* x, const double* dy, int n) {
  __m256d z = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

// -------------------------------------------------------------- reductions

float sum_f32(const float* x, int n) {
  __m256 acc = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float dot_f32(const float* x, const float* y, int n) {
  __m256 acc = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

float sqdiff_sum_f32(const float* a, const float* b, int n) {
  __m256 acc = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(d, d, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) {
    float d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

float absdiff_sum_f32(const float* a, const float* b, int n) {
  const __m256 signmask = _mm256_set1_ps(-0.0f);
  __m256 acc = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_add_ps(acc, _mm256_andnot_ps(signmask, d));
  }
  float s = hsum(acc);
  for (; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

double sum_f64(const double* x, int n) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_f64(const double* x, const double* y, int n) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sqdiff_sum_f64(const double* a, const double* b, int n) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double absdiff_sum_f64(const double* a, const double* b, int n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(signmask, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// ------------------------------------------------------------ convolutions

void conv2d_hwc_f32(const float* x, const float* k, float* y, int ih, int iw,
                    int ic, int oc, int kh, int kw, int stride, int pad,
                    int oh, int ow) {
  std::vector<float> acc(oc);
  int ocw = oc - oc % 8;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < oc; ++co) acc[co] = 0.0f;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          const float* xp = x + (static_cast<long>(sy) * iw + sx) * ic;
          const float* kp = k + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            __m256 xv = _mm256_set1_ps(xp[ci]);
            const float* krow = kp + static_cast<long>(ci) * oc;
            int co = 0;
            for (; co < ocw; co += 8)
              _mm256_storeu_ps(acc.data() + co,
                               _mm256_fmadd_ps(xv, _mm256_loadu_ps(krow + co),
                                               _mm256_loadu_ps(acc.data() + co)));
            for (; co < oc; ++co) acc[co] += xp[ci] * krow[co];
          }
        }
      }
      float* yp = y + (static_cast<long>(oy) * ow + ox) * oc;
      for (int co = 0; co < oc; ++co) yp[co] = acc[co];
    }
  }
}

void conv2d_hwc_bwd_x_f32(float* dx, const float* k, const float* dy, int ih,
                          int iw, int ic, int oc, int kh, int kw, int stride,
                          int pad, int oh, int ow) {
  // Repack the kernel to (kh, kw, oc, ic) so the inner update runs wide
  // over input channels.
  std::vector<float> kt(static_cast<long>(kh) * kw * ic * oc);
  for (int ky = 0; ky < kh; ++ky)
    for (int kx = 0; kx < kw; ++kx) {
      const float* src = k + (static_cast<long>(ky) * kw + kx) * ic * oc;
      float* dst = kt.data() + (static_cast<long>(ky) * kw + kx) * ic * oc;
      for (int ci = 0; ci < ic; ++ci)
        for (int co = 0; co < oc; ++co)
          dst[static_cast<long>(co) * ic + ci] =
              src[static_cast<long>(ci) * oc + co];
    }
  for (long i = 0; i < static_cast<long>(ih) * iw * ic; ++i) dx[i] = 0.0f;
  int icw = ic - ic % 8;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const float* dyp = dy + (static_cast<long>(oy) * ow + ox) * oc;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          float* dxp = dx + (static_cast<long>(sy) * iw + sx) * ic;
          const float* kp = kt.data() + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int co = 0; co < oc; ++co) {
            __m256 dyv = _mm256_set1_ps(dyp[co]);
            const float* krow = kp + static_cast<long>(co) * ic;
            int ci = 0;
            for (; ci < icw; ci += 8)
              _mm256_storeu_ps(dxp + ci,
                               _mm256_fmadd_ps(dyv, _mm256_loadu_ps(krow + ci),
                                               _mm256_loadu_ps(dxp + ci)));
            for (; ci < ic; ++ci) dxp[ci] += dyp[co] * krow[ci];
          }
        }
      }
    }
  }
}

void conv2d_hwc_bwd_k_f32(const float* x, float* dk, const float* dy, int ih,
                          int iw, int ic, int oc, int kh, int kw, int stride,
                          int pad, int oh, int ow) {
  for (long i = 0; i < static_cast<long>(kh) * kw * ic * oc; ++i) dk[i] = 0.0f;
  int ocw = oc - oc % 8;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const float* dyp = dy + (static_cast<long>(oy) * ow + ox) * oc;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          const float* xp = x + (static_cast<long>(sy) * iw + sx) * ic;
          float* dkp = dk + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            __m256 xv = _mm256_set1_ps(xp[ci]);
            float* dkrow = dkp + static_cast<long>(ci) * oc;
            int co = 0;
            for (; co < ocw; co += 8)
              _mm256_storeu_ps(dkrow + co,
                               _mm256_fmadd_ps(xv, _mm256_loadu_ps(dyp + co),
                                               _mm256_loadu_ps(dkrow + co)));
            for (; co < oc; ++co) dkrow[co] += xp[ci] * dyp[co];
          }
        }
      }
    }
  }
}

}  // namespace

const Table<float>* f32_avx2() {
  static const Table<float> t = [] {
    Table<float> v = f32_scalar();
    v.gemm_nn = gemm_nn_f32;
    v.gemm_tn = gemm_tn_f32;
    v.gemm_nt = gemm_nt_f32;
    v.add = add_f32;
    v.sub = sub_f32;
    v.mul = mul_f32;
    v.add_into = add_into_f32;
    v.axpy = axpy_f32;
    v.scale = scale_f32;
    v.relu = relu_f32;
    v.relu_bwd = relu_bwd_f32;
    v.sum = sum_f32;
    v.dot = dot_f32;
    v.sqdiff_sum = sqdiff_sum_f32;
    v.absdiff_sum = absdiff_sum_f32;
    v.conv2d_hwc = conv2d_hwc_f32;
    v.conv2d_hwc_bwd_x = conv2d_hwc_bwd_x_f32;
    v.conv2d_hwc_bwd_k = conv2d_hwc_bwd_k_f32;
    return v;
  }();
  return &t;
}

const Table<double>* f64_avx2() {
  // f64 convolutions stay on the scalar path; they only run in small
  // gradient-check configurations.
  static const Table<double> t = [] {
    Table<double> v = f64_scalar();
    v.gemm_nn = gemm_nn_f64;
    v.gemm_tn = gemm_tn_f64;
    v.gemm_nt = gemm_nt_f64;
    v.add = add_f64;
    v.sub = sub_f64;
    v.mul = mul_f64;
    v.add_into = add_into_f64;
    v.axpy = axpy_f64;
    v.scale = scale_f64;
    v.relu = relu_f64;
    v.relu_bwd = relu_bwd_f64;
    v.sum = sum_f64;
    v.dot = dot_f64;
    v.sqdiff_sum = sqdiff_sum_f64;
    v.absdiff_sum = absdiff_sum_f64;
    return v;
  }();
  return &t;
}

}  // namespace trtm::kern

#else

namespace trtm::kern {
const Table<float>* f32_avx2() { return nullptr; }
const Table<double>* f64_avx2() { return nullptr; }
}  // namespace trtm::kern

#endif
