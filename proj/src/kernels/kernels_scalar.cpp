#include <cmath>

#include "trtm/kernels/kernels.hpp"

namespace trtm::kern {
namespace {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m * n; ++i) c[i] = T(0);
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<long>(i) * k;
    T* crow = c + static_cast<long>(i) * n;
    for (int p = 0; p < k; ++p) {
      T av = arow[p];
      const T* brow = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m * n; ++i) c[i] = T(0);
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<long>(p) * m;
    const T* brow = b + static_cast<long>(p) * n;
    for (int i = 0; i < m; ++i) {
      T av = arow[i];
      T* crow = c + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<long>(i) * k;
    T* crow = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<long>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

template <typename T>
void add(T* y, const T* a, const T* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(T* y, const T* a, const T* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(T* y, const T* a, const T* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void add_into(T* y, const T* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
void axpy(T* y, T a, const T* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(T* y, const T* x, T a, int n) {
  for (int i = 0; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
void relu(T* y, const T* x, int n) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(T* dx, const T* x, const T* dy, int n) {
  for (int i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
T sum(const T* x, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T dot(const T* x, const T* y, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
T sqdiff_sum(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) {
    T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

template <typename T>
T absdiff_sum(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

template <typename T>
void conv2d_hwc(const T* x, const T* k, T* y, int ih, int iw, int ic, int oc,
                int kh, int kw, int stride, int pad, int oh, int ow) {
  for (long i = 0; i < static_cast<long>(oh) * ow * oc; ++i) y[i] = T(0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* yp = y + (static_cast<long>(oy) * ow + ox) * oc;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          const T* xp = x + (static_cast<long>(sy) * iw + sx) * ic;
          const T* kp = k + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            T xv = xp[ci];
            const T* krow = kp + static_cast<long>(ci) * oc;
            for (int co = 0; co < oc; ++co) yp[co] += xv * krow[co];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_hwc_bwd_x(T* dx, const T* k, const T* dy, int ih, int iw, int ic,
                      int oc, int kh, int kw, int stride, int pad, int oh,
                      int ow) {
  for (long i = 0; i < static_cast<long>(ih) * iw * ic; ++i) dx[i] = T(0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* dyp = dy + (static_cast<long>(oy) * ow + ox) * oc;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          T* dxp = dx + (static_cast<long>(sy) * iw + sx) * ic;
          const T* kp = k + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            const T* krow = kp + static_cast<long>(ci) * oc;
            T acc = T(0);
            for (int co = 0; co < oc; ++co) acc += krow[co] * dyp[co];
            dxp[ci] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_hwc_bwd_k(const T* x, T* dk, const T* dy, int ih, int iw, int ic,
                      int oc, int kh, int kw, int stride, int pad, int oh,
                      int ow) {
  for (long i = 0; i < static_cast<long>(kh) * kw * ic * oc; ++i) dk[i] = T(0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* dyp = dy + (static_cast<long>(oy) * ow + ox) * oc;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = oy * stride + ky - pad;
        if (sy < 0 || sy >= ih) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = ox * stride + kx - pad;
          if (sx < 0 || sx >= iw) continue;
          const T* xp = x + (static_cast<long>(sy) * iw + sx) * ic;
          T* dkp = dk + (static_cast<long>(ky) * kw + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            T xv = xp[ci];
            T* dkrow = dkp + static_cast<long>(ci) * oc;
            for (int co = 0; co < oc; ++co) dkrow[co] += xv * dyp[co];
          }
        }
      }
    }
  }
}

template <typename T>
Table<T> make_table() {
  Table<T> t;
  t.gemm_nn = gemm_nn<T>;
  t.gemm_tn = gemm_tn<T>;
  t.gemm_nt = gemm_nt<T>;
  t.add = add<T>;
  t.sub = sub<T>;
  t.mul = mul<T>;
  t.add_into = add_into<T>;
  t.axpy = axpy<T>;
  t.scale = scale<T>;
  t.relu = relu<T>;
  t.relu_bwd = relu_bwd<T>;
  t.sum = sum<T>;
  t.dot = dot<T>;
  t.sqdiff_sum = sqdiff_sum<T>;
  t.absdiff_sum = absdiff_sum<T>;
  t.conv2d_hwc = conv2d_hwc<T>;
  t.conv2d_hwc_bwd_x = conv2d_hwc_bwd_x<T>;
  t.conv2d_hwc_bwd_k = conv2d_hwc_bwd_k<T>;
  return t;
}

}  // namespace

const Table<float>& f32_scalar() {
  static const Table<float> t = make_table<float>();
  return t;
}

const Table<double>& f64_scalar() {
  static const Table<double> t = make_table<double>();
  return t;
}

}  // namespace trtm::kern
