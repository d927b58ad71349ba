#pragma once

#include <string>

namespace trtm::kern {

// Dense inner-loop kernels in two flavors: a scalar reference and SIMD
// variants picked at runtime from CPU features. Matrices are row-major.
//
// gemm_nn: C(M,N) = A(M,K) * B(K,N)
// gemm_tn: C(M,N) = A(K,M)^T * B(K,N)
// gemm_nt: C(M,N) = A(M,K) * B(N,K)^T
//
// Convolutions use channel-last scratch layouts: x is (ih, iw, ic),
// y is (oh, ow, oc) and the kernel is (kh, kw, ic, oc).
template <typename T>
struct Table {
  void (*gemm_nn)(const T* a, const T* b, T* c, int m, int n, int k);
  void (*gemm_tn)(const T* a, const T* b, T* c, int m, int n, int k);
  void (*gemm_nt)(const T* a, const T* b, T* c, int m, int n, int k);

  void (*add)(T* y, const T* a, const T* b, int n);
  void (*sub)(T* y, const T* a, const T* b, int n);
  void (*mul)(T* y, const T* a, const T* b, int n);
  void (*add_into)(T* y, const T* x, int n);
  void (*axpy)(T* y, T a, const T* x, int n);
  void (*scale)(T* y, const T* x, T a, int n);
  void (*relu)(T* y, const T* x, int n);
  void (*relu_bwd)(T* dx, const T* x, const T* dy, int n);

  T (*sum)(const T* x, int n);
  T (*dot)(const T* x, const T* y, int n);
  T (*sqdiff_sum)(const T* a, const T* b, int n);
  T (*absdiff_sum)(const T* a, const T* b, int n);

  void (*conv2d_hwc)(const T* x, const T* k, T* y, int ih, int iw, int ic,
                     int oc, int kh, int kw, int stride, int pad, int oh,
                     int ow);
  void (*conv2d_hwc_bwd_x)(T* dx, const T* k, const T* dy, int ih, int iw,
                           int ic, int oc, int kh, int kw, int stride, int pad,
                           int oh, int ow);
  void (*conv2d_hwc_bwd_k)(const T* x, T* dk, const T* dy, int ih, int iw,
                           int ic, int oc, int kh, int kw, int stride, int pad,
                           int oh, int ow);
};

const Table<float>& f32();
const Table<double>& f64();

const Table<float>& f32_scalar();
const Table<double>& f64_scalar();

const Table<float>* f32_avx2();  // nullptr when unsupported
const Table<double>* f64_avx2();

// Name of the backend behind f32()/f64(): "scalar" or "avx2". Selection
// happens once per process; TRTM_KERNELS=scalar|avx2 overrides.
const std::string& backend_name();

}  // namespace trtm::kern
