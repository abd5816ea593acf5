#pragma once

#include <cmath>
#include <cstddef>

namespace flowlab::kern {

// Reference kernels. These are the semantics contract for every optimized
// lane; the SIMD variants are equivalence-tested against them. They are
// templates so the double-precision instantiations used by the gradient
// checks share one definition with the float fast path.

/// C[M x N] = (acc ? C : 0) + A[M x K] * B[K x N], all row-major.
template <class T>
void gemm_ref(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
              bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int p = 0; p < k; ++p) {
            T av = a[static_cast<std::size_t>(i) * lda + p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void vexp_ref(std::size_t n, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

template <class T>
void vtanh_ref(std::size_t n, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <class T>
void vsigmoid_ref(std::size_t n, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <class T>
void relu_ref(std::size_t n, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

/// gx = gy where x > 0, else 0.
template <class T>
void relu_bwd_ref(std::size_t n, const T* x, const T* gy, T* gx) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
}

/// out = a .* b + c
template <class T>
void vmadd_ref(std::size_t n, const T* a, const T* b, const T* c, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i] + c[i];
}

template <class T>
void vmul_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void vadd_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

/// y += alpha * x
template <class T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void vscale_ref(std::size_t n, T alpha, const T* x, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
T vsum_ref(std::size_t n, const T* x) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <class T>
T vdot_ref(std::size_t n, const T* x, const T* y) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <class T>
T vsumsq_ref(std::size_t n, const T* x) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

}  // namespace flowlab::kern
