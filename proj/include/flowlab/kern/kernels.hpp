#pragma once

#include <cstddef>
#include <string>
#include <type_traits>

#include "flowlab/kern/scalar.hpp"

namespace flowlab::kern {

enum class Backend { scalar, avx2 };

/// Float32 kernel entry points, filled in by the dispatcher.
struct KernelTable {
    void (*gemm)(int, int, int, const float*, int, const float*, int, float*, int, bool);
    void (*vexp)(std::size_t, const float*, float*);
    void (*vtanh)(std::size_t, const float*, float*);
    void (*vsigmoid)(std::size_t, const float*, float*);
    void (*relu)(std::size_t, const float*, float*);
    void (*relu_bwd)(std::size_t, const float*, const float*, float*);
    void (*vmadd)(std::size_t, const float*, const float*, const float*, float*);
    void (*vmul)(std::size_t, const float*, const float*, float*);
    void (*vadd)(std::size_t, const float*, const float*, float*);
    void (*axpy)(std::size_t, float, const float*, float*);
    void (*vscale)(std::size_t, float, const float*, float*);
    float (*vsum)(std::size_t, const float*);
    float (*vdot)(std::size_t, const float*, const float*);
    float (*vsumsq)(std::size_t, const float*);
};

/// Active float32 table. Selected once at startup: AVX2 when the CPU has
/// avx2+fma, otherwise scalar; FLOWLAB_SIMD=scalar|avx2|auto overrides.
const KernelTable& table();

Backend backend();
std::string backend_name();
bool avx2_available();

/// Force a backend (tests use this to compare lanes). Throws if unavailable.
void set_backend(Backend b);

const KernelTable& scalar_table();

// Typed front door: float goes through the dispatched table, every other
// scalar type through the reference templates.

template <class T>
inline void gemm(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                 bool accumulate) {
    if constexpr (std::is_same_v<T, float>) {
        table().gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    } else {
        gemm_ref(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    }
}

template <class T>
inline void vexp(std::size_t n, const T* x, T* y) {
    if constexpr (std::is_same_v<T, float>) {
        table().vexp(n, x, y);
    } else {
        vexp_ref(n, x, y);
    }
}

template <class T>
inline void vtanh(std::size_t n, const T* x, T* y) {
    if constexpr (std::is_same_v<T, float>) {
        table().vtanh(n, x, y);
    } else {
        vtanh_ref(n, x, y);
    }
}

template <class T>
inline void vsigmoid(std::size_t n, const T* x, T* y) {
    if constexpr (std::is_same_v<T, float>) {
        table().vsigmoid(n, x, y);
    } else {
        vsigmoid_ref(n, x, y);
    }
}

template <class T>
inline void relu(std::size_t n, const T* x, T* y) {
    if constexpr (std::is_same_v<T, float>) {
        table().relu(n, x, y);
    } else {
        relu_ref(n, x, y);
    }
}

template <class T>
inline void relu_bwd(std::size_t n, const T* x, const T* gy, T* gx) {
    if constexpr (std::is_same_v<T, float>) {
        table().relu_bwd(n, x, gy, gx);
    } else {
        relu_bwd_ref(n, x, gy, gx);
    }
}

template <class T>
inline void vmadd(std::size_t n, const T* a, const T* b, const T* c, T* out) {
    if constexpr (std::is_same_v<T, float>) {
        table().vmadd(n, a, b, c, out);
    } else {
        vmadd_ref(n, a, b, c, out);
    }
}

template <class T>
inline void vmul(std::size_t n, const T* a, const T* b, T* out) {
    if constexpr (std::is_same_v<T, float>) {
        table().vmul(n, a, b, out);
    } else {
        vmul_ref(n, a, b, out);
    }
}

template <class T>
inline void vadd(std::size_t n, const T* a, const T* b, T* out) {
    if constexpr (std::is_same_v<T, float>) {
        table().vadd(n, a, b, out);
    } else {
        vadd_ref(n, a, b, out);
    }
}

template <class T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
    if constexpr (std::is_same_v<T, float>) {
        table().axpy(n, alpha, x, y);
    } else {
        axpy_ref(n, alpha, x, y);
    }
}

template <class T>
inline void vscale(std::size_t n, T alpha, const T* x, T* out) {
    if constexpr (std::is_same_v<T, float>) {
        table().vscale(n, alpha, x, out);
    } else {
        vscale_ref(n, alpha, x, out);
    }
}

template <class T>
inline T vsum(std::size_t n, const T* x) {
    if constexpr (std::is_same_v<T, float>) {
        return table().vsum(n, x);
    } else {
        return vsum_ref(n, x);
    }
}

template <class T>
inline T vdot(std::size_t n, const T* x, const T* y) {
    if constexpr (std::is_same_v<T, float>) {
        return table().vdot(n, x, y);
    } else {
        return vdot_ref(n, x, y);
    }
}

template <class T>
inline T vsumsq(std::size_t n, const T* x) {
    if constexpr (std::is_same_v<T, float>) {
        return table().vsumsq(n, x);
    } else {
        return vsumsq_ref(n, x);
    }
}

}  // namespace flowlab::kern
