// AVX2+FMA lane. Compiled with -mavx2 -mfma in its own translation unit;
// nothing here runs unless the dispatcher verified CPU support.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "flowlab/kern/kernels.hpp"

namespace flowlab::kern::avx2 {

namespace {

// Cephes-style expf. Max relative error ~2 ulp on [-87, 88].
inline __m256 exp_ps(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-87.3365478515625f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);

    __m256 fx = _mm256_fmadd_ps(x, log2e, half);
    fx = _mm256_floor_ps(fx);

    __m256 r = _mm256_fnmadd_ps(fx, c1, x);
    r = _mm256_fnmadd_ps(fx, c2, r);

    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(5.0000001201e-1f));
    __m256 r2 = _mm256_mul_ps(r, r);
    y = _mm256_fmadd_ps(y, r2, r);
    y = _mm256_add_ps(y, one);

    __m256i n = _mm256_cvtps_epi32(fx);
    n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
    n = _mm256_slli_epi32(n, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

template <int MR>
inline void gemm_tile16(int n_k, const float* a, int lda, const float* b, int ldb, float* c,
                        int ldc, bool accumulate) {
    __m256 acc0[MR], acc1[MR];
    for (int r = 0; r < MR; ++r) {
        if (accumulate) {
            acc0[r] = _mm256_loadu_ps(c + static_cast<std::size_t>(r) * ldc);
            acc1[r] = _mm256_loadu_ps(c + static_cast<std::size_t>(r) * ldc + 8);
        } else {
            acc0[r] = _mm256_setzero_ps();
            acc1[r] = _mm256_setzero_ps();
        }
    }
    for (int k = 0; k < n_k; ++k) {
        const float* brow = b + static_cast<std::size_t>(k) * ldb;
        __m256 b0 = _mm256_loadu_ps(brow);
        __m256 b1 = _mm256_loadu_ps(brow + 8);
        for (int r = 0; r < MR; ++r) {
            __m256 av = _mm256_set1_ps(a[static_cast<std::size_t>(r) * lda + k]);
            acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
            acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        _mm256_storeu_ps(c + static_cast<std::size_t>(r) * ldc, acc0[r]);
        _mm256_storeu_ps(c + static_cast<std::size_t>(r) * ldc + 8, acc1[r]);
    }
}

template <int MR>
inline void gemm_tile8(int n_k, const float* a, int lda, const float* b, int ldb, float* c,
                       int ldc, bool accumulate) {
    __m256 acc[MR];
    for (int r = 0; r < MR; ++r) {
        acc[r] = accumulate ? _mm256_loadu_ps(c + static_cast<std::size_t>(r) * ldc)
                            : _mm256_setzero_ps();
    }
    for (int k = 0; k < n_k; ++k) {
        __m256 b0 = _mm256_loadu_ps(b + static_cast<std::size_t>(k) * ldb);
        for (int r = 0; r < MR; ++r) {
            __m256 av = _mm256_set1_ps(a[static_cast<std::size_t>(r) * lda + k]);
            acc[r] = _mm256_fmadd_ps(av, b0, acc[r]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        _mm256_storeu_ps(c + static_cast<std::size_t>(r) * ldc, acc[r]);
    }
}

inline void gemm_rows(int mr, int n, int k, const float* a, int lda, const float* b, int ldb,
                      float* c, int ldc, bool accumulate) {
    int j = 0;
    for (; j + 16 <= n; j += 16) {
        switch (mr) {
            case 6: gemm_tile16<6>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 5: gemm_tile16<5>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 4: gemm_tile16<4>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 3: gemm_tile16<3>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 2: gemm_tile16<2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            default: gemm_tile16<1>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
        }
    }
    for (; j + 8 <= n; j += 8) {
        switch (mr) {
            case 6: gemm_tile8<6>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 5: gemm_tile8<5>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 4: gemm_tile8<4>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 3: gemm_tile8<3>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            case 2: gemm_tile8<2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
            default: gemm_tile8<1>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); break;
        }
    }
    if (j < n) {
        // Scalar tail, at most 7 columns.
        for (int r = 0; r < mr; ++r) {
            for (int jj = j; jj < n; ++jj) {
                float s = accumulate ? c[static_cast<std::size_t>(r) * ldc + jj] : 0.0f;
                for (int kk = 0; kk < k; ++kk) {
                    s += a[static_cast<std::size_t>(r) * lda + kk] *
                         b[static_cast<std::size_t>(kk) * ldb + jj];
                }
                c[static_cast<std::size_t>(r) * ldc + jj] = s;
            }
        }
    }
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
    int i = 0;
    for (; i + 6 <= m; i += 6) {
        gemm_rows(6, n, k, a + static_cast<std::size_t>(i) * lda, lda, b, ldb,
                  c + static_cast<std::size_t>(i) * ldc, ldc, accumulate);
    }
    if (i < m) {
        gemm_rows(m - i, n, k, a + static_cast<std::size_t>(i) * lda, lda, b, ldb,
                  c + static_cast<std::size_t>(i) * ldc, ldc, accumulate);
    }
}

void vexp(std::size_t n, const float* x, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, exp_ps(_mm256_loadu_ps(x + i)));
    }
    if (i < n) {
        alignas(32) float buf[8];
        for (std::size_t j = 0; j < 8; ++j) buf[j] = (i + j < n) ? x[i + j] : 0.0f;
        __m256 r = exp_ps(_mm256_load_ps(buf));
        _mm256_store_ps(buf, r);
        for (; i < n; ++i) y[i] = buf[i & 7];
    }
}

void vtanh(std::size_t n, const float* x, float* y) {
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 two = _mm256_set1_ps(2.0f);
    const __m256 sign_mask = _mm256_set1_ps(-0.0f);
    std::size_t i = 0;
    auto block = [&](__m256 v) {
        __m256 sign = _mm256_and_ps(v, sign_mask);
        __m256 ax = _mm256_andnot_ps(sign_mask, v);
        // tanh(|x|) = 1 - 2 / (exp(2|x|) + 1)
        __m256 e = exp_ps(_mm256_mul_ps(ax, two));
        __m256 t = _mm256_sub_ps(one, _mm256_div_ps(two, _mm256_add_ps(e, one)));
        return _mm256_or_ps(t, sign);
    };
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, block(_mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

void vsigmoid(std::size_t n, const float* x, float* y) {
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        __m256 e = exp_ps(_mm256_sub_ps(zero, v));
        _mm256_storeu_ps(y + i, _mm256_div_ps(one, _mm256_add_ps(one, e)));
    }
    for (; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void relu(std::size_t n, const float* x, float* y) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(std::size_t n, const float* x, const float* gy, float* gx) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(gx + i, _mm256_and_ps(_mm256_loadu_ps(gy + i), mask));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

void vmadd(std::size_t n, const float* a, const float* b, const float* c, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                   _mm256_loadu_ps(c + i));
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) out[i] = a[i] * b[i] + c[i];
}

void vmul(std::size_t n, const float* a, const float* b, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vadd(std::size_t n, const float* a, const float* b, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void vscale(std::size_t n, float alpha, const float* x, float* out) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) out[i] = alpha * x[i];
}

namespace {
inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}
}  // namespace

float vsum(std::size_t n, const float* x) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_add_ps(s0, _mm256_loadu_ps(x + i));
        s1 = _mm256_add_ps(s1, _mm256_loadu_ps(x + i + 8));
    }
    for (; i + 8 <= n; i += 8) s0 = _mm256_add_ps(s0, _mm256_loadu_ps(x + i));
    float s = hsum(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) s += x[i];
    return s;
}

float vdot(std::size_t n, const float* x, const float* y) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
        s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), s1);
    }
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    }
    float s = hsum(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

float vsumsq(std::size_t n, const float* x) { return vdot(n, x, x); }

}  // namespace flowlab::kern::avx2
