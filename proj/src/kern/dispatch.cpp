#include <cstdlib>
#include <stdexcept>
#include <string>

#include "flowlab/kern/kernels.hpp"

#if FLOWLAB_AVX2_LANE
namespace flowlab::kern::avx2 {
void gemm(int, int, int, const float*, int, const float*, int, float*, int, bool);
void vexp(std::size_t, const float*, float*);
void vtanh(std::size_t, const float*, float*);
void vsigmoid(std::size_t, const float*, float*);
void relu(std::size_t, const float*, float*);
void relu_bwd(std::size_t, const float*, const float*, float*);
void vmadd(std::size_t, const float*, const float*, const float*, float*);
void vmul(std::size_t, const float*, const float*, float*);
void vadd(std::size_t, const float*, const float*, float*);
void axpy(std::size_t, float, const float*, float*);
void vscale(std::size_t, float, const float*, float*);
float vsum(std::size_t, const float*);
float vdot(std::size_t, const float*, const float*);
float vsumsq(std::size_t, const float*);
}  // namespace flowlab::kern::avx2
#endif

namespace flowlab::kern {

namespace {

KernelTable make_scalar_table() {
    KernelTable t;
    t.gemm = &gemm_ref<float>;
    t.vexp = &vexp_ref<float>;
    t.vtanh = &vtanh_ref<float>;
    t.vsigmoid = &vsigmoid_ref<float>;
    t.relu = &relu_ref<float>;
    t.relu_bwd = &relu_bwd_ref<float>;
    t.vmadd = &vmadd_ref<float>;
    t.vmul = &vmul_ref<float>;
    t.vadd = &vadd_ref<float>;
    t.axpy = &axpy_ref<float>;
    t.vscale = &vscale_ref<float>;
    t.vsum = &vsum_ref<float>;
    t.vdot = &vdot_ref<float>;
    t.vsumsq = &vsumsq_ref<float>;
    return t;
}

#if FLOWLAB_AVX2_LANE
KernelTable make_avx2_table() {
    KernelTable t;
    t.gemm = &avx2::gemm;
    t.vexp = &avx2::vexp;
    t.vtanh = &avx2::vtanh;
    t.vsigmoid = &avx2::vsigmoid;
    t.relu = &avx2::relu;
    t.relu_bwd = &avx2::relu_bwd;
    t.vmadd = &avx2::vmadd;
    t.vmul = &avx2::vmul;
    t.vadd = &avx2::vadd;
    t.axpy = &avx2::axpy;
    t.vscale = &avx2::vscale;
    t.vsum = &avx2::vsum;
    t.vdot = &avx2::vdot;
    t.vsumsq = &avx2::vsumsq;
    return t;
}
#endif

bool cpu_has_avx2() {
#if FLOWLAB_AVX2_LANE
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct Dispatch {
    KernelTable scalar = make_scalar_table();
#if FLOWLAB_AVX2_LANE
    KernelTable avx2 = make_avx2_table();
#endif
    KernelTable active;
    Backend which = Backend::scalar;

    Dispatch() {
        active = scalar;
        const char* env = std::getenv("FLOWLAB_SIMD");
        std::string want = env ? env : "auto";
        if (want == "scalar") {
            select(Backend::scalar);
        } else if (want == "avx2") {
            if (!cpu_has_avx2())
                throw std::runtime_error("FLOWLAB_SIMD=avx2 but CPU/build lacks AVX2+FMA");
            select(Backend::avx2);
        } else {
            select(cpu_has_avx2() ? Backend::avx2 : Backend::scalar);
        }
    }

    void select(Backend b) {
        if (b == Backend::avx2) {
#if FLOWLAB_AVX2_LANE
            if (!cpu_has_avx2()) throw std::runtime_error("AVX2 backend unavailable on this CPU");
            active = avx2;
            which = Backend::avx2;
            return;
#else
            throw std::runtime_error("AVX2 lane not built");
#endif
        }
        active = scalar;
        which = Backend::scalar;
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

const KernelTable& table() { return dispatch().active; }

Backend backend() { return dispatch().which; }

std::string backend_name() { return dispatch().which == Backend::avx2 ? "avx2" : "scalar"; }

bool avx2_available() { return cpu_has_avx2(); }

void set_backend(Backend b) { dispatch().select(b); }

const KernelTable& scalar_table() { return dispatch().scalar; }

}  // namespace flowlab::kern
