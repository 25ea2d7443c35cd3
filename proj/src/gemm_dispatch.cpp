#include "ddrive/gemm.hpp"

namespace dd::kern {

namespace {

Isa probe() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
    return Isa::Scalar;
}

Isa g_active = probe();

}  // namespace

Isa detect_isa() { return probe(); }

Isa active_isa() { return g_active; }

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && probe() != Isa::Avx2) isa = Isa::Scalar;
    g_active = isa;
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    if (g_active == Isa::Avx2)
        gemm_avx2(m, n, k, a, b, c, accumulate);
    else
        gemm_scalar(m, n, k, a, b, c, accumulate);
}

void depthwise(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
               int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow) {
    if (g_active == Isa::Avx2)
        depthwise_avx2(in, h, w, c, taps, kh, kw, sh, sw, pad_top, pad_left, out, oh, ow);
    else
        depthwise_scalar(in, h, w, c, taps, kh, kw, sh, sw, pad_top, pad_left, out, oh, ow);
}

}  // namespace dd::kern
