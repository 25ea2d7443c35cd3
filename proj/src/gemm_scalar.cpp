#include "ddrive/gemm.hpp"

namespace dd::kern {

void gemm_scalar(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    gemm_ref<float>(m, n, k, a, b, c, accumulate);
}

void depthwise_scalar(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
                      int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow) {
    depthwise_ref<float>(in, h, w, c, taps, kh, kw, sh, sw, pad_top, pad_left, out, oh, ow);
}

}  // namespace dd::kern
