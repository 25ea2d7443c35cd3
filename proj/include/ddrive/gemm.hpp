#pragma once

#include <cstddef>

namespace dd::kern {

enum class Isa { Scalar, Avx2 };

// ISA detected on the host at startup.
Isa detect_isa();
// Currently selected kernel set (detected by default, overridable for tests).
Isa active_isa();
// Force a kernel set; requests for an unsupported ISA fall back to Scalar.
void force_isa(Isa isa);
const char* isa_name(Isa isa);

// C[m x n] = A[m x k] * B[k x n] (+= when accumulate), all row-major, packed.
void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
void gemm_scalar(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
void gemm_avx2(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);

// Depthwise 2D correlation over (h, w, c) input with per-channel (kh, kw, c)
// taps. Output (oh, ow, c); zero padding given by the top/left offsets.
void depthwise(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
               int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow);
void depthwise_scalar(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
                      int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow);
void depthwise_avx2(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
                    int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow);

// Reference path, also used for the double-precision gradient-check mode.
template <typename T>
void gemm_ref(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = accumulate ? c[static_cast<size_t>(i) * n + j] : T(0);
            for (int p = 0; p < k; ++p)
                acc += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    }
}

template <typename T>
void depthwise_ref(const T* in, int h, int w, int c, const T* taps, int kh, int kw,
                   int sh, int sw, int pad_top, int pad_left, T* out, int oh, int ow) {
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* o = out + (static_cast<size_t>(oy) * ow + ox) * c;
            for (int ch = 0; ch < c; ++ch) o[ch] = T(0);
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * sh - pad_top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * sw - pad_left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const T* src = in + (static_cast<size_t>(iy) * w + ix) * c;
                    const T* t = taps + (static_cast<size_t>(ky) * kw + kx) * c;
                    for (int ch = 0; ch < c; ++ch) o[ch] += src[ch] * t[ch];
                }
            }
        }
    }
}

}  // namespace dd::kern
