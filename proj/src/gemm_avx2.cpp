#include "ddrive/gemm.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define DD_X86 1
#include <immintrin.h>
#else
#define DD_X86 0
#endif

#include <cstdint>
#include <cstring>
#include <vector>

namespace dd::kern {

#if DD_X86 && defined(__AVX2__) && defined(__FMA__)

namespace {

constexpr int kNr = 16;  // column tile (2 ymm)
constexpr int kMr = 6;   // row tile

// Pack a k x jb slice of B (row-major, width n) into a k x 16 panel,
// zero-padding the tail columns so the microkernel stays branch-free.
void pack_b(int k, int n, int jb, const float* b, float* bp) {
    if (jb == kNr) {
        for (int p = 0; p < k; ++p)
            std::memcpy(bp + 16 * p, b + static_cast<size_t>(p) * n, 16 * sizeof(float));
    } else {
        for (int p = 0; p < k; ++p) {
            const float* src = b + static_cast<size_t>(p) * n;
            float* dst = bp + 16 * p;
            int j = 0;
            for (; j < jb; ++j) dst[j] = src[j];
            for (; j < kNr; ++j) dst[j] = 0.0f;
        }
    }
}

// R x 16 microkernel over a packed B panel.
template <int R>
void mk(int k, const float* a, int lda, const float* bp, float* c, int ldc, int jb, bool acc) {
    __m256 c0[R], c1[R];
    for (int r = 0; r < R; ++r) {
        c0[r] = _mm256_setzero_ps();
        c1[r] = _mm256_setzero_ps();
    }
    int p = 0;
    for (; p + 2 <= k; p += 2) {
        __m256 b0 = _mm256_load_ps(bp + 16 * p);
        __m256 b1 = _mm256_load_ps(bp + 16 * p + 8);
        __m256 b2 = _mm256_load_ps(bp + 16 * p + 16);
        __m256 b3 = _mm256_load_ps(bp + 16 * p + 24);
        for (int r = 0; r < R; ++r) {
            const float* ar = a + static_cast<size_t>(r) * lda + p;
            __m256 av = _mm256_broadcast_ss(ar);
            c0[r] = _mm256_fmadd_ps(av, b0, c0[r]);
            c1[r] = _mm256_fmadd_ps(av, b1, c1[r]);
            __m256 av2 = _mm256_broadcast_ss(ar + 1);
            c0[r] = _mm256_fmadd_ps(av2, b2, c0[r]);
            c1[r] = _mm256_fmadd_ps(av2, b3, c1[r]);
        }
    }
    for (; p < k; ++p) {
        __m256 b0 = _mm256_load_ps(bp + 16 * p);
        __m256 b1 = _mm256_load_ps(bp + 16 * p + 8);
        for (int r = 0; r < R; ++r) {
            __m256 av = _mm256_broadcast_ss(a + static_cast<size_t>(r) * lda + p);
            c0[r] = _mm256_fmadd_ps(av, b0, c0[r]);
            c1[r] = _mm256_fmadd_ps(av, b1, c1[r]);
        }
    }
    if (jb == kNr) {
        for (int r = 0; r < R; ++r) {
            float* cr = c + static_cast<size_t>(r) * ldc;
            if (acc) {
                c0[r] = _mm256_add_ps(c0[r], _mm256_loadu_ps(cr));
                c1[r] = _mm256_add_ps(c1[r], _mm256_loadu_ps(cr + 8));
            }
            _mm256_storeu_ps(cr, c0[r]);
            _mm256_storeu_ps(cr + 8, c1[r]);
        }
    } else {
        alignas(32) float tmp[kNr];
        for (int r = 0; r < R; ++r) {
            _mm256_store_ps(tmp, c0[r]);
            _mm256_store_ps(tmp + 8, c1[r]);
            float* cr = c + static_cast<size_t>(r) * ldc;
            if (acc)
                for (int j = 0; j < jb; ++j) cr[j] += tmp[j];
            else
                for (int j = 0; j < jb; ++j) cr[j] = tmp[j];
        }
    }
}

using MkFn = void (*)(int, const float*, int, const float*, float*, int, int, bool);
constexpr MkFn kMk[kMr] = {mk<1>, mk<2>, mk<3>, mk<4>, mk<5>, mk<6>};

// Narrow variant for column tails of 8 or fewer (1 ymm per row).
void pack_b8(int k, int n, int jb, const float* b, float* bp) {
    for (int p = 0; p < k; ++p) {
        const float* src = b + static_cast<size_t>(p) * n;
        float* dst = bp + 8 * p;
        int j = 0;
        for (; j < jb; ++j) dst[j] = src[j];
        for (; j < 8; ++j) dst[j] = 0.0f;
    }
}

template <int R>
void mk8(int k, const float* a, int lda, const float* bp, float* c, int ldc, int jb, bool acc) {
    __m256 c0[R];
    for (int r = 0; r < R; ++r) c0[r] = _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
        __m256 b0 = _mm256_load_ps(bp + 8 * p);
        for (int r = 0; r < R; ++r) {
            __m256 av = _mm256_broadcast_ss(a + static_cast<size_t>(r) * lda + p);
            c0[r] = _mm256_fmadd_ps(av, b0, c0[r]);
        }
    }
    if (jb == 8) {
        for (int r = 0; r < R; ++r) {
            float* cr = c + static_cast<size_t>(r) * ldc;
            if (acc) c0[r] = _mm256_add_ps(c0[r], _mm256_loadu_ps(cr));
            _mm256_storeu_ps(cr, c0[r]);
        }
    } else {
        alignas(32) float tmp[8];
        for (int r = 0; r < R; ++r) {
            _mm256_store_ps(tmp, c0[r]);
            float* cr = c + static_cast<size_t>(r) * ldc;
            if (acc)
                for (int j = 0; j < jb; ++j) cr[j] += tmp[j];
            else
                for (int j = 0; j < jb; ++j) cr[j] = tmp[j];
        }
    }
}

using Mk8Fn = void (*)(int, const float*, int, const float*, float*, int, int, bool);
constexpr Mk8Fn kMk8[kMr] = {mk8<1>, mk8<2>, mk8<3>, mk8<4>, mk8<5>, mk8<6>};

}  // namespace

void gemm_avx2(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    if (m <= 0 || n <= 0) return;
    if (k <= 0) {
        if (!accumulate)
            for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] = 0.0f;
        return;
    }
    if (m <= 2) {
        // Row-streaming path: packing would copy more than it saves here.
        for (int i = 0; i < m; ++i) {
            float* ci = c + static_cast<size_t>(i) * n;
            if (!accumulate)
                for (int j = 0; j < n; ++j) ci[j] = 0.0f;
            const float* ai = a + static_cast<size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                __m256 av = _mm256_broadcast_ss(ai + p);
                const float* br = b + static_cast<size_t>(p) * n;
                int j = 0;
                for (; j + 8 <= n; j += 8) {
                    __m256 acc = _mm256_loadu_ps(ci + j);
                    acc = _mm256_fmadd_ps(av, _mm256_loadu_ps(br + j), acc);
                    _mm256_storeu_ps(ci + j, acc);
                }
                for (; j < n; ++j) ci[j] += ai[p] * br[j];
            }
        }
        return;
    }
    thread_local std::vector<float> panel;
    panel.resize(static_cast<size_t>(k) * kNr + 8);
    float* bp = panel.data();
    // align to 32 bytes
    while (reinterpret_cast<uintptr_t>(bp) & 31u) ++bp;

    int j0 = 0;
    while (j0 < n) {
        int jb = n - j0 < kNr ? n - j0 : kNr;
        bool narrow = jb <= 8;
        if (narrow)
            pack_b8(k, n, jb, b + j0, bp);
        else
            pack_b(k, n, jb, b + j0, bp);
        int i0 = 0;
        for (; i0 + kMr <= m; i0 += kMr) {
            const float* ai = a + static_cast<size_t>(i0) * k;
            float* ci = c + static_cast<size_t>(i0) * n + j0;
            if (narrow)
                mk8<kMr>(k, ai, k, bp, ci, n, jb, accumulate);
            else
                mk<kMr>(k, ai, k, bp, ci, n, jb, accumulate);
        }
        int rem = m - i0;
        if (rem > 0) {
            const float* ai = a + static_cast<size_t>(i0) * k;
            float* ci = c + static_cast<size_t>(i0) * n + j0;
            if (narrow)
                kMk8[rem - 1](k, ai, k, bp, ci, n, jb, accumulate);
            else
                kMk[rem - 1](k, ai, k, bp, ci, n, jb, accumulate);
        }
        j0 += jb;
    }
}

void depthwise_avx2(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
                    int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow) {
    int cv = c & ~7;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* o = out + (static_cast<size_t>(oy) * ow + ox) * c;
            for (int ch = 0; ch < cv; ch += 8) _mm256_storeu_ps(o + ch, _mm256_setzero_ps());
            for (int ch = cv; ch < c; ++ch) o[ch] = 0.0f;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * sh - pad_top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * sw - pad_left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* src = in + (static_cast<size_t>(iy) * w + ix) * c;
                    const float* t = taps + (static_cast<size_t>(ky) * kw + kx) * c;
                    int ch = 0;
                    for (; ch < cv; ch += 8) {
                        __m256 acc = _mm256_loadu_ps(o + ch);
                        acc = _mm256_fmadd_ps(_mm256_loadu_ps(src + ch), _mm256_loadu_ps(t + ch), acc);
                        _mm256_storeu_ps(o + ch, acc);
                    }
                    for (; ch < c; ++ch) o[ch] += src[ch] * t[ch];
                }
            }
        }
    }
}

#else  // no AVX2 on this target: keep the symbols, route to scalar

void gemm_avx2(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    gemm_scalar(m, n, k, a, b, c, accumulate);
}

void depthwise_avx2(const float* in, int h, int w, int c, const float* taps, int kh, int kw,
                    int sh, int sw, int pad_top, int pad_left, float* out, int oh, int ow) {
    depthwise_scalar(in, h, w, c, taps, kh, kw, sh, sw, pad_top, pad_left, out, oh, ow);
}

#endif

}  // namespace dd::kern
