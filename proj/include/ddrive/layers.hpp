#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ddrive/gemm.hpp"
#include "ddrive/tensor.hpp"

namespace dd {

enum class LayerKind { Conv2D, SeparableConv2D, Dense, Flatten, Normalization };
enum class Padding { Valid, Same };
enum class Activation { Relu, Linear };

struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;
    int kh = 0, kw = 0;
    int sh = 1, sw = 1;
    Padding padding = Padding::Valid;
    // For Dense these are the input/output feature counts.
    int in_channels = 0;
    int out_channels = 0;
    Activation activation = Activation::Linear;
};

struct Shape3 {
    int h = 1, w = 1, c = 1;
    bool operator==(const Shape3&) const = default;
    long long count() const { return static_cast<long long>(h) * w * c; }
};

const char* layer_kind_name(LayerKind k);

Shape3 output_shape(const LayerSpec& layer, Shape3 in);
long long param_count(const LayerSpec& layer);
long long mac_count(const LayerSpec& layer, Shape3 in);

// Zero padding on each side for the layer applied to an input of the given
// extent; the odd remainder of same padding goes to bottom/right.
inline void pad_amounts(int in, int k, int s, Padding p, int* lo, int* hi) {
    if (p == Padding::Valid) {
        *lo = *hi = 0;
        return;
    }
    int out = (in + s - 1) / s;
    int total = (out - 1) * s + k - in;
    if (total < 0) total = 0;
    *lo = total / 2;
    *hi = total - total / 2;
}

namespace detail {

template <typename T>
void gemm_any(int m, int n, int k, const T* a, const T* b, T* c, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kern::gemm(m, n, k, a, b, c, acc);
    else
        kern::gemm_ref(m, n, k, a, b, c, acc);
}

template <typename T>
void depthwise_any(const T* in, int h, int w, int c, const T* taps, int kh, int kw,
                   int sh, int sw, int pt, int pl, T* out, int oh, int ow) {
    if constexpr (std::is_same_v<T, float>)
        kern::depthwise(in, h, w, c, taps, kh, kw, sh, sw, pt, pl, out, oh, ow);
    else
        kern::depthwise_ref(in, h, w, c, taps, kh, kw, sh, sw, pt, pl, out, oh, ow);
}

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

inline void expect(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// Patch matrix: one row per output pixel, columns ordered (ky, kx, ci).
template <typename T>
void im2col(const TensorT<T>& in, int kh, int kw, int sh, int sw, int pt, int pl,
            int oh, int ow, T* cols) {
    int h = in.shape[0], w = in.shape[1], c = in.shape[2];
    int kcols = kh * kw * c;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* row = cols + (static_cast<size_t>(oy) * ow + ox) * kcols;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * sh - pt + ky;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * sw - pl + kx;
                    T* dst = row + (static_cast<size_t>(ky) * kw + kx) * c;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        for (int ci = 0; ci < c; ++ci) dst[ci] = T(0);
                    } else {
                        const T* src = in.ptr() + (static_cast<size_t>(iy) * w + ix) * c;
                        for (int ci = 0; ci < c; ++ci) dst[ci] = src[ci];
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-matrix gradient back onto the input grid.
template <typename T>
void col2im(const T* cols, int h, int w, int c, int kh, int kw, int sh, int sw,
            int pt, int pl, int oh, int ow, TensorT<T>& dx) {
    int kcols = kh * kw * c;
    for (auto& v : dx.data) v = T(0);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* row = cols + (static_cast<size_t>(oy) * ow + ox) * kcols;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * sh - pt + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * sw - pl + kx;
                    if (ix < 0 || ix >= w) continue;
                    T* dst = dx.ptr() + (static_cast<size_t>(iy) * w + ix) * c;
                    const T* src = row + (static_cast<size_t>(ky) * kw + kx) * c;
                    for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                }
            }
        }
    }
}

template <typename T>
void apply_activation(TensorT<T>& t, Activation act) {
    if (act == Activation::Relu)
        for (auto& v : t.data)
            if (v < T(0)) v = T(0);
}

// Cross-correlation with stride and padding; weights (kh, kw, cin, cout),
// bias (cout). Optionally exports the patch matrix for reuse in backward.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const LayerSpec& layer,
                          const TensorT<T>& w, const TensorT<T>& b,
                          std::vector<T>* xcol_out = nullptr) {
    detail::expect(in.shape.size() == 3, "conv2d: input must be rank 3");
    detail::expect(in.shape[2] == layer.in_channels, "conv2d: channel mismatch");
    detail::expect(w.shape == std::vector<int>{layer.kh, layer.kw, layer.in_channels, layer.out_channels},
                   "conv2d: weight shape mismatch");
    detail::expect(b.size() == layer.out_channels, "conv2d: bias shape mismatch");
    Shape3 os = output_shape(layer, {in.shape[0], in.shape[1], in.shape[2]});
    int m = os.h * os.w, n = layer.out_channels, k = layer.kh * layer.kw * layer.in_channels;
    int pt, pb, pl, pr;
    pad_amounts(in.shape[0], layer.kh, layer.sh, layer.padding, &pt, &pb);
    pad_amounts(in.shape[1], layer.kw, layer.sw, layer.padding, &pl, &pr);

    thread_local std::vector<T> scratch;
    std::vector<T>* cols = xcol_out ? xcol_out : &scratch;
    cols->resize(static_cast<size_t>(m) * k);
    im2col(in, layer.kh, layer.kw, layer.sh, layer.sw, pt, pl, os.h, os.w, cols->data());

    TensorT<T> out({os.h, os.w, os.c});
    detail::gemm_any<T>(m, n, k, cols->data(), w.ptr(), out.ptr(), false);
    for (int i = 0; i < m; ++i) {
        T* row = out.ptr() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += b.data[j];
    }
    apply_activation(out, layer.activation);
    return out;
}

// Per-channel spatial stage (stride/padding, no bias) followed by a 1x1
// cross-channel mix with bias. dw (kh, kw, cin), pw (cin, cout), b (cout).
template <typename T>
TensorT<T> separable_conv2d_forward(const TensorT<T>& in, const LayerSpec& layer,
                                    const TensorT<T>& dw, const TensorT<T>& pw,
                                    const TensorT<T>& b, TensorT<T>* mid_out = nullptr) {
    detail::expect(in.shape.size() == 3, "sepconv: input must be rank 3");
    detail::expect(in.shape[2] == layer.in_channels, "sepconv: channel mismatch");
    detail::expect(dw.shape == std::vector<int>{layer.kh, layer.kw, layer.in_channels},
                   "sepconv: depthwise shape mismatch");
    detail::expect(pw.shape == std::vector<int>{layer.in_channels, layer.out_channels},
                   "sepconv: pointwise shape mismatch");
    detail::expect(b.size() == layer.out_channels, "sepconv: bias shape mismatch");
    Shape3 os = output_shape(layer, {in.shape[0], in.shape[1], in.shape[2]});
    int pt, pb, pl, pr;
    pad_amounts(in.shape[0], layer.kh, layer.sh, layer.padding, &pt, &pb);
    pad_amounts(in.shape[1], layer.kw, layer.sw, layer.padding, &pl, &pr);

    TensorT<T> local_mid;
    TensorT<T>& mid = mid_out ? *mid_out : local_mid;
    mid = TensorT<T>({os.h, os.w, layer.in_channels});
    detail::depthwise_any<T>(in.ptr(), in.shape[0], in.shape[1], in.shape[2], dw.ptr(),
                             layer.kh, layer.kw, layer.sh, layer.sw, pt, pl, mid.ptr(), os.h, os.w);

    int m = os.h * os.w, n = layer.out_channels, k = layer.in_channels;
    TensorT<T> out({os.h, os.w, os.c});
    detail::gemm_any<T>(m, n, k, mid.ptr(), pw.ptr(), out.ptr(), false);
    for (int i = 0; i < m; ++i) {
        T* row = out.ptr() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += b.data[j];
    }
    apply_activation(out, layer.activation);
    return out;
}

// y = W^T x + b; W is (n_in, n_out) row-major.
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                         Activation act) {
    detail::expect(w.shape.size() == 2, "dense: weight must be rank 2");
    detail::expect(in.size() == w.shape[0], "dense: input length mismatch");
    detail::expect(b.size() == w.shape[1], "dense: bias length mismatch");
    TensorT<T> out({w.shape[1]});
    detail::gemm_any<T>(1, w.shape[1], w.shape[0], in.ptr(), w.ptr(), out.ptr(), false);
    for (int j = 0; j < w.shape[1]; ++j) out.data[j] += b.data[j];
    apply_activation(out, act);
    return out;
}

// Pixel range [0, 255] -> [-1, 1].
template <typename T>
TensorT<T> normalize(const TensorT<T>& in) {
    TensorT<T> out = in;
    for (auto& v : out.data) v = v / T(127.5) - T(1);
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& in) {
    TensorT<T> out = in;
    apply_activation(out, Activation::Relu);
    return out;
}

template <typename T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    detail::expect(pred.size() == target.size(), "mse: length mismatch");
    detail::expect(pred.size() > 0, "mse: empty batch");
    T acc = T(0);
    for (int i = 0; i < pred.size(); ++i) {
        T d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / T(pred.size());
}

template <typename T>
T mae(const TensorT<T>& pred, const TensorT<T>& target) {
    detail::expect(pred.size() == target.size(), "mae: length mismatch");
    detail::expect(pred.size() > 0, "mae: empty batch");
    T acc = T(0);
    for (int i = 0; i < pred.size(); ++i) acc += std::abs(pred.data[i] - target.data[i]);
    return acc / T(pred.size());
}

// d/dpred of mse_loss
template <typename T>
TensorT<T> mse_grad(const TensorT<T>& pred, const TensorT<T>& target) {
    detail::expect(pred.size() == target.size(), "mse_grad: length mismatch");
    TensorT<T> g = pred;
    for (int i = 0; i < pred.size(); ++i)
        g.data[i] = T(2) * (pred.data[i] - target.data[i]) / T(pred.size());
    return g;
}

// Upstream gradient through the activation, given the post-activation output.
template <typename T>
TensorT<T> activation_backward(const TensorT<T>& out, const TensorT<T>& dy, Activation act) {
    TensorT<T> dz = dy;
    if (act == Activation::Relu)
        for (int i = 0; i < dz.size(); ++i)
            if (out.data[i] <= T(0)) dz.data[i] = T(0);
    return dz;
}

template <typename T>
struct ConvGrads {
    TensorT<T> dw;   // same layout as the weights
    TensorT<T> dw2;  // pointwise stage for separable, unused otherwise
    TensorT<T> db;
    TensorT<T> dx;
};

// Accumulating backward used by the trainer: dwt_acc is (cout, kh*kw*cin),
// i.e. the transposed weight gradient; the caller untransposes once per step.
template <typename T>
TensorT<T> conv2d_backward_acc(const TensorT<T>& in, const LayerSpec& layer,
                               const TensorT<T>& w, const TensorT<T>& out,
                               const TensorT<T>& dy, const std::vector<T>& xcol,
                               TensorT<T>& dwt_acc, TensorT<T>& db_acc, bool need_dx) {
    Shape3 os{out.shape[0], out.shape[1], out.shape[2]};
    int m = os.h * os.w, n = layer.out_channels, k = layer.kh * layer.kw * layer.in_channels;
    detail::expect(dy.same_shape(out), "conv2d backward: dy shape mismatch");
    detail::expect(static_cast<long long>(xcol.size()) == static_cast<long long>(m) * k,
                   "conv2d backward: missing forward cache");

    TensorT<T> dz = activation_backward(out, dy, layer.activation);
    for (int i = 0; i < m; ++i) {
        const T* row = dz.ptr() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) db_acc.data[j] += row[j];
    }
    thread_local std::vector<T> dzt;
    dzt.resize(static_cast<size_t>(m) * n);
    detail::transpose(dz.ptr(), m, n, dzt.data());
    detail::gemm_any<T>(n, k, m, dzt.data(), xcol.data(), dwt_acc.ptr(), true);

    if (!need_dx) return {};
    thread_local std::vector<T> wt, dxcol;
    wt.resize(static_cast<size_t>(k) * n);
    detail::transpose(w.ptr(), k, n, wt.data());
    dxcol.resize(static_cast<size_t>(m) * k);
    detail::gemm_any<T>(m, k, n, dz.ptr(), wt.data(), dxcol.data(), false);

    int pt, pb, pl, pr;
    pad_amounts(in.shape[0], layer.kh, layer.sh, layer.padding, &pt, &pb);
    pad_amounts(in.shape[1], layer.kw, layer.sw, layer.padding, &pl, &pr);
    TensorT<T> dx(in.shape);
    col2im(dxcol.data(), in.shape[0], in.shape[1], in.shape[2], layer.kh, layer.kw,
           layer.sh, layer.sw, pt, pl, os.h, os.w, dx);
    return dx;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& in, const LayerSpec& layer,
                             const TensorT<T>& w, const TensorT<T>& b,
                             const TensorT<T>& out, const TensorT<T>& dy) {
    (void)b;
    Shape3 os = output_shape(layer, {in.shape[0], in.shape[1], in.shape[2]});
    int pt, pb, pl, pr;
    pad_amounts(in.shape[0], layer.kh, layer.sh, layer.padding, &pt, &pb);
    pad_amounts(in.shape[1], layer.kw, layer.sw, layer.padding, &pl, &pr);
    int k = layer.kh * layer.kw * layer.in_channels;
    std::vector<T> xcol(static_cast<size_t>(os.h) * os.w * k);
    im2col(in, layer.kh, layer.kw, layer.sh, layer.sw, pt, pl, os.h, os.w, xcol.data());

    ConvGrads<T> g;
    TensorT<T> dwt({layer.out_channels, k});
    g.db = TensorT<T>({layer.out_channels});
    g.dx = conv2d_backward_acc(in, layer, w, out, dy, xcol, dwt, g.db, true);
    g.dw = TensorT<T>(w.shape);
    detail::transpose(dwt.ptr(), layer.out_channels, k, g.dw.ptr());
    return g;
}

// Depthwise stage gradients: dtaps and the input gradient, direct loops.
template <typename T>
void depthwise_backward(const TensorT<T>& in, const LayerSpec& layer, const TensorT<T>& taps,
                        const TensorT<T>& dmid, TensorT<T>& dtaps_acc, TensorT<T>* dx) {
    int h = in.shape[0], w = in.shape[1], c = in.shape[2];
    int oh = dmid.shape[0], ow = dmid.shape[1];
    int pt, pb, pl, pr;
    pad_amounts(h, layer.kh, layer.sh, layer.padding, &pt, &pb);
    pad_amounts(w, layer.kw, layer.sw, layer.padding, &pl, &pr);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* g = dmid.ptr() + (static_cast<size_t>(oy) * ow + ox) * c;
            for (int ky = 0; ky < layer.kh; ++ky) {
                int iy = oy * layer.sh - pt + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < layer.kw; ++kx) {
                    int ix = ox * layer.sw - pl + kx;
                    if (ix < 0 || ix >= w) continue;
                    const T* src = in.ptr() + (static_cast<size_t>(iy) * w + ix) * c;
                    T* dt = dtaps_acc.ptr() + (static_cast<size_t>(ky) * layer.kw + kx) * c;
                    for (int ci = 0; ci < c; ++ci) dt[ci] += src[ci] * g[ci];
                    if (dx) {
                        T* dst = dx->ptr() + (static_cast<size_t>(iy) * w + ix) * c;
                        const T* t = taps.ptr() + (static_cast<size_t>(ky) * layer.kw + kx) * c;
                        for (int ci = 0; ci < c; ++ci) dst[ci] += t[ci] * g[ci];
                    }
                }
            }
        }
    }
}

// dpwt_acc is (cout, cin); untransposed by the caller.
template <typename T>
TensorT<T> separable_backward_acc(const TensorT<T>& in, const LayerSpec& layer,
                                  const TensorT<T>& dw, const TensorT<T>& pw,
                                  const TensorT<T>& mid, const TensorT<T>& out,
                                  const TensorT<T>& dy, TensorT<T>& ddw_acc,
                                  TensorT<T>& dpwt_acc, TensorT<T>& db_acc, bool need_dx) {
    detail::expect(mid.shape.size() == 3, "sepconv backward: missing forward cache");
    int m = out.shape[0] * out.shape[1];
    int n = layer.out_channels, k = layer.in_channels;
    TensorT<T> dz = activation_backward(out, dy, layer.activation);
    for (int i = 0; i < m; ++i) {
        const T* row = dz.ptr() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) db_acc.data[j] += row[j];
    }
    thread_local std::vector<T> dzt;
    dzt.resize(static_cast<size_t>(m) * n);
    detail::transpose(dz.ptr(), m, n, dzt.data());
    detail::gemm_any<T>(n, k, m, dzt.data(), mid.ptr(), dpwt_acc.ptr(), true);

    thread_local std::vector<T> pwt;
    pwt.resize(static_cast<size_t>(k) * n);
    detail::transpose(pw.ptr(), k, n, pwt.data());
    TensorT<T> dmid(mid.shape);
    detail::gemm_any<T>(m, k, n, dz.ptr(), pwt.data(), dmid.ptr(), false);

    TensorT<T> dx;
    if (need_dx) dx = TensorT<T>(in.shape);
    depthwise_backward(in, layer, dw, dmid, ddw_acc, need_dx ? &dx : nullptr);
    return dx;
}

template <typename T>
ConvGrads<T> separable_conv2d_backward(const TensorT<T>& in, const LayerSpec& layer,
                                       const TensorT<T>& dw, const TensorT<T>& pw,
                                       const TensorT<T>& mid, const TensorT<T>& out,
                                       const TensorT<T>& dy) {
    ConvGrads<T> g;
    g.dw = TensorT<T>(dw.shape);
    TensorT<T> dpwt({layer.out_channels, layer.in_channels});
    g.db = TensorT<T>({layer.out_channels});
    g.dx = separable_backward_acc(in, layer, dw, pw, mid, out, dy, g.dw, dpwt, g.db, true);
    g.dw2 = TensorT<T>(pw.shape);
    detail::transpose(dpwt.ptr(), layer.out_channels, layer.in_channels, g.dw2.ptr());
    return g;
}

template <typename T>
TensorT<T> dense_backward_acc(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& out,
                              const TensorT<T>& dy, Activation act, TensorT<T>& dw_acc,
                              TensorT<T>& db_acc, bool need_dx) {
    int n_in = w.shape[0], n_out = w.shape[1];
    TensorT<T> dz = activation_backward(out, dy, act);
    for (int j = 0; j < n_out; ++j) db_acc.data[j] += dz.data[j];
    // outer product x dz^T, accumulated straight into the (n_in, n_out) layout
    detail::gemm_any<T>(n_in, n_out, 1, x.ptr(), dz.ptr(), dw_acc.ptr(), true);
    if (!need_dx) return {};
    thread_local std::vector<T> wt;
    wt.resize(static_cast<size_t>(n_in) * n_out);
    detail::transpose(w.ptr(), n_in, n_out, wt.data());
    TensorT<T> dx(x.shape);
    detail::gemm_any<T>(1, n_in, n_out, dz.ptr(), wt.data(), dx.ptr(), false);
    return dx;
}

template <typename T>
struct DenseGrads {
    TensorT<T> dw, db, dx;
};

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& out,
                             const TensorT<T>& dy, Activation act) {
    DenseGrads<T> g;
    g.dw = TensorT<T>(w.shape);
    g.db = TensorT<T>({w.shape[1]});
    g.dx = dense_backward_acc(x, w, out, dy, act, g.dw, g.db, true);
    return g;
}

}  // namespace dd
