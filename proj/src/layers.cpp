#include "ddrive/layers.hpp"

namespace dd {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::SeparableConv2D: return "SeparableConv2D";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Normalization: return "Normalization";
    }
    return "?";
}

Shape3 output_shape(const LayerSpec& layer, Shape3 in) {
    switch (layer.kind) {
        case LayerKind::Normalization:
            return in;
        case LayerKind::Flatten:
            return {1, 1, static_cast<int>(in.count())};
        case LayerKind::Dense:
            if (in.count() != layer.in_channels)
                throw std::invalid_argument("dense: input length " + std::to_string(in.count()) +
                                            " != " + std::to_string(layer.in_channels));
            return {1, 1, layer.out_channels};
        case LayerKind::Conv2D:
        case LayerKind::SeparableConv2D: {
            if (in.c != layer.in_channels)
                throw std::invalid_argument("conv: input channels " + std::to_string(in.c) +
                                            " != " + std::to_string(layer.in_channels));
            int oh, ow;
            if (layer.padding == Padding::Valid) {
                if (layer.kh > in.h || layer.kw > in.w)
                    throw std::invalid_argument("conv: kernel larger than input under valid padding");
                oh = (in.h - layer.kh) / layer.sh + 1;
                ow = (in.w - layer.kw) / layer.sw + 1;
            } else {
                oh = (in.h + layer.sh - 1) / layer.sh;
                ow = (in.w + layer.sw - 1) / layer.sw;
            }
            return {oh, ow, layer.out_channels};
        }
    }
    throw std::invalid_argument("output_shape: unknown layer kind");
}

long long param_count(const LayerSpec& layer) {
    long long kh = layer.kh, kw = layer.kw, cin = layer.in_channels, cout = layer.out_channels;
    switch (layer.kind) {
        case LayerKind::Conv2D:
            return kh * kw * cin * cout + cout;
        case LayerKind::SeparableConv2D:
            // bias attaches to the pointwise stage only
            return kh * kw * cin + cin * cout + cout;
        case LayerKind::Dense:
            return cin * cout + cout;
        case LayerKind::Flatten:
        case LayerKind::Normalization:
            return 0;
    }
    return 0;
}

long long mac_count(const LayerSpec& layer, Shape3 in) {
    Shape3 out = output_shape(layer, in);
    long long px = static_cast<long long>(out.h) * out.w;
    long long kh = layer.kh, kw = layer.kw, cin = layer.in_channels, cout = layer.out_channels;
    switch (layer.kind) {
        case LayerKind::Conv2D:
            return px * cout * kh * kw * cin;
        case LayerKind::SeparableConv2D:
            return px * cin * kh * kw + px * cin * cout;
        case LayerKind::Dense:
            return cin * cout;
        case LayerKind::Flatten:
        case LayerKind::Normalization:
            return 0;
    }
    return 0;
}

}  // namespace dd
