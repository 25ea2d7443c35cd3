#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddrive/adam.hpp"
#include "ddrive/layers.hpp"
#include "ddrive/tensor.hpp"

namespace dd {

struct ModelSpec {
    std::string name;
    Shape3 input_shape{120, 160, 1};
    // The modified model carries no Normalization layer row; its input is
    // normalized as a preprocessing step instead.
    bool normalize_input = false;
    std::vector<LayerSpec> layers;
};

ModelSpec build_pilotnet_original();
ModelSpec build_pilotnet_modified();

// Weight tensors of one layer. Conv2D: w=(kh,kw,cin,cout), b=(cout).
// SeparableConv2D: w=depthwise (kh,kw,cin), w2=pointwise (cin,cout), b=(cout).
// Dense: w=(n_in,n_out), b=(n_out). Flatten/Normalization: all empty.
struct LayerParams {
    Tensor w, w2, b;
};

struct Model {
    ModelSpec spec;
    std::vector<LayerParams> params;
};

Model init_model(const ModelSpec& spec, uint32_t seed);

// Flat views over every weight tensor, in layer order (w, w2, b).
std::vector<Tensor*> param_tensors(Model& m);
std::vector<const Tensor*> param_tensors(const Model& m);

struct SummaryRow {
    std::string kind;
    std::string kernel;  // "5x5" or "-"
    std::string stride;
    int out_channels = 0;
    long long params = 0;
    long long macs = 0;
};

struct ModelSummary {
    std::string name;
    std::vector<SummaryRow> rows;
    long long total_params = 0;
    long long total_macs = 0;
    int flatten_len = 0;
};

ModelSummary summarize(const ModelSpec& spec);

// Per-sample activations cached for backward.
struct ForwardCache {
    std::vector<Tensor> act;               // act[i] = input to layer i; act[n] = output
    std::vector<Tensor> mid;               // separable depthwise stage outputs
    std::vector<std::vector<float>> xcol;  // conv patch matrices
};

// Frame pixels are raw [0, 255]; normalization happens inside.
Tensor forward_model(const Model& m, const Tensor& frame, ForwardCache* cache);
float predict(const Model& m, const Tensor& frame);

// Gradient accumulators matching the trainer's transposed conv layout.
struct GradAccum {
    std::vector<LayerParams> g;  // conv w / sepconv w2 held transposed (cout-major)
    void reset();
};

GradAccum make_grad_accum(const Model& m);
// Accumulates parameter gradients for one sample; dloss is d(loss)/d(output).
void backward_model(const Model& m, const ForwardCache& cache, float dloss, GradAccum& acc);
// Untranspose into plain weight-layout gradients.
std::vector<LayerParams> finalize_grads(const Model& m, const GradAccum& acc);

std::vector<Tensor> feature_maps(const Model& m, const Tensor& frame, int layer_index);

// Checkpoint io
enum class CheckpointErrorKind { BadMagic, Truncated, ChecksumMismatch, BadField };

struct CheckpointError : std::runtime_error {
    CheckpointErrorKind kind;
    CheckpointError(CheckpointErrorKind k, const std::string& msg)
        : std::runtime_error(msg), kind(k) {}
};

std::vector<uint8_t> save_model(const Model& m, const AdamState* opt);
Model load_model(const std::vector<uint8_t>& bytes, AdamState* opt_out = nullptr);
void save_model_file(const Model& m, const AdamState* opt, const std::string& path);
Model load_model_file(const std::string& path, AdamState* opt_out = nullptr);

uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace dd
