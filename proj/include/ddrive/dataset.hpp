#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ddrive/rng.hpp"
#include "ddrive/tensor.hpp"

namespace dd {

constexpr int kFrameH = 120;
constexpr int kFrameW = 160;
constexpr int kFrameBytes = kFrameH * kFrameW;

// angle is dimensionless steering in [-1, 1]: -1 full left, +1 full right.
struct Sample {
    std::vector<uint8_t> frame;  // 120x160 grayscale, row-major
    float angle = 0.0f;
};

struct Dataset {
    std::vector<Sample> samples;
    std::string provenance;  // raw / balanced / mirrored

    size_t size() const { return samples.size(); }
};

struct AugmentConfig {
    float prob = 0.5f;
    float zoom_min = 1.0f, zoom_max = 1.3f;
    float bright_min = 0.7f, bright_max = 1.3f;
};

// Equal-width angle histogram over [-1, 1]; bins over cap are thinned by
// uniform random removal, surviving order preserved.
Dataset balance(const Dataset& ds, int bins, int cap_per_bin, uint32_t seed);

// Appends the horizontal mirror of every sample with negated angle.
Dataset mirror_expand(const Dataset& ds);

std::vector<uint8_t> mirror_frame(const std::vector<uint8_t>& frame);

// With probability cfg.prob, exactly one of {zoom, flip, brightness}.
Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg);

std::pair<Dataset, Dataset> split(const Dataset& ds, int train_count, int test_count,
                                  uint32_t seed);

struct Batch {
    std::vector<Tensor> frames;  // (120,160,1), raw pixel range [0,255]
    std::vector<float> targets;
};

// batch_size draws with replacement; augmented when cfg is non-null.
Batch make_batch(const Dataset& ds, Rng& rng, int batch_size, const AugmentConfig* cfg);

Tensor frame_to_tensor(const std::vector<uint8_t>& frame);

void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset_file(const Dataset& ds, const std::string& path);
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::string& path);

enum class DatasetErrorKind { BadMagic, Truncated };

struct DatasetError : std::runtime_error {
    DatasetErrorKind kind;
    DatasetError(DatasetErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace dd
