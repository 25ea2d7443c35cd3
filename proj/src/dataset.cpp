#include "ddrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dd {

Dataset balance(const Dataset& ds, int bins, int cap_per_bin, uint32_t seed) {
    if (ds.samples.empty()) throw std::invalid_argument("balance: empty dataset");
    if (bins < 3) throw std::invalid_argument("balance: need at least 3 bins");
    if (cap_per_bin < 1) throw std::invalid_argument("balance: cap must be positive");

    auto bin_of = [bins](float angle) {
        int b = static_cast<int>((angle + 1.0f) / 2.0f * static_cast<float>(bins));
        return std::clamp(b, 0, bins - 1);
    };

    std::vector<std::vector<size_t>> by_bin(bins);
    for (size_t i = 0; i < ds.samples.size(); ++i)
        by_bin[bin_of(ds.samples[i].angle)].push_back(i);

    Rng rng(seed);
    std::vector<char> keep(ds.samples.size(), 1);
    for (auto& idx : by_bin) {
        if (static_cast<int>(idx.size()) <= cap_per_bin) continue;
        rng.shuffle(idx);
        for (size_t j = cap_per_bin; j < idx.size(); ++j) keep[idx[j]] = 0;
    }

    Dataset out;
    out.provenance = "balanced";
    for (size_t i = 0; i < ds.samples.size(); ++i)
        if (keep[i]) out.samples.push_back(ds.samples[i]);
    return out;
}

std::vector<uint8_t> mirror_frame(const std::vector<uint8_t>& frame) {
    std::vector<uint8_t> out(frame.size());
    for (int y = 0; y < kFrameH; ++y)
        for (int x = 0; x < kFrameW; ++x)
            out[y * kFrameW + x] = frame[y * kFrameW + (kFrameW - 1 - x)];
    return out;
}

Dataset mirror_expand(const Dataset& ds) {
    Dataset out;
    out.provenance = "mirrored";
    out.samples.reserve(ds.samples.size() * 2);
    out.samples = ds.samples;
    for (const Sample& s : ds.samples)
        out.samples.push_back({mirror_frame(s.frame), -s.angle});
    return out;
}

namespace {

uint8_t sample_bilinear(const std::vector<uint8_t>& f, float y, float x) {
    int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, kFrameW - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, kFrameH - 1);
    int x1 = std::min(x0 + 1, kFrameW - 1);
    int y1 = std::min(y0 + 1, kFrameH - 1);
    float fx = std::clamp(x - static_cast<float>(x0), 0.0f, 1.0f);
    float fy = std::clamp(y - static_cast<float>(y0), 0.0f, 1.0f);
    float v = (1 - fy) * ((1 - fx) * f[y0 * kFrameW + x0] + fx * f[y0 * kFrameW + x1]) +
              fy * ((1 - fx) * f[y1 * kFrameW + x0] + fx * f[y1 * kFrameW + x1]);
    return static_cast<uint8_t>(std::clamp(v + 0.5f, 0.0f, 255.0f));
}

}  // namespace

Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg) {
    if (rng.u01() >= cfg.prob) return s;
    switch (rng.below(3)) {
        case 0: {  // horizontal flip, angle negated
            return {mirror_frame(s.frame), -s.angle};
        }
        case 1: {  // center zoom-in, resized back; angle unchanged
            float z = rng.uniform(cfg.zoom_min, cfg.zoom_max);
            Sample out;
            out.angle = s.angle;
            out.frame.resize(kFrameBytes);
            float cx = (kFrameW - 1) * 0.5f, cy = (kFrameH - 1) * 0.5f;
            for (int y = 0; y < kFrameH; ++y)
                for (int x = 0; x < kFrameW; ++x)
                    out.frame[y * kFrameW + x] =
                        sample_bilinear(s.frame, cy + (y - cy) / z, cx + (x - cx) / z);
            return out;
        }
        default: {  // brightness scale, clamped
            float f = rng.uniform(cfg.bright_min, cfg.bright_max);
            Sample out;
            out.angle = s.angle;
            out.frame.resize(kFrameBytes);
            for (int i = 0; i < kFrameBytes; ++i)
                out.frame[i] = static_cast<uint8_t>(
                    std::clamp(s.frame[i] * f + 0.5f, 0.0f, 255.0f));
            return out;
        }
    }
}

std::pair<Dataset, Dataset> split(const Dataset& ds, int train_count, int test_count,
                                  uint32_t seed) {
    if (train_count < 0 || test_count < 0 ||
        static_cast<size_t>(train_count) + test_count > ds.samples.size())
        throw std::invalid_argument("split: counts exceed dataset size");
    std::vector<size_t> idx(ds.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    Dataset train, test;
    train.provenance = ds.provenance;
    test.provenance = ds.provenance;
    for (int i = 0; i < train_count; ++i) train.samples.push_back(ds.samples[idx[i]]);
    for (int i = 0; i < test_count; ++i)
        test.samples.push_back(ds.samples[idx[train_count + i]]);
    return {std::move(train), std::move(test)};
}

Tensor frame_to_tensor(const std::vector<uint8_t>& frame) {
    Tensor t({kFrameH, kFrameW, 1});
    for (int i = 0; i < kFrameBytes; ++i) t.data[i] = static_cast<float>(frame[i]);
    return t;
}

Batch make_batch(const Dataset& ds, Rng& rng, int batch_size, const AugmentConfig* cfg) {
    if (ds.samples.empty()) throw std::invalid_argument("batch: empty dataset");
    Batch b;
    b.frames.reserve(batch_size);
    b.targets.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const Sample& s = ds.samples[rng.below(static_cast<uint32_t>(ds.samples.size()))];
        if (cfg) {
            Sample a = augment(s, rng, *cfg);
            b.frames.push_back(frame_to_tensor(a.frame));
            b.targets.push_back(a.angle);
        } else {
            b.frames.push_back(frame_to_tensor(s.frame));
            b.targets.push_back(s.angle);
        }
    }
    return b;
}

namespace {
constexpr char kMagic[5] = {'D', 'D', 'D', 'S', '1'};
}

void write_dataset(const Dataset& ds, std::ostream& out) {
    out.write(kMagic, 5);
    uint32_t n = static_cast<uint32_t>(ds.samples.size());
    char nb[4];
    for (int i = 0; i < 4; ++i) nb[i] = static_cast<char>(n >> (8 * i));
    out.write(nb, 4);
    for (const Sample& s : ds.samples) {
        if (s.frame.size() != kFrameBytes)
            throw std::invalid_argument("write_dataset: frame size mismatch");
        out.write(reinterpret_cast<const char*>(s.frame.data()), kFrameBytes);
        uint32_t a;
        std::memcpy(&a, &s.angle, 4);
        char ab[4];
        for (int i = 0; i < 4; ++i) ab[i] = static_cast<char>(a >> (8 * i));
        out.write(ab, 4);
    }
}

Dataset read_dataset(std::istream& in) {
    char magic[5];
    in.read(magic, 5);
    if (in.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
        throw DatasetError(DatasetErrorKind::BadMagic, "dataset: bad magic");
    uint8_t nb[4];
    in.read(reinterpret_cast<char*>(nb), 4);
    if (in.gcount() != 4) throw DatasetError(DatasetErrorKind::Truncated, "dataset: truncated header");
    uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= static_cast<uint32_t>(nb[i]) << (8 * i);
    Dataset ds;
    ds.provenance = "raw";
    ds.samples.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        Sample& s = ds.samples[i];
        s.frame.resize(kFrameBytes);
        in.read(reinterpret_cast<char*>(s.frame.data()), kFrameBytes);
        uint8_t ab[4];
        in.read(reinterpret_cast<char*>(ab), 4);
        if (!in)
            throw DatasetError(DatasetErrorKind::Truncated, "dataset: truncated at sample " +
                                                                std::to_string(i));
        uint32_t a = 0;
        for (int j = 0; j < 4; ++j) a |= static_cast<uint32_t>(ab[j]) << (8 * j);
        std::memcpy(&s.angle, &a, 4);
    }
    return ds;
}

void write_dataset_file(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    write_dataset(ds, f);
}

Dataset read_dataset_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return read_dataset(f);
}

}  // namespace dd
