#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dd {

// Row-major dense buffer. Rank-3 image tensors are ordered (height, width,
// channels); flattened/dense activations use shape {n}.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), T(0));
    }

    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<long long>(data.size()) != count(shape))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension");
            n *= d;
        }
        return n;
    }

    int size() const { return static_cast<int>(data.size()); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // (h, w, c) accessor for rank-3 tensors.
    T& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + ch];
    }
    const T& at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + ch];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + ")";
}

}  // namespace dd
