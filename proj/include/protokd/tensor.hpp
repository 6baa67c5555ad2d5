#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "protokd/error.hpp"

namespace protokd {

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of 64-bit floats.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<long long>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor full(Shape s, double v) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    long long size() const { return static_cast<long long>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }
    // 2D accessors (row-major)
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    bool is_scalar() const { return size() == 1; }
    double scalar_value() const {
        if (!is_scalar()) throw ShapeError("tensor " + shape_str(shape) + " is not a scalar");
        return data[0];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Per-pixel integer class labels, flattened row-major.
struct LabelMap {
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    int at(int i) const { return labels[static_cast<size_t>(i)]; }

    void validate(int num_classes) const {
        for (int y : labels)
            if (y < 0 || y >= num_classes)
                throw DegenerateInputError("label " + std::to_string(y) + " out of range [0," +
                                           std::to_string(num_classes) + ")");
    }
};

}  // namespace protokd
