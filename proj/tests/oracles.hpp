// Independent naive-loop reference implementations used as oracles in tests.
// These deliberately avoid the graph machinery in the library.
#pragma once

#include <cmath>
#include <vector>

#include "protokd/rng.hpp"
#include "protokd/tensor.hpp"

namespace oracle {

using protokd::LabelMap;
using protokd::Rng;
using protokd::Shape;
using protokd::Tensor;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline LabelMap random_labels(Rng& rng, int n, int k) {
    LabelMap l;
    l.labels.resize(static_cast<size_t>(n));
    for (int& y : l.labels) y = rng.uniform_int(0, k - 1);
    return l;
}

// direct quadruple-loop convolution, stride 1, zero padding kh/2
inline Tensor conv2d(const Tensor& img, const Tensor& ker) {
    int ci = img.shape[0], h = img.shape[1], w = img.shape[2];
    int co = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3];
    Tensor out = Tensor::zeros({co, h, w});
    for (int o = 0; o < co; ++o)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int c = 0; c < ci; ++c)
                    for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                            int sy = y + dy - kh / 2, sx = x + dx - kw / 2;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            acc += img.data[(static_cast<size_t>(c) * h + sy) * w + sx] *
                                   ker.data[((static_cast<size_t>(o) * ci + c) * kh + dy) * kw +
                                            dx];
                        }
                out.data[(static_cast<size_t>(o) * h + y) * w + x] = acc;
            }
    return out;
}

inline std::vector<double> softmax_row(const Tensor& logits, int row) {
    int k = logits.shape[1];
    std::vector<double> p(static_cast<size_t>(k));
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
        p[static_cast<size_t>(j)] = std::exp(logits.at(row, j));
        z += p[static_cast<size_t>(j)];
    }
    for (double& v : p) v /= z;
    return p;
}

inline double cross_entropy(const Tensor& logits, const LabelMap& labels) {
    int n = logits.shape[0];
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        acc -= std::log(softmax_row(logits, i)[static_cast<size_t>(labels.at(i))]);
    return acc / n;
}

inline double dice_loss(const Tensor& logits, const LabelMap& labels, double eps) {
    int n = logits.shape[0], k = logits.shape[1];
    double acc = 0.0;
    for (int cls = 0; cls < k; ++cls) {
        double inter = 0.0, psum = 0.0, gsum = 0.0;
        for (int i = 0; i < n; ++i) {
            double p = softmax_row(logits, i)[static_cast<size_t>(cls)];
            double g = labels.at(i) == cls ? 1.0 : 0.0;
            inter += p * g;
            psum += p * p;
            gsum += g * g;
        }
        acc += 1.0 - (2.0 * inter + eps) / (psum + gsum + eps);
    }
    return acc / k;
}

inline double kd_loss(const Tensor& student, const Tensor& teacher, double temperature,
                      bool student_first = true, bool t_squared = false) {
    int n = student.shape[0], k = student.shape[1];
    Tensor s = student, t = teacher;
    for (double& v : s.data) v /= temperature;
    for (double& v : t.data) v /= temperature;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        auto ps = softmax_row(s, i);
        auto pt = softmax_row(t, i);
        for (int j = 0; j < k; ++j) {
            size_t jj = static_cast<size_t>(j);
            if (student_first)
                acc += ps[jj] * (std::log(ps[jj]) - std::log(pt[jj]));
            else
                acc += pt[jj] * (std::log(pt[jj]) - std::log(ps[jj]));
        }
    }
    return (t_squared ? temperature * temperature : 1.0) * acc / n;
}

inline Tensor prototypes(const Tensor& features, const LabelMap& labels, int num_classes,
                         std::vector<bool>& valid) {
    int n = features.shape[0], d = features.shape[1];
    Tensor out = Tensor::zeros({num_classes, d});
    valid.assign(static_cast<size_t>(num_classes), false);
    for (int k = 0; k < num_classes; ++k) {
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (labels.at(i) == k) {
                ++count;
                for (int j = 0; j < d; ++j) out.at(k, j) += features.at(i, j);
            }
        if (count > 0) {
            valid[static_cast<size_t>(k)] = true;
            for (int j = 0; j < d; ++j) out.at(k, j) /= count;
        }
    }
    return out;
}

inline Tensor cosine_map(const Tensor& features, const Tensor& protos, double eps) {
    int n = features.shape[0], d = features.shape[1], k = protos.shape[0];
    Tensor out = Tensor::zeros({n, k});
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) {
            double dot = 0.0, nf = 0.0, np = 0.0;
            for (int j = 0; j < d; ++j) {
                dot += features.at(i, j) * protos.at(c, j);
                nf += features.at(i, j) * features.at(i, j);
                np += protos.at(c, j) * protos.at(c, j);
            }
            out.at(i, c) = dot / (std::max(std::sqrt(nf), eps) * std::max(std::sqrt(np), eps));
        }
    return out;
}

inline double proto_kd(const Tensor& ms, const Tensor& mt, const std::vector<bool>& valid) {
    int n = ms.shape[0], k = ms.shape[1];
    int nv = 0;
    for (bool v : valid) nv += v ? 1 : 0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            if (valid[static_cast<size_t>(j)]) {
                double d = ms.at(i, j) - mt.at(i, j);
                acc += d * d;
            }
    return acc / (static_cast<double>(n) * nv);
}

inline double proto_kd_intra(const Tensor& ms, const Tensor& mt, const LabelMap& labels) {
    int n = ms.shape[0];
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        int k = labels.at(i);
        double d = ms.at(i, k) - mt.at(i, k);
        acc += d * d;
    }
    return acc / n;
}

}  // namespace oracle
