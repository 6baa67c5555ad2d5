#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protokd/tensor.hpp"

namespace protokd {
namespace data {

struct GeneratorConfig {
    int height = 32;
    int width = 32;
    int classes = 3;     // class 0 = background
    int modalities = 3;
    int min_blobs = 2;
    int max_blobs = 3;
    // visibility[m][k]: how strongly class k shows up in modality m
    std::vector<std::vector<double>> visibility;
    double noise_sd = 0.3;
    bool normalize = true;  // per-modality zero mean, unit variance
    int train_count = 64;
    int val_count = 8;
    int test_count = 16;
    std::uint64_t master_seed = 42;

    void validate() const;
    static GeneratorConfig defaults();
};

struct SyntheticSample {
    Tensor image;     // M x H x W
    LabelMap labels;  // H*W, row-major
    std::uint64_t seed = 0;
};

struct Dataset {
    GeneratorConfig config;
    std::vector<SyntheticSample> train;
    std::vector<SyntheticSample> val;
    std::vector<SyntheticSample> test;
};

// Deterministic per (master seed, split, index); blobby multi-class labels,
// modality intensities from the visibility matrix plus Gaussian noise.
Dataset generate(const GeneratorConfig& config);

// 1 x H x W view of one modality.
Tensor select_modality(const SyntheticSample& sample, int modality);

// JSON header line + raw little-endian float64 images and uint8 labels.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

}  // namespace data
}  // namespace protokd
