#include "protokd/data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "protokd/rng.hpp"

namespace protokd {
namespace data {

using nlohmann::json;

GeneratorConfig GeneratorConfig::defaults() {
    GeneratorConfig c;
    // Modality 0 sees the rim only faintly and the core not at all, modality 1
    // sees only the core, and modality 2 sees both classes at the same
    // intensity. No single modality separates all classes; the full stack does.
    c.visibility = {{0.0, 0.55, 0.0},
                    {0.0, 0.0, 1.0},
                    {0.0, 0.6, 0.6}};
    return c;
}

void GeneratorConfig::validate() const {
    if (classes < 2) throw ConfigError("generator: classes must be >= 2");
    if (modalities < 1) throw ConfigError("generator: modalities must be >= 1");
    if (height < 4 || width < 4) throw ConfigError("generator: grid must be at least 4x4");
    if (min_blobs < 1 || max_blobs < min_blobs)
        throw ConfigError("generator: invalid blob count range");
    if (noise_sd < 0) throw ConfigError("generator: noise_sd must be >= 0");
    if (train_count < 1 || val_count < 0 || test_count < 0)
        throw ConfigError("generator: invalid split counts");
    if (static_cast<int>(visibility.size()) != modalities)
        throw ConfigError("generator: visibility matrix must have one row per modality");
    for (const auto& row : visibility) {
        if (static_cast<int>(row.size()) != classes)
            throw ConfigError("generator: visibility rows must have one entry per class");
        for (double v : row)
            if (v < 0.0 || v > 1.0)
                throw ConfigError("generator: visibility entries must lie in [0,1]");
    }
    for (int k = 1; k < classes; ++k) {
        double best = 0.0;
        for (int m = 0; m < modalities; ++m) best = std::max(best, visibility[m][k]);
        if (best <= 0.5)
            throw ConfigError("generator: class " + std::to_string(k) +
                              " is not clearly visible (>0.5) in any modality");
    }
    bool has_weak = false;
    for (int k = 1; k < classes; ++k)
        if (visibility[0][k] <= 0.2) has_weak = true;
    if (!has_weak)
        throw ConfigError(
            "generator: modality 0 must have at least one class with visibility <= 0.2");
}

namespace {

SyntheticSample make_sample(const GeneratorConfig& c, std::uint64_t seed) {
    Rng rng(seed);
    int h = c.height, w = c.width;
    SyntheticSample s;
    s.seed = seed;
    s.labels.labels.assign(static_cast<size_t>(h) * w, 0);

    // Tumor-like blobs: concentric elliptical layers, class 1 outermost down
    // to class K-1 at the core. Later blobs overwrite earlier ones.
    int blobs = rng.uniform_int(c.min_blobs, c.max_blobs);
    double scale = std::min(h, w);
    for (int b = 0; b < blobs; ++b) {
        double cy = rng.uniform(0.1 * h, 0.9 * h);
        double cx = rng.uniform(0.1 * w, 0.9 * w);
        double ry = rng.uniform(0.22 * scale, 0.30 * scale);
        double rx = rng.uniform(0.22 * scale, 0.30 * scale);
        double ang = rng.uniform(0.0, M_PI);
        double core = rng.uniform(0.60, 0.75);  // innermost layer relative size
        double ca = std::cos(ang), sa = std::sin(ang);
        int layers = c.classes - 1;
        for (int l = 0; l < layers; ++l) {
            // layer l spans classes 1..K-1 from rim to core
            double f = layers == 1 ? 1.0
                                   : 1.0 + (core - 1.0) * static_cast<double>(l) / (layers - 1);
            double lry = ry * f, lrx = rx * f;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double dy = y - cy, dx = x - cx;
                    double u = ca * dx + sa * dy;
                    double v = -sa * dx + ca * dy;
                    if ((u * u) / (lrx * lrx) + (v * v) / (lry * lry) <= 1.0)
                        s.labels.labels[static_cast<size_t>(y) * w + x] = 1 + l;
                }
            }
        }
    }

    s.image = Tensor::zeros({c.modalities, h, w});
    for (int m = 0; m < c.modalities; ++m) {
        double* plane = &s.image.data[static_cast<size_t>(m) * h * w];
        for (int p = 0; p < h * w; ++p) {
            int cls = s.labels.labels[static_cast<size_t>(p)];
            double v = c.visibility[static_cast<size_t>(m)][static_cast<size_t>(cls)];
            if (c.noise_sd > 0.0) v += c.noise_sd * rng.normal();
            plane[p] = v;
        }
        if (c.normalize) {
            double mean = 0.0;
            for (int p = 0; p < h * w; ++p) mean += plane[p];
            mean /= h * w;
            double var = 0.0;
            for (int p = 0; p < h * w; ++p) var += (plane[p] - mean) * (plane[p] - mean);
            double sd = std::sqrt(var / (h * w));
            if (sd < 1e-12) sd = 1.0;
            for (int p = 0; p < h * w; ++p) plane[p] = (plane[p] - mean) / sd;
        }
    }
    return s;
}

std::vector<SyntheticSample> make_split(const GeneratorConfig& c, int split, int count) {
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::uint64_t stream = (static_cast<std::uint64_t>(split) << 32) |
                               static_cast<std::uint64_t>(i);
        out.push_back(make_sample(c, Rng::derive(c.master_seed, stream)));
    }
    return out;
}

json config_to_json(const GeneratorConfig& c) {
    return json{{"height", c.height},
                {"width", c.width},
                {"classes", c.classes},
                {"modalities", c.modalities},
                {"min_blobs", c.min_blobs},
                {"max_blobs", c.max_blobs},
                {"visibility", c.visibility},
                {"noise_sd", c.noise_sd},
                {"normalize", c.normalize},
                {"train_count", c.train_count},
                {"val_count", c.val_count},
                {"test_count", c.test_count},
                {"master_seed", c.master_seed}};
}

GeneratorConfig config_from_json(const json& j) {
    GeneratorConfig c;
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.classes = j.at("classes").get<int>();
    c.modalities = j.at("modalities").get<int>();
    c.min_blobs = j.at("min_blobs").get<int>();
    c.max_blobs = j.at("max_blobs").get<int>();
    c.visibility = j.at("visibility").get<std::vector<std::vector<double>>>();
    c.noise_sd = j.at("noise_sd").get<double>();
    c.normalize = j.at("normalize").get<bool>();
    c.train_count = j.at("train_count").get<int>();
    c.val_count = j.at("val_count").get<int>();
    c.test_count = j.at("test_count").get<int>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    return c;
}

void write_split(std::ofstream& f, const std::vector<SyntheticSample>& split, int classes) {
    for (const auto& s : split) {
        f.write(reinterpret_cast<const char*>(s.image.data.data()),
                static_cast<std::streamsize>(s.image.data.size() * sizeof(double)));
        std::vector<std::uint8_t> lab(s.labels.labels.size());
        for (size_t i = 0; i < lab.size(); ++i) {
            int y = s.labels.labels[i];
            if (y < 0 || y >= classes)
                throw IoError("dataset: label " + std::to_string(y) + " outside [0," +
                              std::to_string(classes) + ")");
            lab[i] = static_cast<std::uint8_t>(y);
        }
        f.write(reinterpret_cast<const char*>(lab.data()),
                static_cast<std::streamsize>(lab.size()));
        std::uint64_t seed = s.seed;
        f.write(reinterpret_cast<const char*>(&seed), sizeof(seed));
    }
}

std::vector<SyntheticSample> read_split(std::ifstream& f, const GeneratorConfig& c, int count,
                                        const std::string& path) {
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<size_t>(count));
    size_t img_n = static_cast<size_t>(c.modalities) * c.height * c.width;
    size_t lab_n = static_cast<size_t>(c.height) * c.width;
    for (int i = 0; i < count; ++i) {
        SyntheticSample s;
        std::vector<double> img(img_n);
        f.read(reinterpret_cast<char*>(img.data()),
               static_cast<std::streamsize>(img_n * sizeof(double)));
        std::vector<std::uint8_t> lab(lab_n);
        f.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab_n));
        std::uint64_t seed = 0;
        f.read(reinterpret_cast<char*>(&seed), sizeof(seed));
        if (!f) throw IoError("truncated dataset payload: " + path);
        s.image = Tensor({c.modalities, c.height, c.width}, std::move(img));
        s.labels.labels.assign(lab.begin(), lab.end());
        for (int y : s.labels.labels)
            if (y >= c.classes)
                throw IoError("dataset header declares " + std::to_string(c.classes) +
                              " classes but payload contains label " + std::to_string(y));
        s.seed = seed;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

Dataset generate(const GeneratorConfig& config) {
    config.validate();
    Dataset d;
    d.config = config;
    d.train = make_split(config, 0, config.train_count);
    d.val = make_split(config, 1, config.val_count);
    d.test = make_split(config, 2, config.test_count);
    return d;
}

Tensor select_modality(const SyntheticSample& sample, int modality) {
    int m = sample.image.shape[0], h = sample.image.shape[1], w = sample.image.shape[2];
    if (modality < 0 || modality >= m)
        throw DegenerateInputError("select_modality: index " + std::to_string(modality) +
                                   " out of range [0," + std::to_string(m) + ")");
    size_t plane = static_cast<size_t>(h) * w;
    std::vector<double> out(sample.image.data.begin() + static_cast<long>(modality * plane),
                            sample.image.data.begin() + static_cast<long>((modality + 1) * plane));
    return Tensor({1, h, w}, std::move(out));
}

void save_dataset(const std::string& path, const Dataset& dataset) {
    json header;
    header["version"] = 1;
    header["config"] = config_to_json(dataset.config);
    header["counts"] = {{"train", dataset.train.size()},
                        {"val", dataset.val.size()},
                        {"test", dataset.test.size()}};
    header["image_shape"] = Shape{dataset.config.modalities, dataset.config.height,
                                  dataset.config.width};

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset for writing: " + path);
    f << header.dump() << '\n';
    write_split(f, dataset.train, dataset.config.classes);
    write_split(f, dataset.val, dataset.config.classes);
    write_split(f, dataset.test, dataset.config.classes);
    if (!f) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("dataset missing header: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("malformed dataset header in " + path + ": " + e.what());
    }
    if (!header.contains("version") || header["version"].get<int>() != 1)
        throw IoError("dataset version mismatch in " + path);

    Dataset d;
    d.config = config_from_json(header.at("config"));
    d.config.validate();
    int train_n = header.at("counts").at("train").get<int>();
    int val_n = header.at("counts").at("val").get<int>();
    int test_n = header.at("counts").at("test").get<int>();
    d.train = read_split(f, d.config, train_n, path);
    d.val = read_split(f, d.config, val_n, path);
    d.test = read_split(f, d.config, test_n, path);
    return d;
}

}  // namespace data
}  // namespace protokd
