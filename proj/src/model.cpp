#include "protokd/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "protokd/rng.hpp"

namespace protokd {
namespace model {

using nlohmann::json;

const Tensor& SegNetParams::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return l.value;
    throw ConfigError("model: no parameter named '" + name + "'");
}

Tensor& SegNetParams::find(const std::string& name) {
    for (auto& l : layers)
        if (l.name == name) return l.value;
    throw ConfigError("model: no parameter named '" + name + "'");
}

bool SegNetParams::same_values(const SegNetParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name != other.layers[i].name ||
            layers[i].value.shape != other.layers[i].value.shape ||
            layers[i].value.data != other.layers[i].value.data)
            return false;
    return true;
}

SegNetParams init_params(const SegNetConfig& config) {
    config.validate();
    Rng rng(Rng::derive(config.seed, 0x6d6f64656cULL));
    SegNetParams p;
    p.config = config;
    for (int l = 0; l < config.conv_layers; ++l) {
        int cin = l == 0 ? config.in_channels : config.hidden;
        Tensor w = Tensor::zeros({config.hidden, cin, 3, 3});
        double sd = std::sqrt(2.0 / (cin * 9));
        for (double& v : w.data) v = sd * rng.normal();
        p.layers.push_back({"conv" + std::to_string(l) + ".w", std::move(w)});
        p.layers.push_back({"conv" + std::to_string(l) + ".b",
                            Tensor::zeros({config.hidden})});
    }
    Tensor hw = Tensor::zeros({config.hidden, config.classes});
    double sd = std::sqrt(2.0 / config.hidden);
    for (double& v : hw.data) v = sd * rng.normal();
    p.layers.push_back({"head.w", std::move(hw)});
    p.layers.push_back({"head.b", Tensor::zeros({config.classes})});
    return p;
}

namespace {

struct ParamSource {
    Graph& g;
    const SegNetParams* frozen;  // nullptr -> declare designated inputs

    NodeId get(const std::string& name, Shape shape) {
        if (frozen) {
            const Tensor& t = frozen->find(name);
            if (t.shape != shape)
                throw ShapeError("model: parameter '" + name + "' has shape " +
                                 shape_str(t.shape) + ", expected " + shape_str(shape));
            return g.constant(t, name);
        }
        return g.input(name, std::move(shape));
    }
};

ForwardNodes build_forward(Graph& g, const SegNetConfig& config, const SegNetParams* frozen,
                           NodeId image) {
    config.validate();
    Shape is = g.shape_of(image);  // copy: appends below may reallocate
    if (is.size() != 3 || is[0] != config.in_channels)
        throw ShapeError("model: image shape " + shape_str(is) + " does not match in_channels=" +
                         std::to_string(config.in_channels));
    int h = is[1], w = is[2], d = config.hidden, k = config.classes;
    ParamSource src{g, frozen};

    NodeId x = image;
    for (int l = 0; l < config.conv_layers; ++l) {
        int cin = l == 0 ? config.in_channels : d;
        std::string base = "conv" + std::to_string(l);
        NodeId kernel = src.get(base + ".w", {d, cin, 3, 3});
        NodeId bias = src.get(base + ".b", {d});
        NodeId conv = g.conv2d(x, kernel);
        NodeId bmap = g.broadcast(g.reshape(bias, {d, 1, 1}), {d, h, w});
        x = g.leaky_relu(g.add(conv, bmap), 0.01);
    }
    NodeId features = g.chw_to_nd(x);
    NodeId head_w = src.get("head.w", {d, k});
    NodeId head_b = src.get("head.b", {k});
    NodeId logits = g.add(g.matmul(features, head_w),
                          g.broadcast(g.reshape(head_b, {1, k}), {h * w, k}));
    return {features, logits};
}

}  // namespace

ForwardNodes build_forward_trainable(Graph& g, const SegNetConfig& config, NodeId image) {
    return build_forward(g, config, nullptr, image);
}

ForwardNodes build_forward_frozen(Graph& g, const SegNetParams& params, NodeId image) {
    return build_forward(g, params.config, &params, image);
}

Bindings param_bindings(const SegNetParams& params) {
    Bindings b;
    for (const auto& l : params.layers) b.emplace(l.name, l.value);
    return b;
}

Tensor backbone_forward(const SegNetParams& params, const Tensor& image) {
    Graph g;
    NodeId in = g.constant(image, "image");
    ForwardNodes nodes = build_forward_frozen(g, params, in);
    return forward(g, {})[static_cast<size_t>(nodes.features)];
}

Tensor head_forward(const SegNetParams& params, const Tensor& features) {
    if (features.shape.size() != 2 || features.shape[1] != params.config.hidden)
        throw ShapeError("head_forward: features " + shape_str(features.shape) +
                         " do not match hidden=" + std::to_string(params.config.hidden));
    int k = params.config.classes, n = features.shape[0];
    Graph g;
    NodeId f = g.constant(features, "features");
    NodeId logits = g.add(g.matmul(f, g.constant(params.find("head.w"))),
                          g.broadcast(g.reshape(g.constant(params.find("head.b")), {1, k}),
                                      {n, k}));
    return forward(g, {})[static_cast<size_t>(logits)];
}

std::pair<Tensor, Tensor> full_forward(const SegNetParams& params, const Tensor& image) {
    Graph g;
    NodeId in = g.constant(image, "image");
    ForwardNodes nodes = build_forward_frozen(g, params, in);
    auto vals = forward(g, {});
    return {vals[static_cast<size_t>(nodes.features)], vals[static_cast<size_t>(nodes.logits)]};
}

void save_checkpoint(const std::string& path, const SegNetParams& params) {
    json header;
    header["version"] = 1;
    header["config"] = {{"in_channels", params.config.in_channels},
                        {"hidden", params.config.hidden},
                        {"classes", params.config.classes},
                        {"conv_layers", params.config.conv_layers},
                        {"seed", params.config.seed}};
    json layers = json::array();
    for (const auto& l : params.layers)
        layers.push_back({{"name", l.name}, {"shape", l.value.shape}});
    header["layers"] = layers;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f << header.dump() << '\n';
    for (const auto& l : params.layers)
        f.write(reinterpret_cast<const char*>(l.value.data.data()),
                static_cast<std::streamsize>(l.value.data.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path);
}

SegNetParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("checkpoint missing header: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint header in " + path + ": " + e.what());
    }
    if (!header.contains("version") || header["version"].get<int>() != 1)
        throw IoError("checkpoint version mismatch in " + path);

    SegNetParams p;
    const json& c = header.at("config");
    p.config.in_channels = c.at("in_channels").get<int>();
    p.config.hidden = c.at("hidden").get<int>();
    p.config.classes = c.at("classes").get<int>();
    p.config.conv_layers = c.at("conv_layers").get<int>();
    p.config.seed = c.at("seed").get<std::uint64_t>();
    p.config.validate();

    for (const json& l : header.at("layers")) {
        NamedTensor nt;
        nt.name = l.at("name").get<std::string>();
        Shape shape = l.at("shape").get<Shape>();
        auto count = static_cast<size_t>(shape_numel(shape));
        std::vector<double> data(count);
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(count * sizeof(double)));
        if (static_cast<size_t>(f.gcount()) != count * sizeof(double))
            throw IoError("truncated checkpoint payload in " + path + " at layer " + nt.name);
        nt.value = Tensor(std::move(shape), std::move(data));
        p.layers.push_back(std::move(nt));
    }
    return p;
}

}  // namespace model
}  // namespace protokd
