#include "protokd/config.hpp"

#include <fstream>
#include <set>

namespace protokd {
namespace config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object())
        throw ConfigError("config: '" + path + "' must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                              "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    generator.validate();
    train.validate();
    teacher_model_config().validate();
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (modalities.empty()) throw ConfigError("config: modalities must be non-empty");
    for (int m : modalities)
        if (m < 0 || m >= generator.modalities)
            throw ConfigError("config: modality " + std::to_string(m) + " out of range");
    for (const auto& m : methods) (void)eval::method_train_config(m, train);
}

model::SegNetConfig ExperimentConfig::teacher_model_config() const {
    model::SegNetConfig c;
    c.in_channels = generator.modalities;
    c.hidden = model_hidden;
    c.classes = generator.classes;
    c.conv_layers = model_conv_layers;
    return c;
}

model::SegNetConfig ExperimentConfig::student_model_config() const {
    model::SegNetConfig c = teacher_model_config();
    c.in_channels = 1;
    return c;
}

json ExperimentConfig::to_json() const {
    json gen = {{"height", generator.height},
                {"width", generator.width},
                {"classes", generator.classes},
                {"modalities", generator.modalities},
                {"min_blobs", generator.min_blobs},
                {"max_blobs", generator.max_blobs},
                {"visibility", generator.visibility},
                {"noise_sd", generator.noise_sd},
                {"normalize", generator.normalize},
                {"train_count", generator.train_count},
                {"val_count", generator.val_count},
                {"test_count", generator.test_count},
                {"master_seed", generator.master_seed}};
    json mdl = {{"hidden", model_hidden}, {"conv_layers", model_conv_layers}};
    json trn = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"weight_decay", train.weight_decay},
                {"poly_power", train.poly_power},
                {"alpha", train.weights.alpha},
                {"beta", train.weights.beta},
                {"temperature", train.weights.temperature},
                {"kl_direction",
                 train.kl_direction == losses::KlDirection::AsPaper ? "as-paper" : "classic"},
                {"t_squared", train.t_squared},
                {"proto_mode",
                 train.proto_mode == proto::VariationMode::IntraInter ? "intra+inter"
                                                                      : "intra-only"}};
    json evl = {{"methods", methods}, {"modalities", modalities}};
    return json{{"generator", gen}, {"model", mdl}, {"train", trn}, {"eval", evl},
                {"seeds", seeds}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, {"generator", "model", "train", "eval", "seeds"}, "");
    ExperimentConfig c;

    if (j.contains("generator")) {
        const json& g = j.at("generator");
        check_keys(g,
                   {"height", "width", "classes", "modalities", "min_blobs", "max_blobs",
                    "visibility", "noise_sd", "normalize", "train_count", "val_count",
                    "test_count", "master_seed"},
                   "generator");
        read(g, "height", c.generator.height);
        read(g, "width", c.generator.width);
        read(g, "classes", c.generator.classes);
        read(g, "modalities", c.generator.modalities);
        read(g, "min_blobs", c.generator.min_blobs);
        read(g, "max_blobs", c.generator.max_blobs);
        read(g, "visibility", c.generator.visibility);
        read(g, "noise_sd", c.generator.noise_sd);
        read(g, "normalize", c.generator.normalize);
        read(g, "train_count", c.generator.train_count);
        read(g, "val_count", c.generator.val_count);
        read(g, "test_count", c.generator.test_count);
        read(g, "master_seed", c.generator.master_seed);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, {"hidden", "conv_layers"}, "model");
        read(m, "hidden", c.model_hidden);
        read(m, "conv_layers", c.model_conv_layers);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "learning_rate", "weight_decay", "poly_power",
                    "alpha", "beta", "temperature", "kl_direction", "t_squared", "proto_mode"},
                   "train");
        read(t, "epochs", c.train.epochs);
        read(t, "batch_size", c.train.batch_size);
        read(t, "learning_rate", c.train.learning_rate);
        read(t, "weight_decay", c.train.weight_decay);
        read(t, "poly_power", c.train.poly_power);
        read(t, "alpha", c.train.weights.alpha);
        read(t, "beta", c.train.weights.beta);
        read(t, "temperature", c.train.weights.temperature);
        if (t.contains("kl_direction")) {
            std::string v = t.at("kl_direction").get<std::string>();
            if (v == "as-paper")
                c.train.kl_direction = losses::KlDirection::AsPaper;
            else if (v == "classic")
                c.train.kl_direction = losses::KlDirection::Classic;
            else
                throw ConfigError("config: kl_direction must be 'as-paper' or 'classic'");
        }
        read(t, "t_squared", c.train.t_squared);
        if (t.contains("proto_mode")) {
            std::string v = t.at("proto_mode").get<std::string>();
            if (v == "intra+inter")
                c.train.proto_mode = proto::VariationMode::IntraInter;
            else if (v == "intra-only")
                c.train.proto_mode = proto::VariationMode::IntraOnly;
            else
                throw ConfigError("config: proto_mode must be 'intra+inter' or 'intra-only'");
        }
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, {"methods", "modalities"}, "eval");
        read(e, "methods", c.methods);
        read(e, "modalities", c.modalities);
    }
    read(j, "seeds", c.seeds);
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json file_doc;
    try {
        f >> file_doc;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config JSON in " + path + ": " + e.what());
    }

    // overlay the file onto explicit defaults, then apply flag overrides
    ExperimentConfig defaults;
    json doc = defaults.to_json();
    (void)from_json(file_doc);  // key/shape validation on the file itself
    doc.merge_patch(file_doc);
    for (const auto& o : overrides) apply_override(doc, o);
    return from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    json* cur = &doc;
    size_t pos = 0;
    while (true) {
        size_t dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos
                                                                    : dot - pos);
        if (!cur->is_object() || !cur->contains(key))
            throw ConfigError("override: unknown config key '" + path + "'");
        cur = &(*cur)[key];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    json parsed = json::parse(value, nullptr, false);
    *cur = parsed.is_discarded() ? json(value) : parsed;
}

}  // namespace config
}  // namespace protokd
