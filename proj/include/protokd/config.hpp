#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "protokd/data.hpp"
#include "protokd/eval.hpp"
#include "protokd/model.hpp"
#include "protokd/trainer.hpp"

namespace protokd {
namespace config {

// One JSON document drives every command; unknown keys are rejected and all
// defaults are explicit after load.
struct ExperimentConfig {
    data::GeneratorConfig generator = data::GeneratorConfig::defaults();
    int model_hidden = 8;
    int model_conv_layers = 2;
    trainer::TrainConfig train;
    std::vector<std::string> methods = {"unimodal", "+kd", "+proto", "protokd"};
    std::vector<int> modalities = {0};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    void validate() const;

    model::SegNetConfig teacher_model_config() const;
    model::SegNetConfig student_model_config() const;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    // Reads the file, overlays it on defaults, applies dotted-path overrides
    // (e.g. "train.alpha=5"), validates.
    static ExperimentConfig load(const std::string& path,
                                 const std::vector<std::string>& overrides = {});
};

// "a.b.c=value" applied onto a JSON document; value parsed as JSON if
// possible, else taken as a string. Unknown paths are rejected.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace config
}  // namespace protokd
