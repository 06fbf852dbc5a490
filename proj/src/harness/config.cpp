#include "stitch/harness/config.hpp"

#include <fstream>
#include <set>

#include "stitch/sha256.hpp"

namespace stitch::harness {

using nlohmann::json;

std::string to_string(ModerationArm a) {
    switch (a) {
        case ModerationArm::off: return "off";
        case ModerationArm::stub: return "stub";
        case ModerationArm::http: return "http";
    }
    throw ConfigError("unknown moderation arm");
}

ModerationArm moderation_arm_from_string(const std::string& s) {
    if (s == "off") return ModerationArm::off;
    if (s == "stub") return ModerationArm::stub;
    if (s == "http") return ModerationArm::http;
    throw ConfigError("unknown moderation arm: " + s);
}

std::string to_string(SafetyAssignment s) {
    switch (s) {
        case SafetyAssignment::none: return "none";
        case SafetyAssignment::groupA_safe_groupB_unsafe: return "groupA_safe_groupB_unsafe";
        case SafetyAssignment::groupB_safe_groupA_unsafe: return "groupB_safe_groupA_unsafe";
        case SafetyAssignment::all_danger_safe_control_unsafe: return "all_danger_safe_control_unsafe";
    }
    throw ConfigError("unknown safety assignment");
}

SafetyAssignment safety_assignment_from_string(const std::string& s) {
    if (s == "none") return SafetyAssignment::none;
    if (s == "groupA_safe_groupB_unsafe") return SafetyAssignment::groupA_safe_groupB_unsafe;
    if (s == "groupB_safe_groupA_unsafe") return SafetyAssignment::groupB_safe_groupA_unsafe;
    if (s == "all_danger_safe_control_unsafe") return SafetyAssignment::all_danger_safe_control_unsafe;
    throw ConfigError("unknown safety assignment: " + s);
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (factors.empty()) throw ConfigError("config: factors must be non-empty");
    for (int f : factors) corpus::SplitSpec{f}.validate();
    model.validate();
    pretrain.validate();
    if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
    if (!(train.learning_rate > 0)) throw ConfigError("config: train.learning_rate must be positive");
    if (eval_modes.empty()) throw ConfigError("config: eval_modes must be non-empty");
    for (int x : ambiguity_thresholds) {
        if (x < 0) throw ConfigError("config: ambiguity thresholds must be >= 0");
    }
    for (double lr : lr_sweep) {
        if (!(lr > 0)) throw ConfigError("config: lr_sweep entries must be positive");
    }
    if (moderation_arm == ModerationArm::http && moderation_endpoint.empty()) {
        throw ConfigError("config: http moderation arm needs an endpoint");
    }
    if (safety_assignment != SafetyAssignment::none && corpus.hazard_classes == 0) {
        throw ConfigError("config: safety assignments need hazard classes in the corpus");
    }
}

json ExperimentConfig::to_json() const {
    json j;
    j["name"] = name;
    j["corpus"] = {{"classes", corpus.n_classes},
                   {"images_per_class", corpus.images_per_class},
                   {"side_px", corpus.side_px},
                   {"seed", corpus.seed},
                   {"hazard_classes", corpus.hazard_classes}};
    j["factors"] = factors;
    j["seeds"] = seeds;
    j["model"] = model.to_json();
    j["pretrain"] = pretrain.to_json();
    j["train"] = train.to_json();
    std::vector<std::string> modes;
    for (auto m : eval_modes) modes.push_back(eval::to_string(m));
    j["eval_modes"] = modes;
    j["positional_template"] = positional_template;
    j["moderation"] = {{"arm", to_string(moderation_arm)},
                       {"endpoint", moderation_endpoint},
                       {"rpm", moderation_rpm},
                       {"stub_pixel_threshold", stub_pixel_threshold}};
    j["safety_assignment"] = to_string(safety_assignment);
    j["ambiguity_thresholds"] = ambiguity_thresholds;
    j["lr_sweep"] = lr_sweep;
    j["out_dir"] = out_dir.string();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("corpus")) {
        const json& cj = j["corpus"];
        c.corpus.n_classes = cj.value("classes", c.corpus.n_classes);
        c.corpus.images_per_class = cj.value("images_per_class", c.corpus.images_per_class);
        c.corpus.side_px = cj.value("side_px", c.corpus.side_px);
        c.corpus.seed = cj.value("seed", c.corpus.seed);
        c.corpus.hazard_classes = cj.value("hazard_classes", c.corpus.hazard_classes);
    }
    if (j.contains("factors")) c.factors = j["factors"].get<std::vector<int>>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j["model"]);
    if (j.contains("pretrain")) c.pretrain = model::TrainConfig::from_json(j["pretrain"]);
    if (j.contains("train")) {
        // epochs <= 0 means "per-factor default", which validate() rejects;
        // read fields individually.
        const json& tj = j["train"];
        c.train.batch_size = tj.value("batch_size", c.train.batch_size);
        c.train.learning_rate = tj.value("learning_rate", c.train.learning_rate);
        c.train.epochs = tj.value("epochs", c.train.epochs);
        c.train.seed = tj.value("seed", c.train.seed);
        c.train.high_precision_check = tj.value("high_precision_check", c.train.high_precision_check);
    }
    if (j.contains("eval_modes")) {
        c.eval_modes.clear();
        for (const auto& m : j["eval_modes"]) c.eval_modes.push_back(eval::eval_mode_from_string(m));
    }
    c.positional_template = j.value("positional_template", c.positional_template);
    if (j.contains("moderation")) {
        const json& mj = j["moderation"];
        c.moderation_arm = moderation_arm_from_string(mj.value("arm", "off"));
        c.moderation_endpoint = mj.value("endpoint", "");
        c.moderation_rpm = mj.value("rpm", c.moderation_rpm);
        c.stub_pixel_threshold = mj.value("stub_pixel_threshold", c.stub_pixel_threshold);
    }
    c.safety_assignment = safety_assignment_from_string(j.value("safety_assignment", "none"));
    if (j.contains("ambiguity_thresholds")) {
        c.ambiguity_thresholds = j["ambiguity_thresholds"].get<std::vector<int>>();
    }
    if (j.contains("lr_sweep")) c.lr_sweep = j["lr_sweep"].get<std::vector<double>>();
    c.out_dir = j.value("out_dir", c.out_dir.string());
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string ExperimentConfig::hash() const {
    json j = to_json();
    j.erase("out_dir");
    j.erase("name");
    return sha256_hex(j.dump());
}

}  // namespace stitch::harness
