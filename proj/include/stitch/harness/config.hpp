#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stitch/corpus/synth.hpp"
#include "stitch/eval/score.hpp"
#include "stitch/model/config.hpp"

namespace stitch::harness {

enum class ModerationArm { off, stub, http };
enum class SafetyAssignment { none, groupA_safe_groupB_unsafe, groupB_safe_groupA_unsafe, all_danger_safe_control_unsafe };

std::string to_string(ModerationArm a);
std::string to_string(SafetyAssignment s);
ModerationArm moderation_arm_from_string(const std::string& s);
SafetyAssignment safety_assignment_from_string(const std::string& s);

struct ExperimentConfig {
    std::string name = "experiment";
    corpus::SynthSpec corpus;
    std::vector<int> factors{2};
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    model::ModelConfig model;

    // Stage-0 caption pretraining (image -> reference) shared by all cells.
    model::TrainConfig pretrain{/*batch_size=*/8, /*learning_rate=*/1e-3, /*epochs=*/300, /*seed=*/0};

    // Stage-1 finetuning; epochs <= 0 selects the per-factor default
    // (15 at f=1, 5 otherwise).
    model::TrainConfig train{/*batch_size=*/8, /*learning_rate=*/3e-4, /*epochs=*/0, /*seed=*/0};

    std::vector<eval::EvalMode> eval_modes{eval::EvalMode::image, eval::EvalMode::reference};
    bool positional_template = false;  // finetune_id_positional instead of finetune_id

    ModerationArm moderation_arm = ModerationArm::off;
    std::string moderation_endpoint;
    int moderation_rpm = 120;
    int stub_pixel_threshold = 12;

    SafetyAssignment safety_assignment = SafetyAssignment::none;
    std::vector<int> ambiguity_thresholds{0};
    std::vector<double> lr_sweep;  // empty: use train.learning_rate only

    std::filesystem::path out_dir = "runs";

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);

    // Hash of the protocol (out_dir and name excluded): identical settings
    // land in the same run-store slot regardless of where results go.
    std::string hash() const;

    int epochs_for_factor(int factor) const {
        return train.epochs > 0 ? train.epochs : model::TrainConfig::default_epochs_for_factor(factor);
    }
    std::vector<double> effective_lrs() const {
        return lr_sweep.empty() ? std::vector<double>{train.learning_rate} : lr_sweep;
    }
};

}  // namespace stitch::harness
