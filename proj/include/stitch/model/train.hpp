#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stitch/model/transformer.hpp"

namespace stitch::model {

struct Checkpoint {
    ModelConfig config;
    TrainConfig train_config;  // echo of the run's hyperparameters
    long step = 0;
    std::map<std::string, std::vector<double>> curves;  // "train_loss" plus caller metrics
    std::vector<double> values;  // flat parameter buffer
};

// Called after each epoch; may record eval metrics into the curves.
using EpochCallback =
    std::function<void(int epoch, const Model& model, std::map<std::string, std::vector<double>>& curves)>;

// Adam finetuning with the loss averaged over target-span tokens only.
// Data order is reshuffled per epoch from the config seed; with a fixed
// (seed, config, data order) the loss curve is bitwise reproducible.
Checkpoint train(Model& model, const std::vector<corpus::RenderedSample>& samples, const TrainConfig& tc,
                 const EpochCallback& on_epoch = {});

Checkpoint snapshot(const Model& model, const TrainConfig& tc);

}  // namespace stitch::model
