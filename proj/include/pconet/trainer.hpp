#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pconet/checkpoint.hpp"
#include "pconet/data.hpp"
#include "pconet/metrics.hpp"
#include "pconet/model.hpp"
#include "pconet/optim.hpp"

namespace pconet {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double learning_rate = 1e-5;
    std::uint64_t seed = 0;
    bool augment = true;
    std::filesystem::path train_root;
    std::filesystem::path val_root;  // empty: split train_root
    double split_ratio = 0.8;
    std::filesystem::path log_path;  // empty: no CSV
    std::size_t prefetch_depth = 2;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

/// Non-finite loss or gradient during training.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(std::uint64_t epoch, std::uint64_t step, const std::string& why);
    std::uint64_t epoch() const { return epoch_; }
    std::uint64_t step() const { return step_; }

private:
    std::uint64_t epoch_, step_;
};

struct Evaluation {
    double loss = 0.0;
    ConfusionMatrix confusion;   // argmax decisions
    ThresholdCounts thresholded;  // per-neuron decisions at 0.5
    std::vector<std::size_t> predictions;

    double accuracy() const;
};

/// Eval-mode pass over `source` in order.
Evaluation evaluate(Model& model, const ImageSource& source, std::size_t batch_size = 16,
                    std::size_t prefetch_depth = 2);

struct TrainingLog {
    std::vector<EpochRow> rows;
};

/// Mini-batch Adam on binary cross-entropy. Epochs are numbered from 1; epoch e
/// shuffles with (seed, e). Train metrics are accumulated over the epoch's
/// steps in training mode, validation metrics come from an eval-mode pass.
class Trainer {
public:
    /// `resume` restores optimizer moments and continues after resume->epoch.
    Trainer(Model& model, const ImageSource& train, const ImageSource& validation, TrainConfig config,
            std::optional<TrainingState> resume = std::nullopt);

    /// One epoch; throws TrainingAborted on a non-finite loss or gradient.
    EpochRow run_epoch(std::uint64_t epoch);

    /// Runs the remaining epochs, appending each row to the CSV log when one is
    /// configured. `on_epoch` may return false to stop early.
    TrainingLog train(const std::function<bool(const EpochRow&)>& on_epoch = {});

    /// Optimizer state for a resumable checkpoint.
    TrainingState state() const;
    std::uint64_t completed_epochs() const { return completed_; }
    Adam<float>& optimizer() { return adam_; }

private:
    Model& model_;
    const ImageSource& train_;
    const ImageSource& validation_;
    TrainConfig config_;
    Adam<float> adam_;
    std::uint64_t completed_ = 0;
    std::uint64_t step_ = 0;
};

}  // namespace pconet
