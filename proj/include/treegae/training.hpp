#pragma once

#include "treegae/graph.hpp"
#include "treegae/model.hpp"
#include "treegae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace treegae {

struct TrainConfig {
    double learning_rate = 0.005;
    std::size_t batch_size = 4;
    std::size_t epochs = 500;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    double loss_epsilon = 1e-8;

    void check() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Dice loss 1 - 2 sum(A a) / (sum(A^2) + sum(a^2) + eps) over off-diagonal
/// entries. The decoder pins a_ii = 1 while A_ii = 0, so the diagonal is
/// excluded from all three sums.
Var dice_loss(const Matrix& target, Var soft_adjacency, double loss_epsilon = 1e-8);

/// Value-only dice loss.
double dice_loss(const Matrix& target, const Matrix& soft_adjacency, double loss_epsilon = 1e-8);

/// First and second moment estimates, shaped like the parameters.
struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelParams& params);

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update; increments state.step first.
/// Uses the folded step size lr * sqrt(1 - b2^t) / (1 - b1^t) with epsilon
/// added to the raw sqrt(v).
void adam_step(ModelParams& params, const ModelParams& gradients, AdamState& state, const TrainConfig& config);

/// Loss and weight gradients of one instance.
struct LossAndGrad {
    double loss = 0.0;
    ModelParams gradients;
};

LossAndGrad loss_and_gradient(const RefinementInstance& instance, const ModelParams& params,
                              const ModelConfig& model_config, double loss_epsilon);

/// Mean per-graph soft dice score (1 - dice loss) of the model over a set.
double soft_dice_score(std::span<const RefinementInstance> instances, const ModelParams& params,
                       const ModelConfig& model_config, double loss_epsilon = 1e-8);

/// Mean per-graph dice loss.
double mean_dice_loss(std::span<const RefinementInstance> instances, const ModelParams& params,
                      const ModelConfig& model_config, double loss_epsilon = 1e-8);

/// Dataset order for a given epoch. Depends only on (seed, epoch) so a resumed
/// run shuffles exactly as an uninterrupted one.
std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed, std::size_t epoch);

/// Optimizer state that survives between epochs.
struct TrainState {
    ModelParams params;
    AdamState adam;
    std::size_t epoch = 0; // completed epochs

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct EpochResult {
    double mean_loss = 0.0;
    std::size_t optimizer_steps = 0;
};

/// Runs epoch `state.epoch + 1`: shuffles, batches, one Adam step per batch.
EpochResult train_epoch(std::span<const RefinementInstance> dataset, TrainState& state,
                        const ModelConfig& model_config, const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_train_loss = 0.0;
    std::optional<double> validation_dice;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    std::optional<std::size_t> best_epoch;
    std::optional<double> best_validation_dice;
    std::optional<std::filesystem::path> checkpoint_path;
};

struct TrainResult {
    ModelParams best_params;
    TrainState final_state;
    TrainHistory history;
};

/// Trains until `config.epochs` epochs have completed in total. `initial`
/// resumes from a saved state (params, moments, epoch); pass a state with
/// epoch 0 and zero moments to fine-tune from pre-trained weights. When
/// `checkpoint_path` is set, the best-validation state is written there.
TrainResult train(std::span<const RefinementInstance> train_set, std::span<const RefinementInstance> validation_set,
                  const ModelConfig& model_config, const TrainConfig& config,
                  std::optional<TrainState> initial = std::nullopt,
                  std::optional<std::filesystem::path> checkpoint_path = std::nullopt);

/// CSV log: epoch,mean_train_loss,val_dice,seconds.
std::string history_csv(const TrainHistory& history);

} // namespace treegae
