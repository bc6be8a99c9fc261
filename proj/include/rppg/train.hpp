#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rppg/augment.hpp"
#include "rppg/model.hpp"
#include "rppg/stmap.hpp"

namespace rppg::train {

struct TrainConfig {
    double lr0 = 0.1;
    std::size_t lr_halve_every = 10;
    std::size_t max_epochs = 100;
    double beta = 0.1;
    std::size_t batch_size = 32;
    augment::BlendMode blend = augment::BlendMode::inter;
    std::uint64_t seed = 7;
    double momentum = 0.0;  // plain SGD by default
    bool early_stop = true; // stop after 5 consecutive perfect validation epochs
    model::ModelConfig model;
    stmap::ClipSpec clip;

    void validate() const;
};

// lr0 * 0.5^floor(epoch / lr_halve_every)
double lr_schedule(const TrainConfig& config, std::size_t epoch);

struct EpochStats {
    std::size_t epoch;
    double lr;
    double loss_ce;  // mean blended cross-entropy term per sample
    double loss_rho; // mean adjacency penalty per sample (unweighted by beta)
    double val_acc;  // validation group accuracy
};

struct TrainResult {
    model::ModelParams best_params;  // highest validation accuracy, earliest epoch
    model::ModelParams final_params; // after the last epoch run
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
};

// Seeded-shuffled epochs over the anchor groups, per-sample blend partner
// draw, batch-averaged gradients, SGD with the halving schedule. Groups must
// already be normalized. Aborts with a diagnostic naming epoch and step if a
// loss or gradient goes non-finite.
TrainResult train(const TrainConfig& config,
                  const std::vector<stmap::MapGroup>& train_groups,
                  const std::vector<stmap::MapGroup>& val_groups);

// Validation-style group accuracy of params over groups (argmax of the mean
// per-step softmax vs label_t1; ties to the lowest class index).
double group_accuracy(const model::ModelParams& params,
                      const std::vector<stmap::MapGroup>& groups);

void write_history(const std::filesystem::path& path,
                   const std::vector<EpochStats>& history);

} // namespace rppg::train
