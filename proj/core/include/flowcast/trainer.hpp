#pragma once

#include "flowcast/dataset.hpp"
#include "flowcast/graph_gru.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace flowcast {

struct TrainConfig {
    int epochs = 400;
    double learning_rate = 0.001;
    double weight_decay = 0.0005;
    int hidden = 256;
    int head_hidden = 0; // 0 means same as hidden
    double leaky_slope = 0.01;
    LossKind loss = LossKind::squared;
    ConstraintMode mode = ConstraintMode::plain;
    double lambda_penalty = 0.1;
    bool iw = false;
    int iw_k = 10;
    double iw_a = 1.0;
    double iw_b = 0.0; // 0 means the default rule a + 1/ln K + 0.5
    int iw_refresh = 1;
    bool standardize = true;
    std::uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_nnse = 0.0; // -1 when undefined
    int iw_nonempty_bins = 0;
    double iw_max_weight = 0.0;
};

struct TrainResult {
    ModelParameters params; // best-validation snapshot
    int best_epoch = -1;
    double best_val_nnse = 0.0;
    std::vector<EpochLog> log;
};

// Full-batch gradient descent with weight decay. Scalers are fitted on the
// training series before the first epoch. The returned parameters are the
// snapshot with the best validation NNSE over all epochs.
TrainResult train_model(const WatershedSeries& train_data, const WatershedSeries& val_data,
                        const TrainConfig& config);

void write_training_log(const std::vector<EpochLog>& log, int k_groups,
                        const std::filesystem::path& file);

} // namespace flowcast
