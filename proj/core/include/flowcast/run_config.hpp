#pragma once

#include "flowcast/dataset.hpp"
#include "flowcast/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowcast {

// Flat sectioned key = value configuration shared by every subcommand.
// Unknown sections or keys are hard errors.
struct RunConfig {
    // [data]
    std::string source = "synthetic"; // or "files"
    std::filesystem::path dataset_dir;
    int n_nodes = 8;
    int n_years = 35;
    SplitSpec split{20, 6, 9};

    // [model]
    int hidden = 256;
    int head_hidden = 0; // 0 means same as hidden
    double leaky_slope = 0.01;

    // [train]
    std::string mode = "plain"; // plain | pg | crl
    bool iw = false;
    int epochs = 400;
    double learning_rate = 0.001;
    double weight_decay = 0.0005;
    double lambda_wbe = 0.1;
    std::string loss = "squared"; // squared | absolute
    bool standardize = true;

    // [iw]
    int iw_k = 10;
    double iw_a = 1.0;
    double iw_b = 0.0; // 0 means the default rule a + 1/ln K + 0.5
    int iw_refresh = 1;

    // [uq]
    double dropout_rate = 0.2;
    int dropout_iters = 30;

    // [bounds]
    std::vector<double> bounds_a{0.5, 1.0, 2.0, 5.0, 100.0};
    std::vector<int> bounds_k{2, 5, 10};
    double bounds_b_offset = 1.0; // b = a + 1/ln K + offset
    std::vector<double> bounds_delta{0.05, 0.1};
    std::vector<long> bounds_t{125, 1000};

    // [run]
    std::uint64_t seed = 0;
    std::filesystem::path checkpoint;

    void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& file);

// Fully resolved round-trippable form, written into every run directory.
std::string serialize_run_config(const RunConfig& config);

TrainConfig to_train_config(const RunConfig& config);

} // namespace flowcast
