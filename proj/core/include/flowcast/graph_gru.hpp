#pragma once

#include "flowcast/dataset.hpp"
#include "flowcast/water_balance.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowcast {

// Graph-convolutional GRU with a two-layer prediction head. Weight shapes:
// input maps m x h, recurrent maps h x h, biases 1 x h, head h x h_mid and
// h_mid x 1. The input/target scalers are data statistics captured at
// training time, not learned coefficients; they default to the identity.
struct ModelParameters {
    Eigen::MatrixXd w_r, w_z, w_h;
    Eigen::MatrixXd u_r, u_z, u_h;
    Eigen::RowVectorXd b_r, b_z, b_h;
    Eigen::MatrixXd head_w1;
    Eigen::RowVectorXd head_b1;
    Eigen::VectorXd head_w2;
    double head_b2 = 0.0;
    double leaky_slope = 0.01;

    Eigen::RowVectorXd input_shift, input_scale;
    double target_shift = 0.0;
    double target_scale = 1.0;

    int input_dim() const { return static_cast<int>(w_r.rows()); }
    int hidden_dim() const { return static_cast<int>(w_r.cols()); }
    int head_dim() const { return static_cast<int>(head_w1.cols()); }
    void validate() const;
};

// Named view of one learnable coefficient block as a flat span. Used by the
// optimizer, the checkpoint writer, and finite-difference tests.
struct CoeffSpan {
    const char* name;
    double* data;
    std::ptrdiff_t size;
};

std::vector<CoeffSpan> coefficient_spans(ModelParameters& params);

// Fresh parameters with every coefficient uniform in [-1/sqrt(h), 1/sqrt(h)]
// and identity scalers.
ModelParameters init_parameters(int input_dim, int hidden_dim, int head_dim,
                                std::uint64_t seed);

ModelParameters zeros_like(const ModelParameters& params);

void save_checkpoint(const ModelParameters& params, const std::filesystem::path& file);
ModelParameters load_checkpoint(const std::filesystem::path& file);

// Rows rescaled to sum to 1; all-zero rows stay zero.
Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency);

// One recurrent update. `adjacency_norm` must already be row-normalized and
// `x_t` already standardized; both conditions are the caller's contract.
Eigen::MatrixXd gru_step(const ModelParameters& params, const Eigen::MatrixXd& adjacency_norm,
                         const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& h_prev);

struct ForwardResult {
    Eigen::MatrixXd latents;     // T x h, outlet row of each hidden state
    Eigen::VectorXd predictions; // T, non-negative
};

// Unrolls the recurrence from H = 0 and applies the head to the outlet row
// at every step. No constraint handling.
ForwardResult forward(const ModelParameters& params, const GraphSpec& graph,
                      const std::vector<Eigen::MatrixXd>& features);

enum class ConstraintMode { plain, penalty, projection };
enum class LossKind { squared, absolute };

ConstraintMode parse_constraint_mode(const std::string& name);
std::string to_string(ConstraintMode mode);

// forward + annual-budget projection over complete water years when the
// mode requires it. This is the inference path.
ForwardResult predict(const ModelParameters& params, const WatershedSeries& data,
                      ConstraintMode mode);

struct LossSpec {
    LossKind kind = LossKind::squared;
    ConstraintMode mode = ConstraintMode::plain;
    double lambda_penalty = 0.1;
};

struct LossGradient {
    double total = 0.0;
    double main_term = 0.0;
    double penalty_term = 0.0;
    Eigen::VectorXd predictions; // after projection in projection mode
    ModelParameters grad;        // coefficient blocks only; scalers untouched
};

// Objective: (1/T) sum_t w_t * l((yhat_t - y_t) / target_scale) plus, in
// penalty mode, lambda * mean over complete water years of
// max(0, total - budget) / target_scale. Gradients are exact reverse-mode
// derivatives of that objective, including the projection branch.
LossGradient loss_and_gradient(const ModelParameters& params, const WatershedSeries& data,
                               const Eigen::VectorXd& weights, const LossSpec& spec);

// Loss value only, same objective (used for reporting).
double training_loss(const ModelParameters& params, const WatershedSeries& data,
                     const Eigen::VectorXd& weights, const LossSpec& spec);

} // namespace flowcast
