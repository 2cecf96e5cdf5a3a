#pragma once

#include "flowcast/graph_gru.hpp"
#include "flowcast/metrics.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace flowcast {

// Exact GP regression on latent vectors with the kernel
// k(z, z') = sigma_f * exp(-||z - z'||^2 / (2 gamma^2)). The kernel matrix
// carries a fixed jitter of jitter_factor * sigma_f on its diagonal.
struct GpConfig {
    int gamma_grid = 17;   // log-spaced over [1e-2, 1e2] * median pairwise distance
    int sigma_grid = 9;    // log-spaced over [1e-2, 1e2] * var(targets)
    int refine_rounds = 3; // coordinate bisection rounds after the grid
    double jitter_factor = 1e-6;
};

struct GpState {
    Eigen::MatrixXd latents; // T x d
    Eigen::VectorXd targets;
    double gamma = 1.0;
    double sigma_f = 1.0;
    double jitter = 0.0;
    Eigen::LLT<Eigen::MatrixXd> factorization; // of K + jitter I
    Eigen::VectorXd alpha;                     // (K + jitter I)^{-1} y
    double log_marginal = 0.0;
};

double gp_kernel(const Eigen::RowVectorXd& z1, const Eigen::RowVectorXd& z2, double gamma,
                 double sigma_f);

double gp_log_marginal(const Eigen::MatrixXd& latents, const Eigen::VectorXd& targets,
                       double gamma, double sigma_f, double jitter_factor);

GpState gp_fit(const Eigen::MatrixXd& latents, const Eigen::VectorXd& targets,
               const GpConfig& config = {});

// Posterior mean and variance: mu = k_*^T K^{-1} y,
// var = k(z,z) - k_*^T K^{-1} k_*.
std::pair<double, double> gp_predict(const GpState& state, const Eigen::RowVectorXd& z);

// [mu - 2 sigma, mu + 2 sigma] with the lower bound clamped at 0.
PredictionInterval gp_interval(const GpState& state, const Eigen::RowVectorXd& z);

// MC-dropout interval at step t: n_iter stochastic head evaluations with
// inverted-dropout masks before each head layer; the center is the
// deterministic prediction, sigma the sample standard deviation.
PredictionInterval dropout_interval(const ModelParameters& params, const GraphSpec& graph,
                                    const std::vector<Eigen::MatrixXd>& features, int t,
                                    double rate, int n_iter, std::uint64_t seed);

// One interval per requested step, seeded per step from `seed`.
std::vector<PredictionInterval> dropout_intervals(const ModelParameters& params,
                                                  const GraphSpec& graph,
                                                  const std::vector<Eigen::MatrixXd>& features,
                                                  const std::vector<int>& steps, double rate,
                                                  int n_iter, std::uint64_t seed);

} // namespace flowcast
