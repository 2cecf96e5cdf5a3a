#include "flowcast/gp.hpp"

#include "flowcast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace flowcast {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& a) {
    const Eigen::VectorXd norms = a.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * a * a.transpose()).colwise() + norms;
    d2.rowwise() += norms.transpose();
    return d2.cwiseMax(0.0);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& d2, double gamma, double sigma_f,
                              double jitter) {
    Eigen::MatrixXd k =
        (sigma_f * (-d2.array() / (2.0 * gamma * gamma)).exp()).matrix();
    k.diagonal().array() += jitter;
    return k;
}

double log_marginal_from(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, bool& ok) {
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) {
        ok = false;
        return -std::numeric_limits<double>::infinity();
    }
    ok = true;
    const Eigen::VectorXd alpha = llt.solve(y);
    const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
    const double t = static_cast<double>(y.size());
    return -0.5 * y.dot(alpha) - log_det_half - 0.5 * t * kLog2Pi;
}

double median_pairwise_distance(const Eigen::MatrixXd& d2) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(d2.rows()) * (d2.rows() - 1) / 2);
    for (Eigen::Index i = 0; i < d2.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < d2.cols(); ++j) {
            dists.push_back(std::sqrt(d2(i, j)));
        }
    }
    if (dists.empty()) return 1.0;
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid;
}

} // namespace

double gp_kernel(const Eigen::RowVectorXd& z1, const Eigen::RowVectorXd& z2, double gamma,
                 double sigma_f) {
    const double d2 = (z1 - z2).squaredNorm();
    return sigma_f * std::exp(-d2 / (2.0 * gamma * gamma));
}

double gp_log_marginal(const Eigen::MatrixXd& latents, const Eigen::VectorXd& targets,
                       double gamma, double sigma_f, double jitter_factor) {
    bool ok = false;
    return log_marginal_from(
        kernel_matrix(pairwise_sq_dist(latents), gamma, sigma_f, jitter_factor * sigma_f),
        targets, ok);
}

GpState gp_fit(const Eigen::MatrixXd& latents, const Eigen::VectorXd& targets,
               const GpConfig& config) {
    if (latents.rows() < 2) throw std::runtime_error("gp_fit: need at least 2 training points");
    if (latents.rows() != targets.size()) throw std::runtime_error("gp_fit: latent/target mismatch");
    if (!latents.allFinite() || !targets.allFinite()) {
        throw std::runtime_error("gp_fit: non-finite training data");
    }

    const Eigen::MatrixXd d2 = pairwise_sq_dist(latents);
    double gamma_center = median_pairwise_distance(d2);
    if (gamma_center <= 0.0) gamma_center = 1.0;
    double sigma_center = (targets.array() - targets.mean()).square().mean();
    if (sigma_center <= 0.0) sigma_center = 1.0;

    double best_gamma = gamma_center;
    double best_sigma = sigma_center;
    double best_lml = -std::numeric_limits<double>::infinity();
    auto consider = [&](double gamma, double sigma_f) {
        bool ok = false;
        const double lml = log_marginal_from(
            kernel_matrix(d2, gamma, sigma_f, config.jitter_factor * sigma_f), targets, ok);
        if (ok && lml > best_lml) {
            best_lml = lml;
            best_gamma = gamma;
            best_sigma = sigma_f;
        }
    };

    constexpr double kDecades = 4.0; // [1e-2, 1e2] around each center
    for (int i = 0; i < config.gamma_grid; ++i) {
        const double gexp = -kDecades / 2.0 + kDecades * i / (config.gamma_grid - 1);
        for (int j = 0; j < config.sigma_grid; ++j) {
            const double sexp = -kDecades / 2.0 + kDecades * j / (config.sigma_grid - 1);
            consider(gamma_center * std::pow(10.0, gexp), sigma_center * std::pow(10.0, sexp));
        }
    }

    double gamma_step = kDecades / (config.gamma_grid - 1);
    double sigma_step = kDecades / (config.sigma_grid - 1);
    for (int round = 0; round < config.refine_rounds; ++round) {
        gamma_step /= 2.0;
        sigma_step /= 2.0;
        consider(best_gamma * std::pow(10.0, gamma_step), best_sigma);
        consider(best_gamma * std::pow(10.0, -gamma_step), best_sigma);
        consider(best_gamma, best_sigma * std::pow(10.0, sigma_step));
        consider(best_gamma, best_sigma * std::pow(10.0, -sigma_step));
    }
    if (!std::isfinite(best_lml)) {
        throw std::runtime_error("gp_fit: no hyperparameter candidate factorized");
    }

    GpState state;
    state.latents = latents;
    state.targets = targets;
    state.gamma = best_gamma;
    state.sigma_f = best_sigma;
    state.jitter = config.jitter_factor * best_sigma;
    state.log_marginal = best_lml;

    for (int attempt = 0;; ++attempt) {
        state.factorization.compute(kernel_matrix(d2, state.gamma, state.sigma_f, state.jitter));
        if (state.factorization.info() == Eigen::Success) break;
        if (attempt >= 10) {
            throw std::runtime_error("gp_fit: factorization failed after jitter escalation");
        }
        state.jitter *= 10.0;
    }
    state.alpha = state.factorization.solve(targets);
    return state;
}

std::pair<double, double> gp_predict(const GpState& state, const Eigen::RowVectorXd& z) {
    if (z.size() != state.latents.cols()) {
        throw std::runtime_error("gp_predict: latent dimension mismatch");
    }
    const Eigen::Index t = state.latents.rows();
    Eigen::VectorXd k_star(t);
    for (Eigen::Index i = 0; i < t; ++i) {
        k_star[i] = gp_kernel(state.latents.row(i), z, state.gamma, state.sigma_f);
    }
    const double mu = k_star.dot(state.alpha);
    const Eigen::VectorXd v = state.factorization.matrixL().solve(k_star);
    const double var = state.sigma_f - v.squaredNorm();
    return {mu, var};
}

PredictionInterval gp_interval(const GpState& state, const Eigen::RowVectorXd& z) {
    const auto [mu, var] = gp_predict(state, z);
    const double sigma = std::sqrt(std::max(0.0, var));
    PredictionInterval pi;
    pi.lb = std::max(0.0, mu - 2.0 * sigma);
    pi.ub = std::max(0.0, mu + 2.0 * sigma);
    pi.center = std::max(0.0, mu);
    return pi;
}

namespace {

double masked_head(const ModelParameters& params, const Eigen::RowVectorXd& latent,
                   double keep_prob, Rng& rng) {
    const double scale = 1.0 / keep_prob;
    Eigen::RowVectorXd z = latent;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        z[j] *= rng.uniform() < keep_prob ? scale : 0.0;
    }
    Eigen::RowVectorXd l1 = z * params.head_w1 + params.head_b1;
    for (Eigen::Index j = 0; j < l1.size(); ++j) {
        if (l1[j] < 0.0) l1[j] *= params.leaky_slope;
        l1[j] *= rng.uniform() < keep_prob ? scale : 0.0;
    }
    const double raw = l1.dot(params.head_w2) + params.head_b2;
    return std::max(0.0, params.target_shift + params.target_scale * raw);
}

PredictionInterval dropout_interval_at(const ModelParameters& params, const ForwardResult& fwd,
                                       int t, double rate, int n_iter, std::uint64_t seed) {
    Rng rng(seed);
    const double keep_prob = 1.0 - rate;
    const Eigen::RowVectorXd latent = fwd.latents.row(t);

    Eigen::VectorXd samples(n_iter);
    for (int it = 0; it < n_iter; ++it) {
        samples[it] = masked_head(params, latent, keep_prob, rng);
    }
    const double mean = samples.mean();
    const double sigma =
        std::sqrt((samples.array() - mean).square().sum() / static_cast<double>(n_iter - 1));

    const double center = fwd.predictions[t];
    PredictionInterval pi;
    pi.lb = std::max(0.0, center - 2.0 * sigma);
    pi.ub = center + 2.0 * sigma;
    pi.center = center;
    return pi;
}

void check_dropout_args(double rate, int n_iter) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::runtime_error("dropout: rate must be in [0, 1)");
    }
    if (n_iter < 2) throw std::runtime_error("dropout: need at least 2 iterations");
}

} // namespace

PredictionInterval dropout_interval(const ModelParameters& params, const GraphSpec& graph,
                                    const std::vector<Eigen::MatrixXd>& features, int t,
                                    double rate, int n_iter, std::uint64_t seed) {
    check_dropout_args(rate, n_iter);
    if (t < 0 || t >= static_cast<int>(features.size())) {
        throw std::runtime_error("dropout_interval: step out of range");
    }
    const ForwardResult fwd = forward(params, graph, features);
    return dropout_interval_at(params, fwd, t, rate, n_iter, seed);
}

std::vector<PredictionInterval> dropout_intervals(const ModelParameters& params,
                                                  const GraphSpec& graph,
                                                  const std::vector<Eigen::MatrixXd>& features,
                                                  const std::vector<int>& steps, double rate,
                                                  int n_iter, std::uint64_t seed) {
    check_dropout_args(rate, n_iter);
    const ForwardResult fwd = forward(params, graph, features);
    std::vector<PredictionInterval> out;
    out.reserve(steps.size());
    for (int t : steps) {
        if (t < 0 || t >= static_cast<int>(features.size())) {
            throw std::runtime_error("dropout_intervals: step out of range");
        }
        out.push_back(dropout_interval_at(params, fwd, t, rate, n_iter,
                                          mix_seed(seed, static_cast<std::uint64_t>(t))));
    }
    return out;
}

} // namespace flowcast
