#include "flowcast/gp.hpp"

#include "flowcast/dataset.hpp"
#include "flowcast/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

using namespace flowcast;

namespace {

Eigen::MatrixXd random_latents(Rng& rng, int rows, int cols, double scale = 1.0) {
    Eigen::MatrixXd z(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            z(i, j) = rng.normal(0.0, scale);
        }
    }
    return z;
}

// Like random_latents, but redraws rows that land within min_sep of an
// earlier row. Near-coincident inputs push the Gram matrix towards the
// jitter floor, where two exact factorizations legitimately disagree at
// the oracle tolerance; coincident inputs get their own test below.
Eigen::MatrixXd separated_latents(Rng& rng, int rows, int cols, double min_sep) {
    Eigen::MatrixXd z(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (int j = 0; j < cols; ++j) z(i, j) = rng.normal(0.0, 1.0);
            bool ok = true;
            for (int p = 0; p < i && ok; ++p) {
                if ((z.row(i) - z.row(p)).norm() < min_sep) ok = false;
            }
            if (ok) break;
        }
    }
    return z;
}

// Posterior mean and variance by dense inversion, bypassing the Cholesky
// path entirely.
std::pair<double, double> dense_predict(const Eigen::MatrixXd& latents,
                                        const Eigen::VectorXd& targets, double gamma,
                                        double sigma_f, double jitter,
                                        const Eigen::RowVectorXd& z) {
    const int t = static_cast<int>(latents.rows());
    Eigen::MatrixXd k(t, t);
    Eigen::VectorXd k_star(t);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < t; ++j) {
            k(i, j) = gp_kernel(latents.row(i), latents.row(j), gamma, sigma_f);
        }
        k(i, i) += jitter;
        k_star[i] = gp_kernel(latents.row(i), z, gamma, sigma_f);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
    const double mu = k_star.dot(lu.solve(targets));
    const double var = sigma_f - k_star.dot(lu.solve(k_star));
    return {mu, var};
}

} // namespace

TEST_CASE("kernel value and symmetry") {
    Eigen::RowVectorXd a(2), b(2);
    a << 0.0, 0.0;
    b << 3.0, 4.0; // distance 5
    CHECK(gp_kernel(a, a, 1.0, 2.0) == 2.0);
    CHECK(gp_kernel(a, b, 5.0, 2.0) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(gp_kernel(a, b, 5.0, 2.0) == gp_kernel(b, a, 5.0, 2.0));
}

TEST_CASE("posterior matches a dense solve on random instances") {
    Rng rng(808);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int t = rng.uniform_int(3, 20);
        const int d = rng.uniform_int(1, 4);
        const Eigen::MatrixXd latents = separated_latents(rng, t, d, 0.3);
        Eigen::VectorXd targets(t);
        for (int i = 0; i < t; ++i) targets[i] = rng.uniform(0.0, 10.0);
        const double gamma = rng.uniform(0.4, 1.5);
        const double sigma_f = rng.uniform(0.5, 5.0);

        GpState state;
        state.latents = latents;
        state.targets = targets;
        state.gamma = gamma;
        state.sigma_f = sigma_f;
        state.jitter = 1e-6 * sigma_f;
        Eigen::MatrixXd k(t, t);
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < t; ++j) {
                k(i, j) = gp_kernel(latents.row(i), latents.row(j), gamma, sigma_f);
            }
            k(i, i) += state.jitter;
        }
        state.factorization.compute(k);
        state.alpha = state.factorization.solve(targets);

        const Eigen::RowVectorXd z = random_latents(rng, 1, d).row(0);
        const auto [mu, var] = gp_predict(state, z);
        const auto [mu_ref, var_ref] =
            dense_predict(latents, targets, gamma, sigma_f, state.jitter, z);
        worst = std::max(worst, std::abs(mu - mu_ref));
        worst = std::max(worst, std::abs(var - var_ref));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("two-point closed form") {
    // K = [[s+j, c], [c, s+j]], k* = [k1, k2]; verify against the 2x2 inverse.
    Eigen::MatrixXd latents(2, 1);
    latents << 0.0, 1.0;
    Eigen::VectorXd targets(2);
    targets << 1.0, 3.0;
    const double gamma = 0.8;
    const double sigma_f = 1.7;
    const double jitter = 1e-6 * sigma_f;

    GpState state;
    state.latents = latents;
    state.targets = targets;
    state.gamma = gamma;
    state.sigma_f = sigma_f;
    state.jitter = jitter;
    Eigen::MatrixXd k(2, 2);
    const double c = sigma_f * std::exp(-0.5 / (gamma * gamma));
    k << sigma_f + jitter, c, c, sigma_f + jitter;
    state.factorization.compute(k);
    state.alpha = state.factorization.solve(targets);

    Eigen::RowVectorXd z(1);
    z << 0.25;
    const double k1 = sigma_f * std::exp(-0.25 * 0.25 / (2.0 * gamma * gamma));
    const double k2 = sigma_f * std::exp(-0.75 * 0.75 / (2.0 * gamma * gamma));
    const double det = (sigma_f + jitter) * (sigma_f + jitter) - c * c;
    const double a0 = ((sigma_f + jitter) * targets[0] - c * targets[1]) / det;
    const double a1 = ((sigma_f + jitter) * targets[1] - c * targets[0]) / det;
    const double mu_ref = k1 * a0 + k2 * a1;
    const double q0 = ((sigma_f + jitter) * k1 - c * k2) / det;
    const double q1 = ((sigma_f + jitter) * k2 - c * k1) / det;
    const double var_ref = sigma_f - (k1 * q0 + k2 * q1);

    const auto [mu, var] = gp_predict(state, z);
    CHECK(mu == doctest::Approx(mu_ref).epsilon(1e-10));
    CHECK(var == doctest::Approx(var_ref).epsilon(1e-10));
}

TEST_CASE("training points are interpolated up to jitter") {
    Rng rng(809);
    const Eigen::MatrixXd latents = random_latents(rng, 8, 3);
    Eigen::VectorXd targets(8);
    for (int i = 0; i < 8; ++i) targets[i] = rng.uniform(1.0, 9.0);
    const GpState state = gp_fit(latents, targets);
    for (int i = 0; i < 8; ++i) {
        const auto [mu, var] = gp_predict(state, latents.row(i));
        CHECK(mu == doctest::Approx(targets[i]).epsilon(1e-3));
        CHECK(var < 1e-3 * state.sigma_f);
    }
}

TEST_CASE("far from the data the variance approaches the prior") {
    Rng rng(810);
    const Eigen::MatrixXd latents = random_latents(rng, 6, 2);
    Eigen::VectorXd targets(6);
    for (int i = 0; i < 6; ++i) targets[i] = rng.uniform(1.0, 9.0);
    const GpState state = gp_fit(latents, targets);
    Eigen::RowVectorXd far(2);
    far << 1e6, -1e6;
    const auto [mu, var] = gp_predict(state, far);
    CHECK(mu == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(state.sigma_f).epsilon(1e-9));
}

TEST_CASE("a known length scale is recovered within a factor of two") {
    Rng rng(811);
    const double true_gamma = 1.0;
    const Eigen::MatrixXd latents = random_latents(rng, 40, 2, 1.5);
    // Sample a smooth function with the target length scale: y = f(z) built
    // from a few kernel bumps.
    Eigen::VectorXd targets(40);
    for (int i = 0; i < 40; ++i) {
        const double r1 = (latents.row(i) - Eigen::RowVectorXd::Zero(2)).squaredNorm();
        Eigen::RowVectorXd c2(2);
        c2 << 1.0, -1.0;
        const double r2 = (latents.row(i) - c2).squaredNorm();
        targets[i] = 3.0 * std::exp(-r1 / (2.0 * true_gamma * true_gamma)) -
                     2.0 * std::exp(-r2 / (2.0 * true_gamma * true_gamma));
    }
    const GpState state = gp_fit(latents, targets);
    CHECK(state.gamma > true_gamma / 2.0);
    CHECK(state.gamma < true_gamma * 2.0);
}

TEST_CASE("duplicate inputs are handled by the jitter") {
    Eigen::MatrixXd latents(4, 2);
    latents << 1.0, 1.0, 1.0, 1.0, 2.0, 0.5, 2.0, 0.5; // two exact duplicates
    Eigen::VectorXd targets(4);
    targets << 3.0, 3.0, 5.0, 5.0;
    const GpState state = gp_fit(latents, targets);
    const auto [mu, var] = gp_predict(state, latents.row(0));
    CHECK(std::isfinite(mu));
    CHECK(mu == doctest::Approx(3.0).epsilon(1e-2));
    CHECK(var >= -1e-9);
}

TEST_CASE("fitting is deterministic") {
    Rng rng(812);
    const Eigen::MatrixXd latents = random_latents(rng, 12, 3);
    Eigen::VectorXd targets(12);
    for (int i = 0; i < 12; ++i) targets[i] = rng.uniform(0.0, 4.0);
    const GpState a = gp_fit(latents, targets);
    const GpState b = gp_fit(latents, targets);
    CHECK(a.gamma == b.gamma);
    CHECK(a.sigma_f == b.sigma_f);
    CHECK(a.log_marginal == b.log_marginal);
}

TEST_CASE("the selected hyper-parameters beat every raw grid point") {
    Rng rng(813);
    const Eigen::MatrixXd latents = random_latents(rng, 15, 2);
    Eigen::VectorXd targets(15);
    for (int i = 0; i < 15; ++i) targets[i] = rng.uniform(0.0, 6.0);
    const GpConfig config;
    const GpState state = gp_fit(latents, targets, config);

    // Rebuild the initial search grid and confirm nothing scores higher.
    double med;
    {
        std::vector<double> dists;
        for (int i = 0; i < 15; ++i) {
            for (int j = i + 1; j < 15; ++j) {
                dists.push_back((latents.row(i) - latents.row(j)).norm());
            }
        }
        std::sort(dists.begin(), dists.end());
        med = dists[dists.size() / 2];
    }
    const double var_y = (targets.array() - targets.mean()).square().mean();
    for (int gi = 0; gi < config.gamma_grid; ++gi) {
        const double fg = static_cast<double>(gi) / (config.gamma_grid - 1);
        const double gamma = med * std::pow(10.0, -2.0 + 4.0 * fg);
        for (int si = 0; si < config.sigma_grid; ++si) {
            const double fs = static_cast<double>(si) / (config.sigma_grid - 1);
            const double sigma_f = var_y * std::pow(10.0, -2.0 + 4.0 * fs);
            const double lml =
                gp_log_marginal(latents, targets, gamma, sigma_f, config.jitter_factor);
            CHECK(state.log_marginal >= lml - 1e-9);
        }
    }
}

TEST_CASE("variance never drops below the numerical floor") {
    Rng rng(814);
    const Eigen::MatrixXd latents = random_latents(rng, 20, 2);
    Eigen::VectorXd targets(20);
    for (int i = 0; i < 20; ++i) targets[i] = rng.uniform(0.0, 8.0);
    const GpState state = gp_fit(latents, targets);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::RowVectorXd z = random_latents(rng, 1, 2, 2.0).row(0);
        const auto [mu, var] = gp_predict(state, z);
        CHECK(var >= -1e-9);
        CHECK(std::isfinite(mu));
    }
}

TEST_CASE("gp intervals are clamped to physical range") {
    Eigen::MatrixXd latents(3, 1);
    latents << 0.0, 5.0, 10.0;
    Eigen::VectorXd targets(3);
    targets << 0.1, 0.2, 0.1; // tiny flows: mu - 2 sigma would dip negative
    const GpState state = gp_fit(latents, targets);
    Eigen::RowVectorXd z(1);
    z << 2.5;
    const PredictionInterval iv = gp_interval(state, z);
    CHECK(iv.lb >= 0.0);
    CHECK(iv.ub >= iv.lb);
    CHECK(iv.center >= iv.lb);
    CHECK(iv.center <= iv.ub);
}

TEST_CASE("gp_fit validates its input") {
    CHECK_THROWS(gp_fit(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1)));
    CHECK_THROWS(gp_fit(Eigen::MatrixXd::Zero(4, 2), Eigen::VectorXd::Zero(3)));
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 2);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(gp_fit(bad, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("dropout intervals collapse as the rate goes to zero") {
    const WatershedSeries data = generate_synthetic(3, 4, 909);
    const ModelParameters params = init_parameters(data.feature_count(), 6, 6, 909);
    const PredictionInterval tight =
        dropout_interval(params, data.graph, data.features, 5, 1e-12, 10, 42);
    const ForwardResult fwd = forward(params, data.graph, data.features);
    CHECK(tight.ub - tight.lb < 1e-6);
    CHECK(tight.center == doctest::Approx(fwd.predictions[5]).epsilon(1e-9));
}

TEST_CASE("dropout sampling is seed-deterministic") {
    const WatershedSeries data = generate_synthetic(3, 4, 910);
    ModelParameters params = init_parameters(data.feature_count(), 6, 6, 910);
    params.target_shift = 5.0;
    params.target_scale = 2.0;
    const PredictionInterval a =
        dropout_interval(params, data.graph, data.features, 3, 0.4, 25, 77);
    const PredictionInterval b =
        dropout_interval(params, data.graph, data.features, 3, 0.4, 25, 77);
    const PredictionInterval c =
        dropout_interval(params, data.graph, data.features, 3, 0.4, 25, 78);
    CHECK(a.lb == b.lb);
    CHECK(a.ub == b.ub);
    CHECK(a.center == b.center);
    const bool same = a.lb == c.lb && a.ub == c.ub;
    CHECK_FALSE(same);
}

TEST_CASE("dropout intervals stay valid and non-negative") {
    const WatershedSeries data = generate_synthetic(3, 4, 911);
    ModelParameters params = init_parameters(data.feature_count(), 6, 6, 911);
    params.target_shift = 0.5; // keep predictions near the clamp
    const auto intervals =
        dropout_intervals(params, data.graph, data.features, {0, 7, 11}, 0.5, 30, 5);
    REQUIRE(intervals.size() == 3);
    for (const auto& iv : intervals) {
        CHECK(iv.lb >= 0.0);
        CHECK(iv.lb <= iv.center);
        CHECK(iv.center <= iv.ub);
    }
}

TEST_CASE("dropout rejects bad arguments") {
    const WatershedSeries data = generate_synthetic(3, 4, 912);
    const ModelParameters params = init_parameters(data.feature_count(), 6, 6, 912);
    CHECK_THROWS(dropout_interval(params, data.graph, data.features, 0, 1.0, 10, 1));
    CHECK_THROWS(dropout_interval(params, data.graph, data.features, 0, -0.1, 10, 1));
    CHECK_THROWS(dropout_interval(params, data.graph, data.features, 0, 0.2, 1, 1));
    CHECK_THROWS(dropout_interval(params, data.graph, data.features, 99, 0.2, 10, 1));
}
