#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

namespace flowcast {

double residual_loss(double prediction, double target);

// Uniform loss-range bins over [0, max loss] with group-wise weights.
// `weights` holds the exact k^a / (K^{b+1} P_k) values used by the bound
// analysis; `sample_weights` holds the same values broadcast per sample and
// rescaled to mean 1 for use as training weights.
struct GroupWeighting {
    int k_groups = 0;
    double a = 0.0;
    double b = 0.0;
    std::vector<double> bin_edges;      // K + 1 values spanning [0, L]
    std::vector<double> probabilities;  // P_k, sums to 1
    std::vector<double> weights;        // omega_k, 0 for empty bins
    std::vector<int> bin_of_sample;     // 1-based bin index per sample
    Eigen::VectorXd sample_weights;

    double max_weight() const; // M = max_k omega_k
};

// Bins only: losses must be non-negative, K >= 2. A boundary value belongs
// to the lower bin except the maximum, which belongs to bin K. All-zero
// losses collapse to a single occupied bin 1.
GroupWeighting group_samples(const std::vector<double>& losses, int k_groups);

// Sample-free grouping with P_k = 1/K, for bound evaluation on a grid.
GroupWeighting uniform_grouping(int k_groups);

// Fills in weights for an existing grouping. a must be positive; b is taken
// as given (callers wanting the default rule pass default_b(a, k)).
GroupWeighting assign_weights(GroupWeighting grouping, double a, double b);

double default_b(double a, int k_groups);

// (1/T) sum_i w_i * l_i.
double iw_risk(const std::vector<double>& losses, const Eigen::VectorXd& weights);

// sum_k P_k * omega_k over the analysis weights.
double renyi_d2(const GroupWeighting& grouping);

struct BoundReport {
    double a = 0.0, b = 0.0;
    int k_groups = 0;
    double delta = 0.0;
    long t_samples = 0;
    double d2 = 0.0;
    double max_weight = 0.0;
    double lemma1_rhs = 0.0;      // first + second term, second without a leading 2
    double b_hat = 0.0;           // sqrt(2 log(1/delta) / T)
    double b_hat_omega = 0.0;     // sqrt(2 log(1/delta) / ((a+1) T))
    double ratio = 0.0;           // b_hat_omega / b_hat
    bool cond_a_positive = false;
    bool cond_k_at_least_2 = false;
    bool cond_a_le_k_minus_1 = false; // strict condition, not required in practice
    bool cond_a_le_b_term = false;    // a <= b - 1/ln K
    bool lemma_assumption_ok = false; // linear term <= sqrt term
    bool conditions_ok = false;       // the practical set (excludes a <= K-1)
    bool strict_conditions_ok = false;
    bool d2_bound_ok = false;         // d2 <= 1/(a+1) + 1e-12
    bool ratio_ok = false;            // ratio == 1/sqrt(a+1) within 1e-12
    bool tightens = false;            // b_hat_omega < b_hat
    // A flag marks a grid point where the strict premises hold but some
    // inequality of the proof chain fails numerically.
    bool flagged = false;
};

BoundReport bound_report(const GroupWeighting& grouping, double delta, long t_samples);

void write_bound_csv(const std::vector<BoundReport>& rows, const std::filesystem::path& file);

// Weights for one training epoch: groups the residuals, applies the rule,
// and returns the mean-1 per-sample weights. With iw disabled returns all
// ones.
Eigen::VectorXd epoch_weights(const std::vector<double>& residuals, bool enabled, int k_groups,
                              double a, double b);

} // namespace flowcast
