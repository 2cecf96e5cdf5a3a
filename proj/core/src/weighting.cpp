#include "flowcast/weighting.hpp"

#include "flowcast/csv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowcast {

double residual_loss(double prediction, double target) {
    return std::abs(prediction - target);
}

double GroupWeighting::max_weight() const {
    double m = 0.0;
    for (double w : weights) m = std::max(m, w);
    return m;
}

GroupWeighting group_samples(const std::vector<double>& losses, int k_groups) {
    if (losses.empty()) throw std::runtime_error("group_samples: empty loss list");
    if (k_groups < 2) throw std::runtime_error("group_samples: K must be at least 2");
    double max_loss = 0.0;
    for (double l : losses) {
        if (!(l >= 0.0)) throw std::runtime_error("group_samples: losses must be non-negative");
        max_loss = std::max(max_loss, l);
    }

    GroupWeighting g;
    g.k_groups = k_groups;
    g.bin_edges.resize(static_cast<std::size_t>(k_groups) + 1);
    for (int k = 0; k <= k_groups; ++k) {
        g.bin_edges[static_cast<std::size_t>(k)] = max_loss * k / k_groups;
    }
    g.probabilities.assign(static_cast<std::size_t>(k_groups), 0.0);
    g.bin_of_sample.resize(losses.size());

    for (std::size_t i = 0; i < losses.size(); ++i) {
        int bin;
        if (max_loss == 0.0) {
            bin = 1;
        } else if (losses[i] == max_loss) {
            bin = k_groups;
        } else {
            // Boundary values fall to the lower-index bin: bin k covers
            // (L(k-1)/K, Lk/K] apart from bin 1, which also takes 0.
            bin = static_cast<int>(std::ceil(losses[i] * k_groups / max_loss));
            bin = std::clamp(bin, 1, k_groups);
        }
        g.bin_of_sample[i] = bin;
        g.probabilities[static_cast<std::size_t>(bin - 1)] += 1.0;
    }
    for (double& p : g.probabilities) p /= static_cast<double>(losses.size());
    return g;
}

GroupWeighting uniform_grouping(int k_groups) {
    if (k_groups < 2) throw std::runtime_error("uniform_grouping: K must be at least 2");
    GroupWeighting g;
    g.k_groups = k_groups;
    g.bin_edges.resize(static_cast<std::size_t>(k_groups) + 1);
    for (int k = 0; k <= k_groups; ++k) {
        g.bin_edges[static_cast<std::size_t>(k)] = static_cast<double>(k) / k_groups;
    }
    g.probabilities.assign(static_cast<std::size_t>(k_groups), 1.0 / k_groups);
    return g;
}

double default_b(double a, int k_groups) {
    return a + 1.0 / std::log(static_cast<double>(k_groups)) + 0.5;
}

GroupWeighting assign_weights(GroupWeighting grouping, double a, double b) {
    if (!(a > 0.0)) throw std::runtime_error("assign_weights: a must be positive");
    grouping.a = a;
    grouping.b = b;
    const int K = grouping.k_groups;
    grouping.weights.assign(static_cast<std::size_t>(K), 0.0);

    const double denom = std::pow(static_cast<double>(K), b + 1.0);
    for (int k = 1; k <= K; ++k) {
        const double p = grouping.probabilities[static_cast<std::size_t>(k - 1)];
        if (p > 0.0) {
            grouping.weights[static_cast<std::size_t>(k - 1)] =
                std::pow(static_cast<double>(k), a) / (denom * p);
        }
    }

    const std::size_t T = grouping.bin_of_sample.size();
    grouping.sample_weights.resize(static_cast<Eigen::Index>(T));
    for (std::size_t i = 0; i < T; ++i) {
        grouping.sample_weights[static_cast<Eigen::Index>(i)] =
            grouping.weights[static_cast<std::size_t>(grouping.bin_of_sample[i] - 1)];
    }
    if (T > 0) {
        const double mean = grouping.sample_weights.mean();
        if (mean > 0.0) {
            grouping.sample_weights /= mean;
        } else {
            grouping.sample_weights.setOnes();
        }
    }
    return grouping;
}

double iw_risk(const std::vector<double>& losses, const Eigen::VectorXd& weights) {
    if (static_cast<Eigen::Index>(losses.size()) != weights.size()) {
        throw std::runtime_error("iw_risk: length mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        sum += weights[static_cast<Eigen::Index>(i)] * losses[i];
    }
    return sum / static_cast<double>(losses.size());
}

double renyi_d2(const GroupWeighting& grouping) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < grouping.weights.size(); ++k) {
        d2 += grouping.probabilities[k] * grouping.weights[k];
    }
    return d2;
}

BoundReport bound_report(const GroupWeighting& grouping, double delta, long t_samples) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::runtime_error("bound_report: delta must be in (0,1)");
    if (t_samples < 1) throw std::runtime_error("bound_report: T must be at least 1");

    BoundReport r;
    r.a = grouping.a;
    r.b = grouping.b;
    r.k_groups = grouping.k_groups;
    r.delta = delta;
    r.t_samples = t_samples;
    r.d2 = renyi_d2(grouping);
    r.max_weight = grouping.max_weight();

    const double log_term = std::log(1.0 / delta);
    const double t = static_cast<double>(t_samples);
    const double linear = 2.0 * r.max_weight * log_term / (3.0 * t);
    const double sqrt_term = std::sqrt(2.0 * r.d2 * log_term / t);
    r.lemma1_rhs = linear + sqrt_term;
    r.b_hat = std::sqrt(2.0 * log_term / t);
    r.b_hat_omega = std::sqrt(2.0 * log_term / ((r.a + 1.0) * t));
    r.ratio = r.b_hat_omega / r.b_hat;

    const double ln_k = std::log(static_cast<double>(r.k_groups));
    r.cond_a_positive = r.a > 0.0;
    r.cond_k_at_least_2 = r.k_groups >= 2;
    r.cond_a_le_k_minus_1 = r.a <= static_cast<double>(r.k_groups - 1);
    r.cond_a_le_b_term = r.a <= r.b - 1.0 / ln_k;
    r.lemma_assumption_ok = linear <= sqrt_term;
    r.conditions_ok =
        r.cond_a_positive && r.cond_k_at_least_2 && r.cond_a_le_b_term && r.lemma_assumption_ok;
    r.strict_conditions_ok = r.conditions_ok && r.cond_a_le_k_minus_1;
    r.d2_bound_ok = r.d2 <= 1.0 / (r.a + 1.0) + 1e-12;
    r.ratio_ok = std::abs(r.ratio - 1.0 / std::sqrt(r.a + 1.0)) <= 1e-12;
    r.tightens = r.b_hat_omega < r.b_hat;
    r.flagged = r.strict_conditions_ok && !(r.d2_bound_ok && r.ratio_ok && r.tightens);
    return r;
}

void write_bound_csv(const std::vector<BoundReport>& rows, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "a,b,k,delta,t,d2,max_weight,lemma1_rhs,b_hat,b_hat_omega,ratio,"
           "cond_a_positive,cond_k_at_least_2,cond_a_le_k_minus_1,cond_a_le_b_term,"
           "lemma_assumption_ok,conditions_ok,strict_conditions_ok,d2_bound_ok,ratio_ok,"
           "tightens,flagged\n";
    for (const auto& r : rows) {
        out << csv::format_double(r.a) << "," << csv::format_double(r.b) << "," << r.k_groups
            << "," << csv::format_double(r.delta) << "," << r.t_samples << ","
            << csv::format_double(r.d2) << "," << csv::format_double(r.max_weight) << ","
            << csv::format_double(r.lemma1_rhs) << "," << csv::format_double(r.b_hat) << ","
            << csv::format_double(r.b_hat_omega) << "," << csv::format_double(r.ratio) << ","
            << r.cond_a_positive << "," << r.cond_k_at_least_2 << "," << r.cond_a_le_k_minus_1
            << "," << r.cond_a_le_b_term << "," << r.lemma_assumption_ok << "," << r.conditions_ok
            << "," << r.strict_conditions_ok << "," << r.d2_bound_ok << "," << r.ratio_ok << ","
            << r.tightens << "," << r.flagged << "\n";
    }
    csv::write_file(file, out.str());
}

Eigen::VectorXd epoch_weights(const std::vector<double>& residuals, bool enabled, int k_groups,
                              double a, double b) {
    if (!enabled) {
        return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(residuals.size()));
    }
    const GroupWeighting g = assign_weights(group_samples(residuals, k_groups), a, b);
    return g.sample_weights;
}

} // namespace flowcast
