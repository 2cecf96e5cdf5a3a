#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flowcast {

struct PredictionInterval {
    double lb = 0.0;
    double ub = 0.0;
    double center = 0.0;
};

// 1 - sum((y - yhat)^2) / sum((y - mean(y))^2). Empty when y is constant
// (the denominator vanishes and the score is undefined).
std::optional<double> nse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);

// 1 / (2 - NSE), mapping (-inf, 1] onto (0, 1].
double nnse(double nse_value);
std::optional<double> nnse(std::optional<double> nse_value);

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);

struct CoverageWidth {
    double coverage_pct = 0.0;
    double mean_width = 0.0;
};

CoverageWidth coverage_and_width(const Eigen::VectorXd& y,
                                 const std::vector<PredictionInterval>& intervals);

// Positions t whose calendar month is in `months`, for a series starting at
// start_month.
std::vector<int> month_filter(int start_month, int n_months, const std::vector<int>& months);

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& idx);

struct ProfilePoint {
    double x = 0.0;        // threshold on the gap to the best model
    double fraction = 0.0; // fraction of month-years within that gap
};

// Per model: the empirical CDF of (own absolute error - best absolute error)
// across month-years. Input holds one absolute-error series per model, all
// the same length.
std::map<std::string, std::vector<ProfilePoint>> relative_performance_profile(
    const std::map<std::string, Eigen::VectorXd>& abs_errors_by_model);

struct MetricRow {
    std::string model;
    std::string subset; // "high_flow" or "all"
    std::optional<double> nse;
    std::optional<double> nnse;
    double mae = 0.0;
    int n = 0;
};

void write_report_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& file);

void write_profile_csv(const std::vector<ProfilePoint>& curve, const std::filesystem::path& file);

void write_intervals_csv(const Eigen::VectorXd& y, const Eigen::VectorXd& y_pred,
                         const std::vector<PredictionInterval>& intervals,
                         const std::string& method, const std::filesystem::path& file);

} // namespace flowcast
