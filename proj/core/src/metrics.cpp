#include "flowcast/metrics.hpp"

#include "flowcast/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flowcast {

std::optional<double> nse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
    if (y.size() == 0 || y.size() != y_hat.size()) {
        throw std::runtime_error("nse: inputs must be non-empty and equal length");
    }
    const double mean = y.mean();
    const double denom = (y.array() - mean).square().sum();
    if (denom == 0.0) return std::nullopt;
    const double num = (y - y_hat).squaredNorm();
    return 1.0 - num / denom;
}

double nnse(double nse_value) {
    if (nse_value > 1.0) throw std::runtime_error("nnse: NSE cannot exceed 1");
    return 1.0 / (2.0 - nse_value);
}

std::optional<double> nnse(std::optional<double> nse_value) {
    if (!nse_value) return std::nullopt;
    return nnse(*nse_value);
}

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
    if (y.size() == 0 || y.size() != y_hat.size()) {
        throw std::runtime_error("mae: inputs must be non-empty and equal length");
    }
    return (y - y_hat).cwiseAbs().mean();
}

CoverageWidth coverage_and_width(const Eigen::VectorXd& y,
                                 const std::vector<PredictionInterval>& intervals) {
    if (static_cast<std::size_t>(y.size()) != intervals.size() || intervals.empty()) {
        throw std::runtime_error("coverage_and_width: misaligned inputs");
    }
    int covered = 0;
    double width_sum = 0.0;
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        const auto& pi = intervals[static_cast<std::size_t>(t)];
        if (pi.lb <= y[t] && y[t] <= pi.ub) ++covered;
        width_sum += pi.ub - pi.lb;
    }
    const double n = static_cast<double>(y.size());
    return {100.0 * covered / n, width_sum / n};
}

std::vector<int> month_filter(int start_month, int n_months, const std::vector<int>& months) {
    if (start_month < 1 || start_month > 12) {
        throw std::runtime_error("month_filter: start_month out of 1..12");
    }
    if (months.empty()) throw std::runtime_error("month_filter: empty month set");
    for (int m : months) {
        if (m < 1 || m > 12) throw std::runtime_error("month_filter: month out of 1..12");
    }
    std::vector<int> idx;
    for (int t = 0; t < n_months; ++t) {
        const int month = (start_month - 1 + t) % 12 + 1;
        if (std::find(months.begin(), months.end(), month) != months.end()) {
            idx.push_back(t);
        }
    }
    return idx;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= v.size()) {
            throw std::runtime_error("take: index out of range");
        }
        out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    }
    return out;
}

std::map<std::string, std::vector<ProfilePoint>> relative_performance_profile(
    const std::map<std::string, Eigen::VectorXd>& abs_errors_by_model) {
    if (abs_errors_by_model.empty()) {
        throw std::runtime_error("relative_performance_profile: no models");
    }
    const Eigen::Index n = abs_errors_by_model.begin()->second.size();
    if (n == 0) throw std::runtime_error("relative_performance_profile: no month-years");
    for (const auto& [name, errs] : abs_errors_by_model) {
        if (errs.size() != n) {
            throw std::runtime_error("relative_performance_profile: length mismatch for " + name);
        }
    }

    Eigen::VectorXd best = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (const auto& [name, errs] : abs_errors_by_model) {
        best = best.cwiseMin(errs);
    }

    std::map<std::string, std::vector<ProfilePoint>> curves;
    for (const auto& [name, errs] : abs_errors_by_model) {
        std::vector<double> gaps(static_cast<std::size_t>(n));
        for (Eigen::Index t = 0; t < n; ++t) {
            gaps[static_cast<std::size_t>(t)] = errs[t] - best[t];
        }
        std::sort(gaps.begin(), gaps.end());
        std::vector<ProfilePoint> curve;
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            // One point per distinct gap value, at the highest fraction.
            if (i + 1 < gaps.size() && gaps[i + 1] == gaps[i]) continue;
            curve.push_back({gaps[i], static_cast<double>(i + 1) / static_cast<double>(n)});
        }
        curves[name] = std::move(curve);
    }
    return curves;
}

namespace {

std::string cell(std::optional<double> v) {
    return v ? csv::format_double(*v) : std::string("undefined");
}

} // namespace

void write_report_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "model,subset,nse,nnse,mae,n\n";
    for (const auto& r : rows) {
        out << r.model << "," << r.subset << "," << cell(r.nse) << "," << cell(r.nnse) << ","
            << csv::format_double(r.mae) << "," << r.n << "\n";
    }
    csv::write_file(file, out.str());
}

void write_profile_csv(const std::vector<ProfilePoint>& curve, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "x,fraction\n";
    for (const auto& p : curve) {
        out << csv::format_double(p.x) << "," << csv::format_double(p.fraction) << "\n";
    }
    csv::write_file(file, out.str());
}

void write_intervals_csv(const Eigen::VectorXd& y, const Eigen::VectorXd& y_pred,
                         const std::vector<PredictionInterval>& intervals,
                         const std::string& method, const std::filesystem::path& file) {
    if (static_cast<std::size_t>(y.size()) != intervals.size() || y.size() != y_pred.size()) {
        throw std::runtime_error("write_intervals_csv: misaligned inputs");
    }
    std::ostringstream out;
    out << "t,y_true,y_pred,lb,ub,method\n";
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        const auto& pi = intervals[static_cast<std::size_t>(t)];
        out << t << "," << csv::format_double(y[t]) << "," << csv::format_double(y_pred[t]) << ","
            << csv::format_double(pi.lb) << "," << csv::format_double(pi.ub) << "," << method
            << "\n";
    }
    csv::write_file(file, out.str());
}

} // namespace flowcast
