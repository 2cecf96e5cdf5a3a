#include "flowcast/constraints.hpp"

#include "flowcast/csv.hpp"

#include <sstream>
#include <stdexcept>

namespace flowcast {

double pg_penalty(double pred_total_mm, double p_total_mm, double et_total_mm) {
    return std::max(0.0, pred_total_mm + et_total_mm - p_total_mm);
}

Eigen::VectorXd project(const Eigen::VectorXd& predictions, double budget_mm) {
    if (predictions.size() != 12) {
        throw std::runtime_error("project: expected 12 monthly values, got " +
                                 std::to_string(predictions.size()));
    }
    if ((predictions.array() < 0.0).any()) {
        throw std::runtime_error("project: negative input prediction");
    }
    if (budget_mm <= 0.0) {
        return Eigen::VectorXd::Zero(predictions.size());
    }
    const double total = predictions.sum();
    if (total <= budget_mm) {
        return predictions;
    }
    return predictions * (budget_mm / total);
}

Eigen::VectorXd apply_projection(const Eigen::VectorXd& predictions,
                                 const std::vector<WaterYearBudget>& budgets) {
    Eigen::VectorXd out = predictions;
    for (const auto& year : budgets) {
        if (year.end > static_cast<int>(predictions.size())) {
            throw std::runtime_error("apply_projection: budget window out of range");
        }
        out.segment(year.begin, year.end - year.begin) =
            project(predictions.segment(year.begin, year.end - year.begin), year.budget_mm);
    }
    return out;
}

ViolationReport violation_report(const Eigen::VectorXd& predictions,
                                 const WatershedSeries& data, double tol) {
    if (static_cast<int>(predictions.size()) != data.months()) {
        throw std::runtime_error("violation_report: prediction length does not match the series");
    }
    ViolationReport report;
    const auto budgets = annual_budgets(data);
    double excess_sum = 0.0;
    int violations = 0;
    for (std::size_t k = 0; k < budgets.size(); ++k) {
        const auto& year = budgets[k];
        YearViolation row;
        row.year_index = static_cast<int>(k);
        row.begin = year.begin;
        row.end = year.end;
        row.predicted_total_mm = predictions.segment(year.begin, year.end - year.begin).sum();
        row.budget_mm = year.budget_mm;
        if (row.predicted_total_mm > row.budget_mm + tol) {
            row.violated = true;
            row.excess_mm = row.predicted_total_mm - row.budget_mm;
            excess_sum += row.excess_mm;
            ++violations;
        }
        report.years.push_back(row);
    }
    if (!report.years.empty()) {
        report.fraction = static_cast<double>(violations) / static_cast<double>(report.years.size());
    }
    if (violations > 0) {
        report.magnitude_mm = excess_sum / violations;
    }
    return report;
}

void write_violation_csv(const ViolationReport& report, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "row_type,year_index,predicted_total_mm,budget_mm,violated_or_fraction,"
           "excess_or_magnitude_mm\n";
    for (const auto& year : report.years) {
        out << "year," << year.year_index << "," << csv::format_double(year.predicted_total_mm)
            << "," << csv::format_double(year.budget_mm) << "," << (year.violated ? 1 : 0) << ","
            << csv::format_double(year.excess_mm) << "\n";
    }
    out << "summary,,,," << csv::format_double(report.fraction) << ","
        << csv::format_double(report.magnitude_mm) << "\n";
    csv::write_file(file, out.str());
}

} // namespace flowcast
