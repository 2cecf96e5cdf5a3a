#include "flowcast/water_balance.hpp"

#include <stdexcept>

namespace flowcast {

std::vector<WaterYearBudget> annual_budgets(const WatershedSeries& data) {
    const int p = data.precipitation_channel();
    const int et = data.evapotranspiration_channel();
    std::vector<WaterYearBudget> budgets;
    for (const auto& [begin, end] : water_year_blocks(data.start_month, data.months())) {
        double budget = 0.0;
        for (int t = begin; t < end; ++t) {
            budget += data.node_mean(t, p) - data.node_mean(t, et);
        }
        budgets.push_back({begin, end, budget});
    }
    return budgets;
}

BalanceCheck check_balance(const Eigen::VectorXd& predictions,
                           const std::vector<WaterYearBudget>& budgets,
                           double tol) {
    BalanceCheck out;
    out.years = static_cast<int>(budgets.size());
    double excess_sum = 0.0;
    for (const auto& year : budgets) {
        if (year.end > static_cast<int>(predictions.size())) {
            throw std::runtime_error("check_balance: prediction series shorter than budget window");
        }
        const double total = predictions.segment(year.begin, year.end - year.begin).sum();
        if (total > year.budget_mm + tol) {
            ++out.violations;
            excess_sum += total - year.budget_mm;
        }
    }
    if (out.years > 0) {
        out.violation_fraction = static_cast<double>(out.violations) / out.years;
    }
    if (out.violations > 0) {
        out.mean_excess_mm = excess_sum / out.violations;
    }
    return out;
}

} // namespace flowcast
