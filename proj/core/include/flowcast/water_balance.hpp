#pragma once

#include "flowcast/dataset.hpp"

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace flowcast {

// One complete water year: the half-open month window [begin, end) into the
// series and the annual water budget available for runoff, in mm.
struct WaterYearBudget {
    int begin = 0;
    int end = 0;
    double budget_mm = 0.0;
};

// Budgets for every complete water year in the series. Each budget is the
// sum over the year's months of node-mean precipitation minus node-mean
// evapotranspiration.
std::vector<WaterYearBudget> annual_budgets(const WatershedSeries& data);

// Per-year mass-balance check of a monthly prediction series against the
// budgets. A year violates when its predicted total exceeds the budget by
// more than `tol`.
struct BalanceCheck {
    int years = 0;
    int violations = 0;
    double violation_fraction = 0.0; // violations / years, 0 when no years
    double mean_excess_mm = 0.0;     // mean of (total - budget) over violating years
};

BalanceCheck check_balance(const Eigen::VectorXd& predictions,
                           const std::vector<WaterYearBudget>& budgets,
                           double tol = 1e-9);

} // namespace flowcast
