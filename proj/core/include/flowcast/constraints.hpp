#pragma once

#include "flowcast/dataset.hpp"
#include "flowcast/water_balance.hpp"

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

namespace flowcast {

// Hinge on the annual water balance: positive exactly when predicted runoff
// plus evapotranspiration exceeds precipitation.
double pg_penalty(double pred_total_mm, double p_total_mm, double et_total_mm);

// Rescales one complete water year of monthly predictions onto the budget:
// identity when the total already fits, all zeros when the budget is not
// positive, otherwise every month is multiplied by budget / total.
Eigen::VectorXd project(const Eigen::VectorXd& predictions, double budget_mm);

// project() applied to every complete water year; months outside the listed
// windows pass through unchanged.
Eigen::VectorXd apply_projection(const Eigen::VectorXd& predictions,
                                 const std::vector<WaterYearBudget>& budgets);

struct YearViolation {
    int year_index = 0;
    int begin = 0;
    int end = 0;
    double predicted_total_mm = 0.0;
    double budget_mm = 0.0;
    bool violated = false;
    double excess_mm = 0.0;
};

struct ViolationReport {
    std::vector<YearViolation> years;
    double fraction = 0.0;     // violating years / complete years
    double magnitude_mm = 0.0; // mean excess over violating years only
};

ViolationReport violation_report(const Eigen::VectorXd& predictions,
                                 const WatershedSeries& data, double tol = 1e-9);

void write_violation_csv(const ViolationReport& report, const std::filesystem::path& file);

} // namespace flowcast
