#include "flowcast/constraints.hpp"

#include "flowcast/dataset.hpp"
#include "flowcast/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowcast;

namespace {

WatershedSeries two_year_series() {
    WatershedSeries data;
    data.graph.node_count = 2;
    data.graph.adjacency = Eigen::MatrixXd::Identity(2, 2);
    data.graph.outlet_node = 0;
    data.feature_names = {"precipitation", "evapotranspiration"};
    data.start_month = 10;
    for (int t = 0; t < 24; ++t) {
        Eigen::MatrixXd x(2, 2);
        x << 12.0, 3.0, 8.0, 1.0; // node means: P 10, ET 2 -> budget 96/year
        data.features.push_back(x);
    }
    data.target = Eigen::VectorXd::Constant(24, 4.0);
    return data;
}

} // namespace

TEST_CASE("hinge penalty is zero inside the balance and linear outside") {
    CHECK(pg_penalty(95.0, 110.0, 10.0) == 0.0);
    CHECK(pg_penalty(95.0, 98.0, 10.0) == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(pg_penalty(0.0, 0.0, 0.0) == 0.0);

    // Slope with respect to the prediction: 0 below the kink, 1 above it.
    const double eps = 1e-6;
    const double below = (pg_penalty(50.0 + eps, 100.0, 10.0) - pg_penalty(50.0 - eps, 100.0, 10.0)) /
                         (2.0 * eps);
    const double above = (pg_penalty(95.0 + eps, 100.0, 10.0) - pg_penalty(95.0 - eps, 100.0, 10.0)) /
                         (2.0 * eps);
    CHECK(below == 0.0);
    CHECK(above == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("projection rescales an over-budget year uniformly") {
    const Eigen::VectorXd pred = Eigen::VectorXd::Constant(12, 10.0); // total 120
    const Eigen::VectorXd out = project(pred, 100.0);
    CHECK(out.sum() == doctest::Approx(100.0).epsilon(1e-12));
    for (int t = 0; t < 12; ++t) {
        CHECK(out[t] == doctest::Approx(10.0 * 5.0 / 6.0).epsilon(1e-12));
    }
}

TEST_CASE("projection leaves a feasible year untouched") {
    Eigen::VectorXd pred(12);
    pred << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12; // total 78
    CHECK(project(pred, 78.0) == pred); // boundary counts as feasible
    CHECK(project(pred, 100.0) == pred);
}

TEST_CASE("non-positive budgets force all months to zero") {
    const Eigen::VectorXd pred = Eigen::VectorXd::Constant(12, 3.0);
    CHECK(project(pred, -5.0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(project(pred, 0.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projection rejects bad input") {
    CHECK_THROWS(project(Eigen::VectorXd::Zero(11), 10.0));
    Eigen::VectorXd pred = Eigen::VectorXd::Constant(12, 1.0);
    pred[3] = -0.5;
    CHECK_THROWS(project(pred, 10.0));
}

TEST_CASE("projection is idempotent, non-increasing, and non-negative") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd pred(12);
        for (int t = 0; t < 12; ++t) pred[t] = rng.uniform(0.0, 20.0);
        const double budget = rng.uniform(-10.0, 150.0);
        const Eigen::VectorXd once = project(pred, budget);
        CHECK(once.minCoeff() >= 0.0);
        CHECK((once - project(once, budget)).cwiseAbs().maxCoeff() < 1e-9);
        for (int t = 0; t < 12; ++t) {
            CHECK(once[t] <= pred[t] + 1e-12);
        }
        if (budget > 0.0) {
            CHECK(once.sum() <= budget + 1e-9);
        }
    }
}

TEST_CASE("the feasible set is convex") {
    // Midpoints of two projected years stay within the budget.
    Rng rng(405);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd a(12), b(12);
        for (int t = 0; t < 12; ++t) {
            a[t] = rng.uniform(0.0, 20.0);
            b[t] = rng.uniform(0.0, 20.0);
        }
        const double budget = rng.uniform(1.0, 120.0);
        const Eigen::VectorXd mid = 0.5 * (project(a, budget) + project(b, budget));
        CHECK(mid.sum() <= budget + 1e-9);
        CHECK((project(mid, budget) - mid).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("apply_projection touches only the budget windows") {
    const WatershedSeries data = two_year_series();
    const auto budgets = annual_budgets(data);
    Eigen::VectorXd pred = Eigen::VectorXd::Constant(24, 10.0); // both years total 120
    pred.conservativeResize(26);
    pred[24] = 50.0;
    pred[25] = 60.0;
    const Eigen::VectorXd out = apply_projection(pred, budgets);
    CHECK(out.segment(0, 12).sum() == doctest::Approx(96.0).epsilon(1e-12));
    CHECK(out.segment(12, 12).sum() == doctest::Approx(96.0).epsilon(1e-12));
    CHECK(out[24] == 50.0); // trailing partial year passes through
    CHECK(out[25] == 60.0);
}

TEST_CASE("violation report matches the hand-computed case") {
    const WatershedSeries data = two_year_series();
    Eigen::VectorXd pred = Eigen::VectorXd::Constant(24, 8.0); // both years total 96
    pred[0] += 4.0;                                            // first year now 100
    const ViolationReport report = violation_report(pred, data);
    REQUIRE(report.years.size() == 2);
    CHECK(report.years[0].violated);
    CHECK(report.years[0].excess_mm == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_FALSE(report.years[1].violated);
    CHECK(report.fraction == 0.5);
    CHECK(report.magnitude_mm == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("zero predictions never violate") {
    const WatershedSeries data = two_year_series();
    const ViolationReport report = violation_report(Eigen::VectorXd::Zero(24), data);
    CHECK(report.fraction == 0.0);
    CHECK(report.magnitude_mm == 0.0);
}

TEST_CASE("projected predictions report a zero violation fraction") {
    const WatershedSeries data = two_year_series();
    const auto budgets = annual_budgets(data);
    Rng rng(406);
    Eigen::VectorXd pred(24);
    for (int t = 0; t < 24; ++t) pred[t] = rng.uniform(0.0, 30.0);
    const ViolationReport report = violation_report(apply_projection(pred, budgets), data);
    CHECK(report.fraction == 0.0);
}

TEST_CASE("violation report rejects mismatched lengths") {
    CHECK_THROWS(violation_report(Eigen::VectorXd::Zero(10), two_year_series()));
}
