#include "flowcast/dataset.hpp"

#include "flowcast/csv.hpp"
#include "flowcast/water_balance.hpp"

#include <doctest.h>

#include <filesystem>

using namespace flowcast;

namespace {

WatershedSeries tiny_series(int n_months) {
    WatershedSeries data;
    data.graph.node_count = 2;
    data.graph.adjacency = Eigen::MatrixXd::Identity(2, 2);
    data.graph.outlet_node = 0;
    data.feature_names = {"precipitation", "evapotranspiration"};
    data.start_month = 10;
    for (int t = 0; t < n_months; ++t) {
        Eigen::MatrixXd x(2, 2);
        x << 100.0, 10.0, 80.0, 20.0;
        data.features.push_back(x);
    }
    data.target = Eigen::VectorXd::Constant(n_months, 5.0);
    return data;
}

} // namespace

TEST_CASE("validation rejects negative streamflow with the offending index") {
    WatershedSeries data = tiny_series(6);
    data.target[5] = -0.5;
    CHECK_THROWS_WITH_AS(data.validate(), "negative streamflow at t=5", std::runtime_error);
}

TEST_CASE("validation rejects negative precipitation") {
    WatershedSeries data = tiny_series(3);
    data.features[1](0, 0) = -1.0;
    CHECK_THROWS(data.validate());
}

TEST_CASE("validation rejects shape and length mismatches") {
    WatershedSeries data = tiny_series(3);
    data.target = Eigen::VectorXd::Zero(2);
    CHECK_THROWS(data.validate());

    WatershedSeries bad = tiny_series(3);
    bad.features[2] = Eigen::MatrixXd::Zero(3, 2);
    CHECK_THROWS(bad.validate());
}

TEST_CASE("water year boundaries from various start months") {
    // Starting in October, years tile immediately.
    CHECK(first_water_year_start(10, 24) == 0);
    // Starting in January, the first October is nine months in.
    CHECK(first_water_year_start(1, 24) == 9);
    // Starting in November, eleven months to the next October.
    CHECK(first_water_year_start(11, 24) == 11);
    // Too short to reach any October.
    CHECK(first_water_year_start(1, 5) == -1);

    const auto blocks = water_year_blocks(1, 36);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0] == std::pair<int, int>{9, 21});
    CHECK(blocks[1] == std::pair<int, int>{21, 33});
}

TEST_CASE("calendar months roll over") {
    WatershedSeries data = tiny_series(15);
    CHECK(data.calendar_month(0) == 10);
    CHECK(data.calendar_month(2) == 12);
    CHECK(data.calendar_month(3) == 1);
    CHECK(data.calendar_month(14) == 12);
}

TEST_CASE("save and load round-trip bit-exactly") {
    const WatershedSeries data = generate_synthetic(4, 5, 77);
    const auto dir = std::filesystem::temp_directory_path() / "flowcast_roundtrip";
    std::filesystem::remove_all(dir);
    save_dataset(data, dir);
    const WatershedSeries loaded = load_dataset(dir);

    CHECK(loaded.graph.node_count == data.graph.node_count);
    CHECK(loaded.graph.outlet_node == data.graph.outlet_node);
    CHECK(loaded.graph.adjacency == data.graph.adjacency);
    CHECK(loaded.start_month == data.start_month);
    CHECK(loaded.feature_names == data.feature_names);
    CHECK(loaded.target == data.target);
    REQUIRE(loaded.features.size() == data.features.size());
    for (std::size_t t = 0; t < data.features.size(); ++t) {
        CHECK(loaded.features[t] == data.features[t]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("split produces contiguous water-year-aligned pieces") {
    const WatershedSeries data = generate_synthetic(3, 10, 5);
    const auto parts = split(data, {6, 2, 2});
    CHECK(parts[0].months() == 72);
    CHECK(parts[1].months() == 24);
    CHECK(parts[2].months() == 24);
    for (const auto& part : parts) {
        CHECK(part.start_month == 10);
        part.validate();
    }
    // The pieces tile the original target series.
    Eigen::VectorXd joined(120);
    joined << parts[0].target, parts[1].target, parts[2].target;
    CHECK(joined == data.target);

    CHECK_THROWS(split(data, {9, 1, 1}));
}

TEST_CASE("slice tracks the start month") {
    const WatershedSeries data = generate_synthetic(3, 4, 9);
    const WatershedSeries mid = slice(data, 3, 14);
    CHECK(mid.start_month == 1);
    CHECK(mid.months() == 14);
    CHECK(mid.target[0] == data.target[3]);
    CHECK_THROWS(slice(data, 40, 20));
}

TEST_CASE("synthetic generator is deterministic per seed") {
    const WatershedSeries a = generate_synthetic(5, 6, 123);
    const WatershedSeries b = generate_synthetic(5, 6, 123);
    const WatershedSeries c = generate_synthetic(5, 6, 124);
    CHECK(a.target == b.target);
    CHECK(a.graph.adjacency == b.graph.adjacency);
    for (std::size_t t = 0; t < a.features.size(); ++t) {
        CHECK(a.features[t] == b.features[t]);
    }
    CHECK(a.target != c.target);
}

TEST_CASE("synthetic watershed is a tree draining to node 0") {
    const WatershedSeries data = generate_synthetic(8, 4, 42);
    const Eigen::MatrixXd& adj = data.graph.adjacency;
    CHECK(data.graph.outlet_node == 0);
    for (int i = 0; i < 8; ++i) {
        CHECK(adj(i, i) == 1.0);
    }
    // Every node other than the outlet feeds exactly one smaller-index node.
    for (int j = 1; j < 8; ++j) {
        int downstream = 0;
        for (int i = 0; i < 8; ++i) {
            if (i != j && adj(i, j) == 1.0) {
                ++downstream;
                CHECK(i < j);
            }
        }
        CHECK(downstream == 1);
    }
}

TEST_CASE("synthetic budgets leave positive slack every water year") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 9ULL, 1234ULL}) {
        const WatershedSeries data = generate_synthetic(8, 12, seed);
        const auto budgets = annual_budgets(data);
        REQUIRE(budgets.size() == 12);
        for (const auto& year : budgets) {
            const double runoff = data.target.segment(year.begin, year.end - year.begin).sum();
            CHECK(runoff < year.budget_mm);
        }
    }
}

TEST_CASE("synthetic features carry the documented channels") {
    const WatershedSeries data = generate_synthetic(3, 4, 8);
    CHECK(data.feature_index("precipitation") == 0);
    CHECK(data.feature_index("evapotranspiration") == 1);
    CHECK(data.feature_index("temperature") == 2);
    CHECK(data.feature_index("swe") == 3);
    CHECK(data.feature_index("missing") == -1);
    CHECK(data.start_month == 10);

    // Snow never persists across a water-year boundary: swe at each
    // September step is zero (July melts the pack completely).
    for (int t = 0; t < data.months(); ++t) {
        if (data.calendar_month(t) == 8 || data.calendar_month(t) == 9) {
            for (int i = 0; i < data.nodes(); ++i) {
                CHECK(data.features[static_cast<std::size_t>(t)](i, 3) == 0.0);
            }
        }
    }
}

TEST_CASE("loading rejects malformed bundles") {
    const WatershedSeries data = generate_synthetic(3, 4, 6);
    const auto dir = std::filesystem::temp_directory_path() / "flowcast_badload";
    std::filesystem::remove_all(dir);
    save_dataset(data, dir);

    // Corrupt the target header.
    csv::write_file(dir / "target.csv", "t,flow\n0,1.0\n");
    CHECK_THROWS(load_dataset(dir));
    std::filesystem::remove_all(dir);
}
