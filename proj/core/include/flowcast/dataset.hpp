#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace flowcast {

/// Hydrological year boundary: October through September.
constexpr int kWaterYearStartMonth = 10;

/// High streamflow window used as the primary evaluation subset.
constexpr std::array<int, 5> kHighFlowMonths = {3, 4, 5, 6, 7};

/// Static river-network topology. Row i of `adjacency` lists the inflow
/// connections of node i (weight >= 0, zero rows allowed for headwaters).
struct GraphSpec {
    int node_count = 0;
    Eigen::MatrixXd adjacency;
    int outlet_node = 0;

    void validate() const;
};

/// One watershed observed monthly: per-node feature matrices plus the
/// streamflow depth (mm over the watershed) recorded at the outlet.
struct WatershedSeries {
    GraphSpec graph;
    std::vector<Eigen::MatrixXd> features; // T matrices of shape n x m
    std::vector<std::string> feature_names;
    Eigen::VectorXd target;                // length T, mm/month, >= 0
    int start_month = kWaterYearStartMonth; // calendar month (1..12) of t = 0

    int months() const { return static_cast<int>(features.size()); }
    int nodes() const { return graph.node_count; }
    int feature_count() const { return static_cast<int>(feature_names.size()); }

    /// Calendar month (1..12) of step t.
    int calendar_month(int t) const { return (start_month - 1 + t) % 12 + 1; }

    int feature_index(const std::string& name) const; // -1 when absent
    int precipitation_channel() const;
    int evapotranspiration_channel() const;

    /// Node-mean value of a feature channel at step t.
    double node_mean(int t, int channel) const;

    void validate() const;
};

/// Chronological split in whole water years (train, then validation, then
/// test), always counted from the first October in the series.
struct SplitSpec {
    int train_years = 0;
    int val_years = 0;
    int test_years = 0;

    int total_years() const { return train_years + val_years + test_years; }
};

/// Index of the first step falling on a water-year boundary (first October).
int first_water_year_start(int start_month, int months);

/// Half-open [begin, end) ranges of every complete water year in the series.
std::vector<std::pair<int, int>> water_year_blocks(int start_month, int months);

/// Loads the four-file CSV bundle (graph.csv, features.csv, target.csv,
/// meta.csv) from `dir` and validates every invariant.
WatershedSeries load_dataset(const std::filesystem::path& dir);

/// Writes the CSV bundle; save followed by load reproduces the series
/// bit-exactly for all numeric fields.
void save_dataset(const WatershedSeries& data, const std::filesystem::path& dir);

std::array<WatershedSeries, 3> split(const WatershedSeries& data, const SplitSpec& spec);

/// Contiguous sub-series [t0, t0+length).
WatershedSeries slice(const WatershedSeries& data, int t0, int length);

/// Deterministic synthetic watershed: a river tree with a single outlet,
/// seasonal precipitation/temperature forcing, a snow reservoir that fills
/// in late fall and drains March through July, and a runoff target that
/// satisfies the annual water-balance inequality by construction.
WatershedSeries generate_synthetic(int n_nodes, int n_years, std::uint64_t seed);

} // namespace flowcast
