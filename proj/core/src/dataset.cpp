#include "flowcast/dataset.hpp"

#include "flowcast/csv.hpp"
#include "flowcast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowcast {

namespace {

std::string at(const std::string& file, std::size_t row) {
    return file + " row " + std::to_string(row + 1);
}

} // namespace

void GraphSpec::validate() const {
    if (node_count < 1) {
        throw std::runtime_error("graph: node_count must be positive");
    }
    if (adjacency.rows() != node_count || adjacency.cols() != node_count) {
        throw std::runtime_error("graph: adjacency must be n x n");
    }
    if (outlet_node < 0 || outlet_node >= node_count) {
        throw std::runtime_error("graph: outlet_node out of range");
    }
    for (int i = 0; i < node_count; ++i) {
        for (int j = 0; j < node_count; ++j) {
            const double a = adjacency(i, j);
            if (!std::isfinite(a)) {
                throw std::runtime_error("graph: non-finite adjacency entry at (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");
            }
            if (a < 0.0) {
                throw std::runtime_error("graph: negative adjacency entry at (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

int WatershedSeries::feature_index(const std::string& name) const {
    for (int j = 0; j < feature_count(); ++j) {
        if (feature_names[j] == name) return j;
    }
    return -1;
}

int WatershedSeries::precipitation_channel() const {
    const int j = feature_index("precipitation");
    if (j < 0) throw std::runtime_error("dataset: missing 'precipitation' feature channel");
    return j;
}

int WatershedSeries::evapotranspiration_channel() const {
    const int j = feature_index("evapotranspiration");
    if (j < 0) throw std::runtime_error("dataset: missing 'evapotranspiration' feature channel");
    return j;
}

double WatershedSeries::node_mean(int t, int channel) const {
    return features[static_cast<std::size_t>(t)].col(channel).mean();
}

void WatershedSeries::validate() const {
    graph.validate();
    const int n = nodes();
    const int m = feature_count();
    if (m < 1) throw std::runtime_error("dataset: no feature channels");
    if (start_month < 1 || start_month > 12) {
        throw std::runtime_error("dataset: start_month must be in 1..12");
    }
    if (static_cast<int>(features.size()) != static_cast<int>(target.size())) {
        throw std::runtime_error("dataset: feature and target lengths differ (" +
                                 std::to_string(features.size()) + " vs " +
                                 std::to_string(target.size()) + ")");
    }
    const int p = precipitation_channel();
    const int et = evapotranspiration_channel();
    for (int t = 0; t < months(); ++t) {
        const Eigen::MatrixXd& x = features[static_cast<std::size_t>(t)];
        if (x.rows() != n || x.cols() != m) {
            throw std::runtime_error("dataset: feature matrix at t=" + std::to_string(t) +
                                     " is not n x m");
        }
        if (!x.allFinite()) {
            throw std::runtime_error("dataset: non-finite feature value at t=" + std::to_string(t));
        }
        for (int i = 0; i < n; ++i) {
            if (x(i, p) < 0.0) {
                throw std::runtime_error("negative precipitation at t=" + std::to_string(t) +
                                         " node " + std::to_string(i));
            }
            if (x(i, et) < 0.0) {
                throw std::runtime_error("negative evapotranspiration at t=" + std::to_string(t) +
                                         " node " + std::to_string(i));
            }
        }
        if (!std::isfinite(target[t])) {
            throw std::runtime_error("non-finite streamflow at t=" + std::to_string(t));
        }
        if (target[t] < 0.0) {
            throw std::runtime_error("negative streamflow at t=" + std::to_string(t));
        }
    }
}

int first_water_year_start(int start_month, int months) {
    const int offset = (kWaterYearStartMonth - start_month + 12) % 12;
    return offset < months ? offset : -1;
}

std::vector<std::pair<int, int>> water_year_blocks(int start_month, int months) {
    std::vector<std::pair<int, int>> blocks;
    const int t0 = first_water_year_start(start_month, months);
    if (t0 < 0) return blocks;
    for (int begin = t0; begin + 12 <= months; begin += 12) {
        blocks.emplace_back(begin, begin + 12);
    }
    return blocks;
}

WatershedSeries load_dataset(const std::filesystem::path& dir) {
    WatershedSeries data;

    // graph.csv: node count, outlet index, then n adjacency rows.
    {
        const auto lines = csv::read_lines(dir / "graph.csv");
        if (lines.size() < 2) throw std::runtime_error("graph.csv: truncated file");
        const int n = static_cast<int>(csv::parse_long(lines[0], at("graph.csv", 0)));
        if (n < 1) throw std::runtime_error("graph.csv: node count must be positive");
        const int outlet = static_cast<int>(csv::parse_long(lines[1], at("graph.csv", 1)));
        if (lines.size() != static_cast<std::size_t>(n) + 2) {
            throw std::runtime_error("graph.csv: expected " + std::to_string(n) +
                                     " adjacency rows, found " + std::to_string(lines.size() - 2));
        }
        Eigen::MatrixXd adjacency(n, n);
        for (int i = 0; i < n; ++i) {
            const auto fields = csv::split_line(lines[static_cast<std::size_t>(i) + 2]);
            if (static_cast<int>(fields.size()) != n) {
                throw std::runtime_error(at("graph.csv", static_cast<std::size_t>(i) + 2) +
                                         ": expected " + std::to_string(n) + " columns");
            }
            for (int j = 0; j < n; ++j) {
                adjacency(i, j) =
                    csv::parse_double(fields[static_cast<std::size_t>(j)],
                                      at("graph.csv", static_cast<std::size_t>(i) + 2) +
                                          " col " + std::to_string(j + 1));
            }
        }
        data.graph = GraphSpec{n, std::move(adjacency), outlet};
    }

    // meta.csv: key,value rows.
    {
        const auto lines = csv::read_lines(dir / "meta.csv");
        bool saw_start = false;
        for (std::size_t r = 0; r < lines.size(); ++r) {
            const auto fields = csv::split_line(lines[r]);
            if (fields.size() != 2) {
                throw std::runtime_error(at("meta.csv", r) + ": expected key,value");
            }
            if (fields[0] == "start_month") {
                data.start_month = static_cast<int>(csv::parse_long(fields[1], at("meta.csv", r)));
                saw_start = true;
            } else if (fields[0] == "units") {
                // informational; streamflow and budgets are mm depth per month
            } else {
                throw std::runtime_error(at("meta.csv", r) + ": unknown key '" + fields[0] + "'");
            }
        }
        if (!saw_start) throw std::runtime_error("meta.csv: missing start_month");
    }

    // features.csv: header t,node,<names...>, one row per (t, node).
    {
        const auto lines = csv::read_lines(dir / "features.csv");
        if (lines.empty()) throw std::runtime_error("features.csv: empty file");
        const auto header = csv::split_line(lines[0]);
        if (header.size() < 3 || header[0] != "t" || header[1] != "node") {
            throw std::runtime_error("features.csv: header must start with t,node");
        }
        data.feature_names.assign(header.begin() + 2, header.end());
        const int n = data.graph.node_count;
        const int m = static_cast<int>(data.feature_names.size());
        const std::size_t rows = lines.size() - 1;
        if (rows % static_cast<std::size_t>(n) != 0) {
            throw std::runtime_error("features.csv: row count is not a multiple of node count");
        }
        const int T = static_cast<int>(rows / static_cast<std::size_t>(n));
        data.features.assign(static_cast<std::size_t>(T), Eigen::MatrixXd::Zero(n, m));
        for (std::size_t r = 1; r < lines.size(); ++r) {
            const auto fields = csv::split_line(lines[r]);
            if (static_cast<int>(fields.size()) != m + 2) {
                throw std::runtime_error(at("features.csv", r) + ": expected " +
                                         std::to_string(m + 2) + " columns");
            }
            const long t = csv::parse_long(fields[0], at("features.csv", r) + " col 1");
            const long node = csv::parse_long(fields[1], at("features.csv", r) + " col 2");
            if (t < 0 || t >= T) {
                throw std::runtime_error(at("features.csv", r) + ": t out of range");
            }
            if (node < 0 || node >= n) {
                throw std::runtime_error(at("features.csv", r) + ": node out of range");
            }
            for (int j = 0; j < m; ++j) {
                data.features[static_cast<std::size_t>(t)](node, j) =
                    csv::parse_double(fields[static_cast<std::size_t>(j) + 2],
                                      at("features.csv", r) + " col " + std::to_string(j + 3));
            }
        }
    }

    // target.csv: header t,streamflow_mm.
    {
        const auto lines = csv::read_lines(dir / "target.csv");
        if (lines.empty() || csv::split_line(lines[0]) != std::vector<std::string>{"t", "streamflow_mm"}) {
            throw std::runtime_error("target.csv: header must be t,streamflow_mm");
        }
        const int T = static_cast<int>(lines.size()) - 1;
        if (T != data.months()) {
            throw std::runtime_error("target.csv: " + std::to_string(T) +
                                     " rows but features cover " + std::to_string(data.months()) +
                                     " months");
        }
        data.target.resize(T);
        for (std::size_t r = 1; r < lines.size(); ++r) {
            const auto fields = csv::split_line(lines[r]);
            if (fields.size() != 2) {
                throw std::runtime_error(at("target.csv", r) + ": expected t,streamflow_mm");
            }
            const long t = csv::parse_long(fields[0], at("target.csv", r) + " col 1");
            if (t < 0 || t >= T) {
                throw std::runtime_error(at("target.csv", r) + ": t out of range");
            }
            data.target[t] = csv::parse_double(fields[1], at("target.csv", r) + " col 2");
        }
    }

    data.validate();
    return data;
}

void save_dataset(const WatershedSeries& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const int n = data.nodes();
    const int m = data.feature_count();

    std::ostringstream graph;
    graph << n << "\n" << data.graph.outlet_node << "\n";
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j) graph << ",";
            graph << csv::format_double(data.graph.adjacency(i, j));
        }
        graph << "\n";
    }
    csv::write_file(dir / "graph.csv", graph.str());

    std::ostringstream meta;
    meta << "start_month," << data.start_month << "\n";
    meta << "units,mm_per_month\n";
    csv::write_file(dir / "meta.csv", meta.str());

    std::ostringstream feats;
    feats << "t,node";
    for (const auto& name : data.feature_names) feats << "," << name;
    feats << "\n";
    for (int t = 0; t < data.months(); ++t) {
        for (int i = 0; i < n; ++i) {
            feats << t << "," << i;
            for (int j = 0; j < m; ++j) {
                feats << "," << csv::format_double(data.features[static_cast<std::size_t>(t)](i, j));
            }
            feats << "\n";
        }
    }
    csv::write_file(dir / "features.csv", feats.str());

    std::ostringstream target;
    target << "t,streamflow_mm\n";
    for (int t = 0; t < data.months(); ++t) {
        target << t << "," << csv::format_double(data.target[t]) << "\n";
    }
    csv::write_file(dir / "target.csv", target.str());
}

WatershedSeries slice(const WatershedSeries& data, int t0, int length) {
    if (t0 < 0 || length < 0 || t0 + length > data.months()) {
        throw std::runtime_error("slice: window out of range");
    }
    WatershedSeries out;
    out.graph = data.graph;
    out.feature_names = data.feature_names;
    out.start_month = (data.start_month - 1 + t0) % 12 + 1;
    out.features.assign(data.features.begin() + t0, data.features.begin() + t0 + length);
    out.target = data.target.segment(t0, length);
    return out;
}

std::array<WatershedSeries, 3> split(const WatershedSeries& data, const SplitSpec& spec) {
    if (spec.train_years < 0 || spec.val_years < 0 || spec.test_years < 0) {
        throw std::runtime_error("split: negative year counts");
    }
    const int t0 = first_water_year_start(data.start_month, data.months());
    if (t0 < 0) {
        throw std::runtime_error("split: no water-year boundary in the series");
    }
    const int available = (data.months() - t0) / 12;
    if (available < spec.total_years()) {
        throw std::runtime_error("split: insufficient years (" + std::to_string(available) +
                                 " complete water years available, " +
                                 std::to_string(spec.total_years()) + " requested)");
    }
    const int train_months = 12 * spec.train_years;
    const int val_months = 12 * spec.val_years;
    const int test_months = 12 * spec.test_years;
    return {slice(data, t0, train_months),
            slice(data, t0 + train_months, val_months),
            slice(data, t0 + train_months + val_months, test_months)};
}

namespace {

// Generator constants. Runoff sheds a fixed fraction of effective water and
// evapotranspiration is capped per node and water year so that
// sum(y) <= sum(Pmean - ETmean) holds with real margin every year.
constexpr double kRunoffCoef = 0.62;
constexpr double kBudgetMargin = 0.04;
constexpr double kSnowThresholdC = 0.0;

double seasonal_precip_factor(int month) {
    // Peaks mid-winter (December), trough in summer.
    constexpr double two_pi = 6.283185307179586;
    return 1.0 + 0.75 * std::cos(two_pi * (month - 12) / 12.0);
}

double seasonal_temperature(int month, double base) {
    constexpr double two_pi = 6.283185307179586;
    return base + 11.0 * std::cos(two_pi * (month - 7) / 12.0);
}

// Fraction of the snowpack released per melt month (March..July).
double melt_fraction(int month) {
    switch (month) {
        case 3: return 0.30;
        case 4: return 0.50;
        case 5: return 0.60;
        case 6: return 0.80;
        case 7: return 1.00; // snowpack empties before the water year closes
        default: return 0.0;
    }
}

bool accumulation_month(int month) {
    return month >= kWaterYearStartMonth || month <= 2; // Oct..Feb
}

} // namespace

WatershedSeries generate_synthetic(int n_nodes, int n_years, std::uint64_t seed) {
    if (n_nodes < 1) throw std::runtime_error("generate_synthetic: n_nodes must be >= 1");
    if (n_years < 3) throw std::runtime_error("generate_synthetic: n_years must be >= 3");

    Rng rng(mix_seed(seed, 0xf10c));
    const int n = n_nodes;
    const int T = 12 * n_years;

    WatershedSeries data;
    data.start_month = kWaterYearStartMonth;
    data.feature_names = {"precipitation", "evapotranspiration", "temperature", "swe"};
    const int m = 4;

    // River tree: node 0 is the outlet; every other node drains into some
    // node with a smaller index. Row i of A holds the inflows of node i,
    // plus a self connection.
    Eigen::MatrixXd adjacency = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) adjacency(i, i) = 1.0;
    for (int i = 1; i < n; ++i) {
        const int downstream = rng.uniform_int(0, i - 1);
        adjacency(downstream, i) = 1.0;
    }
    data.graph = GraphSpec{n, std::move(adjacency), 0};

    // Per-node climate parameters.
    std::vector<double> precip_base(static_cast<std::size_t>(n));
    std::vector<double> temp_base(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        precip_base[static_cast<std::size_t>(i)] = rng.uniform(60.0, 140.0);
        temp_base[static_cast<std::size_t>(i)] = rng.uniform(-4.0, 6.0);
    }

    // Draw weather, run the snow reservoir, and record uncapped ET demand.
    Eigen::MatrixXd precip(T, n), temperature(T, n), et_demand(T, n), swe(T, n), effective(T, n);
    std::vector<double> pack(static_cast<std::size_t>(n), 0.0);
    for (int y = 0; y < n_years; ++y) {
        const double year_factor = rng.lognormal_unit(0.18);
        for (int k = 0; k < 12; ++k) {
            const int t = 12 * y + k;
            const int month = (kWaterYearStartMonth - 1 + k) % 12 + 1;
            for (int i = 0; i < n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                const double p = precip_base[ui] * seasonal_precip_factor(month) * year_factor *
                                 rng.lognormal_unit(0.30);
                const double temp = seasonal_temperature(month, temp_base[ui]) + rng.normal(0.0, 1.2);
                double water = p;
                if (accumulation_month(month) && temp < kSnowThresholdC) {
                    pack[ui] += p;
                    water = 0.0;
                }
                const double melt = pack[ui] * melt_fraction(month);
                pack[ui] -= melt;
                water += melt;

                precip(t, i) = p;
                temperature(t, i) = temp;
                et_demand(t, i) = 2.0 + 3.0 * std::max(temp, 0.0);
                swe(t, i) = pack[ui];
                effective(t, i) = water;
            }
        }
    }

    // Cap evapotranspiration per node and water year so the annual budget
    // P - ET leaves at least kBudgetMargin of P above the runoff total.
    Eigen::MatrixXd et(T, n);
    for (int y = 0; y < n_years; ++y) {
        for (int i = 0; i < n; ++i) {
            double p_sum = 0.0, demand_sum = 0.0;
            for (int k = 0; k < 12; ++k) {
                p_sum += precip(12 * y + k, i);
                demand_sum += et_demand(12 * y + k, i);
            }
            const double cap = (1.0 - kRunoffCoef - kBudgetMargin) * p_sum;
            const double scale = demand_sum > cap ? cap / demand_sum : 1.0;
            for (int k = 0; k < 12; ++k) {
                et(12 * y + k, i) = et_demand(12 * y + k, i) * scale;
            }
        }
    }

    data.features.assign(static_cast<std::size_t>(T), Eigen::MatrixXd::Zero(n, m));
    data.target.resize(T);
    for (int t = 0; t < T; ++t) {
        Eigen::MatrixXd& x = data.features[static_cast<std::size_t>(t)];
        for (int i = 0; i < n; ++i) {
            x(i, 0) = precip(t, i);
            x(i, 1) = et(t, i);
            x(i, 2) = temperature(t, i);
            x(i, 3) = swe(t, i);
        }
        data.target[t] = kRunoffCoef * effective.row(t).mean();
    }

    data.validate();
    return data;
}

} // namespace flowcast
