#include "flowcast/commands.hpp"

#include "flowcast/constraints.hpp"
#include "flowcast/csv.hpp"
#include "flowcast/gp.hpp"
#include "flowcast/graph_gru.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/trainer.hpp"
#include "flowcast/water_balance.hpp"
#include "flowcast/weighting.hpp"

#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

namespace flowcast {

namespace {

WatershedSeries acquire_dataset(const RunConfig& config) {
    if (config.source == "files") {
        if (config.dataset_dir.empty()) {
            throw std::runtime_error("config: data.dataset_dir required when data.source = files");
        }
        return load_dataset(config.dataset_dir);
    }
    return generate_synthetic(config.n_nodes, config.n_years, config.seed);
}

std::vector<int> high_flow_indices(const WatershedSeries& data) {
    return month_filter(data.start_month, data.months(),
                        std::vector<int>(kHighFlowMonths.begin(), kHighFlowMonths.end()));
}

std::vector<int> all_indices(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
}

std::vector<MetricRow> metric_rows(const std::string& model, const WatershedSeries& test_data,
                                   const Eigen::VectorXd& predictions) {
    std::vector<MetricRow> rows;
    const auto subsets = std::map<std::string, std::vector<int>>{
        {"high_flow", high_flow_indices(test_data)},
        {"all", all_indices(test_data.months())},
    };
    for (const auto& [name, idx] : subsets) {
        const Eigen::VectorXd y = take(test_data.target, idx);
        const Eigen::VectorXd y_hat = take(predictions, idx);
        MetricRow row;
        row.model = model;
        row.subset = name;
        row.nse = nse(y, y_hat);
        row.nnse = nnse(row.nse);
        row.mae = mae(y, y_hat);
        row.n = static_cast<int>(idx.size());
        rows.push_back(row);
    }
    return rows;
}

// Profiles for both month subsets in one file per model.
void write_profiles(const std::map<std::string, Eigen::VectorXd>& predictions_by_model,
                    const WatershedSeries& test_data, const std::filesystem::path& run_dir) {
    const auto subsets = std::map<std::string, std::vector<int>>{
        {"high_flow", high_flow_indices(test_data)},
        {"all", all_indices(test_data.months())},
    };
    std::map<std::string, std::ostringstream> per_model;
    for (const auto& [model, _] : predictions_by_model) {
        per_model[model] << "subset,x,fraction\n";
    }
    for (const auto& [subset, idx] : subsets) {
        std::map<std::string, Eigen::VectorXd> errors;
        for (const auto& [model, pred] : predictions_by_model) {
            errors[model] = (take(pred, idx) - take(test_data.target, idx)).cwiseAbs();
        }
        for (const auto& [model, curve] : relative_performance_profile(errors)) {
            for (const auto& point : curve) {
                per_model[model] << subset << "," << csv::format_double(point.x) << ","
                                 << csv::format_double(point.fraction) << "\n";
            }
        }
    }
    for (const auto& [model, text] : per_model) {
        csv::write_file(run_dir / ("profile_" + model + ".csv"), text.str());
    }
}

struct TrainedModel {
    TrainResult result;
    std::array<WatershedSeries, 3> parts;
};

TrainedModel run_training(const RunConfig& config, const WatershedSeries& data,
                          const TrainConfig& train_config) {
    TrainedModel out{TrainResult{}, split(data, config.split)};
    out.result = train_model(out.parts[0], out.parts[1], train_config);
    return out;
}

void write_uq_artifacts(const RunConfig& config, const ModelParameters& params,
                        const WatershedSeries& train_part, const WatershedSeries& test_part,
                        const std::filesystem::path& run_dir, std::ostream& out) {
    const ForwardResult train_fwd = forward(params, train_part.graph, train_part.features);
    const GpState gp = gp_fit(train_fwd.latents, train_part.target);

    const ConstraintMode mode = parse_constraint_mode(config.mode);
    const ForwardResult test_fwd = predict(params, test_part, mode);
    const ForwardResult test_raw = forward(params, test_part.graph, test_part.features);

    const int t_test = test_part.months();
    std::vector<PredictionInterval> gp_pis;
    gp_pis.reserve(static_cast<std::size_t>(t_test));
    for (int t = 0; t < t_test; ++t) {
        gp_pis.push_back(gp_interval(gp, test_raw.latents.row(t)));
    }
    const std::vector<PredictionInterval> drop_pis =
        dropout_intervals(params, test_part.graph, test_part.features, all_indices(t_test),
                          config.dropout_rate, config.dropout_iters,
                          mix_seed(config.seed, 0xd70u));

    write_intervals_csv(test_part.target, test_fwd.predictions, gp_pis, "gp",
                        run_dir / "intervals_gp.csv");
    write_intervals_csv(test_part.target, test_fwd.predictions, drop_pis, "dropout",
                        run_dir / "intervals_dropout.csv");

    const CoverageWidth gp_cw = coverage_and_width(test_part.target, gp_pis);
    const CoverageWidth drop_cw = coverage_and_width(test_part.target, drop_pis);
    std::ostringstream summary;
    summary << "method,coverage_pct,mean_width_mm\n";
    summary << "gp," << csv::format_double(gp_cw.coverage_pct) << ","
            << csv::format_double(gp_cw.mean_width) << "\n";
    summary << "dropout," << csv::format_double(drop_cw.coverage_pct) << ","
            << csv::format_double(drop_cw.mean_width) << "\n";
    csv::write_file(run_dir / "uq_summary.csv", summary.str());

    out << "gp coverage " << gp_cw.coverage_pct << "% width " << gp_cw.mean_width
        << " mm; dropout coverage " << drop_cw.coverage_pct << "% width " << drop_cw.mean_width
        << " mm\n";
}

std::vector<BoundReport> bounds_grid(const RunConfig& config) {
    std::vector<BoundReport> rows;
    for (double a : config.bounds_a) {
        for (int k : config.bounds_k) {
            const double b = a + 1.0 / std::log(static_cast<double>(k)) + config.bounds_b_offset;
            const GroupWeighting grouping = assign_weights(uniform_grouping(k), a, b);
            for (double delta : config.bounds_delta) {
                for (long t : config.bounds_t) {
                    rows.push_back(bound_report(grouping, delta, t));
                }
            }
        }
    }
    if (rows.empty()) throw std::runtime_error("bounds: empty grid");
    return rows;
}

} // namespace

void cmd_generate(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream& out) {
    const WatershedSeries data =
        generate_synthetic(config.n_nodes, config.n_years, config.seed);
    save_dataset(data, run_dir / "dataset");

    out << "nodes " << data.nodes() << ", months " << data.months() << "\n";
    const auto budgets = annual_budgets(data);
    for (std::size_t y = 0; y < budgets.size(); ++y) {
        const double observed =
            data.target.segment(budgets[y].begin, budgets[y].end - budgets[y].begin).sum();
        out << "water year " << y << ": budget " << budgets[y].budget_mm << " mm, runoff "
            << observed << " mm, slack " << budgets[y].budget_mm - observed << " mm\n";
    }
}

void cmd_train(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out) {
    const WatershedSeries data = acquire_dataset(config);
    const TrainedModel trained = run_training(config, data, to_train_config(config));

    save_checkpoint(trained.result.params, run_dir / "checkpoint.csv");
    write_training_log(trained.result.log, config.iw_k, run_dir / "training_log.csv");

    const ConstraintMode mode = parse_constraint_mode(config.mode);
    out << "best validation nnse " << trained.result.best_val_nnse << " at epoch "
        << trained.result.best_epoch << "\n";
    if (mode == ConstraintMode::projection) {
        const ForwardResult fwd = predict(trained.result.params, trained.parts[0], mode);
        const ViolationReport report = violation_report(fwd.predictions, trained.parts[0]);
        write_violation_csv(report, run_dir / "violations_train.csv");
        out << "train violation fraction " << report.fraction << " magnitude "
            << report.magnitude_mm << " mm\n";
    }
}

void cmd_evaluate(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream& out) {
    if (config.checkpoint.empty()) {
        throw std::runtime_error("evaluate: run.checkpoint must point at a trained model");
    }
    const WatershedSeries data = acquire_dataset(config);
    const auto parts = split(data, config.split);
    const WatershedSeries& test_part = parts[2];
    const ModelParameters params = load_checkpoint(config.checkpoint);
    const ConstraintMode mode = parse_constraint_mode(config.mode);

    const ForwardResult fwd = predict(params, test_part, mode);
    const std::string model = to_string(mode) + (config.iw ? "_iw" : "");

    write_report_csv(metric_rows(model, test_part, fwd.predictions), run_dir / "report.csv");
    write_profiles({{model, fwd.predictions}}, test_part, run_dir);
    const ViolationReport violations = violation_report(fwd.predictions, test_part);
    write_violation_csv(violations, run_dir / ("violations_" + model + ".csv"));

    out << "test violation fraction " << violations.fraction << " magnitude "
        << violations.magnitude_mm << " mm\n";
    for (const auto& row : metric_rows(model, test_part, fwd.predictions)) {
        out << row.subset << " nnse " << (row.nnse ? csv::format_double(*row.nnse) : "undefined")
            << " mae " << row.mae << "\n";
    }
}

void cmd_uq(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out) {
    if (config.checkpoint.empty()) {
        throw std::runtime_error("uq: run.checkpoint must point at a trained model");
    }
    const WatershedSeries data = acquire_dataset(config);
    const auto parts = split(data, config.split);
    const ModelParameters params = load_checkpoint(config.checkpoint);
    write_uq_artifacts(config, params, parts[0], parts[2], run_dir, out);
}

void cmd_bounds(const RunConfig& config, const std::filesystem::path& run_dir,
                std::ostream& out) {
    const std::vector<BoundReport> rows = bounds_grid(config);
    write_bound_csv(rows, run_dir / "bounds.csv");
    int flagged = 0;
    for (const auto& r : rows) {
        if (r.flagged) ++flagged;
    }
    out << rows.size() << " grid points, " << flagged << " flagged\n";
    for (const auto& r : rows) {
        if (r.strict_conditions_ok && !r.d2_bound_ok) {
            out << "note: d2 bound fails at a=" << r.a << " k=" << r.k_groups << "\n";
        }
    }
}

void cmd_report(const RunConfig& config, const std::filesystem::path& run_dir,
                std::ostream& out) {
    const WatershedSeries data = acquire_dataset(config);
    const auto parts = split(data, config.split);
    const WatershedSeries& test_part = parts[2];

    struct ModelSpec {
        std::string name;
        std::string mode;
        bool iw;
    };
    const std::vector<ModelSpec> specs = {
        {"plain", "plain", false}, {"pg", "pg", false}, {"crl", "crl", false},
        {"crl_iw", "crl", true},
    };

    std::vector<MetricRow> rows;
    std::map<std::string, Eigen::VectorXd> predictions_by_model;
    ModelParameters crl_iw_params;
    for (const auto& spec : specs) {
        RunConfig model_config = config;
        model_config.mode = spec.mode;
        model_config.iw = spec.iw;
        const TrainConfig tc = to_train_config(model_config);
        const TrainResult trained = train_model(parts[0], parts[1], tc);

        save_checkpoint(trained.params, run_dir / ("checkpoint_" + spec.name + ".csv"));
        write_training_log(trained.log, model_config.iw_k,
                           run_dir / ("training_log_" + spec.name + ".csv"));

        const ForwardResult fwd = predict(trained.params, test_part, tc.mode);
        predictions_by_model[spec.name] = fwd.predictions;
        for (auto row : metric_rows(spec.name, test_part, fwd.predictions)) {
            rows.push_back(row);
        }
        write_violation_csv(violation_report(fwd.predictions, test_part),
                            run_dir / ("violations_" + spec.name + ".csv"));
        if (spec.name == "crl_iw") crl_iw_params = trained.params;

        out << spec.name << ": best val nnse " << trained.best_val_nnse << "\n";
    }

    write_report_csv(rows, run_dir / "report.csv");
    write_profiles(predictions_by_model, test_part, run_dir);

    RunConfig uq_config = config;
    uq_config.mode = "crl";
    uq_config.iw = true;
    write_uq_artifacts(uq_config, crl_iw_params, parts[0], test_part, run_dir, out);

    write_bound_csv(bounds_grid(config), run_dir / "bounds.csv");
}

} // namespace flowcast
