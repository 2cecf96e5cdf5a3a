#include "flowcast/trainer.hpp"

#include "flowcast/csv.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/weighting.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flowcast {

namespace {

void fit_scalers(ModelParameters& params, const WatershedSeries& train_data) {
    const int n = train_data.nodes();
    const int m = train_data.feature_count();
    const int t_steps = train_data.months();
    const double count = static_cast<double>(n) * t_steps;

    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(m);
    for (const auto& x : train_data.features) mean += x.colwise().sum();
    mean /= count;
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(m);
    for (const auto& x : train_data.features) {
        var += (x.rowwise() - mean).array().square().matrix().colwise().sum();
    }
    var /= count;
    params.input_shift = mean;
    params.input_scale =
        var.array().sqrt().max(1e-9).matrix(); // guard against constant channels

    const double y_mean = train_data.target.mean();
    const double y_std =
        std::sqrt((train_data.target.array() - y_mean).square().mean());
    params.target_shift = y_mean;
    params.target_scale = y_std > 1e-9 ? y_std : 1.0;
}

double validation_nnse(const ModelParameters& params, const WatershedSeries& val_data,
                       ConstraintMode mode) {
    const ForwardResult fwd = predict(params, val_data, mode);
    const auto score = nnse(nse(val_data.target, fwd.predictions));
    return score ? *score : -1.0;
}

} // namespace

TrainResult train_model(const WatershedSeries& train_data, const WatershedSeries& val_data,
                        const TrainConfig& config) {
    if (config.epochs < 1) throw std::runtime_error("train: epochs must be positive");
    if (config.hidden < 1) throw std::runtime_error("train: hidden size must be positive");
    if (config.iw_refresh < 1) throw std::runtime_error("train: iw refresh must be positive");
    train_data.validate();
    val_data.validate();

    const int head = config.head_hidden > 0 ? config.head_hidden : config.hidden;
    ModelParameters params =
        init_parameters(train_data.feature_count(), config.hidden, head, config.seed);
    params.leaky_slope = config.leaky_slope;
    if (config.standardize) fit_scalers(params, train_data);

    const double iw_b =
        config.iw_b != 0.0 ? config.iw_b : default_b(config.iw_a, config.iw_k);
    LossSpec spec{config.loss, config.mode, config.lambda_penalty};
    const int t_steps = train_data.months();
    Eigen::VectorXd weights = Eigen::VectorXd::Ones(t_steps);

    TrainResult result;
    result.params = params;
    result.best_val_nnse = validation_nnse(params, val_data, config.mode);
    result.best_epoch = -1;

    // A constant validation target leaves NSE (and so NNSE) undefined for the
    // whole run; fall back to the lowest training loss so the snapshot still
    // tracks optimization progress instead of staying at the initial weights.
    const double val_spread =
        (val_data.target.array() - val_data.target.mean()).square().sum();
    const bool val_scored = val_spread > 0.0;
    double best_train_loss = std::numeric_limits<double>::infinity();

    int iw_nonempty_bins = 0;
    double iw_max_weight = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;

        if (config.iw && epoch % config.iw_refresh == 0) {
            const ForwardResult fwd = predict(params, train_data, config.mode);
            std::vector<double> residuals(static_cast<std::size_t>(t_steps));
            for (int t = 0; t < t_steps; ++t) {
                residuals[static_cast<std::size_t>(t)] =
                    residual_loss(fwd.predictions[t], train_data.target[t]);
            }
            const GroupWeighting grouping =
                assign_weights(group_samples(residuals, config.iw_k), config.iw_a, iw_b);
            weights = grouping.sample_weights;
            iw_nonempty_bins = 0;
            for (double p : grouping.probabilities) {
                if (p > 0.0) ++iw_nonempty_bins;
            }
            iw_max_weight = grouping.max_weight();
        }
        log.iw_nonempty_bins = iw_nonempty_bins;
        log.iw_max_weight = iw_max_weight;

        const LossGradient lg = loss_and_gradient(params, train_data, weights, spec);
        if (!std::isfinite(lg.total)) {
            throw std::runtime_error("train: diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
        }
        log.train_loss = lg.total;

        if (!val_scored && lg.total < best_train_loss) {
            best_train_loss = lg.total;
            result.best_epoch = epoch - 1; // params entering this epoch produced the loss
            result.params = params;
        }

        auto spans = coefficient_spans(params);
        auto grads = coefficient_spans(const_cast<ModelParameters&>(lg.grad));
        for (std::size_t s = 0; s < spans.size(); ++s) {
            for (std::ptrdiff_t i = 0; i < spans[s].size; ++i) {
                spans[s].data[i] -= config.learning_rate *
                                    (grads[s].data[i] + config.weight_decay * spans[s].data[i]);
            }
        }

        log.val_nnse = validation_nnse(params, val_data, config.mode);
        if (val_scored && log.val_nnse > result.best_val_nnse) {
            result.best_val_nnse = log.val_nnse;
            result.best_epoch = epoch;
            result.params = params;
        }
        result.log.push_back(log);
    }

    if (!val_scored) {
        // The last update was never scored inside the loop.
        const double final_loss = loss_and_gradient(params, train_data, weights, spec).total;
        if (std::isfinite(final_loss) && final_loss < best_train_loss) {
            result.best_epoch = config.epochs - 1;
            result.params = params;
        }
    }
    return result;
}

void write_training_log(const std::vector<EpochLog>& log, int k_groups,
                        const std::filesystem::path& file) {
    std::ostringstream out;
    out << "epoch,train_loss,val_nnse,iw_k,iw_nonempty_bins,iw_max_weight\n";
    for (const auto& e : log) {
        out << e.epoch << "," << csv::format_double(e.train_loss) << ","
            << csv::format_double(e.val_nnse) << "," << k_groups << "," << e.iw_nonempty_bins
            << "," << csv::format_double(e.iw_max_weight) << "\n";
    }
    csv::write_file(file, out.str());
}

} // namespace flowcast
