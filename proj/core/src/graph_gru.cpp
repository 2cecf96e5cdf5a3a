#include "flowcast/graph_gru.hpp"

#include "flowcast/constraints.hpp"
#include "flowcast/csv.hpp"
#include "flowcast/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowcast {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw std::runtime_error(std::string("non-finite values in ") + what);
    }
}

} // namespace

void ModelParameters::validate() const {
    const int m = input_dim();
    const int h = hidden_dim();
    const int hm = head_dim();
    auto check = [](bool ok, const char* what) {
        if (!ok) throw std::runtime_error(std::string("model parameters: bad shape for ") + what);
    };
    check(m > 0 && h > 0 && hm > 0, "dimensions");
    check(w_z.rows() == m && w_z.cols() == h, "w_z");
    check(w_h.rows() == m && w_h.cols() == h, "w_h");
    check(u_r.rows() == h && u_r.cols() == h, "u_r");
    check(u_z.rows() == h && u_z.cols() == h, "u_z");
    check(u_h.rows() == h && u_h.cols() == h, "u_h");
    check(b_r.size() == h && b_z.size() == h && b_h.size() == h, "biases");
    check(head_w1.rows() == h && head_w1.cols() == hm, "head_w1");
    check(head_b1.size() == hm, "head_b1");
    check(head_w2.size() == hm, "head_w2");
    check(input_shift.size() == m && input_scale.size() == m, "input scalers");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
        throw std::runtime_error("model parameters: leaky slope must be in (0, 1)");
    }
    for (const auto& span : coefficient_spans(const_cast<ModelParameters&>(*this))) {
        for (std::ptrdiff_t i = 0; i < span.size; ++i) {
            if (!std::isfinite(span.data[i])) {
                throw std::runtime_error(std::string("model parameters: non-finite entry in ") +
                                         span.name);
            }
        }
    }
    if ((input_scale.array() <= 0.0).any() || !(target_scale > 0.0)) {
        throw std::runtime_error("model parameters: scales must be positive");
    }
}

std::vector<CoeffSpan> coefficient_spans(ModelParameters& p) {
    return {
        {"w_r", p.w_r.data(), p.w_r.size()},       {"w_z", p.w_z.data(), p.w_z.size()},
        {"w_h", p.w_h.data(), p.w_h.size()},       {"u_r", p.u_r.data(), p.u_r.size()},
        {"u_z", p.u_z.data(), p.u_z.size()},       {"u_h", p.u_h.data(), p.u_h.size()},
        {"b_r", p.b_r.data(), p.b_r.size()},       {"b_z", p.b_z.data(), p.b_z.size()},
        {"b_h", p.b_h.data(), p.b_h.size()},       {"head_w1", p.head_w1.data(), p.head_w1.size()},
        {"head_b1", p.head_b1.data(), p.head_b1.size()},
        {"head_w2", p.head_w2.data(), p.head_w2.size()},
        {"head_b2", &p.head_b2, 1},
    };
}

ModelParameters init_parameters(int input_dim, int hidden_dim, int head_dim, std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1 || head_dim < 1) {
        throw std::runtime_error("init_parameters: dimensions must be positive");
    }
    ModelParameters p;
    p.w_r.resize(input_dim, hidden_dim);
    p.w_z.resize(input_dim, hidden_dim);
    p.w_h.resize(input_dim, hidden_dim);
    p.u_r.resize(hidden_dim, hidden_dim);
    p.u_z.resize(hidden_dim, hidden_dim);
    p.u_h.resize(hidden_dim, hidden_dim);
    p.b_r.resize(hidden_dim);
    p.b_z.resize(hidden_dim);
    p.b_h.resize(hidden_dim);
    p.head_w1.resize(hidden_dim, head_dim);
    p.head_b1.resize(head_dim);
    p.head_w2.resize(head_dim);
    p.head_b2 = 0.0;
    p.input_shift = Eigen::RowVectorXd::Zero(input_dim);
    p.input_scale = Eigen::RowVectorXd::Ones(input_dim);

    Rng rng(mix_seed(seed, 0x1417));
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (auto& span : coefficient_spans(p)) {
        for (std::ptrdiff_t i = 0; i < span.size; ++i) {
            span.data[i] = rng.uniform(-bound, bound);
        }
    }
    return p;
}

ModelParameters zeros_like(const ModelParameters& params) {
    ModelParameters g = params;
    for (auto& span : coefficient_spans(g)) {
        std::fill(span.data, span.data + span.size, 0.0);
    }
    return g;
}

void save_checkpoint(const ModelParameters& params, const std::filesystem::path& file) {
    params.validate();
    std::ostringstream out;
    out << "flowcast_checkpoint,1\n";
    out << "m," << params.input_dim() << "\n";
    out << "h," << params.hidden_dim() << "\n";
    out << "h_mid," << params.head_dim() << "\n";
    out << "alpha," << csv::format_double(params.leaky_slope) << "\n";
    auto emit = [&out](const char* name, const Eigen::MatrixXd& m) {
        out << "matrix," << name << "," << m.rows() << "," << m.cols() << "\n";
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if (j) out << ",";
                out << csv::format_double(m(i, j));
            }
            out << "\n";
        }
    };
    auto& p = const_cast<ModelParameters&>(params);
    emit("w_r", p.w_r);
    emit("w_z", p.w_z);
    emit("w_h", p.w_h);
    emit("u_r", p.u_r);
    emit("u_z", p.u_z);
    emit("u_h", p.u_h);
    emit("b_r", p.b_r);
    emit("b_z", p.b_z);
    emit("b_h", p.b_h);
    emit("head_w1", p.head_w1);
    emit("head_b1", p.head_b1);
    emit("head_w2", Eigen::MatrixXd(p.head_w2.transpose()));
    emit("head_b2", Eigen::MatrixXd::Constant(1, 1, p.head_b2));
    emit("input_shift", p.input_shift);
    emit("input_scale", p.input_scale);
    emit("target_shift", Eigen::MatrixXd::Constant(1, 1, p.target_shift));
    emit("target_scale", Eigen::MatrixXd::Constant(1, 1, p.target_scale));
    csv::write_file(file, out.str());
}

ModelParameters load_checkpoint(const std::filesystem::path& file) {
    const auto lines = csv::read_lines(file);
    if (lines.size() < 5 || csv::split_line(lines[0]) != std::vector<std::string>{"flowcast_checkpoint", "1"}) {
        throw std::runtime_error("checkpoint: unrecognized header in " + file.string());
    }
    auto header_value = [&lines, &file](std::size_t row, const std::string& key) {
        const auto fields = csv::split_line(lines[row]);
        if (fields.size() != 2 || fields[0] != key) {
            throw std::runtime_error("checkpoint: expected '" + key + "' on line " +
                                     std::to_string(row + 1) + " of " + file.string());
        }
        return fields[1];
    };
    const int m = static_cast<int>(csv::parse_long(header_value(1, "m"), "checkpoint m"));
    const int h = static_cast<int>(csv::parse_long(header_value(2, "h"), "checkpoint h"));
    const int hm = static_cast<int>(csv::parse_long(header_value(3, "h_mid"), "checkpoint h_mid"));
    const double alpha = csv::parse_double(header_value(4, "alpha"), "checkpoint alpha");

    ModelParameters p = init_parameters(m, h, hm, 0);
    p.leaky_slope = alpha;

    std::size_t row = 5;
    auto take = [&lines, &row, &file](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (row >= lines.size()) {
            throw std::runtime_error("checkpoint: missing block '" + name + "' in " + file.string());
        }
        const auto head = csv::split_line(lines[row]);
        if (head.size() != 4 || head[0] != "matrix" || head[1] != name) {
            throw std::runtime_error("checkpoint: expected block '" + name + "' at line " +
                                     std::to_string(row + 1) + " of " + file.string());
        }
        if (csv::parse_long(head[2], name) != rows || csv::parse_long(head[3], name) != cols) {
            throw std::runtime_error("checkpoint: block '" + name + "' has unexpected shape");
        }
        ++row;
        Eigen::MatrixXd out(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i, ++row) {
            if (row >= lines.size()) {
                throw std::runtime_error("checkpoint: truncated block '" + name + "'");
            }
            const auto fields = csv::split_line(lines[row]);
            if (static_cast<Eigen::Index>(fields.size()) != cols) {
                throw std::runtime_error("checkpoint: bad column count in block '" + name + "'");
            }
            for (Eigen::Index j = 0; j < cols; ++j) {
                out(i, j) = csv::parse_double(fields[static_cast<std::size_t>(j)],
                                              name + (" row " + std::to_string(i)));
            }
        }
        return out;
    };

    p.w_r = take("w_r", m, h);
    p.w_z = take("w_z", m, h);
    p.w_h = take("w_h", m, h);
    p.u_r = take("u_r", h, h);
    p.u_z = take("u_z", h, h);
    p.u_h = take("u_h", h, h);
    p.b_r = take("b_r", 1, h);
    p.b_z = take("b_z", 1, h);
    p.b_h = take("b_h", 1, h);
    p.head_w1 = take("head_w1", h, hm);
    p.head_b1 = take("head_b1", 1, hm);
    p.head_w2 = take("head_w2", 1, hm).transpose();
    p.head_b2 = take("head_b2", 1, 1)(0, 0);
    p.input_shift = take("input_shift", 1, m);
    p.input_scale = take("input_scale", 1, m);
    p.target_shift = take("target_shift", 1, 1)(0, 0);
    p.target_scale = take("target_scale", 1, 1)(0, 0);
    if (row != lines.size()) {
        throw std::runtime_error("checkpoint: trailing content in " + file.string());
    }
    p.validate();
    return p;
}

Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency) {
    Eigen::MatrixXd out = adjacency;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).sum();
        if (s > 0.0) out.row(i) /= s;
    }
    return out;
}

Eigen::MatrixXd gru_step(const ModelParameters& params, const Eigen::MatrixXd& adjacency_norm,
                         const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& h_prev) {
    const int n = static_cast<int>(x_t.rows());
    if (x_t.cols() != params.input_dim()) throw std::runtime_error("gru_step: feature width mismatch");
    if (h_prev.rows() != n || h_prev.cols() != params.hidden_dim()) {
        throw std::runtime_error("gru_step: hidden state shape mismatch");
    }
    if (adjacency_norm.rows() != n || adjacency_norm.cols() != n) {
        throw std::runtime_error("gru_step: adjacency shape mismatch");
    }
    require_finite(x_t, "gru_step input");
    require_finite(h_prev, "gru_step hidden state");

    const Eigen::MatrixXd g = adjacency_norm * h_prev;
    const Eigen::MatrixXd r = sigmoid((x_t * params.w_r + g * params.u_r).rowwise() + params.b_r);
    const Eigen::MatrixXd z = sigmoid((x_t * params.w_z + g * params.u_z).rowwise() + params.b_z);
    const Eigen::MatrixXd c =
        ((x_t * params.w_h + r.cwiseProduct(g) * params.u_h).rowwise() + params.b_h)
            .array()
            .tanh()
            .matrix();
    return z.cwiseProduct(h_prev) + (1.0 - z.array()).matrix().cwiseProduct(c);
}

namespace {

// Everything the backward pass needs from one unrolled forward pass.
struct Trace {
    Eigen::MatrixXd adjacency_norm;
    std::vector<Eigen::MatrixXd> xs;     // standardized inputs
    std::vector<Eigen::MatrixXd> g, r, z, c, h; // h has T+1 entries, h[0] = 0
    Eigen::MatrixXd l1_pre;              // T x h_mid
    Eigen::VectorXd phys;                // head output before the clamp
    Eigen::VectorXd raw_pred;            // max(0, phys), before projection
};

Trace run_forward(const ModelParameters& params, const GraphSpec& graph,
                  const std::vector<Eigen::MatrixXd>& features) {
    params.validate();
    graph.validate();
    const int n = graph.node_count;
    const int h = params.hidden_dim();
    const int hm = params.head_dim();
    const int T = static_cast<int>(features.size());

    Trace tr;
    tr.adjacency_norm = row_normalized(graph.adjacency);
    tr.xs.reserve(static_cast<std::size_t>(T));
    tr.g.reserve(static_cast<std::size_t>(T));
    tr.r.reserve(static_cast<std::size_t>(T));
    tr.z.reserve(static_cast<std::size_t>(T));
    tr.c.reserve(static_cast<std::size_t>(T));
    tr.h.reserve(static_cast<std::size_t>(T) + 1);
    tr.h.push_back(Eigen::MatrixXd::Zero(n, h));
    tr.l1_pre.resize(T, hm);
    tr.phys.resize(T);
    tr.raw_pred.resize(T);

    for (int t = 0; t < T; ++t) {
        const Eigen::MatrixXd& x_raw = features[static_cast<std::size_t>(t)];
        if (x_raw.rows() != n || x_raw.cols() != params.input_dim()) {
            throw std::runtime_error("forward: feature matrix shape mismatch at t=" +
                                     std::to_string(t));
        }
        require_finite(x_raw, "forward input");
        Eigen::MatrixXd xs = ((x_raw.rowwise() - params.input_shift).array().rowwise() /
                              params.input_scale.array())
                                 .matrix();

        const Eigen::MatrixXd& h_prev = tr.h.back();
        Eigen::MatrixXd g = tr.adjacency_norm * h_prev;
        Eigen::MatrixXd r = sigmoid((xs * params.w_r + g * params.u_r).rowwise() + params.b_r);
        Eigen::MatrixXd z = sigmoid((xs * params.w_z + g * params.u_z).rowwise() + params.b_z);
        Eigen::MatrixXd c =
            ((xs * params.w_h + r.cwiseProduct(g) * params.u_h).rowwise() + params.b_h)
                .array()
                .tanh()
                .matrix();
        Eigen::MatrixXd h_new =
            z.cwiseProduct(h_prev) + (1.0 - z.array()).matrix().cwiseProduct(c);

        const Eigen::RowVectorXd latent = h_new.row(graph.outlet_node);
        const Eigen::RowVectorXd l1_pre = latent * params.head_w1 + params.head_b1;
        Eigen::RowVectorXd l1 = l1_pre;
        for (int j = 0; j < hm; ++j) {
            if (l1[j] < 0.0) l1[j] *= params.leaky_slope;
        }
        const double raw = l1.dot(params.head_w2) + params.head_b2;
        const double phys = params.target_shift + params.target_scale * raw;

        tr.xs.push_back(std::move(xs));
        tr.g.push_back(std::move(g));
        tr.r.push_back(std::move(r));
        tr.z.push_back(std::move(z));
        tr.c.push_back(std::move(c));
        tr.h.push_back(std::move(h_new));
        tr.l1_pre.row(t) = l1_pre;
        tr.phys[t] = phys;
        tr.raw_pred[t] = std::max(0.0, phys);
    }
    return tr;
}

Eigen::MatrixXd latents_from(const Trace& tr, int outlet, int hidden) {
    const int T = static_cast<int>(tr.xs.size());
    Eigen::MatrixXd latents(T, hidden);
    for (int t = 0; t < T; ++t) {
        latents.row(t) = tr.h[static_cast<std::size_t>(t) + 1].row(outlet);
    }
    return latents;
}

// Pulls prediction-space gradients back through the head and the recurrence.
// d_pred is d(objective)/d(raw_pred), i.e. after the clamp but before any
// projection (the caller folds the projection in).
void backpropagate(const ModelParameters& params, const Trace& tr, int outlet,
                   const Eigen::VectorXd& d_pred, ModelParameters& grad) {
    const int T = static_cast<int>(tr.xs.size());
    const int n = static_cast<int>(tr.adjacency_norm.rows());
    const int h = params.hidden_dim();
    const int hm = params.head_dim();

    const Eigen::MatrixXd adj_t = tr.adjacency_norm.transpose();
    Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(n, h);

    for (int t = T - 1; t >= 0; --t) {
        const auto ut = static_cast<std::size_t>(t);
        double d_phys = tr.phys[t] > 0.0 ? d_pred[t] : 0.0;
        const double d_raw = d_phys * params.target_scale;

        // Head.
        Eigen::RowVectorXd l1 = tr.l1_pre.row(t);
        Eigen::RowVectorXd dl1_pre(hm);
        for (int j = 0; j < hm; ++j) {
            const double slope = l1[j] > 0.0 ? 1.0 : params.leaky_slope;
            dl1_pre[j] = d_raw * params.head_w2[j] * slope;
            if (l1[j] < 0.0) l1[j] *= params.leaky_slope;
        }
        grad.head_b2 += d_raw;
        grad.head_w2 += d_raw * l1.transpose();
        grad.head_b1 += dl1_pre;
        const Eigen::RowVectorXd latent = tr.h[ut + 1].row(outlet);
        grad.head_w1 += latent.transpose() * dl1_pre;
        d_h.row(outlet) += dl1_pre * params.head_w1.transpose();

        // Recurrence.
        const Eigen::MatrixXd& g = tr.g[ut];
        const Eigen::MatrixXd& r = tr.r[ut];
        const Eigen::MatrixXd& z = tr.z[ut];
        const Eigen::MatrixXd& c = tr.c[ut];
        const Eigen::MatrixXd& h_prev = tr.h[ut];
        const Eigen::MatrixXd& xs = tr.xs[ut];

        const Eigen::MatrixXd d_c = d_h.cwiseProduct((1.0 - z.array()).matrix());
        const Eigen::MatrixXd d_z = d_h.cwiseProduct(h_prev - c);
        Eigen::MatrixXd d_h_prev = d_h.cwiseProduct(z);

        const Eigen::MatrixXd d_c_pre =
            d_c.cwiseProduct((1.0 - c.array().square()).matrix());
        const Eigen::MatrixXd d_rg = d_c_pre * params.u_h.transpose();
        const Eigen::MatrixXd d_r = d_rg.cwiseProduct(g);
        Eigen::MatrixXd d_g = d_rg.cwiseProduct(r);

        const Eigen::MatrixXd d_r_pre =
            d_r.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
        const Eigen::MatrixXd d_z_pre =
            d_z.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
        d_g += d_r_pre * params.u_r.transpose() + d_z_pre * params.u_z.transpose();
        d_h_prev += adj_t * d_g;

        grad.w_r += xs.transpose() * d_r_pre;
        grad.w_z += xs.transpose() * d_z_pre;
        grad.w_h += xs.transpose() * d_c_pre;
        grad.u_r += g.transpose() * d_r_pre;
        grad.u_z += g.transpose() * d_z_pre;
        grad.u_h += r.cwiseProduct(g).transpose() * d_c_pre;
        grad.b_r += d_r_pre.colwise().sum();
        grad.b_z += d_z_pre.colwise().sum();
        grad.b_h += d_c_pre.colwise().sum();

        d_h = std::move(d_h_prev);
    }
}

} // namespace

ConstraintMode parse_constraint_mode(const std::string& name) {
    if (name == "plain") return ConstraintMode::plain;
    if (name == "pg") return ConstraintMode::penalty;
    if (name == "crl") return ConstraintMode::projection;
    throw std::runtime_error("unknown mode '" + name + "' (expected plain, pg, or crl)");
}

std::string to_string(ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::plain: return "plain";
        case ConstraintMode::penalty: return "pg";
        case ConstraintMode::projection: return "crl";
    }
    throw std::runtime_error("unknown constraint mode");
}

ForwardResult forward(const ModelParameters& params, const GraphSpec& graph,
                      const std::vector<Eigen::MatrixXd>& features) {
    const Trace tr = run_forward(params, graph, features);
    return {latents_from(tr, graph.outlet_node, params.hidden_dim()), tr.raw_pred};
}

ForwardResult predict(const ModelParameters& params, const WatershedSeries& data,
                      ConstraintMode mode) {
    ForwardResult out = forward(params, data.graph, data.features);
    if (mode == ConstraintMode::projection) {
        out.predictions = apply_projection(out.predictions, annual_budgets(data));
    }
    return out;
}

LossGradient loss_and_gradient(const ModelParameters& params, const WatershedSeries& data,
                               const Eigen::VectorXd& weights, const LossSpec& spec) {
    const int T = data.months();
    if (static_cast<int>(weights.size()) != T) {
        throw std::runtime_error("loss_and_gradient: weight length mismatch");
    }
    const Trace tr = run_forward(params, data.graph, data.features);
    const auto budgets = annual_budgets(data);

    LossGradient out;
    out.grad = zeros_like(params);
    out.predictions = tr.raw_pred;
    if (spec.mode == ConstraintMode::projection) {
        out.predictions = apply_projection(tr.raw_pred, budgets);
    }

    // Residual term and its gradient with respect to the served predictions.
    const double s = params.target_scale;
    Eigen::VectorXd d_served = Eigen::VectorXd::Zero(T);
    double main = 0.0;
    for (int t = 0; t < T; ++t) {
        const double resid = (out.predictions[t] - data.target[t]) / s;
        if (spec.kind == LossKind::squared) {
            main += weights[t] * resid * resid;
            d_served[t] = weights[t] * 2.0 * resid / (s * T);
        } else {
            main += weights[t] * std::abs(resid);
            const double sign = resid > 0.0 ? 1.0 : (resid < 0.0 ? -1.0 : 0.0);
            d_served[t] = weights[t] * sign / (s * T);
        }
    }
    main /= T;
    out.main_term = main;

    // Projection backward: inside a rescaled year, served = rho * raw with
    // rho = budget / sum(raw), so d_raw = rho * d_served - (rho / S) * <d_served, raw>.
    Eigen::VectorXd d_raw = d_served;
    if (spec.mode == ConstraintMode::projection) {
        for (const auto& year : budgets) {
            const int len = year.end - year.begin;
            const double total = tr.raw_pred.segment(year.begin, len).sum();
            if (year.budget_mm <= 0.0) {
                d_raw.segment(year.begin, len).setZero();
            } else if (total > year.budget_mm) {
                const double rho = year.budget_mm / total;
                const double inner =
                    d_served.segment(year.begin, len).dot(tr.raw_pred.segment(year.begin, len));
                d_raw.segment(year.begin, len).array() =
                    rho * d_served.segment(year.begin, len).array() - (rho / total) * inner;
            }
        }
    }

    double penalty = 0.0;
    if (spec.mode == ConstraintMode::penalty && !budgets.empty()) {
        const double ny = static_cast<double>(budgets.size());
        for (const auto& year : budgets) {
            const int len = year.end - year.begin;
            const double total = tr.raw_pred.segment(year.begin, len).sum();
            const double excess = total - year.budget_mm;
            if (excess > 0.0) {
                penalty += excess / s;
                d_raw.segment(year.begin, len).array() += spec.lambda_penalty / (s * ny);
            }
        }
        penalty /= ny;
    }
    out.penalty_term = penalty;
    out.total = main + spec.lambda_penalty * penalty;

    backpropagate(params, tr, data.graph.outlet_node, d_raw, out.grad);

    for (const auto& span : coefficient_spans(out.grad)) {
        for (std::ptrdiff_t i = 0; i < span.size; ++i) {
            if (!std::isfinite(span.data[i])) {
                throw std::runtime_error(std::string("loss_and_gradient: non-finite gradient in ") +
                                         span.name);
            }
        }
    }
    return out;
}

double training_loss(const ModelParameters& params, const WatershedSeries& data,
                     const Eigen::VectorXd& weights, const LossSpec& spec) {
    const int T = data.months();
    if (static_cast<int>(weights.size()) != T) {
        throw std::runtime_error("training_loss: weight length mismatch");
    }
    const ForwardResult fwd = predict(params, data, spec.mode == ConstraintMode::projection
                                                       ? ConstraintMode::projection
                                                       : ConstraintMode::plain);
    const double s = params.target_scale;
    double main = 0.0;
    for (int t = 0; t < T; ++t) {
        const double resid = (fwd.predictions[t] - data.target[t]) / s;
        main += weights[t] * (spec.kind == LossKind::squared ? resid * resid : std::abs(resid));
    }
    main /= T;

    double penalty = 0.0;
    if (spec.mode == ConstraintMode::penalty) {
        const auto budgets = annual_budgets(data);
        if (!budgets.empty()) {
            for (const auto& year : budgets) {
                const double total =
                    fwd.predictions.segment(year.begin, year.end - year.begin).sum();
                penalty += std::max(0.0, total - year.budget_mm) / s;
            }
            penalty /= static_cast<double>(budgets.size());
        }
    }
    return main + spec.lambda_penalty * penalty;
}

} // namespace flowcast
