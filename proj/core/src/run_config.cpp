#include "flowcast/run_config.hpp"

#include "flowcast/csv.hpp"
#include "flowcast/graph_gru.hpp"
#include "flowcast/weighting.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace flowcast {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw std::runtime_error("config: boolean expected for " + key + ", got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) {
    return static_cast<int>(csv::parse_long(v, "config key " + key));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& v, const std::string& key, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_list(v)) {
        out.push_back(parse(item, "config key " + key));
    }
    if (out.empty()) throw std::runtime_error("config: empty list for " + key);
    return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ",";
        if constexpr (std::is_same_v<T, double>) {
            out << csv::format_double(values[i]);
        } else {
            out << values[i];
        }
    }
    return out.str();
}

} // namespace

void RunConfig::validate() const {
    if (source != "synthetic" && source != "files") {
        throw std::runtime_error("config: data.source must be 'synthetic' or 'files'");
    }
    parse_constraint_mode(mode);
    if (loss != "squared" && loss != "absolute") {
        throw std::runtime_error("config: train.loss must be 'squared' or 'absolute'");
    }
    if (n_nodes < 1 || n_years < 3) {
        throw std::runtime_error("config: synthetic dataset needs n_nodes >= 1, n_years >= 3");
    }
    if (split.train_years < 1 || split.val_years < 1 || split.test_years < 1) {
        throw std::runtime_error("config: every split segment needs at least one year");
    }
    if (hidden < 1 || epochs < 1 || iw_k < 2 || iw_refresh < 1) {
        throw std::runtime_error("config: invalid model/training sizes");
    }
    if (!(iw_a > 0.0)) throw std::runtime_error("config: iw.a must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0) || dropout_iters < 2) {
        throw std::runtime_error("config: invalid uq settings");
    }
    if (bounds_a.empty() || bounds_k.empty() || bounds_delta.empty() || bounds_t.empty()) {
        throw std::runtime_error("config: bounds grid must be non-empty");
    }
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" &&
                section != "iw" && section != "uq" && section != "bounds" && section != "run") {
                throw std::runtime_error("config: unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section.empty() ? key : section + "." + key;

        if (qual == "data.source") cfg.source = value;
        else if (qual == "data.dataset_dir") cfg.dataset_dir = value;
        else if (qual == "data.n_nodes") cfg.n_nodes = parse_int(value, qual);
        else if (qual == "data.n_years") cfg.n_years = parse_int(value, qual);
        else if (qual == "data.train_years") cfg.split.train_years = parse_int(value, qual);
        else if (qual == "data.val_years") cfg.split.val_years = parse_int(value, qual);
        else if (qual == "data.test_years") cfg.split.test_years = parse_int(value, qual);
        else if (qual == "model.hidden") cfg.hidden = parse_int(value, qual);
        else if (qual == "model.head_hidden") cfg.head_hidden = parse_int(value, qual);
        else if (qual == "model.leaky_slope") cfg.leaky_slope = csv::parse_double(value, qual);
        else if (qual == "train.mode") cfg.mode = value;
        else if (qual == "train.iw") cfg.iw = parse_bool(value, qual);
        else if (qual == "train.epochs") cfg.epochs = parse_int(value, qual);
        else if (qual == "train.learning_rate") cfg.learning_rate = csv::parse_double(value, qual);
        else if (qual == "train.weight_decay") cfg.weight_decay = csv::parse_double(value, qual);
        else if (qual == "train.lambda_wbe") cfg.lambda_wbe = csv::parse_double(value, qual);
        else if (qual == "train.loss") cfg.loss = value;
        else if (qual == "train.standardize") cfg.standardize = parse_bool(value, qual);
        else if (qual == "iw.k") cfg.iw_k = parse_int(value, qual);
        else if (qual == "iw.a") cfg.iw_a = csv::parse_double(value, qual);
        else if (qual == "iw.b") cfg.iw_b = csv::parse_double(value, qual);
        else if (qual == "iw.refresh") cfg.iw_refresh = parse_int(value, qual);
        else if (qual == "uq.dropout_rate") cfg.dropout_rate = csv::parse_double(value, qual);
        else if (qual == "uq.dropout_iters") cfg.dropout_iters = parse_int(value, qual);
        else if (qual == "bounds.a_grid")
            cfg.bounds_a = parse_list<double>(value, qual, csv::parse_double);
        else if (qual == "bounds.k_grid")
            cfg.bounds_k = parse_list<int>(value, qual, [](const std::string& s, const std::string& c) {
                return static_cast<int>(csv::parse_long(s, c));
            });
        else if (qual == "bounds.b_offset") cfg.bounds_b_offset = csv::parse_double(value, qual);
        else if (qual == "bounds.delta_grid")
            cfg.bounds_delta = parse_list<double>(value, qual, csv::parse_double);
        else if (qual == "bounds.t_grid")
            cfg.bounds_t = parse_list<long>(value, qual, csv::parse_long);
        else if (qual == "run.seed")
            cfg.seed = static_cast<std::uint64_t>(csv::parse_long(value, qual));
        else if (qual == "run.checkpoint") cfg.checkpoint = value;
        else throw std::runtime_error("config: unknown key '" + qual + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("config: cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream out;
    out << "[data]\n";
    out << "source = " << c.source << "\n";
    out << "dataset_dir = " << c.dataset_dir.string() << "\n";
    out << "n_nodes = " << c.n_nodes << "\n";
    out << "n_years = " << c.n_years << "\n";
    out << "train_years = " << c.split.train_years << "\n";
    out << "val_years = " << c.split.val_years << "\n";
    out << "test_years = " << c.split.test_years << "\n";
    out << "\n[model]\n";
    out << "hidden = " << c.hidden << "\n";
    out << "head_hidden = " << c.head_hidden << "\n";
    out << "leaky_slope = " << csv::format_double(c.leaky_slope) << "\n";
    out << "\n[train]\n";
    out << "mode = " << c.mode << "\n";
    out << "iw = " << (c.iw ? "true" : "false") << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "learning_rate = " << csv::format_double(c.learning_rate) << "\n";
    out << "weight_decay = " << csv::format_double(c.weight_decay) << "\n";
    out << "lambda_wbe = " << csv::format_double(c.lambda_wbe) << "\n";
    out << "loss = " << c.loss << "\n";
    out << "standardize = " << (c.standardize ? "true" : "false") << "\n";
    out << "\n[iw]\n";
    out << "k = " << c.iw_k << "\n";
    out << "a = " << csv::format_double(c.iw_a) << "\n";
    out << "b = " << csv::format_double(c.iw_b) << "\n";
    out << "refresh = " << c.iw_refresh << "\n";
    out << "\n[uq]\n";
    out << "dropout_rate = " << csv::format_double(c.dropout_rate) << "\n";
    out << "dropout_iters = " << c.dropout_iters << "\n";
    out << "\n[bounds]\n";
    out << "a_grid = " << join(c.bounds_a) << "\n";
    out << "k_grid = " << join(c.bounds_k) << "\n";
    out << "b_offset = " << csv::format_double(c.bounds_b_offset) << "\n";
    out << "delta_grid = " << join(c.bounds_delta) << "\n";
    out << "t_grid = " << join(c.bounds_t) << "\n";
    out << "\n[run]\n";
    out << "seed = " << c.seed << "\n";
    out << "checkpoint = " << c.checkpoint.string() << "\n";
    return out.str();
}

TrainConfig to_train_config(const RunConfig& c) {
    TrainConfig t;
    t.epochs = c.epochs;
    t.learning_rate = c.learning_rate;
    t.weight_decay = c.weight_decay;
    t.hidden = c.hidden;
    t.head_hidden = c.head_hidden;
    t.leaky_slope = c.leaky_slope;
    t.loss = c.loss == "squared" ? LossKind::squared : LossKind::absolute;
    t.mode = parse_constraint_mode(c.mode);
    t.lambda_penalty = c.lambda_wbe;
    t.iw = c.iw;
    t.iw_k = c.iw_k;
    t.iw_a = c.iw_a;
    t.iw_b = c.iw_b;
    t.iw_refresh = c.iw_refresh;
    t.standardize = c.standardize;
    t.seed = c.seed;
    return t;
}

} // namespace flowcast
