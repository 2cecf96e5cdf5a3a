#include "flowcast/commands.hpp"
#include "flowcast/csv.hpp"
#include "flowcast/run_config.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;

// runs/<command>-YYYYMMDD-HHMMSS[-k], unique within this process's view.
fs::path make_run_dir(const fs::path& base, const std::string& command) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);

    fs::path dir = base / (command + "-" + stamp);
    for (int k = 1; fs::exists(dir); ++k) {
        dir = base / (command + "-" + std::string(stamp) + "-" + std::to_string(k));
    }
    fs::create_directories(dir);
    return dir;
}

using CommandFn = void (*)(const flowcast::RunConfig&, const fs::path&, std::ostream&);

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"watershed streamflow forecasting toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // accept the global flags after the subcommand too

    std::string config_path;
    std::string out_base = "runs";
    std::optional<std::uint64_t> seed_override;
    app.add_option("--config", config_path, "configuration file (key = value with sections)");
    app.add_option("--out", out_base, "base directory for run outputs");
    app.add_option("--seed", seed_override, "override the configured seed");

    const std::vector<std::pair<std::string, CommandFn>> commands = {
        {"generate", &flowcast::cmd_generate}, {"train", &flowcast::cmd_train},
        {"evaluate", &flowcast::cmd_evaluate}, {"uq", &flowcast::cmd_uq},
        {"bounds", &flowcast::cmd_bounds},     {"report", &flowcast::cmd_report},
    };
    for (const auto& [name, fn] : commands) {
        app.add_subcommand(name)->callback([]() {});
        (void)fn;
    }

    CLI11_PARSE(app, argc, argv);

    const std::string chosen = app.get_subcommands().front()->get_name();
    try {
        flowcast::RunConfig config = config_path.empty()
                                         ? flowcast::RunConfig{}
                                         : flowcast::load_run_config(config_path);
        if (seed_override) config.seed = *seed_override;
        config.validate();

        const fs::path run_dir = make_run_dir(out_base, chosen);
        flowcast::csv::write_file(run_dir / "resolved.cfg", flowcast::serialize_run_config(config));
        std::cout << "run directory: " << run_dir.string() << "\n";

        for (const auto& [name, fn] : commands) {
            if (name == chosen) {
                fn(config, run_dir, std::cout);
                return 0;
            }
        }
        throw std::runtime_error("unknown command " + chosen);
    } catch (const std::exception& e) {
        std::cerr << "error: " << chosen << ": " << e.what() << std::endl;
        return 1;
    }
}
