#pragma once

#include "flowcast/run_config.hpp"

#include <filesystem>
#include <iosfwd>

namespace flowcast {

// Each command writes its artifacts into `run_dir` (already created, with
// the resolved config copied in) and prints a short summary to `out`.
// Errors are reported by throwing std::runtime_error.
void cmd_generate(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream& out);
void cmd_train(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out);
void cmd_evaluate(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream& out);
void cmd_uq(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out);
void cmd_bounds(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out);
void cmd_report(const RunConfig& config, const std::filesystem::path& run_dir, std::ostream& out);

} // namespace flowcast
