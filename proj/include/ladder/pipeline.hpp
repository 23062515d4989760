#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ladder/config.hpp"
#include "ladder/data.hpp"

namespace ladder {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Stage { train, fit_svm, gen_adv, attack, adv_train, eval, sweep, report };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
const std::vector<Stage>& all_stages();

struct Datasets {
    Dataset train, test;
};

/// Loads, optionally downsamples, and subsets the configured IDX files.
Datasets load_data(const ExperimentConfig& cfg);

/// Runs one stage against `out`, reading earlier stages' artifacts from the
/// same directory. Progress lines go to `log`.
void run_stage(Stage stage, const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// key=value contents of `<out>/<stage>.manifest`.
std::map<std::string, std::string> read_manifest(const std::filesystem::path& out, Stage stage);

/// Entry point shared by the CLI binary and the Python module. Exit codes:
/// 0 success, 1 stage error, 2 usage error. Failures print one line
///   error stage=<name> kind=<kind> message="<text>"
/// to `err`.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace ladder
