#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vmclass/config.hpp"

namespace vmclass::cli {

// Process exit codes.
enum ExitCode : int {
    kSuccess = 0,
    kUsageError = 1,
    kDataError = 2,
    kDivergence = 3,
};

// Flags shared by the subcommands; unset optionals fall back to the config file.
struct CommonOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> window;
    std::optional<std::string> variant;
    std::optional<std::size_t> epochs;
    std::filesystem::path out = "out";
};

// Defaults, then the --config file, then command-line flags.
KeyValueConfig resolve_config(const CommonOptions& options);

struct GenerateResult {
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> traces;
};
GenerateResult cmd_generate(const CommonOptions& options, std::ostream& log);

struct TrainArtifacts {
    std::filesystem::path weights;
    std::filesystem::path history;
    std::filesystem::path report;
    std::filesystem::path config;
    double test_error_percent = 0.0;
};
TrainArtifacts cmd_train(const std::filesystem::path& manifest, const CommonOptions& options, std::ostream& log);

// Evaluates a weight file on every window of the manifest's traces.
std::filesystem::path cmd_evaluate(const std::filesystem::path& weights, const std::filesystem::path& manifest,
                                   const CommonOptions& options, std::ostream& log);

struct Classification {
    std::vector<std::size_t> starts;
    std::vector<std::vector<double>> probabilities;
    std::vector<int> predicted;
    int majority = 0;
};
// Writes one `start,p_web-server,p_sql-server,predicted` line per window and a
// majority-vote summary to `out`.
Classification cmd_classify(const std::filesystem::path& weights, const std::filesystem::path& csv,
                            std::ostream& out);

struct CompareArtifacts {
    std::filesystem::path table_text;
    std::filesystem::path table_json;
    std::filesystem::path plot_data;
};
CompareArtifacts cmd_compare(const std::filesystem::path& manifest, const std::vector<std::size_t>& windows,
                             const std::vector<std::string>& variants, std::size_t jobs,
                             const CommonOptions& options, std::ostream& log);

// Runs the CLI; returns the process exit code.
int run(int argc, char** argv);

}  // namespace vmclass::cli
