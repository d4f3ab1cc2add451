#ifndef ERGO_CONFIG_HPP
#define ERGO_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ergo/coupling.hpp"
#include "ergo/dynamics.hpp"
#include "ergo/harris.hpp"
#include "ergo/kernel.hpp"

namespace ergo {

// Invalid or inconsistent configuration input; messages name the offending
// field by its JSON path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kCodeVersion = "ergo 0.1.0";

extern const std::vector<std::string> kExperimentNames;

struct CliOverrides {
    std::optional<std::string> experiment;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> workers;
};

// A fully validated run description. `effective` is the configuration with
// every default filled in and derived read-only quantities attached; it is
// echoed verbatim into the run manifest.
struct ExperimentConfig {
    ExperimentConfig(ModelSpec m, Grid g) : model(std::move(m)), grid(std::move(g)) {}

    ModelSpec model;
    Grid grid;
    std::string experiment;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::string out_dir = "ergo_out";
    double state_scale = 1.0;
    double slowest_rate = 1.0;
    nlohmann::json effective;

    const nlohmann::json& block() const { return effective.at(experiment); }
};

ExperimentConfig load_config_json(nlohmann::json j, const CliOverrides& ov = {});
ExperimentConfig load_config(const std::string& path, const CliOverrides& ov = {});

struct RunResult {
    nlohmann::json manifest;
    std::vector<std::string> files;   // emitted file names, manifest last
    int exit_code = 0;                // 0 ok, 4 inconclusive certification
    std::string summary;              // one-line outcome for the terminal
};

// Executes the configured experiment, writing its outputs and manifest.json
// into out_dir. On any failure the partially written outputs are removed
// before the error propagates.
RunResult run_experiment(const ExperimentConfig& cfg);

} // namespace ergo

#endif
