#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "oqft/fbsde.hpp"
#include "oqft/fock.hpp"
#include "oqft/hamiltonian.hpp"

namespace oqft {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct ExperimentConfig {
    std::string experiment;
    nlohmann::json parameters = nlohmann::json::object();
    std::uint64_t seed = 1;
    std::string output_dir = "out";
};

/// Throws ConfigError on unknown keys, wrong types, or unknown experiments.
/// Experiment parameters are checked when the experiment runs.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);

/// Parameter-level validation without running anything.
void validate_config(const ExperimentConfig& cfg);

struct DataFile {
    std::string name;
    std::string contents;
};

struct ExperimentResult {
    nlohmann::json results = nlohmann::json::object();
    /// Invariant name -> pass.
    nlohmann::json invariants = nlohmann::json::object();
    std::vector<DataFile> files;

    bool all_pass() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// report.json text: a "header" block holding the timestamp and tool version,
/// and a "body" block that depends only on (config, seed).
std::string render_report(const ExperimentConfig& cfg, const ExperimentResult& result, const std::string& timestamp);

struct SliceComparison {
    double t = 0.0;
    MarginalStats fbsde;
    RVector oracle_mean;
    RMatrix oracle_covariance;
    /// Largest |fbsde - oracle| / SE over means and covariance entries.
    double max_z = 0.0;
    bool matches = false;
};

struct OracleComparison {
    std::vector<SliceComparison> slices;
    bool all_match = false;
};

/// FBSDE ensemble for a degree-2 single-mode Hamiltonian against the exact
/// evolution at t = 0, T/2 and T: every mean and covariance entry must agree
/// within 3 standard errors. n_steps must be even.
OracleComparison compare_fbsde_with_oracle(const PolynomialHamiltonian& h, const DensityMatrix& rho0, double T, int n_steps, int n_traj,
                                           std::uint64_t seed, int threads = 0);

nlohmann::json to_json(const OracleComparison& c);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace oqft
