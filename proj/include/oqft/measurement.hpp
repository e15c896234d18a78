#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "oqft/fock.hpp"

namespace oqft {

/// Parametric amplification of the x quadrature, H = (i kappa/2)(a^dag^2 - a^2),
/// acting for time T on a squeezed state centred at x_i.
struct AmplifierConfig {
    double kappa = 1.0;
    double T = 1.0;
    double x_i = 0.0;
    double squeeze_r = 1.0;
    int n_traj = 20000;
    std::uint64_t seed = 1;
    /// 0 selects 1e-3 / kappa.
    double dt = 0.0;
    /// Fock cutoff; 0 sizes it automatically from the amplified state.
    int cutoff = 0;
    int threads = 0;

    double gain() const;
    double time_step() const;
    int n_steps() const;
    /// Throws InvalidArgument on unphysical values.
    void validate() const;
};

struct MeasurementRecord {
    double gain = 0.0;
    int cutoff = 0;
    double converged_fraction = 0.0;
    /// Final-time x per converged trajectory.
    std::vector<double> outcomes;
    double mean = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
    double inferred_x = 0.0;
    double inferred_se = 0.0;
    double oracle_mean = 0.0;
    double oracle_variance = 0.0;
    /// Backward-propagated x at t = 0 against the prepared state.
    double initial_mean = 0.0;
    double initial_se_mean = 0.0;
    double initial_variance = 0.0;
    double initial_se_variance = 0.0;
    double oracle_initial_mean = 0.0;
    double oracle_initial_variance = 0.0;
    /// "OK" or "FAILED-ORACLE".
    std::string status;

    bool mean_matches_oracle() const;
    bool variance_matches_oracle() const;
    bool initial_matches_oracle() const;
};

/// Runs the amplifier on the state prepared by `cfg`.
MeasurementRecord run_amplifier_measurement(const AmplifierConfig& cfg);

/// Builds the initial state on a basis of the given cutoff. May throw
/// TruncationError, in which case a larger cutoff is tried.
using StatePreparation = std::function<DensityMatrix(const FockBasis&)>;

/// Runs the amplifier on an arbitrary single-mode preparation. `mean_photons`
/// of the amplified state seeds the automatic cutoff.
MeasurementRecord measure_prepared(const StatePreparation& prepare, double amplified_photons, const AmplifierConfig& cfg);

struct Inference {
    double value = 0.0;
    double se = 0.0;
};

/// x_i estimated as mean / g, with standard error SE / g.
Inference infer_eigenvalue(const MeasurementRecord& record, double g);

/// std(outcomes) / (g |x_i|). Throws InvalidArgument for x_i = 0.
double noise_to_signal(const MeasurementRecord& record, double g, double x_i);

struct SweepPoint {
    double gain = 0.0;
    double ratio = 0.0;
    double ratio_se = 0.0;
    double oracle_ratio = 0.0;
    MeasurementRecord record;
};

struct GainSweep {
    std::vector<SweepPoint> points;
    bool oracle_non_increasing = false;
    /// Each step may rise by at most 3 combined standard errors.
    bool empirical_non_increasing = false;
    /// |ratio - oracle_ratio| <= 3 SE at every gain.
    bool matches_oracle = false;
};

/// Noise-to-signal ratio for each gain at fixed preparation; the gain is set
/// through T at fixed kappa.
GainSweep noise_to_signal_sweep(const AmplifierConfig& base, const std::vector<double>& gains);

struct SuperpositionReport {
    double x1 = 0.0;
    double x2 = 0.0;
    std::vector<double> weights;
    double gain = 0.0;
    double threshold = 0.0;
    /// Overlapping coefficient of the two amplified component x-distributions.
    double overlap = 0.0;
    /// Oracle probability of landing on the wrong side of the threshold.
    double misclassification = 0.0;
    std::vector<double> mixture_frequencies;
    std::vector<double> superposition_frequencies;
    std::vector<double> mixture_se;
    std::vector<double> superposition_se;
    MeasurementRecord mixture;
    MeasurementRecord superposition;
    /// Two-sample Kolmogorov-Smirnov distance between the outcome sets and
    /// its 1% critical value.
    double ks_distance = 0.0;
    double ks_critical = 0.0;
    /// L1 distance between the oracle Q x-marginals at T of the two states.
    double oracle_marginal_l1 = 0.0;

    bool frequencies_match_weights() const;
};

/// Equal-r squeezed states at x1 and x2, prepared both as a mixture and as a
/// superposition with the given weights, each amplified and classified by the
/// nearest g x_k. The superposition run draws its noise from a seed distinct
/// from cfg.seed so the two outcome sets are independent. Throws OverlapError if the amplified components overlap by
/// more than 5%.
SuperpositionReport run_superposition_measurement(double x1, double x2, const std::vector<double>& weights, const AmplifierConfig& cfg);

nlohmann::json to_json(const AmplifierConfig& cfg);
nlohmann::json to_json(const MeasurementRecord& record);
nlohmann::json to_json(const GainSweep& sweep);
nlohmann::json to_json(const SuperpositionReport& report);

/// One outcome per row under the given column header.
void write_outcomes_csv(std::ostream& out, const std::vector<double>& outcomes, const std::string& column = "x_T");

}  // namespace oqft
