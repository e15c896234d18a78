#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"

#include "oqft/fock.hpp"
#include "oqft/fpe.hpp"
#include "oqft/rng.hpp"

namespace oqft {

/// Drift expressed in the diffusion eigenbasis y = V^T q. Affine drifts are
/// compiled to a matrix and offset.
class DriftField {
public:
    DriftField(const FpeSpec& spec, const QuadratureSplit& split);

    int n_coords() const { return n_; }
    bool is_affine() const { return affine_; }
    /// Linear part in eigen-coordinates (Jacobian at the origin).
    const RMatrix& linear() const { return linear_; }
    /// Component k of the drift at y.
    double operator()(int k, const double* y) const {
        if (!affine_) return general(k, y);
        const double* row = &flat_linear_[static_cast<std::size_t>(k * n_)];
        double v = flat_offset_[static_cast<std::size_t>(k)];
        for (int j = 0; j < n_; ++j) v += row[j] * y[j];
        return v;
    }
    double operator()(int k, std::span<const double> y) const { return (*this)(k, y.data()); }

private:
    double general(int k, const double* y) const;

    int n_ = 0;
    bool affine_ = false;
    RMatrix basis_;
    RMatrix linear_;
    RVector offset_;
    std::vector<RealPolynomial> drift_;
    std::vector<double> flat_linear_;
    std::vector<double> flat_offset_;
};

/// Mixed boundary data for the forward-backward pair. Slices are in
/// eigen-coordinate order of split.forward_coords / split.backward_coords.
struct BoundaryConditions {
    using Map = std::function<void(std::span<const double> other, std::span<const double> free, std::span<double> out)>;
    using Sampler = std::function<void(CounterRng::Stream& rng, std::span<double> free_plus, std::span<double> free_minus)>;

    int free_plus_size = 0;
    int free_minus_size = 0;
    /// phi+(0) from phi-(0) and free initial data.
    Map phi_plus_initial;
    /// phi-(T) from phi+(T) and free final data.
    Map phi_minus_final;
    Sampler initial_sampler;

    /// phi+(0) = free_plus, phi-(T) = free_minus, drawn by `sampler`.
    static BoundaryConditions free_data(const QuadratureSplit& split, Sampler sampler);
};

/// Forward coordinates drawn from the Q-function of `initial`; backward
/// coordinates drawn from the Q-function of `final` at the far boundary,
/// conditional on the forward value there when both share the mode.
BoundaryConditions oracle_boundary(const QuadratureSplit& split, const DensityMatrix& initial, const DensityMatrix& final);

struct SolverOptions {
    double relaxation = 0.5;
    double tolerance = 1e-8;
    int max_iterations = 500;
};

struct CyclicResult {
    /// (n_steps + 1) x n_coords, eigen-coordinates, row-major.
    std::vector<double> path;
    bool converged = false;
    int iterations = 0;
    /// Sup-norm path change of each damped iteration.
    std::vector<double> residuals;
};

/// One trajectory of the discretized pair
///   y+_{n+1} = y+_n + A+(y_n) dt + dW+_n        (0 -> T)
///   y-_n     = y-_{n+1} - A-(y_{n+1}) dt - dW-_n  (T -> 0)
/// by damped Picard iteration over the cyclic boundary coupling. `noise`
/// holds n_steps x n_coords increments (already scaled by the noise
/// amplitude) and is held fixed across iterations.
CyclicResult solve_cyclic(const DriftField& drift, const QuadratureSplit& split, const BoundaryConditions& bc,
                          std::span<const double> free_plus, std::span<const double> free_minus, std::span<const double> noise,
                          int n_steps, double dt, const SolverOptions& options = {});

struct EnsembleOptions {
    SolverOptions solver;
    /// Steps to keep in the ensemble; empty keeps all.
    std::vector<int> record_steps;
    /// Each increment is the sum of this many finer normal draws, so runs at
    /// dt and dt/k with k-fold substeps share one Brownian path.
    int noise_substeps = 1;
    /// 0 reads OQFT_THREADS (0 or unset means hardware concurrency).
    int threads = 0;
    double min_converged_fraction = 0.99;
};

struct TrajectoryEnsemble {
    int n_traj = 0;
    int n_steps = 0;
    int n_coords = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> recorded_steps;
    /// n_traj x recorded_steps x n_coords in the original (x, p) coordinates.
    std::vector<double> paths;
    std::vector<std::uint8_t> converged;
    std::vector<int> iterations;
    std::vector<double> action;

    double at(int traj, int record, int coord) const {
        return paths[(static_cast<std::size_t>(traj) * recorded_steps.size() + static_cast<std::size_t>(record)) * static_cast<std::size_t>(n_coords) +
                     static_cast<std::size_t>(coord)];
    }
    /// Index into recorded_steps; throws InvalidArgument if not recorded.
    int record_index(int step) const;
    double time(int record) const { return dt * recorded_steps[static_cast<std::size_t>(record)]; }
    int n_converged() const;
    double converged_fraction() const { return n_traj ? static_cast<double>(n_converged()) / n_traj : 0.0; }
};

/// Throws ConvergenceError below options.min_converged_fraction and
/// StabilityError on non-finite values.
TrajectoryEnsemble simulate_ensemble(const QuadratureSplit& split, const FpeSpec& drift, const BoundaryConditions& bc, int n_traj, int n_steps,
                                     double dt, std::uint64_t seed, const EnsembleOptions& options = {});

/// Worker count from OQFT_THREADS (0 or unset: hardware concurrency).
int default_thread_count();

struct MarginalStats {
    int n = 0;
    double converged_fraction = 0.0;
    RVector mean;
    RMatrix covariance;
    RVector se_mean;
    /// Delete-one jackknife standard errors of the covariance entries.
    RMatrix se_covariance;
};

/// Statistics over converged trajectories at one recorded slice.
MarginalStats marginal_stats(const TrajectoryEnsemble& ensemble, int record);

/// Discretized action sum over noisy coordinates of (dy - A dt)^2 / (2 s^2 dt),
/// with A at the step origin for forward and at the step end for backward
/// coordinates. `path` is (n_steps + 1) x n_coords in original coordinates.
/// Throws InfiniteAction if a noiseless coordinate leaves its drift flow.
double path_action(std::span<const double> path, const QuadratureSplit& split, const FpeSpec& drift, double dt);

nlohmann::json to_json(const MarginalStats& stats);
nlohmann::json summary_json(const TrajectoryEnsemble& ensemble);
/// One row per trajectory and recorded step: trajectory, t, coordinates.
void write_paths_csv(std::ostream& out, const TrajectoryEnsemble& ensemble, const std::vector<std::string>& coordinate_names);

}  // namespace oqft
