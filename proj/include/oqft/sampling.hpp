#pragma once

#include <memory>
#include <span>
#include <vector>

#include "oqft/fock.hpp"
#include "oqft/rng.hpp"

namespace oqft {

/// Draws phase-space coordinates y = D^T (x, p) from the Q-function of a
/// single-mode state, where D holds one or two orthonormal directions.
class QSampler {
public:
    virtual ~QSampler() = default;
    virtual int dimension() const = 0;
    virtual void sample(CounterRng::Stream& rng, std::span<double> out) const = 0;
};

/// One direction. The Q marginal along a quadrature is its operator density
/// convolved with the vacuum Gaussian (variance 1), so a draw is a sample of
/// the quadrature density plus unit normal noise.
class QuadratureMarginalSampler final : public QSampler {
public:
    QuadratureMarginalSampler(const DensityMatrix& rho, double dir_x, double dir_p, int grid_points = 4001);

    int dimension() const override { return 1; }
    void sample(CounterRng::Stream& rng, std::span<double> out) const override;

    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& density() const { return density_; }

private:
    std::vector<double> grid_;
    std::vector<double> density_;
    std::vector<double> cdf_;  // cumulative cell mass, normalized
};

/// Two orthonormal directions spanning the mode: Q tabulated on a grid.
class JointQSampler final : public QSampler {
public:
    JointQSampler(const DensityMatrix& rho, const RMatrix& directions, int grid_points = 601);

    int dimension() const override { return 2; }
    void sample(CounterRng::Stream& rng, std::span<double> out) const override;

private:
    std::vector<double> axis0_;
    std::vector<double> axis1_;
    std::vector<double> cdf_;  // over cells, row-major (axis0 major)
};

/// Q-function of a single-mode state sampled along `target` conditional on
/// the value of the orthogonal coordinate along `given`. Used for future
/// boundary data that must agree with already-propagated forward values.
class ConditionalQSampler {
public:
    /// `directions` is 2x2 orthonormal: column 0 target, column 1 given.
    ConditionalQSampler(const DensityMatrix& rho, const RMatrix& directions, int target_points = 1201, int given_points = 121);

    /// Deterministic in (given, u0, u1, u2); each u in (0, 1).
    double sample(double given, double u0, double u1, double u2) const;

private:
    std::vector<double> target_axis_;
    std::vector<double> given_axis_;
    std::vector<double> cdf_;  // per given-row cumulative cell mass, normalized
};

/// Sampler for the coordinates given as columns of `directions` (2 x k, k = 1 or 2).
std::unique_ptr<QSampler> make_q_sampler(const DensityMatrix& rho, const RMatrix& directions);

/// Probability mass of the Q marginal along (dir_x, dir_p) on a grid: the
/// quadrature density convolved with the unit-variance vacuum kernel.
std::vector<double> q_marginal_density(const DensityMatrix& rho, double dir_x, double dir_p, std::span<const double> grid);

}  // namespace oqft
