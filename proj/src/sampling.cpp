#include "oqft/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oqft/errors.hpp"

namespace oqft {

namespace {

double direction_angle(double dx, double dp) {
    const double n = std::hypot(dx, dp);
    if (std::abs(n - 1.0) > 1e-9) throw InvalidArgument("sampler: direction must be a unit vector");
    return std::atan2(dp, dx);
}

// Q-moments projected on a direction.
std::pair<double, double> projected_moments(const MomentTable& m, double dx, double dp) {
    const double mean = dx * m.mean(0) + dp * m.mean(1);
    const double var = dx * dx * m.variance(0) + 2 * dx * dp * m.covariance(0, 1) + dp * dp * m.variance(1);
    return {mean, var};
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return g;
}

std::size_t find_cell(const std::vector<double>& cdf, double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

void require_single_mode(const DensityMatrix& rho) {
    if (rho.basis().n_modes() != 1) throw DimensionError("Q sampling is implemented for single-mode states");
}

}  // namespace

QuadratureMarginalSampler::QuadratureMarginalSampler(const DensityMatrix& rho, double dir_x, double dir_p, int grid_points) {
    require_single_mode(rho);
    if (grid_points < 16) throw InvalidArgument("QuadratureMarginalSampler: grid too coarse");
    const double theta = direction_angle(dir_x, dir_p);
    const auto [mean, q_var] = projected_moments(q_moments(rho, 2), dir_x, dir_p);
    const double op_sd = std::sqrt(std::max(q_var - 1.0, 1e-4));
    const double half = 12.0 * op_sd + 1.0;
    grid_ = linspace(mean - half, mean + half, grid_points);
    density_ = quadrature_density(rho, theta, grid_);

    const double h = grid_[1] - grid_[0];
    cdf_.resize(grid_.size() - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i) {
        acc += 0.5 * h * (density_[i] + density_[i + 1]);
        cdf_[i] = acc;
    }
    if (std::abs(acc - 1.0) > 1e-6) throw TruncationError("QuadratureMarginalSampler: density grid misses probability mass");
    for (double& c : cdf_) c /= acc;
}

void QuadratureMarginalSampler::sample(CounterRng::Stream& rng, std::span<double> out) const {
    const std::size_t cell = find_cell(cdf_, rng.uniform());
    const double quadrature = grid_[cell] + (grid_[cell + 1] - grid_[cell]) * rng.uniform();
    out[0] = quadrature + rng.normal();
}

JointQSampler::JointQSampler(const DensityMatrix& rho, const RMatrix& directions, int grid_points) {
    require_single_mode(rho);
    if (directions.rows() != 2 || directions.cols() != 2) throw DimensionError("JointQSampler: 2x2 directions required");
    if ((directions.transpose() * directions - RMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() > 1e-9)
        throw InvalidArgument("JointQSampler: directions must be orthonormal");
    const MomentTable m = q_moments(rho, 2);
    std::array<std::vector<double>*, 2> axes{&axis0_, &axis1_};
    for (int k = 0; k < 2; ++k) {
        const auto [mean, var] = projected_moments(m, directions(0, k), directions(1, k));
        const double half = 10.0 * std::sqrt(var);
        *axes[static_cast<std::size_t>(k)] = linspace(mean - half, mean + half, grid_points);
    }
    const QFunctionEvaluator q(rho);
    const auto n = static_cast<std::size_t>(grid_points);
    std::vector<double> values(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = directions(0, 0) * axis0_[i] + directions(0, 1) * axis1_[j];
            const double p = directions(1, 0) * axis0_[i] + directions(1, 1) * axis1_[j];
            values[i * n + j] = q.at(x, p);
        }
    const double area = (axis0_[1] - axis0_[0]) * (axis1_[1] - axis1_[0]) / 4.0;  // dx dp = 4 d^2 alpha
    cdf_.resize((n - 1) * (n - 1));
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j + 1 < n; ++j) {
            acc += 0.25 * area * (values[i * n + j] + values[(i + 1) * n + j] + values[i * n + j + 1] + values[(i + 1) * n + j + 1]);
            cdf_[i * (n - 1) + j] = acc;
        }
    if (std::abs(acc - 1.0) > 1e-4) throw TruncationError("JointQSampler: grid misses probability mass");
    for (double& c : cdf_) c /= acc;
}

void JointQSampler::sample(CounterRng::Stream& rng, std::span<double> out) const {
    const std::size_t cell = find_cell(cdf_, rng.uniform());
    const std::size_t cells = axis1_.size() - 1;
    const std::size_t i = cell / cells;
    const std::size_t j = cell % cells;
    out[0] = axis0_[i] + (axis0_[i + 1] - axis0_[i]) * rng.uniform();
    out[1] = axis1_[j] + (axis1_[j + 1] - axis1_[j]) * rng.uniform();
}

ConditionalQSampler::ConditionalQSampler(const DensityMatrix& rho, const RMatrix& directions, int target_points, int given_points) {
    require_single_mode(rho);
    if (directions.rows() != 2 || directions.cols() != 2) throw DimensionError("ConditionalQSampler: 2x2 directions required");
    if ((directions.transpose() * directions - RMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() > 1e-9)
        throw InvalidArgument("ConditionalQSampler: directions must be orthonormal");
    if (target_points < 16 || given_points < 16) throw InvalidArgument("ConditionalQSampler: grid too coarse");
    const MomentTable m = q_moments(rho, 2);
    const auto [t_mean, t_var] = projected_moments(m, directions(0, 0), directions(1, 0));
    const auto [g_mean, g_var] = projected_moments(m, directions(0, 1), directions(1, 1));
    target_axis_ = linspace(t_mean - 10.0 * std::sqrt(t_var), t_mean + 10.0 * std::sqrt(t_var), target_points);
    given_axis_ = linspace(g_mean - 10.0 * std::sqrt(g_var), g_mean + 10.0 * std::sqrt(g_var), given_points);

    const QFunctionEvaluator q(rho);
    const auto nt = target_axis_.size();
    cdf_.resize(given_axis_.size() * (nt - 1));
    std::vector<double> row(nt);
    for (std::size_t j = 0; j < given_axis_.size(); ++j) {
        for (std::size_t i = 0; i < nt; ++i) {
            const double x = directions(0, 0) * target_axis_[i] + directions(0, 1) * given_axis_[j];
            const double p = directions(1, 0) * target_axis_[i] + directions(1, 1) * given_axis_[j];
            row[i] = q.at(x, p);
        }
        double* c = &cdf_[j * (nt - 1)];
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < nt; ++i) {
            acc += 0.5 * (row[i] + row[i + 1]);
            c[i] = acc;
        }
        if (!(acc > 0.0)) throw StabilityError("ConditionalQSampler: empty conditional row");
        for (std::size_t i = 0; i + 1 < nt; ++i) c[i] /= acc;
    }
}

double ConditionalQSampler::sample(double given, double u0, double u1, double u2) const {
    const double h = given_axis_[1] - given_axis_[0];
    const double pos = std::clamp((given - given_axis_.front()) / h, 0.0, static_cast<double>(given_axis_.size() - 1));
    auto j = static_cast<std::size_t>(pos);
    if (j + 1 < given_axis_.size() && u0 < pos - static_cast<double>(j)) ++j;
    const std::size_t cells = target_axis_.size() - 1;
    const auto begin = cdf_.begin() + static_cast<std::ptrdiff_t>(j * cells);
    const auto it = std::upper_bound(begin, begin + static_cast<std::ptrdiff_t>(cells), u1);
    const std::size_t cell = std::min(static_cast<std::size_t>(it - begin), cells - 1);
    return target_axis_[cell] + (target_axis_[cell + 1] - target_axis_[cell]) * u2;
}

std::unique_ptr<QSampler> make_q_sampler(const DensityMatrix& rho, const RMatrix& directions) {
    if (directions.rows() != 2) throw DimensionError("make_q_sampler: single-mode directions required");
    if (directions.cols() == 1) return std::make_unique<QuadratureMarginalSampler>(rho, directions(0, 0), directions(1, 0));
    if (directions.cols() == 2) return std::make_unique<JointQSampler>(rho, directions);
    throw DimensionError("make_q_sampler: one or two directions required");
}

std::vector<double> q_marginal_density(const DensityMatrix& rho, double dir_x, double dir_p, std::span<const double> grid) {
    require_single_mode(rho);
    if (grid.size() < 3) throw InvalidArgument("q_marginal_density: grid too small");
    const double theta = direction_angle(dir_x, dir_p);
    // Fine auxiliary grid for the operator density, then convolve with N(0, 1).
    const auto [mean, q_var] = projected_moments(q_moments(rho, 2), dir_x, dir_p);
    const double op_sd = std::sqrt(std::max(q_var - 1.0, 1e-4));
    const std::vector<double> aux = linspace(mean - 12.0 * op_sd - 1.0, mean + 12.0 * op_sd + 1.0, 4001);
    const std::vector<double> dens = quadrature_density(rho, theta, aux);
    const double h = aux[1] - aux[0];
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < aux.size(); ++i) {
            const double w = (i == 0 || i + 1 == aux.size()) ? 0.5 : 1.0;
            const double d = grid[g] - aux[i];
            acc += w * dens[i] * std::exp(-0.5 * d * d);
        }
        out[g] = acc * h / std::sqrt(2.0 * std::numbers::pi);
    }
    return out;
}

}  // namespace oqft
