#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "oqft/errors.hpp"
#include "oqft/fbsde.hpp"
#include "oqft/fpe.hpp"
#include "oqft/hamiltonian.hpp"
#include "oqft/rng.hpp"

using namespace oqft;

namespace {

RealPolynomial affine(double cx, double cp, double c0) {
    RealPolynomial p(2);
    p.add_term({1, 0}, cx);
    p.add_term({0, 1}, cp);
    p.add_term({0, 0}, c0);
    return p;
}

FpeSpec ou_spec(double gamma, double sx2, double sp2) {
    RMatrix d = RMatrix::Zero(2, 2);
    d(0, 0) = sx2;
    d(1, 1) = sp2;
    return FpeSpec::from_constant(1, {affine(-gamma, 0, 0), affine(0, -gamma, 0)}, d);
}

// Fixed start for every forward coordinate.
BoundaryConditions fixed_start(const QuadratureSplit& split, std::vector<double> start_eigen) {
    return BoundaryConditions::free_data(split, [start_eigen](CounterRng::Stream&, std::span<double> plus, std::span<double>) {
        for (std::size_t k = 0; k < plus.size(); ++k) plus[k] = start_eigen[k];
    });
}

double percentile_gap(const TrajectoryEnsemble& a, const TrajectoryEnsemble& b, int coord) {
    double s = 0.0;
    const int ra = static_cast<int>(a.recorded_steps.size()) - 1, rb = static_cast<int>(b.recorded_steps.size()) - 1;
    for (int i = 0; i < a.n_traj; ++i) s += std::abs(a.at(i, ra, coord) - b.at(i, rb, coord));
    return s / a.n_traj;
}

}  // namespace

TEST_CASE("counter RNG: order independence and moments") {
    const CounterRng r(42, 3, 0);
    double z0, z1;
    r.normal_pair(10, z0, z1);
    CHECK(r.normal(20) == z0);
    CHECK(r.normal(21) == z1);
    std::vector<double> buf(7);
    r.fill_normal(19, 7, buf.data());
    for (int i = 0; i < 7; ++i) CHECK(buf[static_cast<std::size_t>(i)] == r.normal(19 + static_cast<std::uint64_t>(i)));
    double m = 0, v = 0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double z = r.normal(static_cast<std::uint64_t>(k));
        m += z;
        v += z * z;
    }
    m /= n;
    v = v / n - m * m;
    CHECK(std::abs(m) < 4.0 / std::sqrt(n));
    CHECK(std::abs(v - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(CounterRng(42, 3, 1).bits(0) != r.bits(0));
    CHECK(CounterRng(42, 4, 0).bits(0) != r.bits(0));
}

TEST_CASE("decoupled system converges in one iteration") {
    const FpeSpec spec = derive_fpe(PolynomialHamiltonian::parametric_amplifier(1.0));
    const QuadratureSplit split = split_quadratures(spec);
    const DriftField drift(spec, split);
    const int n_steps = 50;
    std::vector<double> noise(static_cast<std::size_t>(n_steps) * 2);
    const CounterRng rng(1, 0);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = 0.1 * rng.normal(i);
    const BoundaryConditions bc = BoundaryConditions::free_data(split, {});
    const double fp[] = {0.3}, fm[] = {-0.7};
    const CyclicResult r = solve_cyclic(drift, split, bc, fp, fm, noise, n_steps, 0.01);
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    const int f = split.forward_coords[0], b = split.backward_coords[0];
    CHECK(r.path[static_cast<std::size_t>(f)] == 0.3);
    CHECK(r.path[static_cast<std::size_t>(n_steps * 2 + b)] == -0.7);
}

namespace {

struct CyclicCase {
    FpeSpec spec;
    QuadratureSplit split;
    BoundaryConditions bc;
    std::vector<double> noise;
    int n_steps = 20;
    double c1, c2;
};

// Zero drift, forward f and backward b, phi+(0) = c1 b(0) + u, phi-(T) = c2 f(T) + v.
CyclicCase cyclic_case(double c1, double c2) {
    RMatrix d(2, 2);
    d << -1.0, 0.0, 0.0, 1.0;
    CyclicCase c{FpeSpec::from_constant(1, {RealPolynomial(2), RealPolynomial(2)}, d), {}, {}, {}, 20, c1, c2};
    c.split = split_quadratures(c.spec);
    c.bc.free_plus_size = 1;
    c.bc.free_minus_size = 1;
    c.bc.phi_plus_initial = [c1](std::span<const double> other, std::span<const double> free, std::span<double> out) { out[0] = c1 * other[0] + free[0]; };
    c.bc.phi_minus_final = [c2](std::span<const double> other, std::span<const double> free, std::span<double> out) { out[0] = c2 * other[0] + free[0]; };
    const CounterRng rng(5, 0);
    c.noise.resize(static_cast<std::size_t>(c.n_steps) * 2);
    for (std::size_t i = 0; i < c.noise.size(); ++i) c.noise[i] = 0.2 * rng.normal(i);
    return c;
}

}  // namespace

TEST_CASE("cyclic coupling: fixed point and contraction rate") {
    const double c1 = 1.0, c2 = 0.5, u = 0.4, v = -0.3, w = 0.5;
    CyclicCase c = cyclic_case(c1, c2);
    const DriftField drift(c.spec, c.split);
    const int f = c.split.forward_coords[0], b = c.split.backward_coords[0];
    double wf = 0.0, wb = 0.0;
    for (int s = 0; s < c.n_steps; ++s) {
        wf += c.noise[static_cast<std::size_t>(2 * s + f)];
        wb += c.noise[static_cast<std::size_t>(2 * s + b)];
    }
    // f(T) = f0 + wf, b(0) = bT - wb: solve the linear boundary system.
    const double f0 = (c1 * c2 * wf + c1 * v - c1 * wb + u) / (1 - c1 * c2);
    const double bT = c2 * (f0 + wf) + v;

    const double up[] = {u}, vm[] = {v};
    SolverOptions opt;
    opt.relaxation = w;
    const CyclicResult r = solve_cyclic(drift, c.split, c.bc, up, vm, c.noise, c.n_steps, 0.01, opt);
    REQUIRE(r.converged);
    CHECK(r.path[static_cast<std::size_t>(f)] == doctest::Approx(f0).epsilon(1e-7));
    CHECK(r.path[static_cast<std::size_t>(c.n_steps * 2 + b)] == doctest::Approx(bT).epsilon(1e-7));

    // Damped Gauss-Seidel on (f0, bT): iteration matrix of the linear parts.
    Eigen::Matrix2d g;
    g << 1 - w, w * c1, w * c2 * (1 - w), 1 - w + w * w * c1 * c2;
    const double rho = g.eigenvalues().cwiseAbs().maxCoeff();
    REQUIRE(r.residuals.size() > 12);
    const std::size_t k = r.residuals.size() - 3;
    CHECK(r.residuals[k] / r.residuals[k - 1] == doctest::Approx(rho).epsilon(1e-3));
}

TEST_CASE("stiff coupling: undamped iteration diverges, damped converges") {
    CyclicCase c = cyclic_case(1.05, -1.0);
    const DriftField drift(c.spec, c.split);
    const double up[] = {0.4}, vm[] = {0.1};
    SolverOptions undamped;
    undamped.relaxation = 1.0;
    undamped.max_iterations = 200;
    const CyclicResult bad = solve_cyclic(drift, c.split, c.bc, up, vm, c.noise, c.n_steps, 0.01, undamped);
    CHECK_FALSE(bad.converged);
    CHECK(bad.residuals.back() > bad.residuals.front());
    const CyclicResult good = solve_cyclic(drift, c.split, c.bc, up, vm, c.noise, c.n_steps, 0.01);
    CHECK(good.converged);
}

TEST_CASE("Ornstein-Uhlenbeck variances match the discrete recursion") {
    const double gamma = 1.0, s2 = 0.5, dt = 0.01;
    const int n_steps = 100, n_traj = 40000;
    const FpeSpec spec = ou_spec(gamma, s2, s2);
    const QuadratureSplit split = split_quadratures(spec);
    const double a = 1 - gamma * dt;
    const double stationary = s2 * dt / (1 - a * a);
    // x starts at 0, p starts in the stationary law of the discrete chain.
    const BoundaryConditions bc = BoundaryConditions::free_data(split, [&](CounterRng::Stream& rng, std::span<double> plus, std::span<double>) {
        const RVector q = split.basis.transpose() * Eigen::Vector2d(0.0, std::sqrt(stationary) * rng.normal());
        for (std::size_t k = 0; k < plus.size(); ++k) plus[k] = q(split.forward_coords[k]);
    });
    EnsembleOptions opt;
    opt.record_steps = {0, n_steps};
    const TrajectoryEnsemble ens = simulate_ensemble(split, spec, bc, n_traj, n_steps, dt, 11, opt);
    const MarginalStats m = marginal_stats(ens, 1);
    double vx = 0.0;
    for (int k = 0; k < n_steps; ++k) vx += s2 * dt * std::pow(a, 2 * k);
    CHECK(std::abs(m.mean(0)) < 3 * m.se_mean(0));
    CHECK(std::abs(m.mean(1)) < 3 * m.se_mean(1));
    CHECK(std::abs(m.covariance(0, 0) - vx) < 3 * m.se_covariance(0, 0));
    CHECK(std::abs(m.covariance(1, 1) - stationary) < 3 * m.se_covariance(1, 1));
    CHECK(ens.converged_fraction() == 1.0);
    for (int i = 0; i < n_traj; ++i) CHECK(ens.iterations[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("path action equals the Euler-Maruyama negative log density up to a constant") {
    // Coupled linear drift with a non-diagonal positive diffusion matrix.
    RMatrix d(2, 2);
    d << 2.0, 0.5, 0.5, 1.0;
    const FpeSpec spec = FpeSpec::from_constant(1, {affine(-0.7, 0.4, 0.1), affine(-0.3, -1.1, -0.2)}, d);
    const QuadratureSplit split = split_quadratures(spec);
    const double dt = 0.02;
    const int n_steps = 30;
    const Eigen::Matrix2d dinv = (d * dt).inverse();
    auto neg_log_density = [&](const std::vector<double>& path) {
        double s = 0.0;
        for (int k = 0; k < n_steps; ++k) {
            const double x = path[static_cast<std::size_t>(2 * k)], p = path[static_cast<std::size_t>(2 * k + 1)];
            const Eigen::Vector2d r(path[static_cast<std::size_t>(2 * k + 2)] - x - (-0.7 * x + 0.4 * p + 0.1) * dt,
                                    path[static_cast<std::size_t>(2 * k + 3)] - p - (-0.3 * x - 1.1 * p - 0.2) * dt);
            s += 0.5 * r.dot(dinv * r);
        }
        return s;
    };
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> paths(6, std::vector<double>(static_cast<std::size_t>(2 * (n_steps + 1))));
    for (auto& p : paths) {
        p[0] = 0.5;
        p[1] = -0.2;
        for (std::size_t i = 2; i < p.size(); ++i) p[i] = p[i - 2] + 0.15 * n(gen);
    }
    for (std::size_t i = 0; i < paths.size(); ++i)
        for (std::size_t j = 0; j < paths.size(); ++j) {
            const double ds = path_action(paths[i], split, spec, dt) - path_action(paths[j], split, spec, dt);
            const double dl = neg_log_density(paths[i]) - neg_log_density(paths[j]);
            CHECK(std::abs(ds - dl) < 1e-10);
        }
}

TEST_CASE("two-step histogram follows exp(-action)") {
    // Noisy x with linear drift, noiseless p frozen at 0; x starts at 0.5.
    const double gamma = 0.3, s2 = 1.0, dt = 0.25;
    RMatrix d = RMatrix::Zero(2, 2);
    d(0, 0) = s2;
    const FpeSpec spec = FpeSpec::from_constant(1, {affine(-gamma, 0, 0), RealPolynomial(2)}, d);
    const QuadratureSplit split = split_quadratures(spec);
    const RVector start = split.basis.transpose() * Eigen::Vector2d(0.5, 0.0);
    std::vector<double> start_fwd;
    for (int c : split.forward_coords) start_fwd.push_back(start(c));
    const int n_traj = 200000;
    const TrajectoryEnsemble ens = simulate_ensemble(split, spec, fixed_start(split, start_fwd), n_traj, 2, dt, 17);

    // 6 x 6 bins on (x1, x2); probability by midpoint quadrature of exp(-S).
    const double lo = -0.7, w = 0.3;
    const int nb = 6, sub = 12;
    std::vector<int> counts(nb * nb, 0);
    for (int i = 0; i < n_traj; ++i) {
        if (i < 2000)
            CHECK(ens.action[static_cast<std::size_t>(i)] ==
              doctest::Approx(path_action(std::vector<double>{ens.at(i, 0, 0), ens.at(i, 0, 1), ens.at(i, 1, 0), ens.at(i, 1, 1), ens.at(i, 2, 0),
                                                              ens.at(i, 2, 1)},
                                          split, spec, dt))
                  .epsilon(1e-12));
        const int a = static_cast<int>(std::floor((ens.at(i, 1, 0) - lo) / w));
        const int b = static_cast<int>(std::floor((ens.at(i, 2, 0) - lo) / w));
        if (a >= 0 && a < nb && b >= 0 && b < nb) ++counts[static_cast<std::size_t>(a * nb + b)];
    }
    const double norm = 1.0 / (2 * std::numbers::pi * s2 * dt);
    for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) {
            double prob = 0.0;
            const double h = w / sub;
            for (int i = 0; i < sub; ++i)
                for (int j = 0; j < sub; ++j) {
                    const std::vector<double> path = {0.5, 0.0, lo + a * w + (i + 0.5) * h, 0.0, lo + b * w + (j + 0.5) * h, 0.0};
                    prob += norm * std::exp(-path_action(path, split, spec, dt)) * h * h;
                }
            const double freq = counts[static_cast<std::size_t>(a * nb + b)] / static_cast<double>(n_traj);
            CHECK(std::abs(freq - prob) < 4 * std::sqrt(prob * (1 - prob) / n_traj) + 2e-4);
        }
}

TEST_CASE("noiseless coordinate off its flow has infinite action") {
    RMatrix d = RMatrix::Zero(2, 2);
    d(0, 0) = 1.0;
    const FpeSpec spec = FpeSpec::from_constant(1, {affine(-1, 0, 0), RealPolynomial(2)}, d);
    const QuadratureSplit split = split_quadratures(spec);
    const std::vector<double> path = {0.0, 0.0, 0.1, 0.5};
    CHECK_THROWS_AS(path_action(path, split, spec, 0.1), InfiniteAction);
}

TEST_CASE("dt halving with shared Brownian paths converges at strong order one") {
    const FpeSpec spec = ou_spec(1.5, 1.0, 1.0);
    const QuadratureSplit split = split_quadratures(spec);
    const BoundaryConditions bc = fixed_start(split, {0.8, -0.4});
    const double T = 1.0;
    const int n = 20, n_traj = 2000;
    auto run = [&](int steps, int substeps) {
        EnsembleOptions opt;
        opt.noise_substeps = substeps;
        opt.record_steps = {steps};
        return simulate_ensemble(split, spec, bc, n_traj, steps, T / steps, 23, opt);
    };
    const TrajectoryEnsemble coarse = run(n, 4), mid = run(2 * n, 2), fine = run(4 * n, 1);
    const double e1 = percentile_gap(coarse, fine, 0), e2 = percentile_gap(mid, fine, 0);
    CHECK(e1 / e2 > 2.0);
    CHECK(e1 / e2 < 4.0);
    // An unrelated Brownian path is far away.
    const TrajectoryEnsemble other = run(n, 1);
    CHECK(percentile_gap(other, fine, 0) > 10 * e1);
}

TEST_CASE("ensembles are bit-identical across runs and thread counts") {
    const FpeSpec spec = derive_fpe(PolynomialHamiltonian::parametric_amplifier(1.0));
    const QuadratureSplit split = split_quadratures(spec);
    const BoundaryConditions bc = BoundaryConditions::free_data(split, [](CounterRng::Stream& rng, std::span<double> plus, std::span<double> minus) {
        plus[0] = rng.normal();
        minus[0] = 2.0 * rng.normal();
    });
    EnsembleOptions one, three;
    one.threads = 1;
    three.threads = 3;
    const TrajectoryEnsemble a = simulate_ensemble(split, spec, bc, 300, 100, 0.01, 77, one);
    const TrajectoryEnsemble b = simulate_ensemble(split, spec, bc, 300, 100, 0.01, 77, three);
    const TrajectoryEnsemble c = simulate_ensemble(split, spec, bc, 300, 100, 0.01, 78, one);
    CHECK(a.paths == b.paths);
    CHECK(a.action == b.action);
    CHECK(a.paths != c.paths);
}

TEST_CASE("jackknife covariance errors match brute-force delete-one") {
    const FpeSpec spec = ou_spec(1.0, 1.0, 0.3);
    const QuadratureSplit split = split_quadratures(spec);
    const BoundaryConditions bc = fixed_start(split, {0.0, 0.0});
    const TrajectoryEnsemble ens = simulate_ensemble(split, spec, bc, 40, 50, 0.02, 5);
    const int rec = static_cast<int>(ens.recorded_steps.size()) - 1;
    const MarginalStats m = marginal_stats(ens, rec);
    const int n = ens.n_traj;
    auto cov_without = [&](int skip, int i, int j) {
        double mi = 0, mj = 0;
        for (int t = 0; t < n; ++t)
            if (t != skip) {
                mi += ens.at(t, rec, i);
                mj += ens.at(t, rec, j);
            }
        const int k = skip < 0 ? n : n - 1;
        mi /= k;
        mj /= k;
        double s = 0;
        for (int t = 0; t < n; ++t)
            if (t != skip) s += (ens.at(t, rec, i) - mi) * (ens.at(t, rec, j) - mj);
        return s / (k - 1);
    };
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            CHECK(m.covariance(i, j) == doctest::Approx(cov_without(-1, i, j)).epsilon(1e-12));
            std::vector<double> th(static_cast<std::size_t>(n));
            double bar = 0;
            for (int s = 0; s < n; ++s) bar += th[static_cast<std::size_t>(s)] = cov_without(s, i, j);
            bar /= n;
            double ss = 0;
            for (double t : th) ss += (t - bar) * (t - bar);
            CHECK(m.se_covariance(i, j) == doctest::Approx(std::sqrt((n - 1.0) / n * ss)).epsilon(1e-9));
        }
}

TEST_CASE("step size above the stability bound is rejected") {
    const FpeSpec spec = ou_spec(50.0, 1.0, 1.0);
    const QuadratureSplit split = split_quadratures(spec);
    CHECK_THROWS_AS(simulate_ensemble(split, spec, fixed_start(split, {0.0, 0.0}), 10, 10, 0.01, 1), InvalidArgument);
}

TEST_CASE("OQFT_THREADS parsing") {
    setenv("OQFT_THREADS", "2", 1);
    CHECK(default_thread_count() == 2);
    setenv("OQFT_THREADS", "abc", 1);
    CHECK_THROWS_AS(default_thread_count(), ConfigError);
    unsetenv("OQFT_THREADS");
    CHECK(default_thread_count() >= 1);
}
