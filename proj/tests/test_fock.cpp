#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "oqft/errors.hpp"
#include "oqft/evolve.hpp"
#include "oqft/fock.hpp"
#include "oqft/hamiltonian.hpp"

using namespace oqft;

namespace {

constexpr double kPi = std::numbers::pi;

double direct_poisson_tail(double mean, int cutoff) {
    double term = std::exp(-mean), below = 0.0;
    for (int n = 0; n < cutoff; ++n) {
        below += term;
        term *= mean / (n + 1);
    }
    // Sum the tail directly rather than 1 - below to keep precision.
    double tail = 0.0;
    for (int n = cutoff; n < cutoff + 400; ++n) {
        tail += term;
        term *= mean / (n + 1);
    }
    return tail;
}

double grid_integral(const DensityMatrix& rho, double half_width, double h) {
    const QFunctionEvaluator q(rho);
    double s = 0.0;
    for (double x = -half_width; x <= half_width + 1e-12; x += h)
        for (double p = -half_width; p <= half_width + 1e-12; p += h) s += q.at(x, p);
    return s * h * h / 4.0;
}

StateVector random_state(std::mt19937_64& gen, int levels, const FockBasis& b) {
    std::normal_distribution<double> n;
    CVector v = CVector::Zero(b.dim());
    for (int k = 0; k < levels; ++k) v(k) = {n(gen), n(gen)};
    return StateVector::normalized(b, v);
}

}  // namespace

TEST_CASE("coherent tail mass agrees with direct Poisson summation") {
    for (double m : {0.5, 4.0, 12.0})
        for (int cutoff : {5, 20, 40}) {
            const double expect = direct_poisson_tail(m, cutoff);
            CHECK(coherent_tail_mass(m, cutoff) == doctest::Approx(expect).epsilon(1e-10));
        }
}

TEST_CASE("coherent amplitudes follow the closed form") {
    const cplx alpha{0.8, -0.5};
    const FockBasis b(40);
    const StateVector s = coherent_state(alpha, b);
    double fact = 1.0;
    for (int n = 0; n < 20; ++n) {
        if (n) fact *= n;
        const cplx expect = std::exp(-std::norm(alpha) / 2.0) * std::pow(alpha, n) / std::sqrt(fact);
        CHECK(std::abs(s.amplitudes()(n) - expect) < 1e-12);
    }
}

TEST_CASE("truncation error when the cutoff is too small") {
    CHECK_THROWS_AS(coherent_state(cplx{4.0, 0.0}, FockBasis(10)), TruncationError);
    CHECK_THROWS_AS(quadrature_eigenstate(0.0, 2.0, FockBasis(10)), TruncationError);
}

TEST_CASE("Q of a coherent state is a unit Gaussian in alpha") {
    const cplx alpha{0.7, 0.4};
    const DensityMatrix rho = DensityMatrix::pure(coherent_state(alpha, FockBasis(40)));
    const QFunctionEvaluator q(rho);
    for (double x : {-1.0, 0.3, 1.4, 2.5})
        for (double p : {-0.8, 0.8, 2.0}) {
            const cplx beta = alpha_from_quadratures(x, p);
            CHECK(q.at(x, p) == doctest::Approx(std::exp(-std::norm(alpha - beta)) / kPi).epsilon(1e-10));
        }
    CHECK(q.at(2 * alpha.real(), 2 * alpha.imag()) == doctest::Approx(1.0 / kPi));
}

TEST_CASE("Q moments of coherent and squeezed states") {
    const MomentTable c = q_moments(DensityMatrix::pure(coherent_state(cplx{1.0, -0.5}, FockBasis(40))));
    CHECK(c.mean(0) == doctest::Approx(2.0));
    CHECK(c.mean(1) == doctest::Approx(-1.0));
    CHECK(c.variance(0) == doctest::Approx(2.0));
    CHECK(c.variance(1) == doctest::Approx(2.0));
    CHECK(std::abs(c.covariance(0, 1)) < 1e-10);

    const double r = 1.0;
    const MomentTable s = q_moments(DensityMatrix::pure(quadrature_eigenstate(1.5, r, FockBasis(80))));
    CHECK(s.mean(0) == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(s.variance(0) == doctest::Approx(1.0 + std::exp(-2 * r)).epsilon(1e-8));
    CHECK(s.variance(1) == doctest::Approx(1.0 + std::exp(2 * r)).epsilon(1e-8));
}

TEST_CASE("quadrature density of the vacuum is the unit normal") {
    const DensityMatrix vac = DensityMatrix::pure(coherent_state(cplx{0.0, 0.0}, FockBasis(10)));
    std::vector<double> grid = {-2.0, -0.5, 0.0, 1.0, 3.0};
    for (double theta : {0.0, 0.7}) {
        const auto d = quadrature_density(vac, theta, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(d[i] == doctest::Approx(std::exp(-grid[i] * grid[i] / 2) / std::sqrt(2 * kPi)).epsilon(1e-10));
    }
}

TEST_CASE("property: Q is nonnegative and normalized for random states") {
    std::mt19937_64 gen(20240611);
    const FockBasis b(12);
    for (int trial = 0; trial < 6; ++trial) {
        const DensityMatrix rho = DensityMatrix::pure(random_state(gen, 6, b));
        const QFunctionEvaluator q(rho);
        for (double x = -6; x <= 6; x += 0.5)
            for (double p = -6; p <= 6; p += 0.5) CHECK(q.at(x, p) >= 0.0);
        CHECK(grid_integral(rho, 14.0, 0.1) == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("density matrix validation") {
    const FockBasis b(3);
    CMatrix m = CMatrix::Zero(3, 3);
    m(0, 0) = 0.5;
    CHECK_THROWS_AS(DensityMatrix::from_matrix(b, m), InvalidArgument);
    m(1, 1) = 0.5;
    m(0, 1) = 0.1;
    CHECK_THROWS_AS(DensityMatrix::from_matrix(b, m), InvalidArgument);
    m(1, 0) = 0.1;
    CHECK_NOTHROW(DensityMatrix::from_matrix(b, m));
}

TEST_CASE("harmonic evolution rotates a coherent state") {
    const FockBasis b(50);
    const cplx alpha{1.2, 0.3};
    const double omega = 1.3, t = 0.9;
    const Propagator prop(b, PolynomialHamiltonian::harmonic(omega));
    const StateVector out = prop.evolve(coherent_state(alpha, b), t);
    const StateVector expect = coherent_state(alpha * std::exp(cplx{0.0, -omega * t}), b);
    CHECK((out.amplitudes() - expect.amplitudes()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((rotate_phase(coherent_state(alpha, b).amplitudes(), omega * t) - expect.amplitudes()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("drive displaces the vacuum") {
    // exp(-i t i(eps a^dag - eps* a)) = D(eps t).
    const FockBasis b(40);
    const cplx eps{0.4, -0.2};
    const double t = 1.5;
    const Propagator prop(b, PolynomialHamiltonian::drive(eps));
    const StateVector out = prop.evolve(coherent_state(cplx{0.0, 0.0}, b), t);
    CHECK((out.amplitudes() - coherent_state(eps * t, b).amplitudes()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("quadratic moment flow matches an RK4 integration of the Heisenberg equations") {
    // H = omega a^dag a + (i kappa/2)(a^dag^2 - a^2) + i(eps a^dag - eps* a):
    //   d<q>/dt = M <q> + b,  d C/dt = M C + C M^T  (operator covariance),
    // with M = [[kappa, omega], [-omega, -kappa]], b = 2 (Re eps, Im eps).
    const double omega = 1.0, kappa = 0.3;
    const cplx eps{0.5, 0.2};
    const PolynomialHamiltonian h =
        PolynomialHamiltonian::harmonic(omega) + PolynomialHamiltonian::parametric_amplifier(kappa) + PolynomialHamiltonian::drive(eps);
    Eigen::Matrix2d M;
    M << kappa, omega, -omega, -kappa;
    const Eigen::Vector2d bvec(2 * eps.real(), 2 * eps.imag());

    const FockBasis basis(70);
    const DensityMatrix rho0 = DensityMatrix::pure(coherent_state(cplx{0.3, -0.2}, basis));
    const MomentTable m0 = q_moments(rho0);
    Eigen::Vector2d mean(m0.mean(0), m0.mean(1));
    Eigen::Matrix2d cov = m0.covariance_matrix() - Eigen::Matrix2d::Identity();

    const double T = 1.2;
    const int steps = 2000;
    const double h_t = T / steps;
    auto fm = [&](const Eigen::Vector2d& v) -> Eigen::Vector2d { return M * v + bvec; };
    auto fc = [&](const Eigen::Matrix2d& c) -> Eigen::Matrix2d { return M * c + c * M.transpose(); };
    for (int s = 0; s < steps; ++s) {
        const Eigen::Vector2d k1 = fm(mean), k2 = fm(mean + h_t / 2 * k1), k3 = fm(mean + h_t / 2 * k2), k4 = fm(mean + h_t * k3);
        mean += h_t / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        const Eigen::Matrix2d c1 = fc(cov), c2 = fc(cov + h_t / 2 * c1), c3 = fc(cov + h_t / 2 * c2), c4 = fc(cov + h_t * c3);
        cov += h_t / 6 * (c1 + 2 * c2 + 2 * c3 + c4);
    }
    const MomentTable mt = q_moments(evolve(rho0, h, T));
    CHECK(mt.mean(0) == doctest::Approx(mean(0)).epsilon(1e-8));
    CHECK(mt.mean(1) == doctest::Approx(mean(1)).epsilon(1e-8));
    const RMatrix qcov = mt.covariance_matrix();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(qcov(i, j) == doctest::Approx(cov(i, j) + (i == j ? 1.0 : 0.0)).epsilon(1e-8));
}

TEST_CASE("sparse propagation agrees with dense propagation") {
    const PolynomialHamiltonian h = PolynomialHamiltonian::parametric_amplifier(1.0) + PolynomialHamiltonian::harmonic(0.4);
    const StateVector small = quadrature_eigenstate(0.5, 0.5, FockBasis(150));
    const StateVector large = quadrature_eigenstate(0.5, 0.5, FockBasis(260));
    const Propagator dense(FockBasis(150), h);
    const Propagator sparse(FockBasis(260), h);
    REQUIRE(dense.is_dense());
    REQUIRE_FALSE(sparse.is_dense());
    const StateVector a = dense.evolve(small, 0.8);
    const StateVector b = sparse.evolve(large, 0.8);
    CHECK((a.amplitudes() - b.amplitudes().head(150)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("evolution beyond the cutoff raises TruncationError") {
    const FockBasis b(20);
    CHECK_THROWS_AS(evolve(DensityMatrix::pure(coherent_state(cplx{1.0, 0.0}, b)), PolynomialHamiltonian::parametric_amplifier(1.0), 2.0),
                    TruncationError);
}

TEST_CASE("two-mode basis indexing puts mode 0 first") {
    const FockBasis b(4, 2);
    CHECK(b.size() == 16);
    const int occ[] = {2, 3};
    CHECK(b.index(occ) == 11);
    CHECK(b.occupation(11, 0) == 2);
    CHECK(b.occupation(11, 1) == 3);
}
