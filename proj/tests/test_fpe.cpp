#include "doctest.h"

#include <array>
#include <cmath>
#include <random>

#include "oqft/errors.hpp"
#include "oqft/evolve.hpp"
#include "oqft/fock.hpp"
#include "oqft/fpe.hpp"
#include "oqft/hamiltonian.hpp"

using namespace oqft;

namespace {

double max_coeff(const RealPolynomial& p) {
    double m = 0.0;
    for (const auto& [e, c] : p.terms()) m = std::max(m, std::abs(c));
    return m;
}

double spec_distance(const FpeSpec& a, const FpeSpec& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.drift.size(); ++i) {
        d = std::max(d, max_coeff(a.drift[i] - b.drift[i]));
        for (std::size_t j = 0; j < a.drift.size(); ++j) d = std::max(d, max_coeff(a.diffusion[i][j] - b.diffusion[i][j]));
    }
    return d;
}

// Adds c M + conj(c) M^dag for the monomial (raise, lower).
void add_hermitian_pair(PolynomialHamiltonian& h, std::vector<int> raise, std::vector<int> lower, cplx c) {
    h.add(raise, lower, c);
    h.add(lower, raise, std::conj(c));
}

PolynomialHamiltonian random_hamiltonian(std::mt19937_64& gen, int n_modes, int max_degree) {
    std::uniform_int_distribution<int> power(0, max_degree);
    std::normal_distribution<double> n;
    PolynomialHamiltonian h(n_modes);
    for (int term = 0; term < 6; ++term) {
        std::vector<int> r(static_cast<std::size_t>(n_modes)), l(static_cast<std::size_t>(n_modes));
        int deg = 0;
        for (int m = 0; m < n_modes; ++m) {
            r[static_cast<std::size_t>(m)] = power(gen);
            l[static_cast<std::size_t>(m)] = power(gen);
        }
        for (int m = 0; m < n_modes; ++m) deg += r[static_cast<std::size_t>(m)] + l[static_cast<std::size_t>(m)];
        int rs = 0, ls = 0;
        for (int m = 0; m < n_modes; ++m) {
            rs += r[static_cast<std::size_t>(m)];
            ls += l[static_cast<std::size_t>(m)];
        }
        if (deg == 0 || deg > max_degree || rs > 2 || ls > 2) continue;
        add_hermitian_pair(h, r, l, {n(gen), n(gen)});
    }
    return h;
}

std::vector<PolynomialHamiltonian> hermitian_suite() {
    std::vector<PolynomialHamiltonian> s;
    s.push_back(PolynomialHamiltonian::harmonic(1.3));
    s.push_back(PolynomialHamiltonian::parametric_amplifier(0.7));
    s.push_back(PolynomialHamiltonian::drive(cplx{0.2, 0.9}));
    s.push_back(PolynomialHamiltonian::kerr(0.4));
    s.push_back(PolynomialHamiltonian::beam_splitter(0.6));
    PolynomialHamiltonian cubic(1);
    add_hermitian_pair(cubic, {2}, {1}, cplx{0.3, -0.1});
    s.push_back(cubic);
    PolynomialHamiltonian quartic(2);
    add_hermitian_pair(quartic, {2, 0}, {0, 2}, cplx{0.0, 0.5});
    add_hermitian_pair(quartic, {1, 1}, {2, 0}, cplx{0.2, 0.0});
    s.push_back(quartic);
    PolynomialHamiltonian cross(2);
    cross.add({1, 1}, {1, 1}, 0.25);
    add_hermitian_pair(cross, {2, 0}, {0, 1}, cplx{0.1, 0.1});
    s.push_back(cross);
    return s;
}

}  // namespace

TEST_CASE("harmonic oscillator: pure rotation drift, no diffusion") {
    const FpeSpec f = derive_fpe(PolynomialHamiltonian::harmonic(2.0));
    CHECK(f.n_modes == 1);
    CHECK(f.drift[0].coefficient({0, 1}) == doctest::Approx(2.0));
    CHECK(f.drift[1].coefficient({1, 0}) == doctest::Approx(-2.0));
    CHECK(f.drift[0].terms().size() == 1);
    CHECK(f.drift[1].terms().size() == 1);
    for (const auto& row : f.diffusion)
        for (const auto& d : row) CHECK(d.is_zero());
}

TEST_CASE("parametric amplifier: opposite-sign diffusion") {
    const double kappa = 0.8;
    const FpeSpec f = derive_fpe(PolynomialHamiltonian::parametric_amplifier(kappa));
    CHECK(f.drift[0].coefficient({1, 0}) == doctest::Approx(kappa));
    CHECK(f.drift[1].coefficient({0, 1}) == doctest::Approx(-kappa));
    const RMatrix d = f.constant_diffusion_matrix();
    CHECK(d(0, 0) == doctest::Approx(-2 * kappa));
    CHECK(d(1, 1) == doctest::Approx(2 * kappa));
    CHECK(d(0, 1) == doctest::Approx(0.0));

    const QuadratureSplit s = split_quadratures(f);
    REQUIRE(s.backward_coords.size() == 1);
    REQUIRE(s.forward_coords.size() == 1);
    // The amplified quadrature x propagates backward in time.
    CHECK(std::abs(s.basis(0, s.backward_coords[0])) == doctest::Approx(1.0));
    CHECK(s.noise(s.backward_coords[0]) == doctest::Approx(std::sqrt(2 * kappa)));
}

TEST_CASE("quadratic Hamiltonians: D = -(M + M^T) keeps Q covariances consistent") {
    // Operator covariances evolve without a diffusion term and Q adds the
    // vacuum identity, so the Q-space diffusion must cancel M + M^T.
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 5; ++trial) {
        const PolynomialHamiltonian h = random_hamiltonian(gen, 1, 2);
        const FpeSpec f = derive_fpe(h);
        const RMatrix d = f.constant_diffusion_matrix();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                std::vector<int> ei(2, 0), ej(2, 0);
                ei[static_cast<std::size_t>(j)] = 1;
                ej[static_cast<std::size_t>(i)] = 1;
                const double mij = f.drift[static_cast<std::size_t>(i)].coefficient(ei);
                const double mji = f.drift[static_cast<std::size_t>(j)].coefficient(ej);
                CHECK(d(i, j) == doctest::Approx(-(mij + mji)).epsilon(1e-12));
            }
    }
}

TEST_CASE("Hermitian suite of degree <= 4 has traceless diffusion") {
    for (const auto& h : hermitian_suite()) {
        REQUIRE(h.is_hermitian());
        const FpeSpec f = derive_fpe(h);
        CHECK(f.diffusion_trace().is_zero());
        CHECK(f.max_derivative_order <= 2);
    }
}

TEST_CASE("degree five and six raise OrderError") {
    PolynomialHamiltonian h5(1), h6(1), h6b(2);
    add_hermitian_pair(h5, {3}, {2}, cplx{1.0, 0.0});
    add_hermitian_pair(h6, {6}, {0}, cplx{0.0, 1.0});
    h6b.add({2, 1}, {2, 1}, 1.0);
    CHECK_THROWS_AS(derive_fpe(h5), OrderError);
    CHECK_THROWS_AS(derive_fpe(h6), OrderError);
    CHECK_THROWS_AS(derive_fpe(h6b), OrderError);
}

TEST_CASE("non-Hermitian input is rejected") {
    PolynomialHamiltonian h(1);
    h.add({2}, {0}, 1.0);
    CHECK_THROWS_AS(derive_fpe(h), InvalidArgument);
}

TEST_CASE("property: random Hermitian Hamiltonians") {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 30; ++trial) {
        const int modes = 1 + trial % 2;
        const PolynomialHamiltonian a = random_hamiltonian(gen, modes, 4);
        const PolynomialHamiltonian b = random_hamiltonian(gen, modes, 4);
        const FpeSpec fa = derive_fpe(a), fb = derive_fpe(b);
        CHECK(fa.diffusion_trace().is_zero());
        CHECK(spec_distance(derive_fpe(a + b), fa + fb) < 1e-12);
        CHECK(spec_distance(derive_fpe(a.scaled(2.0)), fa + fa) < 1e-12);
    }
}

TEST_CASE("quartic terms with three or more ladder operators of one kind raise OrderError") {
    // rho (a^dag)^3 maps to (alpha* + d_alpha)^3 Q: a third derivative survives.
    PolynomialHamiltonian h(1);
    add_hermitian_pair(h, {3}, {1}, cplx{1.0, 0.0});
    CHECK_THROWS_AS(derive_fpe(h), OrderError);
    const int r[] = {3}, l[] = {1};
    CHECK(derivative_order(monomial_generator(r, l)) == 3);
    const int r4[] = {4}, l0[] = {0};
    CHECK(derivative_order(monomial_generator(r4, l0)) == 4);
    const int r2[] = {2}, l2[] = {2};
    CHECK(derivative_order(monomial_generator(r2, l2)) == 2);
}

TEST_CASE("property: OrderError exactly when a term has more than two creation or annihilation operators") {
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> power(0, 3);
    for (int trial = 0; trial < 80; ++trial) {
        const int modes = 1 + trial % 2;
        std::vector<int> r(static_cast<std::size_t>(modes)), l(static_cast<std::size_t>(modes));
        int rs = 0, ls = 0;
        for (int m = 0; m < modes; ++m) {
            rs += r[static_cast<std::size_t>(m)] = power(gen);
            ls += l[static_cast<std::size_t>(m)] = power(gen);
        }
        if (rs + ls == 0) continue;
        PolynomialHamiltonian h(modes);
        add_hermitian_pair(h, r, l, cplx{0.3, 0.2});
        CAPTURE(rs);
        CAPTURE(ls);
        if (rs > 2 || ls > 2) {
            CHECK_THROWS_AS(derive_fpe(h), OrderError);
        } else {
            CHECK(derive_fpe(h).max_derivative_order <= 2);
        }
    }
}

TEST_CASE("generator reproduces dQ/dt of the exact evolution") {
    // Finite differences in time of the evolved Q against the differential
    // operator -d_i(A_i Q) + 1/2 d_i d_j (D_ij Q) applied by finite differences.
    std::vector<PolynomialHamiltonian> hs = {PolynomialHamiltonian::kerr(0.3) + PolynomialHamiltonian::harmonic(0.5),
                                             PolynomialHamiltonian::parametric_amplifier(0.6)};
    PolynomialHamiltonian quartic(1);
    add_hermitian_pair(quartic, {2}, {1}, cplx{-0.2, 0.05});
    quartic.add({2}, {2}, 0.15);
    hs.push_back(quartic);

    const FockBasis basis(40);
    const DensityMatrix rho = DensityMatrix::pure(coherent_state(cplx{0.6, 0.3}, basis));
    for (const auto& h : hs) {
        const FpeSpec f = derive_fpe(h);
        const Propagator prop(basis, h);
        const double ht = 1e-3;
        const QFunctionEvaluator q0(rho), q1(prop.evolve(rho, ht)), q2(prop.evolve(rho, 2 * ht));
        const double e = 1e-3;
        for (const auto& pt : std::vector<std::array<double, 2>>{{1.0, 0.4}, {0.2, 1.1}, {1.8, 0.9}}) {
            const double dqdt = (-3 * q0.at(pt[0], pt[1]) + 4 * q1.at(pt[0], pt[1]) - q2.at(pt[0], pt[1])) / (2 * ht);
            auto weighted = [&](const RealPolynomial& c, double dx, double dp) {
                const double v[2] = {pt[0] + dx, pt[1] + dp};
                return c.evaluate<double>(v) * q0.at(v[0], v[1]);
            };
            auto shift = [&](int i, double s, double& dx, double& dp) { (i == 0 ? dx : dp) += s; };
            double rhs = 0.0;
            for (int i = 0; i < 2; ++i) {
                double dxp = 0, dpp = 0, dxm = 0, dpm = 0;
                shift(i, e, dxp, dpp);
                shift(i, -e, dxm, dpm);
                const auto& a = f.drift[static_cast<std::size_t>(i)];
                rhs -= (weighted(a, dxp, dpp) - weighted(a, dxm, dpm)) / (2 * e);
                for (int j = 0; j < 2; ++j) {
                    const auto& d = f.diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    if (d.is_zero()) continue;
                    double sum = 0.0;
                    for (int si : {1, -1})
                        for (int sj : {1, -1}) {
                            double dx = 0, dp = 0;
                            shift(i, si * e, dx, dp);
                            shift(j, sj * e, dx, dp);
                            sum += si * sj * weighted(d, dx, dp);
                        }
                    rhs += 0.5 * sum / (4 * e * e);
                }
            }
            CHECK(dqdt == doctest::Approx(rhs).epsilon(1e-4).scale(1.0));
        }
    }
}

TEST_CASE("split puts nonnegative eigenvalues forward") {
    RMatrix d(2, 2);
    d << 1.0, 0.0, 0.0, 0.0;
    const FpeSpec f = FpeSpec::from_constant(1, {RealPolynomial(2), RealPolynomial(2)}, d);
    const QuadratureSplit s = split_quadratures(f);
    CHECK(s.forward_coords.size() == 2);
    CHECK(s.backward_coords.empty());
}
