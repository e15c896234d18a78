#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "oqft/fock.hpp"
#include "oqft/hamiltonian.hpp"
#include "oqft/polynomial.hpp"

namespace oqft {

/// Largest Hamiltonian degree whose Q-function generator stays second order.
inline constexpr int kMaxHamiltonianDegree = 4;

/// Exact phase-space generator in derivatives-left form:
///   dQ/dt = sum_d  d^d [ c_d(q) Q ]
/// over real coordinates q = (x_0, p_0, x_1, p_1, ...). Keys are derivative
/// multi-indices.
using ExactGenerator = std::map<std::vector<int>, Polynomial<GaussianRational>>;

/// Generator of -i[M, rho] for the unit-coefficient monomial
/// M = prod (a^dag)^raise a^lower. No order gate is applied.
ExactGenerator monomial_generator(std::span<const int> raise, std::span<const int> lower);

/// Highest derivative order present in a generator.
int derivative_order(const ExactGenerator& g);

/// Generalized Fokker-Planck operator
///   dQ/dt = -sum_i d_i [A_i Q] + 1/2 sum_ij d_i d_j [D_ij Q].
struct FpeSpec {
    int n_modes = 0;
    std::vector<std::string> coordinate_names;
    std::vector<RealPolynomial> drift;
    std::vector<std::vector<RealPolynomial>> diffusion;
    int max_derivative_order = 0;

    int n_coords() const { return 2 * n_modes; }
    RealPolynomial diffusion_trace() const;
    bool has_constant_diffusion() const;
    /// Throws UnsupportedDiffusion if any entry depends on the state.
    RMatrix constant_diffusion_matrix() const;

    FpeSpec operator+(const FpeSpec& other) const;
    bool operator==(const FpeSpec& other) const;

    /// Hand-built spec with the given drift and constant diffusion.
    static FpeSpec from_constant(int n_modes, std::vector<RealPolynomial> drift, const RMatrix& diffusion);
};

/// Rewrites H into its Q-function Fokker-Planck operator.
/// Throws OrderError for any term above quartic degree, and for any term
/// whose exact generator has derivatives above second order (more than two
/// creation or two annihilation operators, e.g. a^dag^3 a).
FpeSpec derive_fpe(const PolynomialHamiltonian& hamiltonian);

/// Coordinates of the diffusion eigenbasis, split by propagation direction.
struct QuadratureSplit {
    /// Columns are eigenvectors: q = basis * y, y = basis^T q.
    RMatrix basis;
    RVector eigenvalues;
    std::vector<int> forward_coords;
    std::vector<int> backward_coords;
    std::vector<RealPolynomial> noise_amplitude;
    /// Repeated eigenvalues: the eigenbasis is not unique.
    bool degenerate = false;

    int n_coords() const { return static_cast<int>(eigenvalues.size()); }
    bool is_forward(int k) const;
    double noise(int k) const { return noise_amplitude[static_cast<std::size_t>(k)].constant_term(); }
};

/// Nonnegative diffusion eigenvalues propagate forward, negative backward.
QuadratureSplit split_quadratures(const FpeSpec& spec);

nlohmann::json to_json(const RealPolynomial& p);
nlohmann::json to_json(const FpeSpec& spec);
nlohmann::json to_json(const QuadratureSplit& split);

}  // namespace oqft
