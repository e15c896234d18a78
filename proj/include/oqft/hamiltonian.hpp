#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "oqft/fock.hpp"

namespace oqft {

/// A single creation or annihilation operator on one mode.
struct LadderOp {
    int mode = 0;
    bool raising = false;

    static LadderOp create(int mode) { return {mode, true}; }
    static LadderOp annihilate(int mode) { return {mode, false}; }
};

/// c * prod_m (a_m^dag)^{raise[m]} (a_m)^{lower[m]}, normally ordered.
struct HamiltonianTerm {
    std::vector<int> raise;
    std::vector<int> lower;
    cplx coefficient;

    int degree() const;
};

/// Normally-ordered polynomial in ladder operators with hbar = 1.
class PolynomialHamiltonian {
public:
    explicit PolynomialHamiltonian(int n_modes);

    int n_modes() const { return n_modes_; }
    const std::vector<HamiltonianTerm>& terms() const { return terms_; }

    /// Adds c * (a^dag)^raise a^lower; like terms are merged.
    PolynomialHamiltonian& add(std::vector<int> raise, std::vector<int> lower, cplx coefficient);
    /// Adds c * (word), normal-ordering the word with [a_m, a_n^dag] = delta_mn.
    PolynomialHamiltonian& add_word(std::span<const LadderOp> word, cplx coefficient);

    PolynomialHamiltonian operator+(const PolynomialHamiltonian& other) const;
    PolynomialHamiltonian scaled(cplx factor) const;

    /// Closed under conjugate transpose within `tol`.
    bool is_hermitian(double tol = 1e-12) const;
    int max_degree() const;

    /// Projection onto the truncated basis.
    CMatrix matrix(const FockBasis& basis) const;
    Eigen::SparseMatrix<cplx> sparse_matrix(const FockBasis& basis) const;

    // Common single-mode Hamiltonians.
    static PolynomialHamiltonian harmonic(double omega, int mode = 0, int n_modes = 1);
    /// (i kappa / 2)(a^dag^2 - a^2): amplifies x = a + a^dag at rate kappa.
    static PolynomialHamiltonian parametric_amplifier(double kappa, int mode = 0, int n_modes = 1);
    /// Coherent drive i(eps a^dag - eps^* a).
    static PolynomialHamiltonian drive(cplx eps, int mode = 0, int n_modes = 1);
    static PolynomialHamiltonian kerr(double chi, int mode = 0, int n_modes = 1);
    /// g (a_0^dag a_1 + a_1^dag a_0).
    static PolynomialHamiltonian beam_splitter(double g);

private:
    int n_modes_;
    std::vector<HamiltonianTerm> terms_;
};

/// Normal-orders a product of ladder operators. Returns the list of
/// normally-ordered monomials (raise, lower, coefficient).
std::vector<HamiltonianTerm> normal_order(std::span<const LadderOp> word, int n_modes);

std::string to_string(const HamiltonianTerm& term);

}  // namespace oqft
