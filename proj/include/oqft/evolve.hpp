#pragma once

#include "oqft/fock.hpp"
#include "oqft/hamiltonian.hpp"

namespace oqft {

/// Leakage bound for the top two Fock levels of any mode during evolution.
inline constexpr double kLeakageTolerance = 1e-6;

/// Bases above this size are propagated by sparse Taylor stepping instead of
/// dense diagonalization.
inline constexpr std::size_t kDenseLimit = 200;

/// Exact propagator for a time-independent Hamiltonian on a truncated basis.
///
/// Small bases: the truncated Hamiltonian is diagonalized once and evolution
/// to any time is a phase multiplication in the eigenbasis. Large bases:
/// exp(-iHt) is applied to state vectors by Taylor series on substeps with
/// ||H|| dt <= 1, summed to machine precision. Construct once and reuse for
/// several times or states.
class Propagator {
public:
    Propagator(const FockBasis& basis, const PolynomialHamiltonian& hamiltonian);

    const FockBasis& basis() const { return basis_; }
    const RVector& energies() const { return energies_; }

    /// rho(t) = U rho U^dag. Leakage into the top two levels is monitored at
    /// `steps` equally spaced instants in (0, t]; TruncationError if it
    /// exceeds kLeakageTolerance.
    DensityMatrix evolve(const DensityMatrix& rho, double t, int steps = 16) const;
    StateVector evolve(const StateVector& psi, double t, int steps = 16) const;

    /// U(t) = exp(-i H t) in the Fock basis. Dense bases only.
    CMatrix unitary(double t) const;

    bool is_dense() const { return dense_; }

private:
    CVector taylor_step(const CVector& v, double dt) const;
    std::vector<DensityMatrix::Component> evolve_sparse(std::vector<DensityMatrix::Component> comps, double t, int steps) const;

    CVector propagate(const CVector& eigen_coords, double t) const;
    double edge_population(const CVector& eigen_coords) const;
    void monitor(const std::vector<DensityMatrix::Component>& comps, double t, int steps) const;

    FockBasis basis_;
    bool dense_ = true;
    Eigen::SparseMatrix<cplx> sparse_;
    double norm_bound_ = 0.0;
    RVector energies_;
    CMatrix vectors_;
    std::vector<std::size_t> edge_states_;
    CMatrix edge_rows_;
};

/// One-shot convenience wrapper around Propagator.
DensityMatrix evolve(const DensityMatrix& rho, const PolynomialHamiltonian& hamiltonian, double t, int steps = 16);

}  // namespace oqft
