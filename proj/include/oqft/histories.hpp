#pragma once

#include <vector>

#include "json.hpp"

#include "oqft/fock.hpp"
#include "oqft/hamiltonian.hpp"

namespace oqft {

/// One history: at each time t_k the projector selection[k] from
/// projector_sets[k], with evolution under `hamiltonian` in between.
struct HistorySpec {
    FockBasis basis;
    PolynomialHamiltonian hamiltonian;
    std::vector<double> times;
    std::vector<std::vector<CMatrix>> projector_sets;
    std::vector<int> selection;

    /// Throws InvalidArgument unless times ascend (from t >= 0), every set is
    /// idempotent, mutually orthogonal and complete within `tol`, and the
    /// selection is in range; DimensionError on size mismatches.
    void validate(double tol = 1e-9) const;

    HistorySpec with_selection(std::vector<int> selection) const;
};

/// C = P_n U(t_n - t_{n-1}) ... P_2 U(t_2 - t_1) P_1 U(t_1), with U(t) = exp(-iHt).
CMatrix class_operator(const HistorySpec& spec);

/// Tr[C_i rho C_j^dag].
cplx decoherence_functional(const CMatrix& c_i, const CMatrix& c_j, const DensityMatrix& rho);
/// Throws InvalidArgument unless the specs differ only in their selections.
cplx decoherence_functional(const HistorySpec& spec_i, const HistorySpec& spec_j, const DensityMatrix& rho);

/// Every selection over the projector sets of `base`, last time varying fastest.
std::vector<HistorySpec> complete_family(const HistorySpec& base);

/// Replaces the projector set at `time_index` by sums over `groups` (a
/// partition of its indices); the selection maps to the containing group.
HistorySpec coarse_grain(const HistorySpec& spec, int time_index, const std::vector<std::vector<int>>& groups);

struct ConsistencyReport {
    bool consistent = false;
    double tolerance = 0.0;
    double max_off_diagonal = 0.0;
    /// Largest |D(i,j) - conj(D(j,i))|.
    double hermiticity_error = 0.0;
    std::vector<std::vector<int>> selections;
    CMatrix functional;
    /// Diagonal entries (real parts); reported whether or not the family is consistent.
    std::vector<double> probabilities;
    double probability_sum = 0.0;
    /// Indices of diagonal entries below -1e-10.
    std::vector<int> negative;
    /// Largest |Im D(i,i)|.
    double diagonal_imaginary = 0.0;
};

/// Consistent iff every off-diagonal |D(i,j)| < tol. The family must cover
/// all selections of its shared projector sets.
ConsistencyReport is_consistent(const std::vector<HistorySpec>& family, const DensityMatrix& rho, double tol = 1e-6);

nlohmann::json to_json(const HistorySpec& spec);
nlohmann::json to_json(const ConsistencyReport& report);

}  // namespace oqft
