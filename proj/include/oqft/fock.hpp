#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace oqft {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Default per-mode Fock cutoff.
inline constexpr int kDefaultCutoff = 60;
/// Maximum probability mass allowed outside the truncated space.
inline constexpr double kTailTolerance = 1e-8;

/// Truncated Fock basis |0>..|dim-1> per mode, tensor product over modes.
/// Flat index puts mode 0 in the most significant position.
class FockBasis {
public:
    FockBasis(int dim, int n_modes = 1);

    int dim() const { return dim_; }
    int n_modes() const { return n_modes_; }
    /// Total Hilbert-space dimension dim^n_modes.
    std::size_t size() const { return size_; }

    int occupation(std::size_t flat, int mode) const;
    std::size_t index(std::span<const int> occupations) const;
    /// Stride of `mode` in the flat index.
    std::size_t stride(int mode) const { return strides_[static_cast<std::size_t>(mode)]; }

    bool operator==(const FockBasis& other) const = default;

private:
    int dim_;
    int n_modes_;
    std::size_t size_;
    std::vector<std::size_t> strides_;
};

/// Normalized pure state in a truncated basis.
class StateVector {
public:
    /// Validates the norm within 1e-10. `tail_mass` is the probability the
    /// untruncated state places beyond the cutoff.
    StateVector(FockBasis basis, CVector amplitudes, double tail_mass = 0.0);

    const FockBasis& basis() const { return basis_; }
    const CVector& amplitudes() const { return amplitudes_; }
    double tail_mass() const { return tail_mass_; }

    /// Renormalizes an arbitrary nonzero vector.
    static StateVector normalized(FockBasis basis, CVector amplitudes, double tail_mass = 0.0);

private:
    FockBasis basis_;
    CVector amplitudes_;
    double tail_mass_;
};

/// Exact state of the truncated system.
///
/// When built from pure states the weighted components are retained, which
/// lets evolution and phase-space evaluation work on vectors instead of the
/// full matrix.
class DensityMatrix {
public:
    struct Component {
        double weight;
        CVector amplitudes;
    };

    /// Full validation: Hermitian and unit trace within 1e-10, smallest
    /// eigenvalue >= -1e-8.
    static DensityMatrix from_matrix(FockBasis basis, CMatrix matrix);
    static DensityMatrix pure(const StateVector& state);
    /// Incoherent mixture; weights must be nonnegative and sum to 1.
    static DensityMatrix mixture(std::span<const double> weights, std::span<const StateVector> states);
    /// Builds from weighted components whose validity is guaranteed by the caller.
    static DensityMatrix from_components(FockBasis basis, std::vector<Component> components);
    /// Checks Hermiticity and trace only; for matrices produced by unitary maps
    /// of an already valid state.
    static DensityMatrix trusted(FockBasis basis, CMatrix matrix);

    const FockBasis& basis() const { return basis_; }
    const CMatrix& matrix() const { return matrix_; }
    const std::vector<Component>& components() const { return components_; }
    bool has_components() const { return !components_.empty(); }

    cplx trace() const { return matrix_.trace(); }
    /// Population of basis state `flat`.
    double population(std::size_t flat) const { return matrix_(flat, flat).real(); }
    /// Weighted eigen-components (weights below 1e-14 dropped) if none are cached.
    std::vector<Component> factorized() const;

private:
    DensityMatrix(FockBasis basis, CMatrix matrix, std::vector<Component> components);

    FockBasis basis_;
    CMatrix matrix_;
    std::vector<Component> components_;
};

/// Phase-space point: particle amplitudes alpha and antiparticle amplitudes
/// beta. Quadratures follow x = a + a*, p = -i(a - a*).
struct PhasePoint {
    std::vector<cplx> alphas;
    std::vector<cplx> betas;

    static PhasePoint from_quadratures(std::span<const double> xs, std::span<const double> ps);
    std::vector<double> x() const;
    std::vector<double> p() const;
    std::size_t n_modes() const { return alphas.size() + betas.size(); }
};

inline cplx alpha_from_quadratures(double x, double p) { return {x / 2.0, p / 2.0}; }

/// Poisson upper tail P(n >= cutoff) for mean occupation |alpha|^2.
double coherent_tail_mass(double mean_occupation, int cutoff);

StateVector coherent_state(std::span<const cplx> alpha, const FockBasis& basis);
StateVector coherent_state(cplx alpha, const FockBasis& basis);

/// Squeezed displaced state approximating the x-quadrature eigenstate |x_i>.
/// The x variance is e^{-2r} times the vacuum value; r = 0 gives the
/// coherent state with alpha = x_i / 2.
StateVector quadrature_eigenstate(double x_i, double squeeze_r, const FockBasis& basis);

/// Amplitudes of the unnormalized coherent vector for one mode.
CVector coherent_amplitudes(cplx alpha, int dim);

/// <alpha|rho|alpha> / pi^M, clamped at zero beyond rounding.
double q_function(const DensityMatrix& rho, const PhasePoint& point);

/// Repeated Q evaluation with a cached factorization of rho.
class QFunctionEvaluator {
public:
    explicit QFunctionEvaluator(const DensityMatrix& rho);
    double operator()(const PhasePoint& point) const;
    /// Single-mode convenience in quadrature coordinates.
    double at(double x, double p) const;

private:
    FockBasis basis_;
    std::vector<DensityMatrix::Component> components_;
};

/// Raw Q-function moments E_Q[prod_i q_i^{e_i}] over the coordinates
/// (x_0, p_0, x_1, p_1, ...), for every exponent vector of total order <= 4.
class MomentTable {
public:
    MomentTable(int n_coords, int order, std::map<std::vector<int>, double> raw);

    int n_coords() const { return n_coords_; }
    int order() const { return order_; }
    double raw(std::span<const int> exponents) const;
    double mean(int i) const;
    double covariance(int i, int j) const;
    double variance(int i) const { return covariance(i, i); }
    RVector means() const;
    RMatrix covariance_matrix() const;
    const std::map<std::vector<int>, double>& all() const { return raw_; }

private:
    int n_coords_;
    int order_;
    std::map<std::vector<int>, double> raw_;
};

/// Q moments from anti-normally ordered expectations Tr(rho a^u a^dag^v).
MomentTable q_moments(const DensityMatrix& rho, int order = 2);

/// Tr(rho a^u (a^dag)^v) with per-mode powers; rho is treated as zero
/// outside the truncated space.
cplx antinormal_expectation(const DensityMatrix& rho, std::span<const int> lower, std::span<const int> raise);

/// Mode data for reconstructing the complex field at a position.
struct ModeGeometry {
    std::vector<std::vector<double>> momenta;  // k_n per mode
    std::vector<double> energies;              // E_k per mode
    double volume = 1.0;
};

/// phi(r) = sum_n (2 E_n V)^{-1/2} [e^{i k_n.r} alpha_n + e^{-i k_n.r} beta_n^*].
/// Missing betas are taken as zero.
cplx field_at(const PhasePoint& point, const ModeGeometry& modes, std::span<const double> position);

/// Probability density of the quadrature x_theta = a e^{-i theta} + h.c. on a
/// grid (single mode). Evaluated with scaled Hermite functions.
std::vector<double> quadrature_density(const DensityMatrix& rho, double theta, std::span<const double> grid);

/// Rotates a single-mode state by exp(-i theta a^dag a).
CVector rotate_phase(const CVector& amplitudes, double theta);

}  // namespace oqft
