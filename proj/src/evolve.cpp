#include "oqft/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oqft/errors.hpp"

namespace oqft {

Propagator::Propagator(const FockBasis& basis, const PolynomialHamiltonian& hamiltonian) : basis_(basis) {
    if (!hamiltonian.is_hermitian()) throw InvalidArgument("Propagator: Hamiltonian is not Hermitian");
    for (std::size_t flat = 0; flat < basis.size(); ++flat) {
        for (int m = 0; m < basis.n_modes(); ++m) {
            if (basis.occupation(flat, m) >= basis.dim() - 2) {
                edge_states_.push_back(flat);
                break;
            }
        }
    }
    if (basis.size() > kDenseLimit) {
        dense_ = false;
        sparse_ = hamiltonian.sparse_matrix(basis);
        for (Eigen::Index c = 0; c < sparse_.outerSize(); ++c) {
            double col = 0.0;
            for (Eigen::SparseMatrix<cplx>::InnerIterator it(sparse_, c); it; ++it) col += std::abs(it.value());
            norm_bound_ = std::max(norm_bound_, col);
        }
        return;
    }
    const CMatrix h = hamiltonian.matrix(basis);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    if (es.info() != Eigen::Success) throw StabilityError("Propagator: diagonalization failed");
    energies_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
    edge_rows_.resize(static_cast<Eigen::Index>(edge_states_.size()), vectors_.cols());
    for (std::size_t i = 0; i < edge_states_.size(); ++i)
        edge_rows_.row(static_cast<Eigen::Index>(i)) = vectors_.row(static_cast<Eigen::Index>(edge_states_[i]));
}

CVector Propagator::propagate(const CVector& eigen_coords, double t) const {
    CVector out = eigen_coords;
    for (Eigen::Index k = 0; k < out.size(); ++k) out(k) *= std::polar(1.0, -energies_(k) * t);
    return out;
}

double Propagator::edge_population(const CVector& eigen_coords) const {
    return (edge_rows_ * eigen_coords).squaredNorm();
}

void Propagator::monitor(const std::vector<DensityMatrix::Component>& comps, double t, int steps) const {
    if (steps < 1) throw InvalidArgument("evolve: steps must be >= 1");
    std::vector<CVector> coords;
    for (const auto& c : comps) coords.push_back(vectors_.adjoint() * c.amplitudes);
    for (int s = 0; s <= steps; ++s) {
        const double ts = t * static_cast<double>(s) / steps;
        double leak = 0.0;
        for (std::size_t i = 0; i < comps.size(); ++i) leak += comps[i].weight * edge_population(propagate(coords[i], ts));
        if (leak > kLeakageTolerance) {
            throw TruncationError("evolve: population " + sci(leak) + " in the top two Fock levels at t = " +
                                  sci(ts) + " (cutoff " + std::to_string(basis_.dim()) + ")");
        }
    }
}

CVector Propagator::taylor_step(const CVector& v, double dt) const {
    CVector term = v;
    CVector sum = v;
    for (int k = 1; k < 80; ++k) {
        term = (sparse_ * term) * cplx(0.0, -dt / k);
        sum += term;
        if (term.norm() < 1e-17 * sum.norm()) break;
    }
    return sum;
}

std::vector<DensityMatrix::Component> Propagator::evolve_sparse(std::vector<DensityMatrix::Component> comps, double t, int steps) const {
    if (steps < 1) throw InvalidArgument("evolve: steps must be >= 1");
    // Substeps are a multiple of `steps` so every monitoring instant is hit.
    const int per = std::max(1, static_cast<int>(std::ceil(norm_bound_ * std::abs(t) / steps)));
    const double dt = t / (static_cast<double>(steps) * per);
    for (int s = 1; s <= steps; ++s) {
        for (auto& c : comps)
            for (int k = 0; k < per; ++k) c.amplitudes = taylor_step(c.amplitudes, dt);
        double leak = 0.0;
        for (const auto& c : comps)
            for (std::size_t e : edge_states_) leak += c.weight * std::norm(c.amplitudes(static_cast<Eigen::Index>(e)));
        if (leak > kLeakageTolerance) {
            throw TruncationError("evolve: population " + sci(leak) + " in the top two Fock levels at t = " +
                                  sci(t * s / steps) + " (cutoff " + std::to_string(basis_.dim()) + ")");
        }
    }
    return comps;
}

DensityMatrix Propagator::evolve(const DensityMatrix& rho, double t, int steps) const {
    if (!(rho.basis() == basis_)) throw DimensionError("evolve: basis mismatch");
    if (t == 0.0) return rho;
    if (!dense_) {
        std::vector<DensityMatrix::Component> comps = rho.has_components() ? rho.components() : rho.factorized();
        return DensityMatrix::from_components(basis_, evolve_sparse(std::move(comps), t, steps));
    }
    if (rho.has_components()) {
        monitor(rho.components(), t, steps);
        std::vector<DensityMatrix::Component> out;
        for (const auto& c : rho.components())
            out.push_back({c.weight, vectors_ * propagate(vectors_.adjoint() * c.amplitudes, t)});
        return DensityMatrix::from_components(basis_, std::move(out));
    }
    // General matrix: phases act elementwise on the eigenbasis representation.
    const CMatrix tilde = vectors_.adjoint() * rho.matrix() * vectors_;
    const auto n = tilde.rows();
    auto at_time = [&](double ts) {
        CMatrix m = tilde;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index k = 0; k < n; ++k) m(j, k) *= std::polar(1.0, -(energies_(j) - energies_(k)) * ts);
        return m;
    };
    if (steps < 1) throw InvalidArgument("evolve: steps must be >= 1");
    for (int s = 0; s <= steps; ++s) {
        const double ts = t * static_cast<double>(s) / steps;
        const CMatrix m = at_time(ts);
        double leak = 0.0;
        leak += (edge_rows_ * m * edge_rows_.adjoint()).trace().real();
        if (leak > kLeakageTolerance) {
            throw TruncationError("evolve: population " + sci(leak) + " in the top two Fock levels at t = " +
                                  sci(ts));
        }
    }
    CMatrix out = vectors_ * at_time(t) * vectors_.adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    return DensityMatrix::trusted(basis_, std::move(out));
}

StateVector Propagator::evolve(const StateVector& psi, double t, int steps) const {
    if (!(psi.basis() == basis_)) throw DimensionError("evolve: basis mismatch");
    if (!dense_) {
        auto comps = evolve_sparse({DensityMatrix::Component{1.0, psi.amplitudes()}}, t, steps);
        return StateVector::normalized(basis_, comps[0].amplitudes, psi.tail_mass());
    }
    monitor({DensityMatrix::Component{1.0, psi.amplitudes()}}, t, steps);
    return StateVector::normalized(basis_, vectors_ * propagate(vectors_.adjoint() * psi.amplitudes(), t), psi.tail_mass());
}

CMatrix Propagator::unitary(double t) const {
    if (!dense_) throw DimensionError("Propagator::unitary: basis too large for a dense propagator");
    CMatrix d = vectors_;
    for (Eigen::Index k = 0; k < d.cols(); ++k) d.col(k) *= std::polar(1.0, -energies_(k) * t);
    return d * vectors_.adjoint();
}

DensityMatrix evolve(const DensityMatrix& rho, const PolynomialHamiltonian& hamiltonian, double t, int steps) {
    return Propagator(rho.basis(), hamiltonian).evolve(rho, t, steps);
}

}  // namespace oqft
