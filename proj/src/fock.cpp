#include "oqft/fock.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "oqft/errors.hpp"

namespace oqft {

namespace {

constexpr double kPi = std::numbers::pi;

void require_state_tail(double tail, const char* what) {
    if (!(tail < kTailTolerance)) {
        throw TruncationError(std::string(what) + ": truncation tail mass " + sci(tail) +
                              " exceeds " + sci(kTailTolerance));
    }
}

// Full tensor-product coherent vector (unnormalized truncation).
CVector product_coherent(std::span<const cplx> alphas, const FockBasis& basis) {
    std::vector<CVector> per_mode;
    per_mode.reserve(alphas.size());
    for (cplx a : alphas) per_mode.push_back(coherent_amplitudes(a, basis.dim()));
    CVector out(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t flat = 0; flat < basis.size(); ++flat) {
        cplx v{1.0, 0.0};
        for (int m = 0; m < basis.n_modes(); ++m) v *= per_mode[static_cast<std::size_t>(m)](basis.occupation(flat, m));
        out(static_cast<Eigen::Index>(flat)) = v;
    }
    return out;
}

std::vector<cplx> all_amplitudes(const PhasePoint& point) {
    std::vector<cplx> a = point.alphas;
    a.insert(a.end(), point.betas.begin(), point.betas.end());
    return a;
}

// exp(alpha a^dag - alpha^* a) v on a single mode, by Taylor steps of unit norm.
CVector apply_displacement(const CVector& v, cplx alpha) {
    const Eigen::Index n = v.size();
    const double norm_bound = std::abs(alpha) * 2.0 * std::sqrt(static_cast<double>(n));
    const int substeps = std::max(1, static_cast<int>(std::ceil(norm_bound)));
    const cplx a = alpha / static_cast<double>(substeps);

    auto generator = [&](const CVector& u) {
        CVector r = CVector::Zero(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k + 1 < n) r(k + 1) += a * std::sqrt(static_cast<double>(k + 1)) * u(k);
            if (k > 0) r(k - 1) -= std::conj(a) * std::sqrt(static_cast<double>(k)) * u(k);
        }
        return r;
    };

    CVector out = v;
    for (int s = 0; s < substeps; ++s) {
        CVector term = out;
        CVector sum = out;
        for (int k = 1; k < 60; ++k) {
            term = generator(term) / static_cast<double>(k);
            sum += term;
            if (term.norm() < 1e-18 * sum.norm()) break;
        }
        out = sum;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

FockBasis::FockBasis(int dim, int n_modes) : dim_(dim), n_modes_(n_modes), size_(1) {
    if (dim < 2) throw InvalidArgument("FockBasis: dim must be >= 2");
    if (n_modes < 1) throw InvalidArgument("FockBasis: n_modes must be >= 1");
    strides_.assign(static_cast<std::size_t>(n_modes), 1);
    for (int m = n_modes - 1; m >= 0; --m) {
        strides_[static_cast<std::size_t>(m)] = size_;
        if (size_ > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(dim))
            throw InvalidArgument("FockBasis: dimension overflow");
        size_ *= static_cast<std::size_t>(dim);
    }
}

int FockBasis::occupation(std::size_t flat, int mode) const {
    return static_cast<int>((flat / strides_[static_cast<std::size_t>(mode)]) % static_cast<std::size_t>(dim_));
}

std::size_t FockBasis::index(std::span<const int> occupations) const {
    if (occupations.size() != static_cast<std::size_t>(n_modes_)) throw DimensionError("FockBasis::index: mode count");
    std::size_t flat = 0;
    for (int m = 0; m < n_modes_; ++m) {
        const int n = occupations[static_cast<std::size_t>(m)];
        if (n < 0 || n >= dim_) throw DimensionError("FockBasis::index: occupation out of range");
        flat += static_cast<std::size_t>(n) * strides_[static_cast<std::size_t>(m)];
    }
    return flat;
}

// ---------------------------------------------------------------------------

StateVector::StateVector(FockBasis basis, CVector amplitudes, double tail_mass)
    : basis_(std::move(basis)), amplitudes_(std::move(amplitudes)), tail_mass_(tail_mass) {
    if (static_cast<std::size_t>(amplitudes_.size()) != basis_.size())
        throw DimensionError("StateVector: amplitude count does not match basis");
    if (std::abs(amplitudes_.norm() - 1.0) > 1e-10) throw InvalidArgument("StateVector: not normalized");
}

StateVector StateVector::normalized(FockBasis basis, CVector amplitudes, double tail_mass) {
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("StateVector: zero or non-finite vector");
    amplitudes /= n;
    return StateVector(std::move(basis), std::move(amplitudes), tail_mass);
}

// ---------------------------------------------------------------------------

DensityMatrix::DensityMatrix(FockBasis basis, CMatrix matrix, std::vector<Component> components)
    : basis_(std::move(basis)), matrix_(std::move(matrix)), components_(std::move(components)) {}

DensityMatrix DensityMatrix::trusted(FockBasis basis, CMatrix matrix) {
    if (static_cast<std::size_t>(matrix.rows()) != basis.size() || matrix.rows() != matrix.cols())
        throw DimensionError("DensityMatrix: matrix shape does not match basis");
    if ((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw InvalidArgument("DensityMatrix: not Hermitian");
    if (std::abs(matrix.trace() - 1.0) > 1e-10) throw InvalidArgument("DensityMatrix: trace differs from 1");
    return DensityMatrix(std::move(basis), std::move(matrix), {});
}

DensityMatrix DensityMatrix::from_matrix(FockBasis basis, CMatrix matrix) {
    DensityMatrix rho = trusted(std::move(basis), std::move(matrix));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.matrix_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8) throw InvalidArgument("DensityMatrix: negative eigenvalue");
    return rho;
}

DensityMatrix DensityMatrix::pure(const StateVector& state) {
    const CVector& v = state.amplitudes();
    return DensityMatrix(state.basis(), v * v.adjoint(), {Component{1.0, v}});
}

DensityMatrix DensityMatrix::mixture(std::span<const double> weights, std::span<const StateVector> states) {
    if (weights.size() != states.size() || states.empty()) throw DimensionError("mixture: weights/states mismatch");
    double total = 0.0;
    std::vector<Component> comps;
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw InvalidArgument("mixture: negative weight");
        if (!(states[i].basis() == states[0].basis())) throw DimensionError("mixture: basis mismatch");
        total += weights[i];
        if (weights[i] > 0.0) comps.push_back({weights[i], states[i].amplitudes()});
    }
    if (std::abs(total - 1.0) > 1e-10) throw InvalidArgument("mixture: weights must sum to 1");
    return from_components(states[0].basis(), std::move(comps));
}

DensityMatrix DensityMatrix::from_components(FockBasis basis, std::vector<Component> components) {
    const auto n = static_cast<Eigen::Index>(basis.size());
    CMatrix m = CMatrix::Zero(n, n);
    for (const auto& c : components) {
        if (c.amplitudes.size() != n) throw DimensionError("DensityMatrix: component size mismatch");
        m.noalias() += c.weight * (c.amplitudes * c.amplitudes.adjoint());
    }
    return DensityMatrix(std::move(basis), std::move(m), std::move(components));
}

std::vector<DensityMatrix::Component> DensityMatrix::factorized() const {
    if (has_components()) return components_;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix_);
    std::vector<Component> out;
    for (Eigen::Index k = es.eigenvalues().size() - 1; k >= 0; --k) {
        const double w = es.eigenvalues()(k);
        if (w > 1e-14) out.push_back({w, es.eigenvectors().col(k)});
    }
    return out;
}

// ---------------------------------------------------------------------------

PhasePoint PhasePoint::from_quadratures(std::span<const double> xs, std::span<const double> ps) {
    if (xs.size() != ps.size()) throw DimensionError("PhasePoint: x/p length mismatch");
    PhasePoint pt;
    for (std::size_t i = 0; i < xs.size(); ++i) pt.alphas.push_back(alpha_from_quadratures(xs[i], ps[i]));
    return pt;
}

std::vector<double> PhasePoint::x() const {
    std::vector<double> out;
    for (cplx a : alphas) out.push_back(2.0 * a.real());
    return out;
}

std::vector<double> PhasePoint::p() const {
    std::vector<double> out;
    for (cplx a : alphas) out.push_back(2.0 * a.imag());
    return out;
}

// ---------------------------------------------------------------------------

double coherent_tail_mass(double mean_occupation, int cutoff) {
    if (mean_occupation <= 0.0) return 0.0;
    // P(N >= cutoff) for N ~ Poisson(mean) is the regularized lower gamma P(cutoff, mean).
    return boost::math::gamma_p(static_cast<double>(cutoff), mean_occupation);
}

CVector coherent_amplitudes(cplx alpha, int dim) {
    CVector c(dim);
    c(0) = std::exp(-0.5 * std::norm(alpha));
    for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
    return c;
}

StateVector coherent_state(std::span<const cplx> alpha, const FockBasis& basis) {
    if (alpha.size() != static_cast<std::size_t>(basis.n_modes()))
        throw DimensionError("coherent_state: one amplitude per mode required");
    double kept = 1.0;
    for (cplx a : alpha) kept *= 1.0 - coherent_tail_mass(std::norm(a), basis.dim());
    const double tail = 1.0 - kept;
    require_state_tail(tail, "coherent_state");
    return StateVector::normalized(basis, product_coherent(alpha, basis), tail);
}

StateVector coherent_state(cplx alpha, const FockBasis& basis) {
    return coherent_state(std::span<const cplx>(&alpha, 1), basis);
}

StateVector quadrature_eigenstate(double x_i, double squeeze_r, const FockBasis& basis) {
    if (basis.n_modes() != 1) throw DimensionError("quadrature_eigenstate: single-mode basis required");
    if (!(squeeze_r >= 0.0) || !std::isfinite(x_i)) throw InvalidArgument("quadrature_eigenstate: bad parameters");
    const int dim = basis.dim();
    const int big = 2 * dim + 20;

    // Squeezed vacuum S(r)|0>, S(r) = exp(r/2 (a^2 - a^dag^2)): amplitudes on even levels.
    CVector v = CVector::Zero(big);
    const double t = std::tanh(squeeze_r);
    v(0) = 1.0 / std::sqrt(std::cosh(squeeze_r));
    for (int n = 2; n < big; n += 2) {
        v(n) = v(n - 2) * (-t) * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
    }
    const double squeeze_tail = std::max(0.0, 1.0 - v.squaredNorm());

    if (x_i != 0.0) v = apply_displacement(v, cplx(x_i / 2.0, 0.0));

    const double outside = v.tail(big - dim).squaredNorm() + squeeze_tail;
    const double edge = v.tail(4).squaredNorm();
    if (edge > 1e-14) throw TruncationError("quadrature_eigenstate: working space too small");
    require_state_tail(outside, "quadrature_eigenstate");
    return StateVector::normalized(basis, v.head(dim), outside);
}

// ---------------------------------------------------------------------------

QFunctionEvaluator::QFunctionEvaluator(const DensityMatrix& rho) : basis_(rho.basis()), components_(rho.factorized()) {}

double QFunctionEvaluator::operator()(const PhasePoint& point) const {
    if (point.n_modes() != static_cast<std::size_t>(basis_.n_modes()))
        throw DimensionError("q_function: phase point mode count does not match basis");
    const std::vector<cplx> amps = all_amplitudes(point);
    double value = 0.0;
    if (basis_.n_modes() == 1) {
        const CVector c = coherent_amplitudes(amps[0], basis_.dim());
        for (const auto& comp : components_) value += comp.weight * std::norm(c.dot(comp.amplitudes));
    } else {
        const CVector c = product_coherent(amps, basis_);
        for (const auto& comp : components_) value += comp.weight * std::norm(c.dot(comp.amplitudes));
    }
    value /= std::pow(kPi, basis_.n_modes());
    if (value < 0.0) {
        if (value < -1e-12) throw StabilityError("q_function: negative value beyond rounding");
        value = 0.0;
    }
    return value;
}

double QFunctionEvaluator::at(double x, double p) const {
    PhasePoint pt;
    pt.alphas = {alpha_from_quadratures(x, p)};
    return (*this)(pt);
}

double q_function(const DensityMatrix& rho, const PhasePoint& point) {
    if (point.n_modes() != static_cast<std::size_t>(rho.basis().n_modes()))
        throw DimensionError("q_function: phase point mode count does not match basis");
    const CVector c = product_coherent(all_amplitudes(point), rho.basis());
    double value = c.dot(rho.matrix() * c).real() / std::pow(kPi, rho.basis().n_modes());
    if (value < 0.0) {
        if (value < -1e-12) throw StabilityError("q_function: negative value beyond rounding");
        value = 0.0;
    }
    return value;
}

// ---------------------------------------------------------------------------

MomentTable::MomentTable(int n_coords, int order, std::map<std::vector<int>, double> raw)
    : n_coords_(n_coords), order_(order), raw_(std::move(raw)) {}

double MomentTable::raw(std::span<const int> exponents) const {
    const auto it = raw_.find(std::vector<int>(exponents.begin(), exponents.end()));
    if (it == raw_.end()) throw InvalidArgument("MomentTable: moment not tabulated");
    return it->second;
}

double MomentTable::mean(int i) const {
    std::vector<int> e(static_cast<std::size_t>(n_coords_), 0);
    e[static_cast<std::size_t>(i)] = 1;
    return raw(e);
}

double MomentTable::covariance(int i, int j) const {
    std::vector<int> e(static_cast<std::size_t>(n_coords_), 0);
    e[static_cast<std::size_t>(i)] += 1;
    e[static_cast<std::size_t>(j)] += 1;
    return raw(e) - mean(i) * mean(j);
}

RVector MomentTable::means() const {
    RVector m(n_coords_);
    for (int i = 0; i < n_coords_; ++i) m(i) = mean(i);
    return m;
}

RMatrix MomentTable::covariance_matrix() const {
    RMatrix c(n_coords_, n_coords_);
    for (int i = 0; i < n_coords_; ++i)
        for (int j = 0; j < n_coords_; ++j) c(i, j) = covariance(i, j);
    return c;
}

cplx antinormal_expectation(const DensityMatrix& rho, std::span<const int> lower, std::span<const int> raise) {
    const FockBasis& b = rho.basis();
    const auto modes = static_cast<std::size_t>(b.n_modes());
    if (lower.size() != modes || raise.size() != modes) throw DimensionError("antinormal_expectation: mode count");
    const CMatrix& m = rho.matrix();
    cplx total{0.0, 0.0};
    for (std::size_t flat = 0; flat < b.size(); ++flat) {
        double coef = 1.0;
        long long shift = 0;
        bool inside = true;
        for (std::size_t k = 0; k < modes && inside; ++k) {
            const int n = b.occupation(flat, static_cast<int>(k));
            const int v = raise[k];
            const int u = lower[k];
            const int top = n + v;
            if (u > top) {
                inside = false;
                break;
            }
            const int target = top - u;
            if (target >= b.dim()) {
                inside = false;
                break;
            }
            for (int j = n + 1; j <= top; ++j) coef *= std::sqrt(static_cast<double>(j));
            for (int j = top; j > target; --j) coef *= std::sqrt(static_cast<double>(j));
            shift += static_cast<long long>(target - n) * static_cast<long long>(b.stride(static_cast<int>(k)));
        }
        if (!inside) continue;
        const auto col = static_cast<Eigen::Index>(static_cast<long long>(flat) + shift);
        total += coef * m(static_cast<Eigen::Index>(flat), col);
    }
    return total;
}

namespace {

using ModePoly = std::map<std::pair<int, int>, cplx>;  // (power of alpha, power of alpha*) -> coef

ModePoly mode_poly_mul(const ModePoly& a, const ModePoly& b) {
    ModePoly out;
    for (const auto& [ka, ca] : a)
        for (const auto& [kb, cb] : b) out[{ka.first + kb.first, ka.second + kb.second}] += ca * cb;
    return out;
}

// x^i p^j in terms of alpha, alpha*.
ModePoly quadrature_monomial(int i, int j) {
    const ModePoly x{{{1, 0}, {1.0, 0.0}}, {{0, 1}, {1.0, 0.0}}};
    const ModePoly p{{{1, 0}, {0.0, -1.0}}, {{0, 1}, {0.0, 1.0}}};
    ModePoly out{{{0, 0}, {1.0, 0.0}}};
    for (int k = 0; k < i; ++k) out = mode_poly_mul(out, x);
    for (int k = 0; k < j; ++k) out = mode_poly_mul(out, p);
    return out;
}

void enumerate_exponents(int n, int order, std::vector<int>& cur, std::size_t pos, int used,
                         std::vector<std::vector<int>>& out) {
    if (pos == static_cast<std::size_t>(n)) {
        if (used > 0) out.push_back(cur);
        return;
    }
    for (int e = 0; e + used <= order; ++e) {
        cur[pos] = e;
        enumerate_exponents(n, order, cur, pos + 1, used + e, out);
    }
    cur[pos] = 0;
}

}  // namespace

MomentTable q_moments(const DensityMatrix& rho, int order) {
    if (order < 1 || order > 4) throw InvalidArgument("q_moments: order must be in 1..4");
    const int modes = rho.basis().n_modes();
    const int n_coords = 2 * modes;
    std::vector<std::vector<int>> exps;
    std::vector<int> cur(static_cast<std::size_t>(n_coords), 0);
    enumerate_exponents(n_coords, order, cur, 0, 0, exps);

    std::map<std::vector<int>, cplx> cache;  // (u_0, v_0, u_1, v_1, ...) -> expectation
    auto expectation = [&](const std::vector<int>& key) {
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        std::vector<int> lower, raise;
        for (int m = 0; m < modes; ++m) {
            lower.push_back(key[static_cast<std::size_t>(2 * m)]);
            raise.push_back(key[static_cast<std::size_t>(2 * m + 1)]);
        }
        const cplx v = antinormal_expectation(rho, lower, raise);
        cache.emplace(key, v);
        return v;
    };

    std::map<std::vector<int>, double> raw;
    raw[std::vector<int>(static_cast<std::size_t>(n_coords), 0)] = rho.trace().real();
    for (const auto& e : exps) {
        // Product over modes of per-mode expansions.
        std::map<std::vector<int>, cplx> poly{{std::vector<int>(static_cast<std::size_t>(n_coords), 0), {1.0, 0.0}}};
        for (int m = 0; m < modes; ++m) {
            const ModePoly mp = quadrature_monomial(e[static_cast<std::size_t>(2 * m)], e[static_cast<std::size_t>(2 * m + 1)]);
            std::map<std::vector<int>, cplx> next;
            for (const auto& [k, c] : poly)
                for (const auto& [uv, cm] : mp) {
                    auto key = k;
                    key[static_cast<std::size_t>(2 * m)] = uv.first;
                    key[static_cast<std::size_t>(2 * m + 1)] = uv.second;
                    next[key] += c * cm;
                }
            poly = std::move(next);
        }
        cplx value{0.0, 0.0};
        for (const auto& [key, c] : poly) value += c * expectation(key);
        raw[e] = value.real();
    }
    return MomentTable(n_coords, order, std::move(raw));
}

// ---------------------------------------------------------------------------

cplx field_at(const PhasePoint& point, const ModeGeometry& modes, std::span<const double> position) {
    const std::size_t n = point.alphas.size();
    if (modes.momenta.size() != n || modes.energies.size() != n)
        throw DimensionError("field_at: momenta/energies must have one entry per mode");
    if (!point.betas.empty() && point.betas.size() != n)
        throw DimensionError("field_at: betas must be empty or match the mode count");
    if (!(modes.volume > 0.0)) throw InvalidArgument("field_at: volume must be positive");
    cplx phi{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        if (modes.momenta[k].size() != position.size()) throw DimensionError("field_at: momentum/position dimension");
        if (!(modes.energies[k] > 0.0)) throw InvalidArgument("field_at: energies must be positive");
        double kr = 0.0;
        for (std::size_t d = 0; d < position.size(); ++d) kr += modes.momenta[k][d] * position[d];
        const cplx phase = std::polar(1.0, kr);
        const cplx beta = point.betas.empty() ? cplx{} : point.betas[k];
        phi += (phase * point.alphas[k] + std::conj(phase) * std::conj(beta)) / std::sqrt(2.0 * modes.energies[k] * modes.volume);
    }
    return phi;
}

CVector rotate_phase(const CVector& amplitudes, double theta) {
    CVector out = amplitudes;
    for (Eigen::Index n = 0; n < out.size(); ++n) out(n) *= std::polar(1.0, -theta * static_cast<double>(n));
    return out;
}

std::vector<double> quadrature_density(const DensityMatrix& rho, double theta, std::span<const double> grid) {
    if (rho.basis().n_modes() != 1) throw DimensionError("quadrature_density: single-mode state required");
    const int dim = rho.basis().dim();
    std::vector<DensityMatrix::Component> comps = rho.factorized();
    for (auto& c : comps) c.amplitudes = rotate_phase(c.amplitudes, theta);

    constexpr double kBig = 1e100;
    const double log_big = std::log(kBig);
    std::vector<double> mant(static_cast<std::size_t>(dim));
    std::vector<double> scale(static_cast<std::size_t>(dim));
    std::vector<double> out(grid.size(), 0.0);

    for (std::size_t g = 0; g < grid.size(); ++g) {
        // x = sqrt(2) q, so psi_x(x) = 2^{-1/4} psi_q(x / sqrt 2).
        const double q = grid[g] / std::numbers::sqrt2;
        double s = -0.5 * q * q - 0.25 * std::log(kPi);
        mant[0] = 1.0;
        scale[0] = s;
        if (dim > 1) {
            mant[1] = std::numbers::sqrt2 * q;
            scale[1] = s;
        }
        for (int n = 1; n + 1 < dim; ++n) {
            const auto un = static_cast<std::size_t>(n);
            double next = std::sqrt(2.0 / (n + 1)) * q * mant[un] - std::sqrt(static_cast<double>(n) / (n + 1)) * mant[un - 1];
            double prev = mant[un];
            if (std::abs(next) > kBig) {
                next /= kBig;
                prev /= kBig;
                s += log_big;
                mant[un] = prev;  // keep the pair consistent for the next step
                scale[un] = s;
            }
            mant[un + 1] = next;
            scale[un + 1] = s;
        }
        const double smax = *std::max_element(scale.begin(), scale.end());
        double density = 0.0;
        for (const auto& c : comps) {
            cplx amp{0.0, 0.0};
            for (int n = 0; n < dim; ++n) {
                const auto un = static_cast<std::size_t>(n);
                const double d = scale[un] - smax;
                if (d < -745.0) continue;
                amp += c.amplitudes(n) * (mant[un] * std::exp(d));
            }
            density += c.weight * std::norm(amp);
        }
        out[g] = density * std::exp(2.0 * smax) / std::numbers::sqrt2;
    }
    return out;
}

}  // namespace oqft
