#include "oqft/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oqft/errors.hpp"

namespace oqft {

int HamiltonianTerm::degree() const {
    return std::accumulate(raise.begin(), raise.end(), 0) + std::accumulate(lower.begin(), lower.end(), 0);
}

PolynomialHamiltonian::PolynomialHamiltonian(int n_modes) : n_modes_(n_modes) {
    if (n_modes < 1) throw InvalidArgument("PolynomialHamiltonian: n_modes must be >= 1");
}

PolynomialHamiltonian& PolynomialHamiltonian::add(std::vector<int> raise, std::vector<int> lower, cplx coefficient) {
    if (raise.size() != static_cast<std::size_t>(n_modes_) || lower.size() != static_cast<std::size_t>(n_modes_))
        throw DimensionError("PolynomialHamiltonian::add: powers must have one entry per mode");
    for (std::size_t m = 0; m < raise.size(); ++m)
        if (raise[m] < 0 || lower[m] < 0) throw InvalidArgument("PolynomialHamiltonian::add: negative power");
    for (auto& t : terms_) {
        if (t.raise == raise && t.lower == lower) {
            t.coefficient += coefficient;
            return *this;
        }
    }
    terms_.push_back({std::move(raise), std::move(lower), coefficient});
    return *this;
}

PolynomialHamiltonian& PolynomialHamiltonian::add_word(std::span<const LadderOp> word, cplx coefficient) {
    for (const auto& t : normal_order(word, n_modes_)) add(t.raise, t.lower, coefficient * t.coefficient);
    return *this;
}

PolynomialHamiltonian PolynomialHamiltonian::operator+(const PolynomialHamiltonian& other) const {
    if (other.n_modes_ != n_modes_) throw DimensionError("PolynomialHamiltonian: mode count mismatch");
    PolynomialHamiltonian out = *this;
    for (const auto& t : other.terms_) out.add(t.raise, t.lower, t.coefficient);
    return out;
}

PolynomialHamiltonian PolynomialHamiltonian::scaled(cplx factor) const {
    PolynomialHamiltonian out = *this;
    for (auto& t : out.terms_) t.coefficient *= factor;
    return out;
}

bool PolynomialHamiltonian::is_hermitian(double tol) const {
    for (const auto& t : terms_) {
        cplx partner{0.0, 0.0};
        for (const auto& u : terms_)
            if (u.raise == t.lower && u.lower == t.raise) partner += u.coefficient;
        if (std::abs(partner - std::conj(t.coefficient)) > tol * std::max(1.0, std::abs(t.coefficient))) return false;
    }
    return true;
}

int PolynomialHamiltonian::max_degree() const {
    int d = 0;
    for (const auto& t : terms_) d = std::max(d, t.degree());
    return d;
}

namespace {

// Visits every nonzero matrix element <target| term |flat> of the truncated operator.
template <class F>
void for_each_element(const std::vector<HamiltonianTerm>& terms, const FockBasis& basis, int n_modes, F&& emit) {
    for (const auto& t : terms) {
        for (std::size_t flat = 0; flat < basis.size(); ++flat) {
            double amp = 1.0;
            long long target = static_cast<long long>(flat);
            bool inside = true;
            for (int m = 0; m < n_modes && inside; ++m) {
                const int occ = basis.occupation(flat, m);
                const int l = t.lower[static_cast<std::size_t>(m)];
                const int k = t.raise[static_cast<std::size_t>(m)];
                if (l > occ) {
                    inside = false;
                    break;
                }
                const int mid = occ - l;
                const int top = mid + k;
                if (top >= basis.dim()) {
                    inside = false;
                    break;
                }
                for (int j = occ; j > mid; --j) amp *= std::sqrt(static_cast<double>(j));
                for (int j = mid + 1; j <= top; ++j) amp *= std::sqrt(static_cast<double>(j));
                target += static_cast<long long>(top - occ) * static_cast<long long>(basis.stride(m));
            }
            if (inside) emit(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(flat), t.coefficient * amp);
        }
    }
}

}  // namespace

CMatrix PolynomialHamiltonian::matrix(const FockBasis& basis) const {
    if (basis.n_modes() != n_modes_) throw DimensionError("PolynomialHamiltonian::matrix: basis mode count");
    const auto n = static_cast<Eigen::Index>(basis.size());
    CMatrix h = CMatrix::Zero(n, n);
    for_each_element(terms_, basis, n_modes_, [&](Eigen::Index r, Eigen::Index c, cplx v) { h(r, c) += v; });
    return h;
}

Eigen::SparseMatrix<cplx> PolynomialHamiltonian::sparse_matrix(const FockBasis& basis) const {
    if (basis.n_modes() != n_modes_) throw DimensionError("PolynomialHamiltonian::sparse_matrix: basis mode count");
    const auto n = static_cast<Eigen::Index>(basis.size());
    std::vector<Eigen::Triplet<cplx>> entries;
    for_each_element(terms_, basis, n_modes_, [&](Eigen::Index r, Eigen::Index c, cplx v) { entries.emplace_back(r, c, v); });
    Eigen::SparseMatrix<cplx> h(n, n);
    h.setFromTriplets(entries.begin(), entries.end());
    return h;
}

namespace {

std::vector<int> unit(int n_modes, int mode, int power) {
    std::vector<int> v(static_cast<std::size_t>(n_modes), 0);
    v.at(static_cast<std::size_t>(mode)) = power;
    return v;
}

void check_mode(int mode, int n_modes) {
    if (mode < 0 || mode >= n_modes) throw DimensionError("Hamiltonian: mode index out of range");
}

void normal_order_into(std::vector<LadderOp> word, cplx coef, int n_modes, std::vector<HamiltonianTerm>& out) {
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        if (!word[i].raising && word[i + 1].raising) {
            if (word[i].mode == word[i + 1].mode) {
                // a a^dag = a^dag a + 1
                std::vector<LadderOp> contracted;
                contracted.insert(contracted.end(), word.begin(), word.begin() + static_cast<std::ptrdiff_t>(i));
                contracted.insert(contracted.end(), word.begin() + static_cast<std::ptrdiff_t>(i + 2), word.end());
                normal_order_into(std::move(contracted), coef, n_modes, out);
            }
            std::swap(word[i], word[i + 1]);
            normal_order_into(std::move(word), coef, n_modes, out);
            return;
        }
    }
    HamiltonianTerm t{std::vector<int>(static_cast<std::size_t>(n_modes), 0), std::vector<int>(static_cast<std::size_t>(n_modes), 0), coef};
    for (const auto& op : word) {
        check_mode(op.mode, n_modes);
        (op.raising ? t.raise : t.lower)[static_cast<std::size_t>(op.mode)] += 1;
    }
    for (auto& u : out) {
        if (u.raise == t.raise && u.lower == t.lower) {
            u.coefficient += coef;
            return;
        }
    }
    out.push_back(std::move(t));
}

}  // namespace

std::vector<HamiltonianTerm> normal_order(std::span<const LadderOp> word, int n_modes) {
    for (const auto& op : word) check_mode(op.mode, n_modes);
    std::vector<HamiltonianTerm> out;
    normal_order_into(std::vector<LadderOp>(word.begin(), word.end()), {1.0, 0.0}, n_modes, out);
    std::erase_if(out, [](const HamiltonianTerm& t) { return t.coefficient == cplx{}; });
    return out;
}

PolynomialHamiltonian PolynomialHamiltonian::harmonic(double omega, int mode, int n_modes) {
    check_mode(mode, n_modes);
    PolynomialHamiltonian h(n_modes);
    h.add(unit(n_modes, mode, 1), unit(n_modes, mode, 1), omega);
    return h;
}

PolynomialHamiltonian PolynomialHamiltonian::parametric_amplifier(double kappa, int mode, int n_modes) {
    check_mode(mode, n_modes);
    PolynomialHamiltonian h(n_modes);
    h.add(unit(n_modes, mode, 2), unit(n_modes, mode, 0), cplx(0.0, kappa / 2.0));
    h.add(unit(n_modes, mode, 0), unit(n_modes, mode, 2), cplx(0.0, -kappa / 2.0));
    return h;
}

PolynomialHamiltonian PolynomialHamiltonian::drive(cplx eps, int mode, int n_modes) {
    check_mode(mode, n_modes);
    PolynomialHamiltonian h(n_modes);
    h.add(unit(n_modes, mode, 1), unit(n_modes, mode, 0), cplx(0.0, 1.0) * eps);
    h.add(unit(n_modes, mode, 0), unit(n_modes, mode, 1), cplx(0.0, -1.0) * std::conj(eps));
    return h;
}

PolynomialHamiltonian PolynomialHamiltonian::kerr(double chi, int mode, int n_modes) {
    check_mode(mode, n_modes);
    PolynomialHamiltonian h(n_modes);
    h.add(unit(n_modes, mode, 2), unit(n_modes, mode, 2), chi);
    return h;
}

PolynomialHamiltonian PolynomialHamiltonian::beam_splitter(double g) {
    PolynomialHamiltonian h(2);
    h.add({1, 0}, {0, 1}, g);
    h.add({0, 1}, {1, 0}, g);
    return h;
}

std::string to_string(const HamiltonianTerm& term) {
    std::ostringstream os;
    os << "(" << term.coefficient.real() << (term.coefficient.imag() < 0 ? "-" : "+") << std::abs(term.coefficient.imag()) << "i)";
    for (std::size_t m = 0; m < term.raise.size(); ++m)
        if (term.raise[m] > 0) os << " a" << m << "^dag^" << term.raise[m];
    for (std::size_t m = 0; m < term.lower.size(); ++m)
        if (term.lower[m] > 0) os << " a" << m << "^" << term.lower[m];
    return os.str();
}

}  // namespace oqft
