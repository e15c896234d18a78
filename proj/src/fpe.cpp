#include "oqft/fpe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oqft/errors.hpp"

namespace oqft {

namespace {

using GR = GaussianRational;
using Exps = std::vector<int>;

// Differential operator sum c * x^m d^d with derivatives to the right,
// over complex coordinates (alpha_0, alpha*_0, alpha_1, ...).
using RightOperator = std::map<std::pair<Exps, Exps>, GR>;

long long binomial(int n, int k) {
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

long long falling(int n, int k) {
    long long r = 1;
    for (int i = 0; i < k; ++i) r *= (n - i);
    return r;
}

void accumulate(RightOperator& op, const Exps& m, const Exps& d, const GR& c) {
    auto [it, inserted] = op.try_emplace({m, d}, c);
    if (!inserted) it->second += c;
    if (it->second == GR{}) op.erase(it);
}

RightOperator identity_op(int n) {
    RightOperator op;
    op[{Exps(static_cast<std::size_t>(n), 0), Exps(static_cast<std::size_t>(n), 0)}] = GR(1);
    return op;
}

// Composition A o B, re-normalized with d^k x^c = sum_j C(k,j) c!/(c-j)! x^{c-j} d^{k-j}.
RightOperator compose(const RightOperator& a, const RightOperator& b) {
    RightOperator out;
    for (const auto& [ka, ca] : a) {
        for (const auto& [kb, cb] : b) {
            const Exps& ma = ka.first;
            const Exps& da = ka.second;
            const Exps& mb = kb.first;
            const Exps& db = kb.second;
            // Expand coordinate by coordinate.
            std::vector<std::tuple<Exps, Exps, GR>> partial{{ma, db, ca * cb}};
            for (std::size_t j = 0; j < ma.size(); ++j) {
                std::vector<std::tuple<Exps, Exps, GR>> next;
                const int k = da[j];
                const int c = mb[j];
                for (const auto& [m, d, coef] : partial) {
                    for (int s = 0; s <= std::min(k, c); ++s) {
                        Exps m2 = m;
                        Exps d2 = d;
                        m2[j] += c - s;
                        d2[j] += k - s;
                        next.emplace_back(std::move(m2), std::move(d2), coef * GR(binomial(k, s) * falling(c, s)));
                    }
                }
                partial = std::move(next);
            }
            for (const auto& [m, d, coef] : partial) accumulate(out, m, d, coef);
        }
    }
    return out;
}

RightOperator single(int n, int coord, bool derivative, const GR& c) {
    Exps m(static_cast<std::size_t>(n), 0);
    Exps d(static_cast<std::size_t>(n), 0);
    (derivative ? d : m)[static_cast<std::size_t>(coord)] = 1;
    return {{{m, d}, c}};
}

RightOperator sum(RightOperator a, const RightOperator& b, const GR& scale = GR(1)) {
    for (const auto& [k, c] : b) accumulate(a, k.first, k.second, c * scale);
    return a;
}

// Q-function correspondences (derivatives act on Q):
//   a rho <-> (alpha + d/dalpha*) Q        a^dag rho <-> alpha* Q
//   rho a <-> alpha Q                      rho a^dag <-> (alpha* + d/dalpha) Q
RightOperator left_lower(int n, int mode) { return sum(single(n, 2 * mode, false, GR(1)), single(n, 2 * mode + 1, true, GR(1))); }
RightOperator left_raise(int n, int mode) { return single(n, 2 * mode + 1, false, GR(1)); }
RightOperator right_lower(int n, int mode) { return single(n, 2 * mode, false, GR(1)); }
RightOperator right_raise(int n, int mode) { return sum(single(n, 2 * mode + 1, false, GR(1)), single(n, 2 * mode, true, GR(1))); }

// Left form: map derivative exponents -> multiplication polynomial, both complex coords.
using LeftOperator = std::map<Exps, std::map<Exps, GR>>;

// x^c d^k = sum_j (-1)^j C(k,j) C(c,j) j! d^{k-j} x^{c-j}
LeftOperator to_left_form(const RightOperator& op) {
    LeftOperator out;
    for (const auto& [key, coef] : op) {
        const Exps& m = key.first;
        const Exps& d = key.second;
        std::vector<std::tuple<Exps, Exps, GR>> partial{{Exps(m.size(), 0), Exps(m.size(), 0), coef}};
        for (std::size_t j = 0; j < m.size(); ++j) {
            std::vector<std::tuple<Exps, Exps, GR>> next;
            for (const auto& [dd, mm, c] : partial) {
                for (int s = 0; s <= std::min(m[j], d[j]); ++s) {
                    Exps dd2 = dd;
                    Exps mm2 = mm;
                    dd2[j] = d[j] - s;
                    mm2[j] = m[j] - s;
                    long long f = binomial(d[j], s) * binomial(m[j], s) * falling(s, s);
                    if (s % 2 == 1) f = -f;
                    next.emplace_back(std::move(dd2), std::move(mm2), c * GR(f));
                }
            }
            partial = std::move(next);
        }
        for (const auto& [dd, mm, c] : partial) {
            auto& poly = out[dd];
            auto [it, inserted] = poly.try_emplace(mm, c);
            if (!inserted) it->second += c;
            if (it->second == GR{}) poly.erase(it);
        }
    }
    std::erase_if(out, [](const auto& kv) { return kv.second.empty(); });
    return out;
}

using RealPoly = Polynomial<GR>;

// Powers of a linear form in real coordinates, cached by exponent.
RealPoly power(const RealPoly& base, int k, int n) {
    RealPoly r = RealPoly::constant(n, GR(1));
    for (int i = 0; i < k; ++i) r = r * base;
    return r;
}

// alpha = (x + i p)/2, alpha* = (x - i p)/2,
// d/dalpha = d_x - i d_p, d/dalpha* = d_x + i d_p.
ExactGenerator to_real(const LeftOperator& op, int modes) {
    const int n = 2 * modes;
    const GR half(GR::Rational(1, 2));
    const GR ihalf(GR::Rational(0), GR::Rational(1, 2));
    std::vector<RealPoly> coord_forms;   // alpha_m, alpha*_m as polynomials in (x, p)
    std::vector<RealPoly> deriv_forms;   // d/dalpha_m, d/dalpha*_m as polynomials in (d_x, d_p)
    for (int m = 0; m < modes; ++m) {
        coord_forms.push_back(RealPoly::variable(n, 2 * m, half) + RealPoly::variable(n, 2 * m + 1, ihalf));
        coord_forms.push_back(RealPoly::variable(n, 2 * m, half) + RealPoly::variable(n, 2 * m + 1, -ihalf));
        deriv_forms.push_back(RealPoly::variable(n, 2 * m, GR(1)) + RealPoly::variable(n, 2 * m + 1, -GR::i()));
        deriv_forms.push_back(RealPoly::variable(n, 2 * m, GR(1)) + RealPoly::variable(n, 2 * m + 1, GR::i()));
    }
    ExactGenerator out;
    for (const auto& [d, mult] : op) {
        RealPoly dpoly = RealPoly::constant(n, GR(1));
        for (int j = 0; j < n; ++j) dpoly = dpoly * power(deriv_forms[static_cast<std::size_t>(j)], d[static_cast<std::size_t>(j)], n);
        RealPoly cpoly(n);
        for (const auto& [m, c] : mult) {
            RealPoly t = RealPoly::constant(n, c);
            for (int j = 0; j < n; ++j) t = t * power(coord_forms[static_cast<std::size_t>(j)], m[static_cast<std::size_t>(j)], n);
            cpoly += t;
        }
        for (const auto& [e, a] : dpoly.terms()) {
            auto [it, inserted] = out.try_emplace(e, RealPoly(n));
            it->second += cpoly.scaled(a);
        }
    }
    std::erase_if(out, [](const auto& kv) { return kv.second.is_zero(); });
    return out;
}

int total(const Exps& e) { return std::accumulate(e.begin(), e.end(), 0); }

std::vector<std::string> make_coordinate_names(int modes) {
    std::vector<std::string> names;
    for (int m = 0; m < modes; ++m) {
        names.push_back("x" + std::to_string(m));
        names.push_back("p" + std::to_string(m));
    }
    return names;
}

}  // namespace

ExactGenerator monomial_generator(std::span<const int> raise, std::span<const int> lower) {
    if (raise.size() != lower.size() || raise.empty()) throw DimensionError("monomial_generator: per-mode powers required");
    const int modes = static_cast<int>(raise.size());
    const int n = 2 * modes;

    // a^dag^k a^l rho <-> L(a^dag)^k o L(a)^l ; rho a^dag^k a^l <-> R(a)^l o R(a^dag)^k
    RightOperator left = identity_op(n);
    RightOperator right = identity_op(n);
    for (int m = 0; m < modes; ++m)
        for (int k = 0; k < raise[static_cast<std::size_t>(m)]; ++k) left = compose(left, left_raise(n, m));
    for (int m = 0; m < modes; ++m)
        for (int k = 0; k < lower[static_cast<std::size_t>(m)]; ++k) left = compose(left, left_lower(n, m));
    for (int m = 0; m < modes; ++m)
        for (int k = 0; k < lower[static_cast<std::size_t>(m)]; ++k) right = compose(right, right_lower(n, m));
    for (int m = 0; m < modes; ++m)
        for (int k = 0; k < raise[static_cast<std::size_t>(m)]; ++k) right = compose(right, right_raise(n, m));

    // dQ/dt = -i (H rho - rho H)
    const RightOperator gen = sum(sum(RightOperator{}, left, -GR::i()), right, GR::i());
    ExactGenerator real = to_real(to_left_form(gen), modes);

    const Exps zero(static_cast<std::size_t>(n), 0);
    if (real.contains(zero)) throw std::logic_error("monomial_generator: generator does not conserve probability");
    return real;
}

int derivative_order(const ExactGenerator& g) {
    int order = 0;
    for (const auto& [d, poly] : g) order = std::max(order, total(d));
    return order;
}

// ---------------------------------------------------------------------------

RealPolynomial FpeSpec::diffusion_trace() const {
    RealPolynomial t(n_coords());
    for (int i = 0; i < n_coords(); ++i) t += diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    return t;
}

bool FpeSpec::has_constant_diffusion() const {
    for (const auto& row : diffusion)
        for (const auto& p : row)
            if (!p.is_constant()) return false;
    return true;
}

RMatrix FpeSpec::constant_diffusion_matrix() const {
    if (!has_constant_diffusion()) throw UnsupportedDiffusion("diffusion matrix depends on the phase-space point");
    RMatrix d(n_coords(), n_coords());
    for (int i = 0; i < n_coords(); ++i)
        for (int j = 0; j < n_coords(); ++j) d(i, j) = diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].constant_term();
    return d;
}

FpeSpec FpeSpec::operator+(const FpeSpec& o) const {
    if (o.n_modes != n_modes) throw DimensionError("FpeSpec: mode count mismatch");
    FpeSpec r = *this;
    for (int i = 0; i < n_coords(); ++i) {
        r.drift[static_cast<std::size_t>(i)] += o.drift[static_cast<std::size_t>(i)];
        for (int j = 0; j < n_coords(); ++j)
            r.diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += o.diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    int order = 0;
    for (const auto& p : r.drift)
        if (!p.is_zero()) order = 1;
    for (const auto& row : r.diffusion)
        for (const auto& p : row)
            if (!p.is_zero()) order = 2;
    r.max_derivative_order = order;
    return r;
}

bool FpeSpec::operator==(const FpeSpec& o) const {
    return n_modes == o.n_modes && drift == o.drift && diffusion == o.diffusion && max_derivative_order == o.max_derivative_order;
}

FpeSpec FpeSpec::from_constant(int n_modes, std::vector<RealPolynomial> drift, const RMatrix& diffusion) {
    const int n = 2 * n_modes;
    if (static_cast<int>(drift.size()) != n || diffusion.rows() != n || diffusion.cols() != n)
        throw DimensionError("FpeSpec::from_constant: sizes");
    if ((diffusion - diffusion.transpose()).cwiseAbs().maxCoeff() > 0.0) throw InvalidArgument("FpeSpec: diffusion must be symmetric");
    FpeSpec s;
    s.n_modes = n_modes;
    s.coordinate_names = make_coordinate_names(n_modes);
    s.drift = std::move(drift);
    s.diffusion.assign(static_cast<std::size_t>(n), std::vector<RealPolynomial>(static_cast<std::size_t>(n), RealPolynomial(n)));
    int order = 0;
    for (const auto& p : s.drift) {
        if (p.n_vars() != n) throw DimensionError("FpeSpec::from_constant: drift variable count");
        if (!p.is_zero()) order = 1;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (diffusion(i, j) != 0.0) {
                s.diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = RealPolynomial::constant(n, diffusion(i, j));
                order = 2;
            }
    s.max_derivative_order = order;
    return s;
}

FpeSpec derive_fpe(const PolynomialHamiltonian& hamiltonian) {
    for (const auto& t : hamiltonian.terms()) {
        if (t.degree() > kMaxHamiltonianDegree) {
            throw OrderError("derive_fpe: term " + to_string(t) + " has degree " + std::to_string(t.degree()) +
                             "; generators of Hamiltonians above quartic order contain third or higher derivatives");
        }
    }
    if (!hamiltonian.is_hermitian()) throw InvalidArgument("derive_fpe: Hamiltonian is not Hermitian");

    const int modes = hamiltonian.n_modes();
    const int n = 2 * modes;
    using CPoly = Polynomial<cplx>;
    std::map<Exps, CPoly> acc;
    for (const auto& t : hamiltonian.terms()) {
        const ExactGenerator g = monomial_generator(t.raise, t.lower);
        // Degree <= 4 is not sufficient: (a^dag)^m a^n yields derivatives of
        // order max(m, n), so a^dag^3 a or a^4 also break the second-order form.
        if (const int order = derivative_order(g); order > 2) {
            throw OrderError("derive_fpe: term " + to_string(t) + " yields derivatives of order " + std::to_string(order) +
                             "; a second-order generator needs at most two creation and two annihilation operators per term");
        }
        for (const auto& [d, poly] : g) {
            auto [it, inserted] = acc.try_emplace(d, CPoly(n));
            it->second += poly.map<cplx>([&](const GR& c) { return c.value() * t.coefficient; });
        }
    }

    double scale = 0.0;
    for (const auto& [d, p] : acc)
        for (const auto& [e, c] : p.terms()) scale = std::max(scale, std::abs(c));
    const double tol = 1e-12 * std::max(1.0, scale);
    auto to_real = [&](const CPoly& p) {
        RealPolynomial r(n);
        for (const auto& [e, c] : p.terms()) {
            if (std::abs(c.imag()) > tol) throw std::logic_error("derive_fpe: complex coefficient for a Hermitian Hamiltonian");
            if (std::abs(c.real()) > tol) r.add_term(e, c.real());
        }
        return r;
    };

    FpeSpec s;
    s.n_modes = modes;
    s.coordinate_names = make_coordinate_names(modes);
    s.drift.assign(static_cast<std::size_t>(n), RealPolynomial(n));
    s.diffusion.assign(static_cast<std::size_t>(n), std::vector<RealPolynomial>(static_cast<std::size_t>(n), RealPolynomial(n)));
    for (const auto& [d, p] : acc) {
        RealPolynomial r = to_real(p);
        if (r.is_zero()) continue;
        const int order = total(d);
        s.max_derivative_order = std::max(s.max_derivative_order, order);
        if (order == 1) {
            const auto i = static_cast<std::size_t>(std::find(d.begin(), d.end(), 1) - d.begin());
            s.drift[i] = -r;
        } else if (order == 2) {
            std::vector<std::size_t> idx;
            for (std::size_t k = 0; k < d.size(); ++k)
                for (int j = 0; j < d[k]; ++j) idx.push_back(k);
            if (idx[0] == idx[1]) {
                s.diffusion[idx[0]][idx[0]] = r.scaled(2.0);
            } else {
                s.diffusion[idx[0]][idx[1]] = r;
                s.diffusion[idx[1]][idx[0]] = r;
            }
        } else {
            throw std::logic_error("derive_fpe: unexpected derivative order");
        }
    }
    return s;
}

// ---------------------------------------------------------------------------

bool QuadratureSplit::is_forward(int k) const {
    return std::find(forward_coords.begin(), forward_coords.end(), k) != forward_coords.end();
}

QuadratureSplit split_quadratures(const FpeSpec& spec) {
    const RMatrix d = spec.constant_diffusion_matrix();
    const int n = spec.n_coords();
    QuadratureSplit split;

    const bool diagonal = (d - RMatrix(d.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
    if (diagonal) {
        split.basis = RMatrix::Identity(n, n);
        split.eigenvalues = d.diagonal();
    } else {
        Eigen::SelfAdjointEigenSolver<RMatrix> es(d);
        if (es.info() != Eigen::Success) throw UnsupportedDiffusion("split_quadratures: eigen-decomposition failed");
        // Order eigen-coordinates by their dominant original coordinate, fix signs.
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::vector<Eigen::Index> dominant(static_cast<std::size_t>(n));
        RMatrix vecs = es.eigenvectors();
        for (int k = 0; k < n; ++k) {
            Eigen::Index arg;
            vecs.col(k).cwiseAbs().maxCoeff(&arg);
            if (vecs(arg, k) < 0) vecs.col(k) *= -1.0;
            dominant[static_cast<std::size_t>(k)] = arg;
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dominant[static_cast<std::size_t>(a)] < dominant[static_cast<std::size_t>(b)]; });
        split.basis.resize(n, n);
        split.eigenvalues.resize(n);
        for (int k = 0; k < n; ++k) {
            split.basis.col(k) = vecs.col(order[static_cast<std::size_t>(k)]);
            split.eigenvalues(k) = es.eigenvalues()(order[static_cast<std::size_t>(k)]);
        }
    }

    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    for (int k = 0; k < n; ++k) {
        double lambda = split.eigenvalues(k);
        if (std::abs(lambda) < 1e-14 * scale) lambda = 0.0;
        split.eigenvalues(k) = lambda;
        (lambda >= 0.0 ? split.forward_coords : split.backward_coords).push_back(k);
        split.noise_amplitude.push_back(RealPolynomial::constant(n, std::sqrt(std::abs(lambda))));
        for (int j = 0; j < k; ++j)
            if (std::abs(split.eigenvalues(j) - lambda) <= 1e-12 * scale) split.degenerate = true;
    }
    return split;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RealPolynomial& p) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [e, c] : p.terms()) terms.push_back({{"powers", e}, {"coefficient", c}});
    return terms;
}

nlohmann::json to_json(const FpeSpec& spec) {
    nlohmann::json j;
    j["coordinates"] = spec.coordinate_names;
    j["drift"] = nlohmann::json::array();
    for (const auto& p : spec.drift) j["drift"].push_back(to_json(p));
    j["diffusion"] = nlohmann::json::array();
    for (const auto& row : spec.diffusion) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& p : row) r.push_back(to_json(p));
        j["diffusion"].push_back(r);
    }
    j["max_derivative_order"] = spec.max_derivative_order;
    return j;
}

nlohmann::json to_json(const QuadratureSplit& split) {
    nlohmann::json j;
    j["forward_coords"] = split.forward_coords;
    j["backward_coords"] = split.backward_coords;
    std::vector<double> ev(split.eigenvalues.data(), split.eigenvalues.data() + split.eigenvalues.size());
    j["eigenvalues"] = ev;
    nlohmann::json basis = nlohmann::json::array();
    for (Eigen::Index k = 0; k < split.basis.cols(); ++k) {
        std::vector<double> col(static_cast<std::size_t>(split.basis.rows()));
        for (Eigen::Index i = 0; i < split.basis.rows(); ++i) col[static_cast<std::size_t>(i)] = split.basis(i, k);
        basis.push_back(col);
    }
    j["eigenvectors"] = basis;
    std::vector<double> noise;
    for (int k = 0; k < split.n_coords(); ++k) noise.push_back(split.noise(k));
    j["noise_amplitude"] = noise;
    j["degenerate"] = split.degenerate;
    return j;
}

}  // namespace oqft
