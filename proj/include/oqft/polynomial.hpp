#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <boost/rational.hpp>

#include "oqft/errors.hpp"

namespace oqft {

/// Exact complex rational a + b i.
struct GaussianRational {
    using Rational = boost::rational<long long>;
    Rational re{0};
    Rational im{0};

    GaussianRational() = default;
    GaussianRational(Rational r, Rational i = Rational(0)) : re(r), im(i) {}
    GaussianRational(long long r) : re(r) {}

    static GaussianRational i() { return {Rational(0), Rational(1)}; }

    GaussianRational operator+(const GaussianRational& o) const { return {re + o.re, im + o.im}; }
    GaussianRational operator-(const GaussianRational& o) const { return {re - o.re, im - o.im}; }
    GaussianRational operator-() const { return {-re, -im}; }
    GaussianRational operator*(const GaussianRational& o) const {
        return {re * o.re - im * o.im, re * o.im + im * o.re};
    }
    GaussianRational& operator+=(const GaussianRational& o) { return *this = *this + o; }
    GaussianRational& operator*=(const GaussianRational& o) { return *this = *this * o; }
    bool operator==(const GaussianRational& o) const = default;

    std::complex<double> value() const { return {boost::rational_cast<double>(re), boost::rational_cast<double>(im)}; }
};

/// Sparse multivariate polynomial: exponent vector -> coefficient.
/// Exactly-zero coefficients are never stored.
template <class T>
class Polynomial {
public:
    using Exponents = std::vector<int>;

    explicit Polynomial(int n_vars = 0) : n_vars_(n_vars) {}

    static Polynomial constant(int n_vars, T c) {
        Polynomial p(n_vars);
        p.add_term(Exponents(static_cast<std::size_t>(n_vars), 0), c);
        return p;
    }
    static Polynomial variable(int n_vars, int i, T c = T(1)) {
        Exponents e(static_cast<std::size_t>(n_vars), 0);
        e.at(static_cast<std::size_t>(i)) = 1;
        Polynomial p(n_vars);
        p.add_term(std::move(e), c);
        return p;
    }

    int n_vars() const { return n_vars_; }
    const std::map<Exponents, T>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    void add_term(const Exponents& e, const T& c) {
        if (e.size() != static_cast<std::size_t>(n_vars_)) throw DimensionError("Polynomial: exponent length");
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) it->second = it->second + c;
        if (it->second == T{}) terms_.erase(it);
    }

    T coefficient(const Exponents& e) const {
        auto it = terms_.find(e);
        return it == terms_.end() ? T{} : it->second;
    }

    int degree() const {
        int d = -1;
        for (const auto& [e, c] : terms_) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
        return d;
    }
    bool is_constant() const { return degree() <= 0; }
    T constant_term() const { return coefficient(Exponents(static_cast<std::size_t>(n_vars_), 0)); }

    Polynomial& operator+=(const Polynomial& o) {
        check(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }
    Polynomial operator+(const Polynomial& o) const {
        Polynomial r = *this;
        r += o;
        return r;
    }
    Polynomial operator-() const { return scaled(T(-1)); }
    Polynomial operator-(const Polynomial& o) const { return *this + (-o); }
    Polynomial operator*(const Polynomial& o) const {
        check(o);
        Polynomial r(n_vars_);
        for (const auto& [ea, ca] : terms_)
            for (const auto& [eb, cb] : o.terms_) {
                Exponents e = ea;
                for (std::size_t k = 0; k < e.size(); ++k) e[k] += eb[k];
                r.add_term(e, ca * cb);
            }
        return r;
    }
    Polynomial scaled(const T& s) const {
        Polynomial r(n_vars_);
        for (const auto& [e, c] : terms_) r.add_term(e, c * s);
        return r;
    }
    bool operator==(const Polynomial& o) const { return n_vars_ == o.n_vars_ && terms_ == o.terms_; }

    /// Maps every coefficient through f (dropping exact zeros).
    template <class U, class F>
    Polynomial<U> map(F f) const {
        Polynomial<U> r(n_vars_);
        for (const auto& [e, c] : terms_) r.add_term(e, f(c));
        return r;
    }

    template <class S>
    S evaluate(std::span<const S> x) const {
        if (x.size() != static_cast<std::size_t>(n_vars_)) throw DimensionError("Polynomial::evaluate: argument length");
        S total{};
        for (const auto& [e, c] : terms_) {
            S term = static_cast<S>(c);
            for (std::size_t k = 0; k < e.size(); ++k)
                for (int j = 0; j < e[k]; ++j) term *= x[k];
            total += term;
        }
        return total;
    }

private:
    void check(const Polynomial& o) const {
        if (o.n_vars_ != n_vars_) throw DimensionError("Polynomial: variable count mismatch");
    }

    int n_vars_;
    std::map<Exponents, T> terms_;
};

using RealPolynomial = Polynomial<double>;

}  // namespace oqft
