#include "oqft/histories.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "oqft/errors.hpp"
#include "oqft/evolve.hpp"

namespace oqft {

namespace {

double max_abs(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

bool same_structure(const HistorySpec& a, const HistorySpec& b) {
    if (!(a.basis == b.basis) || a.times != b.times || a.projector_sets.size() != b.projector_sets.size()) return false;
    for (std::size_t k = 0; k < a.projector_sets.size(); ++k) {
        const auto& pa = a.projector_sets[k];
        const auto& pb = b.projector_sets[k];
        if (pa.size() != pb.size()) return false;
        for (std::size_t i = 0; i < pa.size(); ++i)
            if (pa[i].rows() != pb[i].rows() || pa[i].cols() != pb[i].cols() || max_abs(pa[i] - pb[i]) != 0.0) return false;
    }
    return max_abs(a.hamiltonian.matrix(a.basis) - b.hamiltonian.matrix(b.basis)) == 0.0;
}

nlohmann::json matrix_json(const CMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void HistorySpec::validate(double tol) const {
    const auto n = static_cast<Eigen::Index>(basis.size());
    if (times.empty()) throw InvalidArgument("HistorySpec: at least one time required");
    if (projector_sets.size() != times.size() || selection.size() != times.size())
        throw DimensionError("HistorySpec: times, projector_sets and selection must have equal length");
    if (hamiltonian.n_modes() != basis.n_modes()) throw DimensionError("HistorySpec: Hamiltonian and basis mode counts differ");
    if (times.front() < 0.0) throw InvalidArgument("HistorySpec: times must be nonnegative");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] >= times[k - 1])) throw InvalidArgument("HistorySpec: times must ascend");
    const CMatrix id = CMatrix::Identity(n, n);
    for (std::size_t k = 0; k < projector_sets.size(); ++k) {
        const auto& set = projector_sets[k];
        if (set.empty()) throw InvalidArgument("HistorySpec: empty projector set at time " + std::to_string(k));
        CMatrix total = CMatrix::Zero(n, n);
        for (std::size_t i = 0; i < set.size(); ++i) {
            const CMatrix& p = set[i];
            if (p.rows() != n || p.cols() != n) throw DimensionError("HistorySpec: projector size does not match basis");
            if (max_abs(p * p - p) > tol) throw InvalidArgument("HistorySpec: projector " + std::to_string(i) + " at time " + std::to_string(k) + " is not idempotent");
            if (max_abs(p - p.adjoint()) > tol) throw InvalidArgument("HistorySpec: projector " + std::to_string(i) + " at time " + std::to_string(k) + " is not Hermitian");
            for (std::size_t j = 0; j < i; ++j)
                if (max_abs(p * set[j]) > tol) throw InvalidArgument("HistorySpec: projectors at time " + std::to_string(k) + " are not orthogonal");
            total += p;
        }
        if (max_abs(total - id) > tol) throw InvalidArgument("HistorySpec: projectors at time " + std::to_string(k) + " do not sum to identity");
        if (selection[k] < 0 || static_cast<std::size_t>(selection[k]) >= set.size())
            throw InvalidArgument("HistorySpec: selection out of range at time " + std::to_string(k));
    }
}

HistorySpec HistorySpec::with_selection(std::vector<int> sel) const {
    HistorySpec out = *this;
    out.selection = std::move(sel);
    return out;
}

CMatrix class_operator(const HistorySpec& spec) {
    spec.validate();
    const Propagator prop(spec.basis, spec.hamiltonian);
    double prev = 0.0;
    const auto n = static_cast<Eigen::Index>(spec.basis.size());
    CMatrix c = CMatrix::Identity(n, n);
    for (std::size_t k = 0; k < spec.times.size(); ++k) {
        const double dt = spec.times[k] - prev;
        if (dt != 0.0) c = prop.unitary(dt) * c;
        c = spec.projector_sets[k][static_cast<std::size_t>(spec.selection[k])] * c;
        prev = spec.times[k];
    }
    return c;
}

cplx decoherence_functional(const CMatrix& c_i, const CMatrix& c_j, const DensityMatrix& rho) {
    const auto n = static_cast<Eigen::Index>(rho.basis().size());
    if (c_i.rows() != n || c_i.cols() != n || c_j.rows() != n || c_j.cols() != n)
        throw DimensionError("decoherence_functional: class operator size does not match state");
    return (c_i * rho.matrix() * c_j.adjoint()).trace();
}

cplx decoherence_functional(const HistorySpec& spec_i, const HistorySpec& spec_j, const DensityMatrix& rho) {
    if (!same_structure(spec_i, spec_j)) throw InvalidArgument("decoherence_functional: histories differ in more than their selections");
    if (!(rho.basis() == spec_i.basis)) throw DimensionError("decoherence_functional: state basis differs from history basis");
    return decoherence_functional(class_operator(spec_i), class_operator(spec_j), rho);
}

std::vector<HistorySpec> complete_family(const HistorySpec& base) {
    std::vector<HistorySpec> out;
    std::vector<int> sel(base.times.size(), 0);
    for (;;) {
        out.push_back(base.with_selection(sel));
        int k = static_cast<int>(sel.size()) - 1;
        while (k >= 0) {
            const auto ku = static_cast<std::size_t>(k);
            if (++sel[ku] < static_cast<int>(base.projector_sets[ku].size())) break;
            sel[ku] = 0;
            --k;
        }
        if (k < 0) break;
    }
    return out;
}

HistorySpec coarse_grain(const HistorySpec& spec, int time_index, const std::vector<std::vector<int>>& groups) {
    if (time_index < 0 || static_cast<std::size_t>(time_index) >= spec.times.size()) throw InvalidArgument("coarse_grain: time index out of range");
    const auto ti = static_cast<std::size_t>(time_index);
    const auto& set = spec.projector_sets[ti];
    std::vector<int> owner(set.size(), -1);
    std::vector<CMatrix> merged;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw InvalidArgument("coarse_grain: empty group");
        CMatrix sum = CMatrix::Zero(set.front().rows(), set.front().cols());
        for (int i : groups[g]) {
            if (i < 0 || static_cast<std::size_t>(i) >= set.size()) throw InvalidArgument("coarse_grain: index out of range");
            if (owner[static_cast<std::size_t>(i)] != -1) throw InvalidArgument("coarse_grain: groups overlap");
            owner[static_cast<std::size_t>(i)] = static_cast<int>(g);
            sum += set[static_cast<std::size_t>(i)];
        }
        merged.push_back(std::move(sum));
    }
    if (std::find(owner.begin(), owner.end(), -1) != owner.end()) throw InvalidArgument("coarse_grain: groups do not cover every projector");
    HistorySpec out = spec;
    out.projector_sets[ti] = std::move(merged);
    out.selection[ti] = owner[static_cast<std::size_t>(spec.selection[ti])];
    return out;
}

ConsistencyReport is_consistent(const std::vector<HistorySpec>& family, const DensityMatrix& rho, double tol) {
    if (family.empty()) throw InvalidArgument("is_consistent: empty family");
    if (!(tol > 0.0)) throw InvalidArgument("is_consistent: tolerance must be positive");
    std::set<std::vector<int>> seen;
    std::size_t expected = 1;
    for (const auto& set : family.front().projector_sets) expected *= set.size();
    for (const auto& h : family) {
        if (!same_structure(h, family.front())) throw InvalidArgument("is_consistent: histories differ in more than their selections");
        if (!seen.insert(h.selection).second) throw InvalidArgument("is_consistent: repeated selection");
    }
    if (seen.size() != expected) throw InvalidArgument("is_consistent: family does not cover every selection");
    if (!(rho.basis() == family.front().basis)) throw DimensionError("is_consistent: state basis differs from history basis");

    std::vector<CMatrix> cs;
    for (const auto& h : family) cs.push_back(class_operator(h));
    const auto m = static_cast<Eigen::Index>(family.size());
    ConsistencyReport rep;
    rep.tolerance = tol;
    rep.functional = CMatrix(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            rep.functional(i, j) = decoherence_functional(cs[static_cast<std::size_t>(i)], cs[static_cast<std::size_t>(j)], rho);
    for (Eigen::Index i = 0; i < m; ++i) {
        rep.selections.push_back(family[static_cast<std::size_t>(i)].selection);
        const cplx d = rep.functional(i, i);
        rep.probabilities.push_back(d.real());
        rep.probability_sum += d.real();
        rep.diagonal_imaginary = std::max(rep.diagonal_imaginary, std::abs(d.imag()));
        if (d.real() < -1e-10) rep.negative.push_back(static_cast<int>(i));
        for (Eigen::Index j = 0; j < m; ++j) {
            rep.hermiticity_error = std::max(rep.hermiticity_error, std::abs(rep.functional(i, j) - std::conj(rep.functional(j, i))));
            if (i != j) rep.max_off_diagonal = std::max(rep.max_off_diagonal, std::abs(rep.functional(i, j)));
        }
    }
    rep.consistent = rep.max_off_diagonal < tol;
    return rep;
}

nlohmann::json to_json(const HistorySpec& spec) {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& set : spec.projector_sets) {
        nlohmann::json s = nlohmann::json::array();
        for (const auto& p : set) s.push_back(matrix_json(p));
        sets.push_back(std::move(s));
    }
    return {{"dim", spec.basis.dim()}, {"n_modes", spec.basis.n_modes()}, {"times", spec.times}, {"selection", spec.selection}, {"projector_sets", sets}};
}

nlohmann::json to_json(const ConsistencyReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < r.selections.size(); ++i) entries.push_back({{"selection", r.selections[i]}, {"probability", r.probabilities[i]}});
    return {{"consistent", r.consistent},
            {"tolerance", r.tolerance},
            {"max_off_diagonal", r.max_off_diagonal},
            {"hermiticity_error", r.hermiticity_error},
            {"histories", entries},
            {"probability_sum", r.probability_sum},
            {"negative_probabilities", r.negative},
            {"diagonal_imaginary", r.diagonal_imaginary},
            {"functional", matrix_json(r.functional)}};
}

}  // namespace oqft
