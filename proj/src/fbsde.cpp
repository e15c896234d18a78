#include "oqft/fbsde.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <thread>

#include "oqft/errors.hpp"
#include "oqft/sampling.hpp"

namespace oqft {

namespace {

constexpr std::uint64_t kNoiseDomain = 0;
constexpr std::uint64_t kBoundaryDomain = 1;

std::vector<double> column(const RMatrix& m, int c) {
    return {m.col(c).data(), m.col(c).data() + m.rows()};
}

void check_compatible(const QuadratureSplit& split, const FpeSpec& spec) {
    if (split.n_coords() != spec.n_coords()) throw DimensionError("fbsde: split and drift disagree on coordinate count");
    if (split.basis.rows() != split.n_coords() || split.basis.cols() != split.n_coords())
        throw DimensionError("fbsde: split basis has wrong shape");
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

}  // namespace

DriftField::DriftField(const FpeSpec& spec, const QuadratureSplit& split)
    : n_(spec.n_coords()), basis_(split.basis), linear_(RMatrix::Zero(n_, n_)), offset_(RVector::Zero(n_)), drift_(spec.drift) {
    check_compatible(split, spec);
    affine_ = std::all_of(drift_.begin(), drift_.end(), [](const RealPolynomial& p) { return p.degree() <= 1; });
    RMatrix lin_q = RMatrix::Zero(n_, n_);
    RVector off_q = RVector::Zero(n_);
    for (int i = 0; i < n_; ++i) {
        const auto& terms = drift_[static_cast<std::size_t>(i)].terms();
        for (const auto& [e, c] : terms) {
            int total = 0;
            int var = -1;
            for (std::size_t k = 0; k < e.size(); ++k) {
                total += e[k];
                if (e[k] == 1) var = static_cast<int>(k);
            }
            if (total == 0) off_q(i) += c;
            else if (total == 1) lin_q(i, var) += c;
        }
    }
    linear_ = basis_.transpose() * lin_q * basis_;
    offset_ = basis_.transpose() * off_q;
    for (int i = 0; i < n_; ++i) {
        flat_offset_.push_back(offset_(i));
        for (int j = 0; j < n_; ++j) flat_linear_.push_back(linear_(i, j));
    }
}

double DriftField::general(int k, const double* y) const {
    std::vector<double> q(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) q[static_cast<std::size_t>(i)] += basis_(i, j) * y[j];
    double v = 0.0;
    for (int i = 0; i < n_; ++i) v += basis_(i, k) * drift_[static_cast<std::size_t>(i)].evaluate<double>(q);
    return v;
}

BoundaryConditions BoundaryConditions::free_data(const QuadratureSplit& split, Sampler sampler) {
    BoundaryConditions bc;
    bc.free_plus_size = static_cast<int>(split.forward_coords.size());
    bc.free_minus_size = static_cast<int>(split.backward_coords.size());
    auto copy = [](std::span<const double>, std::span<const double> free, std::span<double> out) {
        std::copy(free.begin(), free.end(), out.begin());
    };
    bc.phi_plus_initial = copy;
    bc.phi_minus_final = copy;
    bc.initial_sampler = std::move(sampler);
    return bc;
}

BoundaryConditions oracle_boundary(const QuadratureSplit& split, const DensityMatrix& initial, const DensityMatrix& final) {
    if (split.n_coords() != 2 || initial.basis().n_modes() != 1 || final.basis().n_modes() != 1)
        throw DimensionError("oracle_boundary: single-mode splits only");
    const auto& fwd = split.forward_coords;
    const auto& bwd = split.backward_coords;
    auto directions = [&](const std::vector<int>& idx) {
        RMatrix d(2, static_cast<int>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) d.col(static_cast<int>(k)) = split.basis.col(idx[k]);
        return d;
    };

    if (bwd.empty()) {
        std::shared_ptr<const QSampler> s = make_q_sampler(initial, directions(fwd));
        return BoundaryConditions::free_data(split, [s](CounterRng::Stream& rng, std::span<double> plus, std::span<double>) { s->sample(rng, plus); });
    }
    if (fwd.empty()) {
        std::shared_ptr<const QSampler> s = make_q_sampler(final, directions(bwd));
        return BoundaryConditions::free_data(split, [s](CounterRng::Stream& rng, std::span<double>, std::span<double> minus) { s->sample(rng, minus); });
    }

    // One forward and one backward coordinate: the far boundary is sampled
    // conditional on the propagated forward value.
    const std::vector<double> f_dir = column(split.basis, fwd[0]);
    auto start = std::make_shared<const QuadratureMarginalSampler>(initial, f_dir[0], f_dir[1]);
    RMatrix target_given(2, 2);
    target_given.col(0) = split.basis.col(bwd[0]);
    target_given.col(1) = split.basis.col(fwd[0]);
    auto end = std::make_shared<const ConditionalQSampler>(final, target_given);

    BoundaryConditions bc;
    bc.free_plus_size = 1;
    bc.free_minus_size = 3;
    bc.phi_plus_initial = [](std::span<const double>, std::span<const double> free, std::span<double> out) { out[0] = free[0]; };
    bc.phi_minus_final = [end](std::span<const double> plus, std::span<const double> free, std::span<double> out) {
        out[0] = end->sample(plus[0], free[0], free[1], free[2]);
    };
    bc.initial_sampler = [start](CounterRng::Stream& rng, std::span<double> plus, std::span<double> minus) {
        start->sample(rng, plus);
        for (double& u : minus) u = rng.uniform();
    };
    return bc;
}

CyclicResult solve_cyclic(const DriftField& drift, const QuadratureSplit& split, const BoundaryConditions& bc,
                          std::span<const double> free_plus, std::span<const double> free_minus, std::span<const double> noise,
                          int n_steps, double dt, const SolverOptions& options) {
    const int n = drift.n_coords();
    if (n_steps < 1 || !(dt > 0.0)) throw InvalidArgument("solve_cyclic: need n_steps >= 1 and dt > 0");
    if (noise.size() != static_cast<std::size_t>(n_steps) * static_cast<std::size_t>(n))
        throw DimensionError("solve_cyclic: noise must hold n_steps x n_coords increments");
    if (!(options.relaxation > 0.0 && options.relaxation <= 1.0)) throw InvalidArgument("solve_cyclic: relaxation must lie in (0, 1]");
    const auto& fwd = split.forward_coords;
    const auto& bwd = split.backward_coords;
    const auto nf = fwd.size();
    const auto nb = bwd.size();
    const auto stride = static_cast<std::size_t>(n);
    const auto rows = static_cast<std::size_t>(n_steps) + 1;

    CyclicResult res;
    res.path.assign(rows * stride, 0.0);
    std::vector<double>& y = res.path;
    // Each sweep rewrites its own components of a working copy of the path,
    // so every row it reads holds fresh values of those components and the
    // latest values of the others.
    std::vector<double> work(rows * stride);
    std::vector<double> edge_in(std::max(nf, nb));
    std::vector<double> edge_out(std::max(nf, nb));

    auto forward_sweep = [&] {
        std::copy(y.begin(), y.end(), work.begin());
        for (std::size_t k = 0; k < nb; ++k) edge_in[k] = y[static_cast<std::size_t>(bwd[k])];
        bc.phi_plus_initial({edge_in.data(), nb}, free_plus, {edge_out.data(), nf});
        for (std::size_t k = 0; k < nf; ++k) work[static_cast<std::size_t>(fwd[k])] = edge_out[k];
        for (std::size_t s = 0; s + 1 < rows; ++s) {
            const double* here = &work[s * stride];
            double* next = &work[(s + 1) * stride];
            const double* dw = &noise[s * stride];
            for (const int c : fwd) next[c] = here[c] + drift(c, here) * dt + dw[c];
        }
    };
    auto backward_sweep = [&] {
        std::copy(y.begin(), y.end(), work.begin());
        double* last = &work[(rows - 1) * stride];
        for (std::size_t k = 0; k < nf; ++k) edge_in[k] = last[fwd[k]];
        bc.phi_minus_final({edge_in.data(), nf}, free_minus, {edge_out.data(), nb});
        for (std::size_t k = 0; k < nb; ++k) last[bwd[k]] = edge_out[k];
        for (std::size_t s = rows - 1; s > 0; --s) {
            const double* here = &work[s * stride];
            double* prev = &work[(s - 1) * stride];
            const double* dw = &noise[(s - 1) * stride];
            for (const int c : bwd) prev[c] = here[c] - drift(c, here) * dt - dw[c];
        }
    };
    // Moves the path components `idx` toward the working copy; returns the
    // sup-norm change before damping.
    auto relax = [&](const std::vector<int>& idx, double w) {
        double change = 0.0;
        for (std::size_t s = 0; s < rows; ++s)
            for (const int c : idx) {
                double& v = y[s * stride + static_cast<std::size_t>(c)];
                const double d = work[s * stride + static_cast<std::size_t>(c)] - v;
                change = std::max(change, std::abs(d));
                v += w * d;
            }
        return change;
    };

    if (nf) {
        forward_sweep();
        relax(fwd, 1.0);
    }
    if (nb) {
        backward_sweep();
        relax(bwd, 1.0);
    }
    for (int it = 1; it <= options.max_iterations; ++it) {
        double change = 0.0;
        if (nf) {
            forward_sweep();
            change = std::max(change, relax(fwd, options.relaxation));
        }
        if (nb) {
            backward_sweep();
            change = std::max(change, relax(bwd, options.relaxation));
        }
        res.residuals.push_back(change);
        res.iterations = it;
        if (!std::isfinite(change)) break;
        if (change < options.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

int TrajectoryEnsemble::record_index(int step) const {
    const auto it = std::find(recorded_steps.begin(), recorded_steps.end(), step);
    if (it == recorded_steps.end()) throw InvalidArgument("TrajectoryEnsemble: step " + std::to_string(step) + " was not recorded");
    return static_cast<int>(it - recorded_steps.begin());
}

int TrajectoryEnsemble::n_converged() const {
    return static_cast<int>(std::count(converged.begin(), converged.end(), std::uint8_t{1}));
}

int default_thread_count() {
    int n = 0;
    if (const char* env = std::getenv("OQFT_THREADS")) {
        try {
            n = std::stoi(env);
        } catch (const std::exception&) {
            throw ConfigError("OQFT_THREADS must be a nonnegative integer");
        }
        if (n < 0) throw ConfigError("OQFT_THREADS must be a nonnegative integer");
    }
    if (n == 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(n, 1);
}

namespace {

double action_in_eigencoords(std::span<const double> y, const DriftField& drift, const QuadratureSplit& split, double dt,
                             double deterministic_tol) {
    const int n = drift.n_coords();
    const auto stride = static_cast<std::size_t>(n);
    const std::size_t rows = y.size() / stride;
    std::vector<double> sigma(stride);
    std::vector<char> forward(stride);
    for (int c = 0; c < n; ++c) {
        sigma[static_cast<std::size_t>(c)] = split.noise(c);
        forward[static_cast<std::size_t>(c)] = split.is_forward(c);
    }
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < rows; ++s) {
        const std::span<const double> here = y.subspan(s * stride, stride);
        const std::span<const double> next = y.subspan((s + 1) * stride, stride);
        for (int c = 0; c < n; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            const double a = forward[cu] ? drift(c, here) : drift(c, next);
            const double r = next[cu] - here[cu] - a * dt;
            if (sigma[cu] > 0.0) {
                total += r * r / (2.0 * sigma[cu] * sigma[cu] * dt);
            } else if (std::abs(r) > deterministic_tol * (1.0 + std::abs(here[cu]))) {
                throw InfiniteAction("path_action: noiseless coordinate " + std::to_string(c) + " leaves its drift flow at step " +
                                     std::to_string(s));
            }
        }
    }
    return total;
}

}  // namespace

TrajectoryEnsemble simulate_ensemble(const QuadratureSplit& split, const FpeSpec& spec, const BoundaryConditions& bc, int n_traj, int n_steps,
                                     double dt, std::uint64_t seed, const EnsembleOptions& options) {
    check_compatible(split, spec);
    if (n_traj < 1 || n_steps < 1 || !(dt > 0.0)) throw InvalidArgument("simulate_ensemble: need n_traj >= 1, n_steps >= 1, dt > 0");
    if (options.noise_substeps < 1) throw InvalidArgument("simulate_ensemble: noise_substeps must be >= 1");
    if (!bc.phi_plus_initial || !bc.phi_minus_final || !bc.initial_sampler) throw InvalidArgument("simulate_ensemble: incomplete boundary conditions");
    const DriftField drift(spec, split);
    const double lipschitz = drift.linear().cwiseAbs().rowwise().sum().maxCoeff();
    if (dt * lipschitz >= 0.1)
        throw InvalidArgument("simulate_ensemble: dt times drift Lipschitz constant is " + shortest(dt * lipschitz) + ", must be below 0.1");

    const int n = split.n_coords();
    TrajectoryEnsemble ens;
    ens.n_traj = n_traj;
    ens.n_steps = n_steps;
    ens.n_coords = n;
    ens.dt = dt;
    ens.seed = seed;
    if (options.record_steps.empty()) {
        ens.recorded_steps.resize(static_cast<std::size_t>(n_steps) + 1);
        for (int s = 0; s <= n_steps; ++s) ens.recorded_steps[static_cast<std::size_t>(s)] = s;
    } else {
        ens.recorded_steps = options.record_steps;
        for (int s : ens.recorded_steps)
            if (s < 0 || s > n_steps) throw InvalidArgument("simulate_ensemble: recorded step out of range");
    }
    const std::size_t n_rec = ens.recorded_steps.size();
    ens.paths.assign(static_cast<std::size_t>(n_traj) * n_rec * static_cast<std::size_t>(n), 0.0);
    ens.converged.assign(static_cast<std::size_t>(n_traj), 0);
    ens.iterations.assign(static_cast<std::size_t>(n_traj), 0);
    ens.action.assign(static_cast<std::size_t>(n_traj), 0.0);

    std::vector<double> sigma(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) sigma[static_cast<std::size_t>(c)] = split.noise(c);
    const auto sub = static_cast<std::size_t>(options.noise_substeps);
    const double sub_scale = std::sqrt(dt / options.noise_substeps);
    const auto stride = static_cast<std::size_t>(n);
    const bool noisy = std::any_of(sigma.begin(), sigma.end(), [](double v) { return v > 0.0; });

    std::atomic<int> next{0};
    std::atomic<bool> unstable{false};
    auto worker = [&] {
        std::vector<double> noise(static_cast<std::size_t>(n_steps) * stride, 0.0);
        std::vector<double> normals(noisy ? noise.size() * sub : 0);
        std::vector<double> free_plus(static_cast<std::size_t>(bc.free_plus_size));
        std::vector<double> free_minus(static_cast<std::size_t>(bc.free_minus_size));
        for (int j = next.fetch_add(1); j < n_traj && !unstable; j = next.fetch_add(1)) {
            const auto ju = static_cast<std::uint64_t>(j);
            if (noisy) {
                CounterRng(seed, ju, kNoiseDomain).fill_normal(0, normals.size(), normals.data());
                for (std::size_t s = 0; s < static_cast<std::size_t>(n_steps); ++s)
                    for (std::size_t c = 0; c < stride; ++c) {
                        double w = 0.0;
                        for (std::size_t u = 0; u < sub; ++u) w += normals[(s * sub + u) * stride + c];
                        noise[s * stride + c] = w * sigma[c] * sub_scale;
                    }
            }
            CounterRng::Stream boundary_rng(CounterRng(seed, ju, kBoundaryDomain));
            bc.initial_sampler(boundary_rng, free_plus, free_minus);

            const CyclicResult r = solve_cyclic(drift, split, bc, free_plus, free_minus, noise, n_steps, dt, options.solver);
            if (!std::all_of(r.path.begin(), r.path.end(), [](double v) { return std::isfinite(v); })) {
                if (r.converged) unstable = true;
                continue;
            }
            const auto jj = static_cast<std::size_t>(j);
            ens.converged[jj] = r.converged ? 1 : 0;
            ens.iterations[jj] = r.iterations;
            for (std::size_t k = 0; k < n_rec; ++k) {
                const double* yrow = &r.path[static_cast<std::size_t>(ens.recorded_steps[k]) * static_cast<std::size_t>(n)];
                double* out = &ens.paths[(jj * n_rec + k) * static_cast<std::size_t>(n)];
                for (int i = 0; i < n; ++i) {
                    double v = 0.0;
                    for (int c = 0; c < n; ++c) v += split.basis(i, c) * yrow[c];
                    out[i] = v;
                }
            }
            try {
                ens.action[jj] = action_in_eigencoords(r.path, drift, split, dt, std::max(1e-9, 100.0 * options.solver.tolerance));
            } catch (const InfiniteAction&) {
                ens.action[jj] = std::numeric_limits<double>::infinity();
            }
        }
    };
    const int threads = std::min(options.threads > 0 ? options.threads : default_thread_count(), n_traj);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (unstable) throw StabilityError("simulate_ensemble: non-finite values on a converged trajectory");
    if (ens.converged_fraction() < options.min_converged_fraction)
        throw ConvergenceError("simulate_ensemble: only " + std::to_string(ens.n_converged()) + " of " + std::to_string(n_traj) +
                               " trajectories converged");
    return ens;
}

MarginalStats marginal_stats(const TrajectoryEnsemble& ens, int record) {
    if (record < 0 || static_cast<std::size_t>(record) >= ens.recorded_steps.size()) throw InvalidArgument("marginal_stats: record index out of range");
    const int k = ens.n_coords;
    MarginalStats st;
    st.n = ens.n_converged();
    st.converged_fraction = ens.converged_fraction();
    if (st.n < 3) throw ConvergenceError("marginal_stats: fewer than 3 converged trajectories");
    const double n = st.n;
    st.mean = RVector::Zero(k);
    for (int j = 0; j < ens.n_traj; ++j)
        if (ens.converged[static_cast<std::size_t>(j)])
            for (int c = 0; c < k; ++c) st.mean(c) += ens.at(j, record, c);
    st.mean /= n;

    RMatrix s = RMatrix::Zero(k, k);
    for (int j = 0; j < ens.n_traj; ++j) {
        if (!ens.converged[static_cast<std::size_t>(j)]) continue;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) s(a, b) += (ens.at(j, record, a) - st.mean(a)) * (ens.at(j, record, b) - st.mean(b));
    }
    st.covariance = s / (n - 1.0);
    st.se_mean = (st.covariance.diagonal() / n).cwiseSqrt();

    // Delete-one covariance: C_(i) = (S - n/(n-1) e_i) / (n-2), e_i = d_a d_b,
    // so its spread over i is that of e_i scaled by n / ((n-1)(n-2)).
    RMatrix spread = RMatrix::Zero(k, k);
    for (int j = 0; j < ens.n_traj; ++j) {
        if (!ens.converged[static_cast<std::size_t>(j)]) continue;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                const double e = (ens.at(j, record, a) - st.mean(a)) * (ens.at(j, record, b) - st.mean(b)) - s(a, b) / n;
                spread(a, b) += e * e;
            }
    }
    const double scale = n / ((n - 1.0) * (n - 2.0));
    st.se_covariance = (spread * ((n - 1.0) / n)).cwiseSqrt() * scale;
    return st;
}

double path_action(std::span<const double> path, const QuadratureSplit& split, const FpeSpec& spec, double dt) {
    check_compatible(split, spec);
    const int n = split.n_coords();
    if (path.size() % static_cast<std::size_t>(n) != 0 || path.size() < 2 * static_cast<std::size_t>(n))
        throw DimensionError("path_action: path must hold at least two rows of n_coords values");
    if (!(dt > 0.0)) throw InvalidArgument("path_action: dt must be positive");
    const DriftField drift(spec, split);
    std::vector<double> y(path.size());
    const std::size_t rows = path.size() / static_cast<std::size_t>(n);
    for (std::size_t s = 0; s < rows; ++s)
        for (int c = 0; c < n; ++c) {
            double v = 0.0;
            for (int i = 0; i < n; ++i) v += split.basis(i, c) * path[s * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
            y[s * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)] = v;
        }
    return action_in_eigencoords(y, drift, split, dt, 1e-9);
}

nlohmann::json to_json(const MarginalStats& st) {
    nlohmann::json j;
    j["n"] = st.n;
    j["converged_fraction"] = st.converged_fraction;
    const auto k = st.mean.size();
    std::vector<double> mean(st.mean.data(), st.mean.data() + k);
    std::vector<double> se(st.se_mean.data(), st.se_mean.data() + k);
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(k)), se_cov(static_cast<std::size_t>(k));
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) {
            cov[static_cast<std::size_t>(a)].push_back(st.covariance(a, b));
            se_cov[static_cast<std::size_t>(a)].push_back(st.se_covariance(a, b));
        }
    j["mean"] = mean;
    j["se_mean"] = se;
    j["covariance"] = cov;
    j["se_covariance"] = se_cov;
    return j;
}

nlohmann::json summary_json(const TrajectoryEnsemble& ens) {
    nlohmann::json j;
    j["n_traj"] = ens.n_traj;
    j["n_steps"] = ens.n_steps;
    j["dt"] = ens.dt;
    j["seed"] = ens.seed;
    j["converged"] = ens.n_converged();
    j["converged_fraction"] = ens.converged_fraction();
    int max_it = 0;
    for (int it : ens.iterations) max_it = std::max(max_it, it);
    j["max_iterations"] = max_it;
    nlohmann::json slices = nlohmann::json::array();
    for (std::size_t r = 0; r < ens.recorded_steps.size(); ++r) {
        if (ens.n_converged() < 3) break;
        nlohmann::json s = to_json(marginal_stats(ens, static_cast<int>(r)));
        s["step"] = ens.recorded_steps[r];
        s["t"] = ens.time(static_cast<int>(r));
        slices.push_back(std::move(s));
    }
    j["slices"] = std::move(slices);
    return j;
}

void write_paths_csv(std::ostream& out, const TrajectoryEnsemble& ens, const std::vector<std::string>& names) {
    if (names.size() != static_cast<std::size_t>(ens.n_coords)) throw DimensionError("write_paths_csv: one name per coordinate");
    out << "trajectory,t";
    for (const auto& nm : names) out << ',' << nm;
    out << '\n';
    for (int j = 0; j < ens.n_traj; ++j)
        for (std::size_t r = 0; r < ens.recorded_steps.size(); ++r) {
            out << j << ',' << shortest(ens.time(static_cast<int>(r)));
            for (int c = 0; c < ens.n_coords; ++c) out << ',' << shortest(ens.at(j, static_cast<int>(r), c));
            out << '\n';
        }
}

}  // namespace oqft
