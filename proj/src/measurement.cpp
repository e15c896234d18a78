#include "oqft/measurement.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "oqft/errors.hpp"
#include "oqft/evolve.hpp"
#include "oqft/fbsde.hpp"
#include "oqft/fpe.hpp"
#include "oqft/sampling.hpp"

namespace oqft {

namespace {

constexpr int kMaxAutoCutoff = 6000;

struct SampleMoments {
    double mean = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
};

SampleMoments sample_moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    if (v.size() < 3) throw ConvergenceError("measurement: fewer than 3 outcomes");
    SampleMoments m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = (x - m.mean) * (x - m.mean);
        m2 += d;
        m4 += d * d;
    }
    m.variance = m2 / (n - 1.0);
    m.se_mean = std::sqrt(m.variance / n);
    const double biased = m2 / n;
    m.se_variance = std::sqrt(std::max(m4 / n - biased * biased, 0.0) / n);
    return m;
}

int auto_cutoff(double photons) {
    return std::clamp(static_cast<int>(std::ceil(60.0 + 12.0 * std::max(photons, 0.0))), 60, kMaxAutoCutoff);
}

double amplified_photons(double g, double x2_mean, double squeeze_r) {
    const double x2 = x2_mean + std::exp(-2.0 * squeeze_r);
    const double p2 = std::exp(2.0 * squeeze_r);
    return (g * g * x2 + p2 / (g * g) - 2.0) / 4.0;
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

bool within(double a, double b, double se, double k = 3.0) { return std::abs(a - b) <= k * se; }

}  // namespace

double AmplifierConfig::gain() const { return std::exp(kappa * T); }

double AmplifierConfig::time_step() const { return dt > 0.0 ? dt : 1e-3 / kappa; }

int AmplifierConfig::n_steps() const { return std::max(1, static_cast<int>(std::lround(T / time_step()))); }

void AmplifierConfig::validate() const {
    if (!(kappa > 0.0)) throw InvalidArgument("amplifier: kappa must be positive");
    if (!(T > 0.0)) throw InvalidArgument("amplifier: T must be positive");
    if (!(squeeze_r >= 0.0)) throw InvalidArgument("amplifier: squeeze_r must be nonnegative");
    if (!std::isfinite(x_i)) throw InvalidArgument("amplifier: x_i must be finite");
    if (n_traj < 3) throw InvalidArgument("amplifier: n_traj must be at least 3");
    if (dt < 0.0) throw InvalidArgument("amplifier: dt must be nonnegative");
    if (cutoff != 0 && cutoff < 2) throw InvalidArgument("amplifier: cutoff must be 0 (auto) or >= 2");
    if (threads < 0) throw InvalidArgument("amplifier: threads must be nonnegative");
    const double steps = T / time_step();
    if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps))
        throw InvalidArgument("amplifier: T must be a whole number of time steps");
}

bool MeasurementRecord::mean_matches_oracle() const { return within(mean, oracle_mean, se_mean); }
bool MeasurementRecord::variance_matches_oracle() const { return within(variance, oracle_variance, se_variance); }
bool MeasurementRecord::initial_matches_oracle() const {
    return within(initial_mean, oracle_initial_mean, initial_se_mean) && within(initial_variance, oracle_initial_variance, initial_se_variance);
}

MeasurementRecord measure_prepared(const StatePreparation& prepare, double photons, const AmplifierConfig& cfg) {
    cfg.validate();
    const PolynomialHamiltonian h = PolynomialHamiltonian::parametric_amplifier(cfg.kappa);
    const FpeSpec spec = derive_fpe(h);
    const QuadratureSplit split = split_quadratures(spec);

    int cutoff = cfg.cutoff > 0 ? cfg.cutoff : auto_cutoff(photons);
    for (;;) {
        try {
            const FockBasis basis(cutoff, 1);
            const DensityMatrix rho0 = prepare(basis);
            const DensityMatrix rho_t = Propagator(basis, h).evolve(rho0, cfg.T);
            const BoundaryConditions bc = oracle_boundary(split, rho0, rho_t);

            EnsembleOptions opts;
            const int n_steps = cfg.n_steps();
            opts.record_steps = {0, n_steps};
            opts.threads = cfg.threads;
            const TrajectoryEnsemble ens = simulate_ensemble(split, spec, bc, cfg.n_traj, n_steps, cfg.time_step(), cfg.seed, opts);

            MeasurementRecord rec;
            rec.gain = cfg.gain();
            rec.cutoff = cutoff;
            rec.converged_fraction = ens.converged_fraction();
            std::vector<double> initial;
            for (int j = 0; j < ens.n_traj; ++j) {
                if (!ens.converged[static_cast<std::size_t>(j)]) continue;
                rec.outcomes.push_back(ens.at(j, 1, 0));
                initial.push_back(ens.at(j, 0, 0));
            }
            const SampleMoments end = sample_moments(rec.outcomes);
            const SampleMoments start = sample_moments(initial);
            rec.mean = end.mean;
            rec.variance = end.variance;
            rec.se_mean = end.se_mean;
            rec.se_variance = end.se_variance;
            rec.initial_mean = start.mean;
            rec.initial_variance = start.variance;
            rec.initial_se_mean = start.se_mean;
            rec.initial_se_variance = start.se_variance;
            const MomentTable oracle_end = q_moments(rho_t, 2);
            const MomentTable oracle_start = q_moments(rho0, 2);
            rec.oracle_mean = oracle_end.mean(0);
            rec.oracle_variance = oracle_end.variance(0);
            rec.oracle_initial_mean = oracle_start.mean(0);
            rec.oracle_initial_variance = oracle_start.variance(0);
            const Inference inf = infer_eigenvalue(rec, rec.gain);
            rec.inferred_x = inf.value;
            rec.inferred_se = inf.se;
            rec.status = rec.mean_matches_oracle() ? "OK" : "FAILED-ORACLE";
            return rec;
        } catch (const TruncationError&) {
            if (cfg.cutoff > 0 || cutoff >= kMaxAutoCutoff) throw;
            cutoff = std::min(kMaxAutoCutoff, static_cast<int>(std::ceil(cutoff * 1.4)));
        }
    }
}

MeasurementRecord run_amplifier_measurement(const AmplifierConfig& cfg) {
    cfg.validate();
    const double photons = amplified_photons(cfg.gain(), cfg.x_i * cfg.x_i, cfg.squeeze_r);
    return measure_prepared([&](const FockBasis& b) { return DensityMatrix::pure(quadrature_eigenstate(cfg.x_i, cfg.squeeze_r, b)); }, photons,
                            cfg);
}

Inference infer_eigenvalue(const MeasurementRecord& record, double g) {
    if (!(g > 0.0)) throw InvalidArgument("infer_eigenvalue: gain must be positive");
    return {record.mean / g, record.se_mean / g};
}

double noise_to_signal(const MeasurementRecord& record, double g, double x_i) {
    if (x_i == 0.0) throw InvalidArgument("noise_to_signal: x_i must be nonzero");
    if (!(g > 0.0)) throw InvalidArgument("noise_to_signal: gain must be positive");
    return std::sqrt(std::max(record.variance, 0.0)) / (g * std::abs(x_i));
}

GainSweep noise_to_signal_sweep(const AmplifierConfig& base, const std::vector<double>& gains) {
    if (gains.empty()) throw InvalidArgument("noise_to_signal_sweep: no gains");
    if (base.x_i == 0.0) throw InvalidArgument("noise_to_signal_sweep: x_i must be nonzero");
    GainSweep sweep;
    for (double g : gains) {
        if (!(g > 1.0)) throw InvalidArgument("noise_to_signal_sweep: gains must exceed 1");
        AmplifierConfig cfg = base;
        cfg.T = std::log(g) / cfg.kappa;
        if (cfg.dt == 0.0) cfg.dt = 1e-3 / cfg.kappa;
        // Keep T on the step grid.
        cfg.dt = cfg.T / std::max(1L, std::lround(cfg.T / cfg.dt));
        SweepPoint pt;
        pt.record = run_amplifier_measurement(cfg);
        pt.gain = pt.record.gain;
        pt.ratio = noise_to_signal(pt.record, pt.gain, cfg.x_i);
        const double sd = std::sqrt(pt.record.variance);
        pt.ratio_se = pt.record.se_variance / (2.0 * sd) / (pt.gain * std::abs(cfg.x_i));
        pt.oracle_ratio = std::sqrt(pt.record.oracle_variance) / (pt.gain * std::abs(cfg.x_i));
        sweep.points.push_back(std::move(pt));
    }
    sweep.oracle_non_increasing = true;
    sweep.empirical_non_increasing = true;
    sweep.matches_oracle = true;
    for (std::size_t k = 0; k < sweep.points.size(); ++k) {
        const auto& p = sweep.points[k];
        if (!within(p.ratio, p.oracle_ratio, p.ratio_se)) sweep.matches_oracle = false;
        if (k == 0) continue;
        const auto& q = sweep.points[k - 1];
        if (p.gain < q.gain) throw InvalidArgument("noise_to_signal_sweep: gains must be ascending");
        if (p.oracle_ratio > q.oracle_ratio) sweep.oracle_non_increasing = false;
        if (p.ratio > q.ratio + 3.0 * std::hypot(p.ratio_se, q.ratio_se)) sweep.empirical_non_increasing = false;
    }
    return sweep;
}

namespace {

std::vector<double> classify(const std::vector<double>& outcomes, double threshold, bool first_below, std::vector<double>& se) {
    double below = 0.0;
    for (double x : outcomes)
        if (x < threshold) below += 1.0;
    const double n = static_cast<double>(outcomes.size());
    const double f_below = below / n;
    const double f0 = first_below ? f_below : 1.0 - f_below;
    const double s = std::sqrt(f0 * (1.0 - f0) / n);
    se = {s, s};
    return {f0, 1.0 - f0};
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// Riemann sum on a uniform grid.
double integrate(const std::vector<double>& f, double h) { return std::accumulate(f.begin(), f.end(), 0.0) * h; }

}  // namespace

bool SuperpositionReport::frequencies_match_weights() const {
    for (std::size_t k = 0; k < 2; ++k) {
        if (!within(mixture_frequencies[k], weights[k], mixture_se[k])) return false;
        if (!within(superposition_frequencies[k], weights[k], superposition_se[k])) return false;
    }
    return true;
}

SuperpositionReport run_superposition_measurement(double x1, double x2, const std::vector<double>& weights, const AmplifierConfig& cfg) {
    cfg.validate();
    if (weights.size() != 2) throw InvalidArgument("superposition: exactly two weights required");
    if (weights[0] <= 0.0 || weights[1] <= 0.0 || std::abs(weights[0] + weights[1] - 1.0) > 1e-12)
        throw InvalidArgument("superposition: weights must be positive and sum to 1");
    if (x1 == x2) throw InvalidArgument("superposition: x1 and x2 must differ");

    SuperpositionReport rep;
    rep.x1 = x1;
    rep.x2 = x2;
    rep.weights = weights;
    rep.gain = cfg.gain();
    rep.threshold = rep.gain * (x1 + x2) / 2.0;
    const double photons = amplified_photons(rep.gain, weights[0] * x1 * x1 + weights[1] * x2 * x2, cfg.squeeze_r);

    auto components = [&](const FockBasis& b) {
        return std::vector<StateVector>{quadrature_eigenstate(x1, cfg.squeeze_r, b), quadrature_eigenstate(x2, cfg.squeeze_r, b)};
    };
    auto mixture = [&](const FockBasis& b) { return DensityMatrix::mixture(weights, components(b)); };
    auto superposition = [&](const FockBasis& b) {
        const auto c = components(b);
        const CVector v = std::sqrt(weights[0]) * c[0].amplitudes() + std::sqrt(weights[1]) * c[1].amplitudes();
        return DensityMatrix::pure(StateVector::normalized(b, v, std::max(c[0].tail_mass(), c[1].tail_mass())));
    };

    // Oracle separation check on the amplified components.
    {
        int cutoff = cfg.cutoff > 0 ? cfg.cutoff : auto_cutoff(photons);
        for (;;) {
            try {
                const FockBasis b(cutoff, 1);
                const Propagator prop(b, PolynomialHamiltonian::parametric_amplifier(cfg.kappa));
                const auto c = components(b);
                const DensityMatrix r1 = prop.evolve(DensityMatrix::pure(c[0]), cfg.T);
                const DensityMatrix r2 = prop.evolve(DensityMatrix::pure(c[1]), cfg.T);
                const double lo = rep.gain * std::min(x1, x2), hi = rep.gain * std::max(x1, x2);
                const double sd = std::sqrt(std::max(q_moments(r1, 2).variance(0), q_moments(r2, 2).variance(0)));
                std::vector<double> grid;
                const int n = 1601;
                const double a = lo - 10.0 * sd, z = hi + 10.0 * sd;
                for (int i = 0; i < n; ++i) grid.push_back(a + (z - a) * i / (n - 1));
                const double h = grid[1] - grid[0];
                const auto f1 = q_marginal_density(r1, 1.0, 0.0, grid);
                const auto f2 = q_marginal_density(r2, 1.0, 0.0, grid);
                const DensityMatrix sup_t = prop.evolve(superposition(b), cfg.T);
                const auto fs = q_marginal_density(sup_t, 1.0, 0.0, grid);
                const DensityMatrix mix_t = DensityMatrix::mixture(weights, std::vector<StateVector>{prop.evolve(c[0], cfg.T), prop.evolve(c[1], cfg.T)});
                const auto fmt = q_marginal_density(mix_t, 1.0, 0.0, grid);
                std::vector<double> mins(grid.size()), wrong(grid.size()), diff(grid.size());
                const bool first_below = x1 < x2;
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    mins[i] = std::min(f1[i], f2[i]);
                    const bool below = grid[i] < rep.threshold;
                    wrong[i] = weights[0] * (below == first_below ? 0.0 : f1[i]) + weights[1] * (below == first_below ? f2[i] : 0.0);
                    diff[i] = std::abs(fs[i] - fmt[i]);
                }
                rep.overlap = integrate(mins, h);
                rep.misclassification = integrate(wrong, h);
                rep.oracle_marginal_l1 = integrate(diff, h);
                break;
            } catch (const TruncationError&) {
                if (cfg.cutoff > 0 || cutoff >= kMaxAutoCutoff) throw;
                cutoff = std::min(kMaxAutoCutoff, static_cast<int>(std::ceil(cutoff * 1.4)));
            }
        }
    }
    if (rep.overlap > 0.05)
        throw OverlapError("superposition: amplified components overlap by " + shortest(rep.overlap) + " (limit 0.05); raise the gain");

    rep.mixture = measure_prepared(mixture, photons, cfg);
    // Independent noise for the second run, as the two-sample KS test assumes.
    AmplifierConfig second = cfg;
    second.seed = cfg.seed + 0x9e3779b97f4a7c15ULL;
    rep.superposition = measure_prepared(superposition, photons, second);
    const bool first_below = x1 < x2;
    rep.mixture_frequencies = classify(rep.mixture.outcomes, rep.threshold, first_below, rep.mixture_se);
    rep.superposition_frequencies = classify(rep.superposition.outcomes, rep.threshold, first_below, rep.superposition_se);
    rep.ks_distance = ks_distance(rep.mixture.outcomes, rep.superposition.outcomes);
    const double na = static_cast<double>(rep.mixture.outcomes.size()), nb = static_cast<double>(rep.superposition.outcomes.size());
    rep.ks_critical = 1.628 * std::sqrt((na + nb) / (na * nb));
    return rep;
}

nlohmann::json to_json(const AmplifierConfig& cfg) {
    return {{"kappa", cfg.kappa}, {"T", cfg.T},           {"gain", cfg.gain()}, {"x_i", cfg.x_i}, {"squeeze_r", cfg.squeeze_r},
            {"n_traj", cfg.n_traj}, {"seed", cfg.seed}, {"dt", cfg.time_step()}, {"cutoff", cfg.cutoff}};
}

nlohmann::json to_json(const MeasurementRecord& r) {
    return {{"status", r.status},
            {"gain", r.gain},
            {"cutoff", r.cutoff},
            {"converged_fraction", r.converged_fraction},
            {"n_outcomes", r.outcomes.size()},
            {"mean", r.mean},
            {"se_mean", r.se_mean},
            {"variance", r.variance},
            {"se_variance", r.se_variance},
            {"inferred_x", r.inferred_x},
            {"inferred_se", r.inferred_se},
            {"oracle_mean", r.oracle_mean},
            {"oracle_variance", r.oracle_variance},
            {"initial_mean", r.initial_mean},
            {"initial_se_mean", r.initial_se_mean},
            {"initial_variance", r.initial_variance},
            {"initial_se_variance", r.initial_se_variance},
            {"oracle_initial_mean", r.oracle_initial_mean},
            {"oracle_initial_variance", r.oracle_initial_variance},
            {"mean_matches_oracle", r.mean_matches_oracle()},
            {"variance_matches_oracle", r.variance_matches_oracle()},
            {"initial_matches_oracle", r.initial_matches_oracle()}};
}

nlohmann::json to_json(const GainSweep& s) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points)
        pts.push_back({{"gain", p.gain}, {"ratio", p.ratio}, {"ratio_se", p.ratio_se}, {"oracle_ratio", p.oracle_ratio}, {"record", to_json(p.record)}});
    return {{"points", pts},
            {"oracle_non_increasing", s.oracle_non_increasing},
            {"empirical_non_increasing", s.empirical_non_increasing},
            {"matches_oracle", s.matches_oracle}};
}

nlohmann::json to_json(const SuperpositionReport& r) {
    return {{"x1", r.x1},
            {"x2", r.x2},
            {"weights", r.weights},
            {"gain", r.gain},
            {"threshold", r.threshold},
            {"overlap", r.overlap},
            {"misclassification", r.misclassification},
            {"mixture_frequencies", r.mixture_frequencies},
            {"mixture_se", r.mixture_se},
            {"superposition_frequencies", r.superposition_frequencies},
            {"superposition_se", r.superposition_se},
            {"frequencies_match_weights", r.frequencies_match_weights()},
            {"ks_distance", r.ks_distance},
            {"ks_critical", r.ks_critical},
            {"oracle_marginal_l1", r.oracle_marginal_l1},
            {"mixture", to_json(r.mixture)},
            {"superposition", to_json(r.superposition)}};
}

void write_outcomes_csv(std::ostream& out, const std::vector<double>& outcomes, const std::string& column) {
    out << column << '\n';
    for (double v : outcomes) out << shortest(v) << '\n';
}

}  // namespace oqft
