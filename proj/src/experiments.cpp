#include "oqft/experiments.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "oqft/errors.hpp"
#include "oqft/evolve.hpp"
#include "oqft/fpe.hpp"
#include "oqft/histories.hpp"
#include "oqft/measurement.hpp"

namespace oqft {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

namespace {

const std::set<std::string> kExperiments = {"qfunction-grid", "oracle-vs-fbsde", "amplifier-measurement", "superposition", "histories-demo"};

// Reads an object, remembering which keys were consumed so leftovers can be
// rejected.
class Params {
public:
    Params(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    double number(const std::string& key, double fallback) {
        if (!take(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
        return v.get<double>();
    }
    double number(const std::string& key) {
        if (!has(key)) throw ConfigError(where_ + "." + key + ": required");
        return number(key, 0.0);
    }
    int integer(const std::string& key, int fallback) {
        if (!take(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
        return v.get<int>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        if (!take(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_string()) throw ConfigError(where_ + "." + key + ": expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!take(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_array()) throw ConfigError(where_ + "." + key + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where_ + "." + key + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    Params object(const std::string& key) {
        take(key);
        static const json empty = json::object();
        return Params(has(key) ? obj_.at(key) : empty, where_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items())
            if (!used_.count(k)) throw ConfigError(where_ + ": unknown key \"" + k + "\"");
    }

private:
    bool take(const std::string& key) {
        used_.insert(key);
        return obj_.contains(key);
    }

    const json& obj_;
    std::string where_;
    std::set<std::string> used_;
};

// --- state and Hamiltonian specifications -----------------------------------

struct StateSpec {
    std::string kind = "vacuum";
    cplx alpha{0.0, 0.0};
    double x = 0.0;
    double r = 0.0;
};

StateSpec read_state(Params p) {
    StateSpec s;
    s.kind = p.string("kind", "vacuum");
    if (s.kind == "vacuum") {
    } else if (s.kind == "coherent") {
        const auto a = p.numbers("alpha", {0.0, 0.0});
        if (a.size() != 2) throw ConfigError("state.alpha: expected [re, im]");
        s.alpha = {a[0], a[1]};
    } else if (s.kind == "squeezed") {
        s.x = p.number("x", 0.0);
        s.r = p.number("r", 0.0);
        if (s.r < 0.0) throw InvalidArgument("state.r must be nonnegative");
    } else {
        throw ConfigError("state.kind: expected vacuum, coherent or squeezed");
    }
    p.finish();
    return s;
}

StateVector make_state(const StateSpec& s, const FockBasis& b) {
    if (s.kind == "coherent") return coherent_state(s.alpha, b);
    if (s.kind == "squeezed") return quadrature_eigenstate(s.x, s.r, b);
    return coherent_state(cplx{0.0, 0.0}, b);
}

json state_json(const StateSpec& s) {
    if (s.kind == "coherent") return {{"kind", s.kind}, {"alpha", {s.alpha.real(), s.alpha.imag()}}};
    if (s.kind == "squeezed") return {{"kind", s.kind}, {"x", s.x}, {"r", s.r}};
    return {{"kind", s.kind}};
}

PolynomialHamiltonian read_hamiltonian(Params p) {
    const std::string kind = p.string("kind", "harmonic");
    PolynomialHamiltonian h(1);
    if (kind == "harmonic") {
        h = PolynomialHamiltonian::harmonic(p.number("omega", 1.0));
    } else if (kind == "amplifier") {
        const double kappa = p.number("kappa", 1.0);
        if (!(kappa > 0.0)) throw InvalidArgument("hamiltonian.kappa must be positive");
        h = PolynomialHamiltonian::parametric_amplifier(kappa);
    } else {
        throw ConfigError("hamiltonian.kind: expected harmonic or amplifier");
    }
    p.finish();
    return h;
}

bool close_to(double a, double b, double se) { return std::abs(a - b) <= 3.0 * se + 1e-9 * (1.0 + std::abs(b)); }

// --- experiments ---------------------------------------------------------------

ExperimentResult qfunction_grid(const ExperimentConfig& cfg, bool dry_run) {
    Params p(cfg.parameters, "parameters");
    const StateSpec state = read_state(p.object("state"));
    const int cutoff = p.integer("cutoff", 0);
    const double x_min = p.number("x_min", -8.0), x_max = p.number("x_max", 8.0);
    const double p_min = p.number("p_min", -8.0), p_max = p.number("p_max", 8.0);
    const double spacing = p.number("spacing", 0.05);
    p.finish();
    if (cutoff < 0 || cutoff == 1) throw InvalidArgument("qfunction-grid: cutoff must be 0 (auto) or >= 2");
    if (!(spacing > 0.0) || !(x_max > x_min) || !(p_max > p_min)) throw InvalidArgument("qfunction-grid: empty grid or nonpositive spacing");
    const long nx = std::lround((x_max - x_min) / spacing) + 1;
    const long np = std::lround((p_max - p_min) / spacing) + 1;
    if (nx * np > 4'000'000) throw InvalidArgument("qfunction-grid: more than 4e6 grid points");
    ExperimentResult res;
    if (dry_run) return res;

    // cutoff 0: grow from the default until the state fits.
    int dim = cutoff > 0 ? cutoff : kDefaultCutoff;
    std::optional<DensityMatrix> prepared;
    while (!prepared) {
        try {
            prepared = DensityMatrix::pure(make_state(state, FockBasis(dim, 1)));
        } catch (const TruncationError&) {
            if (cutoff > 0 || dim >= 4000) throw;
            dim = static_cast<int>(std::ceil(dim * 1.4));
        }
    }
    const DensityMatrix& rho = *prepared;
    const MomentTable m = q_moments(rho, 2);
    // Coverage: six quadrature (operator) standard deviations on each axis;
    // the Q variance exceeds the operator variance by the vacuum's 1.
    const double sx = std::sqrt(std::max(m.variance(0) - 1.0, 0.0)), sp = std::sqrt(std::max(m.variance(1) - 1.0, 0.0));
    if (m.mean(0) - 6 * sx < x_min || m.mean(0) + 6 * sx > x_max || m.mean(1) - 6 * sp < p_min || m.mean(1) + 6 * sp > p_max)
        throw InvalidArgument("qfunction-grid: window covers fewer than 6 standard deviations of the state");

    const QFunctionEvaluator q(rho);
    std::ostringstream csv;
    csv << "# convention: x = alpha + conj(alpha), p = -i(alpha - conj(alpha)), Q = <alpha|rho|alpha>/pi\n";
    csv << "# normalization: sum Q dx dp / 4 = 1\n";
    csv << "x,p,Q\n";
    double integral = 0.0, peak = -1.0, peak_x = 0.0, peak_p = 0.0;
    for (long i = 0; i < nx; ++i) {
        const double x = x_min + spacing * static_cast<double>(i);
        for (long j = 0; j < np; ++j) {
            const double pp = p_min + spacing * static_cast<double>(j);
            const double v = q.at(x, pp);
            integral += v;
            if (v > peak) {
                peak = v;
                peak_x = x;
                peak_p = pp;
            }
            csv << format_double(x) << ',' << format_double(pp) << ',' << format_double(v) << '\n';
        }
    }
    integral *= spacing * spacing / 4.0;
    res.files.push_back({"qfunction.csv", csv.str()});
    res.results = {{"state", state_json(state)},
                   {"cutoff", dim},
                   {"grid", {{"nx", nx}, {"np", np}, {"spacing", spacing}}},
                   {"integral", integral},
                   {"peak", {{"x", peak_x}, {"p", peak_p}, {"Q", peak}}},
                   {"q_moments", {{"mean", {m.mean(0), m.mean(1)}}, {"variance", {m.variance(0), m.variance(1)}}, {"covariance_xp", m.covariance(0, 1)}}}};
    res.invariants["normalization"] = std::abs(integral - 1.0) <= 1e-3;
    return res;
}

ExperimentResult oracle_vs_fbsde(const ExperimentConfig& cfg, bool dry_run) {
    Params p(cfg.parameters, "parameters");
    const PolynomialHamiltonian h = read_hamiltonian(p.object("hamiltonian"));
    const StateSpec state = read_state(p.object("state"));
    const double T = p.number("T", 1.0);
    const int n_steps = p.integer("n_steps", 1000);
    const int n_traj = p.integer("n_traj", 100000);
    const int cutoff = p.integer("cutoff", 120);
    p.finish();
    if (!(T > 0.0) || n_steps < 2 || n_steps % 2 || n_traj < 3 || cutoff < 2)
        throw InvalidArgument("oracle-vs-fbsde: need T > 0, even n_steps >= 2, n_traj >= 3, cutoff >= 2");
    ExperimentResult res;
    if (dry_run) return res;

    const FockBasis basis(cutoff, 1);
    const DensityMatrix rho0 = DensityMatrix::pure(make_state(state, basis));
    const OracleComparison c = compare_fbsde_with_oracle(h, rho0, T, n_steps, n_traj, cfg.seed);
    const FpeSpec spec = derive_fpe(h);
    std::ostringstream csv;
    csv << "t,source,mean_x,mean_p,var_x,cov_xp,var_p,se_mean_x,se_mean_p,se_var_x,se_cov_xp,se_var_p\n";
    for (const auto& s : c.slices) {
        const auto& f = s.fbsde;
        csv << format_double(s.t) << ",fbsde," << format_double(f.mean(0)) << ',' << format_double(f.mean(1)) << ',' << format_double(f.covariance(0, 0))
            << ',' << format_double(f.covariance(0, 1)) << ',' << format_double(f.covariance(1, 1)) << ',' << format_double(f.se_mean(0)) << ','
            << format_double(f.se_mean(1)) << ',' << format_double(f.se_covariance(0, 0)) << ',' << format_double(f.se_covariance(0, 1)) << ','
            << format_double(f.se_covariance(1, 1)) << '\n';
        csv << format_double(s.t) << ",oracle," << format_double(s.oracle_mean(0)) << ',' << format_double(s.oracle_mean(1)) << ','
            << format_double(s.oracle_covariance(0, 0)) << ',' << format_double(s.oracle_covariance(0, 1)) << ','
            << format_double(s.oracle_covariance(1, 1)) << ",0,0,0,0,0\n";
    }
    res.files.push_back({"moments.csv", csv.str()});
    res.results = {{"fpe", to_json(spec)}, {"split", to_json(split_quadratures(spec))}, {"state", state_json(state)}, {"comparison", to_json(c)}};
    for (const auto& s : c.slices) res.invariants["oracle_match_t=" + format_double(s.t)] = s.matches;
    return res;
}

AmplifierConfig read_amplifier(Params& p, std::uint64_t seed) {
    AmplifierConfig a;
    a.kappa = p.number("kappa", 1.0);
    if (p.has("gain") && p.has("T")) throw ConfigError("parameters: give either gain or T, not both");
    if (p.has("gain")) {
        const double g = p.number("gain");
        if (!(g > 1.0)) throw InvalidArgument("parameters.gain must exceed 1");
        a.T = std::log(g) / a.kappa;
    } else {
        a.T = p.number("T", 1.0);
    }
    a.x_i = p.number("x_i", 0.0);
    a.squeeze_r = p.number("squeeze_r", 1.0);
    a.n_traj = p.integer("n_traj", 20000);
    a.cutoff = p.integer("cutoff", 0);
    const int n_steps = p.integer("n_steps", 0);
    if (n_steps < 0) throw InvalidArgument("parameters.n_steps must be nonnegative");
    a.dt = n_steps > 0 ? a.T / n_steps : 0.0;
    if (a.dt == 0.0 && a.kappa > 0.0 && a.T > 0.0) a.dt = a.T / std::max(1L, std::lround(a.T / (1e-3 / a.kappa)));
    a.seed = seed;
    return a;
}

ExperimentResult amplifier_measurement(const ExperimentConfig& cfg, bool dry_run) {
    Params p(cfg.parameters, "parameters");
    const AmplifierConfig a = read_amplifier(p, cfg.seed);
    const std::vector<double> gains = p.numbers("sweep_gains", {});
    p.finish();
    a.validate();
    ExperimentResult res;
    if (dry_run) return res;

    const MeasurementRecord rec = run_amplifier_measurement(a);
    const double g = a.gain();
    const Inference inf = infer_eigenvalue(rec, g);
    std::ostringstream csv;
    write_outcomes_csv(csv, rec.outcomes);
    res.files.push_back({"outcomes.csv", csv.str()});
    res.results = {{"config", to_json(a)}, {"record", to_json(rec)}, {"inferred", {{"x", inf.value}, {"se", inf.se}}}};
    res.invariants["mean_matches_oracle"] = rec.mean_matches_oracle();
    res.invariants["variance_matches_oracle"] = rec.variance_matches_oracle();
    res.invariants["initial_matches_oracle"] = rec.initial_matches_oracle();
    res.invariants["amplified_mean_law"] = close_to(rec.mean, g * a.x_i, rec.se_mean);
    res.invariants["eigenvalue_recovered"] = close_to(inf.value, a.x_i, inf.se);
    if (a.x_i != 0.0) res.results["noise_to_signal"] = noise_to_signal(rec, g, a.x_i);
    if (!gains.empty()) {
        const GainSweep sweep = noise_to_signal_sweep(a, gains);
        res.results["gain_sweep"] = to_json(sweep);
        std::ostringstream s;
        s << "gain,ratio,ratio_se,oracle_ratio\n";
        for (const auto& pt : sweep.points)
            s << format_double(pt.gain) << ',' << format_double(pt.ratio) << ',' << format_double(pt.ratio_se) << ',' << format_double(pt.oracle_ratio) << '\n';
        res.files.push_back({"gain_sweep.csv", s.str()});
        res.invariants["sweep_oracle_non_increasing"] = sweep.oracle_non_increasing;
        res.invariants["sweep_empirical_non_increasing"] = sweep.empirical_non_increasing;
        res.invariants["sweep_matches_oracle"] = sweep.matches_oracle;
    }
    return res;
}

ExperimentResult superposition(const ExperimentConfig& cfg, bool dry_run) {
    Params p(cfg.parameters, "parameters");
    const double x1 = p.number("x1", -1.0), x2 = p.number("x2", 1.0);
    const std::vector<double> w = p.numbers("weights", {0.5, 0.5});
    AmplifierConfig a = read_amplifier(p, cfg.seed);
    p.finish();
    a.validate();
    if (w.size() != 2) throw InvalidArgument("superposition: weights must have two entries");
    ExperimentResult res;
    if (dry_run) return res;

    const SuperpositionReport rep = run_superposition_measurement(x1, x2, w, a);
    std::ostringstream m, s;
    write_outcomes_csv(m, rep.mixture.outcomes);
    write_outcomes_csv(s, rep.superposition.outcomes);
    res.files.push_back({"outcomes_mixture.csv", m.str()});
    res.files.push_back({"outcomes_superposition.csv", s.str()});
    res.results = {{"config", to_json(a)}, {"report", to_json(rep)}};
    res.invariants["frequencies_match_weights"] = rep.frequencies_match_weights();
    res.invariants["mixture_superposition_indistinguishable"] = rep.ks_distance <= rep.ks_critical;
    res.invariants["mixture_matches_oracle"] = rep.mixture.mean_matches_oracle();
    res.invariants["superposition_matches_oracle"] = rep.superposition.mean_matches_oracle();
    return res;
}

ExperimentResult histories_demo(const ExperimentConfig& cfg, bool dry_run) {
    Params p(cfg.parameters, "parameters");
    const double omega = p.number("omega", 1.0);
    const double t2 = p.number("t2", std::numbers::pi / 4.0);
    const double tol = p.number("tolerance", 1e-6);
    p.finish();
    if (!(t2 > 0.0) || !(tol > 0.0)) throw InvalidArgument("histories-demo: t2 and tolerance must be positive");
    ExperimentResult res;
    if (dry_run) return res;

    // Two-level truncation: H = omega (a + a^dag) acts as omega sigma_x.
    const FockBasis basis(2, 1);
    PolynomialHamiltonian rotation(1);
    rotation.add({1}, {0}, omega).add({0}, {1}, omega);
    CMatrix p0 = CMatrix::Zero(2, 2), p1 = CMatrix::Zero(2, 2);
    p0(0, 0) = 1.0;
    p1(1, 1) = 1.0;
    CVector plus(2);
    plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const DensityMatrix rho = DensityMatrix::pure(StateVector(basis, plus));

    HistorySpec trivial{basis, PolynomialHamiltonian(1), {0.0}, {{p0, p1}}, {0}};
    HistorySpec rotated{basis, rotation, {0.0, t2}, {{p0, p1}, {p0, p1}}, {0, 0}};
    const ConsistencyReport r_trivial = is_consistent(complete_family(trivial), rho, tol);
    const ConsistencyReport r_rotated = is_consistent(complete_family(rotated), rho, tol);
    const ConsistencyReport r_coarse = is_consistent(complete_family(coarse_grain(rotated, 0, {{0, 1}})), rho, tol);

    res.results = {{"state", "(|0> + |1>)/sqrt(2)"},
                   {"omega", omega},
                   {"t2", t2},
                   {"trivial", to_json(r_trivial)},
                   {"rotated", to_json(r_rotated)},
                   {"coarse_grained", to_json(r_coarse)}};
    std::ostringstream csv;
    csv << "family,selection,probability\n";
    auto rows = [&](const char* name, const ConsistencyReport& r) {
        for (std::size_t i = 0; i < r.selections.size(); ++i) {
            std::string sel;
            for (int k : r.selections[i]) sel += std::to_string(k);
            csv << name << ',' << sel << ',' << format_double(r.probabilities[i]) << '\n';
        }
    };
    rows("trivial", r_trivial);
    rows("rotated", r_rotated);
    rows("coarse_grained", r_coarse);
    res.files.push_back({"histories.csv", csv.str()});
    const double herm = std::max({r_trivial.hermiticity_error, r_rotated.hermiticity_error, r_coarse.hermiticity_error});
    res.invariants["functional_hermitian"] = herm <= 1e-10;
    res.invariants["trivial_consistent"] = r_trivial.consistent && std::abs(r_trivial.probability_sum - 1.0) <= 1e-9;
    res.invariants["rotated_inconsistent"] = !r_rotated.consistent;
    res.invariants["coarse_grained_consistent"] = r_coarse.consistent;
    return res;
}

ExperimentResult dispatch(const ExperimentConfig& cfg, bool dry_run) {
    if (cfg.experiment == "qfunction-grid") return qfunction_grid(cfg, dry_run);
    if (cfg.experiment == "oracle-vs-fbsde") return oracle_vs_fbsde(cfg, dry_run);
    if (cfg.experiment == "amplifier-measurement") return amplifier_measurement(cfg, dry_run);
    if (cfg.experiment == "superposition") return superposition(cfg, dry_run);
    if (cfg.experiment == "histories-demo") return histories_demo(cfg, dry_run);
    throw ConfigError("unknown experiment \"" + cfg.experiment + "\"");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    Params p(doc, "config");
    ExperimentConfig cfg;
    cfg.experiment = p.string("experiment", "");
    if (!kExperiments.count(cfg.experiment)) throw ConfigError("config.experiment: unknown or missing experiment \"" + cfg.experiment + "\"");
    if (doc.contains("seed")) {
        const json& s = doc.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) throw ConfigError("config.seed: expected a nonnegative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    p.integer("seed", 0);  // marks the key as known
    cfg.output_dir = p.string("output_dir", "out");
    if (doc.contains("parameters")) {
        if (!doc.at("parameters").is_object()) throw ConfigError("config.parameters: expected an object");
        cfg.parameters = doc.at("parameters");
    }
    p.object("parameters");
    p.finish();
    return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

void validate_config(const ExperimentConfig& cfg) { dispatch(cfg, true); }

bool ExperimentResult::all_pass() const {
    for (const auto& [k, v] : invariants.items())
        if (!v.get<bool>()) return false;
    return true;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return dispatch(cfg, false); }

std::string render_report(const ExperimentConfig& cfg, const ExperimentResult& result, const std::string& timestamp) {
    json header = {{"timestamp", timestamp}, {"tool", "oqft"}, {"tool_version", kToolVersion}};
    json body = {{"schema_version", kReportSchemaVersion},
                 {"config", {{"experiment", cfg.experiment}, {"seed", cfg.seed}, {"parameters", cfg.parameters}}},
                 {"seed", cfg.seed},
                 {"versions",
                  {{"oqft", kToolVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                 {"results", result.results},
                 {"invariants", result.invariants},
                 {"all_pass", result.all_pass()}};
    std::vector<std::string> names;
    for (const auto& f : result.files) names.push_back(f.name);
    body["data_files"] = names;
    return json{{"header", header}, {"body", body}}.dump(2) + "\n";
}

OracleComparison compare_fbsde_with_oracle(const PolynomialHamiltonian& h, const DensityMatrix& rho0, double T, int n_steps, int n_traj,
                                           std::uint64_t seed, int threads) {
    if (h.max_degree() > 2) throw UnsupportedDiffusion("compare_fbsde_with_oracle: Hamiltonian degree above 2 gives state-dependent diffusion");
    if (n_steps < 2 || n_steps % 2) throw InvalidArgument("compare_fbsde_with_oracle: n_steps must be even and >= 2");
    const FpeSpec spec = derive_fpe(h);
    const QuadratureSplit split = split_quadratures(spec);
    const Propagator prop(rho0.basis(), h);
    const DensityMatrix rho_half = prop.evolve(rho0, T / 2);
    const DensityMatrix rho_end = prop.evolve(rho0, T);
    const BoundaryConditions bc = oracle_boundary(split, rho0, rho_end);
    EnsembleOptions opts;
    opts.record_steps = {0, n_steps / 2, n_steps};
    opts.threads = threads;
    const TrajectoryEnsemble ens = simulate_ensemble(split, spec, bc, n_traj, n_steps, T / n_steps, seed, opts);

    OracleComparison out;
    out.all_match = true;
    const DensityMatrix* states[3] = {&rho0, &rho_half, &rho_end};
    for (int r = 0; r < 3; ++r) {
        SliceComparison s;
        s.t = ens.time(r);
        s.fbsde = marginal_stats(ens, r);
        const MomentTable m = q_moments(*states[r], 2);
        s.oracle_mean = m.means();
        s.oracle_covariance = m.covariance_matrix();
        s.matches = true;
        auto check = [&](double value, double oracle, double se) {
            if (!close_to(value, oracle, se)) s.matches = false;
            if (se > 0.0) s.max_z = std::max(s.max_z, std::abs(value - oracle) / se);
        };
        for (int i = 0; i < 2; ++i) check(s.fbsde.mean(i), s.oracle_mean(i), s.fbsde.se_mean(i));
        for (int i = 0; i < 2; ++i)
            for (int j = i; j < 2; ++j) check(s.fbsde.covariance(i, j), s.oracle_covariance(i, j), s.fbsde.se_covariance(i, j));
        out.all_match = out.all_match && s.matches;
        out.slices.push_back(std::move(s));
    }
    return out;
}

json to_json(const OracleComparison& c) {
    json slices = json::array();
    for (const auto& s : c.slices) {
        json j = to_json(s.fbsde);
        j["t"] = s.t;
        j["oracle_mean"] = std::vector<double>(s.oracle_mean.data(), s.oracle_mean.data() + s.oracle_mean.size());
        std::vector<std::vector<double>> cov;
        for (Eigen::Index a = 0; a < s.oracle_covariance.rows(); ++a) {
            cov.emplace_back();
            for (Eigen::Index b = 0; b < s.oracle_covariance.cols(); ++b) cov.back().push_back(s.oracle_covariance(a, b));
        }
        j["oracle_covariance"] = cov;
        j["max_z"] = s.max_z;
        j["matches"] = s.matches;
        slices.push_back(std::move(j));
    }
    return {{"slices", slices}, {"all_match", c.all_match}};
}

}  // namespace oqft
