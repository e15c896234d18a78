#include "doctest.h"

#include <cmath>
#include <sstream>

#include "oqft/errors.hpp"
#include "oqft/measurement.hpp"

using namespace oqft;

TEST_CASE("config validation") {
    AmplifierConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.n_steps() == 1000);
    c.kappa = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.T = 1.0005;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.squeeze_r = -1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.n_traj = 2;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("eigenvalue inference divides by the gain") {
    MeasurementRecord r;
    r.mean = 5.0;
    r.se_mean = 0.2;
    r.outcomes = {1.0, 3.0};
    const Inference inf = infer_eigenvalue(r, 2.5);
    CHECK(inf.value == doctest::Approx(2.0));
    CHECK(inf.se == doctest::Approx(0.08));
    CHECK_THROWS_AS(noise_to_signal(r, 2.5, 0.0), InvalidArgument);
}

TEST_CASE("amplified outcome: oracle closed form and FBSDE agreement") {
    AmplifierConfig c;
    c.x_i = 1.0;
    c.squeeze_r = 1.0;
    c.n_traj = 3000;
    c.seed = 3;
    const MeasurementRecord r = run_amplifier_measurement(c);
    const double g = std::exp(1.0);
    // Linear amplification: x -> g x, Q variance g^2 (Var_Q(0) - 1) + 1.
    CHECK(r.gain == doctest::Approx(g));
    CHECK(r.oracle_mean == doctest::Approx(g * c.x_i).epsilon(1e-6));
    CHECK(r.oracle_variance == doctest::Approx(g * g * std::exp(-2.0) + 1.0).epsilon(1e-6));
    CHECK(r.oracle_initial_mean == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.oracle_initial_variance == doctest::Approx(1.0 + std::exp(-2.0)).epsilon(1e-8));
    CHECK(r.outcomes.size() == 3000);
    CHECK(r.status == "OK");
    CHECK(r.mean_matches_oracle());
    CHECK(r.initial_matches_oracle());
    const double oracle_ratio = std::sqrt(std::exp(-2.0) + 1.0 / (g * g)) / c.x_i;
    CHECK(noise_to_signal(r, g, c.x_i) == doctest::Approx(oracle_ratio).epsilon(0.1));
}

TEST_CASE("superposition with overlapping components raises OverlapError") {
    AmplifierConfig c;
    c.squeeze_r = 0.0;
    c.n_traj = 100;
    CHECK_THROWS_AS(run_superposition_measurement(-0.2, 0.2, {0.5, 0.5}, c), OverlapError);
    CHECK_THROWS_AS(run_superposition_measurement(-1.0, 1.0, {0.5, 0.6}, c), InvalidArgument);
}

TEST_CASE("outcome CSV") {
    std::ostringstream s;
    write_outcomes_csv(s, {1.5, -0.25}, "x");
    CHECK(s.str() == "x\n1.5\n-0.25\n");
}
