#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "optospin/bath.hpp"
#include "oracles.hpp"

using namespace optospin;
using namespace optospin::bath;
using Catch::Approx;

namespace {

BathConfig test_config() {
    BathConfig cfg;
    cfg.concentration_per_cm3 = 6.4e17;
    cfg.flip_rate_hz = 1000.0;
    cfg.rng_seed = 11;
    return cfg;
}

double kurtosis_excess(const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double m2 = 0.0, m4 = 0.0;
    for (const double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m4 /= static_cast<double>(v.size());
    return m4 / (m2 * m2) - 3.0;
}

}  // namespace

TEST_CASE("shift width shrinks toward zero with concentration", "[bath]") {
    BathConfig cfg = test_config();
    std::vector<double> sigmas;
    for (const double n : {1e14, 1e15, 1e16, 6.4e17}) {
        cfg.concentration_per_cm3 = n;
        sigmas.push_back(sample_shift_distribution(cfg, 4000).sigma_hz);
    }
    for (std::size_t i = 1; i < sigmas.size(); ++i) REQUIRE(sigmas[i - 1] <= sigmas[i]);
    REQUIRE(sigmas.front() < 1e-2 * sigmas.back());
}

TEST_CASE("doubling the concentration scales sigma near-linearly", "[bath]") {
    BathConfig cfg = test_config();
    const double s1 = sample_shift_distribution(cfg, 30000).sigma_hz;
    cfg.concentration_per_cm3 *= 2.0;
    cfg.rng_seed = 12;
    const double s2 = sample_shift_distribution(cfg, 30000).sigma_hz;
    REQUIRE(s2 / s1 == Approx(2.0).epsilon(0.1));
}

TEST_CASE("shift samples are near-Gaussian", "[bath]") {
    const auto dist = sample_shift_distribution(test_config(), 100000, true);
    REQUIRE(dist.raw_samples.size() == 100000);
    REQUIRE(std::abs(kurtosis_excess(dist.raw_samples)) < 0.5);

    // fitted sigma agrees with the sample standard deviation
    double mean = 0.0, var = 0.0;
    for (const double x : dist.raw_samples) mean += x;
    mean /= 1e5;
    for (const double x : dist.raw_samples) var += (x - mean) * (x - mean);
    var /= 1e5;
    REQUIRE(dist.sigma_hz == Approx(std::sqrt(var)).epsilon(3.0 / std::sqrt(1e5)));
}

TEST_CASE("too dilute a bath for the capped volume is rejected", "[bath]") {
    BathConfig cfg = test_config();
    cfg.concentration_per_cm3 = 1e11;
    REQUIRE_THROWS_AS(sample_shift_distribution(cfg, 100), physics_error);
    REQUIRE_THROWS_WITH(sample_shift_distribution(cfg, 100),
                        Catch::Matchers::ContainsSubstring("larger volume"));
}

TEST_CASE("zero flip rate freezes the trajectory", "[bath]") {
    BathConfig cfg = test_config();
    cfg.flip_rate_hz = 0.0;
    const auto traj = telegraph_trajectory(cfg, 10e-3, 1.0, 42);
    REQUIRE(traj.times_s.size() == 1);
    REQUIRE(traj.value_at(0.0) == traj.value_at(9.9e-3));
}

TEST_CASE("zero suppression gives the identically zero trajectory", "[bath]") {
    const auto traj = telegraph_trajectory(test_config(), 10e-3, 0.0, 42);
    for (const double v : traj.values_hz) REQUIRE(v == 0.0);
}

TEST_CASE("flip counts follow the merged telegraph statistics", "[bath]") {
    BathConfig cfg = test_config();
    const double duration = 1e-3;
    const double expected = cfg.strongest_defects * cfg.flip_rate_hz * duration;  // 50
    double total = 0.0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s)
        total += static_cast<double>(telegraph_trajectory(cfg, duration, 1.0, 1000 + s).times_s.size() - 1);
    const double mean = total / seeds;
    const double standard_error = std::sqrt(expected / seeds);
    REQUIRE(std::abs(mean - expected) < 3.0 * standard_error);
}

TEST_CASE("identical seeds give bit-identical trajectories", "[bath]") {
    const auto a = telegraph_trajectory(test_config(), 5e-3, 0.8, 77);
    const auto b = telegraph_trajectory(test_config(), 5e-3, 0.8, 77);
    REQUIRE(a.times_s == b.times_s);
    REQUIRE(a.values_hz == b.values_hz);
}

TEST_CASE("a longer trajectory from the same seed extends the shorter one", "[bath]") {
    const auto short_traj = telegraph_trajectory(test_config(), 2e-3, 1.0, 99);
    const auto long_traj = telegraph_trajectory(test_config(), 8e-3, 1.0, 99);
    REQUIRE(long_traj.times_s.size() >= short_traj.times_s.size());
    for (std::size_t i = 0; i < short_traj.times_s.size(); ++i) {
        REQUIRE(long_traj.times_s[i] == short_traj.times_s[i]);
        REQUIRE(long_traj.values_hz[i] == short_traj.values_hz[i]);
    }
}

TEST_CASE("piecewise integration is exact", "[bath]") {
    NoiseTrajectory traj;
    traj.duration_s = 10.0;
    traj.times_s = {0.0, 2.0, 5.0};
    traj.values_hz = {1.0, -2.0, 4.0};
    REQUIRE(traj.integrate(0.0, 10.0) == Approx(1.0 * 2.0 - 2.0 * 3.0 + 4.0 * 5.0).margin(1e-12));
    REQUIRE(traj.integrate(1.0, 3.0) == Approx(1.0 * 1.0 - 2.0 * 1.0).margin(1e-12));
    REQUIRE(traj.integrate(6.0, 6.0) == 0.0);
    REQUIRE_THROWS_AS(traj.integrate(5.0, 11.0), physics_error);
}

TEST_CASE("linewidth model hits both anchor points with default parameters", "[bath]") {
    const FieldModelParams p{};  // defaults calibrated to the anchors
    REQUIRE(linewidth_model(0.0, p) == Approx(250.0).margin(0.5));
    REQUIRE(linewidth_model(9.0, p) == Approx(110.0).margin(1.0));
}

TEST_CASE("linewidth model reaches its asymptote and decreases monotonically", "[bath]") {
    const FieldModelParams p{80.0, 170.0, 2.0, 0.2};
    REQUIRE(linewidth_model(1e9, p) == Approx(p.gamma0_hz + p.beta * p.gamma_dd_hz).epsilon(1e-6));
    double prev = linewidth_model(0.0, p);
    for (double b = 0.25; b <= 20.0; b += 0.25) {
        const double cur = linewidth_model(b, p);
        REQUIRE(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("field-scan fit recovers exact synthetic parameters", "[bath]") {
    const FieldModelParams truth{95.0, 160.0, 1.2, 0.1};
    std::vector<FieldScanPoint> data;
    for (double b = 0.0; b <= 10.0; b += 0.5) data.push_back({b, linewidth_model(b, truth), 0.0});
    const auto fit = fit_field_scan(data, truth.beta);
    REQUIRE(fit.at("gamma0_hz") == Approx(truth.gamma0_hz).epsilon(1e-6));
    REQUIRE(fit.at("gamma_dd_hz") == Approx(truth.gamma_dd_hz).epsilon(1e-6));
    REQUIRE(fit.at("b_c_mt") == Approx(truth.b_c_mt).epsilon(1e-5));
    REQUIRE(fit.at("beta") == Approx(truth.beta).margin(1e-12));
}

TEST_CASE("two anchor points give the closed-form linear solve", "[bath]") {
    const std::vector<FieldScanPoint> data{{0.0, 250.0, 0.0}, {9.0, 110.0, 0.0}};
    const auto fit = fit_field_scan(data);
    const double f9 = 2.25 / (2.25 + 81.0);
    const double gamma_dd = (250.0 - 110.0) / (1.0 - f9);
    REQUIRE(fit.at("gamma_dd_hz") == Approx(gamma_dd).margin(1e-9));
    REQUIRE(fit.at("gamma0_hz") == Approx(250.0 - gamma_dd).margin(1e-9));
    REQUIRE(!fit.warnings.empty());
}

TEST_CASE("noisy field scans recover the generator within 10 percent", "[bath]") {
    const FieldModelParams truth{106.1, 143.9, 1.5, 0.0};
    int good = 0;
    for (unsigned seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7919 + 3);
        std::vector<FieldScanPoint> data;
        // scan concentrated around the suppression knee, as a real scan would be
        for (const double b : {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 6.0, 9.0}) {
            const double g = linewidth_model(b, truth);
            data.push_back({b, g * (1.0 + 0.05 * rng.normal()), 0.05 * g});
        }
        const auto fit = fit_field_scan(data);
        if (std::abs(fit.at("gamma0_hz") - truth.gamma0_hz) < 0.1 * truth.gamma0_hz &&
            std::abs(fit.at("gamma_dd_hz") - truth.gamma_dd_hz) < 0.1 * truth.gamma_dd_hz)
            ++good;
    }
    REQUIRE(good >= 88);  // 95% confidence with binomial slack
}

TEST_CASE("concentration inference is linear in the implied sigma", "[bath]") {
    BathCalibration cal;
    cal.reference_concentration_per_cm3 = 6.4e17;
    cal.sigma_ref_hz = 290.0;
    cal.gamma_dd_ref_hz = 144.0;
    cal.exponent = 2.0;
    cal.flip_rate_hz = 1000.0;
    const double n1 = infer_concentration(144.0, cal);
    REQUIRE(n1 == Approx(6.4e17).epsilon(1e-12));
    // doubling the implied sigma means 4x gamma at exponent 2
    const double n2 = infer_concentration(4.0 * 144.0, cal);
    REQUIRE(n2 == Approx(2.0 * 6.4e17).epsilon(1e-12));
}

TEST_CASE("missing calibration is rejected", "[bath]") {
    BathCalibration cal;  // zeros
    REQUIRE_THROWS_AS(infer_concentration(100.0, cal), physics_error);
}

TEST_CASE("calibration files round-trip", "[bath]") {
    BathCalibration cal;
    cal.reference_concentration_per_cm3 = 6.4e17;
    cal.sigma_ref_hz = 291.25;
    cal.gamma_dd_ref_hz = 143.5;
    cal.exponent = 1.96;
    cal.flip_rate_hz = 1000.0;
    const auto back = parse_calibration(serialize(cal));
    REQUIRE(back.reference_concentration_per_cm3 == cal.reference_concentration_per_cm3);
    REQUIRE(back.sigma_ref_hz == cal.sigma_ref_hz);
    REQUIRE(back.gamma_dd_ref_hz == cal.gamma_dd_ref_hz);
    REQUIRE(back.exponent == cal.exponent);
}

TEST_CASE("ppm conversion", "[bath]") {
    REQUIRE(ppm_relative_to_y(0.0) == 0.0);
    constexpr double n_y = 2.0 * 5.01 * 6.02214076e23 / 225.81;  // ~2.67e22 per cm^3
    REQUIRE(ppm_relative_to_y(n_y) == Approx(1e6).epsilon(1e-12));
    REQUIRE(ppm_relative_to_y(6.4e17) == Approx(23.95).epsilon(0.01));
}
