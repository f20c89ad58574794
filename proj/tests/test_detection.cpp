#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "optospin/detection.hpp"
#include "oracles.hpp"

using namespace optospin;
using namespace optospin::detection;
using Catch::Approx;

namespace {

constexpr double kRate = 125e6;    // samples/s
constexpr double kWindow = 50e-6;  // s
constexpr double kBeat = 29.34e6;  // bin-centered: 1467 cycles in the window
constexpr double kInf = std::numeric_limits<double>::infinity();

// per-quadrature noise floor of a rectangular-window DFT bin
double quadrature_sigma(double noise_sigma, std::size_t n) {
    return noise_sigma * std::sqrt(2.0 / static_cast<double>(n));
}

}  // namespace

TEST_CASE("zero echo with zero noise gives the all-zero trace", "[detection]") {
    const auto trace = synthesize_beat(0.0, kBeat, kInf, kWindow, kRate, 0.0, 1);
    for (const double s : trace.samples) REQUIRE(s == 0.0);
    REQUIRE(trace.samples.size() == 6250);
}

TEST_CASE("noiseless echo synthesizes a pure cosine at the beat bin", "[detection]") {
    const auto trace = synthesize_beat(std::complex<double>(0.5, 0.0), kBeat, kInf, kWindow, kRate, 0.0, 1);
    const auto peak = fft_peak(trace, kBeat);
    REQUIRE(peak.frequency_hz == Approx(kBeat));
    REQUIRE(peak.amplitude == Approx(1.0).margin(1e-9));  // heterodyne gain 2 x |echo|
    REQUIRE(peak.im == Approx(0.0).margin(1e-9));
    REQUIRE(peak.theta_rad == Approx(0.0).margin(1e-9));
}

TEST_CASE("nyquist violations are rejected", "[detection]") {
    REQUIRE_THROWS_AS(synthesize_beat(0.5, 70e6, kInf, kWindow, kRate, 0.0, 1), physics_error);
    const auto trace = synthesize_beat(0.5, kBeat, kInf, kWindow, kRate, 0.0, 1);
    REQUIRE_THROWS_AS(fft_peak(trace, 63e6), physics_error);
    REQUIRE_THROWS_AS(fft_peak(trace, 1e3), physics_error);  // under one bin from DC
}

TEST_CASE("optical-coherence envelope reduces the peak by the analytic factor", "[detection]") {
    const double decay = 7e-6;
    const auto trace = synthesize_beat(std::complex<double>(0.5, 0.0), kBeat, decay, kWindow, kRate, 0.0, 1);
    const auto peak = fft_peak(trace, kBeat);

    // independent direct evaluation of the windowed transform of the decaying cosine
    const std::size_t n = trace.samples.size();
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kRate;
        acc += std::exp(-t / decay) * std::cos(two_pi * kBeat * t) *
               std::exp(std::complex<double>(0.0, -two_pi * kBeat * t));
    }
    const double expected = 2.0 * std::abs(acc) / static_cast<double>(n);
    REQUIRE(peak.amplitude == Approx(expected).epsilon(1e-9));
    REQUIRE(peak.amplitude < 0.2);  // strong reduction for a 7 us envelope in a 50 us window
}

TEST_CASE("measured signal-to-noise tracks the injected level", "[detection]") {
    const double amp = 1.0;  // echo 0.5
    const std::size_t n = 6250;
    const double target_snr = 10.0;
    const double noise_sigma = amp / (target_snr * quadrature_sigma(1.0, n));
    for (unsigned seed = 1; seed <= 100; ++seed) {
        const auto trace = synthesize_beat(std::complex<double>(0.5, 0.0), kBeat, kInf, kWindow, kRate,
                                           noise_sigma, seed);
        const auto peak = fft_peak(trace, kBeat);
        REQUIRE(peak.snr > 7.0);
        REQUIRE(peak.snr < 13.0);
    }
}

TEST_CASE("flat-top window recovers off-bin amplitudes within 2 percent", "[detection]") {
    const double bin = 1.0 / kWindow;  // 20 kHz
    const double off_bin_hz = kBeat + 0.5 * bin;  // worst-case scalloping
    const auto trace = synthesize_beat(std::complex<double>(0.5, 0.0), off_bin_hz, kInf, kWindow, kRate, 0.0, 1);

    const auto rect = fft_peak(trace, off_bin_hz, WindowFn::rectangular);
    const auto flat = fft_peak(trace, off_bin_hz, WindowFn::flat_top);
    REQUIRE(flat.amplitude == Approx(1.0).epsilon(0.02));
    REQUIRE(rect.amplitude < 0.75);  // rectangular scalloping loss is ~36%

    // cross-check against the window transfer computed independently
    const double predicted = oracles::window_amplitude_factor(trace.samples.size(), 0.5, true);
    REQUIRE(flat.amplitude == Approx(predicted).margin(0.01));
}

TEST_CASE("phase extraction is quadrant-correct", "[detection]") {
    SpectrumPeak peak;
    peak.re = 1.0;
    peak.im = 0.0;
    peak.amplitude = 1.0;
    REQUIRE(extract_phase(peak).theta_rad == Approx(0.0));
    peak.re = 0.0;
    peak.im = 1.0;
    REQUIRE(extract_phase(peak).theta_rad == Approx(M_PI / 2.0));
    peak.re = -1.0;
    peak.im = -1e-3;
    REQUIRE(extract_phase(peak).theta_rad < -M_PI / 2.0);
}

TEST_CASE("phase uncertainty reproduces the propagation formula", "[detection]") {
    SpectrumPeak peak;
    peak.re = 1.0;
    peak.im = 0.0;
    peak.amplitude = 1.0;
    peak.d_re = 0.1;
    peak.d_im = 0.1;
    REQUIRE(extract_phase(peak).d_theta_rad == Approx(0.1).margin(1e-15));
}

TEST_CASE("zero amplitude has no defined phase", "[detection]") {
    SpectrumPeak peak;
    REQUIRE_THROWS_AS(extract_phase(peak), physics_error);
}

TEST_CASE("synthesis and extraction round-trip for random amplitude and phase", "[detection]") {
    Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(0.05, 0.5);
        const double theta = rng.uniform(-M_PI, M_PI);
        const std::complex<double> echo = std::polar(a, theta);
        const auto trace = synthesize_beat(echo, kBeat, kInf, kWindow, kRate, 0.0, 7);
        const auto peak = fft_peak(trace, kBeat);
        REQUIRE(peak.amplitude / 2.0 == Approx(a).margin(1e-6));
        REQUIRE(std::abs(std::remainder(peak.theta_rad - theta, 2.0 * M_PI)) < 1e-6);
    }
}

TEST_CASE("phase uncertainty shrinks with echo amplitude", "[detection]") {
    const double noise_sigma = 1.0;
    double previous = std::numeric_limits<double>::infinity();
    for (const double a : {0.05, 0.1, 0.25, 0.5}) {
        const auto trace =
            synthesize_beat(std::complex<double>(a, 0.0), kBeat, kInf, kWindow, kRate, noise_sigma, 99);
        const auto est = extract_phase(fft_peak(trace, kBeat));
        REQUIRE(est.d_theta_rad < previous);
        previous = est.d_theta_rad;
    }
}
