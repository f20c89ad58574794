#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "optospin/errors.hpp"
#include "optospin/fft.hpp"
#include "optospin/numeric.hpp"
#include "optospin/rng.hpp"

// Heterodyne detection: synthesizes the photodiode beat produced when the
// spin coherence is converted to an optical field, and recovers amplitude and
// phase of the beat tone from a discrete Fourier transform. The simulation
// works directly on the difference tone at a reduced sample rate; only the
// beat carries information.

namespace optospin::detection {

struct BeatTrace {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    double beat_hz = 0.0;
    double window_s = 0.0;
};

// s(t) = 2 |echo| cos(2 pi beat t + arg echo) exp(-t / decay) + white noise.
// The factor 2 is the heterodyne conversion gain; decay models the optical
// coherence envelope (pass infinity to disable).
inline BeatTrace synthesize_beat(std::complex<double> echo, double beat_hz, double decay_s, double window_s,
                                 double sample_rate_hz, double noise_sigma, std::uint64_t seed) {
    if (!(sample_rate_hz > 2.0 * beat_hz))
        throw physics_error("synthesize_beat: sample rate violates Nyquist for the beat frequency");
    if (!(window_s > 0.0)) throw physics_error("synthesize_beat: window must be positive");

    BeatTrace trace;
    trace.sample_rate_hz = sample_rate_hz;
    trace.beat_hz = beat_hz;
    trace.window_s = window_s;
    const auto n = static_cast<std::size_t>(std::llround(window_s * sample_rate_hz));
    trace.samples.resize(n);

    const double amp = 2.0 * std::abs(echo);
    const double phase = std::arg(echo);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate_hz;
        const double envelope = std::isfinite(decay_s) && decay_s > 0.0 ? std::exp(-t / decay_s) : 1.0;
        double v = amp * std::cos(two_pi * beat_hz * t + phase) * envelope;
        if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
        trace.samples[i] = v;
    }
    return trace;
}

struct SpectrumPeak {
    double frequency_hz = 0.0;
    double re = 0.0;
    double im = 0.0;
    double amplitude = 0.0;
    double theta_rad = 0.0;
    double d_re = 0.0;     // per-quadrature noise-floor standard deviation
    double d_im = 0.0;
    double d_theta_rad = 0.0;
    double snr = 0.0;
};

enum class WindowFn { rectangular, flat_top };

namespace detail {

// 5-term flat-top window (amplitude-flat to < 0.1%)
inline double flat_top(double frac) {
    constexpr double a0 = 0.21557895, a1 = 0.41663158, a2 = 0.277263158, a3 = 0.083578947, a4 = 0.006947368;
    return a0 - a1 * std::cos(two_pi * frac) + a2 * std::cos(2.0 * two_pi * frac) -
           a3 * std::cos(3.0 * two_pi * frac) + a4 * std::cos(4.0 * two_pi * frac);
}

}  // namespace detail

// DFT peak at the bin nearest the target frequency. Normalization is fixed so
// a noiseless bin-centered cosine of amplitude A reports amplitude A; the
// noise floor is estimated from bins at least 5 bins away from the peak.
inline SpectrumPeak fft_peak(const BeatTrace& trace, double target_hz, WindowFn window = WindowFn::rectangular) {
    const std::size_t n = trace.samples.size();
    if (n < 16) throw physics_error("fft_peak: trace too short");
    const double bin_hz = trace.sample_rate_hz / static_cast<double>(n);
    const double nyquist = 0.5 * trace.sample_rate_hz;
    if (!(target_hz > 0.0) || !(target_hz < nyquist))
        throw physics_error("fft_peak: target frequency outside (0, Nyquist)");
    if (target_hz < bin_hz)
        throw physics_error("fft_peak: window too short to separate the target from DC by one bin");

    std::vector<double> buf(n);
    double coherent_gain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = window == WindowFn::rectangular
                             ? 1.0
                             : detail::flat_top(static_cast<double>(i) / static_cast<double>(n));
        buf[i] = trace.samples[i] * w;
        coherent_gain += w;
    }
    const auto spectrum = fft_real(buf);
    const double scale = 2.0 / coherent_gain;

    const auto peak_bin = static_cast<std::size_t>(std::llround(target_hz / bin_hz));
    SpectrumPeak peak;
    peak.frequency_hz = static_cast<double>(peak_bin) * bin_hz;
    // DFT convention X_k = sum s_n exp(-2 pi i k n / N): a cosine of phase
    // theta lands at X_k = (A N / 2) exp(i theta)
    peak.re = scale * spectrum[peak_bin].real();
    peak.im = scale * spectrum[peak_bin].imag();
    peak.amplitude = std::hypot(peak.re, peak.im);
    peak.theta_rad = std::atan2(peak.im, peak.re);

    double noise_power = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 1; k + 1 < spectrum.size(); ++k) {
        const std::size_t dist = k > peak_bin ? k - peak_bin : peak_bin - k;
        if (dist < 5) continue;
        noise_power += std::norm(spectrum[k]) * scale * scale;
        ++count;
    }
    const double quadrature_var = count > 0 ? 0.5 * noise_power / static_cast<double>(count) : 0.0;
    peak.d_re = std::sqrt(quadrature_var);
    peak.d_im = peak.d_re;
    peak.snr = peak.d_re > 0.0 ? peak.amplitude / peak.d_re : std::numeric_limits<double>::infinity();

    const double denom = peak.re * peak.re + peak.im * peak.im;
    peak.d_theta_rad = denom > 0.0
                           ? std::sqrt(peak.re * peak.re * peak.d_im * peak.d_im +
                                       peak.im * peak.im * peak.d_re * peak.d_re) / denom
                           : std::numeric_limits<double>::infinity();
    return peak;
}

struct PhaseEstimate {
    double theta_rad = 0.0;
    double d_theta_rad = 0.0;
};

// Quadrant-correct echo phase with its propagated uncertainty
// d_theta = sqrt((re d_im)^2 + (im d_re)^2) / (re^2 + im^2).
inline PhaseEstimate extract_phase(const SpectrumPeak& peak) {
    if (!(peak.amplitude > 0.0)) throw physics_error("extract_phase: undefined phase at zero amplitude");
    PhaseEstimate est;
    est.theta_rad = std::atan2(peak.im, peak.re);
    const double denom = peak.re * peak.re + peak.im * peak.im;
    est.d_theta_rad = std::sqrt(peak.re * peak.re * peak.d_im * peak.d_im +
                                peak.im * peak.im * peak.d_re * peak.d_re) / denom;
    return est;
}

}  // namespace optospin::detection
