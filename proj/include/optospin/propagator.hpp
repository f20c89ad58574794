#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "optospin/bath.hpp"
#include "optospin/errors.hpp"
#include "optospin/numeric.hpp"
#include "optospin/rng.hpp"
#include "optospin/sequence.hpp"

// Monte-Carlo propagation of an inhomogeneous ensemble of effective two-level
// spins under a pulse sequence. Each ion carries a static detuning from the
// drive, a Rabi scale factor, and a seeded bath trajectory; pulses rotate the
// Bloch vector about the tilted drive axis and delays accumulate exact
// piecewise-constant phase. The ensemble reduction is a fixed-order pairwise
// sum, so results are bit-identical for any thread count.

namespace optospin::propagator {

enum class Sampling { stratified, random };

struct IonEnsemble {
    std::vector<double> detunings_hz;
    std::vector<double> rabi_scales;
    std::vector<std::uint64_t> noise_seeds;
    std::uint64_t master_seed = 0;
    double fwhm_hz = 0.0;

    int size() const { return static_cast<int>(detunings_hz.size()); }
};

// Detunings follow a Lorentzian of the given FWHM truncated at +-3 FWHM;
// stratified sampling places them at quantile midpoints (negligible
// Monte-Carlo noise in ensemble lineshapes), random sampling draws them
// independently. Rabi scales are normal(1, spread) truncated to (0, 2].
inline IonEnsemble sample_ensemble(int n, double fwhm_hz, double rabi_spread, std::uint64_t master_seed,
                                   Sampling sampling = Sampling::stratified) {
    if (n < 1) throw physics_error("sample_ensemble: need at least one ion");
    if (!(fwhm_hz > 0.0)) throw physics_error("sample_ensemble: FWHM must be positive");

    IonEnsemble ens;
    ens.master_seed = master_seed;
    ens.fwhm_hz = fwhm_hz;
    ens.detunings_hz.resize(static_cast<std::size_t>(n));
    ens.rabi_scales.resize(static_cast<std::size_t>(n));
    ens.noise_seeds.resize(static_cast<std::size_t>(n));

    const double gamma = 0.5 * fwhm_hz;  // half width
    const double u_hi = std::atan(3.0 * fwhm_hz / gamma) / M_PI + 0.5;  // CDF at +3 FWHM
    const double u_lo = 1.0 - u_hi;
    Rng rng(mix_seed(master_seed, 0x656e73));
    for (int i = 0; i < n; ++i) {
        const double u = sampling == Sampling::stratified
                             ? (static_cast<double>(i) + 0.5) / static_cast<double>(n)
                             : rng.uniform();
        const double q = u_lo + (u_hi - u_lo) * u;
        ens.detunings_hz[static_cast<std::size_t>(i)] = gamma * std::tan(M_PI * (q - 0.5));
    }
    for (int i = 0; i < n; ++i) {
        double kappa = 1.0;
        if (rabi_spread > 0.0) {
            do {
                kappa = rng.normal(1.0, rabi_spread);
            } while (kappa <= 0.0 || kappa > 2.0);
        }
        ens.rabi_scales[static_cast<std::size_t>(i)] = kappa;
        ens.noise_seeds[static_cast<std::size_t>(i)] = mix_seed(master_seed, static_cast<std::uint64_t>(i) + 1);
    }
    return ens;
}

struct SpinState {
    double x = 0.0;
    double y = 0.0;
    double z = 1.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    std::complex<double> coherence() const { return {0.5 * x, -0.5 * y}; }  // (x - iy)/2
};

// Rotation about the tilted drive axis (Omega cos phi, Omega sin phi, Delta)
// by angle 2 pi sqrt(Omega^2 + Delta^2) * duration, with Omega = kappa * rabi.
inline SpinState propagate_pulse(const SpinState& state, const sequence::TwoColorPulse& pulse,
                                 double detuning_hz, double kappa) {
    const double omega = kappa * pulse.rabi_hz;
    const double delta = detuning_hz;
    const double gen = std::sqrt(omega * omega + delta * delta);
    if (gen == 0.0 || pulse.duration_s <= 0.0) return state;

    const double ux = omega * std::cos(pulse.phase_rad) / gen;
    const double uy = omega * std::sin(pulse.phase_rad) / gen;
    const double uz = delta / gen;
    const double angle = two_pi * gen * pulse.duration_s;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double dot = ux * state.x + uy * state.y + uz * state.z;

    SpinState out;
    out.x = state.x * c + (uy * state.z - uz * state.y) * s + ux * dot * (1.0 - c);
    out.y = state.y * c + (uz * state.x - ux * state.z) * s + uy * dot * (1.0 - c);
    out.z = state.z * c + (ux * state.y - uy * state.x) * s + uz * dot * (1.0 - c);
    return out;
}

// Free evolution: transverse rotation by the exact accumulated phase
// 2 pi [Delta * duration + integral of the noise trajectory], scaled by
// exp(-duration / T2_floor); z is unchanged.
inline SpinState propagate_delay(const SpinState& state, double duration_s, double static_detuning_hz,
                                 const bath::NoiseTrajectory* noise, double noise_t0_s, double t2_floor_s) {
    if (duration_s < 0.0) throw physics_error("propagate_delay: negative duration");
    if (duration_s == 0.0) return state;

    double phase = two_pi * static_detuning_hz * duration_s;
    if (noise != nullptr) phase += two_pi * noise->integrate(noise_t0_s, noise_t0_s + duration_s);
    const double damp = std::isfinite(t2_floor_s) && t2_floor_s > 0.0 ? std::exp(-duration_s / t2_floor_s) : 1.0;
    const double c = std::cos(phase);
    const double s = std::sin(phase);

    SpinState out;
    out.x = damp * (state.x * c - state.y * s);
    out.y = damp * (state.x * s + state.y * c);
    out.z = state.z;
    return out;
}

struct EchoSample {
    double t_s = 0.0;
    std::complex<double> amplitude;
};

struct EchoResult {
    std::complex<double> amplitude;        // ensemble mean coherence at readout start
    std::vector<EchoSample> per_echo;      // populated when the echo train is recorded
    std::uint64_t sequence_digest = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t realization = 0;
};

enum class PhaseCycle { none, exorcycle };

struct RunSettings {
    double t2_floor_s = std::numeric_limits<double>::infinity();
    std::uint64_t realization = 0;      // bath realization index (mixed into per-ion seeds)
    int threads = 1;
    bool noise = true;                  // false: skip bath trajectories entirely
    bool record_echo_train = false;     // record the mid-train echo amplitudes
    PhaseCycle phase_cycle = PhaseCycle::none;
    bath::FieldModelParams field_model{};
    double detuning_offset_hz = 0.0;    // added to every ion (drive-frequency scans)
    std::array<double, 4> zeeman_offsets_hz{0.0, 0.0, 0.0, 0.0};  // per-branch line offsets at B != 0
};

namespace detail {

// Echo times from the pulse structure: each rephasing pulse mirrors the
// previous echo time about its center.
inline std::vector<double> echo_times(const sequence::PulseSequence& seq) {
    std::vector<double> times;
    double prev = 0.0;
    bool have_excite = false;
    for (const auto& e : seq.elements) {
        const auto* p = std::get_if<sequence::TwoColorPulse>(&e);
        if (p == nullptr) continue;
        if (p->label == sequence::PulseLabel::excite) {
            prev = p->t_center_s();
            have_excite = true;
        } else if (p->label == sequence::PulseLabel::rephase && have_excite) {
            prev = 2.0 * p->t_center_s() - prev;
            times.push_back(prev);
        }
    }
    return times;
}

struct RecordPlan {
    std::vector<double> times_s;  // strictly increasing, last entry = readout start
};

inline RecordPlan record_plan(const sequence::PulseSequence& seq, bool train) {
    const auto* readout = seq.readout();
    if (readout == nullptr) throw physics_error("run_sequence: sequence has no readout element");
    RecordPlan plan;
    if (train) {
        for (const double t : echo_times(seq))
            if (t < readout->t_start_s - 1e-15) plan.times_s.push_back(t);
    }
    plan.times_s.push_back(readout->t_start_s);
    return plan;
}

// single-ion propagation, recording the coherence at the planned times
inline void propagate_ion(const sequence::PulseSequence& seq, double detuning_hz, double kappa,
                          const bath::NoiseTrajectory* noise, double t2_floor_s, const RecordPlan& plan,
                          double rephase_phase_shift, std::complex<double>* out) {
    SpinState state;
    double t = seq.start_s();
    std::size_t next_record = 0;
    const double traj_origin = seq.start_s();

    const auto record_through = [&](double until) {
        while (next_record < plan.times_s.size() && plan.times_s[next_record] <= until + 1e-15) {
            const double t_rec = plan.times_s[next_record];
            state = propagate_delay(state, t_rec - t, detuning_hz, noise, t - traj_origin, t2_floor_s);
            t = t_rec;
            out[next_record] = state.coherence();
            ++next_record;
        }
    };

    for (const auto& e : seq.elements) {
        if (const auto* p = std::get_if<sequence::TwoColorPulse>(&e)) {
            record_through(p->t_start_s);
            if (next_record >= plan.times_s.size()) return;
            if (t < p->t_start_s - 1e-15) {
                state = propagate_delay(state, p->t_start_s - t, detuning_hz, noise, t - traj_origin, t2_floor_s);
                t = p->t_start_s;
            }
            if (p->label == sequence::PulseLabel::readout) continue;  // weak probe: non-invasive here
            sequence::TwoColorPulse pulse = *p;
            if (pulse.label == sequence::PulseLabel::rephase) pulse.phase_rad += rephase_phase_shift;
            // noise is frozen across pulses (short vs. the bath correlation time)
            state = propagate_pulse(state, pulse, detuning_hz, kappa);
            t = p->t_end_s();
        } else if (const auto* d = std::get_if<sequence::Delay>(&e)) {
            record_through(d->t_end_s());
            if (next_record >= plan.times_s.size()) return;
            if (t < d->t_end_s() - 1e-15) {
                state = propagate_delay(state, d->t_end_s() - t, detuning_hz, noise, t - traj_origin, t2_floor_s);
                t = d->t_end_s();
            }
        }
    }
    record_through(seq.end_s());
}

}  // namespace detail

// Propagates the full ensemble through a validated sequence for one bath
// realization. The bath suppression factor at field B scales the trajectory
// power as sqrt(Gamma_dd(B) / Gamma_dd(0)).
inline EchoResult run_sequence(const sequence::PulseSequence& seq, const IonEnsemble& ens,
                               const bath::BathConfig& bath_cfg, double b_mt, const RunSettings& settings = {}) {
    const auto violations = sequence::validate(seq);
    if (!violations.empty()) {
        std::string msg = "run_sequence: invalid sequence:";
        for (const auto& v : violations) msg += " [" + v.message + "]";
        throw physics_error(msg);
    }

    const detail::RecordPlan plan = detail::record_plan(seq, settings.record_echo_train);
    const std::size_t n_records = plan.times_s.size();
    const std::size_t n_ions = static_cast<std::size_t>(ens.size());

    int n_cycles = 1;
    if (settings.phase_cycle == PhaseCycle::exorcycle) {
        int rephase_count = 0;
        for (const auto& e : seq.elements)
            if (const auto* p = std::get_if<sequence::TwoColorPulse>(&e);
                p && p->label == sequence::PulseLabel::rephase)
                ++rephase_count;
        if (rephase_count != 1)
            throw physics_error("run_sequence: exorcycle phase cycling requires exactly one rephasing pulse");
        n_cycles = 4;
    }

    const double suppression = settings.noise ? bath::suppression_factor(b_mt, settings.field_model) : 0.0;
    const double traj_span = plan.times_s.back() - seq.start_s();

    std::vector<std::complex<double>> slots(n_ions * n_records);
    parallel_for(n_ions, settings.threads, [&](std::size_t lo, std::size_t hi) {
        std::vector<std::complex<double>> rec(n_records);
        std::vector<std::complex<double>> acc(n_records);
        for (std::size_t i = lo; i < hi; ++i) {
            const double detuning = ens.detunings_hz[i] + settings.detuning_offset_hz +
                                    settings.zeeman_offsets_hz[i % 4];
            const double kappa = ens.rabi_scales[i];

            bath::NoiseTrajectory traj;
            const bath::NoiseTrajectory* traj_ptr = nullptr;
            if (settings.noise && suppression != 0.0) {
                traj = bath::telegraph_trajectory(bath_cfg, traj_span, suppression,
                                                  mix_seed(ens.noise_seeds[i], settings.realization));
                traj_ptr = &traj;
            }

            std::fill(acc.begin(), acc.end(), std::complex<double>{});
            for (int k = 0; k < n_cycles; ++k) {
                const double shift = 0.5 * M_PI * k;
                const double weight = (k % 2 == 0) ? 1.0 : -1.0;
                std::fill(rec.begin(), rec.end(), std::complex<double>{});
                detail::propagate_ion(seq, detuning, kappa, traj_ptr, settings.t2_floor_s, plan, shift,
                                      rec.data());
                for (std::size_t r = 0; r < n_records; ++r) acc[r] += weight * rec[r];
            }
            for (std::size_t r = 0; r < n_records; ++r)
                slots[r * n_ions + i] = acc[r] / static_cast<double>(n_cycles);
        }
    });

    EchoResult result;
    result.sequence_digest = sequence::digest(seq);
    result.master_seed = ens.master_seed;
    result.realization = settings.realization;
    result.per_echo.reserve(n_records);
    for (std::size_t r = 0; r < n_records; ++r) {
        const auto mean = pairwise_sum(std::span<const std::complex<double>>(slots.data() + r * n_ions, n_ions)) /
                          static_cast<double>(n_ions);
        result.per_echo.push_back({plan.times_s[r], mean});
    }
    result.amplitude = result.per_echo.back().amplitude;
    if (!settings.record_echo_train) result.per_echo.clear();
    return result;
}

// Mean result over independent bath realizations (realization indices 0..n-1).
inline EchoResult run_averaged(const sequence::PulseSequence& seq, const IonEnsemble& ens,
                               const bath::BathConfig& bath_cfg, double b_mt, int n_realizations,
                               RunSettings settings = {}) {
    if (n_realizations < 1) throw physics_error("run_averaged: need at least one realization");
    EchoResult mean;
    for (int r = 0; r < n_realizations; ++r) {
        settings.realization = static_cast<std::uint64_t>(r);
        EchoResult one = run_sequence(seq, ens, bath_cfg, b_mt, settings);
        if (r == 0) {
            mean = std::move(one);
        } else {
            mean.amplitude += one.amplitude;
            for (std::size_t k = 0; k < mean.per_echo.size(); ++k)
                mean.per_echo[k].amplitude += one.per_echo[k].amplitude;
        }
    }
    const double inv = 1.0 / static_cast<double>(n_realizations);
    mean.amplitude *= inv;
    for (auto& s : mean.per_echo) s.amplitude *= inv;
    mean.realization = 0;
    return mean;
}

struct ScanRow {
    double parameter = 0.0;
    std::complex<double> amplitude;
};

// One averaged run per drive-frequency offset, common master seed.
inline std::vector<ScanRow> scan_detuning(const sequence::PulseSequence& seq, const IonEnsemble& ens,
                                          const bath::BathConfig& bath_cfg, double b_mt,
                                          const std::vector<double>& offsets_hz, int n_realizations,
                                          RunSettings settings = {}) {
    if (offsets_hz.empty()) throw physics_error("scan_detuning: empty parameter grid");
    std::vector<ScanRow> rows;
    rows.reserve(offsets_hz.size());
    for (const double off : offsets_hz) {
        settings.detuning_offset_hz = off;
        rows.push_back({off, run_averaged(seq, ens, bath_cfg, b_mt, n_realizations, settings).amplitude});
    }
    return rows;
}

}  // namespace optospin::propagator
