#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "optospin/errors.hpp"
#include "optospin/numeric.hpp"

// Pulse sequences for two-color spin control: value types for pulses and
// delays, builders for the two-pulse echo and CPMG protocols, structural
// validation, a flattened timeline with text serialization, and
// sample-accurate waveform export.
//
// Pulse areas are in cycles: rabi_hz * duration_s = 1/4 for a pi/2 pulse and
// 1/2 for a pi pulse. Pulses are placed by their centers; the excitation
// pulse is centered at t = 0, so sequences start at negative time and static
// detunings refocus exactly at the readout start.

namespace optospin::sequence {

enum class PulseLabel { excite, rephase, readout, reset };

inline const char* to_string(PulseLabel l) {
    switch (l) {
        case PulseLabel::excite: return "excite";
        case PulseLabel::rephase: return "rephase";
        case PulseLabel::readout: return "readout";
        case PulseLabel::reset: return "reset";
    }
    return "?";
}

struct TwoColorPulse {
    double t_start_s = 0.0;
    double duration_s = 0.0;
    double rabi_hz = 0.0;     // effective spin Rabi frequency at kappa = 1
    double phase_rad = 0.0;   // relative phase of the two tones = spin drive axis
    PulseLabel label = PulseLabel::excite;

    double t_center_s() const { return t_start_s + 0.5 * duration_s; }
    double t_end_s() const { return t_start_s + duration_s; }
    double area_cycles() const { return rabi_hz * duration_s; }
};

struct Delay {
    double t_start_s = 0.0;
    double duration_s = 0.0;

    double t_end_s() const { return t_start_s + duration_s; }
};

// Population reset marker (chirped reset pulses are not waveform-modeled).
struct ResetMarker {
    double t_s = 0.0;
};

using Element = std::variant<TwoColorPulse, Delay, ResetMarker>;

inline double element_start(const Element& e) {
    return std::visit([](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ResetMarker>) return x.t_s;
        else return x.t_start_s;
    }, e);
}

inline double element_end(const Element& e) {
    return std::visit([](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ResetMarker>) return x.t_s;
        else return x.t_end_s();
    }, e);
}

struct PulseSequence {
    std::vector<Element> elements;  // time-ordered, non-overlapping
    double beat_hz = 0.0;           // two-tone difference frequency

    double start_s() const { return elements.empty() ? 0.0 : element_start(elements.front()); }
    double end_s() const { return elements.empty() ? 0.0 : element_end(elements.back()); }
    double total_duration_s() const { return end_s() - start_s(); }

    const TwoColorPulse* readout() const {
        for (const auto& e : elements)
            if (const auto* p = std::get_if<TwoColorPulse>(&e); p && p->label == PulseLabel::readout) return p;
        return nullptr;
    }
};

struct ReadoutSpec {
    double duration_s = 50e-6;
    double area_cycles = 0.02;  // rotation 0.04*pi, well inside the weak-probe bound
};

struct Violation {
    std::size_t element_a = 0;
    std::size_t element_b = 0;
    std::string message;
};

inline std::vector<Violation> validate(const PulseSequence& seq) {
    std::vector<Violation> out;
    if (seq.elements.empty()) {
        out.push_back({0, 0, "empty sequence"});
        return out;
    }
    if (!(seq.beat_hz > 0.0)) out.push_back({0, 0, "beat frequency must be positive"});

    int readout_count = 0;
    for (std::size_t i = 0; i < seq.elements.size(); ++i) {
        const auto& e = seq.elements[i];
        if (const auto* p = std::get_if<TwoColorPulse>(&e)) {
            if (!(p->duration_s > 0.0)) out.push_back({i, i, "pulse duration must be positive"});
            if (p->rabi_hz < 0.0) out.push_back({i, i, "pulse amplitude must be non-negative"});
            if (p->label == PulseLabel::readout) {
                ++readout_count;
                // weak probe: rotation angle < pi/10, i.e. area < 1/20 cycle
                if (p->area_cycles() >= 0.05)
                    out.push_back({i, i, "readout pulse too strong for weak-probe condition (area >= 1/20 cycle)"});
            }
        } else if (const auto* d = std::get_if<Delay>(&e)) {
            if (d->duration_s < 0.0) out.push_back({i, i, "delay duration must be non-negative"});
        }
        if (i > 0) {
            const double prev_end = element_end(seq.elements[i - 1]);
            const double cur_start = element_start(e);
            if (cur_start < prev_end - 1e-15) {
                std::ostringstream os;
                os << "elements " << i - 1 << " and " << i << " overlap ("
                   << prev_end << " s > " << cur_start << " s)";
                out.push_back({i - 1, i, os.str()});
            }
        }
    }
    if (readout_count == 0) out.push_back({0, 0, "missing readout element"});
    if (readout_count > 1) out.push_back({0, 0, "multiple readout elements"});
    return out;
}

namespace detail {

inline void push_gap(std::vector<Element>& elems, double from_s, double to_s) {
    if (to_s > from_s + 1e-15) elems.push_back(Delay{from_s, to_s - from_s});
}

}  // namespace detail

// pi/2 (centered at 0) - tau - pi (centered at tau) - readout starting at 2 tau
inline PulseSequence build_two_pulse_echo(double tau_s, double pulse_len_s, double excite_phase_rad,
                                          double rephase_phase_rad, double beat_hz,
                                          const ReadoutSpec& readout = {}) {
    if (!(pulse_len_s > 0.0)) throw physics_error("build_two_pulse_echo: pulse length must be positive");
    if (!(tau_s > pulse_len_s))
        throw physics_error("build_two_pulse_echo: tau must exceed the pulse length");

    PulseSequence seq;
    seq.beat_hz = beat_hz;
    const TwoColorPulse excite{-0.5 * pulse_len_s, pulse_len_s, 1.0 / (4.0 * pulse_len_s), excite_phase_rad,
                               PulseLabel::excite};
    const TwoColorPulse rephase{tau_s - 0.5 * pulse_len_s, pulse_len_s, 1.0 / (2.0 * pulse_len_s),
                                rephase_phase_rad, PulseLabel::rephase};
    seq.elements.push_back(excite);
    detail::push_gap(seq.elements, excite.t_end_s(), rephase.t_start_s);
    seq.elements.push_back(rephase);
    detail::push_gap(seq.elements, rephase.t_end_s(), 2.0 * tau_s);
    seq.elements.push_back(TwoColorPulse{2.0 * tau_s, readout.duration_s,
                                         readout.area_cycles / readout.duration_s, 0.0, PulseLabel::readout});
    return seq;
}

// pi/2 (centered at 0) - [tau_dd/2 - pi - tau_dd/2]^n - readout starting at n tau_dd
inline PulseSequence build_cpmg(double tau_dd_s, int n, double pi_len_s, double excite_phase_rad,
                                double pi_phase_rad, double beat_hz, const ReadoutSpec& readout = {}) {
    if (n < 1) throw physics_error("build_cpmg: need at least one rephasing pulse");
    if (!(pi_len_s > 0.0)) throw physics_error("build_cpmg: pulse length must be positive");
    if (!(tau_dd_s > pi_len_s))
        throw physics_error("build_cpmg: consecutive pi pulses would overlap (tau_dd <= pi length)");

    PulseSequence seq;
    seq.beat_hz = beat_hz;
    const TwoColorPulse excite{-0.5 * pi_len_s, pi_len_s, 1.0 / (4.0 * pi_len_s), excite_phase_rad,
                               PulseLabel::excite};
    seq.elements.push_back(excite);
    double prev_end = excite.t_end_s();
    for (int k = 0; k < n; ++k) {
        const double center = (0.5 + k) * tau_dd_s;
        const TwoColorPulse pi_pulse{center - 0.5 * pi_len_s, pi_len_s, 1.0 / (2.0 * pi_len_s), pi_phase_rad,
                                     PulseLabel::rephase};
        detail::push_gap(seq.elements, prev_end, pi_pulse.t_start_s);
        seq.elements.push_back(pi_pulse);
        prev_end = pi_pulse.t_end_s();
    }
    detail::push_gap(seq.elements, prev_end, n * tau_dd_s);
    seq.elements.push_back(TwoColorPulse{n * tau_dd_s, readout.duration_s,
                                         readout.area_cycles / readout.duration_s, 0.0, PulseLabel::readout});
    return seq;
}

inline void append_reset(PulseSequence& seq) {
    seq.elements.push_back(ResetMarker{seq.end_s()});
}

// ---------------------------------------------------------------------------
// Flattened timeline and serialization

struct TimelineEvent {
    double t_s = 0.0;
    std::string kind;  // "pulse", "delay", "reset"
    std::vector<std::pair<std::string, double>> params;
};

struct Timeline {
    std::vector<TimelineEvent> events;
    double beat_hz = 0.0;
};

inline Timeline flatten(const PulseSequence& seq) {
    Timeline tl;
    tl.beat_hz = seq.beat_hz;
    for (const auto& e : seq.elements) {
        if (const auto* p = std::get_if<TwoColorPulse>(&e)) {
            tl.events.push_back({p->t_start_s,
                                 "pulse",
                                 {{"duration_s", p->duration_s},
                                  {"rabi_hz", p->rabi_hz},
                                  {"phase_rad", p->phase_rad},
                                  {"label", static_cast<double>(p->label)}}});
        } else if (const auto* d = std::get_if<Delay>(&e)) {
            tl.events.push_back({d->t_start_s, "delay", {{"duration_s", d->duration_s}}});
        } else if (const auto* r = std::get_if<ResetMarker>(&e)) {
            tl.events.push_back({r->t_s, "reset", {}});
        }
    }
    return tl;
}

namespace detail {

inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

}  // namespace detail

// One event per line: "time_s kind key=value ...", round-trip exact.
inline std::string serialize(const Timeline& tl) {
    std::ostringstream os;
    os << "# timeline v1 beat_hz=" << detail::format_double(tl.beat_hz) << "\n";
    for (const auto& ev : tl.events) {
        os << detail::format_double(ev.t_s) << " " << ev.kind;
        for (const auto& [k, v] : ev.params) os << " " << k << "=" << detail::format_double(v);
        os << "\n";
    }
    return os.str();
}

inline Timeline parse_timeline(const std::string& text) {
    Timeline tl;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("# timeline", 0) == 0) {
            const auto pos = line.find("beat_hz=");
            if (pos != std::string::npos) tl.beat_hz = std::stod(line.substr(pos + 8));
            continue;
        }
        if (line[0] == '#') continue;
        std::istringstream ls(line);
        TimelineEvent ev;
        std::string t_tok;
        if (!(ls >> t_tok >> ev.kind)) throw io_error("timeline parse: malformed line: " + line);
        ev.t_s = std::stod(t_tok);
        std::string kv;
        while (ls >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw io_error("timeline parse: malformed key=value: " + kv);
            ev.params.emplace_back(kv.substr(0, eq), std::stod(kv.substr(eq + 1)));
        }
        tl.events.push_back(std::move(ev));
    }
    return tl;
}

// ---------------------------------------------------------------------------
// Waveform export

struct Waveform {
    std::vector<double> tone_a;  // reference tone channel
    std::vector<double> tone_b;  // beat-shifted tone channel (carries the pulse phase)
    double sample_rate_hz = 0.0;
    double t0_s = 0.0;
};

// Rectangular-envelope two-tone samples at the given rate. Tone phases are
// functions of absolute time, so each tone is phase-continuous across pulse
// boundaries. Envelopes are normalized to the strongest pulse in the
// sequence. The reference tone is emitted at baseband (frequency 0) and the
// second tone at the beat frequency; readout pulses drive the second tone
// only.
inline Waveform export_waveform(const PulseSequence& seq, double sample_rate_hz) {
    if (!(sample_rate_hz > 0.0)) throw physics_error("export_waveform: sample rate must be positive");
    if (sample_rate_hz < 2.0 * seq.beat_hz)
        throw physics_error("export_waveform: sample rate violates Nyquist for the beat frequency");

    Waveform wf;
    wf.sample_rate_hz = sample_rate_hz;
    wf.t0_s = seq.start_s();
    if (seq.elements.empty()) return wf;

    const std::size_t n_samples =
        static_cast<std::size_t>(std::ceil(seq.total_duration_s() * sample_rate_hz - 1e-9));
    wf.tone_a.assign(n_samples, 0.0);
    wf.tone_b.assign(n_samples, 0.0);

    double max_rabi = 0.0;
    for (const auto& e : seq.elements)
        if (const auto* p = std::get_if<TwoColorPulse>(&e)) max_rabi = std::max(max_rabi, p->rabi_hz);
    if (max_rabi <= 0.0) return wf;

    for (const auto& e : seq.elements) {
        const auto* p = std::get_if<TwoColorPulse>(&e);
        if (!p || p->rabi_hz <= 0.0) continue;
        const double amp = p->rabi_hz / max_rabi;
        const auto first = static_cast<std::size_t>(std::ceil((p->t_start_s - wf.t0_s) * sample_rate_hz - 1e-9));
        const auto last = static_cast<std::size_t>(std::ceil((p->t_end_s() - wf.t0_s) * sample_rate_hz - 1e-9));
        for (std::size_t i = first; i < std::min(last, n_samples); ++i) {
            const double t = wf.t0_s + static_cast<double>(i) / sample_rate_hz;
            if (p->label != PulseLabel::readout) wf.tone_a[i] = amp;
            wf.tone_b[i] = amp * std::cos(two_pi * seq.beat_hz * t + p->phase_rad);
        }
    }
    return wf;
}

// FNV-1a over the serialized timeline; used as the sequence digest in results.
inline std::uint64_t digest(const PulseSequence& seq) {
    const std::string text = serialize(flatten(seq));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace optospin::sequence
