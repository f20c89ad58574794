#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <variant>

#include "optospin/fft.hpp"
#include "optospin/sequence.hpp"

using namespace optospin;
using namespace optospin::sequence;
using Catch::Approx;

TEST_CASE("two-pulse echo places the rephasing pulse at tau and readout at 2 tau", "[sequence]") {
    const auto seq = build_two_pulse_echo(200e-6, 100e-6, 0.0, 0.0, 29.34e6);
    REQUIRE(validate(seq).empty());

    const auto* excite = std::get_if<TwoColorPulse>(&seq.elements.front());
    REQUIRE(excite != nullptr);
    REQUIRE(excite->t_center_s() == Approx(0.0).margin(1e-15));
    REQUIRE(excite->area_cycles() == Approx(0.25));

    const TwoColorPulse* rephase = nullptr;
    for (const auto& e : seq.elements)
        if (const auto* p = std::get_if<TwoColorPulse>(&e); p && p->label == PulseLabel::rephase) rephase = p;
    REQUIRE(rephase != nullptr);
    REQUIRE(rephase->t_center_s() == Approx(200e-6));
    REQUIRE(rephase->area_cycles() == Approx(0.5));
    REQUIRE(rephase->rabi_hz == Approx(5000.0));  // 100 us pi pulse

    REQUIRE(seq.readout() != nullptr);
    REQUIRE(seq.readout()->t_start_s == Approx(400e-6));
}

TEST_CASE("builder phases are recorded verbatim", "[sequence]") {
    const auto seq = build_two_pulse_echo(200e-6, 100e-6, 0.7, 1.9, 29.34e6);
    const auto* excite = std::get_if<TwoColorPulse>(&seq.elements.front());
    REQUIRE(excite->phase_rad == 0.7);
    for (const auto& e : seq.elements)
        if (const auto* p = std::get_if<TwoColorPulse>(&e); p && p->label == PulseLabel::rephase)
            REQUIRE(p->phase_rad == 1.9);
    REQUIRE(validate(seq).empty());
}

TEST_CASE("tau not exceeding the pulse length is rejected", "[sequence]") {
    REQUIRE_THROWS_AS(build_two_pulse_echo(100e-6, 100e-6, 0.0, 0.0, 29.34e6), physics_error);
    REQUIRE_THROWS_AS(build_two_pulse_echo(50e-6, 100e-6, 0.0, 0.0, 29.34e6), physics_error);
}

TEST_CASE("pulse train covers n pi pulses with readout at n tau_dd", "[sequence]") {
    const auto seq = build_cpmg(300e-6, 10, 20e-6, M_PI / 2.0, 0.0, 29.34e6);
    REQUIRE(validate(seq).empty());
    int n_pi = 0;
    for (const auto& e : seq.elements) {
        if (const auto* p = std::get_if<TwoColorPulse>(&e); p && p->label == PulseLabel::rephase) {
            REQUIRE(p->t_center_s() == Approx((0.5 + n_pi) * 300e-6));
            REQUIRE(p->rabi_hz == Approx(25000.0));  // 20 us pi pulse
            REQUIRE(p->area_cycles() == Approx(0.5));
            ++n_pi;
        }
    }
    REQUIRE(n_pi == 10);
    REQUIRE(seq.readout()->t_start_s == Approx(3.0e-3));
}

TEST_CASE("single-pulse train reduces to a two-pulse echo", "[sequence]") {
    const auto a = build_cpmg(400e-6, 1, 100e-6, 0.3, 0.8, 29.34e6);
    const auto b = build_two_pulse_echo(200e-6, 100e-6, 0.3, 0.8, 29.34e6);
    REQUIRE(a.elements.size() == b.elements.size());
    for (std::size_t i = 0; i < a.elements.size(); ++i) {
        REQUIRE(element_start(a.elements[i]) == Approx(element_start(b.elements[i])).margin(1e-15));
        REQUIRE(element_end(a.elements[i]) == Approx(element_end(b.elements[i])).margin(1e-15));
        const auto* pa = std::get_if<TwoColorPulse>(&a.elements[i]);
        const auto* pb = std::get_if<TwoColorPulse>(&b.elements[i]);
        REQUIRE((pa == nullptr) == (pb == nullptr));
        if (pa != nullptr) {
            REQUIRE(pa->rabi_hz == Approx(pb->rabi_hz));
            REQUIRE(pa->phase_rad == Approx(pb->phase_rad));
            REQUIRE(pa->label == pb->label);
        }
    }
}

TEST_CASE("overlapping pi pulses are rejected", "[sequence]") {
    REQUIRE_THROWS_AS(build_cpmg(15e-6, 4, 20e-6, 0.0, 0.0, 29.34e6), physics_error);
}

TEST_CASE("validation flags duplicated readout", "[sequence]") {
    auto seq = build_two_pulse_echo(200e-6, 100e-6, 0.0, 0.0, 29.34e6);
    seq.elements.push_back(TwoColorPulse{500e-6, 50e-6, 100.0, 0.0, PulseLabel::readout});
    const auto violations = validate(seq);
    REQUIRE(!violations.empty());
    REQUIRE(std::any_of(violations.begin(), violations.end(),
                        [](const Violation& v) { return v.message.find("multiple readout") != std::string::npos; }));
}

TEST_CASE("validation reports overlapping elements with their indices", "[sequence]") {
    PulseSequence seq;
    seq.beat_hz = 1e6;
    seq.elements.push_back(TwoColorPulse{0.0, 100e-6, 2500.0, 0.0, PulseLabel::excite});
    seq.elements.push_back(Delay{50e-6, 100e-6});  // starts inside the pulse
    seq.elements.push_back(TwoColorPulse{200e-6, 50e-6, 100.0, 0.0, PulseLabel::readout});
    const auto violations = validate(seq);
    REQUIRE(!violations.empty());
    bool found = false;
    for (const auto& v : violations)
        if (v.message.find("overlap") != std::string::npos) {
            found = true;
            REQUIRE(v.element_a == 0);
            REQUIRE(v.element_b == 1);
        }
    REQUIRE(found);
}

TEST_CASE("validation enforces the weak-probe readout", "[sequence]") {
    auto seq = build_two_pulse_echo(200e-6, 100e-6, 0.0, 0.0, 29.34e6);
    for (auto& e : seq.elements)
        if (auto* p = std::get_if<TwoColorPulse>(&e); p && p->label == PulseLabel::readout)
            p->rabi_hz = 10.0 / p->duration_s;  // far beyond pi/10 rotation
    const auto violations = validate(seq);
    REQUIRE(!violations.empty());
    REQUIRE(violations.front().message.find("weak-probe") != std::string::npos);
}

TEST_CASE("empty sequence exports an empty waveform", "[sequence]") {
    PulseSequence seq;
    seq.beat_hz = 1e6;
    const auto wf = export_waveform(seq, 625e6);
    REQUIRE(wf.tone_a.empty());
    REQUIRE(wf.tone_b.empty());
}

TEST_CASE("a 100 us pulse at 625 MS/s spans 62500 samples", "[sequence]") {
    PulseSequence seq;
    seq.beat_hz = 29.34e6;
    seq.elements.push_back(TwoColorPulse{0.0, 100e-6, 2500.0, 0.0, PulseLabel::excite});
    const auto wf = export_waveform(seq, 625e6);
    REQUIRE(wf.tone_a.size() == 62500);
    REQUIRE(wf.tone_b.size() == 62500);
}

TEST_CASE("waveform export rejects Nyquist violations", "[sequence]") {
    PulseSequence seq;
    seq.beat_hz = 29.34e6;
    seq.elements.push_back(TwoColorPulse{0.0, 100e-6, 2500.0, 0.0, PulseLabel::excite});
    REQUIRE_THROWS_AS(export_waveform(seq, 40e6), physics_error);
}

TEST_CASE("exported two-tone spectrum peaks at the tone offsets", "[sequence]") {
    PulseSequence seq;
    seq.beat_hz = 1e6;
    seq.elements.push_back(TwoColorPulse{0.0, 100e-6, 2500.0, 0.4, PulseLabel::excite});
    const double rate = 5e6;
    const auto wf = export_waveform(seq, rate);

    std::vector<double> sum(wf.tone_a.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = wf.tone_a[i] + wf.tone_b[i];
    const auto spectrum = fft_real(sum);
    const double bin_hz = rate / static_cast<double>(sum.size());

    // strongest non-DC bin must sit within one bin of the beat
    std::size_t best = 1;
    for (std::size_t k = 2; k + 1 < spectrum.size(); ++k)
        if (std::abs(spectrum[k]) > std::abs(spectrum[best])) best = k;
    REQUIRE(std::abs(static_cast<double>(best) * bin_hz - seq.beat_hz) <= bin_hz);
    // DC (the baseband reference tone) dominates the whole spectrum
    REQUIRE(std::abs(spectrum[0]) > std::abs(spectrum[best]));
}

TEST_CASE("tone phase is continuous across pulse boundaries", "[sequence]") {
    // two adjacent pulses; the second starts where the first ends
    PulseSequence seq;
    seq.beat_hz = 1e6;
    seq.elements.push_back(TwoColorPulse{0.0, 20e-6, 12500.0, 0.0, PulseLabel::excite});
    seq.elements.push_back(TwoColorPulse{20e-6, 20e-6, 12500.0, 0.0, PulseLabel::rephase});
    const double rate = 50e6;
    const auto wf = export_waveform(seq, rate);
    // compare against a single continuous tone
    for (std::size_t i = 0; i < wf.tone_b.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        REQUIRE(wf.tone_b[i] == Approx(std::cos(2.0 * M_PI * seq.beat_hz * t)).margin(1e-9));
    }
}

TEST_CASE("timeline serialization round-trips exactly", "[sequence]") {
    auto seq = build_cpmg(300e-6, 3, 20e-6, M_PI / 2.0, 0.0, 29.34e6);
    append_reset(seq);
    const auto tl = flatten(seq);
    const auto text = serialize(tl);
    const auto back = parse_timeline(text);

    REQUIRE(back.beat_hz == tl.beat_hz);
    REQUIRE(back.events.size() == tl.events.size());
    for (std::size_t i = 0; i < tl.events.size(); ++i) {
        REQUIRE(back.events[i].t_s == tl.events[i].t_s);
        REQUIRE(back.events[i].kind == tl.events[i].kind);
        REQUIRE(back.events[i].params == tl.events[i].params);
    }
    // serialization is stable under a second pass
    REQUIRE(serialize(back) == text);
}

TEST_CASE("pulse areas are exact for all builders", "[sequence]") {
    for (const double len : {20e-6, 50e-6, 100e-6}) {
        const auto echo = build_two_pulse_echo(5.0 * len, len, 0.0, 0.0, 29.34e6);
        const auto train = build_cpmg(4.0 * len, 7, len, 0.0, 0.0, 29.34e6);
        for (const auto& s : {echo, train}) {
            for (const auto& e : s.elements) {
                const auto* p = std::get_if<TwoColorPulse>(&e);
                if (p == nullptr) continue;
                if (p->label == PulseLabel::excite) REQUIRE(p->area_cycles() == Approx(0.25).margin(1e-15));
                if (p->label == PulseLabel::rephase) REQUIRE(p->area_cycles() == Approx(0.5).margin(1e-15));
            }
        }
    }
}
