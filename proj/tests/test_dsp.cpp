#include <doctest.h>

#include <cmath>
#include <numbers>

#include "clickdet/dsp.hpp"
#include "clickdet/rng.hpp"

using namespace clickdet;

namespace {

Waveform sine(double freq_hz, double duration_s, double amp = 1.0) {
    Waveform w;
    const auto n = static_cast<std::size_t>(duration_s * kSampleRateHz);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        w.samples[i] =
            amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / kSampleRateHz);
    return w;
}

// Peak amplitude of the final stretch, after the transient has settled.
double tail_amplitude(const Waveform& w, double tail_s) {
    const auto n = w.samples.size();
    const auto start = n - static_cast<std::size_t>(tail_s * kSampleRateHz);
    double peak = 0.0;
    for (std::size_t i = start; i < n; ++i)
        peak = std::max(peak, std::fabs(w.samples[i]));
    return peak;
}

}  // namespace

TEST_CASE("notch cascade layout and attenuation") {
    const auto c = design_notch_cascade(48000, 60.0, 3, 30.0);
    CHECK(c.sections.size() == 4);
    CHECK(c.stable());
    for (const double f : {60.0, 120.0, 180.0, 240.0})
        CHECK(magnitude_response(c, f, 48000) <= -30.0);
    CHECK(std::fabs(magnitude_response(c, 1000.0, 48000)) <= 0.5);

    const auto single = design_notch_cascade(48000, 60.0, 0, 30.0);
    CHECK(single.sections.size() == 1);

    CHECK_THROWS_AS(design_notch_cascade(48000, 60.0, -1, 30.0), std::invalid_argument);
    CHECK_THROWS_AS(design_notch_cascade(48000, 6000.0, 3, 30.0), std::invalid_argument);
    CHECK_THROWS_AS(design_notch_cascade(48000, 60.0, 3, 0.0), std::invalid_argument);
}

TEST_CASE("bandpass design hits the Butterworth edge response") {
    const auto c = design_bandpass(48000, 300.0, 5000.0, 4);
    CHECK(c.sections.size() == 2);
    CHECK(c.stable());
    CHECK(magnitude_response(c, 300.0, 48000) == doctest::Approx(-3.01).epsilon(0.34));
    CHECK(magnitude_response(c, 5000.0, 48000) == doctest::Approx(-3.01).epsilon(0.34));
    CHECK(magnitude_response(c, 0.0, 48000) <= -40.0);
    CHECK(magnitude_response(c, 24000.0, 48000) <= -40.0);
    CHECK(magnitude_response(c, 1500.0, 48000) >= -1.0);

    CHECK_THROWS_AS(design_bandpass(48000, 5000.0, 300.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(design_bandpass(48000, 300.0, 25000.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(design_bandpass(48000, 300.0, 5000.0, 3), std::invalid_argument);
}

TEST_CASE("magnitude_response of the empty cascade is 0 dB") {
    FilterCascade identity;
    CHECK(magnitude_response(identity, 0.0, 48000) == doctest::Approx(0.0));
    CHECK(magnitude_response(identity, 1234.5, 48000) == doctest::Approx(0.0));
    CHECK(magnitude_response(identity, 24000.0, 48000) == doctest::Approx(0.0));
}

TEST_CASE("apply_filter identity and steady-state amplitudes") {
    FilterCascade identity;
    const auto w = sine(440.0, 0.1);
    const auto y = apply_filter(identity, w);
    CHECK(y.samples == w.samples);

    // 60 Hz through the notch cascade: squashed to at most -30 dB
    const auto notch = design_notch_cascade(48000, 60.0, 3, 30.0);
    const auto hum = apply_filter(notch, sine(60.0, 3.0));
    CHECK(tail_amplitude(hum, 1.0) <= 0.032);

    // 1 kHz through the full chain: essentially unity
    const auto tone = preprocess(sine(1000.0, 3.0));
    const double amp = tail_amplitude(tone, 1.0);
    CHECK(amp >= 0.88);
    CHECK(amp <= 1.12);
}

TEST_CASE("preprocess rejects DC and keeps in-band clicks") {
    Waveform zero;
    zero.samples.assign(48000, 0.0);
    const auto out = preprocess(zero);
    for (const double s : out.samples) CHECK(s == 0.0);

    Waveform dc;
    dc.samples.assign(2 * 48000, 1.0);
    const auto dout = preprocess(dc);
    double acc = 0.0;
    for (std::size_t i = dout.samples.size() - 24000; i < dout.samples.size(); ++i)
        acc += dout.samples[i] * dout.samples[i];
    CHECK(std::sqrt(acc / 24000.0) <= 1e-3);

    // 2 kHz burst: output peak within +-3 dB of the input peak
    Waveform burst;
    burst.samples.assign(48000, 0.0);
    for (int i = 0; i < 960; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        const double env = std::sin(std::numbers::pi * i / 960.0);
        burst.samples[24000 + i] = env * std::sin(2.0 * std::numbers::pi * 2000.0 * t);
    }
    const double in_peak = peak_abs(burst.samples);
    const double out_peak = peak_abs(preprocess(burst).samples);
    CHECK(20.0 * std::log10(out_peak / in_peak) >= -3.0);
    CHECK(20.0 * std::log10(out_peak / in_peak) <= 3.0);
}

TEST_CASE("full-chain passband ripple within +-1 dB over [500, 4000] Hz") {
    const auto& chain = preprocess_chain();
    for (double f = 500.0; f <= 4000.0; f += 25.0) {
        const double db = magnitude_response(chain, f, 48000);
        CHECK(std::fabs(db) <= 1.0);
    }
}

TEST_CASE("filtering is linear to 1e-9 relative") {
    Rng rng(11);
    Waveform w;
    w.samples.resize(9600);
    for (auto& s : w.samples) s = rng.normal();
    const double alpha = 3.7;
    Waveform scaled = w;
    for (auto& s : scaled.samples) s *= alpha;

    const auto ya = preprocess(scaled);
    const auto yb = preprocess(w);
    const double scale = std::max(peak_abs(ya.samples), 1e-30);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < ya.samples.size(); ++i)
        max_rel =
            std::max(max_rel, std::fabs(ya.samples[i] - alpha * yb.samples[i]) / scale);
    CHECK(max_rel <= 1e-9);
}

TEST_CASE("designed sections are stable and causal") {
    for (const auto* c : {&preprocess_notch(), &preprocess_bandpass()})
        for (const auto& s : c->sections) CHECK(section_stable(s));

    // causality: truncating the input does not change earlier outputs
    Rng rng(12);
    Waveform w;
    w.samples.resize(4800);
    for (auto& s : w.samples) s = rng.normal();
    const auto full = preprocess(w);
    Waveform head = w;
    head.samples.resize(2400);
    const auto part = preprocess(head);
    for (std::size_t i = 0; i < part.samples.size(); ++i)
        CHECK(part.samples[i] == full.samples[i]);
}

TEST_CASE("analytic and measured responses agree in the passband") {
    const auto& chain = preprocess_chain();
    for (const double f : {500.0, 1000.0, 2000.0, 4000.0}) {
        const double analytic_db = magnitude_response(chain, f, 48000);
        const auto y = apply_filter(chain, sine(f, 3.0));
        const double measured_db = 20.0 * std::log10(tail_amplitude(y, 1.0));
        CHECK(std::fabs(analytic_db - measured_db) <= 1.0);
    }
}
