#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/dsp.hpp"
#include "clickdet/rng.hpp"
#include "clickdet/segment.hpp"

namespace clickdet {

// A participant's click signature: a damped multi-mode resonance. Mode
// frequencies span the 400 Hz - 5.2 kHz range observed across subjects.
struct ResonantMode {
    double freq_hz = 600.0;
    double decay_tau_ms = 4.0;
    double relative_amp = 1.0;
};

struct ParticipantProfile {
    std::string id;
    std::vector<ResonantMode> modes;  // 1-3, modes[0] is the primary
    double click_amp = 1.0;
    double noise_floor_rms = 0.01;
    std::uint64_t rng_seed = 0;

    double primary_freq_hz() const { return modes.at(0).freq_hz; }
};

constexpr double kClickDurationS = 0.025;  // energy confined to <= 25 ms
constexpr int kClickSamples = static_cast<int>(kClickDurationS * kSampleRateHz);

// Deterministic profile from a seed. Primary modes are drawn from three
// bands (low / mid / high) so a small pool of participants reproduces the
// observed spread from ~500 Hz resonances up to ~5 kHz.
inline ParticipantProfile make_profile(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "profile"));
    ParticipantProfile p;
    p.id = "p" + std::to_string(seed);
    p.rng_seed = seed;

    const double band = rng.uniform();
    double primary;
    if (band < 1.0 / 3.0)
        primary = rng.uniform(400.0, 1000.0);
    else if (band < 2.0 / 3.0)
        primary = rng.uniform(1000.0, 3000.0);
    else
        primary = rng.uniform(3000.0, 5200.0);

    const int n_modes = static_cast<int>(rng.uniform_int(1, 3));
    p.modes.push_back({primary, rng.uniform(2.0, 8.0), 1.0});
    for (int m = 1; m < n_modes; ++m)
        p.modes.push_back({rng.uniform(400.0, 5200.0), rng.uniform(2.0, 8.0),
                           rng.uniform(0.2, 0.8)});

    p.click_amp = 1.0;
    // 26-38 dB above floor: the 2 ms envelope of a worst-case click (fast
    // decay, -3 dB jitter) still clears a 5x noise-floor detection threshold
    p.noise_floor_rms = p.click_amp / std::pow(10.0, rng.uniform(26.0, 38.0) / 20.0);
    return p;
}

// One click: damped sinusoids with random phases, peak-normalized to
// click_amp with +-3 dB jitter, faded to zero by 25 ms. t0_s shifts the
// onset inside the returned buffer.
inline Waveform synth_click(const ParticipantProfile& p, double t0_s, Rng& rng) {
    if (p.modes.empty()) throw std::invalid_argument("synth_click: profile has no modes");
    const int offset = static_cast<int>(std::llround(t0_s * kSampleRateHz));
    if (offset < 0) throw std::invalid_argument("synth_click: negative onset");

    std::vector<double> phases;
    phases.reserve(p.modes.size());
    for (std::size_t m = 0; m < p.modes.size(); ++m)
        phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    const double jitter_db = rng.uniform(-3.0, 3.0);

    Waveform w;
    w.samples.assign(static_cast<std::size_t>(offset) + kClickSamples, 0.0);

    const double fade_start_s = 0.020;
    double peak = 0.0;
    for (int n = 0; n < kClickSamples; ++n) {
        const double t = static_cast<double>(n) / kSampleRateHz;
        double v = 0.0;
        for (std::size_t m = 0; m < p.modes.size(); ++m) {
            const auto& mode = p.modes[m];
            v += mode.relative_amp * std::exp(-t / (mode.decay_tau_ms * 1e-3)) *
                 std::sin(2.0 * std::numbers::pi * mode.freq_hz * t + phases[m]);
        }
        if (t > fade_start_s) {
            const double u = (t - fade_start_s) / (kClickDurationS - fade_start_s);
            v *= 0.5 * (1.0 + std::cos(std::numbers::pi * u));
        }
        w.samples[offset + n] = v;
        peak = std::max(peak, std::fabs(v));
    }
    if (peak > 0.0) {
        const double scale = p.click_amp * std::pow(10.0, jitter_db / 20.0) / peak;
        for (int n = 0; n < kClickSamples; ++n) w.samples[offset + n] *= scale;
    }
    return w;
}

namespace synth_detail {

inline void add_at(std::vector<double>& dst, const std::vector<double>& src,
                   std::size_t at) {
    for (std::size_t i = 0; i < src.size() && at + i < dst.size(); ++i)
        dst[at + i] += src[i];
}

inline std::vector<double> white_noise(std::size_t n, double rms_level, Rng& rng) {
    std::vector<double> v(n);
    for (auto& s : v) s = rms_level * rng.normal();
    return v;
}

inline const FilterCascade& speech_band() {
    static const FilterCascade c = design_bandpass(kSampleRateHz, 300.0, 4000.0, 4);
    return c;
}

inline const FilterCascade& low_band() {
    static const FilterCascade c = design_bandpass(kSampleRateHz, 60.0, 250.0, 4);
    return c;
}

inline std::vector<double> bandlimited_noise(std::size_t n, const FilterCascade& band,
                                             Rng& rng) {
    Waveform w;
    w.samples = white_noise(n, 1.0, rng);
    w = apply_filter(band, w);
    return std::move(w.samples);
}

inline void scale_to_rms(std::vector<double>& v, double target_rms) {
    const double r = rms(v);
    if (r <= 0.0) return;
    const double g = target_rms / r;
    for (auto& s : v) s *= g;
}

// Band-limited noise with slow syllabic amplitude modulation.
inline std::vector<double> speech_like(std::size_t n, double target_rms, Rng& rng) {
    auto v = bandlimited_noise(n, speech_band(), rng);
    const double f_am = rng.uniform(3.0, 5.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        v[i] *= 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * f_am * t + phase));
    }
    scale_to_rms(v, target_rms);
    return v;
}

// Periodic low-band bursts at mastication rate.
inline std::vector<double> chewing_like(std::size_t n, double target_rms, Rng& rng) {
    std::vector<double> v(n, 0.0);
    const double rate_hz = rng.uniform(1.0, 2.0);
    const double period_s = 1.0 / rate_hz;
    double t0 = rng.uniform(0.0, 0.3);
    while (t0 * kSampleRateHz < static_cast<double>(n)) {
        const double burst_s = rng.uniform(0.08, 0.15);
        const auto len = static_cast<std::size_t>(burst_s * kSampleRateHz);
        auto burst = bandlimited_noise(len, low_band(), rng);
        for (std::size_t i = 0; i < len; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(len);
            burst[i] *= std::sin(std::numbers::pi * u);  // smooth on/off
        }
        add_at(v, burst, static_cast<std::size_t>(t0 * kSampleRateHz));
        t0 += period_s * rng.uniform(0.85, 1.15);
    }
    scale_to_rms(v, target_rms);
    return v;
}

// Sub-20 Hz drift plus a few broad low-frequency bumps.
inline std::vector<double> motion_like(std::size_t n, double target_rms, Rng& rng) {
    std::vector<double> v(n, 0.0);
    const int n_drift = static_cast<int>(rng.uniform_int(2, 3));
    for (int d = 0; d < n_drift; ++d) {
        const double f = rng.uniform(0.3, 20.0);
        const double a = rng.uniform(0.3, 1.0);
        const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / kSampleRateHz;
            v[i] += a * std::sin(2.0 * std::numbers::pi * f * t + ph);
        }
    }
    const int n_bumps = static_cast<int>(rng.uniform_int(1, 3));
    for (int b = 0; b < n_bumps; ++b) {
        const double bump_s = rng.uniform(0.05, 0.12);
        const auto len = static_cast<std::size_t>(bump_s * kSampleRateHz);
        const double f = rng.uniform(30.0, 80.0);
        const double a = rng.uniform(1.0, 3.0);
        std::vector<double> bump(len);
        for (std::size_t i = 0; i < len; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(len);
            const double t = static_cast<double>(i) / kSampleRateHz;
            bump[i] = a * std::sin(std::numbers::pi * u) *
                      std::sin(2.0 * std::numbers::pi * f * t);
        }
        const auto max_at = n > len ? n - len : 0;
        add_at(v, bump, rng.uniform_index(max_at + 1));
    }
    scale_to_rms(v, target_rms);
    return v;
}

inline std::vector<double> babble_like(std::size_t n, double target_rms, Rng& rng) {
    std::vector<double> v(n, 0.0);
    for (int s = 0; s < 4; ++s) {
        const auto stream = speech_like(n, 1.0, rng);
        for (std::size_t i = 0; i < n; ++i) v[i] += stream[i];
    }
    scale_to_rms(v, target_rms);
    return v;
}

// Harmonic tone stack with a slow envelope.
inline std::vector<double> music_like(std::size_t n, double target_rms, Rng& rng) {
    std::vector<double> v(n, 0.0);
    const double f0 = rng.uniform(200.0, 800.0);
    const double env_f = rng.uniform(0.2, 1.0);
    const double env_ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> phases(5);
    for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        double s = 0.0;
        for (int k = 1; k <= 5; ++k)
            s += std::sin(2.0 * std::numbers::pi * f0 * k * t + phases[k - 1]) / k;
        const double env = std::sin(std::numbers::pi * env_f * t + env_ph);
        v[i] = s * env * env;
    }
    scale_to_rms(v, target_rms);
    return v;
}

// Place one or two clicks starting at onset_s. A double click repeats the
// same ring at 0.8-0.95x amplitude (same teeth pair, slightly softer second
// contact), so the first click of an event is always the dominant one.
inline void place_event(std::vector<double>& dst, const ParticipantProfile& p,
                        PatternClass cls, double onset_s, Rng& rng,
                        double* gap_s_out = nullptr) {
    Rng click_rng(derive_seed(rng.next_u64(), "click"));
    const auto click1 = synth_click(p, 0.0, click_rng);
    const auto at1 = static_cast<std::size_t>(std::llround(onset_s * kSampleRateHz));
    add_at(dst, click1.samples, at1);
    if (cls == PatternClass::Pattern2) {
        const double gap_s = rng.uniform(0.08, 0.4);
        if (gap_s_out) *gap_s_out = gap_s;
        auto click2 = click1;
        const double scale = rng.uniform(0.8, 0.95);
        for (auto& s : click2.samples) s *= scale;
        add_at(dst, click2.samples,
               at1 + static_cast<std::size_t>(std::llround(gap_s * kSampleRateHz)));
    } else if (gap_s_out) {
        *gap_s_out = 0.0;
    }
}

}  // namespace synth_detail

// One labeled 1 s segment drawn from the profile.
inline Segment synth_segment(const ParticipantProfile& p, Label label, Rng& rng) {
    using namespace synth_detail;
    const std::size_t n = kSegmentSamples;
    Segment seg;
    seg.label = label;
    seg.participant_id = p.id;
    seg.wave.samples = white_noise(n, p.noise_floor_rms, rng);

    auto loud = [&](double lo_db, double hi_db) {
        return p.noise_floor_rms * std::pow(10.0, rng.uniform(lo_db, hi_db) / 20.0);
    };

    if (label.cls != PatternClass::NoPattern) {
        const double onset_s = 0.25 + rng.uniform(-0.05, 0.05);
        place_event(seg.wave.samples, p, label.cls, onset_s, rng);
        return seg;
    }

    switch (label.kind) {
        case NoPatternKind::Silence:
            break;
        case NoPatternKind::Speech: {
            const auto s = speech_like(n, loud(10.0, 20.0), rng);
            for (std::size_t i = 0; i < n; ++i) seg.wave.samples[i] += s[i];
            break;
        }
        case NoPatternKind::Chewing: {
            const auto s = chewing_like(n, loud(15.0, 25.0), rng);
            for (std::size_t i = 0; i < n; ++i) seg.wave.samples[i] += s[i];
            break;
        }
        case NoPatternKind::Motion: {
            const auto s = motion_like(n, loud(20.0, 30.0), rng);
            for (std::size_t i = 0; i < n; ++i) seg.wave.samples[i] += s[i];
            break;
        }
        case NoPatternKind::Babble: {
            const auto s = babble_like(n, loud(10.0, 20.0), rng);
            for (std::size_t i = 0; i < n; ++i) seg.wave.samples[i] += s[i];
            break;
        }
        case NoPatternKind::Music: {
            const auto s = music_like(n, loud(10.0, 20.0), rng);
            for (std::size_t i = 0; i < n; ++i) seg.wave.samples[i] += s[i];
            break;
        }
    }
    return seg;
}

// Exact event times of a protocol session.
struct SessionGroundTruth {
    std::vector<double> event_onsets_s;   // sorted, first-click onsets
    std::vector<Label> event_labels;
    std::vector<double> event_gaps_s;     // inter-click gap, 0 for single clicks
};

// Continuous protocol recording: n_events events at onsets spaced uniformly
// in [5, 8] s over the participant's noise floor.
inline std::pair<Waveform, SessionGroundTruth> synth_session(
    const ParticipantProfile& p, int n_events, Label label, Rng& rng) {
    using namespace synth_detail;
    if (n_events < 1) throw std::invalid_argument("synth_session: n_events must be >= 1");
    if (label.cls == PatternClass::NoPattern)
        throw std::invalid_argument("synth_session: sessions carry pattern events");

    std::vector<double> onsets(n_events);
    double t = rng.uniform(2.0, 3.0);
    for (int e = 0; e < n_events; ++e) {
        // sample-align onsets so ground truth is exact
        onsets[e] = std::llround(t * kSampleRateHz) / static_cast<double>(kSampleRateHz);
        t += rng.uniform(5.0, 8.0);
    }
    const double total_s = onsets.back() + 2.0;

    Waveform w;
    w.samples = white_noise(static_cast<std::size_t>(total_s * kSampleRateHz),
                            p.noise_floor_rms, rng);

    SessionGroundTruth gt;
    for (int e = 0; e < n_events; ++e) {
        double gap = 0.0;
        place_event(w.samples, p, label.cls, onsets[e], rng, &gap);
        gt.event_onsets_s.push_back(onsets[e]);
        gt.event_labels.push_back(label);
        gt.event_gaps_s.push_back(gap);
    }
    return {std::move(w), std::move(gt)};
}

}  // namespace clickdet
