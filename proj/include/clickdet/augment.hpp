#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "clickdet/rng.hpp"
#include "clickdet/segment.hpp"

namespace clickdet {

// Training-time corruption: gain, circular shift, additive noise at a target
// SNR. Ranges follow the characterized -23..+23 dB noise-floor span.
struct AugmentConfig {
    double gain_db_lo = -6.0, gain_db_hi = 6.0;
    double shift_lo_s = -0.2, shift_hi_s = 0.2;
    double snr_db_lo = -23.0, snr_db_hi = 23.0;
    double apply_prob = 0.7;

    void validate() const {
        if (gain_db_lo > gain_db_hi || shift_lo_s > shift_hi_s || snr_db_lo > snr_db_hi)
            throw std::invalid_argument("AugmentConfig: ranges must be ordered");
        if (apply_prob < 0.0 || apply_prob > 1.0)
            throw std::invalid_argument("AugmentConfig: apply_prob outside [0, 1]");
    }
};

struct NoisePool {
    struct Entry {
        Waveform wave;  // exactly one segment long
        NoPatternKind kind = NoPatternKind::Babble;
    };
    std::vector<Entry> entries;

    void add(Waveform w, NoPatternKind kind) {
        if (w.samples.size() != static_cast<std::size_t>(kSegmentSamples))
            throw std::invalid_argument("NoisePool: entries must be exactly 1 s");
        entries.push_back({std::move(w), kind});
    }
    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

// Measured SNR of a signal-plus-noise segment against an equal-length
// noise-only segment: 10 log10((P_y - P_n)/P_n).
inline double snr_db(const Waveform& signal_plus_noise, const Waveform& noise) {
    if (signal_plus_noise.samples.size() != noise.samples.size())
        throw std::invalid_argument("snr_db: segment lengths must match");
    const double py = mean_power(signal_plus_noise.samples);
    const double pn = mean_power(noise.samples);
    if (!(py > pn))
        throw std::invalid_argument("snr_db: signal power does not exceed noise power");
    return 10.0 * std::log10((py - pn) / pn);
}

inline Waveform apply_gain(const Waveform& w, double gain_db) {
    const double g = std::pow(10.0, gain_db / 20.0);
    Waveform out = w;
    for (double& s : out.samples) s *= g;
    return out;
}

// output[i] = input[(i - n) mod length]; samples shifted off the right
// re-enter from the left.
inline Waveform circular_shift(const Waveform& w, std::int64_t n_samples) {
    const std::int64_t len = static_cast<std::int64_t>(w.samples.size());
    if (len == 0) return w;
    if (std::llabs(n_samples) >= len && std::llabs(n_samples) != len)
        throw std::invalid_argument("circular_shift: |shift| must be < length");
    Waveform out = w;
    const std::int64_t n = ((n_samples % len) + len) % len;
    for (std::int64_t i = 0; i < len; ++i)
        out.samples[i] = w.samples[(i - n + len) % len];
    return out;
}

// clean + g * noise with g chosen so that P_clean / P_{g noise} hits the
// target exactly. Coincides with the measured (P_y - P_n)/P_n definition when
// clean and noise are uncorrelated.
inline Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                           double target_snr_db) {
    if (clean.samples.size() != noise.samples.size())
        throw std::invalid_argument("mix_at_snr: lengths must match");
    const double p_clean = mean_power(clean.samples);
    const double p_noise = mean_power(noise.samples);
    if (p_clean <= 0.0 || p_noise <= 0.0)
        throw std::invalid_argument("mix_at_snr: both inputs must be non-silent");
    const double g = std::sqrt(p_clean / (p_noise * std::pow(10.0, target_snr_db / 10.0)));
    Waveform out = clean;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] += g * noise.samples[i];
    return out;
}

// With probability apply_prob: gain, then circular shift, then noise mix, all
// parameters drawn uniformly from the configured ranges. Label and
// participant are never touched.
inline Segment augment(const Segment& seg, const AugmentConfig& cfg,
                       const NoisePool& pool, Rng& rng) {
    cfg.validate();
    if (rng.uniform() >= cfg.apply_prob) return seg;
    if (pool.empty()) throw std::invalid_argument("augment: noise pool is empty");

    Segment out = seg;
    const double gain_db = rng.uniform(cfg.gain_db_lo, cfg.gain_db_hi);
    out.wave = apply_gain(out.wave, gain_db);

    const double shift_s = rng.uniform(cfg.shift_lo_s, cfg.shift_hi_s);
    const auto shift_n = static_cast<std::int64_t>(std::llround(shift_s * out.wave.sample_rate_hz));
    out.wave = circular_shift(out.wave, shift_n);

    const auto& noise = pool.entries[rng.uniform_index(pool.size())].wave;
    const double target = rng.uniform(cfg.snr_db_lo, cfg.snr_db_hi);
    out.wave = mix_at_snr(out.wave, noise, target);
    return out;
}

// SNR levels used when materializing the fixed noisy evaluation corpora.
inline const std::vector<double>& default_snr_grid() {
    static const std::vector<double> grid = {-23.0, -10.0, 0.0, 10.0, 23.0};
    return grid;
}

}  // namespace clickdet
