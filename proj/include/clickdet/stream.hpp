#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/annotate.hpp"
#include "clickdet/dsp.hpp"
#include "clickdet/model.hpp"
#include "clickdet/traineval.hpp"

namespace clickdet {

struct DetectionEvent {
    double onset_s = 0.0;
    PatternClass label = PatternClass::Pattern1;
    double confidence = 0.0;
    double window_start_s = 0.0;
    double window_end_s = 0.0;
};

// Sliding-window detector policy: a cheap gate (the annotator's peak rule
// with a relaxed separation) picks candidate instants, and only gated
// windows are classified.
struct StreamConfig {
    double hop_s = 0.25;
    AnnotatorConfig gate;
    double debounce_s = 1.0;
    double min_confidence = 0.6;

    StreamConfig() { gate.min_separation_s = 1.0 + 1e-9; }

    void validate() const {
        if (hop_s <= 0.0 || hop_s > 1.0)
            throw std::invalid_argument("StreamConfig: hop_s must be in (0, 1]");
        if (debounce_s < hop_s)
            throw std::invalid_argument("StreamConfig: debounce_s must be >= hop_s");
        if (min_confidence < 0.0 || min_confidence > 1.0)
            throw std::invalid_argument("StreamConfig: min_confidence outside [0, 1]");
    }
};

// Offline realization of the real-time loop: preprocess once, gate, classify
// the window aligned so the gated peak sits at the training offset (0.25 s),
// emit when the class is a pattern with enough confidence, then hold off for
// the debounce period.
inline std::vector<DetectionEvent> stream_detect(const Waveform& w,
                                                 const Model<float>& m,
                                                 const StreamConfig& scfg,
                                                 const FeatureOptions& opts = {}) {
    scfg.validate();
    std::vector<DetectionEvent> events;
    if (w.samples.size() < static_cast<std::size_t>(kSegmentSamples)) return events;

    const auto filtered = preprocess(w);
    const auto peaks = detect_peaks(filtered, scfg.gate);
    if (peaks.indices.empty()) return events;

    const auto fb = MelFilterbank::make(opts.n_mels);
    const double duration_s = filtered.duration_s();
    const std::int64_t n = static_cast<std::int64_t>(filtered.samples.size());
    double last_emit_s = -std::numeric_limits<double>::infinity();

    for (const std::int64_t peak : peaks.indices) {
        const double peak_s = static_cast<double>(peak) / kSampleRateHz;
        // window on the hop grid with the peak nearest the 0.25 s offset
        double start_s = std::round((peak_s - 0.25) / scfg.hop_s) * scfg.hop_s;
        start_s = std::max(0.0, std::min(start_s, duration_s - 1.0));
        const auto start = static_cast<std::int64_t>(std::llround(start_s * kSampleRateHz));
        if (start < 0 || start + kSegmentSamples > n) continue;
        if (peak_s - last_emit_s < scfg.debounce_s) continue;

        Waveform window;
        window.sample_rate_hz = kSampleRateHz;
        window.samples.assign(filtered.samples.begin() + start,
                              filtered.samples.begin() + start + kSegmentSamples);

        // window is already preprocessed; build the feature stack directly
        const auto full = featurize(window, fb);
        FeatureMatrix features;
        if (opts.deltas && opts.zcr_ste) {
            features = full;
        } else {
            features = FeatureMatrix::zeros(opts.rows(), full.cols);
            int r_out = 0;
            const int mel_rows = opts.deltas ? 3 * opts.n_mels : opts.n_mels;
            for (int r = 0; r < mel_rows; ++r, ++r_out)
                for (int t = 0; t < full.cols; ++t) features.at(r_out, t) = full.at(r, t);
            if (opts.zcr_ste)
                for (int r = 3 * opts.n_mels; r < full.rows; ++r, ++r_out)
                    for (int t = 0; t < full.cols; ++t)
                        features.at(r_out, t) = full.at(r, t);
        }

        const auto probs = forward(m, features);
        int cls = 0;
        for (int c = 1; c < kNumClasses; ++c)
            if (probs[c] > probs[cls]) cls = c;
        if (cls == static_cast<int>(PatternClass::NoPattern)) continue;
        if (probs[cls] < scfg.min_confidence) continue;

        DetectionEvent ev;
        ev.onset_s = peak_s;
        ev.label = static_cast<PatternClass>(cls);
        ev.confidence = probs[cls];
        ev.window_start_s = start_s;
        ev.window_end_s = start_s + 1.0;
        events.push_back(ev);
        last_emit_s = peak_s;
    }
    return events;
}

}  // namespace clickdet
