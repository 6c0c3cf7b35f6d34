#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "clickdet/segment.hpp"

namespace clickdet {

// Rule-based segmentation: time-thresholded peak-prominence detection over a
// smoothed rectified envelope, then fixed pre/post cuts around each peak.
struct AnnotatorConfig {
    double min_separation_s = 5.0;
    double prominence_factor_k = 8.0;
    double envelope_smooth_ms = 2.0;
    double pre_s = 0.25;
    double post_s = 0.75;

    void validate() const {
        if (std::fabs(pre_s + post_s - 1.0) > 1e-12)
            throw std::invalid_argument("AnnotatorConfig: pre_s + post_s must equal 1.0");
        if (min_separation_s <= pre_s + post_s)
            throw std::invalid_argument(
                "AnnotatorConfig: min_separation_s must exceed the segment length");
        if (envelope_smooth_ms <= 0.0 || prominence_factor_k <= 0.0)
            throw std::invalid_argument("AnnotatorConfig: positive smoothing and k required");
    }
};

struct PeakList {
    std::vector<std::int64_t> indices;  // strictly increasing sample indices
    std::vector<double> prominences;
};

namespace annotate_detail {

// Centered moving average of |x| with an odd window.
inline std::vector<double> smoothed_envelope(const std::vector<double>& x,
                                             int window) {
    if (window % 2 == 0) ++window;
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    const std::int64_t half = window / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::int64_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + std::fabs(x[i]);
    std::vector<double> env(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t lo = std::max<std::int64_t>(0, i - half);
        const std::int64_t hi = std::min<std::int64_t>(n - 1, i + half);
        env[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return env;
}

inline double median_inplace(std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lower = *std::max_element(v.begin(), v.begin() + mid);
        m = 0.5 * (m + lower);
    }
    return m;
}

// Median absolute deviation from the median.
inline double mad(const std::vector<double>& v) {
    std::vector<double> tmp = v;
    const double med = median_inplace(tmp);
    for (auto& x : tmp) x = std::fabs(x - med);
    return median_inplace(tmp);
}

// Topographic prominence: height above the higher of the two bases, where a
// base is the minimum between the peak and the nearest higher point on that
// side (or the end of the signal).
inline double prominence_at(const std::vector<double>& env, std::int64_t p) {
    const std::int64_t n = static_cast<std::int64_t>(env.size());
    double left_base = env[p];
    for (std::int64_t i = p - 1; i >= 0; --i) {
        if (env[i] > env[p]) break;
        left_base = std::min(left_base, env[i]);
    }
    double right_base = env[p];
    for (std::int64_t i = p + 1; i < n; ++i) {
        if (env[i] > env[p]) break;
        right_base = std::min(right_base, env[i]);
    }
    return env[p] - std::max(left_base, right_base);
}

}  // namespace annotate_detail

// Candidate peaks are envelope local maxima that rise at least k * MAD above
// the envelope median and have topographic prominence of at least k * MAD; of
// any cluster closer than min_separation_s only the most prominent survives.
// Median and MAD scale with the signal, so detection is amplitude-scale free.
// The height condition matters on event-free streams, where the range of
// stationary noise would otherwise hand the global envelope maximum an
// arbitrarily wide prominence base.
inline PeakList detect_peaks(const Waveform& w, const AnnotatorConfig& cfg) {
    using namespace annotate_detail;
    cfg.validate();
    PeakList out;
    if (w.samples.empty()) return out;

    const int window =
        std::max(1, static_cast<int>(std::lround(cfg.envelope_smooth_ms * 1e-3 *
                                                 w.sample_rate_hz)));
    const auto env = smoothed_envelope(w.samples, window);
    double env_median;
    {
        std::vector<double> tmp = env;
        env_median = median_inplace(tmp);
    }
    const double threshold = cfg.prominence_factor_k * mad(env);
    const double height_floor = env_median + threshold;
    const std::int64_t n = static_cast<std::int64_t>(env.size());

    std::vector<std::int64_t> candidates;
    std::vector<double> proms;
    for (std::int64_t i = 1; i + 1 < n; ++i) {
        if (!(env[i] > env[i - 1] && env[i] >= env[i + 1])) continue;
        if (env[i] < height_floor) continue;
        const double prom = prominence_at(env, i);
        if (prom >= threshold && prom > 0.0) {
            candidates.push_back(i);
            proms.push_back(prom);
        }
    }

    // greedy suppression by prominence
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (proms[a] != proms[b]) return proms[a] > proms[b];
        return candidates[a] < candidates[b];
    });
    const auto min_sep =
        static_cast<std::int64_t>(std::llround(cfg.min_separation_s * w.sample_rate_hz));
    std::vector<std::size_t> kept;
    for (const std::size_t i : order) {
        bool ok = true;
        for (const std::size_t j : kept) {
            if (std::llabs(candidates[i] - candidates[j]) < min_sep) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end(),
              [&](std::size_t a, std::size_t b) { return candidates[a] < candidates[b]; });
    for (const std::size_t i : kept) {
        out.indices.push_back(candidates[i]);
        out.prominences.push_back(proms[i]);
    }
    return out;
}

// Cut [peak - pre_s, peak + post_s) around each peak; peaks too close to
// either end are dropped and counted.
inline std::vector<Segment> extract_segments(const Waveform& w, const PeakList& peaks,
                                             const AnnotatorConfig& cfg, Label label,
                                             const std::string& participant_id = "",
                                             const std::string& session_id = "session",
                                             int* dropped = nullptr) {
    cfg.validate();
    const auto pre = static_cast<std::int64_t>(std::llround(cfg.pre_s * w.sample_rate_hz));
    const auto post = static_cast<std::int64_t>(std::llround(cfg.post_s * w.sample_rate_hz));
    const std::int64_t n = static_cast<std::int64_t>(w.samples.size());

    std::vector<Segment> out;
    int drop_count = 0;
    for (const std::int64_t p : peaks.indices) {
        if (p - pre < 0 || p + post > n) {
            ++drop_count;
            continue;
        }
        Segment seg;
        seg.label = label;
        seg.participant_id = participant_id;
        seg.source = {session_id, p - pre};
        seg.wave.sample_rate_hz = w.sample_rate_hz;
        seg.wave.samples.assign(w.samples.begin() + (p - pre),
                                w.samples.begin() + (p + post));
        out.push_back(std::move(seg));
    }
    if (dropped) *dropped = drop_count;
    return out;
}

// Non-pattern streams: consecutive non-overlapping 1 s windows, remainder
// discarded.
inline std::vector<Segment> segment_nonpattern(const Waveform& w, Label label,
                                               const std::string& participant_id = "",
                                               const std::string& session_id = "stream") {
    if (label.cls != PatternClass::NoPattern)
        throw std::invalid_argument("segment_nonpattern: label must be NoPattern");
    const std::int64_t win = w.sample_rate_hz;
    const std::int64_t count = static_cast<std::int64_t>(w.samples.size()) / win;
    std::vector<Segment> out;
    out.reserve(count);
    for (std::int64_t i = 0; i < count; ++i) {
        Segment seg;
        seg.label = label;
        seg.participant_id = participant_id;
        seg.source = {session_id, i * win};
        seg.wave.sample_rate_hz = w.sample_rate_hz;
        seg.wave.samples.assign(w.samples.begin() + i * win,
                                w.samples.begin() + (i + 1) * win);
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace clickdet
