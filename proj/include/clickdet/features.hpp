#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/fft.hpp"
#include "clickdet/segment.hpp"

namespace clickdet {

// 25 ms frames with 50% overlap over a 1 s segment.
struct FrameGrid {
    static constexpr int frame_len = 1200;
    static constexpr int hop = 600;
    static constexpr int n_frames = (kSegmentSamples - frame_len) / hop + 1;  // 79
};
static_assert(FrameGrid::n_frames == 79);

constexpr int kNumMel = 13;
constexpr int kFftSize = 2048;
constexpr int kNumFeatures = 3 * kNumMel + 2;  // log-mel, deltas, delta-deltas, ZCR, STE
constexpr double kLogFloor = 1e-10;

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular mel filters (unit peak) over the FFT bin grid.
struct MelFilterbank {
    int n_mels = kNumMel;
    double f_lo_hz = 300.0;
    double f_hi_hz = 5000.0;
    std::vector<double> weights;          // n_mels x (n_fft/2 + 1), row-major
    std::vector<double> center_freqs_hz;  // n_mels

    static MelFilterbank make(int n_mels = kNumMel, double f_lo = 300.0,
                              double f_hi = 5000.0, int fs_hz = kSampleRateHz,
                              int n_fft = kFftSize) {
        if (n_mels < 1 || !(0.0 <= f_lo && f_lo < f_hi && f_hi <= fs_hz / 2.0))
            throw std::invalid_argument("MelFilterbank: bad parameters");
        MelFilterbank fb;
        fb.n_mels = n_mels;
        fb.f_lo_hz = f_lo;
        fb.f_hi_hz = f_hi;
        const int n_bins = n_fft / 2 + 1;
        fb.weights.assign(static_cast<std::size_t>(n_mels) * n_bins, 0.0);
        fb.center_freqs_hz.resize(n_mels);

        const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(f_hi);
        std::vector<double> edges(n_mels + 2);
        for (int i = 0; i < n_mels + 2; ++i)
            edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_mels + 1));

        for (int m = 0; m < n_mels; ++m) {
            const double fl = edges[m], fc = edges[m + 1], fr = edges[m + 2];
            fb.center_freqs_hz[m] = fc;
            for (int k = 0; k < n_bins; ++k) {
                const double f = static_cast<double>(k) * fs_hz / n_fft;
                double w = 0.0;
                if (f > fl && f < fc)
                    w = (f - fl) / (fc - fl);
                else if (f >= fc && f < fr)
                    w = (fr - f) / (fr - fc);
                fb.weights[static_cast<std::size_t>(m) * n_bins + k] = w;
            }
        }
        return fb;
    }
};

// Row-major real matrix with the fixed feature layout:
// rows [0, n_mels) log-mel, [n_mels, 2 n_mels) delta, [2 n_mels, 3 n_mels)
// delta-delta, then ZCR and STE.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const {
        return values[static_cast<std::size_t>(r) * cols + c];
    }

    static FeatureMatrix zeros(int r, int c) {
        FeatureMatrix m;
        m.rows = r;
        m.cols = c;
        m.values.assign(static_cast<std::size_t>(r) * c, 0.0);
        return m;
    }
};

namespace feat_detail {

inline const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(FrameGrid::frame_len);
        for (int n = 0; n < FrameGrid::frame_len; ++n)
            v[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n /
                                         (FrameGrid::frame_len - 1)));
        return v;
    }();
    return w;
}

}  // namespace feat_detail

inline void require_segment_length(const Waveform& w, const char* who) {
    if (w.samples.size() != static_cast<std::size_t>(kSegmentSamples))
        throw std::invalid_argument(std::string(who) + ": segment must be exactly " +
                                    std::to_string(kSegmentSamples) + " samples");
}

// Frame start offsets; window i covers [hop*i, hop*i + frame_len).
inline std::vector<int> frame_offsets(const Waveform& w) {
    require_segment_length(w, "frame_offsets");
    std::vector<int> off(FrameGrid::n_frames);
    for (int i = 0; i < FrameGrid::n_frames; ++i) off[i] = i * FrameGrid::hop;
    return off;
}

// n_mels x 79 log-mel energies: Hann window, 2048-point FFT (zero padded),
// power spectrum, triangular filters, log10 with floor.
inline FeatureMatrix log_mel(const Waveform& w, const MelFilterbank& fb) {
    require_segment_length(w, "log_mel");
    const auto& win = feat_detail::hann_window();
    const int n_bins = kFftSize / 2 + 1;
    auto out = FeatureMatrix::zeros(fb.n_mels, FrameGrid::n_frames);

    std::vector<double> frame(FrameGrid::frame_len);
    for (int t = 0; t < FrameGrid::n_frames; ++t) {
        const int o = t * FrameGrid::hop;
        for (int n = 0; n < FrameGrid::frame_len; ++n)
            frame[n] = w.samples[o + n] * win[n];
        const auto p = power_spectrum(frame.data(), frame.size(), kFftSize);
        for (int m = 0; m < fb.n_mels; ++m) {
            double acc = 0.0;
            const double* row = &fb.weights[static_cast<std::size_t>(m) * n_bins];
            for (int k = 0; k < n_bins; ++k) acc += row[k] * p[k];
            out.at(m, t) = std::log10(std::max(acc, kLogFloor));
        }
    }
    return out;
}

// Regression delta along time, replicate-padded edges:
//   d_t = sum_{n=1..N} n (c_{t+n} - c_{t-n}) / (2 sum n^2)
inline FeatureMatrix delta(const FeatureMatrix& m, int window_n = 2) {
    if (window_n < 1) throw std::invalid_argument("delta: window must be >= 1");
    auto out = FeatureMatrix::zeros(m.rows, m.cols);
    double denom = 0.0;
    for (int n = 1; n <= window_n; ++n) denom += static_cast<double>(n) * n;
    denom *= 2.0;
    for (int r = 0; r < m.rows; ++r) {
        for (int t = 0; t < m.cols; ++t) {
            double acc = 0.0;
            for (int n = 1; n <= window_n; ++n) {
                const int hi = std::min(t + n, m.cols - 1);
                const int lo = std::max(t - n, 0);
                acc += n * (m.at(r, hi) - m.at(r, lo));
            }
            out.at(r, t) = acc / denom;
        }
    }
    return out;
}

// Per-frame fraction of strict sign changes; zero counts as positive.
inline std::vector<double> zcr(const Waveform& w) {
    require_segment_length(w, "zcr");
    std::vector<double> out(FrameGrid::n_frames);
    for (int t = 0; t < FrameGrid::n_frames; ++t) {
        const int o = t * FrameGrid::hop;
        int count = 0;
        for (int n = 1; n < FrameGrid::frame_len; ++n) {
            const bool neg_prev = w.samples[o + n - 1] < 0.0;
            const bool neg_curr = w.samples[o + n] < 0.0;
            count += neg_prev != neg_curr;
        }
        out[t] = static_cast<double>(count) / (FrameGrid::frame_len - 1);
    }
    return out;
}

// Per-frame short-term energy: sum of squared samples.
inline std::vector<double> ste(const Waveform& w) {
    require_segment_length(w, "ste");
    std::vector<double> out(FrameGrid::n_frames);
    for (int t = 0; t < FrameGrid::n_frames; ++t) {
        const int o = t * FrameGrid::hop;
        double acc = 0.0;
        for (int n = 0; n < FrameGrid::frame_len; ++n)
            acc += w.samples[o + n] * w.samples[o + n];
        out[t] = acc;
    }
    return out;
}

// Full spectral-temporal stack: [log-mel; delta; delta-delta; ZCR; STE].
inline FeatureMatrix featurize(const Waveform& w, const MelFilterbank& fb) {
    require_segment_length(w, "featurize");
    const auto mel = log_mel(w, fb);
    const auto d1 = delta(mel);
    const auto d2 = delta(d1);
    const auto z = zcr(w);
    const auto e = ste(w);

    auto out = FeatureMatrix::zeros(3 * fb.n_mels + 2, FrameGrid::n_frames);
    for (int r = 0; r < fb.n_mels; ++r)
        for (int t = 0; t < FrameGrid::n_frames; ++t) {
            out.at(r, t) = mel.at(r, t);
            out.at(fb.n_mels + r, t) = d1.at(r, t);
            out.at(2 * fb.n_mels + r, t) = d2.at(r, t);
        }
    for (int t = 0; t < FrameGrid::n_frames; ++t) {
        out.at(3 * fb.n_mels, t) = z[t];
        out.at(3 * fb.n_mels + 1, t) = e[t];
    }
    return out;
}

inline FeatureMatrix featurize(const Segment& s, const MelFilterbank& fb) {
    return featurize(s.wave, fb);
}

inline const MelFilterbank& default_filterbank() {
    static const MelFilterbank fb = MelFilterbank::make();
    return fb;
}

// ---------------------------------------------------------------------------
// Binary feature file: "STLF", version, rows, cols (little-endian u32), then
// row-major float32 values.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kFeatureFileVersion = 1;

inline void feature_write(const std::string& path, const FeatureMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("feature_write: cannot open " + path);
    const char magic[4] = {'S', 'T', 'L', 'F'};
    out.write(magic, 4);
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(kFeatureFileVersion);
    put_u32(static_cast<std::uint32_t>(m.rows));
    put_u32(static_cast<std::uint32_t>(m.cols));
    for (const double v : m.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(bits);
    }
    if (!out) throw std::runtime_error("feature_write: write failed: " + path);
}

inline FeatureMatrix feature_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("feature_read: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "STLF", 4) != 0)
        throw std::runtime_error("feature_read: bad magic: " + path);
    auto get_u32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    };
    const std::uint32_t version = get_u32();
    if (version != kFeatureFileVersion)
        throw std::runtime_error("feature_read: unsupported version: " + path);
    const std::uint32_t rows = get_u32();
    const std::uint32_t cols = get_u32();
    auto m = FeatureMatrix::zeros(static_cast<int>(rows), static_cast<int>(cols));
    for (auto& v : m.values) {
        const std::uint32_t bits = get_u32();
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
    }
    if (!in) throw std::runtime_error("feature_read: truncated file: " + path);
    return m;
}

}  // namespace clickdet
