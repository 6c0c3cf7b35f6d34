#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "clickdet/features.hpp"
#include "clickdet/rng.hpp"

using namespace clickdet;

namespace {

Waveform tone(double freq_hz, double amp = 1.0) {
    Waveform w;
    w.samples.resize(kSegmentSamples);
    for (int i = 0; i < kSegmentSamples; ++i)
        w.samples[i] =
            amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / kSampleRateHz);
    return w;
}

Waveform zeros() {
    Waveform w;
    w.samples.assign(kSegmentSamples, 0.0);
    return w;
}

}  // namespace

TEST_CASE("frame grid covers the segment exactly") {
    CHECK(FrameGrid::n_frames == 79);
    const auto off = frame_offsets(zeros());
    CHECK(off.size() == 79);
    CHECK(off.front() == 0);
    CHECK(off.back() + FrameGrid::frame_len == kSegmentSamples);

    Waveform bad;
    bad.samples.assign(100, 0.0);
    CHECK_THROWS_AS(frame_offsets(bad), std::invalid_argument);
}

TEST_CASE("log_mel floor, tone argmax, and power scaling") {
    const auto& fb = default_filterbank();

    const auto silent = log_mel(zeros(), fb);
    for (const double v : silent.values) CHECK(v == doctest::Approx(-10.0));

    // the filter whose center is nearest 1 kHz should dominate every frame
    int expect = 0;
    for (int m = 1; m < fb.n_mels; ++m)
        if (std::fabs(fb.center_freqs_hz[m] - 1000.0) <
            std::fabs(fb.center_freqs_hz[expect] - 1000.0))
            expect = m;
    const auto m1k = log_mel(tone(1000.0), fb);
    for (int t = 0; t < m1k.cols; ++t) {
        int argmax = 0;
        for (int r = 1; r < m1k.rows; ++r)
            if (m1k.at(r, t) > m1k.at(argmax, t)) argmax = r;
        CHECK(argmax == expect);
    }

    // doubling the amplitude adds log10(4) to every above-floor cell
    const auto loud = log_mel(tone(1000.0, 2.0), fb);
    for (int r = 0; r < m1k.rows; ++r)
        for (int t = 0; t < m1k.cols; ++t)
            if (m1k.at(r, t) > -9.0)
                CHECK(loud.at(r, t) - m1k.at(r, t) ==
                      doctest::Approx(std::log10(4.0)).epsilon(1e-6));
}

TEST_CASE("mel filterbank is triangular and overlapping") {
    const auto& fb = default_filterbank();
    const int n_bins = kFftSize / 2 + 1;
    for (int m = 0; m < fb.n_mels; ++m) {
        double sum = 0.0;
        for (int k = 0; k < n_bins; ++k) {
            const double w = fb.weights[static_cast<std::size_t>(m) * n_bins + k];
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum > 0.0);
    }
    // adjacent filters overlap: some bin carries weight from both
    for (int m = 0; m + 1 < fb.n_mels; ++m) {
        bool overlap = false;
        for (int k = 0; k < n_bins; ++k)
            if (fb.weights[static_cast<std::size_t>(m) * n_bins + k] > 0.0 &&
                fb.weights[static_cast<std::size_t>(m + 1) * n_bins + k] > 0.0)
                overlap = true;
        CHECK(overlap);
    }
}

TEST_CASE("delta of constants, ramps, and shifted inputs") {
    auto constant = FeatureMatrix::zeros(3, 20);
    for (auto& v : constant.values) v = 4.2;
    for (const double v : delta(constant).values) CHECK(v == doctest::Approx(0.0));

    auto ramp = FeatureMatrix::zeros(1, 20);
    for (int t = 0; t < 20; ++t) ramp.at(0, t) = t;
    const auto d = delta(ramp);
    for (int t = 2; t < 18; ++t) CHECK(d.at(0, t) == doctest::Approx(1.0));

    Rng rng(3);
    auto m = FeatureMatrix::zeros(2, 15);
    for (auto& v : m.values) v = rng.normal();
    auto shifted = m;
    for (auto& v : shifted.values) v += 7.5;
    const auto da = delta(m), db = delta(shifted);
    for (std::size_t i = 0; i < da.values.size(); ++i)
        CHECK(da.values[i] == doctest::Approx(db.values[i]).epsilon(1e-12));
}

TEST_CASE("zcr counts strict sign changes") {
    for (const double v : zcr(zeros())) CHECK(v == 0.0);

    Waveform alt;
    alt.samples.resize(kSegmentSamples);
    for (int i = 0; i < kSegmentSamples; ++i) alt.samples[i] = (i % 2 == 0) ? 1.0 : -1.0;
    for (const double v : zcr(alt)) CHECK(v == doctest::Approx(1.0));

    // 1 kHz sine: 2 crossings per cycle, 25 cycles per frame
    const double expect = 2.0 * 1000.0 * 0.025 / (FrameGrid::frame_len - 1);
    for (const double v : zcr(tone(1000.0))) {
        CHECK(v >= expect * 0.9);
        CHECK(v <= expect * 1.1);
    }
}

TEST_CASE("ste sums squared samples per frame") {
    for (const double v : ste(zeros())) CHECK(v == 0.0);

    for (const double v : ste(tone(1000.0)))
        CHECK(v == doctest::Approx(600.0).epsilon(0.01));

    Waveform ones;
    ones.samples.assign(kSegmentSamples, 1.0);
    for (const double v : ste(ones)) CHECK(v == doctest::Approx(1200.0));
}

TEST_CASE("featurize stacks the 41 x 79 contract") {
    const auto& fb = default_filterbank();
    const auto f = featurize(tone(700.0), fb);
    CHECK(f.rows == 41);
    CHECK(f.cols == 79);
    for (const double v : f.values) CHECK(std::isfinite(v));

    const auto z = featurize(zeros(), fb);
    for (int t = 0; t < z.cols; ++t) {
        for (int r = 0; r < 13; ++r) CHECK(z.at(r, t) == doctest::Approx(-10.0));
        for (int r = 13; r < 39; ++r) CHECK(z.at(r, t) == doctest::Approx(0.0));
        CHECK(z.at(39, t) == 0.0);
        CHECK(z.at(40, t) == 0.0);
    }

    const auto again = featurize(tone(700.0), fb);
    CHECK(f.values == again.values);
}

TEST_CASE("time-shift by one hop moves interior log-mel columns by one") {
    Rng rng(9);
    Waveform w;
    w.samples.resize(kSegmentSamples);
    for (auto& s : w.samples) s = rng.normal();

    Waveform shifted;
    shifted.samples.resize(kSegmentSamples);
    for (int i = 0; i < kSegmentSamples; ++i)
        shifted.samples[i] = w.samples[(i - FrameGrid::hop + kSegmentSamples) % kSegmentSamples];

    const auto& fb = default_filterbank();
    const auto a = log_mel(w, fb);
    const auto b = log_mel(shifted, fb);
    for (int r = 0; r < a.rows; ++r)
        for (int t = 1; t < a.cols - 1; ++t)
            CHECK(b.at(r, t) == doctest::Approx(a.at(r, t - 1)).epsilon(1e-6));
}

TEST_CASE("windowed-frame Parseval identity holds") {
    Rng rng(10);
    std::vector<double> x(FrameGrid::frame_len);
    double energy = 0.0;
    {
        int n = 0;
        for (auto& v : x) {
            v = rng.normal() * (0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n++ /
                                                      (FrameGrid::frame_len - 1))));
            energy += v * v;
        }
    }
    const auto p = power_spectrum(x.data(), x.size(), kFftSize);
    double sum = p[0] + p[kFftSize / 2];
    for (std::size_t k = 1; k < p.size() - 1; ++k) sum += 2.0 * p[k];
    CHECK(sum == doctest::Approx(kFftSize * energy).epsilon(1e-6));
}

TEST_CASE("feature files round-trip through the binary format") {
    const auto& fb = default_filterbank();
    const auto f = featurize(tone(1500.0), fb);
    const std::string path = "test_features_roundtrip.stlf";
    feature_write(path, f);
    const auto g = feature_read(path);
    std::remove(path.c_str());

    CHECK(g.rows == f.rows);
    CHECK(g.cols == f.cols);
    for (std::size_t i = 0; i < f.values.size(); ++i)
        CHECK(g.values[i] == doctest::Approx(f.values[i]).epsilon(1e-6));

    CHECK_THROWS(feature_read("does_not_exist.stlf"));
}

TEST_CASE("configurable mel resolution for the ablation arm") {
    const auto fb64 = MelFilterbank::make(64);
    CHECK(fb64.n_mels == 64);
    Waveform w = tone(2000.0);
    const auto f = featurize(w, fb64);
    CHECK(f.rows == 3 * 64 + 2);
    CHECK(f.cols == 79);
}
