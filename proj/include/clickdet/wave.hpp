#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clickdet {

constexpr int kSampleRateHz = 48000;
constexpr int kSegmentSamples = 48000;  // 1 s of audio

struct Waveform {
    std::vector<double> samples;
    int sample_rate_hz = kSampleRateHz;

    std::size_t size() const { return samples.size(); }
    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

inline bool all_finite(const Waveform& w) {
    for (const double s : w.samples)
        if (!std::isfinite(s)) return false;
    return true;
}

inline double rms(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double mean_power(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const double v : x) acc += v * v;
    return acc / static_cast<double>(x.size());
}

inline double peak_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (const double v : x) m = std::max(m, std::fabs(v));
    return m;
}

// ---------------------------------------------------------------------------
// WAV I/O. Canonical pipeline format: RIFF, mono, 48 kHz, 32-bit float.
// Readers additionally accept 16-bit PCM (normalized to [-1, 1]).
// ---------------------------------------------------------------------------

namespace wav_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

inline void wav_write(const std::string& path, const Waveform& w) {
    using namespace wav_detail;
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_bytes = n * 4;

    std::string buf;
    buf.reserve(58 + data_bytes);
    buf += "RIFF";
    put_u32(buf, 4 + 26 + 12 + 8 + data_bytes);
    buf += "WAVE";
    buf += "fmt ";
    put_u32(buf, 18);
    put_u16(buf, 3);  // IEEE float
    put_u16(buf, 1);  // mono
    put_u32(buf, static_cast<std::uint32_t>(w.sample_rate_hz));
    put_u32(buf, static_cast<std::uint32_t>(w.sample_rate_hz) * 4);
    put_u16(buf, 4);
    put_u16(buf, 32);
    put_u16(buf, 0);  // cbSize
    buf += "fact";
    put_u32(buf, 4);
    put_u32(buf, n);
    buf += "data";
    put_u32(buf, data_bytes);
    for (std::uint32_t i = 0; i < n; ++i) {
        const float f = static_cast<float>(w.samples[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(buf, bits);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("wav_write: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("wav_write: write failed: " + path);
}

inline Waveform wav_read(const std::string& path) {
    using namespace wav_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("wav_read: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t size = bytes.size();
    if (size < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav_read: not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= size) {
        const std::uint32_t chunk_len = get_u32(p + off + 4);
        if (std::memcmp(p + off, "fmt ", 4) == 0 && off + 8 + 16 <= size) {
            format = get_u16(p + off + 8);
            channels = get_u16(p + off + 10);
            rate = get_u32(p + off + 12);
            bits = get_u16(p + off + 22);
        } else if (std::memcmp(p + off, "data", 4) == 0) {
            data_off = off + 8;
            data_len = std::min<std::size_t>(chunk_len, size - data_off);
        }
        off += 8 + chunk_len + (chunk_len & 1);
    }
    if (data_off == 0) throw std::runtime_error("wav_read: no data chunk: " + path);
    if (channels != 1)
        throw std::runtime_error("wav_read: expected mono, got " +
                                 std::to_string(channels) + " channels: " + path);

    Waveform w;
    w.sample_rate_hz = static_cast<int>(rate);
    if (format == 3 && bits == 32) {
        const std::size_t n = data_len / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = get_u32(p + data_off + 4 * i);
            float f;
            std::memcpy(&f, &u, 4);
            w.samples[i] = static_cast<double>(f);
        }
    } else if (format == 1 && bits == 16) {
        const std::size_t n = data_len / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint16_t u = get_u16(p + data_off + 2 * i);
            const std::int16_t s = static_cast<std::int16_t>(u);
            w.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else {
        throw std::runtime_error("wav_read: unsupported format (want float32 or pcm16): " + path);
    }
    return w;
}

}  // namespace clickdet
