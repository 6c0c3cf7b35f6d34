#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/annotate.hpp"
#include "clickdet/augment.hpp"
#include "clickdet/model.hpp"
#include "clickdet/stream.hpp"
#include "clickdet/traineval.hpp"

namespace clickdet {

// Structured-text configuration: "key = value" lines grouped by [section];
// '#' starts a comment. Keys are stored flat as "section.key". Any key can
// be overridden from the command line, and the STEALTH_SEED environment
// variable overrides every *.seed for CI determinism.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        Config cfg;
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto text = trim(line);
            if (text.empty()) continue;
            if (text.front() == '[' && text.back() == ']') {
                section = trim(text.substr(1, text.size() - 2));
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                         ": expected key = value");
            const auto key = trim(text.substr(0, eq));
            const auto value = trim(text.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                         ": empty key");
            cfg.values_[section.empty() ? key : section + "." + key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // "section.key=value"
    void apply_override(const std::string& spec) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error("config override must be key=value, got: " + spec);
        set(trim(spec.substr(0, eq)), trim(spec.substr(eq + 1)));
    }

    void apply_env_seed() {
        if (const char* env = std::getenv("STEALTH_SEED")) {
            const std::string v = env;
            for (const auto& key : {"synth.seed", "train.seed", "sweep.seed", "seed"})
                values_[key] = v;
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoll(it->second);
        } catch (...) {
            throw std::runtime_error("config: " + key + " is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw std::runtime_error("config: " + key + " is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config: " + key + " is not a boolean: " + v);
    }

    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto t = trim(item);
            if (t.empty()) continue;
            out.push_back(static_cast<int>(std::stoll(t)));
        }
        if (out.empty())
            throw std::runtime_error("config: " + key + " must be a comma list: " + it->second);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    // canonical "key=value\n" dump; stable because the map is ordered
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r\n");
        return s.substr(begin, end - begin + 1);
    }

    std::map<std::string, std::string> values_;
};

inline std::string config_hash(const Config& cfg) {
    // FNV-1a over the canonical dump
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : cfg.canonical()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Typed views over the flat key space
// ---------------------------------------------------------------------------

inline FeatureOptions feature_options_from(const Config& c) {
    FeatureOptions f;
    f.n_mels = static_cast<int>(c.get_int("features.n_mels", f.n_mels));
    f.deltas = c.get_bool("features.deltas", f.deltas);
    f.zcr_ste = c.get_bool("features.zcr_ste", f.zcr_ste);
    return f;
}

inline ModelConfig model_config_from(const Config& c) {
    ModelConfig m;
    m.broadcast_axis =
        broadcast_axis_from_string(c.get_string("model.broadcast_axis", "temporal"));
    m.block_channels = c.get_int_list("model.block_channels", m.block_channels);
    m.temporal_kernel = static_cast<int>(c.get_int("model.temporal_kernel", m.temporal_kernel));
    m.feature_kernel = static_cast<int>(c.get_int("model.feature_kernel", m.feature_kernel));
    m.eps_norm = c.get_double("model.eps_norm", m.eps_norm);
    m.bn_momentum = c.get_double("model.bn_momentum", m.bn_momentum);
    m.input_f = feature_options_from(c).rows();
    m.validate();
    return m;
}

inline AugmentConfig augment_config_from(const Config& c) {
    AugmentConfig a;
    a.gain_db_lo = c.get_double("augment.gain_db_lo", a.gain_db_lo);
    a.gain_db_hi = c.get_double("augment.gain_db_hi", a.gain_db_hi);
    a.shift_lo_s = c.get_double("augment.shift_lo_s", a.shift_lo_s);
    a.shift_hi_s = c.get_double("augment.shift_hi_s", a.shift_hi_s);
    a.snr_db_lo = c.get_double("augment.snr_db_lo", a.snr_db_lo);
    a.snr_db_hi = c.get_double("augment.snr_db_hi", a.snr_db_hi);
    a.apply_prob = c.get_double("augment.apply_prob", a.apply_prob);
    a.validate();
    return a;
}

inline TrainConfig train_config_from(const Config& c) {
    TrainConfig t;
    t.lr = c.get_double("train.lr", t.lr);
    t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
    t.max_epochs = static_cast<int>(c.get_int("train.max_epochs", t.max_epochs));
    t.patience = static_cast<int>(c.get_int("train.patience", t.patience));
    t.lr_decay = c.get_double("train.lr_decay", t.lr_decay);
    t.lr_patience = static_cast<int>(c.get_int("train.lr_patience", t.lr_patience));
    t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
    t.threads = static_cast<int>(c.get_int("train.threads", 0));
    t.augment_enabled = c.get_bool("train.augment", true);
    t.augment = augment_config_from(c);
    t.features = feature_options_from(c);
    t.validate();
    return t;
}

inline AnnotatorConfig annotator_config_from(const Config& c) {
    AnnotatorConfig a;
    a.min_separation_s = c.get_double("annotator.min_separation_s", a.min_separation_s);
    a.prominence_factor_k = c.get_double("annotator.prominence_factor_k", a.prominence_factor_k);
    a.envelope_smooth_ms = c.get_double("annotator.envelope_smooth_ms", a.envelope_smooth_ms);
    a.pre_s = c.get_double("annotator.pre_s", a.pre_s);
    a.post_s = c.get_double("annotator.post_s", a.post_s);
    a.validate();
    return a;
}

inline StreamConfig stream_config_from(const Config& c) {
    StreamConfig s;
    s.hop_s = c.get_double("stream.hop_s", s.hop_s);
    s.debounce_s = c.get_double("stream.debounce_s", s.debounce_s);
    s.min_confidence = c.get_double("stream.min_confidence", s.min_confidence);
    s.gate.min_separation_s = c.get_double("stream.gate_min_separation_s",
                                           s.gate.min_separation_s);
    s.gate.prominence_factor_k = c.get_double("stream.gate_prominence_factor_k",
                                              s.gate.prominence_factor_k);
    s.validate();
    return s;
}

}  // namespace clickdet
