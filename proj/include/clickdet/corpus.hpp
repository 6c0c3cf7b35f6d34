#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickdet/augment.hpp"
#include "clickdet/rng.hpp"
#include "clickdet/synth.hpp"

namespace clickdet {

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::string participant_id;
    Label label;
    bool augmented = false;
    std::string split_hint;
};

struct CorpusManifest {
    std::string root_dir;
    std::vector<ManifestEntry> entries;

    std::map<std::string, int> class_counts() const {
        std::map<std::string, int> c;
        for (const auto& e : entries) ++c[to_string(e.label.cls)];
        return c;
    }

    std::map<std::string, int> kind_counts() const {
        std::map<std::string, int> c;
        for (const auto& e : entries) {
            if (e.label.cls == PatternClass::NoPattern)
                ++c[to_string(e.label.kind)];
            else
                ++c[to_string(e.label.cls)];
        }
        return c;
    }

    std::vector<std::string> participants() const {
        std::vector<std::string> ids;
        for (const auto& e : entries)
            if (std::find(ids.begin(), ids.end(), e.participant_id) == ids.end())
                ids.push_back(e.participant_id);
        return ids;
    }
};

inline nlohmann::json manifest_entry_to_json(const ManifestEntry& e) {
    nlohmann::json j;
    j["path"] = e.path;
    j["participant"] = e.participant_id;
    j["label"] = to_string(e.label.cls);
    j["kind"] = e.label.cls == PatternClass::NoPattern ? to_string(e.label.kind) : "";
    j["augmented"] = e.augmented;
    j["split_hint"] = e.split_hint;
    return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.path = j.at("path").get<std::string>();
    e.participant_id = j.at("participant").get<std::string>();
    const auto cls = pattern_class_from_string(j.at("label").get<std::string>());
    if (cls == PatternClass::NoPattern)
        e.label = Label::no_pattern(nopattern_kind_from_string(j.at("kind").get<std::string>()));
    else
        e.label = cls == PatternClass::Pattern1 ? Label::pattern1() : Label::pattern2();
    e.augmented = j.value("augmented", false);
    e.split_hint = j.value("split_hint", std::string());
    return e;
}

// JSON-lines manifest, one entry per line.
inline void manifest_write(const CorpusManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest_write: cannot open " + path);
    for (const auto& e : m.entries) out << manifest_entry_to_json(e).dump() << "\n";
    if (!out) throw std::runtime_error("manifest_write: write failed: " + path);
}

inline CorpusManifest manifest_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest_read: cannot open " + path);
    CorpusManifest m;
    m.root_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        m.entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
    }
    return m;
}

inline Waveform load_entry_wave(const CorpusManifest& m, const ManifestEntry& e) {
    return wav_read((std::filesystem::path(m.root_dir) / e.path).string());
}

inline Segment load_entry_segment(const CorpusManifest& m, const ManifestEntry& e) {
    Segment s;
    s.wave = load_entry_wave(m, e);
    s.label = e.label;
    s.participant_id = e.participant_id;
    return s;
}

// Corpus composition. Speech, patterns and silence are per participant;
// the four environmental kinds are pooled across the corpus and default to
// the reference class ratios (scaled by participant count over 21).
struct Composition {
    int speech_per_participant = 40;
    int pattern1_per_participant = 16;
    int pattern2_per_participant = 18;
    int silence_per_participant = 9;
    int chewing_total = -1;  // -1: scale 60 by n/21
    int motion_total = -1;   // -1: scale 45 by n/21
    int babble_total = -1;   // -1: scale 30 by n/21
    int music_total = -1;    // -1: scale 20 by n/21

    int pooled_total(NoPatternKind k, int n_participants) const {
        const double scale = static_cast<double>(n_participants) / 21.0;
        switch (k) {
            case NoPatternKind::Chewing:
                return chewing_total >= 0 ? chewing_total
                                          : static_cast<int>(std::lround(60.0 * scale));
            case NoPatternKind::Motion:
                return motion_total >= 0 ? motion_total
                                         : static_cast<int>(std::lround(45.0 * scale));
            case NoPatternKind::Babble:
                return babble_total >= 0 ? babble_total
                                         : static_cast<int>(std::lround(30.0 * scale));
            case NoPatternKind::Music:
                return music_total >= 0 ? music_total
                                        : static_cast<int>(std::lround(20.0 * scale));
            default:
                return 0;
        }
    }
};

// Deterministic synthetic corpus: one WAV per segment under
// out_dir/participant_id/, manifest.jsonl alongside. Pure function of
// (seed, composition).
inline CorpusManifest build_corpus(int n_participants, const Composition& comp,
                                   std::uint64_t seed, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (n_participants < 3)
        throw std::invalid_argument("build_corpus: need at least 3 participants");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("build_corpus: cannot create " + out_dir);

    CorpusManifest manifest;
    manifest.root_dir = out_dir;

    std::vector<ParticipantProfile> profiles;
    for (int i = 0; i < n_participants; ++i) {
        auto p = make_profile(derive_seed(seed, "participant", i));
        char id[16];
        std::snprintf(id, sizeof(id), "p%02d", i);
        p.id = id;
        profiles.push_back(std::move(p));
    }

    auto emit = [&](const ParticipantProfile& p, Label label, int index) {
        Rng rng(derive_seed(seed, p.id + "/" + (label.is_pattern()
                                                    ? to_string(label.cls)
                                                    : to_string(label.kind)),
                            index));
        Segment seg = synth_segment(p, label, rng);
        const std::string rel =
            p.id + "/" +
            (label.is_pattern() ? to_string(label.cls) : to_string(label.kind)) + "_" +
            std::to_string(index) + ".wav";
        const fs::path abs = fs::path(out_dir) / rel;
        fs::create_directories(abs.parent_path(), ec);
        if (ec) throw std::runtime_error("build_corpus: cannot create " + abs.string());
        try {
            wav_write(abs.string(), seg.wave);
        } catch (const std::exception& ex) {
            throw std::runtime_error("build_corpus: writing " + abs.string() + ": " +
                                     ex.what());
        }
        manifest.entries.push_back({rel, p.id, label, false, ""});
    };

    for (const auto& p : profiles) {
        for (int i = 0; i < comp.speech_per_participant; ++i)
            emit(p, Label::no_pattern(NoPatternKind::Speech), i);
        for (int i = 0; i < comp.silence_per_participant; ++i)
            emit(p, Label::no_pattern(NoPatternKind::Silence), i);
        for (int i = 0; i < comp.pattern1_per_participant; ++i)
            emit(p, Label::pattern1(), i);
        for (int i = 0; i < comp.pattern2_per_participant; ++i)
            emit(p, Label::pattern2(), i);
    }

    // pooled kinds dealt round-robin across participants
    for (const auto kind : {NoPatternKind::Chewing, NoPatternKind::Motion,
                            NoPatternKind::Babble, NoPatternKind::Music}) {
        const int total = comp.pooled_total(kind, n_participants);
        std::vector<int> next_index(n_participants, 0);
        for (int i = 0; i < total; ++i) {
            const int pi = i % n_participants;
            emit(profiles[pi], Label::no_pattern(kind), next_index[pi]++);
        }
    }

    manifest_write(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    return manifest;
}

// Noise pool for augmentation: the corpus's environmental no-pattern kinds.
inline NoisePool build_noise_pool(const CorpusManifest& m,
                                  const std::vector<std::string>& participants = {}) {
    NoisePool pool;
    for (const auto& e : m.entries) {
        if (e.label.cls != PatternClass::NoPattern) continue;
        const auto k = e.label.kind;
        if (k != NoPatternKind::Babble && k != NoPatternKind::Music &&
            k != NoPatternKind::Motion && k != NoPatternKind::Chewing)
            continue;
        if (!participants.empty() &&
            std::find(participants.begin(), participants.end(), e.participant_id) ==
                participants.end())
            continue;
        pool.add(load_entry_wave(m, e), k);
    }
    return pool;
}

}  // namespace clickdet
