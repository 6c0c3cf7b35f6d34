#pragma once

#include <stdexcept>
#include <string>

#include "clickdet/wave.hpp"

namespace clickdet {

enum class PatternClass { NoPattern = 0, Pattern1 = 1, Pattern2 = 2 };
constexpr int kNumClasses = 3;

enum class NoPatternKind { Speech, Chewing, Motion, Babble, Music, Silence };

struct Label {
    PatternClass cls = PatternClass::NoPattern;
    NoPatternKind kind = NoPatternKind::Silence;  // meaningful only for NoPattern

    static Label pattern1() { return {PatternClass::Pattern1, NoPatternKind::Silence}; }
    static Label pattern2() { return {PatternClass::Pattern2, NoPatternKind::Silence}; }
    static Label no_pattern(NoPatternKind k) { return {PatternClass::NoPattern, k}; }

    bool is_pattern() const { return cls != PatternClass::NoPattern; }
};

inline std::string to_string(PatternClass c) {
    switch (c) {
        case PatternClass::NoPattern: return "nopattern";
        case PatternClass::Pattern1: return "pattern1";
        case PatternClass::Pattern2: return "pattern2";
    }
    return "?";
}

inline std::string to_string(NoPatternKind k) {
    switch (k) {
        case NoPatternKind::Speech: return "speech";
        case NoPatternKind::Chewing: return "chewing";
        case NoPatternKind::Motion: return "motion";
        case NoPatternKind::Babble: return "babble";
        case NoPatternKind::Music: return "music";
        case NoPatternKind::Silence: return "silence";
    }
    return "?";
}

inline PatternClass pattern_class_from_string(const std::string& s) {
    if (s == "nopattern") return PatternClass::NoPattern;
    if (s == "pattern1") return PatternClass::Pattern1;
    if (s == "pattern2") return PatternClass::Pattern2;
    throw std::invalid_argument("unknown class name: " + s);
}

inline NoPatternKind nopattern_kind_from_string(const std::string& s) {
    if (s == "speech") return NoPatternKind::Speech;
    if (s == "chewing") return NoPatternKind::Chewing;
    if (s == "motion") return NoPatternKind::Motion;
    if (s == "babble") return NoPatternKind::Babble;
    if (s == "music") return NoPatternKind::Music;
    if (s == "silence") return NoPatternKind::Silence;
    throw std::invalid_argument("unknown no-pattern kind: " + s);
}

// Where a segment came from: a session cut, or direct synthesis.
struct Provenance {
    std::string session_id = "synthetic-direct";
    std::int64_t offset_samples = 0;
};

// Exactly one second of waveform plus its label and owner.
struct Segment {
    Waveform wave;
    Label label;
    std::string participant_id;
    Provenance source;

    bool valid_length() const {
        return wave.samples.size() == static_cast<std::size_t>(kSegmentSamples);
    }
};

}  // namespace clickdet
