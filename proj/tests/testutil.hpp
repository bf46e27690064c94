#pragma once

// Shared fixture builders. Tests construct dialogs through these so the
// shape (participants, alternation, TAU placement) is stated once.

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "taupipe/augment.hpp"
#include "taupipe/corpus.hpp"
#include "taupipe/traits.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return std::filesystem::path(DATA_DIR); }

inline taupipe::Dialog make_dialog(
    const std::string& id, const std::string& p0, const std::string& p1,
    const std::vector<std::pair<std::string, std::string>>& turns) {
    taupipe::Dialog d;
    d.dialog_id = id;
    d.participants = {p0, p1};
    for (const auto& [speaker, text] : turns)
        d.utterances.push_back({speaker, text, taupipe::UtteranceKind::Original});
    return d;
}

// The published greeting dialog used across augmentation and trainset tests:
// eight utterances, speakers strictly alternating A, B, A, B, ...
inline taupipe::Dialog greeting_dialog() {
    return make_dialog(
        "greeting", "A", "B",
        {{"A", "Nice to meet you."},
         {"B", "Nice to meet you."},
         {"A", "Is there anything you'd like to say to yourself five years from now?"},
         {"B", "I'd want to ask, “Are you working properly?”"},
         {"A", "Are you not working at the moment?"},
         {"B", "I'm in college now, so not yet."},
         {"A", "I see. I'm sure you'll be doing just fine at work by then."},
         {"B", "I just hope I won't be depressed."}});
}

// The think-aloud texts that accompany greeting_dialog(), one per B line.
inline std::vector<std::string> greeting_taus() {
    return {
        "First, I need to respond with a polite greeting.",
        "Five years from now, huh… I’ve thought about it before, but picturing my current "
        "self is really difficult.",
        "I’m still enjoying student life, but I feel anxious about the future.",
        "I hope so. But I’m also worried about my health.",
    };
}

// greeting_dialog() truncated to its first two exchanges — the few-shot
// example shipped in data/templates.
inline taupipe::Dialog greeting_head() {
    taupipe::Dialog d = greeting_dialog();
    d.dialog_id = "greeting_head";
    d.utterances.resize(4);
    return d;
}

// Serializes a dialog plus per-target-line TAU texts into the line grammar
// the augmentation backend is expected to emit.
inline std::string render_output(const taupipe::Dialog& dialog, const std::string& target,
                                 const std::vector<std::string>& taus) {
    std::string out;
    std::size_t next_tau = 0;
    for (const taupipe::Utterance& u : dialog.utterances) {
        if (u.speaker_id == target)
            out += taupipe::format_grammar_line(
                       {target, taupipe::Channel::Thinking, taus.at(next_tau++)}) +
                   "\n";
        out += taupipe::format_grammar_line({u.speaker_id, taupipe::Channel::Speaking, u.text}) +
               "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

// Independent re-statement of the thinking-span convention, used as the
// oracle for the stripping invariant. Kept deliberately dumb.
inline std::string naive_strip(const std::string& content, const std::string& open = "<thinking>",
                               const std::string& close = "</thinking>") {
    if (content.rfind(open + " ", 0) != 0) return content;
    auto end = content.find(" " + close + " ");
    if (end == std::string::npos) return content;
    return content.substr(end + close.size() + 2);
}

inline taupipe::SpeakerProfile make_profile(const std::string& id, double o, double c, double e,
                                            double a, double n) {
    taupipe::SpeakerProfile p;
    p.speaker_id = id;
    p.traits[taupipe::Trait::Openness] = o;
    p.traits[taupipe::Trait::Conscientiousness] = c;
    p.traits[taupipe::Trait::Extraversion] = e;
    p.traits[taupipe::Trait::Agreeableness] = a;
    p.traits[taupipe::Trait::Neuroticism] = n;
    return p;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    auto dir = std::filesystem::temp_directory_path() /
               ("taupipe_test_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
