#include "taupipe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>


#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

using nlohmann::json;

namespace taupipe {

namespace {

bool is_provenance_record(const json& j) {
    return j.is_object() && j.contains("record_type") && j["record_type"] == "provenance";
}

void check_single_line(const std::string& text, const std::string& where) {
    if (text.empty()) throw ValidationError(where + ": utterance text is empty");
    if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos)
        throw ValidationError(where + ": utterance text contains a newline");
    if (std::string(trim(text)) != text)
        throw ValidationError(where + ": utterance text has leading or trailing whitespace");
}

// Shared reader: applies per-line JSON parsing with line numbers and the
// optional leading provenance record.
template <typename Fn>
void read_jsonl(const std::filesystem::path& path, JsonlFile* meta, Fn&& on_record) {
    std::ifstream in(path);
    if (!in) throw FileParseError("cannot open file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FileParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": malformed record: " + e.what());
        }
        if (first && is_provenance_record(j)) {
            if (meta) meta->provenance = j;
            first = false;
            continue;
        }
        first = false;
        on_record(j, line_no);
    }
}

void write_jsonl(const std::filesystem::path& path, const std::optional<json>& provenance,
                 const std::vector<json>& records) {
    std::string out;
    if (provenance) {
        json header = *provenance;
        header["record_type"] = "provenance";
        out += header.dump();
        out += '\n';
    }
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace

bool Dialog::has_participant(const std::string& speaker_id) const {
    return participants[0] == speaker_id || participants[1] == speaker_id;
}

const std::string& Dialog::counterpart_of(const std::string& speaker_id) const {
    if (participants[0] == speaker_id) return participants[1];
    if (participants[1] == speaker_id) return participants[0];
    throw ValidationError("dialog " + dialog_id + ": speaker " + speaker_id +
                          " is not a participant");
}

bool Dialog::has_tau() const {
    return std::any_of(utterances.begin(), utterances.end(),
                       [](const Utterance& u) { return u.kind == UtteranceKind::TAU; });
}

void Dialog::validate() const {
    const std::string where = "dialog " + dialog_id;
    if (dialog_id.empty()) throw ValidationError("dialog with empty dialog_id");
    if (participants[0].empty() || participants[1].empty())
        throw ValidationError(where + ": empty participant id");
    if (participants[0] == participants[1])
        throw ValidationError(where + ": participants must be two distinct speakers");
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        const Utterance& u = utterances[i];
        std::string at = where + ", utterance " + std::to_string(i);
        if (!has_participant(u.speaker_id))
            throw ValidationError(at + ": speaker " + u.speaker_id + " is not a participant");
        check_single_line(u.text, at);
        if (u.kind == UtteranceKind::TAU) {
            if (i + 1 >= utterances.size())
                throw ValidationError(at + ": think-aloud utterance has no following utterance");
            const Utterance& next = utterances[i + 1];
            if (next.kind != UtteranceKind::Original || next.speaker_id != u.speaker_id)
                throw ValidationError(at +
                                      ": think-aloud utterance must be immediately followed by "
                                      "an original utterance of the same speaker");
        }
    }
}

void SpeakerProfile::validate() const {
    if (speaker_id.empty()) throw ValidationError("profile with empty speaker_id");
    for (Trait t : kAllTraits) {
        double v = traits[t];
        if (v < 1.0 || v > 7.0)
            throw ValidationError("profile " + speaker_id + ": trait " +
                                  std::string(1, trait_code(t)) + " = " + format_number(v, 6) +
                                  " outside [1, 7]");
    }
}

const Dialog* Corpus::find_dialog(const std::string& dialog_id) const {
    for (const auto& d : dialogs)
        if (d.dialog_id == dialog_id) return &d;
    return nullptr;
}

std::map<std::string, std::vector<std::string>> Corpus::dialogs_by_speaker() const {
    std::map<std::string, std::vector<std::string>> by_speaker;
    for (const auto& d : dialogs) {
        by_speaker[d.participants[0]].push_back(d.dialog_id);
        by_speaker[d.participants[1]].push_back(d.dialog_id);
    }
    return by_speaker;
}

json dialog_to_json(const Dialog& dialog) {
    json utts = json::array();
    for (const auto& u : dialog.utterances) {
        json ju = {{"speaker_id", u.speaker_id}, {"text", u.text}};
        if (u.kind == UtteranceKind::TAU) ju["kind"] = "tau";
        utts.push_back(std::move(ju));
    }
    return json{{"dialog_id", dialog.dialog_id},
                {"participants", {dialog.participants[0], dialog.participants[1]}},
                {"utterances", std::move(utts)}};
}

Dialog dialog_from_json(const json& j, const std::string& where) {
    try {
        Dialog d;
        d.dialog_id = j.at("dialog_id").get<std::string>();
        const auto& parts = j.at("participants");
        if (!parts.is_array() || parts.size() != 2)
            throw ValidationError("dialog " + d.dialog_id + " (" + where +
                                  "): participants must list exactly 2 speakers");
        d.participants[0] = parts[0].get<std::string>();
        d.participants[1] = parts[1].get<std::string>();
        for (const auto& ju : j.at("utterances")) {
            Utterance u;
            u.speaker_id = ju.at("speaker_id").get<std::string>();
            u.text = ju.at("text").get<std::string>();
            if (ju.contains("kind")) {
                std::string kind = ju["kind"].get<std::string>();
                if (kind == "tau")
                    u.kind = UtteranceKind::TAU;
                else if (kind == "original")
                    u.kind = UtteranceKind::Original;
                else
                    throw ValidationError("dialog " + d.dialog_id + " (" + where +
                                          "): unknown utterance kind '" + kind + "'");
            }
            d.utterances.push_back(std::move(u));
        }
        d.validate();
        return d;
    } catch (const json::exception& e) {
        throw FileParseError(where + ": malformed dialog record: " + e.what());
    }
}

json profile_to_json(const SpeakerProfile& profile) {
    json j{{"speaker_id", profile.speaker_id}};
    for (Trait t : kAllTraits) j[std::string(1, trait_code(t))] = profile.traits[t];
    if (!profile.extras.empty()) {
        json extras = json::object();
        for (const auto& [k, v] : profile.extras) extras[k] = v;
        j["extras"] = std::move(extras);
    }
    return j;
}

SpeakerProfile profile_from_json(const json& j, const std::string& where) {
    try {
        SpeakerProfile p;
        p.speaker_id = j.at("speaker_id").get<std::string>();
        for (Trait t : kAllTraits) {
            std::string key(1, trait_code(t));
            if (!j.contains(key))
                throw ValidationError("profile " + p.speaker_id + " (" + where +
                                      "): missing trait " + key);
            p.traits[t] = j.at(key).get<double>();
        }
        if (j.contains("extras")) {
            for (auto it = j["extras"].begin(); it != j["extras"].end(); ++it)
                p.extras.emplace_back(it.key(), it.value().is_string()
                                                    ? it.value().get<std::string>()
                                                    : it.value().dump());
        }
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw FileParseError(where + ": malformed profile record: " + e.what());
    }
}

std::vector<Dialog> load_dialogs(const std::filesystem::path& path, JsonlFile* meta) {
    std::vector<Dialog> dialogs;
    std::set<std::string> seen;
    read_jsonl(path, meta, [&](const json& j, std::size_t line_no) {
        std::string where = path.filename().string() + ":" + std::to_string(line_no);
        Dialog d = dialog_from_json(j, where);
        if (!seen.insert(d.dialog_id).second)
            throw ValidationError(where + ": duplicate dialog_id " + d.dialog_id);
        dialogs.push_back(std::move(d));
    });
    return dialogs;
}

void save_dialogs(const std::vector<Dialog>& dialogs, const std::filesystem::path& path,
                  const std::optional<json>& provenance) {
    std::vector<json> records;
    records.reserve(dialogs.size());
    for (const auto& d : dialogs) records.push_back(dialog_to_json(d));
    write_jsonl(path, provenance, records);
}

std::map<std::string, SpeakerProfile> load_profiles(const std::filesystem::path& path,
                                                    JsonlFile* meta) {
    std::map<std::string, SpeakerProfile> profiles;
    read_jsonl(path, meta, [&](const json& j, std::size_t line_no) {
        std::string where = path.filename().string() + ":" + std::to_string(line_no);
        SpeakerProfile p = profile_from_json(j, where);
        if (!profiles.emplace(p.speaker_id, p).second)
            throw ValidationError(where + ": duplicate profile for speaker " + p.speaker_id);
    });
    return profiles;
}

void save_profiles(const std::map<std::string, SpeakerProfile>& profiles,
                   const std::filesystem::path& path, const std::optional<json>& provenance) {
    std::vector<json> records;
    records.reserve(profiles.size());
    for (const auto& [id, p] : profiles) records.push_back(profile_to_json(p));
    write_jsonl(path, provenance, records);
}

Corpus load_corpus(const std::filesystem::path& dialogs_path,
                   const std::filesystem::path& profiles_path) {
    Corpus corpus;
    corpus.dialogs = load_dialogs(dialogs_path);
    corpus.profiles = load_profiles(profiles_path);
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dialogs_path,
                 const std::filesystem::path& profiles_path,
                 const std::optional<json>& provenance) {
    save_dialogs(corpus.dialogs, dialogs_path, provenance);
    save_profiles(corpus.profiles, profiles_path, provenance);
}

std::vector<AugmentedDialog> load_augmented(const std::filesystem::path& path, JsonlFile* meta) {
    std::vector<AugmentedDialog> out;
    read_jsonl(path, meta, [&](const json& j, std::size_t line_no) {
        std::string where = path.filename().string() + ":" + std::to_string(line_no);
        AugmentedDialog a;
        a.dialog = dialog_from_json(j, where);
        try {
            a.target_speaker_id = j.at("target_speaker_id").get<std::string>();
        } catch (const json::exception& e) {
            throw FileParseError(where + ": missing target_speaker_id: " + e.what());
        }
        if (!a.dialog.has_participant(a.target_speaker_id))
            throw ValidationError(where + ": target speaker " + a.target_speaker_id +
                                  " does not participate in dialog " + a.dialog.dialog_id);
        out.push_back(std::move(a));
    });
    return out;
}

void save_augmented(const std::vector<AugmentedDialog>& dialogs,
                    const std::filesystem::path& path, const std::optional<json>& provenance) {
    std::vector<json> records;
    records.reserve(dialogs.size());
    for (const auto& a : dialogs) {
        json j = dialog_to_json(a.dialog);
        j["target_speaker_id"] = a.target_speaker_id;
        records.push_back(std::move(j));
    }
    write_jsonl(path, provenance, records);
}

std::vector<std::string> select_speakers(const Corpus& corpus, std::size_t min_dialogs,
                                         std::size_t n, std::uint64_t seed) {
    std::vector<std::string> eligible;
    for (const auto& [speaker, dialog_ids] : corpus.dialogs_by_speaker())
        if (dialog_ids.size() >= min_dialogs) eligible.push_back(speaker);
    if (eligible.size() < n)
        throw ValidationError("only " + std::to_string(eligible.size()) + " speakers have >= " +
                              std::to_string(min_dialogs) + " dialogs, need " + std::to_string(n));
    std::mt19937_64 rng(mix_seed(seed, "select_speakers"));
    deterministic_shuffle(eligible, rng);
    eligible.resize(n);
    std::sort(eligible.begin(), eligible.end());
    return eligible;
}

CorpusSplit split_per_speaker(const Corpus& corpus, const std::string& speaker_id,
                              const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train < 1 || ratios.validation < 1 || ratios.test < 1)
        throw ValidationError("split ratios must all be positive");
    std::vector<std::string> ids;
    for (const auto& d : corpus.dialogs)
        if (d.has_participant(speaker_id)) ids.push_back(d.dialog_id);
    std::sort(ids.begin(), ids.end());
    std::size_t n = ids.size();
    if (n < 3)
        throw ValidationError("speaker " + speaker_id + " has " + std::to_string(n) +
                              " dialogs; need at least 3 to fill train/validation/test");
    std::mt19937_64 rng(mix_seed(seed, "split:" + speaker_id));
    deterministic_shuffle(ids, rng);

    double sum = ratios.train + ratios.validation + ratios.test;
    auto floor_part = [&](int part) {
        return static_cast<std::size_t>(static_cast<double>(n) * part / sum);
    };
    std::size_t n_val = std::max<std::size_t>(1, floor_part(ratios.validation));
    std::size_t n_test = std::max<std::size_t>(1, floor_part(ratios.test));
    if (n_val + n_test >= n)
        throw ValidationError("speaker " + speaker_id + ": too few dialogs (" + std::to_string(n) +
                              ") to populate all three parts");
    std::size_t n_train = n - n_val - n_test;  // floors' remainder goes to train

    CorpusSplit split;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.validation.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test.assign(ids.begin() + n_train + n_val, ids.end());
    return split;
}

}  // namespace taupipe
