#include "taupipe/traits.hpp"

namespace taupipe {

char trait_code(Trait t) {
    switch (t) {
        case Trait::Openness: return 'O';
        case Trait::Conscientiousness: return 'C';
        case Trait::Extraversion: return 'E';
        case Trait::Agreeableness: return 'A';
        case Trait::Neuroticism: return 'N';
    }
    return '?';
}

const char* trait_name(Trait t) {
    switch (t) {
        case Trait::Openness: return "Openness";
        case Trait::Conscientiousness: return "Conscientiousness";
        case Trait::Extraversion: return "Extraversion";
        case Trait::Agreeableness: return "Agreeableness";
        case Trait::Neuroticism: return "Neuroticism";
    }
    return "?";
}

std::optional<Trait> trait_from_code(char code) {
    switch (code) {
        case 'O': return Trait::Openness;
        case 'C': return Trait::Conscientiousness;
        case 'E': return Trait::Extraversion;
        case 'A': return Trait::Agreeableness;
        case 'N': return Trait::Neuroticism;
    }
    return std::nullopt;
}

std::optional<Trait> trait_from_string(const std::string& s) {
    if (s.size() == 1) return trait_from_code(s[0]);
    for (Trait t : kAllTraits)
        if (s == trait_name(t)) return t;
    return std::nullopt;
}

}  // namespace taupipe
