#pragma once

#include <array>
#include <optional>
#include <string>

namespace taupipe {

// Big Five personality dimensions, each scored on a 1..7 scale.
enum class Trait { Openness = 0, Conscientiousness, Extraversion, Agreeableness, Neuroticism };

inline constexpr std::array<Trait, 5> kAllTraits = {
    Trait::Openness, Trait::Conscientiousness, Trait::Extraversion, Trait::Agreeableness,
    Trait::Neuroticism};

char trait_code(Trait t);                           // 'O' 'C' 'E' 'A' 'N'
const char* trait_name(Trait t);                    // "Openness" ...
std::optional<Trait> trait_from_code(char code);    // accepts upper case only
std::optional<Trait> trait_from_string(const std::string& s);  // code or full name

// One real value per trait, indexable by Trait.
struct TraitVector {
    std::array<double, 5> values{};

    double& operator[](Trait t) { return values[static_cast<std::size_t>(t)]; }
    double operator[](Trait t) const { return values[static_cast<std::size_t>(t)]; }

    bool operator==(const TraitVector&) const = default;

    bool in_scale_range() const {
        for (double v : values)
            if (v < 1.0 || v > 7.0) return false;
        return true;
    }

    double mean() const {
        double s = 0;
        for (double v : values) s += v;
        return s / 5.0;
    }
};

}  // namespace taupipe
