#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace cfaug {

// Stable integer codes; they appear in checkpoints and reports.
enum class Polarity : int { Negative = 0, Neutral = 1, Positive = 2 };

inline constexpr std::array<Polarity, 3> kAllPolarities = {
    Polarity::Negative, Polarity::Neutral, Polarity::Positive};

inline const std::string& to_string(Polarity p) {
    static const std::array<std::string, 3> names = {"negative", "neutral", "positive"};
    return names[static_cast<int>(p)];
}

inline Polarity parse_polarity(const std::string& s) {
    if (s == "negative") return Polarity::Negative;
    if (s == "neutral") return Polarity::Neutral;
    if (s == "positive") return Polarity::Positive;
    throw std::invalid_argument("unknown polarity: \"" + s + "\"");
}

inline int code(Polarity p) { return static_cast<int>(p); }

inline Polarity polarity_from_code(int c) {
    if (c < 0 || c > 2) throw std::invalid_argument("polarity code out of range: " + std::to_string(c));
    return static_cast<Polarity>(c);
}

}  // namespace cfaug
