#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace imugest {

/// The ten gestures. The integer value is the stable class index used by
/// the model, checkpoints and confusion matrices.
enum class GestureLabel : int {
    circle = 0,
    semicircle,
    infinity,
    tilde,
    triangle,
    square,
    zigzag,
    vline,
    hline,
    letter_s,
};

inline constexpr int kNumGestures = 10;

inline constexpr std::array<std::string_view, kNumGestures> kGestureNames = {
    "circle", "semicircle", "infinity", "tilde",  "triangle",
    "square", "zigzag",     "vline",    "hline",  "letter_s",
};

inline constexpr int to_index(GestureLabel l) noexcept { return static_cast<int>(l); }
inline constexpr std::string_view to_string(GestureLabel l) noexcept {
    return kGestureNames[static_cast<std::size_t>(l)];
}

GestureLabel label_from_index(int index);

/// Case-insensitive lookup; nullopt for unknown names.
std::optional<GestureLabel> parse_label(std::string_view name);

/// "circle, semicircle, ..." for diagnostics.
std::string valid_label_list();

}  // namespace imugest
