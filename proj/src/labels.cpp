#include "imugest/labels.hpp"

#include <cctype>

#include "imugest/numerics.hpp"

namespace imugest {

GestureLabel label_from_index(int index) {
    require(index >= 0 && index < kNumGestures,
            "gesture index " + std::to_string(index) + " out of range");
    return static_cast<GestureLabel>(index);
}

std::optional<GestureLabel> parse_label(std::string_view name) {
    for (int i = 0; i < kNumGestures; ++i) {
        const auto candidate = kGestureNames[static_cast<std::size_t>(i)];
        if (candidate.size() != name.size()) {
            continue;
        }
        bool eq = true;
        for (std::size_t k = 0; k < name.size() && eq; ++k) {
            eq = std::tolower(static_cast<unsigned char>(name[k])) == candidate[k];
        }
        if (eq) {
            return static_cast<GestureLabel>(i);
        }
    }
    return std::nullopt;
}

std::string valid_label_list() {
    std::string out;
    for (auto n : kGestureNames) {
        if (!out.empty()) {
            out += ", ";
        }
        out += n;
    }
    return out;
}

}  // namespace imugest
