#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imugest/ingest.hpp"
#include "imugest/labels.hpp"
#include "imugest/numerics.hpp"

namespace imugest {

inline constexpr std::array<std::string_view, 6> kChannelNames = {
    "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z",
};

inline constexpr std::size_t kDefaultWindowLen = 250;
inline constexpr std::size_t kDefaultStep = 50;
inline constexpr std::size_t kDefaultGravitySamples = 25;
inline constexpr double kDegenerateStd = 1e-9;

struct Window {
    Array2 values;  // window_len x channels
    GestureLabel label = GestureLabel::circle;
    std::string participant;
    std::size_t recording = 0;  // index of the source recording in its dataset

    friend bool operator==(const Window&, const Window&) = default;
};

struct WindowedDataset {
    std::vector<Window> windows;
    std::size_t window_len = kDefaultWindowLen;
    std::size_t step = kDefaultStep;
    std::vector<std::string> channel_names{kChannelNames.begin(), kChannelNames.end()};

    std::size_t channels() const noexcept { return channel_names.size(); }

    friend bool operator==(const WindowedDataset&, const WindowedDataset&) = default;
};

/// floor((n - window_len) / step) + 1 for n >= window_len, else 0.
std::size_t window_count(std::size_t n, std::size_t window_len, std::size_t step);

/// The recording as an n x 6 matrix in kChannelNames order.
Array2 recording_matrix(const GestureRecording& recording);

/// Windows starting at 0, step, 2*step, ...; each inherits the recording's
/// label. Recordings shorter than window_len give no windows.
std::vector<Window> slide_windows(const GestureRecording& recording,
                                  std::size_t window_len = kDefaultWindowLen,
                                  std::size_t step = kDefaultStep);

/// Windows every recording; Window::recording is the index into `recordings`.
/// Recordings too short to yield a window are listed in `warnings`.
WindowedDataset make_windows(const std::vector<GestureRecording>& recordings,
                             std::size_t window_len, std::size_t step,
                             std::vector<std::string>* warnings = nullptr);

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;  // population standard deviation

    bool degenerate(std::size_t channel) const { return std[channel] < kDegenerateStd; }

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Per-channel mean and population std over every sample of every window.
NormalizationStats zscore_fit(const WindowedDataset& train);
double zscore_value(double v, double mean, double std);
void zscore_apply(Window& window, const NormalizationStats& stats);
void zscore_apply(WindowedDataset& dataset, const NormalizationStats& stats);

/// Subtracts the mean accelerometer vector of the first `k` samples (all of
/// them if the recording is shorter) from every accelerometer row.
GestureRecording remove_gravity(GestureRecording recording, std::size_t k = kDefaultGravitySamples);

/// Removes one named channel from every window and from the channel list.
WindowedDataset drop_axis(WindowedDataset dataset, std::string_view axis);
NormalizationStats drop_axis(NormalizationStats stats, std::size_t channel);

/// Partition at participant granularity.
std::pair<std::vector<GestureRecording>, std::vector<GestureRecording>> split_by_participant(
    const std::vector<GestureRecording>& recordings, const std::set<std::string>& validation_aliases);

std::vector<GestureRecording> filter_participants(const std::vector<GestureRecording>& recordings,
                                                  const std::set<std::string>& aliases);

/// Mean over the six channels of the population variance of all samples
/// the participant recorded.
double participant_variance_score(const std::vector<GestureRecording>& recordings,
                                  const std::string& alias);

/// The k participants with the smallest variance score, ties by alias.
std::vector<std::string> select_low_variance_participants(
    const std::vector<GestureRecording>& recordings, std::size_t k);

/// Distinct aliases in first-seen order.
std::vector<std::string> participants_of(const std::vector<GestureRecording>& recordings);

/// Everything between segmented recordings and model-ready windows, except
/// the normalization statistics which are fit separately.
struct PreprocessOptions {
    std::size_t window_len = kDefaultWindowLen;
    std::size_t step = kDefaultStep;
    bool remove_gravity = false;
    std::size_t gravity_samples = kDefaultGravitySamples;
    std::optional<std::string> drop_axis;

    friend bool operator==(const PreprocessOptions&, const PreprocessOptions&) = default;
};

WindowedDataset prepare_windows(const std::vector<GestureRecording>& recordings,
                                const PreprocessOptions& options,
                                std::vector<std::string>* warnings = nullptr);

std::vector<std::string> channels_after(const PreprocessOptions& options);

// Window cache: checkpoint-style container, text manifest then raw doubles.
std::string encode_windows(const WindowedDataset& dataset);
WindowedDataset decode_windows(std::string_view bytes);
void save_windows(const WindowedDataset& dataset, const std::filesystem::path& path);
WindowedDataset load_windows(const std::filesystem::path& path);

}  // namespace imugest
