#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "imugest/labels.hpp"

namespace imugest {

/// One fused IMU reading. Accelerometer in m/s^2, gyroscope in rad/s, both
/// in device axes.
struct SensorSample {
    std::int64_t t_ms = 0;
    std::array<double, 3> acc{};
    std::array<double, 3> gyro{};

    friend bool operator==(const SensorSample&, const SensorSample&) = default;
};

enum class Handedness { left, right };

struct ParticipantMeta {
    std::string alias;
    std::string gender = "unspecified";
    Handedness handedness = Handedness::right;
    std::optional<int> age;
    std::string occupation;

    friend bool operator==(const ParticipantMeta&, const ParticipantMeta&) = default;
};

struct SensorTrace {
    ParticipantMeta participant;
    std::string session_id;
    std::vector<SensorSample> samples;  // strictly increasing t_ms
};

struct GestureEvent {
    GestureLabel label = GestureLabel::circle;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    friend bool operator==(const GestureEvent&, const GestureEvent&) = default;
};

struct GestureRecording {
    GestureLabel label = GestureLabel::circle;
    ParticipantMeta participant;
    std::string session_id;
    std::vector<SensorSample> samples;
};

/// A file that failed validation. `line` is 1-based, 0 when the problem is
/// not tied to one line.
class CorruptFileError : public std::runtime_error {
public:
    CorruptFileError(std::string file, std::size_t line, const std::string& reason);
    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

class EmptySegmentError : public std::runtime_error {
public:
    EmptySegmentError(const GestureEvent& event, const std::string& session);
    const GestureEvent& event() const noexcept { return event_; }

private:
    GestureEvent event_;
};

inline constexpr std::string_view kSensorHeader = "timestamp_ms,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z";
inline constexpr std::string_view kEventHeader = "label,start_ms,end_ms";

/// Rows `timestamp_ms,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z`; an optional
/// header line is skipped. `source` names the input in error messages.
std::vector<SensorSample> parse_sensor_csv_text(std::string_view text, const std::string& source);
SensorTrace parse_sensor_csv(const std::filesystem::path& path);

/// Rows `label,start_ms,end_ms`. Returned sorted by start time.
std::vector<GestureEvent> parse_timestamp_csv_text(std::string_view text, const std::string& source);
std::vector<GestureEvent> parse_timestamp_csv(const std::filesystem::path& path);

/// Writers producing exactly what the parsers accept; doubles use shortest
/// round-trip formatting so parse(format(x)) == x.
std::string format_sensor_csv(const std::vector<SensorSample>& samples);
std::string format_timestamp_csv(const std::vector<GestureEvent>& events);

std::string format_participant_csv(const ParticipantMeta& meta);
ParticipantMeta parse_participant_csv_text(std::string_view text, const std::string& source);

/// Cuts one recording per event: samples with start <= t + offset <= end.
/// Throws EmptySegmentError for an event that selects nothing.
std::vector<GestureRecording> segment_recordings(const SensorTrace& trace,
                                                 const std::vector<GestureEvent>& events,
                                                 std::int64_t clock_offset_ms);

// -- dataset directories ----------------------------------------------------
//
//   <root>/<alias>/participant.csv          (optional metadata)
//   <root>/<alias>/<session>/sensors.csv
//   <root>/<alias>/<session>/events.csv

inline constexpr std::string_view kSensorFile = "sensors.csv";
inline constexpr std::string_view kEventFile = "events.csv";
inline constexpr std::string_view kParticipantFile = "participant.csv";

struct FilePair {
    std::string alias;
    std::string session;
    std::filesystem::path sensors;
    std::filesystem::path events;
};

struct Rejection {
    std::filesystem::path path;
    std::string reason;
};

struct ScanResult {
    std::vector<FilePair> accepted;
    std::vector<Rejection> report;
};

/// Pairs sensor and event files and parses both; anything that fails goes
/// to the report instead of the accepted list. Order is lexicographic by
/// alias then session.
ScanResult reject_corrupt(const std::filesystem::path& dataset_dir);

struct LoadedDataset {
    std::vector<GestureRecording> recordings;
    std::vector<Rejection> report;
    std::size_t sessions = 0;  // accepted sessions
};

/// reject_corrupt followed by segmentation; sessions whose segmentation
/// fails are rejected whole.
LoadedDataset load_dataset(const std::filesystem::path& dataset_dir, std::int64_t clock_offset_ms = 0);

}  // namespace imugest
