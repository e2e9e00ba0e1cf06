#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "imugest/ingest.hpp"
#include "imugest/labels.hpp"
#include "imugest/numerics.hpp"

namespace imugest {

inline constexpr double kGravity = 9.81;

struct SynthConfig {
    double sample_rate = 100.0;     // Hz
    double duration_mean = 6.12;    // seconds per gesture
    double duration_jitter = 0.10;  // +- fraction, uniform
    double noise_std_acc = 0.05;    // m/s^2, white
    double noise_std_gyro = 0.01;   // rad/s, white
    double amplitude = 0.15;        // m
    double speed_warp = 0.3;        // max |a| of the time warp u = tau + a sin(2 pi tau) / (2 pi)
    double wobble_std = 0.03;       // rad/s, band-limited gyro wobble
    double wobble_cutoff = 2.0;     // Hz
    double rotation_gain = 0.3;     // yaw rate as a fraction of path turn rate (circle, semicircle)
    double idle_min = 1.0;          // s of stillness between gestures
    double idle_max = 2.0;
    double personality_spread = 0.15;  // per-participant speed/amplitude/noise variation
    double max_tilt = 0.0;             // rad, per-participant device tilt (off by default)
    std::uint64_t seed = 1;

    void validate() const;
};

/// Per-participant habits. The neutral personality changes nothing.
struct Personality {
    double speed = 1.0;      // multiplies gesture duration
    double amplitude = 1.0;  // multiplies SynthConfig::amplitude
    double noise = 1.0;      // multiplies all noise levels
    double tilt_x = 0.0;     // rad, rotation of gravity about device x
    double tilt_y = 0.0;
};

Personality make_personality(const SynthConfig& config, std::uint64_t participant_index);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// The gesture's path p(u), u in [0, 1], in metres in the device xy-plane.
/// semicircle(u) = circle(u / 2) and tilde(u) = infinity(u / 2).
/// Stroke gestures (triangle, square, zigzag, vline, hline) ease in and out
/// of every corner.
Point2 trajectory_point(GestureLabel label, double u, double amplitude);

/// Gestures whose synthetic gyroscope carries a yaw profile.
bool rotation_bearing(GestureLabel label);

struct Trajectory {
    GestureLabel label = GestureLabel::circle;
    double sample_rate = 100.0;
    std::vector<Point2> positions;
};

/// Samples the path over a jittered duration with a random smooth time warp.
Trajectory generate_trajectory(GestureLabel label, const SynthConfig& config, Rng& rng,
                               const Personality& personality = {});

/// Accelerometer = second central difference of position + gravity + noise;
/// gyroscope = band-limited wobble (+ yaw profile) + noise. Timestamps are
/// start_ms + round(i * 1000 / sample_rate).
std::vector<SensorSample> trajectory_to_imu(const Trajectory& trajectory, const SynthConfig& config,
                                            Rng& rng, const Personality& personality = {},
                                            std::int64_t start_ms = 0);

struct SynthSession {
    std::vector<SensorSample> samples;
    std::vector<GestureEvent> events;  // one per gesture, in performed order
};

/// All ten gestures in random order separated by idle stretches.
SynthSession generate_session(const SynthConfig& config, const Personality& personality, Rng& rng,
                              std::int64_t start_ms);

std::string participant_alias(std::size_t index);  // "p1", "p2", ...
std::string session_name(std::size_t index);       // "s01", "s02", ...

/// Writes <dir>/<alias>/<session>/{sensors,events}.csv plus participant.csv.
void generate_dataset(const SynthConfig& config, std::size_t participants,
                      std::size_t sessions_per_participant, const std::filesystem::path& dir);

}  // namespace imugest
