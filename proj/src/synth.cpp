#include "imugest/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "imugest/container.hpp"

namespace fs = std::filesystem;

namespace imugest {

namespace {

constexpr double kPi = std::numbers::pi;

double ease(double t) { return t * t * (3.0 - 2.0 * t); }

template <std::size_t N>
Point2 polyline(const std::array<Point2, N>& v, double u) {
    constexpr std::size_t segs = N - 1;
    const double s = std::clamp(u, 0.0, 1.0) * static_cast<double>(segs);
    const std::size_t k = std::min(static_cast<std::size_t>(s), segs - 1);
    const double e = ease(s - static_cast<double>(k));
    return {v[k].x + e * (v[k + 1].x - v[k].x), v[k].y + e * (v[k + 1].y - v[k].y)};
}

}  // namespace

void SynthConfig::validate() const {
    require(sample_rate > 0.0 && sample_rate <= 1000.0, "synth: sample_rate must lie in (0, 1000] Hz");
    require(duration_mean > 0.0, "synth: duration_mean must be positive");
    require(duration_jitter >= 0.0 && duration_jitter < 1.0, "synth: duration_jitter must lie in [0, 1)");
    require(noise_std_acc >= 0.0 && noise_std_gyro >= 0.0 && wobble_std >= 0.0,
            "synth: noise parameters must be >= 0");
    require(amplitude > 0.0, "synth: amplitude must be positive");
    require(speed_warp >= 0.0 && speed_warp < 1.0, "synth: speed_warp must lie in [0, 1)");
    require(wobble_cutoff > 0.0, "synth: wobble_cutoff must be positive");
    require(idle_min >= 0.0 && idle_max >= idle_min, "synth: idle range is invalid");
    require(personality_spread >= 0.0 && personality_spread < 1.0,
            "synth: personality_spread must lie in [0, 1)");
    require(max_tilt >= 0.0, "synth: max_tilt must be >= 0");
}

Personality make_personality(const SynthConfig& config, std::uint64_t participant_index) {
    Rng rng = Rng(config.seed).split("personality").split(participant_index);
    const double s = config.personality_spread;
    Personality p;
    p.speed = 1.0 + rng.uniform(-s, s);
    p.amplitude = 1.0 + rng.uniform(-s, s);
    p.noise = 1.0 + rng.uniform(-s, s);
    p.tilt_x = rng.uniform(-config.max_tilt, config.max_tilt);
    p.tilt_y = rng.uniform(-config.max_tilt, config.max_tilt);
    return p;
}

Point2 trajectory_point(GestureLabel label, double u, double a) {
    switch (label) {
        case GestureLabel::circle:
            return {a * (std::cos(2.0 * kPi * u) - 1.0), a * std::sin(2.0 * kPi * u)};
        case GestureLabel::semicircle:
            return trajectory_point(GestureLabel::circle, 0.5 * u, a);
        case GestureLabel::infinity:
            return {-a * std::cos(2.0 * kPi * u), 0.5 * a * std::sin(4.0 * kPi * u)};
        case GestureLabel::tilde:
            return trajectory_point(GestureLabel::infinity, 0.5 * u, a);
        case GestureLabel::triangle:
            return polyline(std::array<Point2, 4>{{{0, 0}, {2 * a, 0}, {a, 1.7 * a}, {0, 0}}}, u);
        case GestureLabel::square:
            return polyline(
                std::array<Point2, 5>{{{0, 0}, {2 * a, 0}, {2 * a, 2 * a}, {0, 2 * a}, {0, 0}}}, u);
        case GestureLabel::zigzag:
            return polyline(std::array<Point2, 5>{{{0, 0}, {0.5 * a, a}, {a, 0}, {1.5 * a, a}, {2 * a, 0}}},
                            u);
        case GestureLabel::vline:
            return polyline(std::array<Point2, 2>{{{0, 0}, {0, 2 * a}}}, u);
        case GestureLabel::hline:
            return polyline(std::array<Point2, 2>{{{0, 0}, {2 * a, 0}}}, u);
        case GestureLabel::letter_s: {
            // Upper arc counter-clockwise, lower arc clockwise, each 270 degrees,
            // meeting at the origin with matching tangents.
            const double r = 0.75 * a;
            if (u <= 0.5) {
                const double th = 1.5 * kPi * (2.0 * u);
                return {r * std::cos(th), r + r * std::sin(th)};
            }
            const double th = 0.5 * kPi - 1.5 * kPi * (2.0 * u - 1.0);
            return {r * std::cos(th), -r + r * std::sin(th)};
        }
    }
    return {};
}

bool rotation_bearing(GestureLabel label) {
    return label == GestureLabel::circle || label == GestureLabel::semicircle;
}

Trajectory generate_trajectory(GestureLabel label, const SynthConfig& config, Rng& rng,
                               const Personality& personality) {
    config.validate();
    const double duration = config.duration_mean * personality.speed *
                            (1.0 + config.duration_jitter * rng.uniform(-1.0, 1.0));
    const auto n = static_cast<std::size_t>(std::max<long long>(3, std::llround(duration * config.sample_rate)));
    const double warp = rng.uniform(-config.speed_warp, config.speed_warp);
    const double amp = config.amplitude * personality.amplitude;

    Trajectory tr;
    tr.label = label;
    tr.sample_rate = config.sample_rate;
    tr.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i) / static_cast<double>(n - 1);
        const double u = tau + warp * std::sin(2.0 * kPi * tau) / (2.0 * kPi);
        tr.positions[i] = trajectory_point(label, u, amp);
    }
    return tr;
}

std::vector<SensorSample> trajectory_to_imu(const Trajectory& trajectory, const SynthConfig& config,
                                            Rng& rng, const Personality& personality,
                                            std::int64_t start_ms) {
    config.validate();
    const auto& p = trajectory.positions;
    const std::size_t n = p.size();
    require(n >= 3, "trajectory_to_imu: need at least 3 position samples");
    const double rate = trajectory.sample_rate;
    const double rate2 = rate * rate;

    std::vector<Point2> acc(n), vel(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        acc[i] = {(p[i + 1].x - 2.0 * p[i].x + p[i - 1].x) * rate2,
                  (p[i + 1].y - 2.0 * p[i].y + p[i - 1].y) * rate2};
        vel[i] = {(p[i + 1].x - p[i - 1].x) * 0.5 * rate, (p[i + 1].y - p[i - 1].y) * 0.5 * rate};
    }
    acc[0] = acc[1];
    acc[n - 1] = acc[n - 2];
    vel[0] = vel[1];
    vel[n - 1] = vel[n - 2];

    const double cx = std::cos(personality.tilt_x), sx = std::sin(personality.tilt_x);
    const double cy = std::cos(personality.tilt_y), sy = std::sin(personality.tilt_y);
    const std::array<double, 3> gravity{kGravity * sy, -kGravity * sx * cy, kGravity * cx * cy};

    const double noise_acc = config.noise_std_acc * personality.noise;
    const double noise_gyro = config.noise_std_gyro * personality.noise;
    const double wobble = config.wobble_std * personality.noise;
    const double alpha = std::exp(-2.0 * kPi * config.wobble_cutoff / rate);
    const double innov = std::sqrt(1.0 - alpha * alpha) * wobble;
    std::array<double, 3> w{wobble * rng.normal(), wobble * rng.normal(), wobble * rng.normal()};

    const bool yaw = rotation_bearing(trajectory.label);
    std::vector<SensorSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        SensorSample& s = out[i];
        s.t_ms = start_ms + std::llround(static_cast<double>(i) * 1000.0 / rate);
        s.acc = {acc[i].x + gravity[0], acc[i].y + gravity[1], gravity[2]};
        if (i > 0) {
            for (auto& wk : w) {
                wk = alpha * wk + innov * rng.normal();
            }
        }
        s.gyro = w;
        if (yaw) {
            const double speed2 = vel[i].x * vel[i].x + vel[i].y * vel[i].y;
            if (speed2 > 1e-12) {
                s.gyro[2] += config.rotation_gain * (vel[i].x * acc[i].y - vel[i].y * acc[i].x) / speed2;
            }
        }
        for (auto& v : s.acc) {
            v += noise_acc * rng.normal();
        }
        for (auto& v : s.gyro) {
            v += noise_gyro * rng.normal();
        }
    }
    return out;
}

SynthSession generate_session(const SynthConfig& config, const Personality& personality, Rng& rng,
                              std::int64_t start_ms) {
    config.validate();
    std::vector<GestureLabel> order;
    for (int i = 0; i < kNumGestures; ++i) {
        order.push_back(static_cast<GestureLabel>(i));
    }
    rng.shuffle(order);

    const auto step_ms = std::llround(1000.0 / config.sample_rate);
    SynthSession session;
    std::int64_t next_ms = start_ms;
    auto append = [&](const std::vector<SensorSample>& seg) {
        session.samples.insert(session.samples.end(), seg.begin(), seg.end());
        next_ms = session.samples.back().t_ms + step_ms;
    };
    auto idle = [&] {
        const auto n = static_cast<std::size_t>(std::max<long long>(
            3, std::llround(rng.uniform(config.idle_min, config.idle_max) * config.sample_rate)));
        Trajectory still;
        still.label = GestureLabel::hline;
        still.sample_rate = config.sample_rate;
        still.positions.assign(n, Point2{});
        append(trajectory_to_imu(still, config, rng, personality, next_ms));
    };

    for (auto label : order) {
        idle();
        const Trajectory tr = generate_trajectory(label, config, rng, personality);
        const auto seg = trajectory_to_imu(tr, config, rng, personality, next_ms);
        session.events.push_back({label, seg.front().t_ms, seg.back().t_ms});
        append(seg);
    }
    idle();
    return session;
}

std::string participant_alias(std::size_t index) { return "p" + std::to_string(index + 1); }

std::string session_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%02zu", index + 1);
    return buf;
}

void generate_dataset(const SynthConfig& config, std::size_t participants,
                      std::size_t sessions_per_participant, const fs::path& dir) {
    config.validate();
    const Rng root(config.seed);
    // Fixed epoch so that output does not depend on the wall clock.
    constexpr std::int64_t kEpochMs = 1'530'000'000'000;
    for (std::size_t p = 0; p < participants; ++p) {
        const std::string alias = participant_alias(p);
        const fs::path pdir = dir / alias;
        fs::create_directories(pdir);
        ParticipantMeta meta;
        meta.alias = alias;
        meta.age = 24 + static_cast<int>(p % 5);
        meta.occupation = "student";
        write_file_atomic(pdir / kParticipantFile, format_participant_csv(meta));

        const Personality personality = make_personality(config, p);
        for (std::size_t s = 0; s < sessions_per_participant; ++s) {
            Rng rng = root.split("session").split(p * 1'000'003ULL + s);
            const std::int64_t start =
                kEpochMs + static_cast<std::int64_t>(p) * 86'400'000 + static_cast<std::int64_t>(s) * 600'000;
            const SynthSession session = generate_session(config, personality, rng, start);
            const fs::path sdir = pdir / session_name(s);
            fs::create_directories(sdir);
            write_file_atomic(sdir / kSensorFile, format_sensor_csv(session.samples));
            write_file_atomic(sdir / kEventFile, format_timestamp_csv(session.events));
        }
    }
}

}  // namespace imugest
