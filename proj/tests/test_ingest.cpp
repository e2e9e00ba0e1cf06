#include <doctest.h>

#include <filesystem>
#include <string>

#include "imugest/container.hpp"
#include "imugest/ingest.hpp"
#include "imugest/numerics.hpp"

using namespace imugest;
namespace fs = std::filesystem;

namespace {

std::size_t corrupt_line(std::string_view text, bool events = false) {
    try {
        if (events) {
            parse_timestamp_csv_text(text, "f.csv");
        } else {
            parse_sensor_csv_text(text, "f.csv");
        }
    } catch (const CorruptFileError& e) {
        return e.line();
    }
    FAIL("expected a corrupt-file error");
    return 0;
}

std::string message_of(std::string_view text) {
    try {
        parse_timestamp_csv_text(text, "f.csv");
    } catch (const CorruptFileError& e) {
        return e.what();
    }
    return {};
}

SensorTrace ramp_trace() {
    SensorTrace tr;
    tr.participant.alias = "p1";
    tr.session_id = "s01";
    for (std::int64_t t = 0; t <= 500; t += 10) {
        SensorSample s;
        s.t_ms = t;
        s.acc = {0.0, 0.0, 9.81};
        tr.samples.push_back(s);
    }
    return tr;
}

}  // namespace

TEST_CASE("sensor row maps fields directly") {
    const auto s = parse_sensor_csv_text("1000,0.0,0.0,9.81,0.0,0.0,0.0\n", "x");
    REQUIRE(s.size() == 1);
    CHECK(s[0].t_ms == 1000);
    CHECK(s[0].acc == std::array<double, 3>{0.0, 0.0, 9.81});
    CHECK(s[0].gyro == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("sensor header is optional") {
    const std::string body = "10,1,2,3,4,5,6\n20,1,2,3,4,5,6\n";
    const auto a = parse_sensor_csv_text(body, "x");
    const auto b = parse_sensor_csv_text(std::string(kSensorHeader) + "\n" + body, "x");
    CHECK(a == b);
    CHECK(a.size() == 2);
}

TEST_CASE("sensor errors carry the line number") {
    CHECK(corrupt_line("10,1,2,3,4,5\n") == 1);
    CHECK(corrupt_line("t,a,b,c,d,e,f\n10,1,2,3,4,5,6\n20,1,2,3,x,5,6\n") == 3);
    CHECK(corrupt_line("10,1,2,3,4,5,6\n10,1,2,3,4,5,6\n") == 2);
    CHECK(corrupt_line("10,1,2,3,4,5,6\n5,1,2,3,4,5,6\n") == 2);
    CHECK(corrupt_line("10,1,2,3,4,5,nan\n") == 1);
}

TEST_CASE("event rows") {
    const auto e = parse_timestamp_csv_text("circle,100,300\n", "x");
    REQUIRE(e.size() == 1);
    CHECK(e[0] == GestureEvent{GestureLabel::circle, 100, 300});
    const auto ci = parse_timestamp_csv_text("label,start_ms,end_ms\nLETTER_S,5,6\nCircle,1,2\n", "x");
    REQUIRE(ci.size() == 2);
    CHECK(ci[0].label == GestureLabel::circle);
    CHECK(ci[1].label == GestureLabel::letter_s);
}

TEST_CASE("event errors") {
    CHECK(corrupt_line("circle,300,100\n", true) == 1);
    CHECK(corrupt_line("circle,100,100\n", true) == 1);
    CHECK(corrupt_line("circle,100,300\ntilde,250,400\n", true) > 0);
    CHECK(corrupt_line("circle,100,300\nwave,400,500\n", true) == 2);
    const auto msg = message_of("wave,1,2\n");
    CHECK(msg.find("wave") != std::string::npos);
    CHECK(msg.find("semicircle") != std::string::npos);
    CHECK(msg.find("letter_s") != std::string::npos);
}

TEST_CASE("segmentation selects inclusive intervals") {
    const auto tr = ramp_trace();
    const auto recs = segment_recordings(tr, {{GestureLabel::circle, 100, 300}}, 0);
    REQUIRE(recs.size() == 1);
    // Oracle: enumerate the timestamps that fall in the interval.
    std::vector<std::int64_t> expect;
    for (const auto& s : tr.samples) {
        if (s.t_ms >= 100 && s.t_ms <= 300) {
            expect.push_back(s.t_ms);
        }
    }
    REQUIRE(recs[0].samples.size() == expect.size());
    CHECK(expect.size() == 21);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(recs[0].samples[i].t_ms == expect[i]);
    }
    CHECK(recs[0].label == GestureLabel::circle);
    CHECK(recs[0].participant.alias == "p1");
}

TEST_CASE("segmentation applies the clock offset") {
    const auto tr = ramp_trace();
    // t + 50 in [100, 300] means t in [50, 250].
    const auto recs = segment_recordings(tr, {{GestureLabel::tilde, 100, 300}}, 50);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].samples.front().t_ms == 50);
    CHECK(recs[0].samples.back().t_ms == 250);
}

TEST_CASE("segmentation reports empty events") {
    const auto tr = ramp_trace();
    CHECK_THROWS_AS(segment_recordings(tr, {{GestureLabel::circle, 1000, 2000}}, 0), EmptySegmentError);
    CHECK_THROWS_AS(segment_recordings(tr, {{GestureLabel::circle, 101, 109}}, 0), EmptySegmentError);
}

TEST_CASE("writers round trip through the parsers") {
    Rng rng(2);
    std::vector<SensorSample> samples;
    for (int i = 0; i < 50; ++i) {
        SensorSample s;
        s.t_ms = 1'530'000'000'000 + i * 10;
        for (auto& v : s.acc) {
            v = rng.normal();
        }
        for (auto& v : s.gyro) {
            v = rng.normal() * 1e-3;
        }
        samples.push_back(s);
    }
    CHECK(parse_sensor_csv_text(format_sensor_csv(samples), "x") == samples);
    const std::vector<GestureEvent> events{{GestureLabel::zigzag, 1, 5}, {GestureLabel::hline, 9, 12}};
    CHECK(parse_timestamp_csv_text(format_timestamp_csv(events), "x") == events);

    ParticipantMeta m;
    m.alias = "alice";
    m.gender = "female";
    m.handedness = Handedness::left;
    m.age = 31;
    m.occupation = "engineer";
    CHECK(parse_participant_csv_text(format_participant_csv(m), "x") == m);
}

TEST_CASE("participant metadata validation") {
    CHECK_THROWS_AS(parse_participant_csv_text("alias,gender,handedness,age,occupation\n,f,left,3,x\n", "x"),
                    CorruptFileError);
    CHECK_THROWS_AS(parse_participant_csv_text("alias,gender,handedness,age,occupation\na,f,left,0,x\n", "x"),
                    CorruptFileError);
    CHECK_THROWS_AS(parse_participant_csv_text("alias,gender,handedness,age,occupation\na,f,both,3,x\n", "x"),
                    CorruptFileError);
}

TEST_CASE("dataset scan separates corrupt sessions") {
    const fs::path root = fs::temp_directory_path() / "imugest_ingest_scan";
    fs::remove_all(root);
    auto put = [&](const fs::path& rel, const std::string& body) {
        fs::create_directories((root / rel).parent_path());
        write_file_atomic(root / rel, body);
    };
    std::string sensors;
    for (int t = 0; t <= 1000; t += 10) {
        sensors += std::to_string(t) + ",0,0,9.81,0,0,0\n";
    }
    put("p1/s01/sensors.csv", sensors);
    put("p1/s01/events.csv", "circle,100,300\nvline,400,600\n");
    put("p1/s02/sensors.csv", sensors);
    put("p1/s02/events.csv", "circle,300,100\n");
    put("p2/s01/sensors.csv", "0,1,2\n");
    put("p2/s01/events.csv", "circle,100,300\n");
    put("p2/s02/sensors.csv", sensors);
    put("p2/s03/sensors.csv", sensors);
    put("p2/s03/events.csv", "circle,5000,6000\n");

    const ScanResult scan = reject_corrupt(root);
    REQUIRE(scan.accepted.size() == 2);
    CHECK(scan.accepted[0].alias == "p1");
    CHECK(scan.accepted[0].session == "s01");
    CHECK(scan.accepted[1].session == "s03");
    CHECK(scan.report.size() == 3);

    const LoadedDataset ds = load_dataset(root);
    CHECK(ds.sessions == 1);
    CHECK(ds.report.size() == 4);
    REQUIRE(ds.recordings.size() == 2);
    CHECK(ds.recordings[0].label == GestureLabel::circle);
    CHECK(ds.recordings[1].label == GestureLabel::vline);
    CHECK(ds.recordings[1].samples.size() == 21);
    fs::remove_all(root);
}
