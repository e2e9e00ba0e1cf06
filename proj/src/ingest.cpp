#include "imugest/ingest.hpp"

#include <algorithm>
#include <cmath>

#include "imugest/container.hpp"

namespace fs = std::filesystem;

namespace imugest {

CorruptFileError::CorruptFileError(std::string file, std::size_t line, const std::string& reason)
    : std::runtime_error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         reason),
      file_(std::move(file)),
      line_(line) {}

EmptySegmentError::EmptySegmentError(const GestureEvent& event, const std::string& session)
    : std::runtime_error("empty segment: event " + std::string(to_string(event.label)) + " [" +
                         std::to_string(event.start_ms) + ", " + std::to_string(event.end_ms) +
                         "] in session '" + session + "' selects no samples"),
      event_(event) {}

namespace {

// Calls fn(line_no, fields) for every non-blank line; line numbers are 1-based.
template <class F>
void for_each_row(std::string_view text, F fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (!trim(line).empty()) {
            fn(line_no, split(line, ','));
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
}

std::string read_or_throw(const fs::path& path) {
    try {
        return read_file(path);
    } catch (const std::exception& e) {
        throw CorruptFileError(path.string(), 0, e.what());
    }
}

}  // namespace

std::vector<SensorSample> parse_sensor_csv_text(std::string_view text, const std::string& source) {
    std::vector<SensorSample> out;
    bool first = true;
    for_each_row(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
        const bool was_first = first;
        first = false;
        if (was_first && !f.empty() && !parse_int(f[0])) {
            return;  // header
        }
        if (f.size() != 7) {
            throw CorruptFileError(source, line,
                                   "expected 7 fields, found " + std::to_string(f.size()));
        }
        SensorSample s;
        auto t = parse_int(f[0]);
        if (!t) {
            throw CorruptFileError(source, line, "non-numeric timestamp '" + std::string(f[0]) + "'");
        }
        s.t_ms = *t;
        for (std::size_t k = 0; k < 6; ++k) {
            auto v = parse_double(f[k + 1]);
            if (!v || !std::isfinite(*v)) {
                throw CorruptFileError(source, line, "non-numeric value '" + std::string(f[k + 1]) + "'");
            }
            (k < 3 ? s.acc[k] : s.gyro[k - 3]) = *v;
        }
        if (!out.empty() && s.t_ms <= out.back().t_ms) {
            throw CorruptFileError(source, line,
                                   "non-increasing timestamp " + std::to_string(s.t_ms) +
                                       " after " + std::to_string(out.back().t_ms));
        }
        out.push_back(s);
    });
    return out;
}

SensorTrace parse_sensor_csv(const fs::path& path) {
    SensorTrace trace;
    trace.samples = parse_sensor_csv_text(read_or_throw(path), path.string());
    const fs::path session_dir = path.parent_path();
    trace.session_id = session_dir.filename().string();
    trace.participant.alias = session_dir.parent_path().filename().string();
    return trace;
}

std::vector<GestureEvent> parse_timestamp_csv_text(std::string_view text, const std::string& source) {
    struct Row {
        GestureEvent ev;
        std::size_t line;
    };
    std::vector<Row> rows;
    bool first = true;
    for_each_row(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
        const bool was_first = first;
        first = false;
        if (was_first && f.size() >= 2 && !parse_int(f[1])) {
            return;  // header
        }
        if (f.size() != 3) {
            throw CorruptFileError(source, line, "expected 3 fields, found " + std::to_string(f.size()));
        }
        auto label = parse_label(trim(f[0]));
        if (!label) {
            throw CorruptFileError(source, line, "unknown label '" + std::string(trim(f[0])) +
                                                     "' (valid: " + valid_label_list() + ")");
        }
        auto start = parse_int(f[1]);
        auto end = parse_int(f[2]);
        if (!start || !end) {
            throw CorruptFileError(source, line, "non-numeric timestamp");
        }
        if (*start >= *end) {
            throw CorruptFileError(source, line, "start " + std::to_string(*start) +
                                                     " >= end " + std::to_string(*end));
        }
        rows.push_back({{*label, *start, *end}, line});
    });
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.ev.start_ms < b.ev.start_ms; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].ev.start_ms <= rows[i - 1].ev.end_ms) {
            throw CorruptFileError(source, rows[i].line,
                                   "event overlaps the event on line " + std::to_string(rows[i - 1].line));
        }
    }
    std::vector<GestureEvent> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back(r.ev);
    }
    return out;
}

std::vector<GestureEvent> parse_timestamp_csv(const fs::path& path) {
    return parse_timestamp_csv_text(read_or_throw(path), path.string());
}

std::string format_sensor_csv(const std::vector<SensorSample>& samples) {
    std::string out(kSensorHeader);
    out += '\n';
    for (const auto& s : samples) {
        out += std::to_string(s.t_ms);
        for (double v : s.acc) {
            out += ',';
            out += format_double(v);
        }
        for (double v : s.gyro) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

std::string format_timestamp_csv(const std::vector<GestureEvent>& events) {
    std::string out(kEventHeader);
    out += '\n';
    for (const auto& e : events) {
        out += std::string(to_string(e.label)) + "," + std::to_string(e.start_ms) + "," +
               std::to_string(e.end_ms) + "\n";
    }
    return out;
}

std::string format_participant_csv(const ParticipantMeta& meta) {
    return "alias,gender,handedness,age,occupation\n" + meta.alias + "," + meta.gender + "," +
           (meta.handedness == Handedness::left ? "left" : "right") + "," +
           (meta.age ? std::to_string(*meta.age) : std::string()) + "," + meta.occupation + "\n";
}

ParticipantMeta parse_participant_csv_text(std::string_view text, const std::string& source) {
    std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
    for_each_row(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
        rows.emplace_back(line, f);
    });
    if (rows.size() != 2) {
        throw CorruptFileError(source, 0, "expected a header and exactly one participant row");
    }
    const auto& [line, f] = rows[1];
    if (f.size() != 5) {
        throw CorruptFileError(source, line, "expected 5 fields, found " + std::to_string(f.size()));
    }
    ParticipantMeta m;
    m.alias = std::string(trim(f[0]));
    if (m.alias.empty()) {
        throw CorruptFileError(source, line, "empty alias");
    }
    m.gender = std::string(trim(f[1]));
    auto hand = trim(f[2]);
    if (hand == "left") {
        m.handedness = Handedness::left;
    } else if (hand == "right") {
        m.handedness = Handedness::right;
    } else {
        throw CorruptFileError(source, line, "handedness must be left or right");
    }
    if (!trim(f[3]).empty()) {
        auto age = parse_int(f[3]);
        if (!age || *age <= 0) {
            throw CorruptFileError(source, line, "age must be a positive integer");
        }
        m.age = static_cast<int>(*age);
    }
    m.occupation = std::string(trim(f[4]));
    return m;
}

std::vector<GestureRecording> segment_recordings(const SensorTrace& trace,
                                                 const std::vector<GestureEvent>& events,
                                                 std::int64_t clock_offset_ms) {
    std::vector<GestureRecording> out;
    out.reserve(events.size());
    const auto& s = trace.samples;
    for (const auto& ev : events) {
        // Samples are time-ordered, so the selection is one contiguous range.
        auto lo = std::lower_bound(s.begin(), s.end(), ev.start_ms, [&](const SensorSample& a, std::int64_t v) {
            return a.t_ms + clock_offset_ms < v;
        });
        auto hi = std::upper_bound(lo, s.end(), ev.end_ms, [&](std::int64_t v, const SensorSample& a) {
            return v < a.t_ms + clock_offset_ms;
        });
        if (lo == hi) {
            throw EmptySegmentError(ev, trace.session_id);
        }
        out.push_back({ev.label, trace.participant, trace.session_id, {lo, hi}});
    }
    return out;
}

namespace {

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

ScanResult reject_corrupt(const fs::path& dataset_dir) {
    ScanResult res;
    if (!fs::is_directory(dataset_dir)) {
        res.report.push_back({dataset_dir, "not a directory"});
        return res;
    }
    for (const auto& alias_dir : sorted_subdirs(dataset_dir)) {
        const auto meta_path = alias_dir / kParticipantFile;
        if (fs::exists(meta_path)) {
            try {
                parse_participant_csv_text(read_or_throw(meta_path), meta_path.string());
            } catch (const CorruptFileError& e) {
                res.report.push_back({meta_path, e.what()});
                continue;
            }
        }
        for (const auto& session_dir : sorted_subdirs(alias_dir)) {
            const auto sensors = session_dir / kSensorFile;
            const auto events = session_dir / kEventFile;
            const bool has_s = fs::exists(sensors), has_e = fs::exists(events);
            if (!has_s && !has_e) {
                continue;
            }
            if (!has_s || !has_e) {
                res.report.push_back({has_s ? sensors : events, "missing pair"});
                continue;
            }
            try {
                parse_sensor_csv(sensors);
                parse_timestamp_csv(events);
            } catch (const CorruptFileError& e) {
                res.report.push_back({fs::path(e.file()), e.what()});
                continue;
            }
            res.accepted.push_back({alias_dir.filename().string(), session_dir.filename().string(),
                                    sensors, events});
        }
    }
    return res;
}

LoadedDataset load_dataset(const fs::path& dataset_dir, std::int64_t clock_offset_ms) {
    ScanResult scan = reject_corrupt(dataset_dir);
    LoadedDataset out;
    out.report = std::move(scan.report);
    for (const auto& pair : scan.accepted) {
        SensorTrace trace = parse_sensor_csv(pair.sensors);
        const auto meta_path = dataset_dir / pair.alias / kParticipantFile;
        if (fs::exists(meta_path)) {
            trace.participant = parse_participant_csv_text(read_file(meta_path), meta_path.string());
            trace.participant.alias = pair.alias;
        }
        auto events = parse_timestamp_csv(pair.events);
        try {
            auto recs = segment_recordings(trace, events, clock_offset_ms);
            out.recordings.insert(out.recordings.end(), std::make_move_iterator(recs.begin()),
                                  std::make_move_iterator(recs.end()));
            ++out.sessions;
        } catch (const EmptySegmentError& e) {
            out.report.push_back({pair.events, e.what()});
        }
    }
    return out;
}

}  // namespace imugest
