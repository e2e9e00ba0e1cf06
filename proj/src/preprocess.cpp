#include "imugest/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "imugest/container.hpp"

namespace imugest {

std::size_t window_count(std::size_t n, std::size_t window_len, std::size_t step) {
    require(window_len >= 1 && step >= 1, "window_len and step must be >= 1");
    return n < window_len ? 0 : (n - window_len) / step + 1;
}

Array2 recording_matrix(const GestureRecording& recording) {
    Array2 m(recording.samples.size(), 6);
    for (std::size_t i = 0; i < recording.samples.size(); ++i) {
        const auto& s = recording.samples[i];
        for (std::size_t k = 0; k < 3; ++k) {
            m(i, k) = s.acc[k];
            m(i, 3 + k) = s.gyro[k];
        }
    }
    return m;
}

std::vector<Window> slide_windows(const GestureRecording& recording, std::size_t window_len,
                                  std::size_t step) {
    const std::size_t n = window_count(recording.samples.size(), window_len, step);
    std::vector<Window> out;
    out.reserve(n);
    const Array2 m = recording_matrix(recording);
    for (std::size_t w = 0; w < n; ++w) {
        Window win;
        win.values = Array2(window_len, 6);
        const double* src = m.data() + w * step * 6;
        std::copy(src, src + window_len * 6, win.values.data());
        win.label = recording.label;
        win.participant = recording.participant.alias;
        out.push_back(std::move(win));
    }
    return out;
}

WindowedDataset make_windows(const std::vector<GestureRecording>& recordings, std::size_t window_len,
                             std::size_t step, std::vector<std::string>* warnings) {
    WindowedDataset ds;
    ds.window_len = window_len;
    ds.step = step;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        auto ws = slide_windows(recordings[r], window_len, step);
        if (ws.empty() && warnings != nullptr) {
            const auto& rec = recordings[r];
            warnings->push_back("recording " + std::to_string(r) + " (" + rec.participant.alias + "/" +
                                rec.session_id + "/" + std::string(to_string(rec.label)) + ") has " +
                                std::to_string(rec.samples.size()) + " samples, fewer than window " +
                                std::to_string(window_len) + "; dropped");
        }
        for (auto& w : ws) {
            w.recording = r;
            ds.windows.push_back(std::move(w));
        }
    }
    return ds;
}

NormalizationStats zscore_fit(const WindowedDataset& train) {
    require(!train.windows.empty(), "zscore_fit: empty training set");
    const std::size_t C = train.channels();
    NormalizationStats st;
    st.mean.assign(C, 0.0);
    st.std.assign(C, 0.0);
    double n = 0.0;
    for (const auto& w : train.windows) {
        require(w.values.cols() == C, "zscore_fit: window channel count differs from dataset");
        for (std::size_t t = 0; t < w.values.rows(); ++t) {
            for (std::size_t c = 0; c < C; ++c) {
                st.mean[c] += w.values(t, c);
            }
        }
        n += static_cast<double>(w.values.rows());
    }
    for (auto& m : st.mean) {
        m /= n;
    }
    for (const auto& w : train.windows) {
        for (std::size_t t = 0; t < w.values.rows(); ++t) {
            for (std::size_t c = 0; c < C; ++c) {
                const double d = w.values(t, c) - st.mean[c];
                st.std[c] += d * d;
            }
        }
    }
    for (auto& s : st.std) {
        s = std::sqrt(s / n);
    }
    return st;
}

double zscore_value(double v, double mean, double std) {
    return std < kDegenerateStd ? 0.0 : (v - mean) / std;
}

void zscore_apply(Window& window, const NormalizationStats& stats) {
    const std::size_t C = window.values.cols();
    require(stats.mean.size() == C && stats.std.size() == C,
            "zscore_apply: stats channel count differs from window");
    for (std::size_t t = 0; t < window.values.rows(); ++t) {
        for (std::size_t c = 0; c < C; ++c) {
            window.values(t, c) = zscore_value(window.values(t, c), stats.mean[c], stats.std[c]);
        }
    }
}

void zscore_apply(WindowedDataset& dataset, const NormalizationStats& stats) {
    for (auto& w : dataset.windows) {
        zscore_apply(w, stats);
    }
}

GestureRecording remove_gravity(GestureRecording recording, std::size_t k) {
    const std::size_t n = std::min(k, recording.samples.size());
    if (n == 0) {
        return recording;
    }
    std::array<double, 3> g{};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
            g[a] += recording.samples[i].acc[a];
        }
    }
    for (auto& v : g) {
        v /= static_cast<double>(n);
    }
    for (auto& s : recording.samples) {
        for (std::size_t a = 0; a < 3; ++a) {
            s.acc[a] -= g[a];
        }
    }
    return recording;
}

WindowedDataset drop_axis(WindowedDataset dataset, std::string_view axis) {
    auto it = std::find(dataset.channel_names.begin(), dataset.channel_names.end(), axis);
    require(it != dataset.channel_names.end(), "drop_axis: unknown channel '" + std::string(axis) + "'");
    const auto drop = static_cast<std::size_t>(it - dataset.channel_names.begin());
    const std::size_t C = dataset.channel_names.size();
    dataset.channel_names.erase(it);
    for (auto& w : dataset.windows) {
        Array2 out(w.values.rows(), C - 1);
        for (std::size_t t = 0; t < w.values.rows(); ++t) {
            for (std::size_t c = 0, o = 0; c < C; ++c) {
                if (c != drop) {
                    out(t, o++) = w.values(t, c);
                }
            }
        }
        w.values = std::move(out);
    }
    return dataset;
}

NormalizationStats drop_axis(NormalizationStats stats, std::size_t channel) {
    require(channel < stats.mean.size(), "drop_axis: channel out of range");
    stats.mean.erase(stats.mean.begin() + static_cast<std::ptrdiff_t>(channel));
    stats.std.erase(stats.std.begin() + static_cast<std::ptrdiff_t>(channel));
    return stats;
}

std::vector<std::string> participants_of(const std::vector<GestureRecording>& recordings) {
    std::vector<std::string> out;
    for (const auto& r : recordings) {
        if (std::find(out.begin(), out.end(), r.participant.alias) == out.end()) {
            out.push_back(r.participant.alias);
        }
    }
    return out;
}

std::pair<std::vector<GestureRecording>, std::vector<GestureRecording>> split_by_participant(
    const std::vector<GestureRecording>& recordings, const std::set<std::string>& validation_aliases) {
    const auto known = participants_of(recordings);
    for (const auto& a : validation_aliases) {
        require(std::find(known.begin(), known.end(), a) != known.end(),
                "split_by_participant: unknown participant '" + a + "'");
    }
    std::pair<std::vector<GestureRecording>, std::vector<GestureRecording>> out;
    for (const auto& r : recordings) {
        (validation_aliases.count(r.participant.alias) ? out.second : out.first).push_back(r);
    }
    return out;
}

std::vector<GestureRecording> filter_participants(const std::vector<GestureRecording>& recordings,
                                                  const std::set<std::string>& aliases) {
    std::vector<GestureRecording> out;
    for (const auto& r : recordings) {
        if (aliases.count(r.participant.alias)) {
            out.push_back(r);
        }
    }
    return out;
}

double participant_variance_score(const std::vector<GestureRecording>& recordings,
                                  const std::string& alias) {
    std::array<double, 6> sum{}, sq{};
    double n = 0.0;
    for (const auto& r : recordings) {
        if (r.participant.alias != alias) {
            continue;
        }
        for (const auto& s : r.samples) {
            for (std::size_t k = 0; k < 3; ++k) {
                sum[k] += s.acc[k];
                sum[3 + k] += s.gyro[k];
            }
        }
        n += static_cast<double>(r.samples.size());
    }
    require(n > 0.0, "participant_variance_score: no samples for '" + alias + "'");
    std::array<double, 6> mean{};
    for (std::size_t c = 0; c < 6; ++c) {
        mean[c] = sum[c] / n;
    }
    for (const auto& r : recordings) {
        if (r.participant.alias != alias) {
            continue;
        }
        for (const auto& s : r.samples) {
            for (std::size_t k = 0; k < 3; ++k) {
                sq[k] += (s.acc[k] - mean[k]) * (s.acc[k] - mean[k]);
                sq[3 + k] += (s.gyro[k] - mean[3 + k]) * (s.gyro[k] - mean[3 + k]);
            }
        }
    }
    double score = 0.0;
    for (double v : sq) {
        score += v / n;
    }
    return score / 6.0;
}

std::vector<std::string> select_low_variance_participants(
    const std::vector<GestureRecording>& recordings, std::size_t k) {
    auto aliases = participants_of(recordings);
    require(k <= aliases.size(), "select_low_variance_participants: k exceeds participant count");
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& a : aliases) {
        scored.emplace_back(participant_variance_score(recordings, a), a);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

std::vector<std::string> channels_after(const PreprocessOptions& options) {
    std::vector<std::string> ch(kChannelNames.begin(), kChannelNames.end());
    if (options.drop_axis) {
        auto it = std::find(ch.begin(), ch.end(), *options.drop_axis);
        require(it != ch.end(), "unknown channel '" + *options.drop_axis + "'");
        ch.erase(it);
    }
    return ch;
}

WindowedDataset prepare_windows(const std::vector<GestureRecording>& recordings,
                                const PreprocessOptions& options, std::vector<std::string>* warnings) {
    WindowedDataset ds;
    if (options.remove_gravity) {
        std::vector<GestureRecording> adjusted;
        adjusted.reserve(recordings.size());
        for (const auto& r : recordings) {
            adjusted.push_back(remove_gravity(r, options.gravity_samples));
        }
        ds = make_windows(adjusted, options.window_len, options.step, warnings);
    } else {
        ds = make_windows(recordings, options.window_len, options.step, warnings);
    }
    if (options.drop_axis) {
        ds = drop_axis(std::move(ds), *options.drop_axis);
    }
    return ds;
}

// Window cache layout:
//
//   imugest-windows
//   version 1
//   window_len 250
//   step 50
//   channels acc_x acc_y acc_z gyro_x gyro_y gyro_z
//   label_map circle semicircle ... letter_s
//   count N
//   window <label index> <recording> <participant>    (N lines)
//   end_header
//   <window values, row-major little-endian binary64, window after window>

namespace {
constexpr std::string_view kWindowsMagic = "imugest-windows";

[[noreturn]] void bad_cache(const std::string& what) {
    throw std::runtime_error("window cache: " + what);
}
}  // namespace

std::string encode_windows(const WindowedDataset& dataset) {
    std::vector<std::string> h;
    h.emplace_back(kWindowsMagic);
    h.emplace_back("version 1");
    h.push_back("window_len " + std::to_string(dataset.window_len));
    h.push_back("step " + std::to_string(dataset.step));
    std::string ch = "channels";
    for (const auto& c : dataset.channel_names) {
        ch += " " + c;
    }
    h.push_back(ch);
    std::string lm = "label_map";
    for (auto n : kGestureNames) {
        lm += " " + std::string(n);
    }
    h.push_back(lm);
    h.push_back("count " + std::to_string(dataset.windows.size()));
    std::string payload;
    for (const auto& w : dataset.windows) {
        require(w.values.rows() == dataset.window_len && w.values.cols() == dataset.channels(),
                "encode_windows: inhomogeneous window shape");
        h.push_back("window " + std::to_string(to_index(w.label)) + " " + std::to_string(w.recording) +
                    " " + w.participant);
        append_le_doubles(payload, w.values.values());
    }
    return encode_container(h, payload);
}

WindowedDataset decode_windows(std::string_view bytes) {
    auto c = decode_container(bytes);
    if (!c || c->header.size() < 7 || c->header[0] != kWindowsMagic) {
        bad_cache("not a window cache");
    }
    const auto& h = c->header;
    if (h[1] != "version 1") {
        bad_cache("unsupported " + h[1]);
    }
    auto field = [&](std::size_t i, std::string_view key) {
        auto parts = split(h[i], ' ');
        if (parts.empty() || parts[0] != key) {
            bad_cache("expected field " + std::string(key));
        }
        parts.erase(parts.begin());
        return parts;
    };
    auto count_of = [&](std::string_view s) {
        auto v = parse_int(s);
        if (!v || *v < 0) {
            bad_cache("bad count");
        }
        return static_cast<std::size_t>(*v);
    };
    WindowedDataset ds;
    ds.window_len = count_of(field(2, "window_len").at(0));
    ds.step = count_of(field(3, "step").at(0));
    ds.channel_names.clear();
    for (auto ch : field(4, "channels")) {
        ds.channel_names.emplace_back(ch);
    }
    auto lm = field(5, "label_map");
    if (lm.size() != kGestureNames.size() || !std::equal(lm.begin(), lm.end(), kGestureNames.begin())) {
        bad_cache("label map differs from this build's gesture set");
    }
    const std::size_t n = count_of(field(6, "count").at(0));
    if (h.size() != 7 + n) {
        bad_cache("window line count does not match count");
    }
    const std::size_t per = ds.window_len * ds.channels();
    if (c->payload.size() != n * per * 8) {
        bad_cache("payload size does not match header");
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto parts = field(7 + i, "window");
        if (parts.size() != 3) {
            bad_cache("bad window line");
        }
        Window w;
        w.label = label_from_index(static_cast<int>(count_of(parts[0])));
        w.recording = count_of(parts[1]);
        w.participant = std::string(parts[2]);
        w.values = Array2(ds.window_len, ds.channels());
        read_le_doubles(std::string_view(c->payload).substr(i * per * 8, per * 8), w.values.values());
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

void save_windows(const WindowedDataset& dataset, const std::filesystem::path& path) {
    write_file_atomic(path, encode_windows(dataset));
}

WindowedDataset load_windows(const std::filesystem::path& path) { return decode_windows(read_file(path)); }

}  // namespace imugest
