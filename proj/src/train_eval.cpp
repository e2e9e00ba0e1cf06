#include "imugest/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "imugest/container.hpp"

namespace imugest {

void TrainConfig::validate() const {
    require(batch_size >= 1, "train config: batch_size must be >= 1");
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(learning_rate > 0.0, "train config: learning_rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "train config: Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "train config: epsilon must be positive");
    require(!clip_norm || *clip_norm > 0.0, "train config: clip_norm must be positive");
    require(!stop_at_val_acc || (*stop_at_val_acc > 0.0 && *stop_at_val_acc <= 1.0),
            "train config: stop_at_val_acc must lie in (0, 1]");
}

int argmax(std::span<const double> v) {
    require(!v.empty(), "argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return static_cast<int>(best);
}

namespace {

void check_dataset(const WindowedDataset& ds, const ModelConfig& config, const char* what) {
    require(ds.channels() == config.input_dim,
            std::string(what) + ": dataset has " + std::to_string(ds.channels()) +
                " channels, model input_dim is " + std::to_string(config.input_dim));
    for (const auto& w : ds.windows) {
        require(w.values.rows() == config.window_len && w.values.cols() == config.input_dim,
                std::string(what) + ": window shape " + std::to_string(w.values.rows()) + "x" +
                    std::to_string(w.values.cols()) + " does not match the model");
        require(to_index(w.label) < static_cast<int>(config.num_classes),
                std::string(what) + ": label outside the model's classes");
    }
}

std::size_t recording_span(std::span<const Window> windows) {
    std::size_t n = 0;
    for (const auto& w : windows) {
        n = std::max(n, w.recording + 1);
    }
    return n;
}

}  // namespace

TrainResult train(const WindowedDataset& train_set, const WindowedDataset& validation_set,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch) {
    model_config.validate();
    train_config.validate();
    require(!train_set.windows.empty(), "train: empty training set");
    check_dataset(train_set, model_config, "train");
    check_dataset(validation_set, model_config, "validation");

    Rng init_rng = Rng(train_config.init_seed).split("init");
    Rng shuffle_rng = Rng(train_config.shuffle_seed).split("shuffle");
    Rng dropout_rng = Rng(train_config.dropout_seed).split("dropout");

    ModelParams params = init_params(model_config, init_rng);
    const AdamHyper hyper{train_config.learning_rate, train_config.beta1, train_config.beta2,
                          train_config.epsilon};
    std::vector<AdamState> adam;
    for (const Array2* t : params.tensors()) {
        adam.emplace_back(t->rows(), t->cols(), hyper);
    }

    const std::size_t n = train_set.windows.size();
    const std::size_t val_recordings = recording_span(validation_set.windows);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    std::vector<const Array2*> batch;
    std::vector<int> targets;

    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += train_config.batch_size) {
            const std::size_t end = std::min(n, start + train_config.batch_size);
            batch.clear();
            targets.clear();
            for (std::size_t i = start; i < end; ++i) {
                const Window& w = train_set.windows[order[i]];
                batch.push_back(&w.values);
                targets.push_back(to_index(w.label));
            }
            auto fwd = model_forward(batch, params, model_config, Mode::train, dropout_rng);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                loss_sum += cross_entropy(fwd.probs.row(b), static_cast<std::size_t>(targets[b]));
                if (argmax(fwd.probs.row(b)) == targets[b]) {
                    ++correct;
                }
            }
            ModelParams grad = model_backward(fwd.cache, targets, params, model_config,
                                              1.0 / static_cast<double>(batch.size()));
            auto p = params.tensors();
            auto g = grad.tensors();
            if (train_config.clip_norm) {
                double sq = 0.0;
                for (const Array2* t : g) {
                    for (std::size_t i = 0; i < t->size(); ++i) {
                        sq += (*t)[i] * (*t)[i];
                    }
                }
                const double norm = std::sqrt(sq);
                if (norm > *train_config.clip_norm) {
                    const double f = *train_config.clip_norm / norm;
                    for (Array2* t : g) {
                        for (std::size_t i = 0; i < t->size(); ++i) {
                            (*t)[i] *= f;
                        }
                    }
                }
            }
            for (std::size_t k = 0; k < p.size(); ++k) {
                adam_update(*p[k], *g[k], adam[k]);
            }
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(n);
        m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        if (!validation_set.windows.empty()) {
            const Array2 probs = predict_probs(params, model_config, validation_set.windows);
            m.val_window_acc =
                evaluate_probs(probs, validation_set.windows, model_config.num_classes).window_accuracy;
            m.val_gesture_acc = soft_vote_accuracy(probs, validation_set.windows, val_recordings).accuracy;
        }
        result.history.push_back(m);
        if (on_epoch) {
            on_epoch(m);
        }

        const bool improved = validation_set.windows.empty() || m.val_window_acc > best_acc;
        if (improved) {
            best_acc = m.val_window_acc;
            result.best = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (train_config.early_stop_patience && since_best >= *train_config.early_stop_patience) {
            break;
        }
        if (train_config.stop_at_val_acc && !validation_set.windows.empty() &&
            m.val_window_acc >= *train_config.stop_at_val_acc) {
            break;
        }
    }
    result.final = std::move(params);
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,train_loss,train_acc,val_window_acc,val_gesture_acc\n";
    for (const auto& m : history) {
        out += std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," +
               format_double(m.train_acc) + "," + format_double(m.val_window_acc) + "," +
               format_double(m.val_gesture_acc) + "\n";
    }
    return out;
}

void ConfusionMatrix::add(int truth, int predicted) {
    require(truth >= 0 && predicted >= 0 && static_cast<std::size_t>(truth) < n_ &&
                static_cast<std::size_t>(predicted) < n_,
            "ConfusionMatrix::add: class out of range");
    ++counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::count(int truth, int predicted) const {
    return counts_.at(static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted));
}

std::uint64_t ConfusionMatrix::row_total(int truth) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < n_; ++j) {
        s += count(truth, static_cast<int>(j));
    }
    return s;
}

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < n_; ++i) {
        s += counts_[i * n_ + i];
    }
    return s;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

double ConfusionMatrix::rate(int truth, int predicted) const {
    const auto r = row_total(truth);
    return r == 0 ? 0.0 : static_cast<double>(count(truth, predicted)) / static_cast<double>(r);
}

double ConfusionMatrix::mean_off_diagonal_rate() const {
    double sum = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < n_; ++i) {
        if (row_total(static_cast<int>(i)) == 0) {
            continue;
        }
        for (std::size_t j = 0; j < n_; ++j) {
            if (i != j) {
                sum += rate(static_cast<int>(i), static_cast<int>(j));
                ++cells;
            }
        }
    }
    return cells == 0 ? 0.0 : sum / static_cast<double>(cells);
}

std::string ConfusionMatrix::to_csv() const {
    auto name = [](std::size_t i) {
        return i < kGestureNames.size() ? std::string(kGestureNames[i]) : "class" + std::to_string(i);
    };
    std::string out = "true\\predicted";
    for (std::size_t j = 0; j < n_; ++j) {
        out += "," + name(j);
    }
    out += "\n";
    for (std::size_t i = 0; i < n_; ++i) {
        out += name(i);
        for (std::size_t j = 0; j < n_; ++j) {
            out += "," + std::to_string(counts_[i * n_ + j]);
        }
        out += "\n";
    }
    return out;
}

Array2 predict_probs(const ModelParams& params, const ModelConfig& config,
                     std::span<const Window> windows, std::size_t chunk) {
    require(chunk >= 1, "predict_probs: chunk must be >= 1");
    Array2 out(windows.size(), config.num_classes);
    std::vector<const Array2*> batch;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::size_t end = std::min(windows.size(), start + chunk);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(&windows[i].values);
        }
        const Array2 p = infer_probs(batch, params, config);
        std::copy(p.data(), p.data() + p.size(), out.data() + start * config.num_classes);
    }
    return out;
}

EvalResult evaluate_probs(const Array2& probs, std::span<const Window> windows, std::size_t classes) {
    require(probs.rows() == windows.size(), "evaluate: one probability row per window required");
    EvalResult res{ConfusionMatrix(classes), 0.0};
    for (std::size_t i = 0; i < windows.size(); ++i) {
        res.confusion.add(to_index(windows[i].label), argmax(probs.row(i)));
    }
    res.window_accuracy = res.confusion.accuracy();
    return res;
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& config,
                    std::span<const Window> windows) {
    require(!windows.empty(), "evaluate: no windows");
    return evaluate_probs(predict_probs(params, config, windows), windows, config.num_classes);
}

GestureAccuracy soft_vote_accuracy(const Array2& probs, std::span<const Window> windows,
                                   std::size_t recordings) {
    require(probs.rows() == windows.size(), "soft_vote_accuracy: one probability row per window required");
    const std::size_t C = probs.cols();
    std::vector<double> sums(recordings * C, 0.0);
    std::vector<int> truth(recordings, -1);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const std::size_t r = windows[i].recording;
        require(r < recordings, "soft_vote_accuracy: recording index out of range");
        truth[r] = to_index(windows[i].label);
        for (std::size_t c = 0; c < C; ++c) {
            sums[r * C + c] += probs(i, c);
        }
    }
    GestureAccuracy res;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < recordings; ++r) {
        if (truth[r] < 0) {
            res.excluded.push_back(r);
            continue;
        }
        ++res.evaluated;
        if (argmax(std::span<const double>(sums.data() + r * C, C)) == truth[r]) {
            ++correct;
        }
    }
    res.accuracy = res.evaluated == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(res.evaluated);
    return res;
}

GestureAccuracy gesture_accuracy_majority(const ModelParams& params, const ModelConfig& config,
                                          const std::vector<GestureRecording>& recordings,
                                          const PreprocessOptions& options,
                                          const NormalizationStats* stats) {
    WindowedDataset ds = prepare_windows(recordings, options);
    if (stats != nullptr) {
        zscore_apply(ds, *stats);
    }
    if (ds.windows.empty()) {
        GestureAccuracy res;
        for (std::size_t r = 0; r < recordings.size(); ++r) {
            res.excluded.push_back(r);
        }
        return res;
    }
    const Array2 probs = predict_probs(params, config, ds.windows);
    return soft_vote_accuracy(probs, ds.windows, recordings.size());
}

GestureAccuracy gesture_accuracy_majority(const ModelParams& params, const ModelConfig& config,
                                          const std::vector<GestureRecording>& recordings,
                                          std::size_t window_len, std::size_t step) {
    PreprocessOptions opt;
    opt.window_len = window_len;
    opt.step = step;
    return gesture_accuracy_majority(params, config, recordings, opt, nullptr);
}

StreamClassifier::StreamClassifier(const ModelParams& params, const ModelConfig& config,
                                   NormalizationStats stats, PreprocessOptions options)
    : params_(params), config_(config), stats_(std::move(stats)), options_(std::move(options)) {
    config_.validate();
    check_shapes(params_, config_);
    require(options_.window_len == config_.window_len,
            "stream: preprocessing window_len differs from the model's");
    require(options_.step >= 1, "stream: step must be >= 1");
    require(!options_.remove_gravity || options_.gravity_samples <= options_.window_len,
            "stream: gravity estimate must fit inside the first window");
    const auto channels = channels_after(options_);
    require(channels.size() == config_.input_dim, "stream: channel count differs from model input_dim");
    require(stats_.mean.size() == channels.size() && stats_.std.size() == channels.size(),
            "stream: normalization stats do not match the channel count");
    if (options_.drop_axis) {
        dropped_ = static_cast<std::size_t>(
            std::find(kChannelNames.begin(), kChannelNames.end(), *options_.drop_axis) - kChannelNames.begin());
    }
}

std::optional<Emission> StreamClassifier::push(const SensorSample& sample) {
    buffer_.push_back({sample.acc[0], sample.acc[1], sample.acc[2], sample.gyro[0], sample.gyro[1],
                       sample.gyro[2]});
    if (buffer_.size() > options_.window_len) {
        buffer_.pop_front();
    }
    if (options_.remove_gravity && seen_ < options_.gravity_samples) {
        for (std::size_t a = 0; a < 3; ++a) {
            gravity_sum_[a] += sample.acc[a];
        }
        if (seen_ + 1 == options_.gravity_samples) {
            for (std::size_t a = 0; a < 3; ++a) {
                gravity_[a] = gravity_sum_[a] / static_cast<double>(options_.gravity_samples);
            }
        }
    }
    ++seen_;
    last_t_ = sample.t_ms;
    if (seen_ < options_.window_len || (seen_ - options_.window_len) % options_.step != 0) {
        return std::nullopt;
    }
    return classify();
}

Emission StreamClassifier::classify() {
    Array2 window(options_.window_len, config_.input_dim);
    for (std::size_t t = 0; t < buffer_.size(); ++t) {
        auto row = buffer_[t];
        if (options_.remove_gravity) {
            for (std::size_t a = 0; a < 3; ++a) {
                row[a] -= gravity_[a];
            }
        }
        for (std::size_t c = 0, o = 0; c < 6; ++c) {
            if (dropped_ && *dropped_ == c) {
                continue;
            }
            window(t, o) = zscore_value(row[c], stats_.mean[o], stats_.std[o]);
            ++o;
        }
    }
    const Array2* w = &window;
    const Array2 probs = infer_probs(std::span<const Array2* const>(&w, 1), params_, config_);
    const int k = argmax(probs.row(0));
    return {last_t_, label_from_index(k), probs(0, static_cast<std::size_t>(k))};
}

std::vector<Emission> stream_infer(const ModelParams& params, const ModelConfig& config,
                                   const NormalizationStats& stats, const PreprocessOptions& options,
                                   std::span<const SensorSample> stream) {
    StreamClassifier sc(params, config, stats, options);
    std::vector<Emission> out;
    for (const auto& s : stream) {
        if (auto e = sc.push(s)) {
            out.push_back(*e);
        }
    }
    return out;
}

std::string encode_pipeline(const Pipeline& pipeline) {
    nlohmann::ordered_json j;
    const auto& o = pipeline.options;
    j["window_len"] = o.window_len;
    j["step"] = o.step;
    j["remove_gravity"] = o.remove_gravity;
    j["gravity_samples"] = o.gravity_samples;
    j["drop_axis"] = o.drop_axis ? nlohmann::ordered_json(*o.drop_axis) : nlohmann::ordered_json(nullptr);
    j["channels"] = channels_after(o);
    j["mean"] = pipeline.stats.mean;
    j["std"] = pipeline.stats.std;
    return j.dump(2) + "\n";
}

Pipeline decode_pipeline(std::string_view text) {
    Pipeline p;
    try {
        const auto j = nlohmann::json::parse(text);
        p.options.window_len = j.at("window_len").get<std::size_t>();
        p.options.step = j.at("step").get<std::size_t>();
        p.options.remove_gravity = j.at("remove_gravity").get<bool>();
        p.options.gravity_samples = j.at("gravity_samples").get<std::size_t>();
        if (!j.at("drop_axis").is_null()) {
            p.options.drop_axis = j.at("drop_axis").get<std::string>();
        }
        p.stats.mean = j.at("mean").get<std::vector<double>>();
        p.stats.std = j.at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("pipeline file: ") + e.what());
    }
    const auto ch = channels_after(p.options);
    if (p.stats.mean.size() != ch.size() || p.stats.std.size() != ch.size()) {
        throw std::runtime_error("pipeline file: statistics do not match the channel list");
    }
    return p;
}

void save_pipeline(const Pipeline& pipeline, const std::filesystem::path& path) {
    write_file_atomic(path, encode_pipeline(pipeline));
}

Pipeline load_pipeline(const std::filesystem::path& path) { return decode_pipeline(read_file(path)); }

}  // namespace imugest
