// imugest: synthesize IMU gesture datasets, train the stacked-LSTM
// classifier, evaluate checkpoints and run streaming inference.
//
// Exit codes: 0 success, 1 data error, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "imugest/container.hpp"
#include "imugest/ingest.hpp"
#include "imugest/lstm.hpp"
#include "imugest/preprocess.hpp"
#include "imugest/synth.hpp"
#include "imugest/train_eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace imugest;

namespace {

constexpr const char* kVersion = "imugest 0.1.0";

enum Exit { kOk = 0, kDataError = 1, kUsageError = 2 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& argv,
                    json config, json seeds, json inputs, json outputs) {
    json m;
    m["command"] = command;
    m["tool_version"] = kVersion;
    m["argv"] = argv;
    m["config"] = std::move(config);
    m["seeds"] = std::move(seeds);
    m["inputs"] = std::move(inputs);
    m["outputs"] = std::move(outputs);
    write_file_atomic(path, m.dump(2) + "\n");
}

std::set<std::string> parse_alias_list(const std::string& s) {
    std::set<std::string> out;
    if (s.empty()) {
        return out;
    }
    for (auto part : split(s, ',')) {
        auto a = trim(part);
        if (!a.empty()) {
            out.emplace(a);
        }
    }
    return out;
}

void print_report(const std::vector<Rejection>& report) {
    for (const auto& r : report) {
        std::cerr << "rejected: " << r.path.string() << ": " << r.reason << "\n";
    }
}

json options_json(const PreprocessOptions& o) {
    json j;
    j["window_len"] = o.window_len;
    j["step"] = o.step;
    j["remove_gravity"] = o.remove_gravity;
    j["gravity_samples"] = o.gravity_samples;
    j["drop_axis"] = o.drop_axis ? json(*o.drop_axis) : json(nullptr);
    return j;
}

json model_json(const ModelConfig& c) {
    json j;
    j["variant"] = to_string(c.variant);
    j["input_dim"] = c.input_dim;
    j["hidden_sizes"] = c.hidden_sizes;
    j["num_classes"] = c.num_classes;
    j["dropout_rate"] = c.dropout_rate;
    j["dropout_after"] = c.dropout_after ? json(*c.dropout_after) : json(nullptr);
    j["input_relu"] = c.input_relu;
    j["window_len"] = c.window_len;
    return j;
}

// -- synth ------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    std::size_t participants = 4;
    std::size_t sessions = 10;
    SynthConfig config;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    app.add_option("--out", a.out, "Output dataset directory")->required();
    app.add_option("--participants", a.participants, "Number of synthetic participants")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--sessions", a.sessions, "Gesture sets per participant")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--seed", a.config.seed, "Random seed")->capture_default_str();
    app.add_option("--rate", a.config.sample_rate, "Sample rate in Hz")->capture_default_str();
    app.add_option("--duration", a.config.duration_mean, "Mean gesture duration in seconds")->capture_default_str();
    app.add_option("--jitter", a.config.duration_jitter, "Duration jitter fraction")->capture_default_str();
    app.add_option("--noise-acc", a.config.noise_std_acc, "Accelerometer white noise std (m/s^2)")->capture_default_str();
    app.add_option("--noise-gyro", a.config.noise_std_gyro, "Gyroscope white noise std (rad/s)")->capture_default_str();
    app.add_option("--wobble", a.config.wobble_std, "Gyroscope wobble std (rad/s)")->capture_default_str();
    app.add_option("--amplitude", a.config.amplitude, "Gesture size in metres")->capture_default_str();
    app.add_option("--speed-warp", a.config.speed_warp, "Maximum time-warp strength")->capture_default_str();
    app.add_option("--spread", a.config.personality_spread, "Per-participant variation")->capture_default_str();
    app.add_option("--max-tilt", a.config.max_tilt, "Per-participant device tilt bound (rad)")->capture_default_str();
}

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
    a.config.validate();
    fs::create_directories(a.out);
    generate_dataset(a.config, a.participants, a.sessions, a.out);
    const auto& c = a.config;
    json cfg = {{"participants", a.participants},
                {"sessions", a.sessions},
                {"sample_rate", c.sample_rate},
                {"duration_mean", c.duration_mean},
                {"duration_jitter", c.duration_jitter},
                {"noise_std_acc", c.noise_std_acc},
                {"noise_std_gyro", c.noise_std_gyro},
                {"wobble_std", c.wobble_std},
                {"wobble_cutoff", c.wobble_cutoff},
                {"amplitude", c.amplitude},
                {"speed_warp", c.speed_warp},
                {"rotation_gain", c.rotation_gain},
                {"idle_min", c.idle_min},
                {"idle_max", c.idle_max},
                {"personality_spread", c.personality_spread},
                {"max_tilt", c.max_tilt}};
    write_manifest(a.out / "run_manifest.json", "synth", argv, cfg, {{"seed", c.seed}}, json::object(),
                   {{"dataset", a.out.string()}});
    std::cout << "wrote " << a.participants * a.sessions << " sessions to " << a.out.string() << "\n";
    return kOk;
}

// -- train ------------------------------------------------------------------

struct TrainArgs {
    fs::path data;
    fs::path out;
    std::string variant = "B";
    std::optional<double> lr;
    std::size_t batch = 50;
    std::size_t epochs = 30;
    std::optional<double> dropout;
    std::optional<std::vector<std::size_t>> hidden;
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> init_seed, shuffle_seed, dropout_seed;
    std::string val_aliases;
    std::optional<std::size_t> limited_k;
    std::optional<std::size_t> patience;
    std::optional<double> stop_at;
    std::optional<double> clip_norm;
    PreprocessOptions prep;
    std::string drop_axis;
    std::int64_t clock_offset = 0;
    bool allow_rejects = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
    app.add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    app.add_option("--out", a.out, "Output directory for checkpoints and logs")->required();
    app.add_option("--variant", a.variant, "Model variant")
        ->capture_default_str()->check(CLI::IsMember({"A", "B"}));
    app.add_option("--lr", a.lr, "Learning rate (default 0.025 for A, 0.001 for B)");
    app.add_option("--batch", a.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--epochs", a.epochs, "Maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--dropout", a.dropout, "Dropout rate (variant default when omitted)");
    app.add_option("--hidden", a.hidden, "Override LSTM widths, e.g. --hidden 64 64 64");
    app.add_option("--seed", a.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
    app.add_option("--init-seed", a.init_seed, "Override the initialization seed");
    app.add_option("--shuffle-seed", a.shuffle_seed, "Override the shuffling seed");
    app.add_option("--dropout-seed", a.dropout_seed, "Override the dropout seed");
    app.add_option("--val-aliases", a.val_aliases, "Comma-separated validation participants");
    app.add_option("--limited-k", a.limited_k,
                   "Train only on the k lowest-variance non-validation participants");
    app.add_option("--patience", a.patience, "Stop after this many epochs without validation gain");
    app.add_option("--clip-norm", a.clip_norm, "Clip the global gradient norm of each batch")
        ->check(CLI::PositiveNumber);
    app.add_option("--stop-at", a.stop_at, "Stop once validation window accuracy reaches this value")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--window", a.prep.window_len, "Window length in samples")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--step", a.prep.step, "Window step in samples")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--remove-gravity", a.prep.remove_gravity, "Subtract the initial gravity estimate");
    app.add_option("--gravity-samples", a.prep.gravity_samples, "Samples used for the gravity estimate")
        ->capture_default_str();
    app.add_option("--drop-axis", a.drop_axis, "Channel to remove, e.g. acc_z")
        ->check(CLI::IsMember(std::vector<std::string>(kChannelNames.begin(), kChannelNames.end())));
    app.add_option("--clock-offset", a.clock_offset, "Sensor-to-timestamp clock offset in ms")->capture_default_str();
    app.add_flag("--allow-rejects", a.allow_rejects, "Continue with the accepted files when some are rejected");
}

int run_train(TrainArgs a, const std::vector<std::string>& argv) {
    if (!a.drop_axis.empty()) {
        a.prep.drop_axis = a.drop_axis;
    }
    ModelConfig mc = a.variant == "A" ? ModelConfig::variant_a() : ModelConfig::variant_b();
    if (a.dropout) {
        mc.dropout_rate = *a.dropout;
    }
    if (a.hidden) {
        mc.hidden_sizes = *a.hidden;
        if (mc.dropout_after && *mc.dropout_after + 1 >= mc.hidden_sizes.size()) {
            mc.dropout_after = mc.hidden_sizes.size() >= 2 ? std::optional<std::size_t>(mc.hidden_sizes.size() - 2)
                                                           : std::nullopt;
        }
    }
    mc.window_len = a.prep.window_len;
    mc.input_dim = channels_after(a.prep).size();
    mc.validate();

    TrainConfig tc;
    tc.batch_size = a.batch;
    tc.epochs = a.epochs;
    tc.learning_rate = a.lr.value_or(a.variant == "A" ? 0.025 : 0.001);
    tc.init_seed = a.init_seed.value_or(a.seed);
    tc.shuffle_seed = a.shuffle_seed.value_or(a.seed);
    tc.dropout_seed = a.dropout_seed.value_or(a.seed);
    tc.early_stop_patience = a.patience;
    tc.stop_at_val_acc = a.stop_at;
    tc.clip_norm = a.clip_norm;
    tc.validate();

    LoadedDataset data = load_dataset(a.data, a.clock_offset);
    print_report(data.report);
    if (!data.report.empty() && !a.allow_rejects) {
        throw DataError(std::to_string(data.report.size()) +
                        " file(s) rejected; fix them or pass --allow-rejects");
    }
    if (data.recordings.empty()) {
        throw DataError("no usable recordings in " + a.data.string());
    }

    const auto val_aliases = parse_alias_list(a.val_aliases);
    const auto known = participants_of(data.recordings);
    for (const auto& v : val_aliases) {
        if (std::find(known.begin(), known.end(), v) == known.end()) {
            throw UsageError("unknown validation participant '" + v + "'");
        }
    }
    auto [train_recs, val_recs] = split_by_participant(data.recordings, val_aliases);
    std::vector<std::string> train_aliases = participants_of(train_recs);
    if (a.limited_k) {
        if (*a.limited_k > train_aliases.size()) {
            throw UsageError("--limited-k exceeds the number of training participants");
        }
        train_aliases = select_low_variance_participants(train_recs, *a.limited_k);
        train_recs = filter_participants(train_recs, {train_aliases.begin(), train_aliases.end()});
    }
    std::sort(train_aliases.begin(), train_aliases.end());

    std::vector<std::string> warnings;
    WindowedDataset train_ds = prepare_windows(train_recs, a.prep, &warnings);
    WindowedDataset val_ds = prepare_windows(val_recs, a.prep, &warnings);
    for (const auto& w : warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    if (train_ds.windows.empty()) {
        throw DataError("training split yields no windows");
    }
    const NormalizationStats stats = zscore_fit(train_ds);
    zscore_apply(train_ds, stats);
    zscore_apply(val_ds, stats);

    std::cerr << "train: " << train_aliases.size() << " participants, " << train_ds.windows.size()
              << " windows; validation: " << val_aliases.size() << " participants, " << val_ds.windows.size()
              << " windows\n";
    const TrainResult res = train(train_ds, val_ds, mc, tc, [](const EpochMetrics& m) {
        std::cerr << "epoch " << m.epoch << " loss " << m.train_loss << " train_acc " << m.train_acc
                  << " val_window_acc " << m.val_window_acc << " val_gesture_acc " << m.val_gesture_acc << "\n";
    });

    fs::create_directories(a.out);
    save_checkpoint(res.best, mc, a.out / "best.ckpt");
    save_checkpoint(res.final, mc, a.out / "final.ckpt");
    save_pipeline({a.prep, stats}, a.out / "pipeline.json");
    write_file_atomic(a.out / "metrics.csv", metrics_csv(res.history));

    json cfg;
    cfg["model"] = model_json(mc);
    cfg["train"] = {{"batch_size", tc.batch_size},
                    {"learning_rate", tc.learning_rate},
                    {"epochs", tc.epochs},
                    {"beta1", tc.beta1},
                    {"beta2", tc.beta2},
                    {"epsilon", tc.epsilon},
                    {"early_stop_patience", tc.early_stop_patience ? json(*tc.early_stop_patience) : json(nullptr)},
                    {"clip_norm", tc.clip_norm ? json(*tc.clip_norm) : json(nullptr)},
                    {"stop_at_val_acc", tc.stop_at_val_acc ? json(*tc.stop_at_val_acc) : json(nullptr)}};
    cfg["preprocess"] = options_json(a.prep);
    cfg["train_participants"] = train_aliases;
    cfg["validation_participants"] = std::vector<std::string>(val_aliases.begin(), val_aliases.end());
    cfg["limited_k"] = a.limited_k ? json(*a.limited_k) : json(nullptr);
    cfg["clock_offset_ms"] = a.clock_offset;
    cfg["best_epoch"] = res.best_epoch;
    write_manifest(a.out / "run_manifest.json", "train", argv, cfg,
                   {{"init", tc.init_seed}, {"shuffle", tc.shuffle_seed}, {"dropout", tc.dropout_seed}},
                   {{"data", a.data.string()}},
                   {{"best_checkpoint", (a.out / "best.ckpt").string()},
                    {"final_checkpoint", (a.out / "final.ckpt").string()},
                    {"pipeline", (a.out / "pipeline.json").string()},
                    {"metrics", (a.out / "metrics.csv").string()}});
    const auto& best = res.history.at(res.best_epoch - 1);
    std::cout << "best epoch " << res.best_epoch << " val_window_acc " << format_double(best.val_window_acc)
              << " val_gesture_acc " << format_double(best.val_gesture_acc) << "\n";
    return kOk;
}

// -- eval -------------------------------------------------------------------

struct EvalArgs {
    fs::path checkpoint;
    fs::path pipeline;
    fs::path data;
    fs::path out;
    std::string participants;
    std::int64_t clock_offset = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    app.add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    app.add_option("--pipeline", a.pipeline, "Preprocessing file (default: pipeline.json beside the checkpoint)");
    app.add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    app.add_option("--out", a.out, "Directory for confusion.csv and the summary")->required();
    app.add_option("--participants", a.participants, "Comma-separated participants to evaluate (default all)");
    app.add_option("--clock-offset", a.clock_offset, "Sensor-to-timestamp clock offset in ms")->capture_default_str();
}

fs::path pipeline_path(const fs::path& given, const fs::path& checkpoint) {
    return given.empty() ? checkpoint.parent_path() / "pipeline.json" : given;
}

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    const auto [params, mc] = load_checkpoint(a.checkpoint);
    const fs::path pp = pipeline_path(a.pipeline, a.checkpoint);
    const Pipeline pipe = load_pipeline(pp);
    if (pipe.options.window_len != mc.window_len || channels_after(pipe.options).size() != mc.input_dim) {
        throw DataError("pipeline " + pp.string() + " does not match the checkpoint's input shape");
    }

    LoadedDataset data = load_dataset(a.data, a.clock_offset);
    print_report(data.report);
    auto recs = data.recordings;
    const auto only = parse_alias_list(a.participants);
    if (!only.empty()) {
        const auto known = participants_of(recs);
        for (const auto& v : only) {
            if (std::find(known.begin(), known.end(), v) == known.end()) {
                throw UsageError("unknown participant '" + v + "'");
            }
        }
        recs = filter_participants(recs, only);
    }
    WindowedDataset ds = prepare_windows(recs, pipe.options);
    if (ds.windows.empty()) {
        throw DataError("no windows to evaluate");
    }
    zscore_apply(ds, pipe.stats);
    const Array2 probs = predict_probs(params, mc, ds.windows);
    const EvalResult ev = evaluate_probs(probs, ds.windows, mc.num_classes);
    const GestureAccuracy ga = soft_vote_accuracy(probs, ds.windows, recs.size());

    fs::create_directories(a.out);
    write_file_atomic(a.out / "confusion.csv", ev.confusion.to_csv());
    const auto& cm = ev.confusion;
    const double tilde_inf = cm.rate(to_index(GestureLabel::tilde), to_index(GestureLabel::infinity));
    const double semi_circ = cm.rate(to_index(GestureLabel::semicircle), to_index(GestureLabel::circle));
    json summary = {{"windows", cm.total()},
                    {"window_accuracy", ev.window_accuracy},
                    {"gestures", ga.evaluated},
                    {"gesture_accuracy", ga.accuracy},
                    {"tilde_to_infinity_rate", tilde_inf},
                    {"semicircle_to_circle_rate", semi_circ},
                    {"mean_off_diagonal_rate", cm.mean_off_diagonal_rate()}};
    write_file_atomic(a.out / "summary.json", summary.dump(2) + "\n");
    write_manifest(a.out / "run_manifest.json", "eval", argv,
                   {{"participants", a.participants}, {"clock_offset_ms", a.clock_offset}}, json::object(),
                   {{"checkpoint", a.checkpoint.string()}, {"pipeline", pp.string()}, {"data", a.data.string()}},
                   {{"confusion", (a.out / "confusion.csv").string()}, {"summary", (a.out / "summary.json").string()}});

    std::cout << "windows " << cm.total() << "\n";
    std::cout << "window_accuracy " << format_double(ev.window_accuracy) << "\n";
    std::cout << "gesture_accuracy " << format_double(ga.accuracy) << "\n";
    std::cout << "tilde_to_infinity_rate " << format_double(tilde_inf) << "\n";
    std::cout << "semicircle_to_circle_rate " << format_double(semi_circ) << "\n";
    std::cout << "mean_off_diagonal_rate " << format_double(cm.mean_off_diagonal_rate()) << "\n";
    return kOk;
}

// -- infer ------------------------------------------------------------------

struct InferArgs {
    fs::path checkpoint;
    fs::path pipeline;
    fs::path sensors;
    fs::path manifest;
};

void add_infer(CLI::App& app, InferArgs& a) {
    app.add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    app.add_option("--pipeline", a.pipeline, "Preprocessing file (default: pipeline.json beside the checkpoint)");
    app.add_option("--sensors", a.sensors, "Sensor CSV to stream")->required()->check(CLI::ExistingFile);
    app.add_option("--manifest", a.manifest, "Where to write the run manifest");
}

int run_infer(const InferArgs& a, const std::vector<std::string>& argv) {
    const auto [params, mc] = load_checkpoint(a.checkpoint);
    const fs::path pp = pipeline_path(a.pipeline, a.checkpoint);
    const Pipeline pipe = load_pipeline(pp);
    const auto samples = parse_sensor_csv_text(read_file(a.sensors), a.sensors.string());
    StreamClassifier sc(params, mc, pipe.stats, pipe.options);
    std::size_t emitted = 0;
    for (const auto& s : samples) {
        if (auto e = sc.push(s)) {
            std::cout << e->t_ms << "," << to_string(e->label) << "," << format_double(e->confidence) << "\n";
            ++emitted;
        }
    }
    if (!a.manifest.empty()) {
        write_manifest(a.manifest, "infer", argv, json::object(), json::object(),
                       {{"checkpoint", a.checkpoint.string()}, {"pipeline", pp.string()},
                        {"sensors", a.sensors.string()}},
                       {{"emissions", emitted}});
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training allocates and frees ~100 MB of activations per batch; keep it
    // on the heap instead of paying for fresh mmap pages every time.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"IMU gesture recognition with stacked LSTMs"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "Optional TOML/INI configuration file (flags take precedence)");
    app.require_subcommand(1);

    SynthArgs synth_args;
    TrainArgs train_args;
    EvalArgs eval_args;
    InferArgs infer_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic gesture dataset");
    auto* train_cmd = app.add_subcommand("train", "Train a classifier on a dataset directory");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
    auto* infer = app.add_subcommand("infer", "Stream a sensor CSV through a checkpoint");
    add_synth(*synth, synth_args);
    add_train(*train_cmd, train_args);
    add_eval(*eval, eval_args);
    add_infer(*infer, infer_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    const std::vector<std::string> args(argv, argv + argc);
    try {
        if (*synth) {
            return run_synth(synth_args, args);
        }
        if (*train_cmd) {
            return run_train(train_args, args);
        }
        if (*eval) {
            return run_eval(eval_args, args);
        }
        return run_infer(infer_args, args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ContractViolation& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
}
