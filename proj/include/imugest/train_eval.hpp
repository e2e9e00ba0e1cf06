#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imugest/ingest.hpp"
#include "imugest/lstm.hpp"
#include "imugest/preprocess.hpp"

namespace imugest {

struct TrainConfig {
    std::size_t batch_size = 50;
    double learning_rate = 0.001;
    std::size_t epochs = 30;
    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 1;
    std::uint64_t dropout_seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::optional<std::size_t> early_stop_patience;
    std::optional<double> clip_norm;        // rescale the batch gradient to at most this global L2 norm
    std::optional<double> stop_at_val_acc;  // stop once validation window accuracy reaches this

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;  // from the training-mode forward passes of the epoch
    double val_window_acc = 0.0;
    double val_gesture_acc = 0.0;
};

struct TrainResult {
    ModelParams best;   // parameters of the epoch with the highest validation window accuracy
    ModelParams final;  // parameters after the last epoch run
    std::size_t best_epoch = 0;
    std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch Adam on mean batch cross-entropy. Throws ContractViolation
/// before any step if the data does not fit the model.
TrainResult train(const WindowedDataset& train_set, const WindowedDataset& validation_set,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

std::string metrics_csv(const std::vector<EpochMetrics>& history);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = kNumGestures)
        : n_(classes), counts_(classes * classes, 0) {}

    void add(int truth, int predicted);

    std::size_t classes() const noexcept { return n_; }
    std::uint64_t count(int truth, int predicted) const;
    std::uint64_t row_total(int truth) const;
    std::uint64_t total() const;
    std::uint64_t trace() const;
    /// trace / total; 0 for an empty matrix.
    double accuracy() const;
    /// count(truth, predicted) / row_total(truth); 0 for an empty row.
    double rate(int truth, int predicted) const;
    /// Mean of rate(i, j) over all i != j with a nonempty row i.
    double mean_off_diagonal_rate() const;

    /// Header row and first column carry gesture names.
    std::string to_csv() const;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

/// Infer-mode class probabilities, one row per window.
Array2 predict_probs(const ModelParams& params, const ModelConfig& config,
                     std::span<const Window> windows, std::size_t chunk = 64);

struct EvalResult {
    ConfusionMatrix confusion;
    double window_accuracy = 0.0;
};

EvalResult evaluate(const ModelParams& params, const ModelConfig& config,
                    std::span<const Window> windows);
EvalResult evaluate_probs(const Array2& probs, std::span<const Window> windows,
                          std::size_t classes);

struct GestureAccuracy {
    double accuracy = 0.0;
    std::size_t evaluated = 0;
    std::vector<std::size_t> excluded;  // recordings that produced no window
};

/// Soft vote: sum the probability rows of each recording's windows (grouped
/// by Window::recording) and take the argmax of the sum.
GestureAccuracy soft_vote_accuracy(const Array2& probs, std::span<const Window> windows,
                                   std::size_t recordings);

/// Windows each recording (with `options`, normalized by `stats` when given)
/// and scores the soft vote per recording.
GestureAccuracy gesture_accuracy_majority(const ModelParams& params, const ModelConfig& config,
                                          const std::vector<GestureRecording>& recordings,
                                          const PreprocessOptions& options,
                                          const NormalizationStats* stats = nullptr);
GestureAccuracy gesture_accuracy_majority(const ModelParams& params, const ModelConfig& config,
                                          const std::vector<GestureRecording>& recordings,
                                          std::size_t window_len, std::size_t step);

struct Emission {
    std::int64_t t_ms = 0;  // timestamp of the window's last sample
    GestureLabel label = GestureLabel::circle;
    double confidence = 0.0;  // probability of `label`

    friend bool operator==(const Emission&, const Emission&) = default;
};

/// Online sliding-window classifier. Emits once the buffer first holds
/// window_len samples and then every `step` samples, applying the same
/// preprocessing as prepare_windows + zscore_apply.
class StreamClassifier {
public:
    StreamClassifier(const ModelParams& params, const ModelConfig& config, NormalizationStats stats,
                     PreprocessOptions options);

    std::optional<Emission> push(const SensorSample& sample);

private:
    Emission classify();

    const ModelParams& params_;
    ModelConfig config_;
    NormalizationStats stats_;
    PreprocessOptions options_;
    std::optional<std::size_t> dropped_;
    std::deque<std::array<double, 6>> buffer_;
    std::array<double, 3> gravity_sum_{};
    std::array<double, 3> gravity_{};
    std::size_t seen_ = 0;
    std::int64_t last_t_ = 0;
};

std::vector<Emission> stream_infer(const ModelParams& params, const ModelConfig& config,
                                   const NormalizationStats& stats, const PreprocessOptions& options,
                                   std::span<const SensorSample> stream);

/// Preprocessing recipe plus fitted statistics, stored next to checkpoints
/// as JSON so that eval and infer reproduce training-time inputs.
struct Pipeline {
    PreprocessOptions options;
    NormalizationStats stats;
};

std::string encode_pipeline(const Pipeline& pipeline);
Pipeline decode_pipeline(std::string_view json);
void save_pipeline(const Pipeline& pipeline, const std::filesystem::path& path);
Pipeline load_pipeline(const std::filesystem::path& path);

}  // namespace imugest
