#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "imugest/numerics.hpp"

namespace imugest {

enum class Variant { A, B };

std::string to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

/// Architecture of the stacked-LSTM classifier.
///
/// Variant A: input ReLU, LSTM(32) -> LSTM(32) -> dense softmax.
/// Variant B: LSTM(64) -> LSTM(64) -> dropout -> LSTM(64) -> dense softmax.
/// The dropout position is held in `dropout_after` (index of the LSTM layer
/// whose output sequence is masked) so either reading is a config change.
struct ModelConfig {
    Variant variant = Variant::B;
    std::size_t input_dim = 6;
    std::vector<std::size_t> hidden_sizes{64, 64, 64};
    std::size_t num_classes = 10;
    double dropout_rate = 0.5;
    std::optional<std::size_t> dropout_after = 1;
    bool input_relu = false;
    std::size_t window_len = 250;

    static ModelConfig variant_a();
    static ModelConfig variant_b();

    /// Throws ContractViolation on an inconsistent configuration.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Gate rows are stacked in the order [input, forget, candidate, output].
struct LstmLayerParams {
    Array2 W;  // 4H x D
    Array2 U;  // 4H x H
    Array2 b;  // 4H x 1

    std::size_t hidden() const noexcept { return U.cols(); }
    std::size_t input() const noexcept { return W.cols(); }

    friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

struct ModelParams {
    std::vector<LstmLayerParams> layers;
    Array2 dense_W;  // C x H_last
    Array2 dense_b;  // C x 1

    /// Every learnable array in the fixed order: per layer W, U, b; then
    /// dense_W, dense_b. Checkpoints, the optimizer and gradient checks all
    /// walk this order.
    std::vector<Array2*> tensors();
    std::vector<const Array2*> tensors() const;
    std::vector<std::string> tensor_names() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// All-zero parameters with the shapes implied by `config`.
ModelParams zero_params(const ModelConfig& config);

/// Uniform(-1/sqrt(n), 1/sqrt(n)) weights where n is the number of inputs the
/// matrix multiplies (D for W, H for U, H_last for the dense head); zero
/// biases except the forget-gate slice, which starts at 1.
ModelParams init_params(const ModelConfig& config, Rng& rng);

/// Throws ContractViolation unless `params` has exactly the shapes of `config`.
void check_shapes(const ModelParams& params, const ModelConfig& config);

// -- single cell ------------------------------------------------------------

struct CellCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> gates;   // post-activation i, f, g, o (4H)
    std::vector<double> tanh_c;  // tanh(c_t)
};

struct CellOutput {
    std::vector<double> h;
    std::vector<double> c;
    CellCache cache;
};

CellOutput lstm_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                             std::span<const double> c_prev, const LstmLayerParams& params);

// -- full model -------------------------------------------------------------

enum class Mode { train, infer };

/// steps x batch x dim, contiguous in that order.
struct SeqTensor {
    SeqTensor() = default;
    SeqTensor(std::size_t steps, std::size_t batch, std::size_t dim)
        : steps(steps), batch(batch), dim(dim), data(steps * batch * dim, 0.0) {}

    double* at(std::size_t t, std::size_t b = 0) { return data.data() + (t * batch + b) * dim; }
    const double* at(std::size_t t, std::size_t b = 0) const {
        return data.data() + (t * batch + b) * dim;
    }

    std::size_t steps = 0, batch = 0, dim = 0;
    std::vector<double> data;
};

struct LayerCache {
    SeqTensor gates;      // post-activation, 4H
    SeqTensor cell;       // c_t
    SeqTensor tanh_cell;  // tanh(c_t)
    SeqTensor hidden;     // h_t
    SeqTensor mask;       // dropout mask on h_t, empty when not applied
    SeqTensor dropped;    // h_t * mask, empty when not applied
    const SeqTensor& output() const { return mask.data.empty() ? hidden : dropped; }
};

struct ForwardCache {
    Mode mode = Mode::infer;
    std::size_t batch = 0;
    SeqTensor input;  // window values after the optional input ReLU
    std::vector<LayerCache> layers;
    Array2 dense_in;  // batch x H_last, the last step's (masked) hidden state
    Array2 probs;     // batch x C
};

struct ForwardResult {
    Array2 probs;  // batch x C, each row sums to 1
    ForwardCache cache;
};

/// Runs the classifier on a batch of windows (each window_len x input_dim).
/// Each batch row is computed independently with a fixed operation order, so
/// a window's output does not depend on what else is in the batch.
ForwardResult model_forward(std::span<const Array2* const> windows, const ModelParams& params,
                            const ModelConfig& config, Mode mode, Rng& rng);
ForwardResult model_forward(const Array2& window, const ModelParams& params,
                            const ModelConfig& config, Mode mode, Rng& rng);

/// Inference-only forward that keeps no per-step cache. Bit-identical to the
/// probabilities of model_forward(..., Mode::infer, ...).
Array2 infer_probs(std::span<const Array2* const> windows, const ModelParams& params,
                   const ModelConfig& config);

/// Gradients of `scale * sum_b cross_entropy(probs[b], targets[b])` with
/// respect to every parameter, by backpropagation through time.
ModelParams model_backward(const ForwardCache& cache, std::span<const int> targets,
                           const ModelParams& params, const ModelConfig& config,
                           double scale = 1.0);
ModelParams model_backward(const ForwardCache& cache, int target, const ModelParams& params,
                           const ModelConfig& config);

/// Mean cross-entropy of a probability batch against targets.
double mean_loss(const Array2& probs, std::span<const int> targets);

// -- checkpoints ------------------------------------------------------------

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { io, malformed, version_mismatch, shape_mismatch };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelParams& params, const ModelConfig& config);
std::pair<ModelParams, ModelConfig> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& path);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::filesystem::path& path);

}  // namespace imugest
