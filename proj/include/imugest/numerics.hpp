#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imugest {

/// Thrown when a caller breaks an operation's documented precondition.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) {
        throw ContractViolation(what);
    }
}

/// Dense row-major matrix of doubles. Vectors are stored as n x 1.
class Array2 {
public:
    Array2() = default;
    Array2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool same_shape(const Array2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    void fill(double v);
    bool all_finite() const noexcept;

    friend bool operator==(const Array2&, const Array2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Seeded pseudo-random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Doubles are built from the top 53 bits of each draw and normals
/// use Box-Muller, so nothing depends on the library's distribution classes
/// and sequences are identical across platforms.
///
/// split() derives an independent stream from (seed, stream name) through
/// SplitMix64 so that init, dropout and shuffling can be reseeded separately.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer in [0, n). n must be >= 1.
    std::uint64_t below(std::uint64_t n);

    Rng split(std::string_view stream) const;
    Rng split(std::uint64_t stream) const;

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Activations. The LSTM cell uses the block forms further down.
inline double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double tanh_act(double x) noexcept;
inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

/// exp(x) for x clamped to [-708, 709] via range reduction and a degree-12
/// polynomial; relative error below 1e-15.
double exp_poly(double x) noexcept;

/// In-place activations over a contiguous block, vectorized when AVX-512 is
/// available. Each element goes through the same operation sequence whatever
/// its position or the block length, so results never depend on batching.
void sigmoid_block(double* x, std::size_t n) noexcept;
void tanh_block(double* x, std::size_t n) noexcept;

Array2 sigmoid(const Array2& x);
Array2 tanh_act(const Array2& x);
Array2 relu(const Array2& x);

/// Numerically stable softmax (max-subtracted) of one logit vector.
std::vector<double> softmax(std::span<const double> logits);
void softmax_inplace(std::span<double> logits);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(pred[target]), with pred clamped below at 1e-12.
double cross_entropy(std::span<const double> pred, std::size_t target_class);

/// Inverted-dropout mask: 0 with probability `rate`, 1/(1-rate) otherwise.
Array2 dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double rate);
void fill_dropout_mask(Rng& rng, std::span<double> mask, double rate);

struct AdamHyper {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols, AdamHyper hyper)
        : m(rows, cols), v(rows, cols), hyper(hyper) {}

    Array2 m;
    Array2 v;
    std::uint64_t t = 0;
    AdamHyper hyper;
};

/// One bias-corrected Adam step, in place on `param` and `state`.
void adam_update(Array2& param, const Array2& grad, AdamState& state);

/// Central-difference gradient of `loss` at `params`.
/// `params` is perturbed in place coordinate by coordinate and restored.
Array2 finite_diff_gradient(const std::function<double(const Array2&)>& loss, Array2 params,
                            double h = 1e-5);

}  // namespace imugest
