#include "imugest/numerics.hpp"

#include <algorithm>
#include <numbers>

namespace imugest {

void Array2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array2::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // Box-Muller, one draw per call; 1 - u keeps the log argument in (0, 1].
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    require(n >= 1, "Rng::below: n must be >= 1");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

Rng Rng::split(std::string_view stream) const {
    // FNV-1a of the stream name, then mixed with the parent seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : stream) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return split(h);
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(splitmix64(splitmix64(seed_) ^ stream));
}

double tanh_act(double x) noexcept { return std::tanh(x); }

namespace {
template <class F>
Array2 map(const Array2& x, F f) {
    Array2 out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = f(x[i]);
    }
    return out;
}
}  // namespace

Array2 sigmoid(const Array2& x) { return map(x, [](double v) { return sigmoid(v); }); }
Array2 tanh_act(const Array2& x) { return map(x, [](double v) { return std::tanh(v); }); }
Array2 relu(const Array2& x) { return map(x, [](double v) { return relu(v); }); }

void softmax_inplace(std::span<double> logits) {
    require(!logits.empty(), "softmax: empty input");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) {
        v /= sum;
    }
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    softmax_inplace(out);
    return out;
}

double cross_entropy(std::span<const double> pred, std::size_t target_class) {
    require(target_class < pred.size(), "cross_entropy: target class " +
                                            std::to_string(target_class) + " out of range [0, " +
                                            std::to_string(pred.size()) + ")");
    return -std::log(std::max(pred[target_class], kProbabilityFloor));
}

void fill_dropout_mask(Rng& rng, std::span<double> mask, double rate) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
    if (rate == 0.0) {
        std::fill(mask.begin(), mask.end(), 1.0);
        return;
    }
    const double keep = 1.0 / (1.0 - rate);
    for (double& m : mask) {
        m = rng.uniform() < rate ? 0.0 : keep;
    }
}

Array2 dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double rate) {
    Array2 mask(rows, cols);
    fill_dropout_mask(rng, mask.values(), rate);
    return mask;
}

void adam_update(Array2& param, const Array2& grad, AdamState& state) {
    require(param.same_shape(grad), "adam_update: gradient shape differs from parameter");
    require(param.same_shape(state.m) && param.same_shape(state.v),
            "adam_update: optimizer state shape differs from parameter");
    const auto& hp = state.hyper;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(hp.beta1, t);
    const double c2 = 1.0 - std::pow(hp.beta2, t);
    double* p = param.data();
    double* m = state.m.data();
    double* v = state.v.data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
}

Array2 finite_diff_gradient(const std::function<double(const Array2&)>& loss, Array2 params,
                            double h) {
    require(h > 0.0, "finite_diff_gradient: step must be positive");
    Array2 grad(params.rows(), params.cols());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + h;
        const double up = loss(params);
        params[i] = orig - h;
        const double down = loss(params);
        params[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace imugest
