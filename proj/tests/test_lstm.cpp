#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "imugest/lstm.hpp"

using namespace imugest;

namespace {

// Straightforward cell written from the gate equations, with std::exp and
// std::tanh, used as an independent reference.
struct RefCell {
    std::vector<double> h, c;
};

RefCell reference_cell(const std::vector<double>& x, const std::vector<double>& h_prev,
                       const std::vector<double>& c_prev, const LstmLayerParams& p) {
    const std::size_t H = p.hidden(), D = p.input();
    std::vector<double> z(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double s = p.b[r];
        for (std::size_t k = 0; k < D; ++k) {
            s += p.W(r, k) * x[k];
        }
        for (std::size_t k = 0; k < H; ++k) {
            s += p.U(r, k) * h_prev[k];
        }
        z[r] = s;
    }
    auto sg = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    RefCell out{std::vector<double>(H), std::vector<double>(H)};
    for (std::size_t j = 0; j < H; ++j) {
        const double i = sg(z[j]), f = sg(z[H + j]), g = std::tanh(z[2 * H + j]), o = sg(z[3 * H + j]);
        out.c[j] = f * c_prev[j] + i * g;
        out.h[j] = o * std::tanh(out.c[j]);
    }
    return out;
}

std::vector<double> reference_model(const Array2& window, const ModelParams& params, const ModelConfig& cfg) {
    std::vector<std::vector<double>> seq(window.rows(), std::vector<double>(window.cols()));
    for (std::size_t t = 0; t < window.rows(); ++t) {
        for (std::size_t d = 0; d < window.cols(); ++d) {
            seq[t][d] = cfg.input_relu ? std::max(0.0, window(t, d)) : window(t, d);
        }
    }
    for (const auto& lp : params.layers) {
        const std::size_t H = lp.hidden();
        std::vector<double> h(H, 0.0), c(H, 0.0);
        for (auto& x : seq) {
            auto r = reference_cell(x, h, c, lp);
            h = r.h;
            c = r.c;
            x = h;
        }
    }
    const auto& last = seq.back();
    std::vector<double> logits(params.dense_W.rows());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        double s = params.dense_b[k];
        for (std::size_t j = 0; j < last.size(); ++j) {
            s += params.dense_W(k, j) * last[j];
        }
        logits[k] = s;
    }
    return softmax(logits);
}

ModelConfig small_config() {
    ModelConfig c = ModelConfig::variant_a();
    c.hidden_sizes = {5, 4};
    c.window_len = 7;
    c.input_dim = 3;
    c.num_classes = 4;
    return c;
}

Array2 random_window(Rng& rng, std::size_t t, std::size_t d) {
    Array2 w(t, d);
    for (double& v : w.values()) {
        v = rng.normal();
    }
    return w;
}

void randomize(ModelParams& p, Rng& rng, double scale) {
    for (Array2* a : p.tensors()) {
        for (double& v : a->values()) {
            v = rng.uniform(-scale, scale);
        }
    }
}

}  // namespace

TEST_CASE("variant presets") {
    const auto a = ModelConfig::variant_a();
    CHECK(a.hidden_sizes == std::vector<std::size_t>{32, 32});
    CHECK(a.input_relu);
    CHECK(a.dropout_rate == 0.0);
    const auto b = ModelConfig::variant_b();
    CHECK(b.hidden_sizes == std::vector<std::size_t>{64, 64, 64});
    CHECK(b.dropout_rate == 0.5);
    CHECK(b.dropout_after == std::optional<std::size_t>(1));
    CHECK_FALSE(b.input_relu);

    ModelConfig bad = b;
    bad.dropout_rate = 1.0;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = b;
    bad.dropout_after = 3;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("parameter shapes and initialization") {
    const auto cfg = ModelConfig::variant_b();
    Rng rng(1);
    const ModelParams p = init_params(cfg, rng);
    REQUIRE(p.layers.size() == 3);
    CHECK(p.layers[0].W.rows() == 256);
    CHECK(p.layers[0].W.cols() == 6);
    CHECK(p.layers[1].W.cols() == 64);
    CHECK(p.layers[2].U.rows() == 256);
    CHECK(p.dense_W.rows() == 10);
    CHECK(p.dense_W.cols() == 64);
    for (const auto& l : p.layers) {
        for (std::size_t r = 0; r < 256; ++r) {
            CHECK(l.b[r] == (r >= 64 && r < 128 ? 1.0 : 0.0));
        }
        for (double v : l.W.values()) {
            CHECK(std::fabs(v) <= 1.0 / std::sqrt(static_cast<double>(l.input())));
        }
        for (double v : l.U.values()) {
            CHECK(std::fabs(v) <= 0.125);
        }
    }
    CHECK(p.tensor_names().front() == "lstm0.W");
    CHECK(p.tensor_names().back() == "dense.b");

    ModelParams wrong = p;
    wrong.layers[1].U = Array2(256, 63);
    CHECK_THROWS_AS(check_shapes(wrong, cfg), ContractViolation);
}

TEST_CASE("cell with zero weights") {
    // All pre-activations are 0: i = f = o = 1/2, g = 0, so c = c_prev / 2
    // and h = tanh(c) / 2.
    LstmLayerParams p{Array2(8, 3), Array2(8, 2), Array2(8, 1)};
    const std::vector<double> x{1.0, 2.0, 3.0}, h{0.3, -0.1}, c{0.8, -2.0};
    const auto out = lstm_cell_forward(x, h, c, p);
    for (int j = 0; j < 2; ++j) {
        CHECK(out.c[j] == doctest::Approx(c[j] / 2.0).epsilon(1e-15));
        CHECK(out.h[j] == doctest::Approx(std::tanh(c[j] / 2.0) / 2.0).epsilon(1e-15));
    }
}

TEST_CASE("cell matches the reference implementation") {
    Rng rng(17);
    for (std::size_t H : {1u, 3u, 8u, 13u}) {
        for (std::size_t D : {1u, 6u, 9u}) {
            LstmLayerParams p{Array2(4 * H, D), Array2(4 * H, H), Array2(4 * H, 1)};
            for (Array2* a : {&p.W, &p.U, &p.b}) {
                for (double& v : a->values()) {
                    v = rng.uniform(-1.5, 1.5);
                }
            }
            std::vector<double> x(D), h(H), c(H);
            for (auto* vec : {&x, &h, &c}) {
                for (double& v : *vec) {
                    v = rng.uniform(-2.0, 2.0);
                }
            }
            const auto out = lstm_cell_forward(x, h, c, p);
            const auto ref = reference_cell(x, h, c, p);
            for (std::size_t j = 0; j < H; ++j) {
                CHECK(out.c[j] == doctest::Approx(ref.c[j]).epsilon(1e-13).scale(1.0));
                CHECK(out.h[j] == doctest::Approx(ref.h[j]).epsilon(1e-13).scale(1.0));
            }
        }
    }
}

TEST_CASE("cell rejects mismatched inputs") {
    LstmLayerParams p{Array2(8, 3), Array2(8, 2), Array2(8, 1)};
    const std::vector<double> x{1.0, 2.0}, h{0.0, 0.0}, c{0.0, 0.0};
    CHECK_THROWS_AS(lstm_cell_forward(x, h, c, p), ContractViolation);
}

TEST_CASE("model forward matches the reference model") {
    Rng rng(23);
    for (bool relu_in : {false, true}) {
        ModelConfig cfg = small_config();
        cfg.input_relu = relu_in;
        ModelParams p = zero_params(cfg);
        randomize(p, rng, 0.8);
        for (int trial = 0; trial < 5; ++trial) {
            const Array2 w = random_window(rng, cfg.window_len, cfg.input_dim);
            Rng unused(0);
            const auto res = model_forward(w, p, cfg, Mode::infer, unused);
            const auto ref = reference_model(w, p, cfg);
            for (std::size_t k = 0; k < ref.size(); ++k) {
                CHECK(res.probs(0, k) == doctest::Approx(ref[k]).epsilon(1e-12).scale(1.0));
            }
        }
    }
}

TEST_CASE("outputs are probability rows and independent of batch composition") {
    const auto cfg = ModelConfig::variant_b();
    Rng rng(2);
    const ModelParams p = init_params(cfg, rng);
    std::vector<Array2> ws;
    for (int i = 0; i < 9; ++i) {
        ws.push_back(random_window(rng, cfg.window_len, cfg.input_dim));
    }
    std::vector<const Array2*> all;
    for (auto& w : ws) {
        all.push_back(&w);
    }
    Rng r0(0);
    const auto batch = model_forward(all, p, cfg, Mode::infer, r0);
    const Array2 lean = infer_probs(all, p, cfg);
    CHECK(lean == batch.probs);
    for (std::size_t b = 0; b < ws.size(); ++b) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
            sum += batch.probs(b, k);
            CHECK(batch.probs(b, k) >= 0.0);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        const Array2* one = &ws[b];
        const Array2 single = infer_probs(std::span<const Array2* const>(&one, 1), p, cfg);
        for (std::size_t k = 0; k < 10; ++k) {
            CHECK(single(0, k) == batch.probs(b, k));
        }
    }
}

TEST_CASE("train mode applies dropout and infer mode does not") {
    const auto cfg = ModelConfig::variant_b();
    Rng rng(4);
    const ModelParams p = init_params(cfg, rng);
    const Array2 w = random_window(rng, cfg.window_len, cfg.input_dim);
    Rng d1(1), d2(1), d3(2);
    const auto a = model_forward(w, p, cfg, Mode::train, d1);
    const auto b = model_forward(w, p, cfg, Mode::train, d2);
    const auto c = model_forward(w, p, cfg, Mode::train, d3);
    const auto inf = model_forward(w, p, cfg, Mode::infer, d3);
    CHECK(a.probs == b.probs);
    CHECK_FALSE(a.probs == c.probs);
    CHECK_FALSE(a.probs == inf.probs);
    CHECK(a.cache.layers[1].mask.data.size() == cfg.window_len * 64);
    CHECK(inf.cache.layers[1].mask.data.empty());
}

TEST_CASE("window shape is checked") {
    const auto cfg = small_config();
    Rng rng(1);
    const ModelParams p = init_params(cfg, rng);
    const Array2 w(cfg.window_len + 1, cfg.input_dim);
    CHECK_THROWS_AS(model_forward(w, p, cfg, Mode::infer, rng), ContractViolation);
}

namespace {

double max_rel_error(const Array2& a, const Array2& n) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(n[i]), 1e-6});
        worst = std::max(worst, std::fabs(a[i] - n[i]) / denom);
    }
    return worst;
}

// Max relative error between backprop and central differences over every
// parameter tensor, with the dropout stream reset for each loss evaluation.
double gradient_check(const ModelConfig& cfg, std::uint64_t seed, Mode mode) {
    Rng rng(seed);
    ModelParams p = init_params(cfg, rng);
    randomize(p, rng, 0.5);
    std::vector<Array2> ws{random_window(rng, cfg.window_len, cfg.input_dim),
                           random_window(rng, cfg.window_len, cfg.input_dim)};
    std::vector<const Array2*> batch{&ws[0], &ws[1]};
    const std::vector<int> targets{1, static_cast<int>(cfg.num_classes) - 1};
    Rng drop(seed + 100);
    Rng drop_copy = drop;
    const auto fwd = model_forward(batch, p, cfg, mode, drop_copy);
    const ModelParams g = model_backward(fwd.cache, targets, p, cfg);

    double worst = 0.0;
    auto tensors = p.tensors();
    auto grads = g.tensors();
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        auto loss = [&](const Array2& value) {
            ModelParams q = p;
            *q.tensors()[ti] = value;
            Rng d = drop;
            const auto r = model_forward(batch, q, cfg, mode, d);
            return mean_loss(r.probs, targets) * 2.0;
        };
        const Array2 num = finite_diff_gradient(loss, *tensors[ti]);
        worst = std::max(worst, max_rel_error(*grads[ti], num));
    }
    return worst;
}

}  // namespace

TEST_CASE("backprop agrees with finite differences") {
    ModelConfig cfg = small_config();
    for (std::uint64_t seed : {1u, 2u}) {
        CHECK(gradient_check(cfg, seed, Mode::infer) <= 1e-4);
    }
    ModelConfig three = cfg;
    three.variant = Variant::B;
    three.input_relu = false;
    three.hidden_sizes = {4, 3, 5};
    three.dropout_rate = 0.3;
    three.dropout_after = 1;
    CHECK(gradient_check(three, 3, Mode::train) <= 1e-4);
    CHECK(gradient_check(three, 4, Mode::infer) <= 1e-4);
}

TEST_CASE("backward scale multiplies every gradient") {
    const auto cfg = small_config();
    Rng rng(6);
    const ModelParams p = init_params(cfg, rng);
    const Array2 w = random_window(rng, cfg.window_len, cfg.input_dim);
    const auto fwd = model_forward(w, p, cfg, Mode::infer, rng);
    const int y = 2;
    const ModelParams g1 = model_backward(fwd.cache, std::span<const int>(&y, 1), p, cfg, 1.0);
    const ModelParams g4 = model_backward(fwd.cache, std::span<const int>(&y, 1), p, cfg, 0.25);
    auto a = g1.tensors();
    auto b = g4.tensors();
    for (std::size_t t = 0; t < a.size(); ++t) {
        for (std::size_t i = 0; i < a[t]->size(); ++i) {
            CHECK((*b[t])[i] == doctest::Approx((*a[t])[i] * 0.25).epsilon(1e-12).scale(1e-300));
        }
    }
    const int bad = 4;
    CHECK_THROWS_AS(model_backward(fwd.cache, bad, p, cfg), ContractViolation);
}

TEST_CASE("fresh model loss is near ln C") {
    const auto cfg = ModelConfig::variant_b();
    Rng rng(10);
    const ModelParams p = init_params(cfg, rng);
    std::vector<Array2> ws;
    std::vector<int> targets;
    for (int i = 0; i < 20; ++i) {
        ws.push_back(random_window(rng, cfg.window_len, cfg.input_dim));
        targets.push_back(i % 10);
    }
    std::vector<const Array2*> ptr;
    for (auto& w : ws) {
        ptr.push_back(&w);
    }
    const double loss = mean_loss(infer_probs(ptr, p, cfg), targets);
    CHECK(std::fabs(loss - std::log(10.0)) <= 0.5);
}
