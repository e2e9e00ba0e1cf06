#include "imugest/lstm.hpp"

#include <algorithm>
#include <cmath>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace imugest {

std::string to_string(Variant v) { return v == Variant::A ? "A" : "B"; }

std::optional<Variant> parse_variant(std::string_view s) {
    if (s == "A" || s == "a") {
        return Variant::A;
    }
    if (s == "B" || s == "b") {
        return Variant::B;
    }
    return std::nullopt;
}

ModelConfig ModelConfig::variant_a() {
    ModelConfig c;
    c.variant = Variant::A;
    c.hidden_sizes = {32, 32};
    c.dropout_rate = 0.0;
    c.dropout_after = std::nullopt;
    c.input_relu = true;
    return c;
}

ModelConfig ModelConfig::variant_b() { return ModelConfig{}; }

void ModelConfig::validate() const {
    require(input_dim >= 1, "model config: input_dim must be >= 1");
    require(!hidden_sizes.empty(), "model config: at least one LSTM layer is required");
    for (auto h : hidden_sizes) {
        require(h >= 1, "model config: hidden sizes must be >= 1");
    }
    require(num_classes >= 1, "model config: num_classes must be >= 1");
    require(window_len >= 1, "model config: window_len must be >= 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "model config: dropout_rate must lie in [0, 1)");
    require(!dropout_after || *dropout_after < hidden_sizes.size(),
            "model config: dropout_after names a layer that does not exist");
}

std::vector<Array2*> ModelParams::tensors() {
    std::vector<Array2*> out;
    for (auto& l : layers) {
        out.insert(out.end(), {&l.W, &l.U, &l.b});
    }
    out.insert(out.end(), {&dense_W, &dense_b});
    return out;
}

std::vector<const Array2*> ModelParams::tensors() const {
    std::vector<const Array2*> out;
    for (const auto& l : layers) {
        out.insert(out.end(), {&l.W, &l.U, &l.b});
    }
    out.insert(out.end(), {&dense_W, &dense_b});
    return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto p = "lstm" + std::to_string(i) + ".";
        out.insert(out.end(), {p + "W", p + "U", p + "b"});
    }
    out.insert(out.end(), {"dense.W", "dense.b"});
    return out;
}

ModelParams zero_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    std::size_t in = config.input_dim;
    for (auto h : config.hidden_sizes) {
        p.layers.push_back({Array2(4 * h, in), Array2(4 * h, h), Array2(4 * h, 1)});
        in = h;
    }
    p.dense_W = Array2(config.num_classes, in);
    p.dense_b = Array2(config.num_classes, 1);
    return p;
}

ModelParams init_params(const ModelConfig& config, Rng& rng) {
    ModelParams p = zero_params(config);
    auto fill_uniform = [&rng](Array2& a, std::size_t fan_in) {
        const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : a.values()) {
            v = rng.uniform(-lim, lim);
        }
    };
    for (auto& l : p.layers) {
        fill_uniform(l.W, l.input());
        fill_uniform(l.U, l.hidden());
        const std::size_t h = l.hidden();
        for (std::size_t j = h; j < 2 * h; ++j) {
            l.b[j] = 1.0;
        }
    }
    fill_uniform(p.dense_W, p.dense_W.cols());
    return p;
}

void check_shapes(const ModelParams& params, const ModelConfig& config) {
    const ModelParams ref = zero_params(config);
    require(params.layers.size() == ref.layers.size(), "model params: layer count differs from config");
    auto a = params.tensors();
    auto b = ref.tensors();
    auto names = ref.tensor_names();
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i]->same_shape(*b[i]), "model params: " + names[i] + " has shape " +
                                             std::to_string(a[i]->rows()) + "x" +
                                             std::to_string(a[i]->cols()) + ", config implies " +
                                             std::to_string(b[i]->rows()) + "x" +
                                             std::to_string(b[i]->cols()));
    }
}

namespace {

// Weights transposed so that the gate projection walks contiguous memory.
struct PackedLayer {
    std::size_t in = 0, hid = 0;
    std::vector<double> wt;  // D x 4H
    std::vector<double> ut;  // H x 4H
    const double* bias = nullptr;
};

PackedLayer pack(const LstmLayerParams& p) {
    PackedLayer out;
    out.in = p.input();
    out.hid = p.hidden();
    const std::size_t g = 4 * out.hid;
    out.wt.resize(out.in * g);
    out.ut.resize(out.hid * g);
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t k = 0; k < out.in; ++k) {
            out.wt[k * g + r] = p.W(r, k);
        }
        for (std::size_t k = 0; k < out.hid; ++k) {
            out.ut[k * g + r] = p.U(r, k);
        }
    }
    out.bias = p.b.data();
    return out;
}

// C(i, j) += sum_k A(i, k) * B(k, j) with A(i, k) = a[i * sai + k * sak] and
// B, C row-major. Every element accumulates with fma in increasing k, so a
// row's result does not depend on how many rows are processed together.
constexpr std::size_t kRowBlock = 8;
constexpr std::size_t kColBlock = 24;
constexpr std::size_t kDepthBlock = 128;

template <std::size_t MB, std::size_t NB>
inline void gemm_tile(double* __restrict c, std::size_t ldc, const double* __restrict a, std::size_t sai,
                      std::size_t sak, const double* __restrict b, std::size_t ldb, std::size_t k0,
                      std::size_t k1) {
#if defined(__AVX512F__)
    if constexpr (NB % 8 == 0) {
        constexpr std::size_t V = NB / 8;
        __m512d acc[MB][V];
        for (std::size_t i = 0; i < MB; ++i) {
            for (std::size_t v = 0; v < V; ++v) {
                acc[i][v] = _mm512_loadu_pd(c + i * ldc + 8 * v);
            }
        }
        for (std::size_t k = k0; k < k1; ++k) {
            const double* bk = b + k * ldb;
            __m512d bv[V];
            for (std::size_t v = 0; v < V; ++v) {
                bv[v] = _mm512_loadu_pd(bk + 8 * v);
            }
            for (std::size_t i = 0; i < MB; ++i) {
                const __m512d av = _mm512_set1_pd(a[i * sai + k * sak]);
                for (std::size_t v = 0; v < V; ++v) {
                    acc[i][v] = _mm512_fmadd_pd(av, bv[v], acc[i][v]);
                }
            }
        }
        for (std::size_t i = 0; i < MB; ++i) {
            for (std::size_t v = 0; v < V; ++v) {
                _mm512_storeu_pd(c + i * ldc + 8 * v, acc[i][v]);
            }
        }
        return;
    }
#endif
    double acc[MB][NB];
    for (std::size_t i = 0; i < MB; ++i) {
        for (std::size_t j = 0; j < NB; ++j) {
            acc[i][j] = c[i * ldc + j];
        }
    }
    for (std::size_t k = k0; k < k1; ++k) {
        const double* bk = b + k * ldb;
        for (std::size_t i = 0; i < MB; ++i) {
            const double av = a[i * sai + k * sak];
            for (std::size_t j = 0; j < NB; ++j) {
                acc[i][j] = std::fma(av, bk[j], acc[i][j]);
            }
        }
    }
    for (std::size_t i = 0; i < MB; ++i) {
        for (std::size_t j = 0; j < NB; ++j) {
            c[i * ldc + j] = acc[i][j];
        }
    }
}

template <std::size_t MB>
inline void gemm_row_block(double* c, std::size_t ldc, const double* a, std::size_t sai, std::size_t sak,
                           const double* b, std::size_t ldb, std::size_t n, std::size_t k0, std::size_t k1) {
    std::size_t j = 0;
    for (; j + kColBlock <= n; j += kColBlock) {
        gemm_tile<MB, kColBlock>(c + j, ldc, a, sai, sak, b + j, ldb, k0, k1);
    }
    for (; j + 8 <= n; j += 8) {
        gemm_tile<MB, 8>(c + j, ldc, a, sai, sak, b + j, ldb, k0, k1);
    }
    for (; j < n; ++j) {
        gemm_tile<MB, 1>(c + j, ldc, a, sai, sak, b + j, ldb, k0, k1);
    }
}

void gemm_acc(std::size_t m, std::size_t n, std::size_t kdim, const double* a, std::size_t sai,
              std::size_t sak, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t k0 = 0; k0 < kdim; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(kdim, k0 + kDepthBlock);
        std::size_t i = 0;
        for (; i + kRowBlock <= m; i += kRowBlock) {
            gemm_row_block<kRowBlock>(c + i * ldc, ldc, a + i * sai, sai, sak, b, ldb, n, k0, k1);
        }
        for (; i < m; ++i) {
            gemm_row_block<1>(c + i * ldc, ldc, a + i * sai, sai, sak, b, ldb, n, k0, k1);
        }
    }
}

// One timestep of one layer for a batch. `x` is batch x D, h_prev/c_prev
// batch x H (nullptr for zero state). Outputs are batch-major as well.
void cell_step(const PackedLayer& p, std::size_t batch, const double* x, const double* h_prev,
               const double* c_prev, double* gates, double* cell, double* tanh_cell,
               double* hidden) {
    const std::size_t H = p.hid, G = 4 * H;
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy(p.bias, p.bias + G, gates + b * G);
    }
    gemm_acc(batch, G, p.in, x, p.in, 1, p.wt.data(), G, gates, G);
    if (h_prev != nullptr) {
        gemm_acc(batch, G, H, h_prev, H, 1, p.ut.data(), G, gates, G);
    }
    for (std::size_t b = 0; b < batch; ++b) {
        double* z = gates + b * G;
        sigmoid_block(z, 2 * H);
        tanh_block(z + 2 * H, H);
        sigmoid_block(z + 3 * H, H);
        const double* cp = c_prev != nullptr ? c_prev + b * H : nullptr;
        double* c = cell + b * H;
        double* tc = tanh_cell + b * H;
        double* h = hidden + b * H;
        for (std::size_t j = 0; j < H; ++j) {
            const double carry = cp != nullptr ? z[H + j] * cp[j] : 0.0;
            c[j] = carry + z[j] * z[2 * H + j];
        }
        std::copy(c, c + H, tc);
        tanh_block(tc, H);
        for (std::size_t j = 0; j < H; ++j) {
            h[j] = z[3 * H + j] * tc[j];
        }
    }
}

void dense_softmax(const ModelParams& params, std::size_t batch, const double* in, Array2& probs) {
    const std::size_t C = params.dense_W.rows(), H = params.dense_W.cols();
    probs = Array2(batch, C);
    for (std::size_t b = 0; b < batch; ++b) {
        auto row = probs.row(b);
        for (std::size_t c = 0; c < C; ++c) {
            double acc = params.dense_b[c];
            const double* w = params.dense_W.data() + c * H;
            const double* h = in + b * H;
            for (std::size_t k = 0; k < H; ++k) {
                acc += w[k] * h[k];
            }
            row[c] = acc;
        }
        softmax_inplace(row);
    }
}

SeqTensor gather_input(std::span<const Array2* const> windows, const ModelConfig& config) {
    const std::size_t B = windows.size(), T = config.window_len, D = config.input_dim;
    SeqTensor x(T, B, D);
    for (std::size_t b = 0; b < B; ++b) {
        const Array2& w = *windows[b];
        require(w.rows() == T && w.cols() == D,
                "model_forward: window is " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()) + ", model expects " + std::to_string(T) + "x" +
                    std::to_string(D));
        for (std::size_t t = 0; t < T; ++t) {
            double* dst = x.at(t, b);
            for (std::size_t d = 0; d < D; ++d) {
                dst[d] = config.input_relu ? relu(w(t, d)) : w(t, d);
            }
        }
    }
    return x;
}

}  // namespace

CellOutput lstm_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                             std::span<const double> c_prev, const LstmLayerParams& params) {
    const std::size_t H = params.hidden();
    require(params.W.rows() == 4 * H && params.b.size() == 4 * H,
            "lstm_cell_forward: inconsistent layer parameters");
    require(x.size() == params.input(), "lstm_cell_forward: input size mismatch");
    require(h_prev.size() == H && c_prev.size() == H, "lstm_cell_forward: state size mismatch");
    const PackedLayer p = pack(params);
    CellOutput out;
    out.h.resize(H);
    out.c.resize(H);
    out.cache.x.assign(x.begin(), x.end());
    out.cache.h_prev.assign(h_prev.begin(), h_prev.end());
    out.cache.c_prev.assign(c_prev.begin(), c_prev.end());
    out.cache.gates.resize(4 * H);
    out.cache.tanh_c.resize(H);
    cell_step(p, 1, x.data(), h_prev.data(), c_prev.data(), out.cache.gates.data(), out.c.data(),
              out.cache.tanh_c.data(), out.h.data());
    return out;
}

ForwardResult model_forward(std::span<const Array2* const> windows, const ModelParams& params,
                            const ModelConfig& config, Mode mode, Rng& rng) {
    config.validate();
    check_shapes(params, config);
    require(!windows.empty(), "model_forward: empty batch");
    const std::size_t B = windows.size(), T = config.window_len;

    ForwardResult res;
    ForwardCache& cache = res.cache;
    cache.mode = mode;
    cache.batch = B;
    cache.input = gather_input(windows, config);

    const SeqTensor* layer_in = &cache.input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const PackedLayer p = pack(params.layers[l]);
        const std::size_t H = p.hid;
        LayerCache lc;
        lc.gates = SeqTensor(T, B, 4 * H);
        lc.cell = SeqTensor(T, B, H);
        lc.tanh_cell = SeqTensor(T, B, H);
        lc.hidden = SeqTensor(T, B, H);
        for (std::size_t t = 0; t < T; ++t) {
            const double* hp = t > 0 ? lc.hidden.at(t - 1) : nullptr;
            const double* cp = t > 0 ? lc.cell.at(t - 1) : nullptr;
            cell_step(p, B, layer_in->at(t), hp, cp, lc.gates.at(t), lc.cell.at(t),
                      lc.tanh_cell.at(t), lc.hidden.at(t));
        }
        const bool drop = mode == Mode::train && config.dropout_after == l && config.dropout_rate > 0.0;
        if (drop) {
            lc.mask = SeqTensor(T, B, H);
            fill_dropout_mask(rng, lc.mask.data, config.dropout_rate);
            lc.dropped = SeqTensor(T, B, H);
            for (std::size_t i = 0; i < lc.hidden.data.size(); ++i) {
                lc.dropped.data[i] = lc.hidden.data[i] * lc.mask.data[i];
            }
        }
        cache.layers.push_back(std::move(lc));
        layer_in = &cache.layers.back().output();
    }

    const std::size_t H_last = params.dense_W.cols();
    cache.dense_in = Array2(B, H_last);
    std::copy(layer_in->at(T - 1), layer_in->at(T - 1) + B * H_last, cache.dense_in.data());
    dense_softmax(params, B, cache.dense_in.data(), cache.probs);
    res.probs = cache.probs;
    return res;
}

ForwardResult model_forward(const Array2& window, const ModelParams& params,
                            const ModelConfig& config, Mode mode, Rng& rng) {
    const Array2* w = &window;
    return model_forward(std::span<const Array2* const>(&w, 1), params, config, mode, rng);
}

Array2 infer_probs(std::span<const Array2* const> windows, const ModelParams& params,
                   const ModelConfig& config) {
    config.validate();
    check_shapes(params, config);
    require(!windows.empty(), "infer_probs: empty batch");
    const std::size_t B = windows.size(), T = config.window_len;
    const SeqTensor input = gather_input(windows, config);

    // Time-major sweep with two state slots per layer; arithmetic per element
    // is the same cell_step call as the cached forward.
    struct State {
        PackedLayer p;
        std::vector<double> gates, cell[2], tanh_cell, hidden[2];
    };
    std::vector<State> st;
    for (const auto& lp : params.layers) {
        State s;
        s.p = pack(lp);
        const std::size_t H = s.p.hid;
        s.gates.resize(B * 4 * H);
        s.tanh_cell.resize(B * H);
        for (int k = 0; k < 2; ++k) {
            s.cell[k].resize(B * H);
            s.hidden[k].resize(B * H);
        }
        st.push_back(std::move(s));
    }
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t cur = t & 1, prev = cur ^ 1;
        const double* x = input.at(t);
        for (auto& s : st) {
            const double* hp = t > 0 ? s.hidden[prev].data() : nullptr;
            const double* cp = t > 0 ? s.cell[prev].data() : nullptr;
            cell_step(s.p, B, x, hp, cp, s.gates.data(), s.cell[cur].data(), s.tanh_cell.data(),
                      s.hidden[cur].data());
            x = s.hidden[cur].data();
        }
    }
    Array2 probs;
    dense_softmax(params, B, st.back().hidden[(T - 1) & 1].data(), probs);
    return probs;
}

ModelParams model_backward(const ForwardCache& cache, std::span<const int> targets,
                           const ModelParams& params, const ModelConfig& config, double scale) {
    config.validate();
    check_shapes(params, config);
    const std::size_t B = cache.batch, T = config.window_len, C = config.num_classes;
    require(cache.layers.size() == params.layers.size() && cache.input.steps == T &&
                cache.probs.rows() == B && cache.probs.cols() == C,
            "model_backward: cache does not match the model configuration");
    require(targets.size() == B, "model_backward: need one target per batch row");
    for (int y : targets) {
        require(y >= 0 && static_cast<std::size_t>(y) < C, "model_backward: target out of range");
    }

    ModelParams grad = zero_params(config);
    const std::size_t L = params.layers.size();
    const std::size_t H_last = params.dense_W.cols();

    // Dense + softmax + cross-entropy: dlogits = scale * (p - onehot).
    SeqTensor d_out(T, B, H_last);
    {
        double* dh_top = d_out.at(T - 1);
        std::vector<double> dl(C);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                dl[c] = scale * (cache.probs(b, c) - (static_cast<int>(c) == targets[b] ? 1.0 : 0.0));
            }
            const double* h = cache.dense_in.data() + b * H_last;
            double* dh = dh_top + b * H_last;
            for (std::size_t c = 0; c < C; ++c) {
                grad.dense_b[c] += dl[c];
                double* gw = grad.dense_W.data() + c * H_last;
                const double* w = params.dense_W.data() + c * H_last;
                for (std::size_t k = 0; k < H_last; ++k) {
                    gw[k] += dl[c] * h[k];
                    dh[k] += dl[c] * w[k];
                }
            }
        }
    }

    for (std::size_t li = L; li-- > 0;) {
        const LayerCache& lc = cache.layers[li];
        const LstmLayerParams& lp = params.layers[li];
        LstmLayerParams& lg = grad.layers[li];
        const std::size_t H = lp.hidden(), D = lp.input(), G = 4 * H;
        const SeqTensor& x_seq = li == 0 ? cache.input : cache.layers[li - 1].output();

        if (!lc.mask.data.empty()) {
            for (std::size_t i = 0; i < d_out.data.size(); ++i) {
                d_out.data[i] *= lc.mask.data[i];
            }
        }

        SeqTensor d_in;
        if (li > 0) {
            d_in = SeqTensor(T, B, D);
        }
        SeqTensor dz_seq(T, B, G);
        std::vector<double> dh_next(B * H, 0.0), dc_next(B * H, 0.0);

        for (std::size_t t = T; t-- > 0;) {
            const double* gates = lc.gates.at(t);
            const double* tcell = lc.tanh_cell.at(t);
            const double* c_prev = t > 0 ? lc.cell.at(t - 1) : nullptr;
            const double* dh_above = d_out.at(t);
            double* dz = dz_seq.at(t);
            for (std::size_t b = 0; b < B; ++b) {
                const double* gb = gates + b * G;
                double* dzb = dz + b * G;
                for (std::size_t j = 0; j < H; ++j) {
                    const std::size_t k = b * H + j;
                    const double i = gb[j], f = gb[H + j], g = gb[2 * H + j], o = gb[3 * H + j];
                    const double tc = tcell[k];
                    const double dh = dh_above[k] + dh_next[k];
                    const double d_o = dh * tc;
                    const double dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                    const double cp = c_prev != nullptr ? c_prev[k] : 0.0;
                    dc_next[k] = dc * f;
                    dzb[j] = dc * g * i * (1.0 - i);
                    dzb[H + j] = dc * cp * f * (1.0 - f);
                    dzb[2 * H + j] = dc * i * (1.0 - g * g);
                    dzb[3 * H + j] = d_o * o * (1.0 - o);
                }
            }
            // Gradients flowing to h_{t-1} and to the layer input x_t.
            if (t > 0) {
                std::fill(dh_next.begin(), dh_next.end(), 0.0);
                gemm_acc(B, H, G, dz, G, 1, lp.U.data(), H, dh_next.data(), H);
            }
            if (li > 0) {
                gemm_acc(B, D, G, dz, G, 1, lp.W.data(), D, d_in.at(t), D);
            }
        }

        // Parameter gradients summed over all (t, b) rows at once:
        // dW += dZ^T X, dU += dZ[1:]^T H[:-1], db += column sums of dZ.
        const std::size_t rows = T * B;
        for (std::size_t m = 0; m < rows; ++m) {
            const double* dzm = dz_seq.data.data() + m * G;
            for (std::size_t r = 0; r < G; ++r) {
                lg.b[r] += dzm[r];
            }
        }
        gemm_acc(G, D, rows, dz_seq.data.data(), 1, G, x_seq.data.data(), D, lg.W.data(), D);
        if (T > 1) {
            gemm_acc(G, H, rows - B, dz_seq.at(1), 1, G, lc.hidden.data.data(), H, lg.U.data(), H);
        }
        if (li > 0) {
            d_out = std::move(d_in);
        }
    }
    return grad;
}

ModelParams model_backward(const ForwardCache& cache, int target, const ModelParams& params,
                           const ModelConfig& config) {
    return model_backward(cache, std::span<const int>(&target, 1), params, config, 1.0);
}

double mean_loss(const Array2& probs, std::span<const int> targets) {
    require(probs.rows() == targets.size(), "mean_loss: one target per row required");
    double sum = 0.0;
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        require(targets[b] >= 0, "mean_loss: negative target");
        sum += cross_entropy(probs.row(b), static_cast<std::size_t>(targets[b]));
    }
    return sum / static_cast<double>(probs.rows());
}

}  // namespace imugest
