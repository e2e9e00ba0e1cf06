#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "imugest/numerics.hpp"

using namespace imugest;

TEST_CASE("softmax sums to one and ignores a constant shift") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(10);
        for (auto& v : z) {
            v = rng.uniform(-20.0, 20.0);
        }
        const auto p = softmax(z);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
        auto shifted = z;
        for (auto& v : shifted) {
            v += 123.0;
        }
        const auto q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax of huge logits stays finite") {
    const auto p = softmax(std::vector<double>{1000.0, 999.0, -1000.0});
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(p[2] == 0.0);
}

TEST_CASE("softmax of equal logits is uniform") {
    const auto p = softmax(std::vector<double>(10, 3.5));
    for (double v : p) {
        CHECK(v == doctest::Approx(0.1));
    }
}

TEST_CASE("cross entropy") {
    std::vector<double> uniform(10, 0.1);
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(10.0)));
    std::vector<double> zero{1.0, 0.0};
    CHECK(cross_entropy(zero, 1) == doctest::Approx(-std::log(1e-12)));
    CHECK(cross_entropy(zero, 0) == 0.0);
    CHECK_THROWS_AS(cross_entropy(uniform, 10), ContractViolation);
}

TEST_CASE("scalar sigmoid") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("exp_poly agrees with std::exp") {
    for (double x = -700.0; x <= 700.0; x += 0.37) {
        const double ref = std::exp(x);
        CHECK(std::fabs(exp_poly(x) - ref) <= 2e-15 * ref);
    }
    CHECK(exp_poly(0.0) == 1.0);
    CHECK(std::isfinite(exp_poly(1e6)));
    CHECK(exp_poly(-1e6) >= 0.0);
}

TEST_CASE("block activations match the reference functions") {
    std::vector<double> xs;
    for (double x = -40.0; x <= 40.0; x += 0.013) {
        xs.push_back(x);
    }
    xs.push_back(0.0);
    xs.push_back(-0.0);
    xs.push_back(1e-12);
    auto s = xs;
    auto t = xs;
    sigmoid_block(s.data(), s.size());
    tanh_block(t.data(), t.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(std::fabs(s[i] - 1.0 / (1.0 + std::exp(-xs[i]))) <= 1e-15);
        CHECK(std::fabs(t[i] - std::tanh(xs[i])) <= 1e-15);
    }
}

TEST_CASE("block activations do not depend on block length or offset") {
    Rng rng(5);
    std::vector<double> xs(37);
    for (auto& v : xs) {
        v = rng.uniform(-8.0, 8.0);
    }
    auto whole_s = xs;
    auto whole_t = xs;
    sigmoid_block(whole_s.data(), whole_s.size());
    tanh_block(whole_t.data(), whole_t.size());
    for (std::size_t off = 0; off < xs.size(); ++off) {
        for (std::size_t len : {std::size_t{1}, std::size_t{3}, std::size_t{8}, std::size_t{17}}) {
            if (off + len > xs.size()) {
                continue;
            }
            std::vector<double> a(xs.begin() + off, xs.begin() + off + len);
            auto b = a;
            sigmoid_block(a.data(), len);
            tanh_block(b.data(), len);
            for (std::size_t i = 0; i < len; ++i) {
                CHECK(a[i] == whole_s[off + i]);
                CHECK(b[i] == whole_t[off + i]);
            }
        }
    }
}

TEST_CASE("relu") {
    Array2 x(1, 3);
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.5;
    const Array2 y = relu(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.5);
}

TEST_CASE("dropout mask") {
    Rng rng(3);
    const Array2 ones = dropout_mask(rng, 4, 5, 0.0);
    for (double v : ones.values()) {
        CHECK(v == 1.0);
    }
    const Array2 m = dropout_mask(rng, 200, 200, 0.5);
    double sum = 0.0;
    for (double v : m.values()) {
        CHECK((v == 0.0 || v == 2.0));
        sum += v;
    }
    CHECK(sum / static_cast<double>(m.size()) == doctest::Approx(1.0).epsilon(0.02));
    CHECK_THROWS_AS(dropout_mask(rng, 1, 1, 1.0), ContractViolation);
}

TEST_CASE("adam matches a hand-unrolled reference") {
    AdamHyper hp;
    hp.learning_rate = 0.1;
    Array2 p(1, 2);
    p[0] = 1.0;
    p[1] = -2.0;
    AdamState st(1, 2, hp);
    const double g1[2] = {0.5, -3.0};
    const double g2[2] = {-0.25, 1.0};

    double ref[2] = {1.0, -2.0};
    double m[2] = {0, 0}, v[2] = {0, 0};
    for (int step = 1; step <= 2; ++step) {
        const double* g = step == 1 ? g1 : g2;
        Array2 grad(1, 2);
        grad[0] = g[0];
        grad[1] = g[1];
        adam_update(p, grad, st);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1.0 - std::pow(0.9, step));
            const double vh = v[i] / (1.0 - std::pow(0.999, step));
            ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        }
        CHECK(p[0] == doctest::Approx(ref[0]).epsilon(1e-14));
        CHECK(p[1] == doctest::Approx(ref[1]).epsilon(1e-14));
    }
    CHECK(st.t == 2);
}

TEST_CASE("adam first step moves every coordinate by about the learning rate") {
    AdamHyper hp;
    hp.learning_rate = 0.01;
    Rng rng(8);
    Array2 p(3, 3), g(3, 3);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = rng.uniform(-5.0, 5.0);
    }
    const Array2 before = p;
    AdamState st(3, 3, hp);
    adam_update(p, g, st);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(std::fabs(p[i] - before[i]) == doctest::Approx(0.01).epsilon(1e-6));
    }
}

TEST_CASE("finite differences of a quadratic") {
    Array2 x(2, 2);
    x[0] = 1.0;
    x[1] = -0.5;
    x[2] = 3.0;
    x[3] = 0.25;
    auto f = [](const Array2& a) {
        double s = 0.0;
        for (double v : a.values()) {
            s += v * v * v;
        }
        return s;
    };
    const Array2 g = finite_diff_gradient(f, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(g[i] == doctest::Approx(3.0 * x[i] * x[i]).epsilon(1e-8));
    }
}

TEST_CASE("rng streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng root(42);
    Rng s1 = root.split("init"), s2 = root.split("shuffle"), s3 = root.split("init");
    const auto x1 = s1.next_u64();
    CHECK(x1 != s2.next_u64());
    CHECK(x1 == s3.next_u64());

    Rng r(9);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK_UNARY(u >= 0.0);
        CHECK_UNARY(u < 1.0);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.below(7) < 7);
    }
}

TEST_CASE("shuffle is a permutation") {
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    Rng rng(1);
    rng.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 100; ++i) {
        CHECK(sorted[i] == i);
    }
}
