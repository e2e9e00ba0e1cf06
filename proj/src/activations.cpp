#include <algorithm>
#include <cmath>

#include "imugest/numerics.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace imugest {

namespace {

constexpr double kExpLo = -708.0;
constexpr double kExpHi = 709.0;
constexpr double kLog2e = 1.4426950408889634;
constexpr double kLn2Hi = 0.6931471803691238;      // upper bits of ln 2
constexpr double kLn2Lo = 1.9082149292705877e-10;  // ln 2 - kLn2Hi

// 1/k! for k = 12 down to 0, Horner order.
constexpr double kTaylor[13] = {
    1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0, 1.0 / 40320.0,
    1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,     1.0 / 6.0,
    0.5,               1.0,              1.0,
};

#if defined(__AVX512F__)
inline __m512d exp8(__m512d x) {
    x = _mm512_min_pd(_mm512_max_pd(x, _mm512_set1_pd(kExpLo)), _mm512_set1_pd(kExpHi));
    const __m512d n = _mm512_roundscale_pd(_mm512_mul_pd(x, _mm512_set1_pd(kLog2e)),
                                           _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m512d r = _mm512_fnmadd_pd(n, _mm512_set1_pd(kLn2Hi), x);
    r = _mm512_fnmadd_pd(n, _mm512_set1_pd(kLn2Lo), r);
    __m512d p = _mm512_set1_pd(kTaylor[0]);
    for (int k = 1; k < 13; ++k) {
        p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(kTaylor[k]));
    }
    return _mm512_scalef_pd(p, n);
}
#endif

}  // namespace

double exp_poly(double x) noexcept {
    x = std::min(std::max(x, kExpLo), kExpHi);
    const double n = std::nearbyint(x * kLog2e);
    double r = std::fma(-n, kLn2Hi, x);
    r = std::fma(-n, kLn2Lo, r);
    double p = kTaylor[0];
    for (int k = 1; k < 13; ++k) {
        p = std::fma(p, r, kTaylor[k]);
    }
    return std::ldexp(p, static_cast<int>(n));
}

void sigmoid_block(double* x, std::size_t n) noexcept {
    std::size_t i = 0;
#if defined(__AVX512F__)
    const __m512d one = _mm512_set1_pd(1.0);
    for (; i + 8 <= n; i += 8) {
        const __m512d v = _mm512_loadu_pd(x + i);
        const __m512d e = exp8(_mm512_sub_pd(_mm512_setzero_pd(), v));
        _mm512_storeu_pd(x + i, _mm512_div_pd(one, _mm512_add_pd(one, e)));
    }
#endif
    for (; i < n; ++i) {
        x[i] = 1.0 / (1.0 + exp_poly(0.0 - x[i]));
    }
}

// tanh(x) = sign(x) (1 - t) / (1 + t) with t = exp(-2|x|).
void tanh_block(double* x, std::size_t n) noexcept {
    std::size_t i = 0;
#if defined(__AVX512F__)
    const __m512d one = _mm512_set1_pd(1.0);
    const __m512d sign = _mm512_set1_pd(-0.0);
    for (; i + 8 <= n; i += 8) {
        const __m512d v = _mm512_loadu_pd(x + i);
        const __m512d a = _mm512_andnot_pd(sign, v);
        const __m512d t = exp8(_mm512_mul_pd(_mm512_set1_pd(-2.0), a));
        const __m512d y = _mm512_div_pd(_mm512_sub_pd(one, t), _mm512_add_pd(one, t));
        _mm512_storeu_pd(x + i, _mm512_or_pd(y, _mm512_and_pd(sign, v)));
    }
#endif
    for (; i < n; ++i) {
        const double t = exp_poly(-2.0 * std::fabs(x[i]));
        x[i] = std::copysign((1.0 - t) / (1.0 + t), x[i]);
    }
}

}  // namespace imugest
