#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ficabu {

// Deterministic transcendentals. Host libm exp/log differ in final ulps
// across platforms, which would leak into trained checkpoints and reports;
// these fixed-order IEEE-754 evaluations make every pipeline stage
// reproducible bit-for-bit wherever f64/f32 round to nearest even.

namespace detail {
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kInvLn2 = 1.44269504088896338700e+00;
}  // namespace detail

/// exp(x) for |x| <= 700, relative error < 1e-15.
inline double det_exp(double x) {
    if (x < -745.0) return 0.0;
    double k = std::nearbyint(x * detail::kInvLn2);
    double r = (x - k * detail::kLn2Hi) - k * detail::kLn2Lo;
    // Taylor to r^13; |r| <= 0.3466 keeps the truncation below 1e-17.
    double p = 1.0 / 6227020800.0;  // 1/13!
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    return std::ldexp(p, static_cast<int>(k));
}

/// ln(x) for x > 0, relative error < 1e-15.
inline double det_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e);  // m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    double t = (m - 1.0) / (m + 1.0);
    double t2 = t * t;
    // atanh series; |t| <= 0.1716 so 10 odd terms reach 1e-17.
    double s = 1.0 / 21.0;
    s = s * t2 + 1.0 / 19.0;
    s = s * t2 + 1.0 / 17.0;
    s = s * t2 + 1.0 / 15.0;
    s = s * t2 + 1.0 / 13.0;
    s = s * t2 + 1.0 / 11.0;
    s = s * t2 + 1.0 / 9.0;
    s = s * t2 + 1.0 / 7.0;
    s = s * t2 + 1.0 / 5.0;
    s = s * t2 + 1.0 / 3.0;
    s = s * t2 + 1.0;
    double ln_m = 2.0 * t * s;
    return e * detail::kLn2Hi + (e * detail::kLn2Lo + ln_m);
}

/// Uniform in [0, 1) from the fully specified mt19937_64 stream.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * (1.0 / 9007199254740992.0);
}

/// Standard normal deviate as a sum of 12 uniforms minus 6 (Irwin-Hall).
/// Pure arithmetic, so dataset synthesis never touches libm.
inline double gaussian(std::mt19937_64& g) {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform01(g);
    return s - 6.0;
}

}  // namespace ficabu
