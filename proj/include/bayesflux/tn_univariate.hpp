#pragma once

// Standard normal distribution helpers and the one-dimensional truncated
// standard normal TN(0, 1, a, b): sampling and closed-form moments.
//
// Tail probabilities are always evaluated through erfc / the scaled
// complementary error function so that intervals far out in the tails
// (a >= 10) keep full relative precision.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>

#include "bayesflux/common.hpp"

namespace bayesflux {

inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

inline double normal_pdf(double x) {
    if (!std::isfinite(x)) return 0.0;
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Phi(x)
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

/// 1 - Phi(x), without the subtraction.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

/// exp(y^2) * erfc(y) for y >= 0.
inline double erfcx(double y) {
    if (y < 0) return 2.0 * std::exp(y * y) - erfcx(-y);
    if (y < 26.0) return std::exp(y * y) * std::erfc(y);
    if (!std::isfinite(y)) return 0.0;
    // Asymptotic series; terms are below 1e-17 relative by the 8th at y >= 26.
    const double inv2y2 = 1.0 / (2.0 * y * y);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 9; ++k) {
        term *= -(2.0 * k - 1.0) * inv2y2;
        sum += term;
    }
    return sum / (y * std::sqrt(std::numbers::pi));
}

/// Mills ratio (1 - Phi(x)) / phi(x).
inline double mills_ratio(double x) {
    return std::sqrt(std::numbers::pi / 2.0) * erfcx(x / kSqrt2);
}

/// Inverse of Phi. Rational initial guess (Acklam) followed by one Halley
/// step against the erfc-based CDF, giving close to full double precision.
inline double normal_quantile(double p) {
    if (p <= 0.0) return -kInf;
    if (p >= 1.0) return kInf;

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement. The residual is taken on the side of the
    // distribution where p is small to avoid cancellation.
    const double e = (x <= 0.0) ? normal_cdf(x) - p : (1.0 - p) - normal_sf(x);
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

/// x such that 1 - Phi(x) = q, accurate for tiny q.
inline double normal_sf_inverse(double q) { return -normal_quantile(q); }

/// Closed interval [lower, upper] on the extended real line.
struct TruncInterval {
    double lower = -kInf;
    double upper = kInf;

    bool degenerate() const { return lower == upper; }
    bool valid() const { return lower <= upper && !(lower == kInf) && !(upper == -kInf); }
};

struct TnMoments {
    double mean;
    double var;
};

namespace detail {

// Moments of TN(0, 1, a, b) for 0 <= a < b, evaluated relative to phi(a).
inline TnMoments tail_moments(double a, double b) {
    const double ra = mills_ratio(a);
    double scaled_mass, one_minus_r, b_r;
    if (b == kInf) {
        scaled_mass = ra;
        one_minus_r = 1.0;
        b_r = 0.0;
    } else {
        const double delta = 0.5 * (b - a) * (b + a);
        const double r = std::exp(-delta);
        scaled_mass = ra - r * mills_ratio(b);
        one_minus_r = -std::expm1(-delta);
        b_r = b * r;
    }
    const double mean = one_minus_r / scaled_mass;
    const double var = 1.0 + (a - b_r) / scaled_mass - mean * mean;
    return {mean, var};
}

/// Uniform on the open interval (0, 1) from a 64-bit engine.
template <class Rng>
double uniform_open01(Rng& rng) {
    static_assert(Rng::max() - Rng::min() == std::numeric_limits<std::uint64_t>::max(),
                  "a 64-bit uniform random bit generator is required");
    return (static_cast<double>((rng() - Rng::min()) >> 11) + 0.5) * 0x1p-53;
}

// Rejection from a truncated Rayleigh proposal for 0 < a < b <= inf.
template <class Rng>
double sample_tail(double a, double b, Rng& rng) {
    const double c = 0.5 * a * a;
    const double f = (b == kInf) ? -1.0 : std::expm1(c - 0.5 * b * b);
    for (;;) {
        const double x = c - std::log1p(f * uniform_open01(rng));
        const double v = uniform_open01(rng);
        if (v * v * x <= c) return std::sqrt(2.0 * x);
    }
}

// Inverse-CDF draw for intervals that reach into the bulk. Each side of zero
// is inverted through the tail probability on that side.
template <class Rng>
double sample_inverse_cdf(double a, double b, Rng& rng) {
    const double u = uniform_open01(rng);
    if (a >= 0.0) {
        const double qa = normal_sf(a), qb = normal_sf(b);
        return normal_sf_inverse(qa - (qa - qb) * u);
    }
    if (b <= 0.0) {
        const double pa = normal_cdf(a), pb = normal_cdf(b);
        return normal_quantile(pa + (pb - pa) * u);
    }
    const double pa = normal_cdf(a);
    const double left = 0.5 - pa;
    const double right = 0.5 - normal_sf(b);
    const double t = u * (left + right);
    if (t < left) return normal_quantile(pa + t);
    return normal_sf_inverse(0.5 - (t - left));
}

}  // namespace detail

/// Lower edge of the tail regime. Intervals with a >= this (or b <= -this)
/// use tilted rejection; everything else is inverted directly.
inline constexpr double kTailThreshold = 0.47;

/// Draws from the standard normal restricted to `iv`. A degenerate interval
/// returns its single point.
template <class Rng>
double sample_tn01(const TruncInterval& iv, Rng& rng) {
    const double a = iv.lower, b = iv.upper;
    if (!(a <= b)) throw std::invalid_argument("sample_tn01: empty interval");
    if (a == b) return a;
    double x;
    if (a >= kTailThreshold)
        x = detail::sample_tail(a, b, rng);
    else if (b <= -kTailThreshold)
        x = -detail::sample_tail(-b, -a, rng);
    else
        x = detail::sample_inverse_cdf(a, b, rng);
    return std::min(std::max(x, a), b);
}

/// Mean and variance of TN(0, 1, a, b).
inline TnMoments tn_moments(const TruncInterval& iv) {
    const double a = iv.lower, b = iv.upper;
    if (!(a < b)) {
        if (a == b) return {a, 0.0};
        throw std::invalid_argument("tn_moments: empty interval");
    }
    if (a == -kInf && b == kInf) return {0.0, 1.0};
    if (a >= 0.0) return detail::tail_moments(a, b);
    if (b <= 0.0) {
        const TnMoments m = detail::tail_moments(-b, -a);
        return {-m.mean, m.var};
    }
    const double mass = 0.5 * (std::erf(b / kSqrt2) - std::erf(a / kSqrt2));
    const double pa = normal_pdf(a), pb = normal_pdf(b);
    const double apa = std::isfinite(a) ? a * pa : 0.0;
    const double bpb = std::isfinite(b) ? b * pb : 0.0;
    const double mean = (pa - pb) / mass;
    return {mean, 1.0 + (apa - bpb) / mass - mean * mean};
}

/// P(X <= x) for X ~ TN(0, 1, a, b).
inline double tn_cdf(const TruncInterval& iv, double x) {
    const double a = iv.lower, b = iv.upper;
    if (x <= a) return 0.0;
    if (x >= b) return 1.0;
    if (a >= 0.0) {
        const double qa = normal_sf(a);
        return (qa - normal_sf(x)) / (qa - normal_sf(b));
    }
    const double pa = normal_cdf(a);
    return (normal_cdf(x) - pa) / (normal_cdf(b) - pa);
}

/// Standard normal draw by inversion.
template <class Rng>
double sample_std_normal(Rng& rng) {
    return normal_quantile(detail::uniform_open01(rng));
}

}  // namespace bayesflux
