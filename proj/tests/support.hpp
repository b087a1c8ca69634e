#pragma once

// Independent oracles shared by the test suites. Nothing here calls the
// library's Gaussian algebra or samplers; only model/scenario loading is
// reused.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bayesflux/model_io.hpp"

#ifndef BAYESFLUX_DATA_DIR
#error "BAYESFLUX_DATA_DIR must be defined"
#endif

namespace oracle {

using bayesflux::Index;
using bayesflux::Matrix;
using bayesflux::Vector;

inline std::filesystem::path data(const std::string& rel) { return std::filesystem::path(BAYESFLUX_DATA_DIR) / rel; }

struct Gaussian {
    Vector mean;
    Matrix cov;
};

/// Flux prior by explicit inverses, with no regularization.
inline Gaussian prior(const Matrix& S, const Vector& m_v, const Vector& sd_v, const Vector& m_x, const Vector& sd_x) {
    const Matrix Sv = sd_v.array().square().matrix().asDiagonal();
    if (S.rows() == 0) return {m_v, Sv};
    const Matrix Sx = sd_x.array().square().matrix().asDiagonal();
    const Matrix A = Sv * S.transpose() * (S * Sv * S.transpose()).inverse();
    Gaussian g;
    g.mean = m_v + A * (m_x - S * m_v);
    g.cov = Sv - A * S * Sv + A * Sx * A.transpose();
    g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
    return g;
}

inline Gaussian prior(const bayesflux::StoichiometricModel& m, const bayesflux::Scenario& s) {
    return prior(m.S, s.prior_mean, s.prior_flux_sd, s.steadystate_mean, s.steadystate_sd);
}

/// Joint conditioning of a Gaussian on noisy observations of coordinates.
inline Gaussian condition(const Gaussian& g, const std::vector<Index>& idx, const Vector& y, const Vector& sd) {
    const Index k = static_cast<Index>(idx.size());
    if (k == 0) return g;
    Matrix H = Matrix::Zero(k, g.mean.size());
    for (Index j = 0; j < k; ++j) H(j, idx[static_cast<std::size_t>(j)]) = 1.0;
    const Matrix Cy = H * g.cov * H.transpose() + Matrix(sd.array().square().matrix().asDiagonal());
    const Matrix K = g.cov * H.transpose() * Cy.inverse();
    Gaussian out{g.mean + K * (y - H * g.mean), g.cov - K * H * g.cov};
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

/// Gaussian of the remaining coordinates given exact values of `fixed`.
inline Gaussian condition_exact(const Gaussian& g, const std::vector<Index>& fixed, const Vector& values,
                                std::vector<Index>* rest_out = nullptr) {
    std::vector<Index> rest;
    for (Index i = 0; i < g.mean.size(); ++i)
        if (std::find(fixed.begin(), fixed.end(), i) == fixed.end()) rest.push_back(i);
    auto sub = [&](const std::vector<Index>& r, const std::vector<Index>& c) {
        Matrix m(static_cast<Index>(r.size()), static_cast<Index>(c.size()));
        for (std::size_t a = 0; a < r.size(); ++a)
            for (std::size_t b = 0; b < c.size(); ++b) m(static_cast<Index>(a), static_cast<Index>(b)) = g.cov(r[a], c[b]);
        return m;
    };
    Vector mr(static_cast<Index>(rest.size())), mf(static_cast<Index>(fixed.size()));
    for (std::size_t a = 0; a < rest.size(); ++a) mr[static_cast<Index>(a)] = g.mean[rest[a]];
    for (std::size_t a = 0; a < fixed.size(); ++a) mf[static_cast<Index>(a)] = g.mean[fixed[a]];
    const Matrix gain = sub(rest, fixed) * sub(fixed, fixed).inverse();
    if (rest_out) *rest_out = rest;
    return {mr + gain * (values - mf), sub(rest, rest) - gain * sub(fixed, rest)};
}

/// Accepted draws (rows) of N(g) restricted to the box [lo, hi].
inline Matrix rejection_sample(const Gaussian& g, const Vector& lo, const Vector& hi, Index n_accept, std::uint64_t seed,
                               Index max_tries = 2'000'000'000) {
    const Index d = g.mean.size();
    const Matrix L = g.cov.llt().matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix out(n_accept, d);
    Vector z(d);
    Index got = 0;
    for (Index tries = 0; got < n_accept && tries < max_tries; ++tries) {
        for (Index k = 0; k < d; ++k) z[k] = normal(rng);
        const Vector x = g.mean + L * z;
        if (((x.array() >= lo.array()) && (x.array() <= hi.array())).all()) out.row(got++) = x.transpose();
    }
    if (got < n_accept) throw std::runtime_error("rejection oracle: acceptance too low");
    return out;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

inline std::vector<double> column(const Matrix& m, Index c) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (Index r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
    return v;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

/// Composite Simpson quadrature of f over [a, b] (finite) with n panels.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

/// Mean and variance of the standard normal truncated to [a, b] by
/// quadrature, with infinite ends cut at +-40 and the integrand rescaled
/// around the mode to avoid underflow in far tails.
inline std::pair<double, double> tn_moments_quadrature(double a, double b) {
    const double lo = std::max(a, -40.0), hi = std::min(b, 40.0);
    const double mode = std::clamp(0.0, lo, hi);
    auto w = [&](double x) { return std::exp(-0.5 * (x * x - mode * mode)); };
    const int n = 200000;
    const double z = simpson(w, lo, hi, n);
    const double m1 = simpson([&](double x) { return x * w(x); }, lo, hi, n) / z;
    const double m2 = simpson([&](double x) { return (x - m1) * (x - m1) * w(x); }, lo, hi, n) / z;
    return {m1, m2};
}

/// All vertices of {x : A x = b, lo <= x <= hi} for finite boxes, by
/// choosing which coordinates sit at a bound and solving for the rest.
inline std::vector<Vector> enumerate_vertices(const Matrix& A, const Vector& b, const Vector& lo, const Vector& hi,
                                              double tol = 1e-9) {
    const Index n = A.cols();
    const Index m = A.rows();
    std::vector<Vector> out;
    std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 basic, 1 lower, 2 upper
    const Index n_bound = n - m;
    // Iterate over base-3 assignments and keep those with exactly n_bound
    // coordinates at a bound.
    Index total = 1;
    for (Index k = 0; k < n; ++k) total *= 3;
    for (Index code = 0; code < total; ++code) {
        Index c = code, at_bound = 0;
        for (Index k = 0; k < n; ++k) {
            state[static_cast<std::size_t>(k)] = static_cast<int>(c % 3);
            c /= 3;
            at_bound += state[static_cast<std::size_t>(k)] != 0;
        }
        if (at_bound != n_bound) continue;
        std::vector<Index> basic;
        Vector x = Vector::Zero(n);
        for (Index k = 0; k < n; ++k) {
            const int s = state[static_cast<std::size_t>(k)];
            if (s == 0) basic.push_back(k);
            else x[k] = s == 1 ? lo[k] : hi[k];
        }
        Matrix B(m, m);
        for (Index r = 0; r < m; ++r)
            for (std::size_t k = 0; k < basic.size(); ++k) B(r, static_cast<Index>(k)) = A(r, basic[k]);
        Eigen::FullPivLU<Matrix> lu(B);
        if (lu.rank() < m) continue;
        const Vector xb = lu.solve(b - A * x);
        for (std::size_t k = 0; k < basic.size(); ++k) x[basic[k]] = xb[static_cast<Index>(k)];
        if (((x.array() >= lo.array() - tol) && (x.array() <= hi.array() + tol)).all() && (A * x - b).norm() < 1e-7)
            out.push_back(x);
    }
    return out;
}

/// Range of coordinate i over the polytope, from its vertices.
inline std::pair<double, double> vertex_range(const std::vector<Vector>& vertices, Index i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : vertices) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
    }
    return {lo, hi};
}

}  // namespace oracle
