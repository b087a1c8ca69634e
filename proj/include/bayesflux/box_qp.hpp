#pragma once

// Mode of a box-truncated Gaussian: argmin (x - mu)^T C^-1 (x - mu) subject
// to lo <= x <= hi, by a primal active-set method.
//
// With a working set W of coordinates held at a bound, the minimizer over the
// free coordinates F is the Gaussian conditional mean
//     x_F = mu_F + C_FW C_WW^-1 (x_W - mu_W)
// and the reduced gradient on W is C_WW^-1 (x_W - mu_W). Neither needs C^-1,
// which is badly conditioned for steady-state covariances.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "bayesflux/common.hpp"

namespace bayesflux {

struct BoxQpResult {
    Vector x;
    int iterations = 0;
    double kkt_residual = 0.0;  // scaled, see kkt_residual()
};

/// Scaled KKT violation of `x` for the box QP: free coordinates need a zero
/// gradient, coordinates at a lower (upper) bound a nonnegative (nonpositive)
/// one. Normalized by 1 + max |gradient|.
inline double box_qp_kkt_residual(const Vector& mu, const Matrix& cov, const Vector& lo, const Vector& hi,
                                  const Vector& x) {
    Eigen::LDLT<Matrix> ldlt(cov);
    const Vector g = ldlt.solve(x - mu);
    double worst = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const double scale = 1e-12 * (1.0 + std::abs(x[i]));
        const bool at_lo = x[i] <= lo[i] + scale;
        const bool at_hi = x[i] >= hi[i] - scale;
        double v;
        if (at_lo && at_hi) v = 0.0;
        else if (at_lo) v = std::max(0.0, -g[i]);
        else if (at_hi) v = std::max(0.0, g[i]);
        else v = std::abs(g[i]);
        worst = std::max(worst, v);
    }
    return worst / (1.0 + g.cwiseAbs().maxCoeff());
}

inline BoxQpResult solve_box_qp(const Vector& mu, const Matrix& cov, const Vector& lo, const Vector& hi,
                                int max_iterations = -1) {
    const Index n = mu.size();
    BoxQpResult res;
    if (n == 0) return res;
    if (max_iterations < 0) max_iterations = static_cast<int>(10 * n + 100);

    enum class Side : char { free, lower, upper, fixed };
    std::vector<Side> side(static_cast<std::size_t>(n), Side::free);
    Vector x(n);
    for (Index i = 0; i < n; ++i) {
        if (lo[i] > hi[i]) throw InputError("box QP: lower bound exceeds upper bound");
        if (lo[i] == hi[i]) {
            x[i] = lo[i];
            side[static_cast<std::size_t>(i)] = Side::fixed;
        } else if (mu[i] < lo[i]) {
            x[i] = lo[i];
            side[static_cast<std::size_t>(i)] = Side::lower;
        } else if (mu[i] > hi[i]) {
            x[i] = hi[i];
            side[static_cast<std::size_t>(i)] = Side::upper;
        } else {
            x[i] = mu[i];
        }
    }

    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        std::vector<Index> F, W;
        for (Index i = 0; i < n; ++i) (side[static_cast<std::size_t>(i)] == Side::free ? F : W).push_back(i);

        Eigen::LLT<Matrix> llt_w;
        Vector wsol;  // C_WW^-1 (x_W - mu_W)
        if (!W.empty()) {
            llt_w.compute(gather(cov, W, W));
            if (llt_w.info() != Eigen::Success) throw NumericalError("box QP: active covariance block is not positive definite");
            wsol = llt_w.solve(gather(x, W) - gather(mu, W));
        }

        // Minimizer over the free coordinates.
        Vector target = gather(mu, F);
        if (!W.empty() && !F.empty()) target.noalias() += gather(cov, F, W) * wsol;

        // Step toward it, stopping at the first bound hit.
        double alpha = 1.0;
        Index blocking = -1;
        Side blocking_side = Side::free;
        for (std::size_t k = 0; k < F.size(); ++k) {
            const Index i = F[k];
            const double d = target[static_cast<Index>(k)] - x[i];
            if (d < 0 && target[static_cast<Index>(k)] < lo[i]) {
                const double a = (lo[i] - x[i]) / d;
                if (a < alpha) { alpha = a; blocking = i; blocking_side = Side::lower; }
            } else if (d > 0 && target[static_cast<Index>(k)] > hi[i]) {
                const double a = (hi[i] - x[i]) / d;
                if (a < alpha) { alpha = a; blocking = i; blocking_side = Side::upper; }
            }
        }
        alpha = std::max(alpha, 0.0);
        for (std::size_t k = 0; k < F.size(); ++k) {
            const Index i = F[k];
            x[i] += alpha * (target[static_cast<Index>(k)] - x[i]);
            x[i] = std::clamp(x[i], lo[i], hi[i]);
        }
        if (blocking >= 0) {
            x[blocking] = blocking_side == Side::lower ? lo[blocking] : hi[blocking];
            side[static_cast<std::size_t>(blocking)] = blocking_side;
            continue;
        }

        // At the subspace minimizer: release the most violated bound, if any.
        if (W.empty()) {
            res.x = x;
            res.kkt_residual = box_qp_kkt_residual(mu, cov, lo, hi, x);
            return res;
        }
        const Vector& lambda = wsol;
        const double tol = 1e-10 * (1.0 + lambda.cwiseAbs().maxCoeff());
        Index release = -1;
        double worst = tol;
        for (std::size_t k = 0; k < W.size(); ++k) {
            const Index i = W[k];
            const double l = lambda[static_cast<Index>(k)];
            const Side s = side[static_cast<std::size_t>(i)];
            const double violation = s == Side::lower ? -l : (s == Side::upper ? l : 0.0);
            if (violation > worst) { worst = violation; release = i; }
        }
        if (release < 0) {
            res.x = x;
            res.kkt_residual = box_qp_kkt_residual(mu, cov, lo, hi, x);
            return res;
        }
        side[static_cast<std::size_t>(release)] = Side::free;
    }
    throw NumericalError("box QP did not converge within " + std::to_string(max_iterations) + " iterations");
}

}  // namespace bayesflux
