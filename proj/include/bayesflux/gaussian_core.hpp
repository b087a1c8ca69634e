#pragma once

// Gaussian flux prior with a relaxed steady state, conditioning on noisy
// flux observations, and the truncated posterior assembled from both.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "bayesflux/common.hpp"
#include "bayesflux/model_io.hpp"

namespace bayesflux {

struct GaussianFluxDistribution {
    Vector mean;
    Matrix cov;

    Index size() const { return mean.size(); }
};

struct TruncatedPosterior {
    GaussianFluxDistribution gaussian;
    Vector lb;
    Vector ub;
    std::vector<Index> bounded_idx;    // lb > -inf or ub < inf
    std::vector<Index> unbounded_idx;  // complement, ascending
};

inline constexpr double kMaxJitter = 1e-2;

struct JitteredCholesky {
    Matrix L;       // lower triangular
    double jitter;  // diagonal shift that was needed (0 if none)
};

/// Cholesky factor of `a`, retrying with `start` * 10^k added to the diagonal
/// until it succeeds or the shift would exceed 1e-2.
inline JitteredCholesky cholesky_with_jitter(const Matrix& a, double start) {
    if (a.rows() == 0) return {Matrix(0, 0), 0.0};
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
    for (double jitter = start; jitter <= kMaxJitter * (1 + 1e-12); jitter *= 10.0) {
        Matrix shifted = a;
        shifted.diagonal().array() += jitter;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    }
    throw NumericalError("Cholesky factorization failed even with diagonal jitter 1e-2; the model is numerically degenerate");
}

/// Flux prior N(mu, C) after marginalizing the steady-state relation
/// S v = xdot over the Gaussian prior on xdot:
///
///     A  = Sv S^T (S Sv S^T + kI)^-1
///     mu = m_v + A (m_xdot - S m_v)
///     C  = Sv - A S Sv + A Sx A^T
inline GaussianFluxDistribution build_prior(const StoichiometricModel& model, const Scenario& scenario) {
    validate_scenario(scenario, model);
    const Index n = model.n_reactions();
    const Index m = model.n_metabolites();
    const Vector var_v = scenario.prior_flux_sd.array().square();

    GaussianFluxDistribution g;
    g.mean = scenario.prior_mean;
    if (m == 0) {
        g.cov = var_v.asDiagonal();
        return g;
    }

    const Matrix& S = model.S;
    const Matrix S_sv = S * var_v.asDiagonal();  // S Sv (m x n)
    Matrix K = S_sv * S.transpose();
    symmetrize(K);

    // kI sits inside the inverse; escalate while the factorization fails.
    Eigen::LLT<Matrix> llt;
    double kappa = scenario.jitter;
    for (;;) {
        Matrix shifted = K;
        shifted.diagonal().array() += kappa;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) break;
        kappa *= 10.0;
        if (kappa > kMaxJitter * (1 + 1e-12))
            throw NumericalError("S Sv S^T + kI is not positive definite even at k = 1e-2");
    }

    const Matrix At = llt.solve(S_sv);                       // A^T (m x n)
    const Matrix W = llt.matrixL().solve(S_sv);              // L^-1 S Sv, so A S Sv = W^T W
    const Vector resid = scenario.steadystate_mean - S * scenario.prior_mean;
    g.mean = scenario.prior_mean + At.transpose() * resid;

    const Vector var_x = scenario.steadystate_sd.array().square();
    g.cov = Matrix(var_v.asDiagonal());
    g.cov.noalias() -= W.transpose() * W;
    g.cov.noalias() += At.transpose() * var_x.asDiagonal() * At;
    symmetrize(g.cov);

    // Make sure the result admits a Cholesky factor; jitter is applied only
    // when it is actually needed.
    const auto chol = cholesky_with_jitter(g.cov, scenario.jitter);
    if (chol.jitter > 0) g.cov.diagonal().array() += chol.jitter;
    return g;
}

/// Gaussian conditioning on noisy flux observations y_o = v_o + e,
/// e ~ N(0, diag(sd^2)). Only gaussian observations are accepted; convert
/// ranges first with `range_to_gaussian`.
inline GaussianFluxDistribution condition_on_observations(const GaussianFluxDistribution& prior,
                                                          std::span<const Observation> obs) {
    if (obs.empty()) return prior;
    const Index n = prior.size();
    const auto k = static_cast<Index>(obs.size());

    std::vector<Index> idx;
    Vector y(k), noise(k);
    for (Index j = 0; j < k; ++j) {
        const auto& o = obs[static_cast<std::size_t>(j)];
        if (o.kind != ObservationKind::gaussian)
            throw InputError("condition_on_observations: range observations must be converted first");
        if (o.reaction < 0 || o.reaction >= n) throw InputError("condition_on_observations: reaction index out of range");
        if (!(o.sd > 0.0)) throw InputError("condition_on_observations: sd must be positive");
        idx.push_back(o.reaction);
        y[j] = o.mean;
        noise[j] = o.sd * o.sd;
    }

    Matrix C_on(k, n);
    for (Index j = 0; j < k; ++j) C_on.row(j) = prior.cov.row(idx[static_cast<std::size_t>(j)]);
    Matrix Cy = gather(prior.cov, idx, idx);
    Cy.diagonal() += noise;
    symmetrize(Cy);

    Eigen::LLT<Matrix> llt(Cy);
    if (llt.info() != Eigen::Success) throw NumericalError("observation covariance C_oo + Omega is not invertible");

    const Matrix W = llt.matrixL().solve(C_on);  // Ly^-1 C_oN
    const Vector z = llt.matrixL().solve(y - gather(prior.mean, idx));

    GaussianFluxDistribution post;
    post.mean = prior.mean + W.transpose() * z;
    post.cov = prior.cov;
    post.cov.noalias() -= W.transpose() * W;
    symmetrize(post.cov);
    return post;
}

inline GaussianFluxDistribution condition_on_observations(const GaussianFluxDistribution& prior,
                                                          const std::vector<Observation>& obs) {
    return condition_on_observations(prior, std::span<const Observation>(obs.data(), obs.size()));
}

/// Attaches box bounds and splits fluxes into bounded / unbounded sets.
inline TruncatedPosterior truncate(const GaussianFluxDistribution& g, const Vector& lb, const Vector& ub) {
    if (lb.size() != g.size() || ub.size() != g.size()) throw InputError("truncate: bound vectors do not match");
    TruncatedPosterior p{g, lb, ub, {}, {}};
    for (Index i = 0; i < g.size(); ++i) {
        if (!(lb[i] <= ub[i])) throw InputError("truncate: lower bound exceeds upper bound");
        if (lb[i] > -kInf || ub[i] < kInf) p.bounded_idx.push_back(i);
        else p.unbounded_idx.push_back(i);
    }
    return p;
}

inline TruncatedPosterior truncate(const GaussianFluxDistribution& g, const StoichiometricModel& model) {
    return truncate(g, model.lower_bounds, model.upper_bounds);
}

/// Full posterior for a model and scenario: bound overrides applied, range
/// observations converted, prior built, conditioned and truncated.
inline TruncatedPosterior build_posterior(const StoichiometricModel& model, const Scenario& scenario) {
    const auto effective = apply_bound_overrides(model, scenario);
    std::vector<Observation> obs;
    obs.reserve(scenario.observations.size());
    for (const auto& o : scenario.observations) obs.push_back(range_to_gaussian(o, scenario.sd_floor));
    const auto prior = build_prior(effective, scenario);
    return truncate(condition_on_observations(prior, obs), effective);
}

/// Debug dump: a `rows cols` header line followed by the matrix rows.
inline void write_matrix(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
        out << '\n';
    }
}

inline Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw InputError("'" + path.string() + "': bad matrix header");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            if (!(in >> m(r, c))) throw InputError("'" + path.string() + "': truncated matrix body");
    return m;
}

}  // namespace bayesflux
