#pragma once

// Convergence diagnostics over multi-chain flux samples: split-chain
// potential scale reduction (R-hat) and effective sample size.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bayesflux/common.hpp"
#include "bayesflux/gibbs.hpp"

namespace bayesflux {

inline constexpr double kRhatThreshold = 1.1;

struct ConvergenceReport {
    std::vector<std::string> reaction_ids;
    Vector rhat;
    Vector n_eff;
    std::vector<bool> converged;  // rhat < 1.1
    Index total_draws = 0;

    double fraction_converged() const {
        if (converged.empty()) return 0.0;
        return static_cast<double>(std::count(converged.begin(), converged.end(), true)) / static_cast<double>(converged.size());
    }

    double median_n_eff() const {
        std::vector<double> v;
        for (double x : n_eff)
            if (!std::isnan(x)) v.push_back(x);
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    }

    std::string summary_line() const {
        std::ostringstream s;
        s << "fluxes=" << rhat.size() << " rhat<1.1=" << fraction_converged() << " median_n_eff=" << median_n_eff()
          << " draws=" << total_draws;
        return s.str();
    }
};

/// Split-chain R-hat of a (draws x chains) matrix. Each chain is cut into two
/// halves (the middle draw is dropped for odd lengths).
inline double split_rhat(const Matrix& draws) {
    const Index n_full = draws.rows();
    const Index chains = draws.cols();
    if (chains < 2) throw InputError("R-hat needs at least 2 chains");
    if (n_full < 4) throw InputError("R-hat needs at least 4 draws per chain");
    const Index n = n_full / 2;
    const Index m = 2 * chains;

    Vector means(m), vars(m);
    for (Index c = 0; c < chains; ++c) {
        for (int half = 0; half < 2; ++half) {
            const auto seg = draws.col(c).segment(half == 0 ? 0 : n_full - n, n);
            const Index k = 2 * c + half;
            means[k] = seg.mean();
            vars[k] = (seg.array() - means[k]).square().sum() / static_cast<double>(n - 1);
        }
    }
    const double W = vars.mean();
    const double grand = means.mean();
    const double B = static_cast<double>(n) / static_cast<double>(m - 1) * (means.array() - grand).square().sum();
    const double scale = std::max(1.0, std::abs(grand));
    if (W <= 1e-28 * scale * scale) return B <= 1e-28 * scale * scale ? 1.0 : kInf;
    const double nn = static_cast<double>(n);
    return std::sqrt((nn - 1.0) / nn + B / (nn * W));
}

/// Effective sample size of a (draws x chains) matrix from chain
/// autocorrelations, summed over lag pairs while the pair sums stay positive
/// (and forced monotone). Clipped to [1, total draws]; a constant input
/// reports the total draw count.
inline double effective_sample_size(const Matrix& draws) {
    const Index n = draws.rows();
    const Index m = draws.cols();
    if (m < 1) throw InputError("N_eff needs at least 1 chain");
    if (n < 4) throw InputError("N_eff needs at least 4 draws per chain");
    const double total = static_cast<double>(n * m);

    Vector means = draws.colwise().mean().transpose();
    Matrix centered = draws.rowwise() - means.transpose();
    const double nn = static_cast<double>(n);
    const double W = centered.array().square().sum() / (static_cast<double>(m) * (nn - 1.0));
    const double B = m > 1 ? nn * (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1) : 0.0;
    const double var_plus = (nn - 1.0) / nn * W + B / nn;
    const double scale = std::max(1.0, std::abs(means.mean()));
    if (var_plus <= 1e-28 * scale * scale) return total;

    // Mean over chains of the biased lag-t autocovariance.
    auto acov = [&](Index t) {
        double s = 0.0;
        for (Index c = 0; c < m; ++c) s += centered.col(c).head(n - t).dot(centered.col(c).tail(n - t));
        return s / (nn * static_cast<double>(m));
    };
    auto rho = [&](Index t) { return 1.0 - (W - acov(t)) / var_plus; };

    double sum_pairs = 0.0;
    double prev_pair = kInf;
    for (Index k = 0; 2 * k + 1 < n; ++k) {
        double pair = rho(2 * k) + rho(2 * k + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
    }
    const double tau = std::max(-1.0 + 2.0 * sum_pairs, 1.0 / std::log10(std::max(total, 10.0)));
    return std::clamp(total / tau, 1.0, total);
}

/// Per-flux R-hat; NaN when there are fewer than 2 chains or 4 draws per chain.
inline Vector compute_rhat(const FluxSampleSet& samples) {
    Vector out = Vector::Constant(samples.n_fluxes(), std::numeric_limits<double>::quiet_NaN());
    for (Index f = 0; f < samples.n_fluxes(); ++f) {
        const Matrix m = samples.chain_matrix(f);
        if (m.cols() >= 2 && m.rows() >= 4) out[f] = split_rhat(m);
    }
    return out;
}

/// Per-flux N_eff; NaN when there are fewer than 4 draws per chain.
inline Vector compute_neff(const FluxSampleSet& samples) {
    Vector out = Vector::Constant(samples.n_fluxes(), std::numeric_limits<double>::quiet_NaN());
    for (Index f = 0; f < samples.n_fluxes(); ++f) {
        const Matrix m = samples.chain_matrix(f);
        if (m.cols() >= 1 && m.rows() >= 4) out[f] = effective_sample_size(m);
    }
    return out;
}

inline ConvergenceReport diagnose(const FluxSampleSet& samples) {
    ConvergenceReport r;
    r.reaction_ids = samples.reaction_ids;
    r.rhat = compute_rhat(samples);
    r.n_eff = compute_neff(samples);
    r.total_draws = samples.n_draws();
    for (Index f = 0; f < r.rhat.size(); ++f) r.converged.push_back(r.rhat[f] < kRhatThreshold);
    return r;
}

struct NeffCurveRow {
    std::string reaction;
    double n_eff;
    double rhat;
};

/// Fluxes sorted ascending by effective sample size.
inline std::vector<NeffCurveRow> neff_curve(const ConvergenceReport& report) {
    std::vector<NeffCurveRow> rows;
    for (Index f = 0; f < report.n_eff.size(); ++f)
        rows.push_back({report.reaction_ids[static_cast<std::size_t>(f)], report.n_eff[f], report.rhat[f]});
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.n_eff < b.n_eff; });
    return rows;
}

inline void write_report(const ConvergenceReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "# " << report.summary_line() << '\n';
    out << "reaction\trhat\tn_eff\tconverged\n";
    for (Index f = 0; f < report.rhat.size(); ++f)
        out << report.reaction_ids[static_cast<std::size_t>(f)] << '\t' << detail::format_real(report.rhat[f]) << '\t'
            << detail::format_real(report.n_eff[f]) << '\t' << (report.converged[static_cast<std::size_t>(f)] ? 1 : 0) << '\n';
}

inline void write_neff_curve(const std::vector<NeffCurveRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "rank\treaction\tn_eff\trhat\n";
    for (std::size_t k = 0; k < rows.size(); ++k)
        out << k + 1 << '\t' << rows[k].reaction << '\t' << detail::format_real(rows[k].n_eff) << '\t'
            << detail::format_real(rows[k].rhat) << '\n';
}

}  // namespace bayesflux
