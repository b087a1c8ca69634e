#pragma once

// Gibbs sampler for the truncated multivariate normal flux posterior.
//
// The bounded block is whitened, v_b = L w + mu_b with C_bb = L L^T, so that
// w ~ N(0, I) restricted to the polytope lb <= L w + mu_b <= ub. Each Gibbs
// step redraws one coordinate w_i from a univariate TN(0, 1) on the interval
// implied by every row j of that system with L_ji != 0. All chains advance
// through the same coordinate together. Unbounded fluxes are drawn afterwards
// from their exact Gaussian conditional given the bounded sample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>

#include "bayesflux/box_qp.hpp"
#include "bayesflux/common.hpp"
#include "bayesflux/gaussian_core.hpp"
#include "bayesflux/model_io.hpp"
#include "bayesflux/tn_univariate.hpp"

namespace bayesflux {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream, purpose).
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), purpose};
    return Rng(seq);
}

enum StreamPurpose : std::uint32_t { kChainStream = 1, kScanStream = 2, kFillStream = 3 };

inline constexpr double kRowSlack = 1e-9;

struct WhitenedProblem {
    /// Flux index of each whitened coordinate. Fixed fluxes (lb == ub) come
    /// first so their point constraint only involves their own coordinate.
    std::vector<Index> order;
    Index n_fixed = 0;
    Matrix L;
    Vector mu_b;
    Vector lower;  // lb_b - mu_b (minus slack), row-wise bounds on L w
    Vector upper;  // ub_b - mu_b (plus slack)
    Vector lb_b;
    Vector ub_b;
    Vector initial_state;  // whitened MAP
    double jitter = 0.0;
    /// Nonzero entries (row j, L_ji) of every column i.
    std::vector<std::vector<std::pair<Index, double>>> column_rows;

    Index size() const { return mu_b.size(); }

    /// Back-transform of one whitened state, clamped onto the box.
    Vector to_flux(const Vector& w) const {
        Vector v = L * w + mu_b;
        return v.cwiseMax(lb_b).cwiseMin(ub_b);
    }
};

namespace detail {

inline void index_columns(WhitenedProblem& w) {
    const Index n = w.L.rows();
    w.column_rows.assign(static_cast<std::size_t>(n), {});
    for (Index j = 0; j < n; ++j) {
        const double row_scale = w.L.row(j).cwiseAbs().maxCoeff();
        for (Index i = 0; i <= j; ++i) {
            const double l = w.L(j, i);
            if (std::abs(l) > 1e-14 * row_scale) w.column_rows[static_cast<std::size_t>(i)].emplace_back(j, l);
        }
    }
}

// Interval for coordinate i of one chain, given that chain's products
// p = L w and its current w_i.
inline TruncInterval coordinate_interval(const WhitenedProblem& w, Index i, const double* products, double wi) {
    double lo = -kInf, hi = kInf;
    for (const auto& [j, l] : w.column_rows[static_cast<std::size_t>(i)]) {
        const double rest = products[j] - l * wi;
        const double from_lower = (w.lower[j] - rest) / l;
        const double from_upper = (w.upper[j] - rest) / l;
        if (l > 0) {
            lo = std::max(lo, from_lower);
            hi = std::min(hi, from_upper);
        } else {
            lo = std::max(lo, from_upper);
            hi = std::min(hi, from_lower);
        }
    }
    return {lo, hi};
}

}  // namespace detail

/// MAP of the truncated posterior: box QP over the bounded block, unbounded
/// fluxes at their conditional mean given it.
inline Vector map_estimate(const TruncatedPosterior& post) {
    const auto& g = post.gaussian;
    Vector v = g.mean;
    const auto& b = post.bounded_idx;
    if (b.empty()) return v;
    const Vector mu_b = gather(g.mean, b);
    const Matrix C_bb = gather(g.cov, b, b);
    const auto qp = solve_box_qp(mu_b, C_bb, gather(post.lb, b), gather(post.ub, b));
    for (std::size_t k = 0; k < b.size(); ++k) v[b[k]] = qp.x[static_cast<Index>(k)];
    const auto& u = post.unbounded_idx;
    if (!u.empty()) {
        Eigen::LDLT<Matrix> ldlt(C_bb);
        const Vector shift = gather(g.cov, u, b) * ldlt.solve(qp.x - mu_b);
        for (std::size_t k = 0; k < u.size(); ++k) v[u[k]] += shift[static_cast<Index>(k)];
    }
    return v;
}

/// Cholesky-whitens the bounded block and places the start at its MAP.
inline WhitenedProblem whiten(const TruncatedPosterior& post, double jitter = 1e-8) {
    if (post.bounded_idx.empty()) throw InputError("whiten: no bounded fluxes");
    WhitenedProblem w;
    for (Index i : post.bounded_idx)
        if (post.lb[i] == post.ub[i]) w.order.push_back(i);
    w.n_fixed = static_cast<Index>(w.order.size());
    for (Index i : post.bounded_idx)
        if (post.lb[i] != post.ub[i]) w.order.push_back(i);

    Matrix C_bb = gather(post.gaussian.cov, w.order, w.order);
    auto chol = cholesky_with_jitter(C_bb, jitter);
    w.L = std::move(chol.L);
    w.jitter = chol.jitter;
    if (w.jitter > 0) C_bb.diagonal().array() += w.jitter;

    w.mu_b = gather(post.gaussian.mean, w.order);
    w.lb_b = gather(post.lb, w.order);
    w.ub_b = gather(post.ub, w.order);
    // Non-fixed rows get a slack of 1e-9 (1 + |bound|) so that a start on a
    // vertex of the box does not produce inverted intervals from rounding.
    w.lower = w.lb_b - w.mu_b;
    w.upper = w.ub_b - w.mu_b;
    for (Index k = w.n_fixed; k < w.size(); ++k) {
        if (is_finite_bound(w.lb_b[k])) w.lower[k] -= kRowSlack * (1.0 + std::abs(w.lb_b[k]));
        if (is_finite_bound(w.ub_b[k])) w.upper[k] += kRowSlack * (1.0 + std::abs(w.ub_b[k]));
    }
    detail::index_columns(w);

    const auto qp = solve_box_qp(w.mu_b, C_bb, w.lb_b, w.ub_b);
    w.initial_state = w.L.triangularView<Eigen::Lower>().solve(qp.x - w.mu_b);
    return w;
}

/// Per-chain interval for whitened coordinate i given the other coordinates
/// of every chain (`states` is size x chains).
inline std::vector<TruncInterval> gibbs_bounds(const WhitenedProblem& w, Index i, const Matrix& states) {
    const Matrix products = w.L.triangularView<Eigen::Lower>() * states;
    std::vector<TruncInterval> out;
    out.reserve(static_cast<std::size_t>(states.cols()));
    for (Index c = 0; c < states.cols(); ++c)
        out.push_back(detail::coordinate_interval(w, i, products.col(c).data(), states(i, c)));
    return out;
}

/// Lockstep ensemble of chains over one whitened problem. Chain numbers are
/// global so that any partition of chains into ensembles draws identically.
class ChainEnsemble {
public:
    ChainEnsemble(const WhitenedProblem& w, int first_chain, int n_chains, std::uint64_t seed, bool random_scan)
        : w_(&w),
          first_chain_(first_chain),
          random_scan_(random_scan),
          states_(w.size(), n_chains),
          scan_rng_(make_stream(seed, 0, kScanStream)),
          scan_order_(static_cast<std::size_t>(w.size())) {
        for (int c = 0; c < n_chains; ++c) {
            states_.col(c) = w.initial_state;
            rngs_.push_back(make_stream(seed, static_cast<std::uint64_t>(first_chain + c), kChainStream));
        }
        std::iota(scan_order_.begin(), scan_order_.end(), Index{0});
        refresh();
    }

    int chains() const { return static_cast<int>(states_.cols()); }
    int first_chain() const { return first_chain_; }
    const Matrix& states() const { return states_; }
    /// L w for every chain.
    const Matrix& products() const { return products_; }

    /// Recomputes L w from scratch to shed accumulated rounding.
    void refresh() { products_ = w_->L.triangularView<Eigen::Lower>() * states_; }

    /// One pass over all coordinates.
    void sweep() {
        if (random_scan_) std::shuffle(scan_order_.begin(), scan_order_.end(), scan_rng_);
        for (Index i : scan_order_) update(i);
    }

    /// Original-domain bounded fluxes of a local chain, in whitened order.
    Vector flux_state(int chain) const {
        Vector v = products_.col(chain) + w_->mu_b;
        return v.cwiseMax(w_->lb_b).cwiseMin(w_->ub_b);
    }

private:
    void update(Index i) {
        const auto& rows = w_->column_rows[static_cast<std::size_t>(i)];
        for (Index c = 0; c < states_.cols(); ++c) {
            double* p = products_.col(c).data();
            const double wi = states_(i, c);
            const TruncInterval iv = detail::coordinate_interval(*w_, i, p, wi);
            double next;
            if (iv.upper - iv.lower < 1e-12) {
                if (iv.lower - iv.upper > 1e-6 * (1.0 + std::abs(iv.lower) + std::abs(iv.upper)))
                    throw NumericalError("Gibbs state left the feasible region at coordinate " + std::to_string(i) +
                                         " of chain " + std::to_string(first_chain_ + c) + ": interval [" +
                                         std::to_string(iv.lower) + ", " + std::to_string(iv.upper) + "]");
                continue;
            }
            next = sample_tn01(iv, rngs_[static_cast<std::size_t>(c)]);
            const double delta = next - wi;
            states_(i, c) = next;
            for (const auto& [j, l] : rows) p[j] += l * delta;
        }
    }

    const WhitenedProblem* w_;
    int first_chain_;
    bool random_scan_;
    Matrix states_;
    Matrix products_;
    std::vector<Rng> rngs_;
    Rng scan_rng_;
    std::vector<Index> scan_order_;
};

/// Posterior draws in the original flux domain, rows grouped by chain.
struct FluxSampleSet {
    std::vector<std::string> reaction_ids;
    Matrix samples;  // draws x reactions
    std::vector<int> chain;
    std::vector<int> iteration;

    Index n_draws() const { return samples.rows(); }
    Index n_fluxes() const { return samples.cols(); }

    /// Distinct chain ids in order of first appearance.
    std::vector<int> chain_ids() const {
        std::vector<int> ids;
        for (int c : chain)
            if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
        return ids;
    }

    /// Draws of one flux arranged as (draws per chain) x (chains). Throws if
    /// chains have unequal lengths.
    Matrix chain_matrix(Index flux) const {
        const auto ids = chain_ids();
        std::vector<std::vector<double>> cols(ids.size());
        for (Index r = 0; r < n_draws(); ++r) {
            const auto k = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), chain[static_cast<std::size_t>(r)]) - ids.begin());
            cols[k].push_back(samples(r, flux));
        }
        const std::size_t n = cols.empty() ? 0 : cols.front().size();
        Matrix m(static_cast<Index>(n), static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cols[k].size() != n) throw InputError("chains have unequal numbers of draws");
            for (std::size_t s = 0; s < n; ++s) m(static_cast<Index>(s), static_cast<Index>(k)) = cols[k][s];
        }
        return m;
    }

    Index require_reaction(const std::string& id) const {
        auto it = std::find(reaction_ids.begin(), reaction_ids.end(), id);
        if (it == reaction_ids.end()) {
            std::string valid;
            for (const auto& r : reaction_ids) valid += (valid.empty() ? "" : ", ") + r;
            throw InputError("unknown reaction '" + id + "'; valid ids: " + valid);
        }
        return static_cast<Index>(it - reaction_ids.begin());
    }
};

/// Draws the unbounded fluxes of every row of `rows` from
/// N(mu_u + C_ub C_bb^-1 (v_b - mu_b), C_uu - C_ub C_bb^-1 C_bu), in row order.
/// Bounded columns must already hold their sampled values.
inline void fill_unbounded(Matrix& rows, const TruncatedPosterior& post, Rng& rng, double jitter = 1e-8) {
    const auto& b = post.bounded_idx;
    const auto& u = post.unbounded_idx;
    if (u.empty()) return;
    const auto& g = post.gaussian;
    const Vector mu_u = gather(g.mean, u);
    Matrix gain(static_cast<Index>(u.size()), static_cast<Index>(b.size()));
    Matrix cond = gather(g.cov, u, u);
    if (!b.empty()) {
        Matrix C_bb = gather(g.cov, b, b);
        const auto chol = cholesky_with_jitter(C_bb, jitter);
        if (chol.jitter > 0) C_bb.diagonal().array() += chol.jitter;
        Eigen::LLT<Matrix> llt(C_bb);
        gain = llt.solve(gather(g.cov, b, u)).transpose();
        cond.noalias() -= gain * gather(g.cov, b, u);
        symmetrize(cond);
    }
    const auto chol_u = cholesky_with_jitter(cond, jitter);
    const Vector mu_b = b.empty() ? Vector() : gather(g.mean, b);
    Vector z(static_cast<Index>(u.size()));
    for (Index r = 0; r < rows.rows(); ++r) {
        Vector vu = mu_u;
        if (!b.empty()) {
            Vector vb(static_cast<Index>(b.size()));
            for (std::size_t k = 0; k < b.size(); ++k) vb[static_cast<Index>(k)] = rows(r, b[k]);
            vu.noalias() += gain * (vb - mu_b);
        }
        for (Index k = 0; k < z.size(); ++k) z[k] = sample_std_normal(rng);
        vu.noalias() += chol_u.L * z;
        for (std::size_t k = 0; k < u.size(); ++k) rows(r, u[k]) = vu[static_cast<Index>(k)];
    }
}

struct GibbsOptions {
    int chains = 10;
    int samples_per_chain = 500;
    int thinning = 100;
    int burn_in = 0;
    bool random_scan = false;
    std::uint64_t seed = 1;
    double jitter = 1e-8;
    int threads = 1;

    static GibbsOptions from(const Scenario& s, int threads = 1) {
        return {s.chains, s.samples_per_chain, s.thinning, s.burn_in, s.random_scan, s.rng_seed, s.jitter, threads};
    }
};

/// Runs the multi-chain sampler and returns chains x samples_per_chain draws.
/// Output is independent of `threads`.
inline FluxSampleSet run_gibbs(const TruncatedPosterior& post, const GibbsOptions& opt,
                               const std::vector<std::string>& reaction_ids = {}) {
    if (opt.chains < 1 || opt.samples_per_chain < 1 || opt.thinning < 1 || opt.burn_in < 0)
        throw InputError("run_gibbs: chains, samples and thinning must be positive");
    const Index n = post.gaussian.size();
    const Index draws = static_cast<Index>(opt.chains) * opt.samples_per_chain;

    FluxSampleSet out;
    out.reaction_ids = reaction_ids;
    if (out.reaction_ids.empty())
        for (Index i = 0; i < n; ++i) out.reaction_ids.push_back("v" + std::to_string(i));
    out.samples = Matrix::Zero(draws, n);
    out.chain.resize(static_cast<std::size_t>(draws));
    out.iteration.resize(static_cast<std::size_t>(draws));
    for (int c = 0; c < opt.chains; ++c)
        for (int s = 0; s < opt.samples_per_chain; ++s) {
            const auto r = static_cast<std::size_t>(c) * static_cast<std::size_t>(opt.samples_per_chain) + static_cast<std::size_t>(s);
            out.chain[r] = c;
            out.iteration[r] = (opt.burn_in + (s + 1) * opt.thinning);
        }

    if (!post.bounded_idx.empty()) {
        const WhitenedProblem w = whiten(post, opt.jitter);

        auto run_group = [&](int first, int count) {
            ChainEnsemble ens(w, first, count, opt.seed, opt.random_scan);
            for (int b = 0; b < opt.burn_in; ++b) ens.sweep();
            for (int s = 0; s < opt.samples_per_chain; ++s) {
                for (int t = 0; t < opt.thinning; ++t) ens.sweep();
                ens.refresh();
                for (int c = 0; c < count; ++c) {
                    const Vector v = ens.flux_state(c);
                    const Index row = static_cast<Index>(first + c) * opt.samples_per_chain + s;
                    for (Index k = 0; k < v.size(); ++k) out.samples(row, w.order[static_cast<std::size_t>(k)]) = v[k];
                }
            }
        };

        const int workers = std::clamp(opt.threads, 1, opt.chains);
        if (workers == 1) {
            run_group(0, opt.chains);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
            int first = 0;
            for (int t = 0; t < workers; ++t) {
                const int count = opt.chains / workers + (t < opt.chains % workers ? 1 : 0);
                pool.emplace_back([&, t, first, count] {
                    try {
                        run_group(first, count);
                    } catch (...) {
                        errors[static_cast<std::size_t>(t)] = std::current_exception();
                    }
                });
                first += count;
            }
            for (auto& th : pool) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
    }

    Rng fill = make_stream(opt.seed, 0, kFillStream);
    fill_unbounded(out.samples, post, fill, opt.jitter);
    return out;
}

inline FluxSampleSet run_gibbs(const TruncatedPosterior& post, const Scenario& scenario,
                               const std::vector<std::string>& reaction_ids = {}, int threads = 1) {
    return run_gibbs(post, GibbsOptions::from(scenario, threads), reaction_ids);
}

// ---------------------------------------------------------------------------
// Sample files: tab-separated, `chain  iteration  <reaction ids...>`.

inline void write_samples(const FluxSampleSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "chain\titeration";
    for (const auto& id : set.reaction_ids) out << '\t' << id;
    out << '\n';
    for (Index r = 0; r < set.n_draws(); ++r) {
        out << set.chain[static_cast<std::size_t>(r)] << '\t' << set.iteration[static_cast<std::size_t>(r)];
        for (Index c = 0; c < set.n_fluxes(); ++c) out << '\t' << detail::format_real(set.samples(r, c));
        out << '\n';
    }
}

inline FluxSampleSet read_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open sample file '" + path.string() + "'");
    FluxSampleSet set;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split(line, '\t');
        if (set.reaction_ids.empty()) {
            if (cells.size() < 3 || cells[0] != "chain" || cells[1] != "iteration")
                throw InputError(detail::location(path, lineno) + "expected header 'chain<TAB>iteration<TAB>...'");
            set.reaction_ids.assign(cells.begin() + 2, cells.end());
            continue;
        }
        if (cells.size() != set.reaction_ids.size() + 2)
            throw InputError(detail::location(path, lineno) + "wrong number of columns");
        auto chain = detail::parse_real(cells[0]);
        auto iter = detail::parse_real(cells[1]);
        if (!chain || !iter) throw InputError(detail::location(path, lineno) + "bad chain/iteration");
        set.chain.push_back(static_cast<int>(*chain));
        set.iteration.push_back(static_cast<int>(*iter));
        std::vector<double> row;
        for (std::size_t k = 2; k < cells.size(); ++k) {
            auto v = detail::parse_real(cells[k]);
            if (!v) throw InputError(detail::location(path, lineno) + "bad value '" + cells[k] + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (set.reaction_ids.empty()) throw InputError("'" + path.string() + "' is empty");
    set.samples.resize(static_cast<Index>(rows.size()), static_cast<Index>(set.reaction_ids.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) set.samples(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return set;
}

}  // namespace bayesflux
