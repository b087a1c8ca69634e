#pragma once

// Dense bounded-variable simplex and the classical constraint-based baselines
// built on it: FBA, FVA and taxicab (L1) MFA.

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/LU>

#include "bayesflux/common.hpp"
#include "bayesflux/model_io.hpp"

namespace bayesflux {

enum class Sense { minimize, maximize };
enum class LpStatus { optimal, infeasible, unbounded };

/// optimize cost^T x  s.t.  A_eq x = b_eq,  lower <= x <= upper.
struct LinearProgram {
    Vector cost;
    Matrix A_eq;
    Vector b_eq;
    Vector lower;
    Vector upper;
    Sense sense = Sense::minimize;
};

struct LpResult {
    LpStatus status = LpStatus::infeasible;
    double objective = std::numeric_limits<double>::quiet_NaN();  // in the program's own sense
    Vector x;
    /// Equality-row multipliers and reduced costs of the minimization form
    /// (cost negated when maximizing).
    Vector duals;
    Vector reduced_costs;
    int iterations = 0;
};

struct SimplexOptions {
    double optimality_tol = 1e-9;
    double feasibility_tol = 1e-9;
    double pivot_tol = 1e-10;
    int degenerate_streak_for_bland = 50;
    int reinvert_every = 100;
};

namespace detail {

// Dense tableau over structural + artificial columns.
class BoundedSimplex {
public:
    BoundedSimplex(const LinearProgram& lp, const SimplexOptions& opt) : opt_(opt) {
        m_ = lp.A_eq.rows();
        n_ = lp.A_eq.cols();
        if (lp.cost.size() != n_ || lp.lower.size() != n_ || lp.upper.size() != n_ || lp.b_eq.size() != m_)
            throw InputError("linear program: inconsistent dimensions");
        for (Index j = 0; j < n_; ++j) {
            if (!std::isfinite(lp.cost[j])) throw InputError("linear program: non-finite cost");
            if (lp.lower[j] > lp.upper[j]) infeasible_bounds_ = true;
        }
        const Index total = n_ + m_;
        cost_ = Vector::Zero(total);
        cost_.head(n_) = lp.sense == Sense::minimize ? lp.cost : Vector(-lp.cost);
        lo_.resize(total);
        hi_.resize(total);
        lo_.head(n_) = lp.lower;
        hi_.head(n_) = lp.upper;
        x_ = Vector::Zero(total);
        state_.assign(static_cast<std::size_t>(total), State::at_lower);
        b_ = lp.b_eq;

        // Nonbasic structurals sit at a finite bound (or 0 when free).
        for (Index j = 0; j < n_; ++j) {
            if (std::isfinite(lo_[j])) { x_[j] = lo_[j]; state_[st(j)] = State::at_lower; }
            else if (std::isfinite(hi_[j])) { x_[j] = hi_[j]; state_[st(j)] = State::at_upper; }
            else { x_[j] = 0.0; state_[st(j)] = State::free; }
        }
        const Vector r = b_ - lp.A_eq * x_.head(n_);
        full_ = Matrix::Zero(m_, total);
        full_.leftCols(n_) = lp.A_eq;
        basis_.resize(static_cast<std::size_t>(m_));
        for (Index i = 0; i < m_; ++i) {
            const double sign = r[i] >= 0 ? 1.0 : -1.0;
            full_(i, n_ + i) = sign;
            lo_[n_ + i] = 0.0;
            hi_[n_ + i] = kInf;
            x_[n_ + i] = std::abs(r[i]);
            basis_[st(i)] = n_ + i;
            state_[st(n_ + i)] = State::basic;
        }
    }

    LpResult solve() {
        LpResult res;
        if (infeasible_bounds_) return res;

        // Phase 1: minimize the sum of artificials.
        Vector phase1 = Vector::Zero(n_ + m_);
        phase1.tail(m_).setOnes();
        reinvert(phase1);
        if (!iterate(phase1)) throw NumericalError("simplex phase 1 reported unbounded; this cannot happen");
        const double infeas = x_.tail(m_).sum();
        const double b_scale = m_ > 0 ? b_.cwiseAbs().maxCoeff() : 0.0;
        if (infeas > opt_.feasibility_tol * (1.0 + b_scale)) {
            res.status = LpStatus::infeasible;
            res.iterations = iterations_;
            return res;
        }

        // Pivot basic artificials out where possible, then pin them at 0.
        for (Index i = 0; i < m_; ++i) {
            if (basis_[st(i)] < n_) continue;
            Index best = -1;
            double best_abs = 1e-9;
            for (Index j = 0; j < n_; ++j)
                if (state_[st(j)] != State::basic && std::abs(tab_(i, j)) > best_abs) {
                    best_abs = std::abs(tab_(i, j));
                    best = j;
                }
            if (best >= 0) {
                const Index leaving = basis_[st(i)];
                state_[st(leaving)] = State::at_lower;
                x_[leaving] = 0.0;
                pivot(i, best, phase1);
            }
        }
        for (Index k = n_; k < n_ + m_; ++k) {
            hi_[k] = 0.0;
            if (state_[st(k)] != State::basic) {
                x_[k] = 0.0;
                state_[st(k)] = State::at_lower;
            }
        }

        // Phase 2.
        reinvert(cost_);
        if (!iterate(cost_)) {
            res.status = LpStatus::unbounded;
            res.iterations = iterations_;
            return res;
        }

        res.status = LpStatus::optimal;
        res.x = x_.head(n_);
        for (Index j = 0; j < n_; ++j) res.x[j] = std::clamp(res.x[j], lo_[j], hi_[j]);
        const double obj = cost_.head(n_).dot(res.x);
        res.objective = obj;
        res.duals = duals_;
        res.reduced_costs = d_.head(n_);
        res.iterations = iterations_;
        return res;
    }

private:
    enum class State : char { basic, at_lower, at_upper, free };

    static std::size_t st(Index i) { return static_cast<std::size_t>(i); }

    // Rebuilds the tableau, basic values and reduced costs from the basis.
    void reinvert(const Vector& cost) {
        since_reinvert_ = 0;
        if (m_ == 0) {  // no rows: every column is nonbasic
            tab_ = Matrix(0, n_);
            duals_ = Vector(0);
            d_ = cost;
            return;
        }
        Matrix B(m_, m_);
        for (Index i = 0; i < m_; ++i) B.col(i) = full_.col(basis_[st(i)]);
        Eigen::PartialPivLU<Matrix> lu(B);
        tab_ = lu.solve(full_);
        Vector rhs = b_;
        for (Index j = 0; j < n_ + m_; ++j)
            if (state_[st(j)] != State::basic && x_[j] != 0.0) rhs -= full_.col(j) * x_[j];
        const Vector xb = lu.solve(rhs);
        for (Index i = 0; i < m_; ++i) x_[basis_[st(i)]] = xb[i];
        Vector cb(m_);
        for (Index i = 0; i < m_; ++i) cb[i] = cost[basis_[st(i)]];
        duals_ = lu.transpose().solve(cb);
        d_ = cost - full_.transpose() * duals_;
        for (Index i = 0; i < m_; ++i) d_[basis_[st(i)]] = 0.0;
    }

    void pivot(Index r, Index q, const Vector& cost) {
        const double piv = tab_(r, q);
        tab_.row(r) /= piv;
        for (Index i = 0; i < m_; ++i)
            if (i != r && tab_(i, q) != 0.0) tab_.row(i) -= tab_(i, q) * tab_.row(r);
        d_ -= d_[q] * tab_.row(r).transpose();
        d_[q] = 0.0;
        basis_[st(r)] = q;
        state_[st(q)] = State::basic;
        if (++since_reinvert_ >= opt_.reinvert_every) reinvert(cost);
    }

    // Returns false when the objective is unbounded below.
    bool iterate(const Vector& cost) {
        const int cap = static_cast<int>(50 * (n_ + m_) + 1000);
        int degenerate_streak = 0;
        bool verified = false;
        for (;;) {
            if (++iterations_ > cap) throw NumericalError("simplex iteration limit reached");
            const bool bland = degenerate_streak >= opt_.degenerate_streak_for_bland;

            // Entering variable.
            Index q = -1;
            double best = 0.0;
            for (Index j = 0; j < n_ + m_; ++j) {
                const State s = state_[st(j)];
                if (s == State::basic || lo_[j] == hi_[j]) continue;
                const double dj = d_[j];
                double gain = 0.0;
                if (s == State::at_lower && dj < -opt_.optimality_tol) gain = -dj;
                else if (s == State::at_upper && dj > opt_.optimality_tol) gain = dj;
                else if (s == State::free && std::abs(dj) > opt_.optimality_tol) gain = std::abs(dj);
                if (gain <= 0.0) continue;
                if (bland) { q = j; break; }
                if (gain > best) { best = gain; q = j; }
            }
            if (q < 0) {
                // Confirm optimality on a freshly inverted basis.
                if (verified) return true;
                reinvert(cost);
                verified = true;
                continue;
            }
            verified = false;

            const double dir = d_[q] < 0 ? 1.0 : -1.0;
            double t = kInf;
            Index r = -1;
            bool leave_at_upper = false;
            for (Index i = 0; i < m_; ++i) {
                const double delta = -dir * tab_(i, q);  // change of basic i per unit step
                if (std::abs(delta) <= opt_.pivot_tol) continue;
                const Index bi = basis_[st(i)];
                double limit;
                bool upper;
                if (delta < 0) {
                    if (!std::isfinite(lo_[bi])) continue;
                    limit = std::max(0.0, (x_[bi] - lo_[bi]) / -delta);
                    upper = false;
                } else {
                    if (!std::isfinite(hi_[bi])) continue;
                    limit = std::max(0.0, (hi_[bi] - x_[bi]) / delta);
                    upper = true;
                }
                bool take = limit < t;
                if (!take && r >= 0 && limit == t) {
                    take = bland ? bi < basis_[st(r)] : std::abs(tab_(i, q)) > std::abs(tab_(r, q));
                }
                if (take) { t = limit; r = i; leave_at_upper = upper; }
            }
            const double flip = hi_[q] - lo_[q];
            if (!std::isfinite(t) && !std::isfinite(flip)) return false;

            degenerate_streak = (std::min(t, flip) <= 1e-12) ? degenerate_streak + 1 : 0;

            if (flip <= t) {
                x_[q] += dir * flip;
                for (Index i = 0; i < m_; ++i) x_[basis_[st(i)]] -= dir * flip * tab_(i, q);
                state_[st(q)] = state_[st(q)] == State::at_lower ? State::at_upper : State::at_lower;
                continue;
            }

            x_[q] += dir * t;
            for (Index i = 0; i < m_; ++i) x_[basis_[st(i)]] -= dir * t * tab_(i, q);
            const Index leaving = basis_[st(r)];
            x_[leaving] = leave_at_upper ? hi_[leaving] : lo_[leaving];
            state_[st(leaving)] = leave_at_upper ? State::at_upper : State::at_lower;
            pivot(r, q, cost);
        }
    }

    SimplexOptions opt_;
    Index m_ = 0, n_ = 0;
    bool infeasible_bounds_ = false;
    Matrix full_;  // [A | D]
    Matrix tab_;   // B^-1 [A | D]
    Vector b_, cost_, lo_, hi_, x_, d_, duals_;
    std::vector<Index> basis_;
    std::vector<State> state_;
    int iterations_ = 0;
    int since_reinvert_ = 0;
};

}  // namespace detail

/// Solves `lp` with a two-phase bounded-variable simplex. Infeasible and
/// unbounded programs are reported in the status, not thrown.
inline LpResult solve_lp(const LinearProgram& lp, const SimplexOptions& opt = {}) {
    detail::BoundedSimplex simplex(lp, opt);
    LpResult res = simplex.solve();
    if (res.status == LpStatus::optimal && lp.sense == Sense::maximize) res.objective = -res.objective;
    return res;
}

// ---------------------------------------------------------------------------
// Constraint-based baselines

struct FbaResult {
    double objective;
    Vector flux;
};

inline LinearProgram steady_state_lp(const StoichiometricModel& model) {
    LinearProgram lp;
    lp.cost = Vector::Zero(model.n_reactions());
    lp.A_eq = model.S;
    lp.b_eq = Vector::Zero(model.n_metabolites());
    lp.lower = model.lower_bounds;
    lp.upper = model.upper_bounds;
    return lp;
}

/// Maximizes the objective flux under S v = 0 and the bounds. Degenerate
/// optima are common; the first optimal vertex reached is returned.
inline FbaResult fba(const StoichiometricModel& model) {
    if (!model.objective_index) throw InputError("model has no objective reaction");
    auto lp = steady_state_lp(model);
    lp.cost[*model.objective_index] = 1.0;
    lp.sense = Sense::maximize;
    const auto res = solve_lp(lp);
    if (res.status == LpStatus::infeasible) throw InfeasibleError("FBA: constraints are infeasible");
    if (res.status == LpStatus::unbounded) throw InputError("FBA: objective is unbounded");
    return {res.objective, res.x};
}

struct FvaResult {
    Vector min_flux;
    Vector max_flux;
};

namespace detail {

template <class F>
void parallel_for(Index n, int threads, F&& body) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            try {
                for (Index i = t; i < n; i += workers) body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Per-reaction flux range with the objective held at >= fraction * optimum.
inline FvaResult fva(const StoichiometricModel& model, double fraction = 1.0, int threads = 1) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("FVA fraction must be in [0, 1]");
    const auto opt = fba(model);
    const Index obj = *model.objective_index;
    auto lp = steady_state_lp(model);
    const double floor = fraction * opt.objective - 1e-9 * (1.0 + std::abs(opt.objective));
    lp.lower[obj] = std::min(std::max(lp.lower[obj], floor), lp.upper[obj]);

    const Index n = model.n_reactions();
    FvaResult out{Vector(n), Vector(n)};
    detail::parallel_for(2 * n, threads, [&](Index k) {
        const Index i = k / 2;
        LinearProgram p = lp;
        p.cost[i] = 1.0;
        p.sense = (k % 2 == 0) ? Sense::minimize : Sense::maximize;
        const auto res = solve_lp(p);
        double value;
        if (res.status == LpStatus::optimal) value = res.objective;
        else if (res.status == LpStatus::unbounded) value = (k % 2 == 0) ? -kInf : kInf;
        else throw InfeasibleError("FVA: constraints became infeasible");
        (k % 2 == 0 ? out.min_flux : out.max_flux)[i] = value;
    });
    for (Index i = 0; i < n; ++i)
        if (out.min_flux[i] > out.max_flux[i]) out.min_flux[i] = out.max_flux[i] = 0.5 * (out.min_flux[i] + out.max_flux[i]);
    return out;
}

/// Bounds of `model` tightened by observations: gaussian ones fix the flux at
/// the observed mean, ranges intersect the bounds.
inline StoichiometricModel constrain_by_observations(StoichiometricModel model, std::span<const Observation> obs) {
    for (const auto& o : obs) {
        double lo = o.kind == ObservationKind::gaussian ? o.mean : o.low;
        double hi = o.kind == ObservationKind::gaussian ? o.mean : o.high;
        lo = std::max(lo, model.lower_bounds[o.reaction]);
        hi = std::min(hi, model.upper_bounds[o.reaction]);
        if (lo > hi)
            throw InfeasibleError("observation on '" + model.reaction_ids[static_cast<std::size_t>(o.reaction)] +
                                  "' lies outside its bounds or contradicts another observation");
        model.lower_bounds[o.reaction] = lo;
        model.upper_bounds[o.reaction] = hi;
    }
    return model;
}

/// Minimizes sum |v_i| under S v = 0, the bounds and the observation
/// constraints, via the split v = p - q with p, q >= 0.
inline Vector mfa_taxicab(const StoichiometricModel& model, std::span<const Observation> obs) {
    const auto m = constrain_by_observations(model, obs);
    const Index n = m.n_reactions();
    LinearProgram lp;
    lp.cost = Vector::Ones(2 * n);
    lp.A_eq.resize(m.n_metabolites(), 2 * n);
    lp.A_eq.leftCols(n) = m.S;
    lp.A_eq.rightCols(n) = -m.S;
    lp.b_eq = Vector::Zero(m.n_metabolites());
    lp.lower.resize(2 * n);
    lp.upper.resize(2 * n);
    for (Index i = 0; i < n; ++i) {
        const double lb = m.lower_bounds[i], ub = m.upper_bounds[i];
        lp.lower[i] = std::max(lb, 0.0);
        lp.upper[i] = std::max(ub, 0.0);
        lp.lower[n + i] = std::max(-ub, 0.0);
        lp.upper[n + i] = std::max(-lb, 0.0);
    }
    const auto res = solve_lp(lp);
    if (res.status == LpStatus::infeasible) throw InfeasibleError("MFA: constraints are infeasible");
    if (res.status == LpStatus::unbounded) throw NumericalError("MFA: L1 objective reported unbounded");
    return res.x.head(n) - res.x.tail(n);
}

inline Vector mfa_taxicab(const StoichiometricModel& model, const std::vector<Observation>& obs) {
    return mfa_taxicab(model, std::span<const Observation>(obs.data(), obs.size()));
}

}  // namespace bayesflux
