#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "bayesflux/gibbs.hpp"
#include "bayesflux/pipeline.hpp"
#include "support.hpp"

using namespace bayesflux;

namespace {

struct Toy {
    StoichiometricModel model;
    Scenario scenario;
};

Toy load_toy(const std::string& name) {
    Toy t;
    t.model = load_model(oracle::data("toys/" + name + ".tsv"), ModelFormat::tsv);
    t.scenario = load_scenario(oracle::data("toys/" + name + ".scenario.txt"), t.model);
    return t;
}

StoichiometricModel core() { return load_model(oracle::data("e_coli_core.json"), ModelFormat::bigg_json); }

TruncatedPosterior box_posterior(const Vector& mean, const Matrix& cov, const Vector& lb, const Vector& ub) {
    return truncate(GaussianFluxDistribution{mean, cov}, lb, ub);
}

GibbsOptions small_run(int chains, int samples, int thin, std::uint64_t seed = 1) {
    GibbsOptions o;
    o.chains = chains;
    o.samples_per_chain = samples;
    o.thinning = thin;
    o.seed = seed;
    return o;
}

// Objective of the MAP problem, (x - mu)^T C^-1 (x - mu).
double quad(const Vector& x, const Vector& mu, const Matrix& cov) { return (x - mu).dot(cov.ldlt().solve(x - mu)); }

}  // namespace

TEST(MapEstimate, InteriorMeanIsItsOwnMap) {
    Matrix c(2, 2);
    c << 1, 0.5, 0.5, 2;
    const auto p = box_posterior(Vector::Constant(2, 0.5), c, Vector::Zero(2), Vector::Ones(2));
    EXPECT_LT((map_estimate(p) - Vector::Constant(2, 0.5)).norm(), 1e-14);
}

TEST(MapEstimate, OneDimensionalClamp) {
    const auto p = box_posterior(Vector::Constant(1, 5.0), Matrix::Identity(1, 1), Vector::Zero(1), Vector::Constant(1, 3.0));
    EXPECT_EQ(map_estimate(p)[0], 3.0);
}

TEST(MapEstimate, CorrelatedPairAgreesWithGridSearch) {
    Matrix c(2, 2);
    c << 1, 0.9, 0.9, 1;
    Vector mu(2);
    mu << 2.0, -0.5;
    const Vector lo = Vector::Zero(2), hi = Vector::Ones(2);
    const auto p = box_posterior(mu, c, lo, hi);
    const Vector x = map_estimate(p);

    Vector best(2), probe(2);
    double best_q = kInf;
    for (int a = 0; a <= 1000; ++a)
        for (int b = 0; b <= 1000; ++b) {
            probe << a * 1e-3, b * 1e-3;
            const double q = quad(probe, mu, c);
            if (q < best_q) best_q = q, best = probe;
        }
    EXPECT_LT((x - best).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LE(quad(x, mu, c), best_q + 1e-12);
}

TEST(MapEstimate, RandomBoxQpsSatisfyKkt) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 200; ++t) {
        const Index n = 1 + t % 8;
        Matrix B(n, n);
        for (Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
        const Matrix c = B * B.transpose() + 0.05 * Matrix::Identity(n, n);
        Vector mu(n), lo(n), hi(n);
        for (Index i = 0; i < n; ++i) {
            mu[i] = 3 * nd(rng);
            lo[i] = nd(rng);
            hi[i] = lo[i] + std::abs(nd(rng));
        }
        const auto r = solve_box_qp(mu, c, lo, hi);
        EXPECT_TRUE(((r.x.array() >= lo.array()) && (r.x.array() <= hi.array())).all()) << t;
        EXPECT_LT(box_qp_kkt_residual(mu, c, lo, hi, r.x), 1e-8) << t;
        // Random feasible points never beat it.
        std::uniform_real_distribution<double> u(0, 1);
        for (int k = 0; k < 50; ++k) {
            Vector y(n);
            for (Index i = 0; i < n; ++i) y[i] = lo[i] + u(rng) * (hi[i] - lo[i]);
            EXPECT_GE(quad(y, mu, c), quad(r.x, mu, c) - 1e-9) << t;
        }
    }
}

TEST(Whitening, IdentityCovariance) {
    const auto p = box_posterior(Vector::Zero(3), Matrix::Identity(3, 3), Vector::Constant(3, -1), Vector::Constant(3, 2));
    const auto w = whiten(p);
    EXPECT_TRUE(w.L.isApprox(Matrix::Identity(3, 3)));
    EXPECT_EQ(w.jitter, 0.0);
    EXPECT_EQ(w.n_fixed, 0);
}

TEST(Whitening, ScaledDiagonalGivesScaledBounds) {
    const auto p = box_posterior(Vector::Zero(2), 4.0 * Matrix::Identity(2, 2), Vector::Zero(2), Vector::Constant(2, 4.0));
    const auto w = whiten(p);
    EXPECT_TRUE(w.L.isApprox(2.0 * Matrix::Identity(2, 2)));
    const auto iv = gibbs_bounds(w, 0, Vector::Constant(2, 1.0));
    ASSERT_EQ(iv.size(), 1u);
    EXPECT_NEAR(iv[0].lower, 0.0, 1e-8);
    EXPECT_NEAR(iv[0].upper, 2.0, 1e-8);
}

TEST(Whitening, CoreFactorReconstructsCovariance) {
    const auto m = core();
    const auto s = load_scenario(oracle::data("scenarios/core_max_growth.txt"), m);
    const auto p = build_posterior(m, s);
    const auto w = whiten(p, s.jitter);
    Matrix c = gather(p.gaussian.cov, w.order, w.order);
    c.diagonal().array() += w.jitter;
    const Matrix llt = w.L * w.L.transpose();
    EXPECT_LT((llt - c).cwiseAbs().maxCoeff() / c.cwiseAbs().maxCoeff(), 1e-8);
    // The start is the MAP, inside the box.
    const Vector v0 = w.L * w.initial_state + w.mu_b;
    EXPECT_TRUE(((v0.array() >= w.lower.array() + w.mu_b.array() - 1e-9) && (v0.array() <= w.upper.array() + w.mu_b.array() + 1e-9)).all());
}

TEST(Whitening, FixedFluxesComeFirst) {
    const auto t = load_toy("fixed3");
    const auto w = whiten(build_posterior(t.model, t.scenario));
    EXPECT_EQ(w.n_fixed, 1);
    EXPECT_EQ(w.order.front(), 0);
}

TEST(GibbsBounds, MatchGridFeasibilityOracle) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 30; ++t) {
        const Index n = 3;
        Matrix B(n, n);
        for (Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
        const Matrix c = B * B.transpose() + 0.2 * Matrix::Identity(n, n);
        Vector lo(n), hi(n);
        for (Index i = 0; i < n; ++i) lo[i] = -1 - u(rng), hi[i] = 1 + u(rng);
        const auto p = box_posterior(Vector::Zero(n), c, lo, hi);
        const auto w = whiten(p);
        // A random feasible state: the start nudged along a few coordinates.
        Matrix states(n, 1);
        states.col(0) = w.initial_state;
        for (Index i = 0; i < n; ++i) {
            const auto iv = gibbs_bounds(w, i, states)[0];
            states(i, 0) = iv.lower + u(rng) * (iv.upper - iv.lower);
        }
        for (Index i = 0; i < n; ++i) {
            const auto iv = gibbs_bounds(w, i, states)[0];
            // Self-consistency: the current value is inside its own interval.
            EXPECT_GE(states(i, 0), iv.lower - 1e-12);
            EXPECT_LE(states(i, 0), iv.upper + 1e-12);
            double flo = kInf, fhi = -kInf;
            const double step = 1e-4;
            Vector probe = states.col(0);
            for (double x = -10; x <= 10; x += step) {
                probe[i] = x;
                const Vector v = w.L * probe + w.mu_b;
                if (((v.array() >= w.lb_b.array()) && (v.array() <= w.ub_b.array())).all()) {
                    flo = std::min(flo, x);
                    fhi = std::max(fhi, x);
                }
            }
            EXPECT_NEAR(iv.lower, flo, 2 * step) << t << "," << i;
            EXPECT_NEAR(iv.upper, fhi, 2 * step) << t << "," << i;
        }
    }
}

TEST(Sampler, OneDimensionalTruncatedNormalMoments) {
    const auto t = load_toy("box1");
    const auto s = sample_posterior(t.model, t.scenario);
    ASSERT_EQ(s.n_draws(), 5000);
    const auto x = oracle::column(s.samples, 0);
    const double var = 1.0 - 2.0 * 0.24197072451914337 / (2.0 * 0.8413447460685429 - 1.0);
    EXPECT_LT(std::abs(oracle::mean(x)), 4.0 * std::sqrt(var / 5000));
    EXPECT_LT(std::abs(oracle::variance(x) - var), 4.0 * var * std::sqrt(2.0 / 5000));
}

// Every toy against rejection draws from the independently built posterior.
class ToyAgreement : public ::testing::TestWithParam<std::string> {};

TEST_P(ToyAgreement, MarginalsMatchRejectionOracle) {
    auto t = load_toy(GetParam());
    if (GetParam() == "net7") {
        // A tighter prior keeps the rejection oracle's acceptance workable.
        t.scenario.prior_flux_sd.setConstant(3.0);
        t.scenario.steadystate_sd.setConstant(0.1);
    }
    const auto samples = sample_posterior(t.model, t.scenario);

    oracle::Gaussian g = oracle::prior(t.model, t.scenario);
    std::vector<Index> idx;
    Vector y(static_cast<Index>(t.scenario.observations.size())), sd(y.size());
    for (std::size_t k = 0; k < t.scenario.observations.size(); ++k) {
        const auto o = range_to_gaussian(t.scenario.observations[k], t.scenario.sd_floor);
        idx.push_back(o.reaction);
        y[static_cast<Index>(k)] = o.mean;
        sd[static_cast<Index>(k)] = o.sd;
    }
    g = oracle::condition(g, idx, y, sd);

    std::vector<Index> fixed, rest;
    Vector fixed_values(0);
    for (Index i = 0; i < t.model.n_reactions(); ++i)
        if (t.model.lower_bounds[i] == t.model.upper_bounds[i]) {
            fixed.push_back(i);
            fixed_values.conservativeResize(fixed_values.size() + 1);
            fixed_values[fixed_values.size() - 1] = t.model.lower_bounds[i];
        }
    if (fixed.empty()) {
        for (Index i = 0; i < t.model.n_reactions(); ++i) rest.push_back(i);
    } else {
        g = oracle::condition_exact(g, fixed, fixed_values, &rest);
        for (std::size_t k = 0; k < fixed.size(); ++k)
            for (Index r = 0; r < samples.n_draws(); ++r) EXPECT_EQ(samples.samples(r, fixed[k]), fixed_values[static_cast<Index>(k)]);
    }
    const Vector lo = gather(t.model.lower_bounds, rest), hi = gather(t.model.upper_bounds, rest);
    const Matrix ref = oracle::rejection_sample(g, lo, hi, 1'000'000, 99);
    for (std::size_t k = 0; k < rest.size(); ++k) {
        const double d = oracle::ks_statistic(oracle::column(samples.samples, rest[k]), oracle::column(ref, static_cast<Index>(k)));
        EXPECT_LE(d, 0.03) << GetParam() << " flux " << t.model.reaction_ids[static_cast<std::size_t>(rest[k])];
    }
}

INSTANTIATE_TEST_SUITE_P(Toys, ToyAgreement,
                         ::testing::Values("box1", "tail1", "chain2", "sum2", "branch3", "mixed2", "fixed3", "net7"));

TEST(Sampler, DrawsRespectBoundsOnCore) {
    const auto m = core();
    auto s = load_scenario(oracle::data("scenarios/core_max_growth.txt"), m);
    s.chains = 3;
    s.samples_per_chain = 40;
    s.thinning = 5;
    const auto d = sample_posterior(m, s);
    for (Index r = 0; r < d.n_draws(); ++r)
        for (Index i = 0; i < m.n_reactions(); ++i) {
            ASSERT_GE(d.samples(r, i), m.lower_bounds[i]);
            ASSERT_LE(d.samples(r, i), m.upper_bounds[i]);
        }
    // Growth is observed at its optimum, which no feasible draw can exceed.
    const auto growth = oracle::column(d.samples, *m.objective_index);
    EXPECT_LE(*std::max_element(growth.begin(), growth.end()), 0.873922 + 1e-6);
    EXPECT_NEAR(oracle::mean(growth), 0.8739, 0.05);
}

TEST(Sampler, SameSeedIsReproducibleAndThreadInvariant) {
    const auto t = load_toy("net7");
    const auto post = build_posterior(t.model, t.scenario);
    auto opt = small_run(5, 30, 3, 42);
    const auto a = run_gibbs(post, opt);
    const auto b = run_gibbs(post, opt);
    EXPECT_TRUE(a.samples == b.samples);
    opt.threads = 3;
    const auto c = run_gibbs(post, opt);
    EXPECT_TRUE(a.samples == c.samples);
    opt.seed = 43;
    const auto d = run_gibbs(post, opt);
    EXPECT_FALSE(a.samples == d.samples);
    EXPECT_EQ(a.chain, c.chain);
    EXPECT_EQ(a.iteration.front(), 3);
    EXPECT_EQ(a.iteration.back(), 90);
}

TEST(Sampler, RandomScanIsValidAndReproducible) {
    auto t = load_toy("chain2");
    t.scenario.random_scan = true;
    const auto a = sample_posterior(t.model, t.scenario);
    const auto b = sample_posterior(t.model, t.scenario, 2);
    EXPECT_TRUE(a.samples == b.samples);
}

TEST(Sampler, SteadyStateResidualCovariance) {
    // Wide bounds far from the mass so the truncation is inactive.
    StoichiometricModel m;
    m.metabolite_ids = {"A", "B"};
    m.reaction_ids = {"r1", "r2", "r3"};
    m.S = Matrix(2, 3);
    m.S << 1, -1, 0, 0, 1, -1;
    m.lower_bounds = Vector::Constant(3, -50);
    m.upper_bounds = Vector::Constant(3, 50);
    auto s = default_scenario(m);
    s.prior_flux_sd.setConstant(1.0);
    s.steadystate_sd.setConstant(0.1);
    s.chains = 4;
    s.samples_per_chain = 1000;
    s.thinning = 5;
    const auto d = sample_posterior(m, s);
    const Matrix r = d.samples * m.S.transpose();
    const Matrix centered = r.rowwise() - r.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(r.rows() - 1);
    EXPECT_NEAR(cov(0, 0), 0.01, 0.0025);
    EXPECT_NEAR(cov(1, 1), 0.01, 0.0025);
    EXPECT_LT(std::abs(cov(0, 1)), 0.0025);
}

TEST(FillUnbounded, AllUnboundedIsTheGaussian) {
    Matrix c(2, 2);
    c << 2, 0.6, 0.6, 1;
    Vector mu(2);
    mu << 1, -1;
    const auto p = box_posterior(mu, c, Vector::Constant(2, -kInf), Vector::Constant(2, kInf));
    const auto d = run_gibbs(p, small_run(2, 50000, 1));
    const Matrix centered = d.samples.rowwise() - d.samples.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(d.n_draws() - 1);
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(d.samples.col(i).mean(), mu[i], 4 * std::sqrt(c(i, i) / 1e5));
    EXPECT_LT((cov - c).cwiseAbs().maxCoeff(), 0.04);
}

TEST(FillUnbounded, ConditionalOnBoundedValues) {
    Matrix c(3, 3);
    c << 1, 0.5, 0.2, 0.5, 2, 0.3, 0.2, 0.3, 1.5;
    Vector mu(3);
    mu << 0, 1, 2;
    Vector lo(3), hi(3);
    lo << -1, -kInf, -kInf;
    hi << 1, kInf, kInf;
    const auto p = box_posterior(mu, c, lo, hi);
    Matrix rows = Matrix::Zero(200000, 3);
    rows.col(0).setConstant(0.7);
    Rng rng(5);
    fill_unbounded(rows, p, rng);
    EXPECT_TRUE((rows.col(0).array() == 0.7).all());
    const auto exact = oracle::condition_exact({mu, c}, {0}, Vector::Constant(1, 0.7));
    for (Index k = 0; k < 2; ++k) {
        const auto col = oracle::column(rows, k + 1);
        EXPECT_NEAR(oracle::mean(col), exact.mean[k], 4 * std::sqrt(exact.cov(k, k) / 2e5));
        EXPECT_NEAR(oracle::variance(col), exact.cov(k, k), 4 * exact.cov(k, k) * std::sqrt(2.0 / 2e5));
    }
}

TEST(Sampler, ChainsAreExchangeable) {
    const auto t = load_toy("tail1");
    const auto s = sample_posterior(t.model, t.scenario);
    const auto pooled = oracle::column(s.samples, 0);
    const double sd = std::sqrt(oracle::variance(pooled));
    const Matrix per_chain = s.chain_matrix(0);
    for (Index c = 0; c < per_chain.cols(); ++c)
        EXPECT_NEAR(per_chain.col(c).mean(), oracle::mean(pooled), 4.0 * sd / std::sqrt(per_chain.rows())) << c;
}

TEST(Sampler, RejectsBadOptions) {
    const auto t = load_toy("box1");
    const auto p = build_posterior(t.model, t.scenario);
    EXPECT_THROW(run_gibbs(p, small_run(0, 10, 1)), InputError);
    EXPECT_THROW(run_gibbs(p, small_run(1, 10, 0)), InputError);
}

TEST(SampleFiles, RoundTripAndUnknownReaction) {
    const auto t = load_toy("branch3");
    auto s = t.scenario;
    s.chains = 2;
    s.samples_per_chain = 5;
    const auto d = sample_posterior(t.model, s);
    const auto path = std::filesystem::temp_directory_path() / "bayesflux_samples_rt.tsv";
    write_samples(d, path);
    const auto r = read_samples(path);
    std::filesystem::remove(path);
    EXPECT_EQ(r.reaction_ids, d.reaction_ids);
    EXPECT_EQ(r.chain, d.chain);
    EXPECT_EQ(r.iteration, d.iteration);
    EXPECT_TRUE(r.samples == d.samples);
    try {
        d.require_reaction("XYZ");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("v1"), std::string::npos);
    }
}

TEST(FbaMode, ObservationAtOptimum) {
    const auto m = core();
    const auto o = fba_mode_observation(m, 1.0);
    EXPECT_EQ(o.reaction, *m.objective_index);
    EXPECT_NEAR(o.mean, 0.8739, 1e-3);
    EXPECT_NEAR(o.sd, 0.00087, 1e-5);
    const auto half = fba_mode_observation(m, 0.5, 0.01);
    EXPECT_NEAR(half.mean, 0.4370, 1e-3);
    EXPECT_NEAR(half.sd, 0.0044, 1e-4);
    EXPECT_THROW(fba_mode_observation(m, 0.0), InputError);
    EXPECT_THROW(fba_mode_observation(m, 1.5), InputError);
}

TEST(FbaMode, FixedObjectiveGivesItsValue) {
    auto t = load_toy("fixed3");
    t.model.objective_index = 0;  // v1 is fixed at 2
    const auto o = fba_mode_observation(t.model, 1.0);
    EXPECT_NEAR(o.mean, 2.0, 1e-9);
    const auto s = with_fba_mode(t.model, t.scenario, 1.0);
    EXPECT_EQ(s.observations.size(), t.scenario.observations.size() + 1);
}
