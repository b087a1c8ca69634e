#pragma once

// Summaries of posterior flux samples: marginals, credible intervals,
// pairwise couplings, standard-deviation reduction between two runs, and
// interval overlap scores against measured flux ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "bayesflux/common.hpp"
#include "bayesflux/gibbs.hpp"

namespace bayesflux {

struct Interval {
    double lo;
    double hi;

    double length() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Linear-interpolation quantile of sorted data (type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw InputError("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<double> sorted_column(const FluxSampleSet& s, Index flux) {
    std::vector<double> v(static_cast<std::size_t>(s.n_draws()));
    for (Index r = 0; r < s.n_draws(); ++r) v[static_cast<std::size_t>(r)] = s.samples(r, flux);
    std::sort(v.begin(), v.end());
    return v;
}

/// Central credible interval holding `level` of the draws; level = 1 gives
/// the full sample range.
inline Interval credible_interval(const FluxSampleSet& s, Index flux, double level = 0.95) {
    const auto v = sorted_column(s, flux);
    const double tail = 0.5 * (1.0 - level);
    return {sorted_quantile(v, tail), sorted_quantile(v, 1.0 - tail)};
}

inline constexpr std::array<double, 5> kSummaryQuantiles{0.025, 0.25, 0.5, 0.75, 0.975};

struct MarginalSummary {
    std::string reaction;
    double mean = 0.0;
    double sd = 0.0;
    std::array<double, 5> quantiles{};  // at kSummaryQuantiles
    double hist_lo = 0.0;
    double hist_hi = 0.0;
    std::vector<std::size_t> histogram;
};

inline std::vector<MarginalSummary> summarize(const FluxSampleSet& s, int bins = 30) {
    if (s.n_draws() == 0) throw InputError("summarize: empty sample set");
    if (bins < 1) throw InputError("summarize: bins must be positive");
    std::vector<MarginalSummary> out;
    const double n = static_cast<double>(s.n_draws());
    for (Index f = 0; f < s.n_fluxes(); ++f) {
        MarginalSummary m;
        m.reaction = s.reaction_ids[static_cast<std::size_t>(f)];
        const auto v = sorted_column(s, f);
        m.mean = s.samples.col(f).mean();
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.sd = s.n_draws() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        for (std::size_t k = 0; k < kSummaryQuantiles.size(); ++k) m.quantiles[k] = sorted_quantile(v, kSummaryQuantiles[k]);
        m.hist_lo = v.front();
        m.hist_hi = v.back();
        m.histogram.assign(static_cast<std::size_t>(bins), 0);
        const double width = (m.hist_hi - m.hist_lo) / bins;
        for (double x : v) {
            std::size_t b = width > 0 ? static_cast<std::size_t>((x - m.hist_lo) / width) : 0;
            m.histogram[std::min(b, m.histogram.size() - 1)]++;
        }
        out.push_back(std::move(m));
    }
    return out;
}

inline void write_summary(const std::vector<MarginalSummary>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "reaction\tmean\tsd\tq2.5\tq25\tq50\tq75\tq97.5\thist_lo\thist_hi\thistogram\n";
    for (const auto& m : rows) {
        out << m.reaction << '\t' << detail::format_real(m.mean) << '\t' << detail::format_real(m.sd);
        for (double q : m.quantiles) out << '\t' << detail::format_real(q);
        out << '\t' << detail::format_real(m.hist_lo) << '\t' << detail::format_real(m.hist_hi) << '\t';
        for (std::size_t k = 0; k < m.histogram.size(); ++k) out << (k ? "," : "") << m.histogram[k];
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Couplings

struct CouplingRecord {
    std::string first;
    std::string second;
    Index first_index = 0;
    Index second_index = 0;
    double covariance = 0.0;
    double correlation = 0.0;  // 0 when either flux is constant
};

inline CouplingRecord coupling(const FluxSampleSet& s, Index a, Index b) {
    if (s.n_draws() < 2) throw InputError("couplings need at least 2 draws");
    const auto ca = s.samples.col(a).array() - s.samples.col(a).mean();
    const auto cb = s.samples.col(b).array() - s.samples.col(b).mean();
    const double denom = static_cast<double>(s.n_draws() - 1);
    const double cov = (ca * cb).sum() / denom;
    const double va = ca.square().sum() / denom, vb = cb.square().sum() / denom;
    double corr = (va > 0 && vb > 0) ? cov / std::sqrt(va * vb) : 0.0;
    corr = std::clamp(corr, -1.0, 1.0);
    return {s.reaction_ids[static_cast<std::size_t>(a)], s.reaction_ids[static_cast<std::size_t>(b)], a, b, cov, corr};
}

inline std::vector<CouplingRecord> couplings(const FluxSampleSet& s, const std::vector<std::pair<Index, Index>>& pairs) {
    std::vector<CouplingRecord> out;
    for (auto [a, b] : pairs) out.push_back(coupling(s, a, b));
    return out;
}

/// Every unordered pair of distinct fluxes.
inline std::vector<CouplingRecord> couplings_all(const FluxSampleSet& s) {
    std::vector<std::pair<Index, Index>> pairs;
    for (Index a = 0; a < s.n_fluxes(); ++a)
        for (Index b = a + 1; b < s.n_fluxes(); ++b) pairs.emplace_back(a, b);
    return couplings(s, pairs);
}

/// The k pairs with largest |correlation|, strongest first.
inline std::vector<CouplingRecord> couplings_top_k(const FluxSampleSet& s, std::size_t k) {
    auto all = couplings_all(s);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& x, const auto& y) { return std::abs(x.correlation) > std::abs(y.correlation); });
    if (all.size() > k) all.resize(k);
    return all;
}

inline void write_couplings(const std::vector<CouplingRecord>& rows, std::ostream& out) {
    out << "first\tsecond\tcovariance\tcorrelation\n";
    for (const auto& r : rows)
        out << r.first << '\t' << r.second << '\t' << detail::format_real(r.covariance) << '\t'
            << detail::format_real(r.correlation) << '\n';
}

inline void write_couplings(const std::vector<CouplingRecord>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_couplings(rows, out);
}

/// Two-column draw file for one pair, named `scatter_<first>__<second>.tsv`.
inline std::filesystem::path write_scatter(const FluxSampleSet& s, Index a, Index b, const std::filesystem::path& dir) {
    const auto path = dir / ("scatter_" + s.reaction_ids[static_cast<std::size_t>(a)] + "__" +
                             s.reaction_ids[static_cast<std::size_t>(b)] + ".tsv");
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << s.reaction_ids[static_cast<std::size_t>(a)] << '\t' << s.reaction_ids[static_cast<std::size_t>(b)] << '\n';
    for (Index r = 0; r < s.n_draws(); ++r)
        out << detail::format_real(s.samples(r, a)) << '\t' << detail::format_real(s.samples(r, b)) << '\n';
    return path;
}

// ---------------------------------------------------------------------------
// SD reduction

struct SdReductionRow {
    std::string reaction;
    double sd_base;
    double sd_augmented;
    double ratio;  // sd_augmented / sd_base
};

inline double sample_sd(const FluxSampleSet& s, Index f) {
    if (s.n_draws() < 2) return 0.0;
    const auto c = s.samples.col(f).array() - s.samples.col(f).mean();
    return std::sqrt(c.square().sum() / static_cast<double>(s.n_draws() - 1));
}

/// Per-flux sd of two runs over the same model, sorted by sd_base ascending.
inline std::vector<SdReductionRow> sd_reduction(const FluxSampleSet& base, const FluxSampleSet& augmented) {
    if (base.reaction_ids != augmented.reaction_ids) throw InputError("sd_reduction: sample sets come from different models");
    std::vector<SdReductionRow> rows;
    for (Index f = 0; f < base.n_fluxes(); ++f) {
        const double a = sample_sd(base, f), b = sample_sd(augmented, f);
        const double ratio = a > 0 ? b / a : (b > 0 ? kInf : 1.0);
        rows.push_back({base.reaction_ids[static_cast<std::size_t>(f)], a, b, ratio});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.sd_base < y.sd_base; });
    return rows;
}

inline double median_ratio(const std::vector<SdReductionRow>& rows) {
    std::vector<double> r;
    for (const auto& row : rows) r.push_back(row.ratio);
    if (r.empty()) return 1.0;
    std::sort(r.begin(), r.end());
    const std::size_t h = r.size() / 2;
    return r.size() % 2 ? r[h] : 0.5 * (r[h - 1] + r[h]);
}

inline void write_sd_reduction(const std::vector<SdReductionRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "reaction\tsd_base\tsd_augmented\tratio\n";
    for (const auto& r : rows)
        out << r.reaction << '\t' << detail::format_real(r.sd_base) << '\t' << detail::format_real(r.sd_augmented) << '\t'
            << detail::format_real(r.ratio) << '\n';
}

// ---------------------------------------------------------------------------
// Interval scoring

struct IntervalScore {
    Interval predicted;
    Interval measured;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Overlap-length precision / recall of a predicted flux interval against a
/// measured one: precision = overlap / |predicted|, recall = overlap /
/// |measured|. When either interval is a single point, both scores are 1 if
/// that point lies inside the other interval and 0 otherwise.
inline IntervalScore interval_score(const Interval& predicted, const Interval& measured) {
    if (predicted.lo > predicted.hi || measured.lo > measured.hi) throw InputError("interval_score: empty interval");
    IntervalScore s{predicted, measured};
    if (predicted.length() == 0.0 || measured.length() == 0.0) {
        const bool hit = predicted.length() == 0.0 ? measured.contains(predicted.lo) : predicted.contains(measured.lo);
        s.precision = s.recall = hit ? 1.0 : 0.0;
    } else {
        const double overlap = std::max(0.0, std::min(predicted.hi, measured.hi) - std::max(predicted.lo, measured.lo));
        s.precision = overlap / predicted.length();
        s.recall = overlap / measured.length();
    }
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

}  // namespace bayesflux
