// bayesflux: Bayesian flux sampling and constraint-based baselines.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or input error, 3 infeasible.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bayesflux/analysis.hpp"
#include "bayesflux/diagnostics.hpp"
#include "bayesflux/pipeline.hpp"

#ifndef BAYESFLUX_VERSION
#define BAYESFLUX_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace bayesflux;

namespace {

enum Exit : int { kOk = 0, kRuntime = 1, kUsage = 2, kInfeasible = 3 };

struct CommonArgs {
    std::string model;
    std::string format = "auto";
    std::string scenario;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> chains;
    std::optional<int> samples;
    std::optional<int> thin;
    std::optional<double> sigma_v;
    std::optional<double> sigma_xdot;
    std::optional<double> fraction;
    double fba_sd = kFbaModeRelativeSd;
    int threads = 1;
    int bins = 30;
};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ModelFormat parse_format(const std::string& name, const fs::path& path) {
    if (name == "auto") return format_from_path(path);
    if (name == "bigg_json" || name == "json") return ModelFormat::bigg_json;
    if (name == "tsv") return ModelFormat::tsv;
    throw InputError("unknown model format '" + name + "' (expected bigg_json, tsv or auto)");
}

StoichiometricModel load(const CommonArgs& a) {
    if (a.model.empty()) throw InputError("--model is required");
    if (!fs::exists(a.model)) throw InputError("model file '" + a.model + "' does not exist");
    auto model = load_model(a.model, parse_format(a.format, a.model));
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
    return model;
}

/// Scenario file (if any), then command-line overrides.
Scenario resolve_scenario(const CommonArgs& a, const StoichiometricModel& model) {
    Scenario s = a.scenario.empty() ? default_scenario(model) : load_scenario(a.scenario, model);
    if (a.seed) s.rng_seed = *a.seed;
    if (a.chains) s.chains = *a.chains;
    if (a.samples) s.samples_per_chain = *a.samples;
    if (a.thin) s.thinning = *a.thin;
    if (a.sigma_v) s.prior_flux_sd.setConstant(*a.sigma_v);
    if (a.sigma_xdot) s.steadystate_sd.setConstant(*a.sigma_xdot);
    validate_scenario(s, model);
    return s;
}

void prepare_out_dir(const std::string& out) {
    if (out.empty()) throw InputError("--out is required");
    fs::create_directories(out);
}

nlohmann::json scenario_json(const Scenario& s, const StoichiometricModel& model) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : s.observations) {
        nlohmann::json j{{"reaction", model.reaction_ids[static_cast<std::size_t>(o.reaction)]}};
        if (o.kind == ObservationKind::gaussian) {
            j["kind"] = "gaussian";
            j["mean"] = o.mean;
            j["sd"] = o.sd;
        } else {
            j["kind"] = "range";
            j["low"] = o.low;
            j["high"] = o.high;
        }
        obs.push_back(j);
    }
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : s.bound_overrides)
        bounds.push_back({{"reaction", model.reaction_ids[static_cast<std::size_t>(b.reaction)]},
                          {"lower", detail::format_real(b.lower)},
                          {"upper", detail::format_real(b.upper)}});
    return {{"prior_mean_policy", s.prior_mean_policy == PriorMeanPolicy::zero ? "zero" : "clamped"},
            {"prior_mean", vec(s.prior_mean)},
            {"sigma_v", vec(s.prior_flux_sd)},
            {"xdot_mean", vec(s.steadystate_mean)},
            {"sigma_xdot", vec(s.steadystate_sd)},
            {"observations", obs},
            {"bounds", bounds},
            {"chains", s.chains},
            {"samples", s.samples_per_chain},
            {"thin", s.thinning},
            {"burn_in", s.burn_in},
            {"scan", s.random_scan ? "random" : "fixed"},
            {"seed", s.rng_seed},
            {"jitter", s.jitter},
            {"sd_floor", s.sd_floor}};
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

int cmd_sample(const CommonArgs& a, const std::vector<std::string>& argv) {
    const auto t0 = std::chrono::steady_clock::now();
    if (a.out.empty()) throw InputError("--out is required");
    const auto model = load(a);
    Scenario s = resolve_scenario(a, model);
    if (a.fraction) s = with_fba_mode(model, s, *a.fraction, a.fba_sd);
    if (a.bins < 1) throw InputError("--bins must be positive");

    const auto t_build = std::chrono::steady_clock::now();
    const auto post = build_posterior(model, s);
    const double build_seconds = seconds_since(t_build);
    const auto t_sample = std::chrono::steady_clock::now();
    const auto samples = run_gibbs(post, s, model.reaction_ids, a.threads);
    const double sample_seconds = seconds_since(t_sample);
    const auto report = diagnose(samples);
    const auto summary = summarize(samples, a.bins);

    prepare_out_dir(a.out);
    const fs::path out = a.out;
    write_samples(samples, out / "samples.tsv");
    write_report(report, out / "diagnostics.tsv");
    write_neff_curve(neff_curve(report), out / "neff_curve.tsv");
    write_summary(summary, out / "summary.tsv");

    nlohmann::json manifest{
        {"tool", "bayesflux"},
        {"version", BAYESFLUX_VERSION},
        {"command", "sample"},
        {"argv", argv},
        {"model", {{"path", a.model}, {"fnv1a64", hex(fnv1a(detail::read_file(a.model)))},
                   {"reactions", model.n_reactions()}, {"metabolites", model.n_metabolites()}}},
        {"scenario_file", a.scenario},
        {"fba_mode", a.fraction ? nlohmann::json{{"fraction", *a.fraction}, {"relative_sd", a.fba_sd}} : nlohmann::json()},
        {"resolved", scenario_json(s, model)},
        {"seed", s.rng_seed},
        {"threads", a.threads},
        {"timing_seconds", {{"posterior", build_seconds}, {"sampling", sample_seconds}, {"total", seconds_since(t0)}}},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"rows", samples.n_draws()},
        {"diagnostics", report.summary_line()}};
    write_json(manifest, out / "manifest.json");

    std::cout << "samples: " << samples.n_draws() << " rows x " << samples.n_fluxes() << " fluxes in " << sample_seconds
              << " s\n"
              << "diagnostics: " << report.summary_line() << '\n';
    return kOk;
}

void write_flux_table(const StoichiometricModel& model, const Vector& v, std::ostream& out) {
    out << "reaction\tflux\n";
    for (Index i = 0; i < v.size(); ++i) out << model.reaction_ids[static_cast<std::size_t>(i)] << '\t' << detail::format_real(v[i]) << '\n';
}

void write_flux_table(const StoichiometricModel& model, const Vector& v, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_flux_table(model, v, out);
}

int cmd_fba(const CommonArgs& a) {
    const auto model = load(a);
    const Scenario s = resolve_scenario(a, model);
    const auto bounded = apply_bound_overrides(model, s);
    const auto res = fba(bounded);
    std::cout << "objective " << model.reaction_ids[static_cast<std::size_t>(*model.objective_index)] << '\n'
              << "growth " << res.objective << '\n';
    if (!a.out.empty()) {
        prepare_out_dir(a.out);
        write_flux_table(model, res.flux, fs::path(a.out) / "fba.tsv");
    }
    return kOk;
}

int cmd_fva(const CommonArgs& a) {
    const auto model = load(a);
    const Scenario s = resolve_scenario(a, model);
    const double fraction = a.fraction.value_or(1.0);
    const auto res = fva(apply_bound_overrides(model, s), fraction, a.threads);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!a.out.empty()) {
        prepare_out_dir(a.out);
        file.open(fs::path(a.out) / "fva.tsv");
        if (!file) throw InputError("cannot write fva.tsv");
        os = &file;
    }
    *os << "reaction\tmin\tmax\n";
    for (Index i = 0; i < model.n_reactions(); ++i)
        *os << model.reaction_ids[static_cast<std::size_t>(i)] << '\t' << detail::format_real(res.min_flux[i]) << '\t'
            << detail::format_real(res.max_flux[i]) << '\n';
    return kOk;
}

int cmd_mfa(const CommonArgs& a) {
    const auto model = load(a);
    const Scenario s = resolve_scenario(a, model);
    const auto v = mfa_taxicab(apply_bound_overrides(model, s), s.observations);
    std::cout << "l1_norm " << v.cwiseAbs().sum() << '\n';
    if (!a.out.empty()) {
        prepare_out_dir(a.out);
        write_flux_table(model, v, fs::path(a.out) / "mfa.tsv");
    } else {
        write_flux_table(model, v, std::cout);
    }
    return kOk;
}

std::vector<std::pair<Index, Index>> parse_pairs(const std::vector<std::string>& specs, const FluxSampleSet& set) {
    std::vector<std::pair<Index, Index>> pairs;
    for (const auto& spec : specs)
        for (const auto& item : detail::split(spec, ';')) {
            if (detail::trim(item).empty()) continue;
            const auto ids = detail::split(item, ',');
            if (ids.size() != 2) throw InputError("--pairs expects A,B items, got '" + item + "'");
            pairs.emplace_back(set.require_reaction(detail::trim(ids[0])), set.require_reaction(detail::trim(ids[1])));
        }
    return pairs;
}

int cmd_couplings(const std::string& samples_path, const std::vector<std::string>& pair_specs,
                  std::optional<std::size_t> top_k, bool scatter, const std::string& out) {
    if (samples_path.empty()) throw InputError("--samples is required");
    const auto set = read_samples(samples_path);
    std::vector<CouplingRecord> rows;
    if (!pair_specs.empty()) rows = couplings(set, parse_pairs(pair_specs, set));
    else if (top_k) rows = couplings_top_k(set, *top_k);
    else rows = couplings_all(set);

    if (!out.empty()) {
        prepare_out_dir(out);
        write_couplings(rows, fs::path(out) / "couplings.tsv");
        if (scatter)
            for (const auto& r : rows) write_scatter(set, r.first_index, r.second_index, out);
    }
    if (out.empty() || rows.size() <= 50) write_couplings(rows, std::cout);
    return kOk;
}

int cmd_diag(const std::string& samples_path, const std::string& baseline, const std::string& out) {
    if (samples_path.empty()) throw InputError("--samples is required");
    const auto set = read_samples(samples_path);
    std::optional<FluxSampleSet> base;
    if (!baseline.empty()) base = read_samples(baseline);
    const auto report = diagnose(set);
    std::cout << report.summary_line() << '\n';
    if (base) std::cout << "median sd ratio " << median_ratio(sd_reduction(*base, set)) << '\n';
    if (!out.empty()) {
        prepare_out_dir(out);
        write_report(report, fs::path(out) / "diagnostics.tsv");
        write_neff_curve(neff_curve(report), fs::path(out) / "neff_curve.tsv");
        if (base) write_sd_reduction(sd_reduction(*base, set), fs::path(out) / "sd_reduction.tsv");
    }
    return kOk;
}

void add_model_options(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--model", a.model, "Model file (BiGG-style JSON or TSV)")->required();
    cmd->add_option("--format", a.format, "Model format: bigg_json, tsv or auto")->capture_default_str();
    cmd->add_option("--scenario", a.scenario, "Scenario file");
    cmd->add_option("--out", a.out, "Output directory");
    cmd->add_option("--seed", a.seed, "RNG seed");
    cmd->add_option("--sigma-v", a.sigma_v, "Prior flux sd for every reaction")->check(CLI::PositiveNumber);
    cmd->add_option("--sigma-xdot", a.sigma_xdot, "Steady-state sd for every metabolite")->check(CLI::PositiveNumber);
    cmd->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian flux estimation for constraint-based metabolic models"};
    app.set_version_flag("--version", BAYESFLUX_VERSION);
    app.require_subcommand(1);

    CommonArgs a;
    auto* sample = app.add_subcommand("sample", "Sample the flux posterior");
    add_model_options(sample, a);
    sample->add_option("--chains", a.chains, "Number of chains")->check(CLI::PositiveNumber);
    sample->add_option("--samples", a.samples, "Samples per chain")->check(CLI::PositiveNumber);
    sample->add_option("--thin", a.thin, "Thinning interval")->check(CLI::PositiveNumber);
    sample->add_option("--fraction", a.fraction, "FBA mode: observe the objective at this fraction of its optimum")
        ->check(CLI::Range(0.0, 1.0));
    sample->add_option("--fba-sd", a.fba_sd, "FBA mode: observation sd relative to the target")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sample->add_option("--bins", a.bins, "Histogram bins in summary.tsv")->check(CLI::PositiveNumber)->capture_default_str();

    auto* fba_cmd = app.add_subcommand("fba", "Flux balance analysis");
    add_model_options(fba_cmd, a);

    auto* fva_cmd = app.add_subcommand("fva", "Flux variability analysis");
    add_model_options(fva_cmd, a);
    fva_cmd->add_option("--fraction", a.fraction, "Objective fraction of the optimum (default 1)")->check(CLI::Range(0.0, 1.0));

    auto* mfa_cmd = app.add_subcommand("mfa", "Taxicab (L1) metabolic flux analysis");
    add_model_options(mfa_cmd, a);

    std::string samples_path, baseline, out;
    std::vector<std::string> pairs;
    std::optional<std::size_t> top_k;
    bool scatter = false;
    auto* coup = app.add_subcommand("couplings", "Pairwise flux covariances and correlations");
    coup->add_option("--samples", samples_path, "Sample file written by 'sample'")->required();
    coup->add_option("--pairs", pairs, "Reaction pairs A,B (repeatable, or ';'-separated)");
    coup->add_option("--top-k", top_k, "Keep the k pairs with largest |correlation|");
    coup->add_flag("--scatter", scatter, "Write a two-column draw file per pair");
    coup->add_option("--out", out, "Output directory");
    coup->add_option("--seed", a.seed, "Accepted for uniformity; unused");

    auto* diag = app.add_subcommand("diag", "Convergence diagnostics of a sample file");
    diag->add_option("--samples", samples_path, "Sample file written by 'sample'")->required();
    diag->add_option("--baseline", baseline, "Second sample file; writes the sd reduction relative to it");
    diag->add_option("--out", out, "Output directory");
    diag->add_option("--seed", a.seed, "Accepted for uniformity; unused");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    const std::vector<std::string> args(argv, argv + argc);
    try {
        if (*sample) return cmd_sample(a, args);
        if (*fba_cmd) return cmd_fba(a);
        if (*fva_cmd) return cmd_fva(a);
        if (*mfa_cmd) return cmd_mfa(a);
        if (*coup) return cmd_couplings(samples_path, pairs, top_k, scatter, out);
        if (*diag) return cmd_diag(samples_path, baseline, out);
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kInfeasible;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
