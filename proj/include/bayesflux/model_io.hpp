#pragma once

// Stoichiometric models and sampling scenarios: in-memory types, loaders for
// BiGG-style JSON and the TSV matrix format, and the scenario config parser.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "bayesflux/common.hpp"

namespace bayesflux {

enum class ModelFormat { bigg_json, tsv };

struct StoichiometricModel {
    std::vector<std::string> metabolite_ids;
    std::vector<std::string> reaction_ids;
    Matrix S;  // metabolites x reactions
    Vector lower_bounds;
    Vector upper_bounds;
    std::optional<Index> objective_index;
    /// Non-fatal findings from ingestion (all-zero rows / columns).
    std::vector<std::string> warnings;

    Index n_reactions() const { return static_cast<Index>(reaction_ids.size()); }
    Index n_metabolites() const { return static_cast<Index>(metabolite_ids.size()); }

    std::optional<Index> find_reaction(std::string_view id) const {
        auto it = std::find(reaction_ids.begin(), reaction_ids.end(), id);
        if (it == reaction_ids.end()) return std::nullopt;
        return static_cast<Index>(it - reaction_ids.begin());
    }

    std::optional<Index> find_metabolite(std::string_view id) const {
        auto it = std::find(metabolite_ids.begin(), metabolite_ids.end(), id);
        if (it == metabolite_ids.end()) return std::nullopt;
        return static_cast<Index>(it - metabolite_ids.begin());
    }

    Index require_reaction(std::string_view id) const {
        if (auto i = find_reaction(id)) return *i;
        throw InputError("unknown reaction '" + std::string(id) + "'");
    }
};

namespace detail {

inline std::string location(const std::filesystem::path& p, std::size_t line) {
    return p.string() + ":" + std::to_string(line) + ": ";
}

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(delim, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

/// Parses a real, accepting inf / -inf / +inf spellings.
inline std::optional<double> parse_real(std::string_view s) {
    std::string t = trim(s);
    std::string lower = t;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "+inf" || lower == "infinity" || lower == "+infinity") return kInf;
    if (lower == "-inf" || lower == "-infinity") return -kInf;
    if (!t.empty() && t.front() == '+') t.erase(0, 1);
    double v = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || t.empty()) return std::nullopt;
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string format_real(double x) {
    if (x == kInf) return "inf";
    if (x == -kInf) return "-inf";
    if (x == 0.0) x = 0.0;  // drop the sign of -0
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Checks the model invariants. Duplicate ids and inverted bounds throw;
/// all-zero rows and columns are appended to `model.warnings`.
inline void validate_model(StoichiometricModel& model, const std::string& origin = {}) {
    const std::string where = origin.empty() ? std::string{} : origin + ": ";
    const Index n = model.n_reactions(), m = model.n_metabolites();
    if (model.S.rows() != m || model.S.cols() != n || model.lower_bounds.size() != n || model.upper_bounds.size() != n)
        throw InputError(where + "inconsistent model dimensions");

    std::unordered_set<std::string> seen;
    for (const auto& id : model.reaction_ids)
        if (!seen.insert(id).second) throw InputError(where + "duplicate reaction id '" + id + "'");
    seen.clear();
    for (const auto& id : model.metabolite_ids)
        if (!seen.insert(id).second) throw InputError(where + "duplicate metabolite id '" + id + "'");

    for (Index i = 0; i < n; ++i) {
        if (std::isnan(model.lower_bounds[i]) || std::isnan(model.upper_bounds[i]))
            throw InputError(where + "NaN bound on reaction '" + model.reaction_ids[i] + "'");
        if (model.lower_bounds[i] > model.upper_bounds[i])
            throw InputError(where + "lower bound exceeds upper bound on reaction '" + model.reaction_ids[i] + "'");
    }
    if (model.objective_index && (*model.objective_index < 0 || *model.objective_index >= n))
        throw InputError(where + "objective index out of range");

    for (Index r = 0; r < m; ++r)
        if ((model.S.row(r).array() == 0.0).all())
            model.warnings.push_back("metabolite '" + model.metabolite_ids[r] + "' takes part in no reaction");
    for (Index c = 0; c < n; ++c)
        if ((model.S.col(c).array() == 0.0).all())
            model.warnings.push_back("reaction '" + model.reaction_ids[c] + "' has no metabolites");
}

inline double json_bound(const nlohmann::json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        if (auto x = detail::parse_real(v.get<std::string>())) return *x;
    }
    throw InputError(where + "bound is not a number");
}

/// Reads a BiGG / COBRA-style JSON model. Each reaction record contributes one
/// column of S taken from its `metabolites` coefficient map.
inline StoichiometricModel load_bigg_json(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ": JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("reactions") || !doc["reactions"].is_array())
        throw InputError(path.string() + ": missing 'reactions' array");

    StoichiometricModel model;
    std::unordered_map<std::string, Index> met_index;
    auto add_metabolite = [&](const std::string& id, const std::string& where) {
        if (!met_index.emplace(id, static_cast<Index>(model.metabolite_ids.size())).second)
            throw InputError(where + "duplicate metabolite id '" + id + "'");
        model.metabolite_ids.push_back(id);
    };

    const bool declared_metabolites = doc.contains("metabolites") && doc["metabolites"].is_array();
    if (declared_metabolites) {
        const auto& mets = doc["metabolites"];
        for (std::size_t k = 0; k < mets.size(); ++k) {
            const std::string where = path.string() + ": /metabolites/" + std::to_string(k) + ": ";
            if (!mets[k].contains("id") || !mets[k]["id"].is_string()) throw InputError(where + "missing id");
            add_metabolite(mets[k]["id"].get<std::string>(), where);
        }
    }

    const auto& rxns = doc["reactions"];
    const auto n = static_cast<Index>(rxns.size());
    model.lower_bounds.resize(n);
    model.upper_bounds.resize(n);
    std::vector<std::vector<std::pair<Index, double>>> columns(rxns.size());
    std::unordered_set<std::string> seen;

    for (std::size_t k = 0; k < rxns.size(); ++k) {
        const auto& r = rxns[k];
        const std::string where = path.string() + ": /reactions/" + std::to_string(k) + ": ";
        if (!r.is_object() || !r.contains("id") || !r["id"].is_string()) throw InputError(where + "missing id");
        const auto id = r["id"].get<std::string>();
        if (!seen.insert(id).second) throw InputError(where + "duplicate reaction id '" + id + "'");
        model.reaction_ids.push_back(id);

        if (!r.contains("lower_bound") || !r.contains("upper_bound"))
            throw InputError(where + "reaction '" + id + "' lacks lower_bound/upper_bound");
        const auto i = static_cast<Index>(k);
        model.lower_bounds[i] = json_bound(r["lower_bound"], where);
        model.upper_bounds[i] = json_bound(r["upper_bound"], where);
        if (model.lower_bounds[i] > model.upper_bounds[i])
            throw InputError(where + "lower bound exceeds upper bound on reaction '" + id + "'");

        if (r.contains("objective_coefficient") && r["objective_coefficient"].is_number() &&
            r["objective_coefficient"].get<double>() != 0.0 && !model.objective_index)
            model.objective_index = i;

        if (r.contains("metabolites")) {
            if (!r["metabolites"].is_object()) throw InputError(where + "'metabolites' must be an object");
            for (const auto& [met, coef] : r["metabolites"].items()) {
                if (!coef.is_number()) throw InputError(where + "coefficient of '" + met + "' is not a number");
                auto it = met_index.find(met);
                if (it == met_index.end()) {
                    if (declared_metabolites)
                        throw InputError(where + "reaction '" + id + "' references undeclared metabolite '" + met + "'");
                    add_metabolite(met, where);
                    it = met_index.find(met);
                }
                columns[k].emplace_back(it->second, coef.get<double>());
            }
        }
    }

    model.S = Matrix::Zero(model.n_metabolites(), n);
    for (std::size_t k = 0; k < columns.size(); ++k)
        for (const auto& [row, coef] : columns[k]) model.S(row, static_cast<Index>(k)) = coef;

    validate_model(model, path.string());
    return model;
}

/// Sibling file holding bounds and objective for a TSV model:
/// `net.tsv` -> `net.bounds.tsv`.
inline std::filesystem::path tsv_bounds_path(const std::filesystem::path& matrix_path) {
    auto p = matrix_path;
    p.replace_extension();
    p += ".bounds.tsv";
    return p;
}

/// Reads the TSV matrix format: a header row of reaction ids (the first cell
/// is a label and ignored), then one row per metabolite starting with its id.
/// Bounds and the objective come from the sibling `.bounds.tsv` file, rows of
/// `reaction  lower  upper  [objective]`. Without that file every bound is
/// infinite and no objective is set.
inline StoichiometricModel load_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");

    StoichiometricModel model;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty() || line.front() == '#') continue;
        auto cells = detail::split(line, '\t');
        if (!have_header) {
            have_header = true;
            model.reaction_ids.assign(cells.begin() + 1, cells.end());
            for (const auto& id : model.reaction_ids)
                if (id.empty()) throw InputError(detail::location(path, lineno) + "empty reaction id");
            continue;
        }
        if (cells.size() != model.reaction_ids.size() + 1)
            throw InputError(detail::location(path, lineno) + "expected " + std::to_string(model.reaction_ids.size() + 1) +
                             " cells, found " + std::to_string(cells.size()));
        if (cells[0].empty()) throw InputError(detail::location(path, lineno) + "empty metabolite id");
        model.metabolite_ids.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            auto v = cells[c].empty() ? std::optional<double>(0.0) : detail::parse_real(cells[c]);
            if (!v || !std::isfinite(*v))
                throw InputError(detail::location(path, lineno) + "bad coefficient '" + cells[c] + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw InputError(path.string() + ": empty model file");

    const auto n = model.n_reactions();
    model.S.resize(static_cast<Index>(rows.size()), n);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (Index c = 0; c < n; ++c) model.S(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    model.lower_bounds = Vector::Constant(n, -kInf);
    model.upper_bounds = Vector::Constant(n, kInf);

    std::unordered_map<std::string, Index> rindex;
    for (Index i = 0; i < n; ++i)
        if (!rindex.emplace(model.reaction_ids[static_cast<std::size_t>(i)], i).second)
            throw InputError(path.string() + ": duplicate reaction id '" + model.reaction_ids[static_cast<std::size_t>(i)] + "'");

    const auto bpath = tsv_bounds_path(path);
    if (std::filesystem::exists(bpath)) {
        std::ifstream bin(bpath);
        lineno = 0;
        while (std::getline(bin, line)) {
            ++lineno;
            if (detail::trim(line).empty() || line.front() == '#') continue;
            auto cells = detail::split(line, '\t');
            if (cells[0] == "reaction") continue;
            if (cells.size() < 3 || cells.size() > 4)
                throw InputError(detail::location(bpath, lineno) + "expected reaction, lower, upper [, objective]");
            auto it = rindex.find(cells[0]);
            if (it == rindex.end()) throw InputError(detail::location(bpath, lineno) + "unknown reaction '" + cells[0] + "'");
            auto lb = detail::parse_real(cells[1]);
            auto ub = detail::parse_real(cells[2]);
            if (!lb || !ub) throw InputError(detail::location(bpath, lineno) + "bad bound");
            if (*lb > *ub) throw InputError(detail::location(bpath, lineno) + "lower bound exceeds upper bound on reaction '" + cells[0] + "'");
            model.lower_bounds[it->second] = *lb;
            model.upper_bounds[it->second] = *ub;
            if (cells.size() == 4) {
                auto obj = detail::parse_real(cells[3]);
                if (!obj) throw InputError(detail::location(bpath, lineno) + "bad objective flag");
                if (*obj != 0.0) model.objective_index = it->second;
            }
        }
    }

    validate_model(model, path.string());
    return model;
}

inline StoichiometricModel load_model(const std::filesystem::path& path, ModelFormat format) {
    if (!std::filesystem::exists(path)) throw InputError("model file '" + path.string() + "' does not exist");
    return format == ModelFormat::bigg_json ? load_bigg_json(path) : load_tsv(path);
}

/// Guesses the format from the extension (`.json` vs anything else).
inline ModelFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".json" ? ModelFormat::bigg_json : ModelFormat::tsv;
}

/// Writes `model` in the TSV format plus its sibling bounds file. Values are
/// written in shortest round-trip form so a reload is exact.
inline void write_model_tsv(const StoichiometricModel& model, const std::filesystem::path& path) {
    {
        std::ofstream out(path);
        if (!out) throw InputError("cannot write '" + path.string() + "'");
        out << "metabolite";
        for (const auto& id : model.reaction_ids) out << '\t' << id;
        out << '\n';
        for (Index r = 0; r < model.n_metabolites(); ++r) {
            out << model.metabolite_ids[static_cast<std::size_t>(r)];
            for (Index c = 0; c < model.n_reactions(); ++c) out << '\t' << detail::format_real(model.S(r, c));
            out << '\n';
        }
    }
    std::ofstream out(tsv_bounds_path(path));
    if (!out) throw InputError("cannot write bounds file for '" + path.string() + "'");
    out << "reaction\tlower\tupper\tobjective\n";
    for (Index i = 0; i < model.n_reactions(); ++i)
        out << model.reaction_ids[static_cast<std::size_t>(i)] << '\t' << detail::format_real(model.lower_bounds[i]) << '\t'
            << detail::format_real(model.upper_bounds[i]) << '\t' << (model.objective_index == i ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Observations and scenarios

enum class ObservationKind { gaussian, range };

struct Observation {
    Index reaction = 0;
    ObservationKind kind = ObservationKind::gaussian;
    double mean = 0.0;
    double sd = 1.0;
    double low = 0.0;
    double high = 0.0;

    static Observation gaussian(Index reaction, double mean, double sd) {
        if (!(sd > 0.0)) throw InputError("observation sd must be positive");
        return {reaction, ObservationKind::gaussian, mean, sd, 0.0, 0.0};
    }
    static Observation range(Index reaction, double low, double high) {
        if (!(low <= high)) throw InputError("observation range must satisfy low <= high");
        return {reaction, ObservationKind::range, 0.0, 0.0, low, high};
    }
};

inline constexpr double kDefaultSdFloor = 1e-3;

/// Midpoint mean and quarter-range sd (about 95% of the mass inside the
/// range), never below `sd_floor`. Gaussian observations pass through.
inline Observation range_to_gaussian(const Observation& obs, double sd_floor = kDefaultSdFloor) {
    if (obs.kind == ObservationKind::gaussian) return obs;
    if (!(obs.low <= obs.high)) throw InputError("range observation with low > high");
    return Observation::gaussian(obs.reaction, 0.5 * (obs.low + obs.high), std::max(0.25 * (obs.high - obs.low), sd_floor));
}

enum class PriorMeanPolicy { zero, clamped_to_bounds };

struct BoundOverride {
    Index reaction;
    double lower;
    double upper;
};

struct Scenario {
    PriorMeanPolicy prior_mean_policy = PriorMeanPolicy::clamped_to_bounds;
    Vector prior_mean;         // m_v, materialized from the policy
    Vector prior_flux_sd;      // sigma_v
    Vector steadystate_mean;   // m_xdot
    Vector steadystate_sd;     // sigma_xdot
    std::vector<Observation> observations;
    std::vector<BoundOverride> bound_overrides;
    int chains = 10;
    int samples_per_chain = 500;
    int thinning = 100;
    int burn_in = 0;
    bool random_scan = false;
    std::uint64_t rng_seed = 1;
    double jitter = 1e-8;
    double sd_floor = kDefaultSdFloor;
};

inline constexpr double kDefaultSigmaV = 100.0;
inline constexpr double kDefaultSigmaXdot = 0.01;

/// m_v[i] = 0 when the bounds admit zero, otherwise the bound nearest zero.
inline Vector materialize_prior_mean(const Vector& lb, const Vector& ub, PriorMeanPolicy policy) {
    Vector m = Vector::Zero(lb.size());
    if (policy == PriorMeanPolicy::zero) return m;
    for (Index i = 0; i < lb.size(); ++i) m[i] = std::clamp(0.0, lb[i], ub[i]);
    return m;
}

/// Copy of `model` with the scenario's bound overrides applied.
inline StoichiometricModel apply_bound_overrides(StoichiometricModel model, const Scenario& scenario) {
    for (const auto& o : scenario.bound_overrides) {
        model.lower_bounds[o.reaction] = o.lower;
        model.upper_bounds[o.reaction] = o.upper;
    }
    return model;
}

inline Scenario default_scenario(const StoichiometricModel& model) {
    Scenario s;
    s.prior_flux_sd = Vector::Constant(model.n_reactions(), kDefaultSigmaV);
    s.steadystate_mean = Vector::Zero(model.n_metabolites());
    s.steadystate_sd = Vector::Constant(model.n_metabolites(), kDefaultSigmaXdot);
    s.prior_mean = materialize_prior_mean(model.lower_bounds, model.upper_bounds, s.prior_mean_policy);
    return s;
}

inline void validate_scenario(const Scenario& s, const StoichiometricModel& model) {
    if (s.prior_flux_sd.size() != model.n_reactions() || s.prior_mean.size() != model.n_reactions())
        throw InputError("scenario flux vectors do not match the model's reaction count");
    if (s.steadystate_sd.size() != model.n_metabolites() || s.steadystate_mean.size() != model.n_metabolites())
        throw InputError("scenario metabolite vectors do not match the model's metabolite count");
    if (!(s.prior_flux_sd.array() > 0.0).all()) throw InputError("sigma_v must be strictly positive");
    if (!(s.steadystate_sd.array() > 0.0).all()) throw InputError("sigma_xdot must be strictly positive");
    if (s.chains < 1) throw InputError("chains must be >= 1");
    if (s.samples_per_chain < 1) throw InputError("samples must be >= 1");
    if (s.thinning < 1) throw InputError("thin must be >= 1");
    if (s.burn_in < 0) throw InputError("burn_in must be >= 0");
    if (!(s.jitter > 0.0)) throw InputError("jitter must be positive");
    if (!(s.sd_floor > 0.0)) throw InputError("sd_floor must be positive");
    for (const auto& o : s.observations) {
        if (o.reaction < 0 || o.reaction >= model.n_reactions()) throw InputError("observation index out of range");
        if (o.kind == ObservationKind::gaussian && !(o.sd > 0.0)) throw InputError("observation sd must be positive");
        if (o.kind == ObservationKind::range && !(o.low <= o.high)) throw InputError("observation range low > high");
    }
}

/// Parses scenario text. Grammar (one item per line, `#` starts a comment):
///
///     key = value                 global settings, see below
///     [observations]              reaction gaussian MEAN SD | reaction range LOW HIGH
///     [sigma_v]                   reaction SD
///     [sigma_xdot]                metabolite SD
///     [xdot_mean]                 metabolite VALUE
///     [bounds]                    reaction LOWER UPPER
///
/// Keys: sigma_v, sigma_xdot, xdot_mean, prior_mean (zero | clamped), chains,
/// samples, thin, burn_in, scan (fixed | random), seed, jitter, sd_floor.
inline Scenario parse_scenario(std::string_view text, const StoichiometricModel& model, const std::string& origin = "<scenario>") {
    Scenario s = default_scenario(model);
    std::vector<std::pair<Index, double>> sigma_v_rows, sigma_x_rows, xmean_rows;
    std::optional<double> sigma_v, sigma_x, xmean;

    std::istringstream in{std::string(text)};
    std::string raw, section;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) -> InputError {
        return InputError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    auto number = [&](const std::string& tok) {
        auto v = detail::parse_real(tok);
        if (!v) throw fail("expected a number, got '" + tok + "'");
        return *v;
    };
    auto integer = [&](const std::string& tok) {
        long long v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw fail("expected an integer, got '" + tok + "'");
        return v;
    };
    auto reaction = [&](const std::string& id) {
        if (auto i = model.find_reaction(id)) return *i;
        throw fail("unknown reaction '" + id + "'");
    };
    auto metabolite = [&](const std::string& id) {
        if (auto i = model.find_metabolite(id)) return *i;
        throw fail("unknown metabolite '" + id + "'");
    };

    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = detail::trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw fail("unterminated section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (section != "observations" && section != "sigma_v" && section != "sigma_xdot" && section != "xdot_mean" &&
                section != "bounds")
                throw fail("unknown section [" + section + "]");
            continue;
        }
        if (section.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw fail("expected key = value");
            const std::string key = detail::trim(std::string_view(line).substr(0, eq));
            const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
            if (key == "sigma_v") sigma_v = number(value);
            else if (key == "sigma_xdot") sigma_x = number(value);
            else if (key == "xdot_mean") xmean = number(value);
            else if (key == "prior_mean") {
                if (value == "zero") s.prior_mean_policy = PriorMeanPolicy::zero;
                else if (value == "clamped" || value == "clamped_to_bounds") s.prior_mean_policy = PriorMeanPolicy::clamped_to_bounds;
                else throw fail("prior_mean must be 'zero' or 'clamped'");
            } else if (key == "chains") s.chains = static_cast<int>(integer(value));
            else if (key == "samples") s.samples_per_chain = static_cast<int>(integer(value));
            else if (key == "thin") s.thinning = static_cast<int>(integer(value));
            else if (key == "burn_in") s.burn_in = static_cast<int>(integer(value));
            else if (key == "seed") s.rng_seed = static_cast<std::uint64_t>(integer(value));
            else if (key == "jitter") s.jitter = number(value);
            else if (key == "sd_floor") s.sd_floor = number(value);
            else if (key == "scan") {
                if (value == "fixed") s.random_scan = false;
                else if (value == "random") s.random_scan = true;
                else throw fail("scan must be 'fixed' or 'random'");
            } else throw fail("unknown key '" + key + "'");
            continue;
        }

        const auto tok = detail::split_ws(line);
        if (section == "observations") {
            if (tok.size() != 4) throw fail("expected: reaction gaussian MEAN SD | reaction range LOW HIGH");
            const Index r = reaction(tok[0]);
            const double x = number(tok[2]), y = number(tok[3]);
            if (tok[1] == "gaussian") {
                if (!(y > 0.0)) throw fail("observation sd must be positive");
                s.observations.push_back(Observation::gaussian(r, x, y));
            } else if (tok[1] == "range") {
                if (!(x <= y)) throw fail("range observation needs low <= high");
                s.observations.push_back(Observation::range(r, x, y));
            } else {
                throw fail("observation kind must be 'gaussian' or 'range'");
            }
        } else if (section == "bounds") {
            if (tok.size() != 3) throw fail("expected: reaction LOWER UPPER");
            const double lo = number(tok[1]), hi = number(tok[2]);
            if (lo > hi) throw fail("lower bound exceeds upper bound");
            s.bound_overrides.push_back({reaction(tok[0]), lo, hi});
        } else {
            if (tok.size() != 2) throw fail("expected: id VALUE");
            const double v = number(tok[1]);
            if (section == "sigma_v") sigma_v_rows.emplace_back(reaction(tok[0]), v);
            else if (section == "sigma_xdot") sigma_x_rows.emplace_back(metabolite(tok[0]), v);
            else xmean_rows.emplace_back(metabolite(tok[0]), v);
        }
    }

    if (sigma_v) s.prior_flux_sd.setConstant(*sigma_v);
    if (sigma_x) s.steadystate_sd.setConstant(*sigma_x);
    if (xmean) s.steadystate_mean.setConstant(*xmean);
    for (auto [i, v] : sigma_v_rows) s.prior_flux_sd[i] = v;
    for (auto [i, v] : sigma_x_rows) s.steadystate_sd[i] = v;
    for (auto [i, v] : xmean_rows) s.steadystate_mean[i] = v;

    const auto effective = apply_bound_overrides(model, s);
    s.prior_mean = materialize_prior_mean(effective.lower_bounds, effective.upper_bounds, s.prior_mean_policy);
    try {
        validate_scenario(s, model);
    } catch (const InputError& e) {
        throw InputError(origin + ": " + e.what());
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path, const StoichiometricModel& model) {
    return parse_scenario(detail::read_file(path), model, path.string());
}

}  // namespace bayesflux
