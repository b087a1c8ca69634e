#pragma once

// End-to-end operations: scenario -> truncated posterior -> samples, and the
// FBA-mode variant that pins the objective flux with a pseudo-observation.

#include <cmath>
#include <optional>

#include "bayesflux/gaussian_core.hpp"
#include "bayesflux/gibbs.hpp"
#include "bayesflux/lp_tools.hpp"
#include "bayesflux/model_io.hpp"

namespace bayesflux {

inline FluxSampleSet sample_posterior(const StoichiometricModel& model, const Scenario& scenario, int threads = 1) {
    validate_scenario(scenario, model);
    const auto post = build_posterior(model, scenario);
    return run_gibbs(post, scenario, model.reaction_ids, threads);
}

inline constexpr double kFbaModeRelativeSd = 1e-3;

/// Gaussian observation of the objective at `fraction` of its FBA optimum,
/// with sd = relative_sd * |target|. A zero target falls back to the
/// scenario's sd floor.
inline Observation fba_mode_observation(const StoichiometricModel& model, double fraction,
                                        double relative_sd = kFbaModeRelativeSd, double sd_floor = kDefaultSdFloor) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("FBA-mode fraction must be in (0, 1]");
    if (!(relative_sd > 0.0)) throw InputError("FBA-mode relative sd must be positive");
    const auto opt = fba(model);
    const double target = fraction * opt.objective;
    const double sd = std::abs(target) > 0.0 ? relative_sd * std::abs(target) : sd_floor;
    return Observation::gaussian(*model.objective_index, target, sd);
}

/// Scenario with the FBA-mode observation appended. The FBA solve sees the
/// scenario's bound overrides.
inline Scenario with_fba_mode(const StoichiometricModel& model, Scenario scenario, double fraction,
                              double relative_sd = kFbaModeRelativeSd) {
    const auto bounded = apply_bound_overrides(model, scenario);
    scenario.observations.push_back(fba_mode_observation(bounded, fraction, relative_sd, scenario.sd_floor));
    return scenario;
}

inline FluxSampleSet run_fba_mode(const StoichiometricModel& model, const Scenario& scenario, double fraction,
                                  double relative_sd = kFbaModeRelativeSd, int threads = 1) {
    return sample_posterior(model, with_fba_mode(model, scenario, fraction, relative_sd), threads);
}

}  // namespace bayesflux
