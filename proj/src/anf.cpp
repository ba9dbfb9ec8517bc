#include "sirentrack/anf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sirentrack/errors.hpp"

namespace sirentrack {

void AnfConfig::validate() const {
    if (!(rho > 0.0) || !(rho < 1.0)) {
        throw ConfigError("anf: pole radius rho must lie in (0, 1), got " +
                          std::to_string(rho));
    }
    if (!(sigma_e > 0.0) || !std::isfinite(sigma_e)) {
        throw ConfigError("anf: sigma_e must be positive and finite");
    }
    if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) {
        throw ConfigError("anf: sigma_w must be positive and finite");
    }
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
        throw ConfigError("anf: sample rate must be positive and finite");
    }
}

AnfState anf_init(const AnfConfig& config) {
    config.validate();
    return AnfState{};
}

AnfStepOutput anf_step(AnfState& state, double y, const AnfConfig& config) {
    if (!std::isfinite(y)) {
        throw NumericalInputError("anf: non-finite input sample");
    }

    const double s1 = state.s_prev1;
    const double s2 = state.s_prev2;

    const double p_pred = state.p_hat + config.sigma_w;
    const double s = y + config.rho * state.a_hat * s1 - config.rho * config.rho * s2;
    const double denom = s1 * s1 + config.sigma_e / p_pred;
    const double k = s1 / denom;
    const double e = s - state.a_hat * s1 + s2;

    state.a_hat += k * e;
    state.p_hat = (1.0 - s1 * s1 / denom) * p_pred;
    if (std::abs(state.a_hat) > 2.0) {
        state.a_hat = std::copysign(2.0, state.a_hat);
    }

    // The clamp above keeps a_hat/2 inside [-1, 1]; the extra clamp makes a
    // +-1 ulp excursion harmless before acos.
    const double c = std::clamp(state.a_hat / 2.0, -1.0, 1.0);
    const double f_hat =
        config.sample_rate_hz / (2.0 * std::numbers::pi) * std::acos(c);

    state.s_prev2 = s1;
    state.s_prev1 = s;

    return AnfStepOutput{f_hat, e, s};
}

std::vector<AnfStepOutput> track_buffer(std::span<const double> samples,
                                        const AnfConfig& config) {
    if (samples.size() < 3) {
        throw InputSizeError("anf: need at least 3 samples, got " +
                             std::to_string(samples.size()));
    }
    AnfState state = anf_init(config);
    std::vector<AnfStepOutput> out;
    out.reserve(samples.size() - 2);
    // y(0) and y(1) only back the zero-initialized delay line; the recursion
    // starts at n = 2.
    for (std::size_t n = 2; n < samples.size(); ++n) {
        out.push_back(anf_step(state, samples[n], config));
    }
    return out;
}

}  // namespace sirentrack
