#pragma once

#include <span>
#include <vector>

namespace sirentrack {

// Single-parameter adaptive notch filter with a scalar Kalman update of the
// filter coefficient a = 2*cos(2*pi*f/fs). Tracks the dominant sinusoidal
// component of a stream sample by sample.

struct AnfConfig {
    double rho = 0.99;               // pole radius, in (0, 1)
    double sigma_e = 0.66;           // residual variance
    double sigma_w = 1e-5;           // process-noise variance
    double sample_rate_hz = 16000.0;

    // Throws ConfigError when any invariant is violated. sigma_w > 0 also
    // keeps the predicted covariance strictly positive, so the Kalman gain
    // denominator never needs a runtime guard.
    void validate() const;
};

struct AnfState {
    double s_prev1 = 0.0;  // delay line s(n-1)
    double s_prev2 = 0.0;  // delay line s(n-2)
    double a_hat = 0.0;    // filter parameter, |a_hat| <= 2 after every step
    double p_hat = 0.0;    // prediction-error covariance, >= 0
};

struct AnfStepOutput {
    double f_hat;  // tracked frequency in [0, fs/2]
    double e;      // notch residual
    double s;      // delay-line sample s(n)
};

// All-zero state; validates the config.
AnfState anf_init(const AnfConfig& config);

// One recursion step. Updates the state in place and returns the step
// output; throws NumericalInputError for a non-finite sample.
AnfStepOutput anf_step(AnfState& state, double y, const AnfConfig& config);

// Runs the recursion over a buffer from a fresh state. The first two
// samples only seed the (zero) delay line and produce no output, so the
// result has samples.size() - 2 entries. Throws InputSizeError when fewer
// than 3 samples are given.
std::vector<AnfStepOutput> track_buffer(std::span<const double> samples,
                                        const AnfConfig& config);

}  // namespace sirentrack
