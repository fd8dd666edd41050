// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace kvsim::testing {

inline double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) {
        ss += (v - m) * (v - m);
    }
    return ss / static_cast<double>(x.size() - 1);
}

/// P(X >= successes) for X ~ Binomial(trials, 1/2): the one-sided sign-test p-value.
inline double sign_test_p(std::size_t successes, std::size_t trials) {
    double p = 0.0;
    for (std::size_t k = successes; k <= trials; ++k) {
        p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                      static_cast<double>(trials) * std::log(2.0));
    }
    return std::min(p, 1.0);
}

/// Asymptotic Kolmogorov-Smirnov p-value of the sample against Uniform(0, 1).
inline double ks_uniform_p(std::vector<double> sample) {
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - sample[i], sample[i] - static_cast<double>(i) / n});
    }
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int j = 1; j <= 100; ++j) {
        p += 2.0 * ((j % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;

    double lower95() const {
        return slope - 1.96 * stderr_slope;
    }
    double upper95() const {
        return slope + 1.96 * stderr_slope;
    }
};

/// Ordinary least squares y = a + b x with the usual standard error of b.
inline SlopeFit ols(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        sse += r * r;
    }
    fit.stderr_slope = std::sqrt(sse / static_cast<double>(x.size() - 2) / sxx);
    return fit;
}

}  // namespace kvsim::testing
