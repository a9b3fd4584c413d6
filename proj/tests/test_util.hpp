#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace testutil {

// Wilson-Hilferty approximation of the chi-square quantile.
inline double chi2_quantile(int df, double prob) {
    // z-quantiles for the probabilities used in tests
    double z;
    if (prob >= 0.9995) z = 3.290527;
    else if (prob >= 0.999) z = 3.090232;
    else if (prob >= 0.99) z = 2.326348;
    else z = 1.959964;
    const double d = static_cast<double>(df);
    const double t = 1.0 - 2.0 / (9.0 * d) + z * std::sqrt(2.0 / (9.0 * d));
    return d * t * t * t;
}

struct OlsFit {
    double slope{}, intercept{};
    double slope_se{}, intercept_se{};
};

// Ordinary least squares of y on x with homoskedastic standard errors.
inline OlsFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    OlsFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += r * r;
    }
    const double s2 = rss / (n - 2);
    fit.slope_se = std::sqrt(s2 / sxx);
    fit.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    return fit;
}

} // namespace testutil
