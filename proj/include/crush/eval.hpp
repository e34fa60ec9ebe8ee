#pragma once
// Small evaluation toolbox: empirical moments, diagonal-Gaussian Wasserstein-2,
// central-difference gradients, and the affine log-SNR diagnostic g^2 = a sigma^2.

#include <functional>
#include <string>

#include "crush/common.hpp"
#include "crush/schedule.hpp"

namespace crush {

struct Moments {
    Vec mean;
    Vec var;  // unbiased
};

inline Moments empirical_moments(const std::vector<Vec>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("empirical_moments: need at least 2 samples");
    const std::size_t d = samples.front().size();
    Moments mo{Vec(d, 0.0), Vec(d, 0.0)};
    for (const auto& s : samples) {
        if (s.size() != d) throw std::invalid_argument("empirical_moments: ragged samples");
        for (std::size_t i = 0; i < d; ++i) mo.mean[i] += s[i];
    }
    for (auto& v : mo.mean) v /= static_cast<double>(samples.size());
    for (const auto& s : samples)
        for (std::size_t i = 0; i < d; ++i) {
            const double dlt = s[i] - mo.mean[i];
            mo.var[i] += dlt * dlt;
        }
    for (auto& v : mo.var) v /= static_cast<double>(samples.size() - 1);
    return mo;
}

// W2 between diagonal Gaussians: sqrt(||mu1-mu2||^2 + sum_i (sqrt v1_i - sqrt v2_i)^2).
inline double w2_gaussian(const Vec& mean1, const Vec& var1, const Vec& mean2, const Vec& var2) {
    if (mean1.size() != mean2.size() || var1.size() != var2.size() || mean1.size() != var1.size())
        throw std::invalid_argument("w2_gaussian: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < mean1.size(); ++i) {
        if (!(var1[i] > 0.0) || !(var2[i] > 0.0))
            throw std::invalid_argument("w2_gaussian: variances must be positive");
        const double dm = mean1[i] - mean2[i];
        const double ds = std::sqrt(var1[i]) - std::sqrt(var2[i]);
        acc += dm * dm + ds * ds;
    }
    return std::sqrt(acc);
}

inline double w2_gaussian(const Moments& a, const Moments& b) {
    return w2_gaussian(a.mean, a.var, b.mean, b.var);
}

inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                            double h = 1e-5) {
    Vec g(x.size());
    Vec xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

struct CheckRecord {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline CheckRecord make_check(const std::string& name, double value, double tolerance) {
    return {name, value, tolerance, value <= tolerance};
}

struct AffineLogSnrReport {
    double max_residual = 0.0;  // max |g^2 - a sigma^2| over the grid
    bool degenerate = false;    // a == 0 collapses g to identically zero
    bool pass = false;
};

// For schedules with affine log-SNR, i.e. sigma^2/m^2 = exp(a t + b), the
// diffusion term must satisfy g^2(t) = a sigma^2(t). Under the VP relation the
// constraint pins the curve to sigma^2(t) = logistic(a t + b), which is what
// gets checked here on a 100-point grid.
inline AffineLogSnrReport check_affine_logsnr(double a, double b) {
    AffineLogSnrReport rep;
    rep.degenerate = a == 0.0;
    const Relation rel = Relation::vp();
    for (int i = 0; i < 100; ++i) {
        const double t = i / 99.0;
        const double z = a * t + b;
        const double sig = 1.0 / (1.0 + std::exp(-z));
        const double sigma = std::sqrt(sig);
        const double dsigma = a * sig * (1.0 - sig) / (2.0 * sigma);
        const Coeffs c = coeffs_from_sigma(rel, sigma, dsigma);
        rep.max_residual = std::max(rep.max_residual, std::abs(c.g * c.g - a * sigma * sigma));
    }
    rep.pass = rep.max_residual < 1e-9;
    return rep;
}

}  // namespace crush
