#pragma once
// Diagonal-covariance Gaussian mixtures with class labels. These serve as
// analytically tractable data distributions: the noisy marginal under the
// perturbation kernel stays a mixture, so scores, eps-targets and class
// posteriors all have closed forms to test samplers and networks against.
//
// All responsibility computations run through log-space with max-subtraction.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>

#include "crush/common.hpp"
#include "crush/kernel.hpp"
#include "crush/rng.hpp"
#include "crush/schedule.hpp"

namespace crush {

struct MixtureComponent {
    double weight = 1.0;
    Vec mean;
    Vec var;  // per-coordinate variances
    int label = 0;
};

struct GaussianMixture {
    std::vector<MixtureComponent> comps;

    std::size_t dim() const { return comps.empty() ? 0 : comps.front().mean.size(); }

    int num_classes() const {
        int hi = -1;
        for (const auto& c : comps) hi = std::max(hi, c.label);
        return hi + 1;
    }

    void check() const {
        if (comps.empty()) throw std::invalid_argument("GaussianMixture: no components");
        double wsum = 0.0;
        const std::size_t d = dim();
        for (const auto& c : comps) {
            if (c.mean.size() != d || c.var.size() != d)
                throw std::invalid_argument("GaussianMixture: inconsistent dimensions");
            if (!(c.weight > 0.0)) throw std::invalid_argument("GaussianMixture: weights must be positive");
            if (c.label < 0) throw std::invalid_argument("GaussianMixture: labels must be >= 0");
            for (double v : c.var)
                if (!(v > 0.0)) throw std::invalid_argument("GaussianMixture: variances must be positive");
            wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw std::invalid_argument("GaussianMixture: weights must sum to 1 within 1e-12");
    }
};

inline GaussianMixture standard_normal_gm(std::size_t d) {
    GaussianMixture gm;
    gm.comps.push_back({1.0, Vec(d, 0.0), Vec(d, 1.0), 0});
    return gm;
}

// Marginal of x_t = m x_0 + sigma eps when x_0 ~ gm: means scale by m and
// variances become m^2 v + sigma^2 per coordinate.
inline GaussianMixture marginal_mixture(const GaussianMixture& gm, double m, double sigma) {
    GaussianMixture out = gm;
    for (auto& c : out.comps) {
        for (auto& mu : c.mean) mu *= m;
        for (auto& v : c.var) v = m * m * v + sigma * sigma;
    }
    return out;
}

inline GaussianMixture marginal_at(const GaussianMixture& gm, const Schedule& sched, double t) {
    if (!(t >= 0.0 && t <= sched.T)) throw std::domain_error("marginal_at: t outside [0, T]");
    const double sg = sched.sigma(t);
    return marginal_mixture(gm, sched.relation.m_of(sg), sg);
}

namespace detail {

inline double log_gaussian(const Vec& x, const MixtureComponent& c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - c.mean[i];
        acc += d * d / c.var[i] + std::log(2.0 * M_PI * c.var[i]);
    }
    return -0.5 * acc;
}

// log weights + log densities for each component, plus their log-sum-exp.
inline std::pair<Vec, double> component_logs(const GaussianMixture& gm, const Vec& x) {
    Vec lw(gm.comps.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < gm.comps.size(); ++k) {
        lw[k] = std::log(gm.comps[k].weight) + log_gaussian(x, gm.comps[k]);
        mx = std::max(mx, lw[k]);
    }
    double se = 0.0;
    for (double v : lw) se += std::exp(v - mx);
    return {std::move(lw), mx + std::log(se)};
}

}  // namespace detail

inline double log_density(const GaussianMixture& gm, const Vec& x) {
    return detail::component_logs(gm, x).second;
}

// grad_x log p(x) = sum_k r_k(x) (mu_k - x) / v_k with responsibilities r_k.
inline Vec score(const GaussianMixture& gm, const Vec& x) {
    const auto [lw, lse] = detail::component_logs(gm, x);
    Vec g(x.size(), 0.0);
    for (std::size_t k = 0; k < gm.comps.size(); ++k) {
        const double r = std::exp(lw[k] - lse);
        const auto& c = gm.comps[k];
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += r * (c.mean[i] - x[i]) / c.var[i];
    }
    return g;
}

// eps-parameterization of the noisy score at a raw (m, sigma) point:
// eps = -sigma * grad log p_t(x). sigma == 0 is the zero vector by that limit.
inline Vec eps_at(const GaussianMixture& gm, const Vec& x, double m, double sigma) {
    if (x.size() != gm.dim()) throw std::invalid_argument("eps_at: dimension mismatch");
    if (sigma == 0.0) return Vec(x.size(), 0.0);
    const GaussianMixture noisy = marginal_mixture(gm, m, sigma);
    Vec e = score(noisy, x);
    for (auto& v : e) v *= -sigma;
    return e;
}

inline Vec eps_oracle(const GaussianMixture& gm, const Vec& x, const Schedule& sched, double t) {
    if (!(t >= 0.0 && t <= sched.T)) throw std::domain_error("eps_oracle: t outside [0, T]");
    const double sg = sched.sigma(t);
    return eps_at(gm, x, sched.relation.m_of(sg), sg);
}

// Posterior over class labels, aggregating component responsibilities.
inline Vec class_posterior(const GaussianMixture& gm, const Vec& x) {
    const auto [lw, lse] = detail::component_logs(gm, x);
    Vec post(static_cast<std::size_t>(gm.num_classes()), 0.0);
    for (std::size_t k = 0; k < gm.comps.size(); ++k)
        post[static_cast<std::size_t>(gm.comps[k].label)] += std::exp(lw[k] - lse);
    return post;
}

// grad_x log p(y | x) = (class-conditional score) - (marginal score).
inline Vec class_posterior_grad(const GaussianMixture& gm, const Vec& x, int label) {
    GaussianMixture cls;
    for (const auto& c : gm.comps)
        if (c.label == label) cls.comps.push_back(c);
    if (cls.comps.empty()) throw std::invalid_argument("class_posterior_grad: no such label");
    // weights need not be renormalized: constants drop out of the gradient
    Vec g = score(cls, x);
    const Vec marg = score(gm, x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= marg[i];
    return g;
}

// Draw order per sample: one component index, then dim gaussians.
inline std::pair<std::vector<Vec>, std::vector<int>> sample_labeled(const GaussianMixture& gm,
                                                                   std::size_t n, Rng& rng) {
    std::vector<Vec> xs;
    std::vector<int> ys;
    xs.reserve(n);
    ys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform(0.0, 1.0);
        double acc = 0.0;
        std::size_t pick = gm.comps.size() - 1;
        for (std::size_t k = 0; k < gm.comps.size(); ++k) {
            acc += gm.comps[k].weight;
            if (u < acc) { pick = k; break; }
        }
        const auto& c = gm.comps[pick];
        Vec x(gm.dim());
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = c.mean[j] + std::sqrt(c.var[j]) * rng.gaussian();
        xs.push_back(std::move(x));
        ys.push_back(c.label);
    }
    return {std::move(xs), std::move(ys)};
}

inline std::vector<Vec> sample_data(const GaussianMixture& gm, std::size_t n, Rng& rng) {
    return sample_labeled(gm, n, rng).first;
}

// Exact per-coordinate mean and variance of the mixture law.
inline std::pair<Vec, Vec> mixture_moments(const GaussianMixture& gm) {
    gm.check();
    const std::size_t d = gm.dim();
    Vec mean(d, 0.0), second(d, 0.0);
    for (const auto& c : gm.comps)
        for (std::size_t i = 0; i < d; ++i) {
            mean[i] += c.weight * c.mean[i];
            second[i] += c.weight * (c.var[i] + c.mean[i] * c.mean[i]);
        }
    Vec var(d);
    for (std::size_t i = 0; i < d; ++i) var[i] = second[i] - mean[i] * mean[i];
    return {std::move(mean), std::move(var)};
}

// Exact eps-function for samplers. The relation turns the noise level back
// into the matching signal scale, so the closure only needs (x, sigma).
inline std::function<Vec(const Vec&, double)> oracle_eps_fn(GaussianMixture gm, Relation rel) {
    gm.check();
    return [gm = std::move(gm), rel](const Vec& x, double sigma) {
        return eps_at(gm, x, rel.m_of(sigma), sigma);
    };
}

// Exact classifier-gradient provider (x, sigma, y) -> grad log p(y | x).
inline std::function<Vec(const Vec&, double, int)> oracle_grad_fn(GaussianMixture gm,
                                                                 Relation rel) {
    gm.check();
    return [gm = std::move(gm), rel](const Vec& x, double sigma, int y) {
        return class_posterior_grad(marginal_mixture(gm, rel.m_of(sigma), sigma), x, y);
    };
}

}  // namespace crush
