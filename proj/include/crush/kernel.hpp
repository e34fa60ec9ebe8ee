#pragma once
// Forward perturbation kernel: x_t = m(t) x_0 + sigma(t) eps, plus the
// training-tuple draw used by denoising score matching. Times outside
// [t_min, T] are clipped before use.

#include <algorithm>

#include "crush/common.hpp"
#include "crush/rng.hpp"
#include "crush/schedule.hpp"

namespace crush {

enum class Weighting { Sigma2, G2, Unit };

struct TrainingTuple {
    Vec x_t;
    double sigma = 0.0;
    Vec eps;
    double weight = 1.0;
};

inline double clip_time(const Schedule& sched, double t) {
    return std::min(std::max(t, sched.t_min), sched.T);
}

inline Vec perturb(const Vec& x0, const Schedule& sched, double t, const Vec& eps) {
    if (x0.size() != eps.size()) throw std::invalid_argument("perturb: x0/eps size mismatch");
    t = clip_time(sched, t);
    const double sg = sched.sigma(t);
    const double m = sched.relation.m_of(sg);
    Vec x(x0.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = m * x0[i] + sg * eps[i];
    return x;
}

// sqrt(lambda(t)) / sigma(t) for the three loss weightings. Sigma2 cancels to
// exactly 1 so that the loss is plain MSE.
inline double dsm_weight(const Coeffs& c, Weighting w) {
    switch (w) {
        case Weighting::Sigma2: return 1.0;
        case Weighting::G2: return c.g / c.sigma;
        case Weighting::Unit: return 1.0 / c.sigma;
    }
    throw std::invalid_argument("dsm_weight: bad weighting");
}

// Draw order: one uniform t, then dim(x0) gaussians for eps.
inline TrainingTuple sample_training_tuple(const Vec& x0, const Schedule& sched, Weighting w,
                                           Rng& rng) {
    TrainingTuple tup;
    const double t = rng.uniform(sched.t_min, sched.T);
    tup.eps = rng.gaussian_vec(x0.size());
    const Coeffs c = coeffs(sched, clip_time(sched, t));
    tup.sigma = c.sigma;
    tup.x_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) tup.x_t[i] = c.m * x0[i] + c.sigma * tup.eps[i];
    tup.weight = dsm_weight(c, w);
    return tup;
}

}  // namespace crush
