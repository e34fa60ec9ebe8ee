#pragma once
// Noise-conditional classifiers for guided sampling. Both kinds expose the
// class posterior p(y | x, sigma) and its input gradient grad_x log p(y | x),
// which is exactly what guided_eps consumes.
//
// BayesClassifier is exact for Gaussian-mixture data. TrainedClassifier is a
// FilmMlp with one logit per class, fitted by cross entropy on perturbed
// samples so it stays calibrated across noise levels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crush/common.hpp"
#include "crush/kernel.hpp"
#include "crush/mixture.hpp"
#include "crush/net.hpp"
#include "crush/rng.hpp"
#include "crush/schedule.hpp"

namespace crush {

inline Vec softmax(const Vec& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    const double top = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - top);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

struct BayesClassifier {
    GaussianMixture gm;
    Relation relation;

    BayesClassifier(GaussianMixture mixture, Relation rel)
        : gm(std::move(mixture)), relation(rel) {
        gm.check();
    }

    int num_classes() const { return gm.num_classes(); }

    Vec posterior(const Vec& x, double sigma) const {
        return class_posterior(marginal_mixture(gm, relation.m_of(sigma), sigma), x);
    }

    Vec input_grad(const Vec& x, double sigma, int y) const {
        check_label(y);
        return class_posterior_grad(marginal_mixture(gm, relation.m_of(sigma), sigma), x, y);
    }

  private:
    void check_label(int y) const {
        if (y < 0 || y >= num_classes())
            throw std::invalid_argument("BayesClassifier: unknown label");
    }
};

class TrainedClassifier {
  public:
    explicit TrainedClassifier(FilmMlp net) : net_(std::move(net)) {
        if (net_.spec().out < 2)
            throw std::invalid_argument("TrainedClassifier: need at least 2 classes");
    }

    int num_classes() const { return net_.spec().out; }

    Vec posterior(const Vec& x, double sigma) const { return softmax(net_.forward(x, sigma)); }

    // grad_x log p(y | x, sigma) via one backward pass: d logits = e_y - p.
    Vec input_grad(const Vec& x, double sigma, int y) const {
        check_label(y);
        FilmMlp::Cache cache;
        const Vec p = softmax(net_.forward(x, sigma, cache));
        Vec dy(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) dy[i] = -p[i];
        dy[static_cast<std::size_t>(y)] += 1.0;
        Vec dx;
        net_.backward(cache, dy, nullptr, &dx);
        return dx;
    }

    const FilmMlp& net() const { return net_; }
    FilmMlp& net() { return net_; }

  private:
    void check_label(int y) const {
        if (y < 0 || y >= num_classes())
            throw std::invalid_argument("TrainedClassifier: unknown label");
    }

    FilmMlp net_;
};

struct ClfTrainConfig {
    NetSpec arch;  // in is overwritten with the data dimension, out with #classes
    int steps = 4000;
    int batch = 32;
    double lr = 2e-4;
    std::uint64_t seed = 0;
    int log_every = 100;

    void check() const {
        if (steps < 0) throw std::invalid_argument("ClfTrainConfig: steps must be >= 0");
        if (batch < 1 || log_every < 1)
            throw std::invalid_argument("ClfTrainConfig: batch, log_every must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("ClfTrainConfig: lr must be positive");
    }
};

struct ClfTrainResult {
    TrainedClassifier clf;
    std::vector<double> loss_curve;  // mean cross entropy per log_every window
};

// Cross entropy on (perturb(x0, t, eps), sigma(t), label) with t uniform over
// the schedule's domain. Labels must cover 0..K-1 with K >= 2.
inline ClfTrainResult train_classifier(const std::vector<Vec>& xs, const std::vector<int>& ys,
                                       const Schedule& sched, ClfTrainConfig cfg) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("train_classifier: bad dataset");
    cfg.check();
    const auto dim = xs.front().size();
    int num_classes = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != dim) throw std::invalid_argument("train_classifier: ragged dataset");
        if (ys[i] < 0) throw std::invalid_argument("train_classifier: negative label");
        num_classes = std::max(num_classes, ys[i] + 1);
    }
    if (num_classes < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");
    cfg.arch.in = static_cast<int>(dim);
    cfg.arch.out = num_classes;

    Rng rng(cfg.seed);
    FilmMlp net(cfg.arch, rng);
    AdamState adam = AdamState::for_size(net.params().size(), cfg.lr);

    ClfTrainResult res{TrainedClassifier(std::move(net)), {}};
    FilmMlp& live = res.clf.net();
    Vec grad(live.params().size());
    FilmMlp::Cache cache;
    double window = 0.0;
    const double inv_b = 1.0 / static_cast<double>(cfg.batch);
    for (int s = 0; s < cfg.steps; ++s) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (int k = 0; k < cfg.batch; ++k) {
            const std::size_t idx =
                (static_cast<std::size_t>(s) * static_cast<std::size_t>(cfg.batch) +
                 static_cast<std::size_t>(k)) %
                xs.size();
            const double t = rng.uniform(sched.t_min, sched.T);
            const Vec eps = rng.gaussian_vec(dim);
            const Vec x_t = perturb(xs[idx], sched, t, eps);
            const double sigma = sched.sigma(clip_time(sched, t));
            const auto label = static_cast<std::size_t>(ys[idx]);

            Vec p = softmax(live.forward(x_t, sigma, cache));
            loss -= std::log(std::max(p[label], 1e-300)) * inv_b;
            Vec dy = p;
            dy[label] -= 1.0;
            for (auto& v : dy) v *= inv_b;
            live.backward(cache, dy, &grad, nullptr);
        }
        adam_step(live.params(), adam, grad);
        window += loss;
        if ((s + 1) % cfg.log_every == 0) {
            res.loss_curve.push_back(window / cfg.log_every);
            window = 0.0;
        }
    }
    return res;
}

// Adapters to the guidance hook in GuidanceSpec.
inline std::function<Vec(const Vec&, double, int)> clf_grad_fn(TrainedClassifier clf) {
    return [clf = std::move(clf)](const Vec& x, double sigma, int y) {
        return clf.input_grad(x, sigma, y);
    };
}

inline std::function<Vec(const Vec&, double, int)> clf_grad_fn(BayesClassifier clf) {
    return [clf = std::move(clf)](const Vec& x, double sigma, int y) {
        return clf.input_grad(x, sigma, y);
    };
}

}  // namespace crush
