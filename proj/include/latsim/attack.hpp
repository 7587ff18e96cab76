#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "latsim/detector.hpp"
#include "latsim/types.hpp"

namespace latsim {

/// Additive perturbation under an L-infinity budget. apply() clips to the
/// image box as a belt-and-braces guard; the optimizer already projects.
struct Perturbation {
    std::vector<double> delta;
    double epsilon = 0.03;

    double linf() const {
        double m = 0.0;
        for (double d : delta) m = std::max(m, std::fabs(d));
        return m;
    }

    ToyImage apply(const ToyImage& img) const {
        if (delta.size() != img.pixels.size())
            throw SimError("Perturbation: size mismatch with image");
        ToyImage out = img;
        for (std::size_t i = 0; i < delta.size(); ++i)
            out.pixels[i] = std::clamp(img.pixels[i] + delta[i], 0.0, 1.0);
        return out;
    }
};

struct AttackResult {
    Perturbation perturbation;
    int benign_count = 0;
    int attacked_count = 0;
    std::vector<double> loss_trace; // losses of accepted iterates, monotone decreasing
    int accepted_steps = 0;
};

namespace detail {

// Project so that |delta_i| <= eps and x_i + delta_i stays in [0, 1].
inline void project(std::vector<double>& delta, const std::vector<double>& x, double eps) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        double lo = std::max(-eps, -x[i]);
        double hi = std::min(eps, 1.0 - x[i]);
        delta[i] = std::clamp(delta[i], lo, hi);
    }
}

} // namespace detail

/// Craft a bounded perturbation that suppresses EOS along the greedy
/// decode path, lengthening the decode. Sign-of-gradient steps with
/// backtracking: a step is accepted only if it lowers the summed EOS
/// log-probability, so the recorded loss trace is strictly decreasing.
/// Returns the best iterate seen, preferring longer decodes and breaking
/// ties by lower loss; the zero perturbation seeds the search, so the
/// result never decodes shorter than benign.
inline AttackResult eos_suppression_attack(const ToyDetector& d, const ToyImage& img,
                                           double epsilon, int iters, double step = 0.01) {
    if (!(epsilon >= 0.0)) throw SimError("eos_suppression_attack: epsilon must be >= 0");
    if (iters < 1) throw SimError("eos_suppression_attack: iters must be >= 1");
    img.validate();

    const std::size_t n = img.pixels.size();
    AttackResult res;
    res.perturbation.epsilon = epsilon;
    res.perturbation.delta.assign(n, 0.0);
    res.benign_count = d.decode(img).count;
    res.attacked_count = res.benign_count;

    double best_loss = d.eos_logprob_loss(img);
    res.loss_trace.push_back(best_loss);
    if (epsilon == 0.0) return res;

    std::vector<double> delta(n, 0.0);
    std::vector<double> grad(n, 0.0);
    std::vector<double> candidate(n);
    ToyImage work = img;
    double current = best_loss;
    int best_count = res.benign_count;

    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) work.pixels[i] = img.pixels[i] + delta[i];
        d.eos_logprob_loss_grad(work, grad);

        double alpha = step;
        bool accepted = false;
        for (int bt = 0; bt < 8; ++bt) {
            for (std::size_t i = 0; i < n; ++i) {
                double g = grad[i];
                double dir = g > 0.0 ? -1.0 : (g < 0.0 ? 1.0 : 0.0);
                candidate[i] = delta[i] + alpha * dir;
            }
            detail::project(candidate, img.pixels, epsilon);
            for (std::size_t i = 0; i < n; ++i)
                work.pixels[i] = img.pixels[i] + candidate[i];
            double trial = d.eos_logprob_loss(work);
            if (trial < current) {
                delta = candidate;
                current = trial;
                res.loss_trace.push_back(trial);
                ++res.accepted_steps;
                accepted = true;
                int count = d.decode(work).count;
                if (count > best_count || (count == best_count && trial < best_loss)) {
                    best_count = count;
                    best_loss = trial;
                    res.perturbation.delta = delta;
                }
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
    }

    res.attacked_count = best_count;
    return res;
}

} // namespace latsim
