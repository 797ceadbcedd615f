#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "driveby/common.hpp"
#include "driveby/rng.hpp"
#include "driveby/tensor.hpp"

namespace driveby::ev {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 500;
    double learning_rate = 200.0;
    double momentum_early = 0.5;
    double momentum_late = 0.8;
    int momentum_switch = 250;
    double exaggeration = 12.0;
    double exaggeration_fraction = 0.15;
    std::uint64_t seed = 1;
};

struct TsneResult {
    std::vector<std::array<double, 2>> y;
    double kl_after_exaggeration = 0;  // plain-P KL when exaggeration lifts
    double kl_final = 0;
};

namespace detail {

inline std::vector<double> pairwise_sq_dists(const nn::TensorF& points) {
    const int m = points.shape[0], d = points.shape[1];
    std::vector<double> d2(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i) {
        const float* a = points.ptr() + static_cast<std::size_t>(i) * d;
        for (int j = i + 1; j < m; ++j) {
            const float* b = points.ptr() + static_cast<std::size_t>(j) * d;
            double s = 0;
            for (int k = 0; k < d; ++k) {
                const double diff = static_cast<double>(a[k]) - b[k];
                s += diff * diff;
            }
            d2[static_cast<std::size_t>(i) * m + j] = s;
            d2[static_cast<std::size_t>(j) * m + i] = s;
        }
    }
    return d2;
}

} // namespace detail

// Row-stochastic conditional affinities P_{j|i}. Each row's Gaussian
// bandwidth is bisected until the row entropy matches log(perplexity) to
// 1e-3, i.e. every point sees the same effective neighbor count.
inline std::vector<double> conditional_affinities(const std::vector<double>& d2, int m,
                                                  double perplexity) {
    const double target_h = std::log(perplexity);
    std::vector<double> p(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* row_d = d2.data() + static_cast<std::size_t>(i) * m;
        double* row_p = p.data() + static_cast<std::size_t>(i) * m;
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 200; ++it) {
            double sum = 0, wsum = 0;
            for (int j = 0; j < m; ++j) {
                if (j == i) {
                    row_p[j] = 0;
                    continue;
                }
                const double e = std::exp(-beta * row_d[j]);
                row_p[j] = e;
                sum += e;
                wsum += e * row_d[j];
            }
            if (sum <= 0) throw NumericalError("tsne: degenerate affinity row");
            const double h = std::log(sum) + beta * wsum / sum;
            if (std::abs(h - target_h) < 1e-3) {
                for (int j = 0; j < m; ++j) row_p[j] /= sum;
                break;
            }
            if (h > target_h) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
            } else {
                hi = beta;
                beta = (beta + lo) / 2;
            }
            if (it == 199)
                for (int j = 0; j < m; ++j) row_p[j] /= sum;
        }
    }
    return p;
}

// Symmetrized joint distribution p_ij = (p_{j|i} + p_{i|j}) / 2m, floored
// away from zero so KL terms stay finite.
inline std::vector<double> joint_affinities(const std::vector<double>& cond, int m) {
    std::vector<double> p(cond.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const std::size_t ij = static_cast<std::size_t>(i) * m + j;
            const std::size_t ji = static_cast<std::size_t>(j) * m + i;
            p[ij] = std::max((cond[ij] + cond[ji]) / (2.0 * m), 1e-12);
        }
    for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i) * m + i] = 0;
    return p;
}

inline void validate(const TsneConfig& c, int m) {
    if (m < 10) throw ConfigError("tsne: need at least 10 points, got " + std::to_string(m));
    if (c.perplexity < 5.0 || c.perplexity > (m - 1) / 3.0)
        throw ConfigError("tsne: perplexity " + std::to_string(c.perplexity) +
                          " infeasible for " + std::to_string(m) + " points");
    if (c.iterations < 1) throw ConfigError("tsne: iterations must be >= 1");
    if (c.learning_rate <= 0) throw ConfigError("tsne: learning rate must be positive");
}

// Exact (quadratic) t-SNE: KL(P || Q) minimized by gradient descent with
// momentum, early exaggeration on P for the first phase. Deterministic per
// seed; points count small enough here that no tree approximation is needed.
inline TsneResult tsne(const nn::TensorF& points, const TsneConfig& cfg) {
    if (points.shape.size() != 2) throw DataError("tsne: points must be an M x D matrix");
    const int m = points.shape[0];
    validate(cfg, m);
    const auto d2 = detail::pairwise_sq_dists(points);
    const auto p = joint_affinities(conditional_affinities(d2, m, cfg.perplexity), m);

    TsneResult res;
    res.y.assign(static_cast<std::size_t>(m), {0.0, 0.0});
    Rng rng{cfg.seed};
    for (auto& yi : res.y) {
        yi[0] = rng.normal() * 1e-2;
        yi[1] = rng.normal() * 1e-2;
    }

    const int exag_end = static_cast<int>(std::ceil(cfg.exaggeration_fraction * cfg.iterations));
    std::vector<std::array<double, 2>> vel(static_cast<std::size_t>(m), {0.0, 0.0});
    std::vector<std::array<double, 2>> grad(static_cast<std::size_t>(m));
    std::vector<double> w(static_cast<std::size_t>(m) * m, 0.0);

    // Recomputes the Student-t kernel from the current coordinates so the
    // value reflects the positions after this iteration's update.
    auto kl_divergence = [&]() {
        double z = 0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const double dx = res.y[i][0] - res.y[j][0];
                const double dy = res.y[i][1] - res.y[j][1];
                const double wij = 1.0 / (1.0 + dx * dx + dy * dy);
                w[static_cast<std::size_t>(i) * m + j] = wij;
                w[static_cast<std::size_t>(j) * m + i] = wij;
                z += 2.0 * wij;
            }
        double kl = 0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                if (j == i) continue;
                const std::size_t ij = static_cast<std::size_t>(i) * m + j;
                const double q = std::max(w[ij] / z, 1e-12);
                kl += p[ij] * std::log(p[ij] / q);
            }
        return kl;
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double exag = iter < exag_end ? cfg.exaggeration : 1.0;
        // Student-t kernel weights and normalizer
        double z = 0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const double dx = res.y[i][0] - res.y[j][0];
                const double dy = res.y[i][1] - res.y[j][1];
                const double wij = 1.0 / (1.0 + dx * dx + dy * dy);
                w[static_cast<std::size_t>(i) * m + j] = wij;
                w[static_cast<std::size_t>(j) * m + i] = wij;
                z += 2.0 * wij;
            }
        for (int i = 0; i < m; ++i) {
            grad[i] = {0.0, 0.0};
            for (int j = 0; j < m; ++j) {
                if (j == i) continue;
                const std::size_t ij = static_cast<std::size_t>(i) * m + j;
                const double coeff = 4.0 * (exag * p[ij] - w[ij] / z) * w[ij];
                grad[i][0] += coeff * (res.y[i][0] - res.y[j][0]);
                grad[i][1] += coeff * (res.y[i][1] - res.y[j][1]);
            }
        }
        const double mom = iter < cfg.momentum_switch ? cfg.momentum_early : cfg.momentum_late;
        double cx = 0, cy = 0;
        for (int i = 0; i < m; ++i) {
            vel[i][0] = mom * vel[i][0] - cfg.learning_rate * grad[i][0];
            vel[i][1] = mom * vel[i][1] - cfg.learning_rate * grad[i][1];
            res.y[i][0] += vel[i][0];
            res.y[i][1] += vel[i][1];
            cx += res.y[i][0];
            cy += res.y[i][1];
        }
        cx /= m;
        cy /= m;
        for (auto& yi : res.y) {
            yi[0] -= cx;
            yi[1] -= cy;
        }
        if (iter == exag_end - 1) res.kl_after_exaggeration = kl_divergence();
        if (iter == cfg.iterations - 1) res.kl_final = kl_divergence();
    }
    if (!std::isfinite(res.kl_final)) throw NumericalError("tsne: diverged");
    return res;
}

} // namespace driveby::ev
