#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "hpflex/errors.hpp"
#include "hpflex/stats.hpp"

namespace hpflex::robust {

struct HuberOptions {
    double tuning = 1.345;
    int max_iterations = 50;
    double tolerance = 1e-8;
};

// Normalised MAD of the residuals, floored so exact fits keep unit weights.
inline double residual_scale(std::span<const double> r, double floor) {
    std::vector<double> a(r.size());
    std::transform(r.begin(), r.end(), a.begin(), [](double v) { return std::abs(v); });
    return std::max(stats::median(std::move(a)) / 0.6745, floor);
}

inline double huber_weight(double residual, double scale, double tuning) {
    const double u = std::abs(residual) / scale;
    return u <= tuning ? 1.0 : tuning / u;
}

struct AffineFit {
    double slope = 0.0;
    double intercept = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline AffineFit weighted_affine(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0)) throw InsufficientDataError("affine fit needs at least two distinct x values");
    AffineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

// Iteratively reweighted least squares with Huber weights, started from OLS.
inline AffineFit huber_affine(std::span<const double> x, std::span<const double> y, const HuberOptions& opt = {}) {
    std::vector<double> w(x.size(), 1.0), r(x.size());
    double ymag = 0;
    for (double v : y) ymag += std::abs(v);
    const double floor = 1e-9 * (1.0 + ymag / static_cast<double>(y.size()));

    AffineFit fit = weighted_affine(x, y, w);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        for (std::size_t i = 0; i < x.size(); ++i) r[i] = y[i] - (fit.slope * x[i] + fit.intercept);
        const double s = residual_scale(r, floor);
        for (std::size_t i = 0; i < x.size(); ++i) w[i] = huber_weight(r[i], s, opt.tuning);
        AffineFit next = weighted_affine(x, y, w);
        next.iterations = it;
        const double change = std::max(std::abs(next.slope - fit.slope), std::abs(next.intercept - fit.intercept));
        fit = next;
        if (change < opt.tolerance) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

// Three-parameter model interface for the nonlinear fit.
struct Model3 {
    std::function<double(double x, const std::array<double, 3>&)> value;
    std::function<std::array<double, 3>(double x, const std::array<double, 3>&)> gradient;
    std::function<bool(const std::array<double, 3>&)> admissible = [](const auto&) { return true; };
};

namespace detail {

inline bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, std::array<double, 3>& x) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (!(std::abs(a[piv][col]) > 0)) return false;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < 3; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline double weighted_cost(const Model3& m, std::span<const double> x, std::span<const double> y,
                            std::span<const double> w, const std::array<double, 3>& p) {
    double c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - m.value(x[i], p);
        c += w[i] * r * r;
    }
    return c;
}

}  // namespace detail

struct LMResult {
    std::array<double, 3> params{};
    double cost = 0.0;
    int iterations = 0;
};

// Weighted Levenberg-Marquardt with Marquardt diagonal scaling. Steps that
// leave the admissible region are treated like cost increases.
inline LMResult levenberg_marquardt(const Model3& m, std::span<const double> x, std::span<const double> y,
                                    std::span<const double> w, std::array<double, 3> p, int max_iter = 500) {
    double lambda = 1e-3;
    double cost = detail::weighted_cost(m, x, y, w, p);
    int it = 0;
    for (; it < max_iter; ++it) {
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto g = m.gradient(x[i], p);
            const double r = y[i] - m.value(x[i], p);
            for (int a = 0; a < 3; ++a) {
                jtr[a] += w[i] * g[a] * r;
                for (int b = 0; b < 3; ++b) jtj[a][b] += w[i] * g[a] * g[b];
            }
        }
        bool improved = false;
        while (lambda < 1e16) {
            auto aug = jtj;
            for (int a = 0; a < 3; ++a) aug[a][a] += lambda * std::max(jtj[a][a], 1e-300);
            std::array<double, 3> step{};
            if (detail::solve3(aug, jtr, step)) {
                std::array<double, 3> trial{p[0] + step[0], p[1] + step[1], p[2] + step[2]};
                if (m.admissible(trial)) {
                    const double trial_cost = detail::weighted_cost(m, x, y, w, trial);
                    if (trial_cost <= cost) {
                        const double rel_step = std::max({std::abs(step[0]) / (1 + std::abs(p[0])),
                                                          std::abs(step[1]) / (1 + std::abs(p[1])),
                                                          std::abs(step[2]) / (1 + std::abs(p[2]))});
                        const double decrease = cost - trial_cost;
                        p = trial;
                        cost = trial_cost;
                        lambda = std::max(lambda / 10.0, 1e-15);
                        improved = true;
                        if (rel_step < 1e-14 || decrease <= 1e-15 * (cost + 1e-300)) return {p, cost, it + 1};
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if (!improved) break;
    }
    return {p, cost, it};
}

struct NonlinearFit {
    std::array<double, 3> params{};
    int outer_iterations = 0;
};

// IRLS around LM: Huber weights from the current residuals, then a full
// weighted LM solve, until the parameters stop moving.
inline NonlinearFit huber_nonlinear(const Model3& m, std::span<const double> x, std::span<const double> y,
                                    std::array<double, 3> p0, const HuberOptions& opt, int max_outer) {
    std::vector<double> w(x.size(), 1.0), r(x.size());
    double ymag = 0;
    for (double v : y) ymag += std::abs(v);
    const double floor = 1e-9 * (1.0 + ymag / static_cast<double>(y.size()));

    auto p = levenberg_marquardt(m, x, y, w, p0).params;
    for (int it = 1; it <= max_outer; ++it) {
        for (std::size_t i = 0; i < x.size(); ++i) r[i] = y[i] - m.value(x[i], p);
        const double s = residual_scale(r, floor);
        for (std::size_t i = 0; i < x.size(); ++i) w[i] = huber_weight(r[i], s, opt.tuning);
        const auto next = levenberg_marquardt(m, x, y, w, p).params;
        double change = 0;
        for (int a = 0; a < 3; ++a) change = std::max(change, std::abs(next[a] - p[a]) / (1.0 + std::abs(p[a])));
        p = next;
        if (change < opt.tolerance) return {p, it};
    }
    throw NonConvergenceError("robust nonlinear fit did not converge in " + std::to_string(max_outer) +
                              " outer iterations");
}

}  // namespace hpflex::robust
