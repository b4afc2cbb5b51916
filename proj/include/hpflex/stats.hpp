#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hpflex/errors.hpp"

namespace hpflex::stats {

// Linear interpolation between order statistics (R type 7).
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw EmptySetError("quantile of an empty set");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(values.size() - 1, lo + 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

inline double mean(std::span<const double> v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct KMeans1D {
    std::array<double, 3> centroids{};
    std::vector<int> labels;        // index into centroids, per input value
    std::array<std::size_t, 3> counts{};
    int iterations = 0;
};

// Lloyd's algorithm for k = 3 on scalars, started from the given centroids
// and iterated until the assignment no longer changes. Ties go to the lower
// centroid index.
inline KMeans1D kmeans3(std::span<const double> values, std::array<double, 3> init, int max_iter = 1000) {
    KMeans1D r;
    r.centroids = init;
    r.labels.assign(values.size(), -1);
    for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            int best = 0;
            double best_d = std::abs(values[i] - r.centroids[0]);
            for (int c = 1; c < 3; ++c) {
                const double d = std::abs(values[i] - r.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (r.labels[i] != best) {
                r.labels[i] = best;
                changed = true;
            }
        }
        std::array<double, 3> sum{};
        r.counts = {};
        for (std::size_t i = 0; i < values.size(); ++i) {
            sum[r.labels[i]] += values[i];
            ++r.counts[r.labels[i]];
        }
        for (int c = 0; c < 3; ++c)
            if (r.counts[c] > 0) r.centroids[c] = sum[c] / static_cast<double>(r.counts[c]);
        if (!changed) break;
    }
    return r;
}

}  // namespace hpflex::stats
