#include <gtest/gtest.h>

#include <cmath>

#include "hpflex/baseline_eval.hpp"
#include "hpflex/random.hpp"

using namespace hpflex;

namespace {

const Timestamp kT0 = parse_iso8601("2021-02-01T00:00:00Z");

PowerSeries series(std::vector<double> p) {
    PowerSeries s;
    s.t0 = kT0;
    s.p = std::move(p);
    return s;
}

double objective(std::span<const double> c, std::span<const double> r, double a) {
    double s = 0;
    for (std::size_t k = 0; k < c.size(); ++k) s += (c[k] - a * r[k]) * (c[k] - a * r[k]);
    return s;
}

// 24 h of a smooth daily curve on the 5-min grid
std::vector<double> daily_curve(double scale) {
    std::vector<double> v(288);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = scale * (50 + 20 * std::sin(2 * M_PI * k / 288.0));
    return v;
}

}  // namespace

TEST(ScaleReference, Proportional) {
    const std::vector<double> ref{1, 2, 3, 4}, ctrl{2, 4, 6, 8};
    EXPECT_DOUBLE_EQ(scale_reference(ctrl, ref), 2.0);
}

TEST(ScaleReference, ClosedForm) {
    const std::vector<double> ref{1, 1}, ctrl{1, 3};
    EXPECT_DOUBLE_EQ(scale_reference(ctrl, ref), 2.0);
}

TEST(ScaleReference, ZeroReference) {
    const std::vector<double> ref{0, 0, 0}, ctrl{1, 2, 3};
    EXPECT_THROW(scale_reference(ctrl, ref), ZeroReferenceError);
}

TEST(ScaleReference, MinimizesObjective) {
    auto rng = make_rng(1, 0, 0);
    for (int f = 0; f < 20; ++f) {
        std::vector<double> r(50), c(50);
        for (int k = 0; k < 50; ++k) {
            r[k] = uniform(rng, 0, 10);
            c[k] = uniform(rng, 0.5, 2) * r[k] + uniform(rng, -1, 1);
        }
        const double a = scale_reference(c, r);
        const double best = objective(c, r, a);
        EXPECT_LE(best, objective(c, r, a + 1e-3));
        EXPECT_LE(best, objective(c, r, a - 1e-3));
    }
}

TEST(ScaleReference, WindowBeforeEvent) {
    auto ref = series(std::vector<double>(200, 1.0));
    auto ctrl = series(std::vector<double>(200, 3.0));
    for (std::size_t k = 100; k < 200; ++k) ctrl.p[k] = 100.0;  // event onwards must not count
    EXPECT_DOUBLE_EQ(scale_reference(ctrl, ref, ctrl.time_at(100)), 3.0);
    EXPECT_THROW(scale_reference(ctrl, ref, ctrl.time_at(50)), CoverageError);
}

TEST(Smoother, ConstantAndLinearAreFixed) {
    for (double lambda : {0.0, 1.0, 100.0, 1e6}) {
        const std::vector<double> c(40, 3.5);
        for (double v : smooth_baseline(c, lambda)) EXPECT_NEAR(v, 3.5, 1e-9);
        std::vector<double> line(40);
        for (std::size_t k = 0; k < line.size(); ++k) line[k] = 2.0 - 0.25 * k;
        const auto z = smooth_baseline(line, lambda);
        for (std::size_t k = 0; k < line.size(); ++k) EXPECT_NEAR(z[k], line[k], 1e-7 * (1 + lambda * 1e-3));
    }
}

TEST(Smoother, SmallLambdaIsIdentity) {
    auto rng = make_rng(2, 0, 0);
    std::vector<double> y(60);
    for (auto& v : y) v = uniform(rng, -5, 5);
    const auto z = smooth_baseline(y, 1e-9);
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(z[k], y[k], 1e-6);
}

TEST(Smoother, ShiftAndRampEquivariance) {
    auto rng = make_rng(3, 0, 0);
    std::vector<double> y(80);
    for (auto& v : y) v = uniform(rng, 0, 10);
    const auto z = smooth_baseline(y);
    auto y2 = y;
    for (std::size_t k = 0; k < y.size(); ++k) y2[k] += 4.0 + 0.1 * k;
    const auto z2 = smooth_baseline(y2);
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(z2[k] - z[k], 4.0 + 0.1 * k, 1e-9);
}

TEST(Smoother, SolvesNormalEquations) {
    // residual of (I + lambda D'D) z = y computed directly
    auto rng = make_rng(4, 0, 0);
    std::vector<double> y(30);
    for (auto& v : y) v = uniform(rng, -1, 1);
    const double lambda = 7.0;
    const auto z = smooth_baseline(y, lambda);
    std::vector<double> d2(y.size() - 2);
    for (std::size_t i = 0; i < d2.size(); ++i) d2[i] = z[i] - 2 * z[i + 1] + z[i + 2];
    for (std::size_t k = 0; k < y.size(); ++k) {
        double dtd = 0;
        for (std::size_t i = 0; i < d2.size(); ++i) {
            const double coef = i == k ? 1.0 : i + 1 == k ? -2.0 : i + 2 == k ? 1.0 : 0.0;
            dtd += coef * d2[i];
        }
        EXPECT_NEAR(z[k] + lambda * dtd, y[k], 1e-10);
    }
}

TEST(Smoother, TooShort) {
    const std::vector<double> y{1, 2, 3, 4};
    EXPECT_THROW(smooth_baseline(y), LengthError);
}

TEST(Ape, ReportedNumbers) {
    EXPECT_NEAR(100 * ape(177.5, 159.1), 11.565, 1e-3);
    EXPECT_NEAR(100 * ape(105.6, 128.1), 17.564, 1e-3);
}

TEST(ScoreEvent, NoOpEvent) {
    const auto ref = series(daily_curve(1.0));
    const auto ctrl = series(daily_curve(0.8));
    DREventPlan ev;
    ev.t_start = ctrl.time_at(120);
    ev.T = 1.0;
    const auto r = score_event(ctrl, ref, ev, {10, 5});
    EXPECT_NEAR(r.baseline.alpha, 0.8, 1e-12);
    EXPECT_NEAR(r.realized_avg_reduction_kw, 0.0, 0.05);
    for (std::size_t k = 0; k < r.baseline.deviation.size(); ++k)
        EXPECT_NEAR(r.baseline.deviation[k], ctrl.p[24 + k] - r.baseline.baseline[k], 1e-12);
}

TEST(ScoreEvent, KnownDropAndRebound) {
    const auto ref = series(daily_curve(1.0));
    auto ctrl = series(daily_curve(1.0));
    for (std::size_t k = 120; k < 132; ++k) ctrl.p[k] -= 20.0;
    ctrl.p[132] += 15.0;
    ctrl.p[133] += 8.0;
    DREventPlan ev;
    ev.t_start = ctrl.time_at(120);
    ev.T = 1.0;
    const auto r = score_event(ctrl, ref, ev, {22.0, 12.0});
    EXPECT_NEAR(r.realized_avg_reduction_kw, 20.0, 0.5);
    EXPECT_NEAR(r.realized_peak_rebound_kw, 15.0, 0.5);
    EXPECT_NEAR(r.ape_reduction, std::abs(22.0 - r.realized_avg_reduction_kw) / r.realized_avg_reduction_kw, 1e-12);
}

TEST(ScoreEvent, ZeroDeviationGivesSentinel) {
    std::vector<std::string> seen;
    auto saved = warning_sink();
    warning_sink() = [&](const std::string& s) { seen.push_back(s); };
    const auto ref = series(std::vector<double>(288, 10.0));
    DREventPlan ev;
    ev.t_start = ref.time_at(120);
    ev.T = 1.0;
    const auto r = score_event(ref, ref, ev, {5, 5});
    warning_sink() = saved;
    EXPECT_NEAR(r.realized_avg_reduction_kw, 0.0, 1e-12);
    EXPECT_TRUE(std::isnan(r.ape_reduction));
    EXPECT_FALSE(seen.empty());
    EXPECT_TRUE(to_json(r)["ape_reduction"].is_null());
}

TEST(ScoreEvent, Coverage) {
    const auto ref = series(daily_curve(1.0));
    DREventPlan ev;
    ev.t_start = ref.time_at(60);  // only 5 h of history
    ev.T = 1.0;
    EXPECT_THROW(score_event(ref, ref, ev, {1, 1}), CoverageError);
    ev.t_start = ref.time_at(250);  // rebound horizon runs past the end
    EXPECT_THROW(score_event(ref, ref, ev, {1, 1}), CoverageError);
}

TEST(ApeStatistics, Quartiles) {
    std::vector<PredictionReport> rs(5);
    for (int i = 0; i < 5; ++i) rs[i].ape_reduction = rs[i].ape_rebound = 0.01 * (i + 1);
    const auto s = ape_statistics(rs);
    EXPECT_NEAR(s.reduction.q25, 0.02, 1e-12);
    EXPECT_NEAR(s.reduction.q50, 0.03, 1e-12);
    EXPECT_NEAR(s.reduction.q75, 0.04, 1e-12);

    const auto one = ape_statistics({rs[2]});
    EXPECT_EQ(one.rebound.q25, one.rebound.q75);
    EXPECT_EQ(one.rebound.q50, 0.03);
    EXPECT_THROW(ape_statistics({}), EmptySetError);
}
