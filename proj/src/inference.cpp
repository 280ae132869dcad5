#include "mte/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "mte/error.hpp"
#include "mte/parallel.hpp"

namespace mte {

bool ConfidenceSet::contains(double x) const {
    for (const auto& [lo, hi] : intervals)
        if (x >= lo && x <= hi) return true;
    return false;
}

namespace {

// Bisection between an accepted point and a rejected point; returns the accepted end.
double refine_edge(const std::function<bool(double)>& rejects, double accepted, double rejected, double resolution) {
    while (std::abs(rejected - accepted) > resolution) {
        const double mid = 0.5 * (accepted + rejected);
        if (rejects(mid))
            rejected = mid;
        else
            accepted = mid;
    }
    return accepted;
}

}  // namespace

ConfidenceSet invert_ci(const std::function<bool(double)>& rejects, const GridSpec& grid, int threads) {
    if (grid.points < 50) throw ConfigError("confidence-set grid needs at least 50 points");
    if (!(std::isfinite(grid.lo) && std::isfinite(grid.hi) && grid.lo < grid.hi))
        throw ConfigError("confidence-set grid must be a finite interval");
    const int n = grid.points;
    const double step = grid.step();
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = i == n - 1 ? grid.hi : grid.lo + step * i;
    std::vector<char> accept(n, 0);
    parallel_for(n, threads, [&](std::size_t i) { accept[i] = rejects(x[i]) ? 0 : 1; });

    ConfidenceSet cs;
    cs.grid = grid;
    const double resolution = step / 100.0;
    std::vector<std::pair<int, int>> runs;
    for (int i = 0; i < n;) {
        if (!accept[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && accept[j + 1]) ++j;
        runs.emplace_back(i, j);
        i = j + 1;
    }
    std::vector<std::pair<double, double>> bounds(runs.size());
    parallel_for(runs.size(), threads, [&](std::size_t r) {
        const auto [i, j] = runs[r];
        const double lo = i > 0 ? refine_edge(rejects, x[i], x[i - 1], resolution) : x[i];
        const double hi = j < n - 1 ? refine_edge(rejects, x[j], x[j + 1], resolution) : x[j];
        bounds[r] = {lo, hi};
    });
    cs.intervals = std::move(bounds);
    cs.empty = cs.intervals.empty();
    cs.touches_lo = accept.front() != 0;
    cs.touches_hi = accept.back() != 0;
    if (!cs.empty) {
        cs.hull_lo = cs.intervals.front().first;
        cs.hull_hi = cs.intervals.back().second;
    }
    return cs;
}

ConfidenceSet invert_ci_adaptive(const std::function<bool(double)>& rejects, double center, double half_width,
                                 int points, int threads, int max_widen, double floor, double ceiling) {
    if (!std::isfinite(center)) center = 0.5 * (std::isfinite(floor) ? floor : 0.0) + 0.5 * (std::isfinite(ceiling) ? ceiling : 0.0);
    if (!std::isfinite(half_width) || half_width <= 0.0) half_width = 1.0;
    for (int attempt = 0;; ++attempt) {
        double lo = center - half_width, hi = center + half_width;
        const bool clip_lo = lo <= floor, clip_hi = hi >= ceiling;
        lo = std::max(lo, floor);
        hi = std::min(hi, ceiling);
        if (!(lo < hi)) throw NumericalError("confidence-set grid collapsed to a point");
        ConfidenceSet cs = invert_ci(rejects, GridSpec{lo, hi, points}, threads);
        const bool widen = (cs.touches_lo && !clip_lo) || (cs.touches_hi && !clip_hi);
        if (!widen || attempt >= max_widen || (clip_lo && clip_hi)) return cs;
        half_width *= 3.0;
    }
}

double chi2_quantile(double dof, double prob) {
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), prob);
}

double chi2_cdf(double dof, double x) {
    if (x <= 0.0) return 0.0;
    return boost::math::cdf(boost::math::chi_squared_distribution<double>(dof), x);
}

double normal_quantile(double prob) { return boost::math::quantile(boost::math::normal_distribution<double>(), prob); }

double empirical_quantile(std::vector<double>& sample, double prob) {
    if (sample.empty()) throw NumericalError("empirical quantile of an empty sample");
    const auto n = sample.size();
    auto idx = static_cast<std::size_t>(std::ceil(prob * static_cast<double>(n) - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, n) - 1;
    std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(idx), sample.end());
    return sample[idx];
}

}  // namespace mte
