#pragma once

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mte {

struct TestResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    bool reject = false;
    double level = 0.05;
    double p_value = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, double> meta;
};

/// Closed interval grid [lo, hi] with `points` equally spaced nodes.
struct GridSpec {
    double lo = -1.0;
    double hi = 1.0;
    int points = 101;

    double step() const { return (hi - lo) / (points - 1); }
};

struct ConfidenceSet {
    std::vector<std::pair<double, double>> intervals;  ///< raw accepted set
    double hull_lo = std::numeric_limits<double>::quiet_NaN();
    double hull_hi = std::numeric_limits<double>::quiet_NaN();
    bool empty = true;
    bool touches_lo = false;  ///< accepted at the lower grid edge
    bool touches_hi = false;
    GridSpec grid;

    bool contains(double x) const;
};

/**
 * @brief Collects the values a test fails to reject on a grid.
 *
 * `rejects` is evaluated at every node (in parallel when threads > 1); each boundary between
 * an accepted and a rejected node is refined by bisection to step/100.
 */
ConfidenceSet invert_ci(const std::function<bool(double)>& rejects, const GridSpec& grid, int threads = 1);

/**
 * @brief Grid inversion centred on `center` with half width `half_width`, widened by a factor of 3
 * (at most `max_widen` times) while the accepted set touches an edge of the grid.
 *
 * Values outside [floor, ceiling] are never placed on the grid; an edge clipped there does not
 * trigger widening.
 */
ConfidenceSet invert_ci_adaptive(const std::function<bool(double)>& rejects, double center, double half_width,
                                 int points = 101, int threads = 1, int max_widen = 3,
                                 double floor = -std::numeric_limits<double>::infinity(),
                                 double ceiling = std::numeric_limits<double>::infinity());

double chi2_quantile(double dof, double prob);
double chi2_cdf(double dof, double x);
double normal_quantile(double prob);

/// Order statistic ceil(prob * n) of the sample (type 1 empirical quantile); sorts in place.
double empirical_quantile(std::vector<double>& sample, double prob);

}  // namespace mte
