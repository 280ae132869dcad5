#include "mte/aggregate.hpp"

#include <cmath>
#include <limits>

#include "mte/error.hpp"

namespace mte {

namespace {

void check_cells(const std::vector<CellCI>& cells) {
    if (cells.empty()) throw ConfigError("no covariate cells to aggregate");
    for (const auto& c : cells) {
        if (!(c.lo <= c.hi)) throw ConfigError("cell interval for '" + c.w + "' has lo > hi");
        if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("cell level must lie in (0,1)");
        if (std::abs(c.level - cells.front().level) > 1e-12) throw ConfigError("level mismatch across covariate cells");
    }
}

ConfidenceSet single_interval(double lo, double hi) {
    ConfidenceSet cs;
    cs.intervals = {{lo, hi}};
    cs.hull_lo = lo;
    cs.hull_hi = hi;
    cs.empty = false;
    return cs;
}

}  // namespace

double sidak_level(double alpha, int cells) {
    if (!(alpha > 0.0 && alpha < 1.0) || cells < 1) throw ConfigError("invalid Sidak level arguments");
    return std::pow(1.0 - alpha, 1.0 / cells);
}

ConfidenceSet aggregate_known_mass(const std::vector<CellCI>& cells, const Eigen::VectorXd& mass) {
    check_cells(cells);
    if (mass.size() != static_cast<Eigen::Index>(cells.size())) throw ConfigError("mass vector has wrong length");
    if ((mass.array() < 0.0).any() || std::abs(mass.sum() - 1.0) > 1e-10)
        throw ConfigError("covariate mass must sum to 1");
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        lo += mass[static_cast<Eigen::Index>(i)] * cells[i].lo;
        hi += mass[static_cast<Eigen::Index>(i)] * cells[i].hi;
    }
    return single_interval(lo, hi);
}

double simplex_box_min(const Eigen::VectorXd& coef, const std::vector<std::pair<double, double>>& box) {
    const int W = static_cast<int>(box.size());
    if (coef.size() != W || W < 1) throw ConfigError("mass box has wrong length");
    if (W > 24) throw ConfigError("corner enumeration supports at most 24 covariate cells");
    const double tol = 1e-12;
    double best = std::numeric_limits<double>::infinity();
    // Vertices of the box-simplex polytope: all coordinates but one at a bound, the last fixed by sum q = 1.
    for (int free = 0; free < W; ++free) {
        const unsigned long combos = 1UL << (W - 1);
        for (unsigned long mask = 0; mask < combos; ++mask) {
            double sum = 0.0, value = 0.0;
            int bit = 0;
            for (int i = 0; i < W; ++i) {
                if (i == free) continue;
                const double qi = (mask >> bit++) & 1UL ? box[i].second : box[i].first;
                sum += qi;
                value += coef[i] * qi;
            }
            const double qf = 1.0 - sum;
            if (qf < box[free].first - tol || qf > box[free].second + tol) continue;
            value += coef[free] * qf;
            best = std::min(best, value);
        }
    }
    if (!std::isfinite(best)) throw DataError("mass confidence box does not intersect the simplex");
    return best;
}

ConfidenceSet aggregate_estimated_mass(const std::vector<CellCI>& cells,
                                       const std::vector<std::pair<double, double>>& mass_ci, double alpha2) {
    check_cells(cells);
    if (mass_ci.size() != cells.size()) throw ConfigError("mass confidence box has wrong length");
    const double expected = sidak_level(alpha2, static_cast<int>(cells.size()));
    if (std::abs(cells.front().level - expected) > 1e-9)
        throw ConfigError("level mismatch: cells must be built at (1 - alpha2)^(1/cells)");
    for (const auto& [lo, hi] : mass_ci)
        if (!(lo <= hi)) throw ConfigError("mass interval has lo > hi");
    const Eigen::Index W = static_cast<Eigen::Index>(cells.size());
    Eigen::VectorXd lo(W), hi(W);
    for (Eigen::Index i = 0; i < W; ++i) {
        lo[i] = cells[static_cast<std::size_t>(i)].lo;
        hi[i] = cells[static_cast<std::size_t>(i)].hi;
    }
    // q >= 0, so for fixed q the extremes use the interval endpoints.
    return single_interval(simplex_box_min(lo, mass_ci), -simplex_box_min(-hi, mass_ci));
}

std::vector<std::pair<double, double>> mass_wald_box(const Eigen::VectorXd& q_hat, long n, double alpha1) {
    if (!(alpha1 > 0.0 && alpha1 < 1.0)) throw ConfigError("alpha1 must lie in (0,1)");
    if (n < 1) throw ConfigError("sample size must be positive");
    const auto W = q_hat.size();
    const double z = normal_quantile(1.0 - alpha1 / (2.0 * static_cast<double>(W)));
    std::vector<std::pair<double, double>> box;
    for (Eigen::Index i = 0; i < W; ++i) {
        const double se = std::sqrt(q_hat[i] * (1.0 - q_hat[i]) / static_cast<double>(n));
        box.emplace_back(std::max(0.0, q_hat[i] - z * se), std::min(1.0, q_hat[i] + z * se));
    }
    return box;
}

}  // namespace mte
