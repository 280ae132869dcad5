#include "mte/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mte {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             double step, double ftol, long max_evals, double xtol, double stop_value) {
    const int n = static_cast<int>(x0.size());
    NelderMeadResult res;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    if (n == 0) {
        res.x = x0;
        res.value = eval(x0);
        res.converged = true;
        return res;
    }
    // Dimension-adaptive coefficients keep the method effective beyond a handful of dimensions.
    const double dn = n;
    const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 0.5 / dn, delta = 1.0 - 1.0 / dn;

    std::vector<Eigen::VectorXd> simplex(n + 1, x0);
    std::vector<double> fv(n + 1);
    fv[0] = eval(x0);
    for (int i = 0; i < n; ++i) {
        simplex[i + 1][i] += step;
        fv[i + 1] = eval(simplex[i + 1]);
    }
    std::vector<int> order(n + 1);
    while (true) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = order.front(), worst = order.back(), second = order[n - 1];
        double diam = 0.0;
        for (int i = 0; i <= n; ++i) diam = std::max(diam, (simplex[i] - simplex[best]).lpNorm<Eigen::Infinity>());
        const double spread = fv[worst] - fv[best];
        if (fv[best] <= stop_value) {
            res.converged = true;
            break;
        }
        if (spread <= ftol * (1.0 + std::abs(fv[best])) && diam <= xtol) {
            res.converged = true;
            break;
        }
        if (res.evaluations >= max_evals) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= dn;

        const Eigen::VectorXd xr = centroid + alpha * (centroid - simplex[worst]);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[worst] = xe;
                fv[worst] = fe;
            } else {
                simplex[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            simplex[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const Eigen::VectorXd xc =
            outside ? Eigen::VectorXd(centroid + gamma * (xr - centroid))
                    : Eigen::VectorXd(centroid + gamma * (simplex[worst] - centroid));
        const double fc = eval(xc);
        if (fc < std::min(fr, fv[worst])) {
            simplex[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (int i = 0; i <= n; ++i) {
            if (i == best) continue;
            simplex[i] = simplex[best] + delta * (simplex[i] - simplex[best]);
            fv[i] = eval(simplex[i]);
        }
    }
    const int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    res.x = simplex[best];
    res.value = fv[best];
    return res;
}

}  // namespace mte
