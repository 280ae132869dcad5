#include "mte/montecarlo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "mte/error.hpp"
#include "mte/linear.hpp"
#include "mte/parallel.hpp"
#include "mte/rng.hpp"

namespace mte {

void DgpSpec::validate() const {
    if (order < 1) throw ConfigError("DGP order must be at least 1");
    if (rho1.size() != order || rho0.size() != order) throw ConfigError("DGP rho loadings must have length M");
    if (p.size() < 2) throw ConfigError("DGP needs at least two instrument levels");
    if (((p.array() <= 0.0) || (p.array() >= 1.0)).any()) throw ConfigError("DGP propensities must lie in (0,1)");
    if (q.size() != 0) {
        if (q.size() != p.size()) throw ConfigError("DGP mass vector has wrong length");
        if ((q.array() < 0.0).any() || std::abs(q.sum() - 1.0) > 1e-10) throw ConfigError("DGP mass must be a simplex vector");
    }
    if (n < 50) throw ConfigError("DGP sample size must be at least 50");
    if (!(error_var >= 0.0)) throw ConfigError("DGP error variance must be nonnegative");
}

Eigen::VectorXd DgpSpec::theta() const {
    Eigen::VectorXd t(2 * (order + 1));
    t << mu1, rho1, mu0, rho0;
    return t;
}

DgpSpec quadratic_design(const Eigen::VectorXd& p, long n) {
    DgpSpec s;
    s.order = 2;
    s.rho1 = Eigen::Vector2d(-5.0, -5.0);
    s.rho0 = Eigen::Vector2d(5.0, 5.0);
    s.error_var = 0.5;
    s.p = p;
    s.n = n;
    return s;
}

DgpSpec linear_design(const Eigen::VectorXd& p, long n) {
    DgpSpec s;
    s.order = 1;
    s.rho1 = Eigen::VectorXd::Constant(1, 5.0);
    s.rho0 = Eigen::VectorXd::Constant(1, 5.0);
    s.error_var = 0.5;
    s.p = p;
    s.n = n;
    return s;
}

Dataset dgp_sample(const DgpSpec& spec) {
    spec.validate();
    const int L = static_cast<int>(spec.p.size());
    Eigen::VectorXd q = spec.q.size() ? spec.q : Eigen::VectorXd::Constant(L, 1.0 / L);
    std::vector<double> cum(L);
    double acc = 0.0;
    for (int l = 0; l < L; ++l) cum[l] = (acc += q[l]);
    cum[L - 1] = 1.0;

    const MteSpec basis = MteSpec::make(spec.order);
    auto rng = make_rng(spec.seed, kStreamData);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    const double sd = std::sqrt(spec.error_var);

    Dataset data;
    for (int l = 0; l < L; ++l) data.instrument_levels.push_back("z" + std::to_string(l));
    data.records.resize(spec.n);
    for (long i = 0; i < spec.n; ++i) {
        const double uz = unif(rng);
        int z = 0;
        while (z < L - 1 && uz >= cum[z]) ++z;
        const double u = unif(rng);
        const double e1 = sd * normal(rng), e0 = sd * normal(rng);
        double y1 = spec.mu1 + e1, y0 = spec.mu0 + e0;
        for (int m = 1; m <= spec.order; ++m) {
            const double h = basis_h(basis, m, u);
            y1 += spec.rho1[m - 1] * h;
            y0 += spec.rho0[m - 1] * h;
        }
        Record& r = data.records[i];
        r.z = z;
        r.d = u <= spec.p[z] ? 1 : 0;
        r.y = r.d ? y1 : y0;
    }
    return data;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::AR: return "ar";
        case Method::CWald: return "cwald";
        case Method::MLC: return "mlc";
        case Method::Wald: return "wald";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (auto m : {Method::AR, Method::CWald, Method::MLC, Method::Wald})
        if (method_name(m) == name) return m;
    throw ConfigError("unknown method '" + name + "'");
}

std::vector<std::vector<bool>> evaluate_methods(const CellStats& stats, int order, const std::vector<double>& lambdas,
                                                const SweepOptions& opt, std::uint64_t seed) {
    const std::size_t nm = opt.methods.size();
    std::vector<std::vector<bool>> out(lambdas.size(), std::vector<bool>(nm, false));
    const MteSpec spec = MteSpec::make(order, -opt.theta_bound, opt.theta_bound);
    const WeightVector weight = weight_vector(opt.target, spec, stats);

    bool need_mlc = false, need_linear = false;
    for (auto m : opt.methods) {
        need_mlc = need_mlc || m == Method::MLC || m == Method::Wald;
        need_linear = need_linear || m == Method::AR || m == Method::CWald;
    }
    std::unique_ptr<MlcContext> mctx;
    EfficientFit fit;
    double cv = 0.0;
    if (need_mlc) {
        MlcOptions mo = opt.mlc;
        mo.alpha = opt.alpha;
        mo.seed = stream_seed(seed, 11);
        mo.wald_bound = opt.wald_bound;
        mctx = std::make_unique<MlcContext>(MlcContext::make(spec, stats, weight, mo));
        fit = efficient_estimate(*mctx, opt.opt);
        cv = mixture_quantile(mo.a, stats.K(), mo.alpha, mo.quantile_draws, mo.quantile_seed);
    }
    std::unique_ptr<LinearMomentContext> lctx;
    if (need_linear) {
        if (order != 1) throw ConfigError("AR and conditional Wald tests need a model of order 1");
        lctx = std::make_unique<LinearMomentContext>(
            LinearMomentContext::make(stats, weight, opt.mlc.estimated_weights));
    }
    const int ar_k = opt.ar_k > 0 ? opt.ar_k : stats.K();
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        const double lambda = lambdas[li];
        for (std::size_t mi = 0; mi < nm; ++mi) {
            switch (opt.methods[mi]) {
                case Method::AR:
                    out[li][mi] = ar_test(*lctx, ar_k, lambda, opt.alpha).reject;
                    break;
                case Method::CWald:
                    out[li][mi] = cond_wald_test(*lctx, lambda, opt.alpha, opt.draws, stream_seed(seed, 12)).reject;
                    break;
                case Method::Wald:
                    out[li][mi] = classical_wald(*mctx, lambda, fit).reject;
                    break;
                case Method::MLC: {
                    OptSpec o = opt.opt;
                    o.stop_below = cv;
                    const auto pr = profile_mlc(*mctx, lambda, o, &fit.theta);
                    out[li][mi] = !pr.feasible || pr.inf_value > cv;
                    break;
                }
            }
        }
    }
    return out;
}

namespace {

// Counts per (row, method) for one unit of work, followed by the number of failed replications.
using Counts = std::vector<long>;

struct Checkpoint {
    std::string path;
    std::string header;
    std::map<int, Counts> done;

    void load(std::size_t width) {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) return;
        std::string line;
        if (!std::getline(in, line)) return;
        if (line != header) throw ConfigError("checkpoint '" + path + "' was written by a different sweep configuration");
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            int unit = 0;
            Counts c(width);
            if (!(ss >> unit)) continue;
            bool ok = true;
            for (auto& v : c) ok = ok && static_cast<bool>(ss >> v);
            if (ok) done[unit] = c;  // a torn final line is recomputed
        }
    }

    void append(int unit, const Counts& c) {
        if (path.empty()) return;
        const bool fresh = !std::ifstream(path).good();
        std::ofstream out(path, std::ios::app);
        if (fresh) out << header << "\n";
        out << unit;
        for (auto v : c) out << ' ' << v;
        out << "\n";
    }
};

// Runs `units` units of `reps_per_unit` replications; unit results are checkpointed as they finish.
template <typename RepFn>
std::vector<Counts> run_units(int units, int reps_per_unit, std::size_t width, const SweepOptions& opt,
                              const std::string& header, RepFn&& rep_fn, bool& complete) {
    Checkpoint ck{opt.checkpoint, header, {}};
    ck.load(width + 1);
    std::vector<Counts> results(units);
    int fresh = 0;
    complete = true;
    for (int u = 0; u < units; ++u) {
        if (auto it = ck.done.find(u); it != ck.done.end()) {
            results[u] = it->second;
            continue;
        }
        if (opt.max_points >= 0 && fresh >= opt.max_points) {
            complete = false;
            continue;
        }
        std::vector<Counts> per_rep(reps_per_unit, Counts(width + 1, 0));
        parallel_for(reps_per_unit, opt.threads, [&](std::size_t r) {
            try {
                const auto dec = rep_fn(u, static_cast<int>(r));
                for (std::size_t i = 0; i < width; ++i) per_rep[r][i] = dec[i] ? 1 : 0;
            } catch (const DataError&) {
                per_rep[r][width] = 1;
            } catch (const NumericalError&) {
                per_rep[r][width] = 1;
            }
        });
        Counts total(width + 1, 0);
        for (const auto& c : per_rep)
            for (std::size_t i = 0; i <= width; ++i) total[i] += c[i];
        results[u] = total;
        ck.append(u, total);
        ++fresh;
    }
    return results;
}

std::vector<bool> flatten(const std::vector<std::vector<bool>>& d) {
    std::vector<bool> out;
    for (const auto& row : d) out.insert(out.end(), row.begin(), row.end());
    return out;
}

double true_value(const DgpSpec& design, const Target& target) {
    const int L = static_cast<int>(design.p.size());
    const Eigen::VectorXd q = design.q.size() ? design.q : Eigen::VectorXd::Constant(L, 1.0 / L);
    const Eigen::VectorXd c1 = weight_c1(target, design.order, design.p, q);
    const Eigen::VectorXd th = design.theta();
    return c1.dot(th.head(design.order + 1)) - c1.dot(th.tail(design.order + 1));
}

std::string sweep_header(const std::string& kind, const SweepOptions& opt, std::size_t units) {
    std::ostringstream h;
    h << "# " << kind << " seed=" << opt.seed << " reps=" << opt.reps << " units=" << units << " methods=";
    for (auto m : opt.methods) h << method_name(m) << ';';
    return h.str();
}

}  // namespace

SweepResult size_surface(const DgpSpec& base, const std::vector<std::pair<double, double>>& grid,
                         const SweepOptions& opt) {
    if (base.p.size() != 3) throw ConfigError("size surfaces need three instrument levels");
    const std::size_t nm = opt.methods.size();
    auto design_at = [&](int u) {
        DgpSpec d = base;
        d.p[1] = grid[u].first;
        d.p[2] = grid[u].second;
        return d;
    };
    SweepResult res;
    res.kind = "size";
    res.seed = opt.seed;
    const auto counts = run_units(
        static_cast<int>(grid.size()), opt.reps, nm, opt, sweep_header("size", opt, grid.size()),
        [&](int u, int r) {
            DgpSpec d = design_at(u);
            d.seed = stream_seed(opt.seed, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(r), kStreamData);
            const CellStats stats = cell_stats(dgp_sample(d));
            const double truth = true_value(d, opt.target);
            return flatten(evaluate_methods(stats, d.order, {truth}, opt,
                                            stream_seed(opt.seed, static_cast<std::uint64_t>(u),
                                                        static_cast<std::uint64_t>(r), 99)));
        },
        res.complete);
    for (std::size_t u = 0; u < grid.size(); ++u) {
        if (counts[u].empty()) continue;
        for (std::size_t mi = 0; mi < nm; ++mi) {
            SweepRow row;
            row.x1 = grid[u].first;
            row.x2 = grid[u].second;
            row.method = opt.methods[mi];
            row.reps = opt.reps;
            row.rate = static_cast<double>(counts[u][mi]) / opt.reps;
            row.mc_se = std::sqrt(row.rate * (1.0 - row.rate) / opt.reps);
            res.rows.push_back(row);
        }
    }
    return res;
}

SweepResult power_curve(const DgpSpec& design, const std::vector<double>& lambdas, const SweepOptions& opt) {
    const std::size_t nm = opt.methods.size();
    const std::size_t width = nm * lambdas.size();
    constexpr int kChunk = 25;
    const int units = (opt.reps + kChunk - 1) / kChunk;
    SweepResult res;
    res.kind = "power";
    res.seed = opt.seed;
    // Unit u covers replications [u*kChunk, min(reps, (u+1)*kChunk)); surplus slots report no rejection.
    const auto counts = run_units(
        units, kChunk, width, opt, sweep_header("power", opt, units),
        [&](int u, int r) {
            const int rep = u * kChunk + r;
            if (rep >= opt.reps) return std::vector<bool>(width, false);
            DgpSpec d = design;
            d.seed = stream_seed(opt.seed, 0, static_cast<std::uint64_t>(rep), kStreamData);
            const CellStats stats = cell_stats(dgp_sample(d));
            return flatten(evaluate_methods(stats, d.order, lambdas, opt,
                                            stream_seed(opt.seed, 0, static_cast<std::uint64_t>(rep), 99)));
        },
        res.complete);
    Counts total(width + 1, 0);
    for (const auto& c : counts)
        for (std::size_t i = 0; i < c.size(); ++i) total[i] += c[i];
    if (!res.complete) return res;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        for (std::size_t mi = 0; mi < nm; ++mi) {
            SweepRow row;
            row.x1 = lambdas[li];
            row.method = opt.methods[mi];
            row.reps = opt.reps;
            row.rate = static_cast<double>(total[li * nm + mi]) / opt.reps;
            row.mc_se = std::sqrt(row.rate * (1.0 - row.rate) / opt.reps);
            res.rows.push_back(row);
        }
    }
    return res;
}

void SweepResult::write_csv(std::ostream& out) const {
    char buf[256];
    out << (kind == "size" ? "p1,p2,method,reject_rate,reps,mc_se\n" : "lambda,method,reject_rate,reps,mc_se\n");
    for (const auto& r : rows) {
        if (kind == "size")
            std::snprintf(buf, sizeof buf, "%.6g,%.6g,%s,%.6f,%d,%.6f\n", r.x1, r.x2, method_name(r.method).c_str(),
                          r.rate, r.reps, r.mc_se);
        else
            std::snprintf(buf, sizeof buf, "%.6g,%s,%.6f,%d,%.6f\n", r.x1, method_name(r.method).c_str(), r.rate,
                          r.reps, r.mc_se);
        out << buf;
    }
}

double SweepResult::rate(double x1, double x2, Method m) const {
    for (const auto& r : rows)
        if (std::abs(r.x1 - x1) < 1e-12 && std::abs(r.x2 - x2) < 1e-12 && r.method == m) return r.rate;
    throw ConfigError("no sweep row at the requested coordinates");
}

}  // namespace mte
