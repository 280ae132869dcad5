#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mte/aggregate.hpp"
#include "mte/bias.hpp"
#include "mte/error.hpp"
#include "mte/json_io.hpp"
#include "mte/linear.hpp"
#include "mte/mlc.hpp"
#include "mte/montecarlo.hpp"
#include "mte/parallel.hpp"

using namespace mte;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
    // data
    std::string input;
    std::string cells;
    std::string y = "y", d = "d", z = "z";
    std::vector<std::string> z_order;
    // model and target
    int order = 1;
    double theta_bound = 10.0;
    double wald_theta_bound = 0.0;
    std::string target = "ate";
    int late_k = 1;
    double mte_u = 0.5;
    double eps = 0.05;
    double eps_lo = 0.1;
    double eps_hi = 0.9;
    double phi = 30.0;
    std::string weight_variance = "auto";
    // inference
    std::string method = "mlc";
    double alpha = 0.05;
    double lambda = 0.0;
    int k = -1;
    int draws = 2000;
    int quantile_draws = 200000;
    double a = 0.05;
    double kappa = 1e-6;
    double r = 0.5;
    int starts = 8;
    long max_evals = 2000;
    int points = 101;
    double grid_lo = 0.0, grid_hi = 0.0;
    // covariate aggregation
    std::string by;
    std::string aggregate = "sidak";
    double alpha1 = -1.0;
    bool known_mass = false;
    // pretest
    double gamma = 0.10;
    // bias
    std::string grid = "bxd";
    int resolution = 21;
    double bias_lo = -5.0, bias_hi = 5.0;
    long sim_n = 0;
    // simulate
    std::string mode = "size";
    std::string design = "quadratic";
    std::vector<double> p;
    long n = 0;
    int reps = 500;
    std::vector<std::string> methods{"mlc", "wald"};
    int grid_points = 21;
    std::vector<double> lambdas{-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5};
    std::string checkpoint;
    int max_points = -1;
    std::string w_label;
    // run
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out;
    std::string cache_dir;
    std::string config;
};

// --- option groups -------------------------------------------------------------------------

void add_run_options(CLI::App* s, Options& o) {
    s->add_option("--config", o.config, "Flat key = value file; keys are long option names, flags override it");
    s->add_option("--seed", o.seed, "Root random seed");
    s->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    s->add_option("--out", o.out, "Output file (stdout when empty)");
}

void add_data_options(CLI::App* s, Options& o) {
    s->add_option("--input,-i", o.input, "CSV with outcome, treatment and instrument columns");
    s->add_option("--cells", o.cells, "Cell statistics JSON written by 'mte cells' (instead of --input)");
    s->add_option("--y", o.y, "Outcome column");
    s->add_option("--d", o.d, "Treatment column (0/1)");
    s->add_option("--z", o.z, "Instrument column");
    s->add_option("--z-order", o.z_order, "Instrument level order; the first level is the baseline")->delimiter(',');
}

void add_model_options(CLI::App* s, Options& o) {
    s->add_option("--order", o.order, "Polynomial order M of the MTE")->check(CLI::PositiveNumber);
    s->add_option("--theta-bound", o.theta_bound, "Half-width of the parameter box");
    s->add_option("--wald-theta-bound", o.wald_theta_bound,
                  "Half-width of the box for the Wald estimator (0 uses --theta-bound)");
    s->add_option("--target", o.target,
                  "ate, mte, att, atu, late, prte-add, prte-prop, quota, mprte-add, mprte-prop");
    s->add_option("--late-k", o.late_k, "LATE compares instrument level k with the baseline");
    s->add_option("--mte-u", o.mte_u, "Evaluation point of the MTE target");
    s->add_option("--eps", o.eps, "Policy shift of PRTE targets");
    s->add_option("--eps-lo", o.eps_lo, "Quota policy lower propensity");
    s->add_option("--eps-hi", o.eps_hi, "Quota policy upper propensity");
    s->add_option("--phi", o.phi, "Quota policy smoothing");
    s->add_option("--weight-variance", o.weight_variance,
                  "Account for estimated target weights: auto, yes or no")
        ->check(CLI::IsMember({"auto", "yes", "no"}));
}

void add_inference_options(CLI::App* s, Options& o) {
    s->add_option("--alpha", o.alpha, "Significance level");
    s->add_option("--k", o.k, "AR moment index (default: last level)");
    s->add_option("--draws", o.draws, "Conditional Wald simulation draws");
    s->add_option("--quantile-draws", o.quantile_draws, "Draws for the MLC mixture quantile");
    s->add_option("--a", o.a, "Weight on the AR component of MLC");
    s->add_option("--kappa", o.kappa, "Scale of the gradient perturbation");
    s->add_option("--r", o.r, "Split of the estimated-weight correction between arms");
    s->add_option("--starts", o.starts, "Optimizer starts");
    s->add_option("--max-evals", o.max_evals, "Optimizer evaluations per start");
    s->add_option("--cache-dir", o.cache_dir, "Directory caching mixture quantiles");
}

void add_method_option(CLI::App* s, Options& o) {
    s->add_option("--method", o.method, "ar, cwald, mlc or wald")->check(CLI::IsMember({"ar", "cwald", "mlc", "wald"}));
}

void add_grid_options(CLI::App* s, Options& o) {
    s->add_option("--points", o.points, "Grid points for test inversion");
    s->add_option("--grid-lo", o.grid_lo, "Fixed grid lower end (adaptive grid when lo = hi)");
    s->add_option("--grid-hi", o.grid_hi, "Fixed grid upper end");
}

// --- helpers -------------------------------------------------------------------------------

Target make_target(const Options& o) {
    switch (parse_target_kind(o.target)) {
        case TargetKind::ATE: return Target::ate();
        case TargetKind::MTE: return Target::mte(o.mte_u);
        case TargetKind::ATT: return Target::att();
        case TargetKind::ATU: return Target::atu();
        case TargetKind::LATE: return Target::late(o.late_k);
        case TargetKind::AdditivePRTE: return Target::additive_prte(o.eps);
        case TargetKind::ProportionalPRTE: return Target::proportional_prte(o.eps);
        case TargetKind::Quota: return Target::quota(o.eps_lo, o.eps_hi, o.phi);
        case TargetKind::AdditiveMPRTE: return Target::additive_mprte();
        case TargetKind::ProportionalMPRTE: return Target::proportional_mprte();
    }
    throw ConfigError("unknown target");
}

bool estimated_weights(const Options& o, const Target& t) {
    if (o.weight_variance == "auto") return t.estimated();
    return o.weight_variance == "yes";
}

Schema make_schema(const Options& o) {
    Schema s;
    s.y = o.y;
    s.d = o.d;
    s.z = o.z;
    s.w = o.by;
    s.z_order = o.z_order;
    return s;
}

CellStats load_stats(const Options& o) {
    if (!o.cells.empty()) {
        std::ifstream in(o.cells);
        if (!in) throw ConfigError("cannot open cell statistics file '" + o.cells + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("cell statistics file is not valid JSON: " + std::string(e.what()));
        }
        return cell_stats_from_json(j.contains("cells") ? j["cells"] : j);
    }
    if (o.input.empty()) throw ConfigError("missing input: pass --input or --cells");
    return cell_stats(load_csv(o.input, make_schema(o)));
}

MteSpec make_spec(const Options& o) {
    if (!(o.theta_bound > 0.0)) throw ConfigError("theta-bound must be positive");
    return MteSpec::make(o.order, -o.theta_bound, o.theta_bound);
}

MlcOptions make_mlc_options(const Options& o, bool estimated) {
    MlcOptions m;
    m.a = o.a;
    m.kappa = o.kappa;
    m.alpha = o.alpha;
    m.r = o.r;
    m.estimated_weights = estimated;
    m.seed = o.seed;
    m.quantile_draws = o.quantile_draws;
    m.wald_bound = o.wald_theta_bound;
    return m;
}

OptSpec make_opt(const Options& o) {
    OptSpec s;
    s.starts = o.starts;
    s.max_evals = o.max_evals;
    return s;
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

json config_echo(const CLI::App* sub) {
    json c = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "out") continue;
        std::string v = opt->count() ? join(opt->reduced_results()) : opt->get_default_str();
        if (v.size() >= 2 && (v.front() == '[' || v.front() == '{')) v = v.substr(1, v.size() - 2);
        c[name] = v;
    }
    return c;
}

json envelope(const CLI::App* sub) {
    json j;
    j["version"] = kVersion;
    j["command"] = sub->get_name();
    j["config"] = config_echo(sub);
    return j;
}

void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw ConfigError("cannot write output file '" + o.out + "'");
    f << text;
}

void emit_json(const Options& o, const json& j) { emit(o, j.dump(2) + "\n"); }

json interval_json(double lo, double hi) { return json::array({lo, hi}); }

// --- inference dispatch --------------------------------------------------------------------

struct Inference {
    Options o;
    CellStats stats;
    MteSpec spec;
    Target target;
    WeightVector weight;
    bool estimated = false;

    Inference(const Options& opts, const CellStats& st) : o(opts), stats(st) {
        check_alpha(o.alpha);
        spec = make_spec(o);
        target = make_target(o);
        weight = weight_vector(target, spec, stats);
        estimated = estimated_weights(o, target);
        if (stats.zero_variance_warning)
            std::cerr << "warning: some (d, z) cell has zero outcome variance\n";
    }

    bool linear() const { return o.method == "ar" || o.method == "cwald"; }

    LinearMomentContext linear_ctx() const {
        if (o.order != 1) throw ConfigError("ar and cwald need --order 1");
        return LinearMomentContext::make(stats, weight, estimated);
    }

    MlcContext mlc_ctx(double alpha) const {
        MlcOptions m = make_mlc_options(o, estimated);
        m.alpha = alpha;
        return MlcContext::make(spec, stats, weight, m);
    }

    int ar_k() const {
        const int k = o.k > 0 ? o.k : stats.K();
        if (k > stats.K()) throw ConfigError("--k exceeds the number of non-baseline instrument levels");
        return k;
    }

    json test(double lambda) const {
        json j;
        if (o.method == "ar") {
            j["result"] = test_result_to_json(ar_test(linear_ctx(), ar_k(), lambda, o.alpha));
        } else if (o.method == "cwald") {
            j["result"] = test_result_to_json(cond_wald_test(linear_ctx(), lambda, o.alpha, o.draws, o.seed));
        } else if (o.method == "mlc") {
            const auto ctx = mlc_ctx(o.alpha);
            const auto r = mlc_test(ctx, lambda, make_opt(o));
            j["result"] = test_result_to_json(r.test);
            if (r.profile.feasible) j["minimizer_theta"] = vector_to_json(r.profile.minimizer_theta);
        } else {
            const auto ctx = mlc_ctx(o.alpha);
            const auto fit = efficient_estimate(ctx, make_opt(o));
            j["result"] = test_result_to_json(classical_wald(ctx, lambda, fit));
            j["theta_hat"] = vector_to_json(fit.theta);
        }
        return j;
    }

    ConfidenceSet confidence_set(double alpha) const {
        const bool fixed = o.grid_hi > o.grid_lo;
        const GridSpec grid{o.grid_lo, o.grid_hi, o.points};
        if (o.method == "wald") {
            const auto ctx = mlc_ctx(alpha);
            const auto [lo, hi] = wald_interval(ctx, efficient_estimate(ctx, make_opt(o)));
            ConfidenceSet cs;
            cs.intervals = {{lo, hi}};
            cs.hull_lo = lo;
            cs.hull_hi = hi;
            cs.empty = false;
            cs.grid = {lo, hi, 2};
            return cs;
        }
        if (o.method == "mlc") {
            const auto ctx = mlc_ctx(alpha);
            if (!fixed) return mlc_confidence_set(ctx, make_opt(o), o.points, o.threads);
            OptSpec decide = make_opt(o);
            decide.stop_below = mixture_quantile(ctx.options.a, ctx.K(), alpha, ctx.options.quantile_draws,
                                                 ctx.options.quantile_seed);
            return invert_ci([&](double l) { return mlc_test(ctx, l, decide).test.reject; }, grid, o.threads);
        }
        const auto ctx = linear_ctx();
        const int k = ar_k();
        std::function<bool(double)> rejects;
        if (o.method == "ar")
            rejects = [&](double l) { return ar_test(ctx, k, l, alpha).reject; };
        else
            rejects = [&](double l) { return cond_wald_test(ctx, l, alpha, o.draws, o.seed).reject; };
        if (fixed) return invert_ci(rejects, grid, o.threads);
        const auto est = linear_point_estimate(ctx);
        const double half = std::isfinite(est.se) && est.se > 0.0 ? 10.0 * est.se : 10.0;
        return invert_ci_adaptive(rejects, est.estimate, half, o.points, o.threads);
    }
};

// --- subcommands ---------------------------------------------------------------------------

void run_cells(const CLI::App* sub, const Options& o) {
    const CellStats st = load_stats(o);
    json j = envelope(sub);
    j["cells"] = cell_stats_to_json(st);
    j["covariance"] = covariance_to_json(covariance_estimates(st));
    emit_json(o, j);
}

void run_test(const CLI::App* sub, const Options& o) {
    const Inference inf(o, load_stats(o));
    json j = envelope(sub);
    j["method"] = o.method;
    j["target"] = inf.target.name();
    j["lambda"] = o.lambda;
    const json result = inf.test(o.lambda);
    for (const auto& [key, value] : result.items()) j[key] = value;
    emit_json(o, j);
}

void run_ci(const CLI::App* sub, const Options& o) {
    json j = envelope(sub);
    j["method"] = o.method;
    j["target"] = o.target;
    if (o.by.empty()) {
        const Inference inf(o, load_stats(o));
        j["confidence_set"] = confidence_set_to_json(inf.confidence_set(o.alpha));
        emit_json(o, j);
        return;
    }
    if (o.aggregate != "sidak") throw ConfigError("unknown aggregation '" + o.aggregate + "'");
    if (o.input.empty()) throw ConfigError("--by needs --input");
    check_alpha(o.alpha);
    const Dataset data = load_csv(o.input, make_schema(o));
    const int W = static_cast<int>(data.covariate_levels.size());
    const double alpha1 = o.known_mass ? 0.0 : (o.alpha1 < 0.0 ? o.alpha / 5.0 : o.alpha1);
    if (!o.known_mass && !(alpha1 > 0.0 && alpha1 < o.alpha)) throw ConfigError("alpha1 must lie in (0, alpha)");
    const double alpha2 = o.alpha - alpha1;
    const double level = sidak_level(alpha2, W);
    std::vector<CellCI> cells;
    Eigen::VectorXd shares(W);
    json cj = json::array();
    bool any_empty = false;
    for (int w = 0; w < W; ++w) {
        const Dataset sub_data = covariate_subset(data, w);
        shares[w] = static_cast<double>(sub_data.size()) / static_cast<double>(data.size());
        const Inference inf(o, cell_stats(sub_data));
        const ConfidenceSet cs = inf.confidence_set(1.0 - level);
        any_empty = any_empty || cs.empty;
        cells.push_back({data.covariate_levels[w], cs.hull_lo, cs.hull_hi, level});
        json c = confidence_set_to_json(cs);
        c["w"] = data.covariate_levels[w];
        c["mass"] = shares[w];
        cj.push_back(c);
    }
    j["cells"] = cj;
    j["cell_level"] = level;
    if (any_empty) {
        j["aggregate"] = {{"empty", true}};
    } else if (o.known_mass) {
        j["aggregate"] = confidence_set_to_json(aggregate_known_mass(cells, shares));
    } else {
        const auto box = mass_wald_box(shares, static_cast<long>(data.size()), alpha1);
        json bj = json::array();
        for (const auto& [lo, hi] : box) bj.push_back(interval_json(lo, hi));
        j["alpha1"] = alpha1;
        j["mass_box"] = bj;
        j["aggregate"] = confidence_set_to_json(aggregate_estimated_mass(cells, box, alpha2));
    }
    emit_json(o, j);
}

void run_pretest(const CLI::App* sub, const Options& o) {
    Options mo = o;
    mo.method = "mlc";
    const Inference inf(mo, load_stats(mo));
    const auto ctx = inf.mlc_ctx(o.alpha);
    const auto res = pretest_ics(ctx, o.gamma, make_opt(o), o.points, o.threads);
    json j = envelope(sub);
    j["target"] = inf.target.name();
    j["weak_identification"] = res.weak;
    j["a_gamma"] = res.a_gamma;
    j["wald_set"] = interval_json(res.wald_set.first, res.wald_set.second);
    j["robust_set"] = confidence_set_to_json(res.robust_set);
    j["reported"] = res.weak ? "robust" : "wald";
    emit_json(o, j);
}

void run_bias(const Options& o) {
    if (o.grid != "bxd") throw ConfigError("unknown bias grid '" + o.grid + "'; only bxd is supported");
    if (o.resolution < 2) throw ConfigError("resolution must be at least 2");
    const int R = o.resolution;
    std::vector<std::array<double, 6>> rows(static_cast<std::size_t>(R) * R);
    const Eigen::VectorXd w1 = Eigen::VectorXd::Ones(1);
    parallel_for(rows.size(), o.threads, [&](std::size_t idx) {
        SelectionDesign g;
        g.b = o.bias_lo + (o.bias_hi - o.bias_lo) * static_cast<double>(idx / R) / (R - 1);
        g.delta = o.bias_lo + (o.bias_hi - o.bias_lo) * static_cast<double>(idx % R) / (R - 1);
        const BiasInputs in = o.sim_n > 0
                                  ? moments_from_sample(simulate_selection_design(g, o.sim_n, o.seed + idx), g)
                                  : selection_design_moments(g);
        const EstimandBias b = bias_from_moments(in, &w1);
        rows[idx] = {g.b, g.delta, b.ate, b.cate, b.slope, g.mu1 - g.mu0 + b.ate};
    });
    std::ostringstream out;
    out << "b,delta,ate_bias,cate_bias,slope_bias,ate_estimand\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.10g,%.10g,%.10g,%.10g\n", r[0], r[1], r[2], r[3], r[4], r[5]);
        out << buf;
    }
    emit(o, out.str());
}

DgpSpec make_design(const Options& o) {
    DgpSpec d;
    if (o.design == "quadratic") {
        d = quadratic_design(o.p.empty() ? Eigen::Vector3d(0.5, 0.2, 0.8) : Eigen::Vector3d::Zero());
    } else if (o.design == "linear") {
        d = linear_design(o.p.empty() ? Eigen::Vector3d(0.2, 0.5, 0.8) : Eigen::Vector3d::Zero());
    } else {
        throw ConfigError("unknown design '" + o.design + "'");
    }
    if (!o.p.empty()) d.p = Eigen::Map<const Eigen::VectorXd>(o.p.data(), static_cast<Eigen::Index>(o.p.size()));
    if (o.n > 0) d.n = o.n;
    d.seed = o.seed;
    d.validate();
    return d;
}

void run_simulate(const Options& o) {
    const DgpSpec design = make_design(o);
    if (o.mode == "sample") {
        const Dataset data = dgp_sample(design);
        std::ostringstream out;
        out << "y,d,z" << (o.w_label.empty() ? "" : ",w") << "\n";
        char buf[128];
        for (const auto& r : data.records) {
            std::snprintf(buf, sizeof buf, "%.17g,%d,%s", r.y, r.d, data.instrument_levels[r.z].c_str());
            out << buf << (o.w_label.empty() ? "" : "," + o.w_label) << "\n";
        }
        emit(o, out.str());
        return;
    }
    check_alpha(o.alpha);
    if (!o.cache_dir.empty()) set_quantile_cache_dir(o.cache_dir);
    SweepOptions s;
    s.methods.clear();
    for (const auto& m : o.methods) s.methods.push_back(parse_method(m));
    s.reps = o.reps;
    s.alpha = o.alpha;
    s.seed = o.seed;
    s.threads = o.threads;
    s.target = make_target(o);
    s.mlc = make_mlc_options(o, estimated_weights(o, s.target));
    s.opt = make_opt(o);
    s.draws = o.draws;
    s.ar_k = o.k;
    s.checkpoint = o.checkpoint;
    s.max_points = o.max_points;
    s.theta_bound = o.theta_bound;
    s.wald_bound = o.wald_theta_bound;
    if (o.reps < 1) throw ConfigError("reps must be positive");
    SweepResult res;
    if (o.mode == "size") {
        if (o.grid_points < 2) throw ConfigError("grid-points must be at least 2");
        std::vector<std::pair<double, double>> grid;
        for (int i = 0; i < o.grid_points; ++i)
            for (int j = 0; j < o.grid_points; ++j)
                grid.emplace_back(0.05 + 0.9 * i / (o.grid_points - 1), 0.05 + 0.9 * j / (o.grid_points - 1));
        res = size_surface(design, grid, s);
    } else {
        res = power_curve(design, o.lambdas, s);
    }
    if (!res.complete) std::cerr << "note: sweep stopped early; rerun with the same checkpoint to resume\n";
    std::ostringstream out;
    res.write_csv(out);
    emit(o, out.str());
}

// --- config file ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Reads `key = value` lines ('#' starts a comment) into option tokens.
std::vector<std::string> config_tokens(const std::string& path, const CLI::App* sub) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::vector<std::string> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (key == "config" || !opt) throw ConfigError("unknown config key '" + key + "' for '" + sub->get_name() + "'");
        tokens.push_back("--" + key);
        if (opt->get_type_size() != 0) tokens.push_back(value);
        else if (value != "true") throw ConfigError("flag '" + key + "' only accepts true");
    }
    return tokens;
}

int exit_code(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    return 4;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Inference on marginal treatment effects with discrete instruments", "mte"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    CLI::App* cells = app.add_subcommand("cells", "Dump cell statistics and covariance estimates as JSON");
    add_data_options(cells, o);
    add_run_options(cells, o);

    CLI::App* test = app.add_subcommand("test", "Test H0: target = lambda");
    add_method_option(test, o);
    test->add_option("--lambda", o.lambda, "Hypothesized target value");
    add_data_options(test, o);
    add_model_options(test, o);
    add_inference_options(test, o);
    add_run_options(test, o);

    CLI::App* ci = app.add_subcommand("ci", "Confidence set by test inversion");
    add_method_option(ci, o);
    add_grid_options(ci, o);
    ci->add_option("--by", o.by, "Covariate column; builds per-cell sets and aggregates them");
    ci->add_option("--aggregate", o.aggregate, "Aggregation rule for --by")->check(CLI::IsMember({"sidak"}));
    ci->add_option("--alpha1", o.alpha1, "Level spent on the covariate mass box (default alpha/5)");
    ci->add_flag("--known-mass", o.known_mass, "Treat sample covariate shares as known");
    add_data_options(ci, o);
    add_model_options(ci, o);
    add_inference_options(ci, o);
    add_run_options(ci, o);

    CLI::App* pretest = app.add_subcommand("pretest", "Pretest for weak identification (MLC versus Wald)");
    pretest->add_option("--gamma", o.gamma, "Pretest level");
    pretest->add_option("--points", o.points, "Grid points for test inversion");
    add_data_options(pretest, o);
    add_model_options(pretest, o);
    add_inference_options(pretest, o);
    add_run_options(pretest, o);

    CLI::App* bias = app.add_subcommand("bias", "Estimand bias surface of the logit selection design (CSV)");
    bias->add_option("--grid", o.grid, "Grid axes");
    bias->add_option("--resolution", o.resolution, "Points per axis");
    bias->add_option("--lo", o.bias_lo, "Lower end of both axes");
    bias->add_option("--hi", o.bias_hi, "Upper end of both axes");
    bias->add_option("--sim-n", o.sim_n, "Estimate moments from a sample of this size (0: quadrature)");
    add_run_options(bias, o);

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo size surfaces, power curves and samples (CSV)");
    sim->add_option("mode", o.mode, "size, power or sample")->check(CLI::IsMember({"size", "power", "sample"}));
    sim->add_option("--design", o.design, "quadratic or linear")->check(CLI::IsMember({"quadratic", "linear"}));
    sim->add_option("--p", o.p, "Propensity per instrument level (design default when empty)")->delimiter(',');
    sim->add_option("--n", o.n, "Sample size (design default when 0)");
    sim->add_option("--reps", o.reps, "Replications per grid point");
    sim->add_option("--methods", o.methods, "Methods to evaluate")->delimiter(',');
    sim->add_option("--grid-points", o.grid_points, "Size surface points per axis over [0.05, 0.95]");
    sim->add_option("--lambdas", o.lambdas, "Power curve values")->delimiter(',');
    sim->add_option("--checkpoint", o.checkpoint, "Checkpoint file for resumable sweeps");
    sim->add_option("--max-points", o.max_points, "Stop after this many new grid points (-1: no limit)");
    sim->add_option("--w-label", o.w_label, "Covariate label column added to sample output");
    sim->add_option("--theta-bound", o.theta_bound, "Half-width of the parameter box");
    o.wald_theta_bound = 1000.0;
    sim->add_option("--wald-theta-bound", o.wald_theta_bound, "Half-width of the box for the Wald estimator");
    sim->add_option("--target", o.target, "Tested target");
    sim->add_option("--alpha", o.alpha, "Significance level");
    sim->add_option("--k", o.k, "AR moment index (default: last level)");
    sim->add_option("--draws", o.draws, "Conditional Wald simulation draws");
    sim->add_option("--quantile-draws", o.quantile_draws, "Draws for the MLC mixture quantile");
    sim->add_option("--a", o.a, "Weight on the AR component of MLC");
    sim->add_option("--kappa", o.kappa, "Scale of the gradient perturbation");
    sim->add_option("--starts", o.starts, "Optimizer starts");
    sim->add_option("--max-evals", o.max_evals, "Optimizer evaluations per start");
    sim->add_option("--cache-dir", o.cache_dir, "Directory caching mixture quantiles");
    add_run_options(sim, o);

    // Config file entries go in front of the command-line flags, which therefore take precedence.
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        auto it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
            return app.get_subcommand_no_throw(a) != nullptr;
        });
        if (it != args.end()) {
            CLI::App* sub = app.get_subcommand(*it);
            for (std::size_t i = 0; i < args.size(); ++i) {
                std::string path;
                if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
                if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
                if (path.empty()) continue;
                const auto tokens = config_tokens(path, sub);
                args.insert(it + 1, tokens.begin(), tokens.end());
                break;
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    // The Wald estimator box defaults to the model box except in Monte Carlo sweeps.
    const bool simulating = std::find(args.begin(), args.end(), "simulate") != args.end();
    o.wald_theta_bound = simulating ? 1000.0 : 0.0;

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!o.cache_dir.empty()) set_quantile_cache_dir(o.cache_dir);
        if (*cells) run_cells(cells, o);
        if (*test) run_test(test, o);
        if (*ci) run_ci(ci, o);
        if (*pretest) run_pretest(pretest, o);
        if (*bias) run_bias(o);
        if (*sim) run_simulate(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
