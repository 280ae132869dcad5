#include "mte/json_io.hpp"

#include "mte/error.hpp"

namespace mte {

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_to_json(m.row(i).transpose()));
    return a;
}

namespace {

Eigen::VectorXd vector_from_json(const json& j, const char* name) {
    if (!j.contains(name) || !j[name].is_array()) throw ConfigError(std::string("cell statistics lack field '") + name + "'");
    const auto& a = j[name];
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

}  // namespace

json cell_stats_to_json(const CellStats& s) {
    json j;
    j["q_hat"] = vector_to_json(s.q_hat);
    j["p_hat"] = vector_to_json(s.p_hat);
    j["beta1_hat"] = vector_to_json(s.beta1_hat);
    j["beta0_hat"] = vector_to_json(s.beta0_hat);
    j["sigma2"] = matrix_to_json(s.sigma2);
    json counts = json::array();
    for (int d = 0; d < 2; ++d) {
        json row = json::array();
        for (Eigen::Index l = 0; l < s.counts.cols(); ++l) row.push_back(s.counts(d, l));
        counts.push_back(row);
    }
    j["counts"] = counts;
    j["n"] = s.n;
    j["levels"] = s.levels;
    j["zero_variance_warning"] = s.zero_variance_warning;
    return j;
}

CellStats cell_stats_from_json(const json& j) {
    try {
        CellStats s;
        s.q_hat = vector_from_json(j, "q_hat");
        s.p_hat = vector_from_json(j, "p_hat");
        s.beta1_hat = vector_from_json(j, "beta1_hat");
        s.beta0_hat = vector_from_json(j, "beta0_hat");
        const auto L = s.q_hat.size();
        if (s.p_hat.size() != L || s.beta1_hat.size() != L || s.beta0_hat.size() != L || L < 1)
            throw ConfigError("cell statistics vectors differ in length");
        const auto& sg = j.at("sigma2");
        const auto& ct = j.at("counts");
        if (sg.size() != 2 || ct.size() != 2) throw ConfigError("sigma2 and counts must have two rows");
        s.sigma2.resize(2, L);
        s.counts.resize(2, L);
        for (int d = 0; d < 2; ++d) {
            if (sg[d].size() != static_cast<std::size_t>(L) || ct[d].size() != static_cast<std::size_t>(L))
                throw ConfigError("sigma2 and counts rows have wrong length");
            for (Eigen::Index l = 0; l < L; ++l) {
                s.sigma2(d, l) = sg[d][static_cast<std::size_t>(l)].get<double>();
                s.counts(d, l) = ct[d][static_cast<std::size_t>(l)].get<std::int64_t>();
            }
        }
        s.n = j.at("n").get<std::int64_t>();
        if (j.contains("levels")) {
            s.levels = j["levels"].get<std::vector<std::string>>();
        } else {
            for (Eigen::Index l = 0; l < L; ++l) s.levels.push_back("z" + std::to_string(l));
        }
        s.zero_variance_warning = (s.sigma2.array() == 0.0).any();
        if ((s.p_hat.array() <= 0.0).any() || (s.p_hat.array() >= 1.0).any() || (s.counts.array() < 1).any())
            throw OverlapError("overlap violated in cell statistics");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed cell statistics: ") + e.what());
    }
}

json covariance_to_json(const CovarianceSet& c) {
    json j;
    j["sigma_p"] = matrix_to_json(c.sigma_p);
    j["sigma_q"] = matrix_to_json(c.sigma_q);
    j["sigma_beta1"] = matrix_to_json(c.sigma_beta1);
    j["sigma_beta0"] = matrix_to_json(c.sigma_beta0);
    return j;
}

json test_result_to_json(const TestResult& r) {
    json j;
    j["statistic"] = r.statistic;
    j["critical_value"] = r.critical_value;
    j["reject"] = r.reject;
    j["level"] = r.level;
    if (std::isfinite(r.p_value)) j["p_value"] = r.p_value;
    json meta = json::object();
    for (const auto& [k, v] : r.meta) meta[k] = v;
    j["meta"] = meta;
    return j;
}

json confidence_set_to_json(const ConfidenceSet& cs) {
    json j;
    json ci = json::array();
    for (const auto& [lo, hi] : cs.intervals) ci.push_back(json::array({lo, hi}));
    j["ci"] = ci;
    if (cs.empty)
        j["hull"] = nullptr;
    else
        j["hull"] = json::array({cs.hull_lo, cs.hull_hi});
    j["empty"] = cs.empty;
    j["touches_grid_edge"] = cs.touches_lo || cs.touches_hi;
    j["grid"] = json::array({cs.grid.lo, cs.grid.hi, cs.grid.points});
    return j;
}

}  // namespace mte
