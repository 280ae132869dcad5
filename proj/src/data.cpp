#include "mte/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mte/error.hpp"

namespace mte {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("missing column '" + name + "'");
    return static_cast<int>(it - header.begin());
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

int intern(std::unordered_map<std::string, int>& index, std::vector<std::string>& levels, const std::string& key) {
    const auto it = index.find(key);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(levels.size());
    index.emplace(key, id);
    levels.push_back(key);
    return id;
}

}  // namespace

Dataset parse_csv(std::istream& in, const Schema& schema) {
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw DataError("empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);
    const int cy = find_column(header, schema.y);
    const int cd = find_column(header, schema.d);
    const int cz = find_column(header, schema.z);
    const int cw = schema.w.empty() ? -1 : find_column(header, schema.w);

    Dataset data;
    std::unordered_map<std::string, int> zindex, windex;
    for (const auto& lvl : schema.z_order) intern(zindex, data.instrument_levels, lvl);
    const bool fixed_order = !schema.z_order.empty();

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw DataError("row " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields, expected " +
                            std::to_string(header.size()));
        Record r;
        if (!parse_double(f[cy], r.y)) throw DataError("invalid outcome value at row " + std::to_string(lineno));
        double dv = 0.0;
        if (!parse_double(f[cd], dv) || (dv != 0.0 && dv != 1.0))
            throw DataError("invalid treatment value '" + f[cd] + "' at row " + std::to_string(lineno));
        r.d = dv == 1.0 ? 1 : 0;
        if (fixed_order) {
            const auto it = zindex.find(f[cz]);
            if (it == zindex.end())
                throw DataError("instrument value '" + f[cz] + "' not in the configured ordering");
            r.z = it->second;
        } else {
            r.z = intern(zindex, data.instrument_levels, f[cz]);
        }
        if (cw >= 0) r.w = intern(windex, data.covariate_levels, f[cw]);
        data.records.push_back(r);
    }
    if (data.records.empty()) throw DataError("empty file");
    return data;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input file '" + path + "'");
    return parse_csv(in, schema);
}

Dataset covariate_subset(const Dataset& data, int w) {
    Dataset out;
    out.instrument_levels = data.instrument_levels;
    for (const auto& r : data.records) {
        if (r.w == w) out.records.push_back(r);
    }
    return out;
}

Eigen::VectorXd CellStats::beta_hat() const {
    Eigen::VectorXd b(2 * q_hat.size());
    b << beta1_hat, beta0_hat;
    return b;
}

CellStats cell_stats(const Dataset& data) {
    const int L = data.num_levels();
    if (L < 1 || data.records.empty()) throw DataError("empty dataset");
    CellStats s;
    s.levels = data.instrument_levels;
    s.n = static_cast<std::int64_t>(data.size());
    s.counts.setZero(2, L);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, L);
    for (const auto& r : data.records) {
        s.counts(r.d, r.z) += 1;
        sum(r.d, r.z) += r.y;
    }
    for (int l = 0; l < L; ++l) {
        for (int d = 1; d >= 0; --d) {
            if (s.counts(d, l) == 0)
                throw OverlapError("overlap violated at (d=" + std::to_string(d) + ", z=" + data.instrument_levels[l] +
                                   ")");
        }
    }
    Eigen::MatrixXd mean = sum.array() / s.counts.cast<double>().array();
    // Second pass for the variances keeps them accurate when outcomes have a large offset.
    Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(2, L);
    for (const auto& r : data.records) {
        const double e = r.y - mean(r.d, r.z);
        ss(r.d, r.z) += e * e;
    }
    s.sigma2 = ss.array() / s.counts.cast<double>().array();
    s.q_hat.resize(L);
    s.p_hat.resize(L);
    for (int l = 0; l < L; ++l) {
        const double nl = static_cast<double>(s.counts(0, l) + s.counts(1, l));
        s.q_hat[l] = nl / static_cast<double>(s.n);
        s.p_hat[l] = static_cast<double>(s.counts(1, l)) / nl;
    }
    s.beta1_hat = mean.row(1).transpose();
    s.beta0_hat = mean.row(0).transpose();
    s.zero_variance_warning = (s.sigma2.array() == 0.0).any();
    return s;
}

int distinct_propensities(const CellStats& stats, double tol) {
    std::vector<double> p(stats.p_hat.data(), stats.p_hat.data() + stats.p_hat.size());
    std::sort(p.begin(), p.end());
    int count = p.empty() ? 0 : 1;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] - p[i - 1] > tol) ++count;
    }
    return count;
}

Eigen::MatrixXd CovarianceSet::sigma_beta() const {
    const auto k1 = sigma_beta1.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * k1, 2 * k1);
    out.topLeftCorner(k1, k1) = sigma_beta1;
    out.bottomRightCorner(k1, k1) = sigma_beta0;
    return out;
}

CovarianceSet covariance_estimates(const CellStats& stats) {
    const auto& p = stats.p_hat;
    const auto& q = stats.q_hat;
    if ((q.array() <= 0.0).any()) throw DataError("instrument level with zero mass");
    CovarianceSet c;
    c.sigma_p = (p.array() * (1.0 - p.array()) / q.array()).matrix().asDiagonal();
    // Multinomial covariance of the level shares.
    c.sigma_q = -q * q.transpose();
    c.sigma_q.diagonal() = q.array() * (1.0 - q.array());
    const Eigen::ArrayXd q1 = p.array() * q.array();
    const Eigen::ArrayXd q0 = (1.0 - p.array()) * q.array();
    c.sigma_beta1 = (stats.sigma2.row(1).transpose().array() / q1).matrix().asDiagonal();
    c.sigma_beta0 = (stats.sigma2.row(0).transpose().array() / q0).matrix().asDiagonal();
    return c;
}

}  // namespace mte
