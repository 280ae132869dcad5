#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mte {

/// Column names for CSV input. An empty `w` means no covariate column.
struct Schema {
    std::string y = "y";
    std::string d = "d";
    std::string z = "z";
    std::string w;
    /// Explicit instrument ordering; first entry becomes the baseline z_0.
    std::vector<std::string> z_order;
};

struct Record {
    double y = 0.0;
    int d = 0;
    int z = 0;
    int w = -1;
};

struct Dataset {
    std::vector<Record> records;
    std::vector<std::string> instrument_levels;
    std::vector<std::string> covariate_levels;

    std::size_t size() const { return records.size(); }
    int num_levels() const { return static_cast<int>(instrument_levels.size()); }
    bool has_covariate() const { return !covariate_levels.empty(); }
};

Dataset load_csv(const std::string& path, const Schema& schema);
Dataset parse_csv(std::istream& in, const Schema& schema);

/// Records whose covariate index equals `w`, with the instrument levels unchanged.
Dataset covariate_subset(const Dataset& data, int w);

/**
 * @brief Cell-level sample moments indexed by instrument level l = 0..K.
 *
 * sigma2 and counts are 2 x (K+1) with row index equal to the treatment arm d.
 */
struct CellStats {
    Eigen::VectorXd q_hat;
    Eigen::VectorXd p_hat;
    Eigen::VectorXd beta1_hat;
    Eigen::VectorXd beta0_hat;
    Eigen::MatrixXd sigma2;
    Eigen::Matrix<std::int64_t, 2, Eigen::Dynamic> counts;
    std::int64_t n = 0;
    std::vector<std::string> levels;
    /// Some cell has zero within-cell variance (for example a singleton cell).
    bool zero_variance_warning = false;

    int K() const { return static_cast<int>(q_hat.size()) - 1; }
    Eigen::VectorXd beta_hat() const;
};

CellStats cell_stats(const Dataset& data);

/// Number of distinct propensity values at absolute tolerance `tol`.
int distinct_propensities(const CellStats& stats, double tol = 1e-8);

struct CovarianceSet {
    Eigen::MatrixXd sigma_p;
    Eigen::MatrixXd sigma_q;
    Eigen::MatrixXd sigma_beta1;
    Eigen::MatrixXd sigma_beta0;

    /// blockdiag(sigma_beta1, sigma_beta0)
    Eigen::MatrixXd sigma_beta() const;
};

CovarianceSet covariance_estimates(const CellStats& stats);

}  // namespace mte
