#pragma once

#include "json.hpp"
#include "mte/data.hpp"
#include "mte/inference.hpp"

namespace mte {

using json = nlohmann::ordered_json;

/// Fields q_hat, p_hat, beta1_hat, beta0_hat, sigma2, counts, n (plus levels and the warning flag).
json cell_stats_to_json(const CellStats& stats);
CellStats cell_stats_from_json(const json& j);

json covariance_to_json(const CovarianceSet& cov);
json test_result_to_json(const TestResult& result);
json confidence_set_to_json(const ConfidenceSet& cs);

json vector_to_json(const Eigen::VectorXd& v);
json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace mte
