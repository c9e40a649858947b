#pragma once

#include <vector>

#include <Eigen/Dense>

namespace qdkt {

// Rank-statistic AUC with midrank tie handling: the probability that a random
// positive outranks a random negative, ties counting one half. Throws when
// labels contain a single class.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct PcaResult {
    Eigen::MatrixXd projected;       // points x n_components
    std::vector<int> labels;         // assessment per column: index >= N
    Eigen::VectorXd explained_ratio; // per kept component
    Eigen::VectorXd eigenvalues;     // full spectrum, descending
    bool degenerate = false;         // all columns equal: zero projection
};

// Treats the 2N columns of W_xv as points in R^K, centers them and projects
// onto the top principal directions of the column covariance (exact
// eigendecomposition, (2N-1)-denominator).
PcaResult pca_project(const Eigen::MatrixXd& wxv, int n_components);

struct SeparationScore {
    double value = 0.0;
    bool capped = false; // distinct point masses with zero spread
};

// ||mean_0 - mean_1|| / pooled within-class standard deviation.
SeparationScore separation_score(const Eigen::MatrixXd& projected, const std::vector<int>& labels);

} // namespace qdkt
