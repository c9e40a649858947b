#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qdkt {

struct Edge {
    int i = 0;
    int j = 0;
    double w = 0.0;
};

// Undirected question-similarity graph. Each unordered pair is stored once
// with i < j; weights are nonnegative and self-edges are dropped.
struct QuestionGraph {
    int n = 0;
    std::vector<Edge> edges;
};

// L = D - A kept in edge form plus the degree vector, so the quadratic form
// and its gradient run in O(|edges|). The assembled sparse matrix is kept
// alongside for batched products over many vectors at once.
struct Laplacian {
    int n = 0;
    std::vector<Edge> edges;
    Eigen::VectorXd degree;
    Eigen::SparseMatrix<double> mat;

    const Eigen::SparseMatrix<double>& matrix() const { return mat; }
    Eigen::MatrixXd dense() const;
};

// Connect i and j with weight 1 iff their skill sets intersect (indicator,
// not a count: sharing two skills still gives weight 1).
QuestionGraph build_skill_graph(const std::vector<std::vector<int>>& question_skills, int n);

// Arbitrary precomputed similarity weights; duplicate pairs are summed and
// (j,i) is canonicalized to (i,j). Throws on negative weights or bad indices.
QuestionGraph build_weighted_graph(const std::vector<Edge>& weights, int n);

Laplacian laplacian(const QuestionGraph& g);

// y^T L y = sum over edges w_ij (y_i - y_j)^2; nonnegative.
double quadratic_form(const Laplacian& L, const Eigen::VectorXd& y);

// Gradient of the quadratic form: 2 L y.
Eigen::VectorXd quadratic_form_grad(const Laplacian& L, const Eigen::VectorXd& y);

// Edge-list text format, one "i j w" line per edge.
void write_edge_list(const QuestionGraph& g, const std::string& path);
QuestionGraph read_edge_list(const std::string& path, int n);

} // namespace qdkt
