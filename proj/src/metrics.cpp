#include "qdkt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qdkt {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc: scores/labels length mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
        n_pos += static_cast<size_t>(l);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::runtime_error("auc: undefined, labels contain a single class");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups, 1-based.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k)
            if (labels[idx[k]]) pos_rank_sum += midrank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PcaResult pca_project(const Eigen::MatrixXd& wxv, int n_components) {
    const Eigen::Index K = wxv.rows();
    const Eigen::Index P = wxv.cols();
    if (P < 2 || P % 2 != 0)
        throw std::invalid_argument("pca_project: expected an even number of columns >= 2");
    if (n_components < 1 || n_components > std::min(K, P))
        throw std::invalid_argument("pca_project: n_components out of range");

    PcaResult res;
    res.labels.resize(P);
    const Eigen::Index N = P / 2;
    for (Eigen::Index c = 0; c < P; ++c) res.labels[c] = c >= N ? 1 : 0;

    const Eigen::VectorXd mean = wxv.rowwise().mean();
    const Eigen::MatrixXd centered = wxv.colwise() - mean;
    const Eigen::MatrixXd cov =
        centered * centered.transpose() / static_cast<double>(P - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("pca_project: eigendecomposition failed");

    // Ascending from Eigen; flip to descending and clamp round-off negatives.
    Eigen::VectorXd eig = solver.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < eig.size(); ++i) eig[i] = std::max(eig[i], 0.0);
    Eigen::MatrixXd vecs = solver.eigenvectors().rowwise().reverse();

    const double total = eig.sum();
    res.eigenvalues = eig;
    res.explained_ratio = Eigen::VectorXd::Zero(n_components);
    if (total <= 1e-30) {
        res.degenerate = true;
        res.projected = Eigen::MatrixXd::Zero(P, n_components);
        return res;
    }
    for (int r = 0; r < n_components; ++r) res.explained_ratio[r] = eig[r] / total;

    // Canonical sign: the largest-magnitude coefficient of each direction is
    // positive.
    for (int r = 0; r < n_components; ++r) {
        Eigen::Index arg = 0;
        vecs.col(r).cwiseAbs().maxCoeff(&arg);
        if (vecs(arg, r) < 0.0) vecs.col(r) = -vecs.col(r);
    }

    res.projected = (vecs.leftCols(n_components).transpose() * centered).transpose();
    return res;
}

SeparationScore separation_score(const Eigen::MatrixXd& projected,
                                 const std::vector<int>& labels) {
    const Eigen::Index P = projected.rows();
    if (static_cast<Eigen::Index>(labels.size()) != P)
        throw std::invalid_argument("separation_score: labels length mismatch");

    Eigen::Index n0 = 0, n1 = 0;
    for (int l : labels) (l ? n1 : n0) += 1;
    if (n0 == 0 || n1 == 0)
        throw std::runtime_error("separation_score: both classes must be present");

    const Eigen::Index r = projected.cols();
    Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(r), mean1 = Eigen::VectorXd::Zero(r);
    for (Eigen::Index i = 0; i < P; ++i)
        (labels[i] ? mean1 : mean0) += projected.row(i).transpose();
    mean0 /= static_cast<double>(n0);
    mean1 /= static_cast<double>(n1);

    double ss = 0.0;
    for (Eigen::Index i = 0; i < P; ++i) {
        const Eigen::VectorXd d = projected.row(i).transpose() - (labels[i] ? mean1 : mean0);
        ss += d.squaredNorm();
    }
    const double dist = (mean0 - mean1).norm();
    const Eigen::Index dof = n0 + n1 - 2;
    const double pooled = dof > 0 ? std::sqrt(ss / static_cast<double>(dof)) : 0.0;

    SeparationScore s;
    if (pooled < 1e-15) {
        if (dist < 1e-15) {
            s.value = 0.0; // coincident point masses
        } else {
            s.value = 1e12; // distinct point masses: ratio diverges
            s.capped = true;
        }
        return s;
    }
    s.value = dist / pooled;
    return s;
}

} // namespace qdkt
