#pragma once

// Small dense helpers shared by the modules.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace stconfound {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A ⊗ B for dense operands.
inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline VectorXd kron(const VectorXd& a, const VectorXd& b) {
    VectorXd out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

inline MatrixXd ones_column(Eigen::Index n) { return MatrixXd::Ones(n, 1); }

/// Largest Euclidean norm among the columns of m (0 for an empty matrix).
inline double max_column_norm(const MatrixXd& m) {
    double best = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) best = std::max(best, m.col(j).norm());
    return best;
}

inline double max_row_norm(const MatrixXd& m) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) best = std::max(best, m.row(i).norm());
    return best;
}

inline double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// max|A·B| relative to the largest column norms of Aᵀ and B. Used for every
/// orthogonality residual so tolerances do not depend on the data scale.
inline double scaled_product_residual(const MatrixXd& a, const MatrixXd& b) {
    if (a.size() == 0 || b.size() == 0) return 0.0;
    const double scale = max_row_norm(a) * max_column_norm(b);
    if (scale == 0.0) return 0.0;
    return max_abs(a * b) / scale;
}

inline double relative_frobenius(const MatrixXd& approx, const MatrixXd& exact) {
    const double denom = exact.norm();
    const double diff = (approx - exact).norm();
    return denom == 0.0 ? diff : diff / denom;
}

/// Orthonormal basis of the eigenvalue-one eigenspace of a symmetric
/// projection matrix. Eigenvalues of a projector are 0 or 1 up to round-off,
/// so 0.5 separates them maximally.
inline MatrixXd unit_eigenspace(const MatrixXd& projector) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (projector + projector.transpose()));
    const VectorXd& vals = eig.eigenvalues();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        if (vals(i) > 0.5) keep.push_back(i);
    MatrixXd basis(projector.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
        basis.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(keep[k]);
    return basis;
}

/// Orthogonal projector onto the row space of b, I − B⁺B computed through an
/// SVD so rank-deficient constraint sets are handled.
inline MatrixXd row_space_complement_projector(const MatrixXd& b, Eigen::Index n) {
    MatrixXd proj = MatrixXd::Identity(n, n);
    if (b.rows() == 0) return proj;
    Eigen::JacobiSVD<MatrixXd> svd(b, Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() ? sv(0) * 1e-10 * static_cast<double>(std::max(b.rows(), b.cols())) : 0.0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        if (sv(k) <= cutoff) break;
        proj.noalias() -= svd.matrixV().col(k) * svd.matrixV().col(k).transpose();
    }
    return proj;
}

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace stconfound
