#pragma once

// Weighted orthogonal projectors used by restricted regression, the
// orthogonality-constraint matrices, oblique projections and the covariance
// of intrinsic Gaussian vectors conditioned on linear constraints.

#include <sstream>
#include <string>
#include <vector>

#include "stconfound/error.hpp"
#include "stconfound/linalg.hpp"
#include "stconfound/structures.hpp"

namespace stconfound {

/// Projectors built from the scaled fixed-effects design Ŵ^{1/2}X_*.
struct WeightedProjector {
    VectorXd weights;  ///< diagonal of Ŵ
    MatrixXd X_star;   ///< [1 : X]
    MatrixXd K;        ///< Ŵ^{1/2} X_*, column for column
    MatrixXd K_basis;  ///< orthonormal basis of span(K)
    MatrixXd L;        ///< orthonormal basis of span(K)^⊥, N × (N − p − 1)

    Eigen::Index size() const { return X_star.rows(); }

    /// Ŵ^{-1/2} L Lᵀ Ŵ^{1/2} · z, the restricted-regression operator.
    MatrixXd restrict(const MatrixXd& z) const {
        const VectorXd root = weights.cwiseSqrt();
        const MatrixXd scaled = root.asDiagonal() * z;
        const MatrixXd inner = L * (L.transpose() * scaled);
        return root.cwiseInverse().asDiagonal() * inner;
    }
};

namespace detail {

inline std::string design_column_name(Eigen::Index j) { return j == 0 ? "intercept" : "x" + std::to_string(j); }

/// Names the columns of m that are (numerically) linear combinations of the
/// columns before them. Columns are normalised first.
inline std::vector<Eigen::Index> dependent_columns(const MatrixXd& m) {
    std::vector<Eigen::Index> dependent;
    MatrixXd basis(m.rows(), 0);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double nrm = m.col(j).norm();
        if (nrm == 0.0) {
            dependent.push_back(j);
            continue;
        }
        VectorXd v = m.col(j) / nrm;
        for (int pass = 0; pass < 2; ++pass)
            if (basis.cols()) v -= basis * (basis.transpose() * v);
        if (v.norm() < 1e-8) {
            dependent.push_back(j);
            continue;
        }
        basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
        basis.col(basis.cols() - 1) = v.normalized();
    }
    return dependent;
}

}  // namespace detail

/// Builds K, L and the complement projector P^c = I − K(KᵀK)⁻¹Kᵀ for the
/// design X_* = [1 : X] under weights w.
inline WeightedProjector weighted_projector(const MatrixXd& x, const VectorXd& w) {
    const Eigen::Index n = x.rows();
    if (w.size() != n) throw ValidationError("weight vector length does not match the covariate rows");
    if (n == 0) throw ValidationError("empty design");
    if ((w.array() <= 0.0).any() || !w.allFinite()) throw ValidationError("weights must be finite and positive");

    WeightedProjector wp;
    wp.weights = w;
    wp.X_star.resize(n, x.cols() + 1);
    wp.X_star << VectorXd::Ones(n), x;
    wp.K = w.cwiseSqrt().asDiagonal() * wp.X_star;

    const auto dependent = detail::dependent_columns(wp.K);
    if (!dependent.empty()) {
        std::ostringstream msg;
        msg << "fixed-effects design is rank deficient; dependent columns:";
        for (auto j : dependent) msg << ' ' << detail::design_column_name(j);
        throw ValidationError(msg.str());
    }

    const MatrixXd gram = wp.K.transpose() * wp.K;
    const MatrixXd hat = wp.K * gram.ldlt().solve(wp.K.transpose());
    const MatrixXd complement = MatrixXd::Identity(n, n) - hat;
    wp.L = unit_eigenspace(complement);
    wp.K_basis = unit_eigenspace(hat);
    if (wp.L.cols() != n - wp.X_star.cols())
        throw NumericalError("complement projector has " + std::to_string(wp.L.cols()) + " unit eigenvalues, expected " +
                             std::to_string(n - wp.X_star.cols()));
    return wp;
}

/// Which of the linearly dependent marginal-sum rows of B_δ is removed.
enum class RedundantRow { last_temporal, last_spatial };

/// Weighted orthogonality constraints for the spatial, temporal and
/// interaction effects. Rows of B_interaction: S area sums, T time sums
/// (minus the dropped one), then p covariate rows.
struct ConstraintSet {
    MatrixXd B_spatial;
    MatrixXd B_temporal;
    MatrixXd B_interaction;
};

/// Constraint matrices for data laid out area-fastest (row t·S + i).
inline ConstraintSet constraint_matrices(const MatrixXd& x, const VectorXd& w, int areas, int periods,
                                         RedundantRow drop = RedundantRow::last_temporal) {
    if (areas < 1 || periods < 1) throw ValidationError("constraint matrices need positive S and T");
    const Eigen::Index n = static_cast<Eigen::Index>(areas) * periods;
    if (x.rows() != n || w.size() != n)
        throw ValidationError("constraint matrices: expected " + std::to_string(n) + " rows (S·T)");
    const Eigen::Index p = x.cols();

    MatrixXd xstar_w(n, p + 1);  // rows of X_*ᵀŴ, transposed
    xstar_w.col(0) = w;
    for (Eigen::Index j = 0; j < p; ++j) xstar_w.col(j + 1) = w.cwiseProduct(x.col(j));

    ConstraintSet cs;
    cs.B_spatial = MatrixXd::Zero(p + 1, areas);
    cs.B_temporal = MatrixXd::Zero(p + 1, periods);
    for (int t = 0; t < periods; ++t)
        for (int i = 0; i < areas; ++i) {
            const Eigen::Index row = static_cast<Eigen::Index>(t) * areas + i;
            cs.B_spatial.col(i) += xstar_w.row(row).transpose();
            cs.B_temporal.col(t) += xstar_w.row(row).transpose();
        }

    // The area sums and time sums share one linear dependence (both add up to
    // the global weighted sum); one of them is dropped.
    const Eigen::Index kept_area = drop == RedundantRow::last_spatial ? areas - 1 : areas;
    const Eigen::Index kept_time = drop == RedundantRow::last_temporal ? periods - 1 : periods;
    cs.B_interaction = MatrixXd::Zero(kept_area + kept_time + p, n);
    for (int t = 0; t < periods; ++t)
        for (int i = 0; i < areas; ++i) {
            const Eigen::Index col = static_cast<Eigen::Index>(t) * areas + i;
            if (i < kept_area) cs.B_interaction(i, col) = w(col);
            if (t < kept_time) cs.B_interaction(kept_area + t, col) = w(col);
            for (Eigen::Index j = 0; j < p; ++j) cs.B_interaction(kept_area + kept_time + j, col) = w(col) * x(col, j);
        }
    return cs;
}

namespace detail {

/// Shared pieces of the oblique projector and constrained covariance:
/// L (orthonormal complement of row(B)) and the eigen-split of LᵀQL.
struct ConstrainedBasis {
    MatrixXd L;
    MatrixXd M_vectors;
    VectorXd M_values;
};

inline ConstrainedBasis constrained_basis(const MatrixXd& q, const MatrixXd& b) {
    if (q.rows() != q.cols()) throw ValidationError("precision matrix must be square");
    if (b.rows() > 0 && b.cols() != q.rows()) throw ValidationError("constraint matrix has the wrong number of columns");
    const Eigen::Index n = q.rows();
    ConstrainedBasis cb;
    cb.L = unit_eigenspace(row_space_complement_projector(b, n));
    if (cb.L.cols() == 0) {
        cb.M_vectors.resize(0, 0);
        cb.M_values.resize(0);
        return cb;
    }
    const MatrixXd m = symmetrize(cb.L.transpose() * q * cb.L);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
    const double qscale = std::max(max_abs(q), 1e-300);
    if (eig.eigenvalues()(0) <= 1e-10 * qscale) {
        std::ostringstream msg;
        msg << "ill-posed constraints: LᵀQL is singular (smallest eigenvalue " << eig.eigenvalues()(0)
            << "); the constraints do not exclude the kernel of Q";
        throw NumericalError(msg.str());
    }
    cb.M_vectors = eig.eigenvectors();
    cb.M_values = eig.eigenvalues();
    return cb;
}

}  // namespace detail

struct ObliqueProjection {
    MatrixXd P;        ///< L(LᵀQL)⁻¹LᵀQ
    MatrixXd L_basis;  ///< orthonormal complement of the rows of B
};

/// Oblique projection onto the orthogonal complement of row(B) along ker(Q).
inline ObliqueProjection oblique_projector(const MatrixXd& q, const MatrixXd& b) {
    const auto cb = detail::constrained_basis(q, b);
    ObliqueProjection op;
    op.L_basis = cb.L;
    if (cb.L.cols() == 0) {
        op.P = MatrixXd::Zero(q.rows(), q.cols());
        return op;
    }
    const MatrixXd m_inv = cb.M_vectors * cb.M_values.cwiseInverse().asDiagonal() * cb.M_vectors.transpose();
    op.P = cb.L * m_inv * (cb.L.transpose() * q);
    return op;
}

/// Covariance of an intrinsic Gaussian vector with precision Q conditioned on
/// B·y = 0: V = L(LᵀQL)⁻¹Lᵀ. `factor` satisfies V = factor·factorᵀ.
struct ConstrainedCovariance {
    MatrixXd V;
    MatrixXd L_basis;
    MatrixXd factor;
};

inline ConstrainedCovariance constrained_covariance(const MatrixXd& q, const MatrixXd& b) {
    const auto cb = detail::constrained_basis(q, b);
    ConstrainedCovariance cc;
    cc.L_basis = cb.L;
    if (cb.L.cols() == 0) {
        cc.V = MatrixXd::Zero(q.rows(), q.cols());
        cc.factor.resize(q.rows(), 0);
        return cc;
    }
    cc.factor = cb.L * cb.M_vectors * cb.M_values.cwiseSqrt().cwiseInverse().asDiagonal();
    cc.V = cc.factor * cc.factor.transpose();
    return cc;
}

/// Conditioning by kriging with the Moore–Penrose inverse:
/// Q⁻ − Q⁻Bᵀ(BQ⁻Bᵀ)⁻¹BQ⁻. Unlike constrained_covariance, the result is also
/// annihilated by ker(Q).
inline MatrixXd kriging_covariance(const MatrixXd& q, const MatrixXd& b) {
    const PrecisionSpectrum spec = spectral_split(q);
    const MatrixXd qinv = spec.pseudo_inverse();
    if (b.rows() == 0) return qinv;
    if (b.cols() != q.rows()) throw ValidationError("constraint matrix has the wrong number of columns");
    const MatrixXd cross = qinv * b.transpose();
    const MatrixXd g = symmetrize(b * cross);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g);
    const double gmax = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (gmax == 0.0 || eig.eigenvalues()(0) <= 1e-12 * gmax)
        throw NumericalError("kriging covariance: B Q⁻ Bᵀ is singular");
    const MatrixXd g_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    return symmetrize(qinv - cross * g_inv * cross.transpose());
}

}  // namespace stconfound
