#pragma once

// Spatial (ICAR), temporal (RW1) and Type IV interaction precision matrices
// together with their null/range eigen-splits.

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stconfound/error.hpp"
#include "stconfound/linalg.hpp"

namespace stconfound {

/// Undirected adjacency over areas 0..n_areas-1.
struct SpatialGraph {
    int n_areas = 0;
    std::vector<std::pair<int, int>> edges;

    /// Builds a graph and checks every invariant (range, no self-loops, no
    /// duplicates, single connected component).
    static SpatialGraph from_edges(int n_areas, std::vector<std::pair<int, int>> edges);

    /// Rook-adjacency lattice, area index = row * cols + col.
    static SpatialGraph lattice(int rows, int cols);

    /// 0-1-2-...-(n-1).
    static SpatialGraph path(int n);

    /// Converts a symmetric 0/1 adjacency matrix.
    static SpatialGraph from_adjacency_matrix(const MatrixXd& adjacency);

    std::vector<int> degrees() const;
};

namespace detail {

inline std::vector<std::vector<int>> connected_components(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };
    for (auto [a, b] : edges) {
        const int ra = find(a), rb = find(b);
        if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    }
    std::vector<std::vector<int>> groups;
    std::vector<int> slot(static_cast<std::size_t>(n), -1);
    for (int v = 0; v < n; ++v) {
        const int r = find(v);
        if (slot[static_cast<std::size_t>(r)] < 0) {
            slot[static_cast<std::size_t>(r)] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[static_cast<std::size_t>(r)])].push_back(v);
    }
    return groups;
}

}  // namespace detail

inline SpatialGraph SpatialGraph::from_edges(int n_areas, std::vector<std::pair<int, int>> edges) {
    if (n_areas < 1) throw ValidationError("spatial graph needs at least one area");
    std::set<std::pair<int, int>> seen;
    for (auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n_areas || b >= n_areas) {
            std::ostringstream msg;
            msg << "edge (" << a + 1 << ", " << b + 1 << ") references an area outside 1.." << n_areas;
            throw ValidationError(msg.str());
        }
        if (a == b) throw ValidationError("self-loop on area " + std::to_string(a + 1));
        if (a > b) std::swap(a, b);
        if (!seen.insert({a, b}).second) {
            std::ostringstream msg;
            msg << "duplicate edge (" << a + 1 << ", " << b + 1 << ")";
            throw ValidationError(msg.str());
        }
    }
    const auto groups = detail::connected_components(n_areas, edges);
    if (groups.size() > 1) {
        std::ostringstream msg;
        msg << "spatial graph is disconnected (" << groups.size() << " components):";
        for (const auto& g : groups) {
            msg << " {";
            for (std::size_t k = 0; k < g.size() && k < 10; ++k) msg << (k ? "," : "") << g[k] + 1;
            if (g.size() > 10) msg << ",...";
            msg << "}";
        }
        throw ValidationError(msg.str());
    }
    SpatialGraph g;
    g.n_areas = n_areas;
    g.edges = std::move(edges);
    return g;
}

inline SpatialGraph SpatialGraph::lattice(int rows, int cols) {
    if (rows < 1 || cols < 1) throw ValidationError("lattice dimensions must be positive");
    std::vector<std::pair<int, int>> e;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int v = r * cols + c;
            if (c + 1 < cols) e.emplace_back(v, v + 1);
            if (r + 1 < rows) e.emplace_back(v, v + cols);
        }
    return from_edges(rows * cols, std::move(e));
}

inline SpatialGraph SpatialGraph::path(int n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return from_edges(n, std::move(e));
}

inline SpatialGraph SpatialGraph::from_adjacency_matrix(const MatrixXd& adjacency) {
    if (adjacency.rows() != adjacency.cols()) throw ValidationError("adjacency matrix must be square");
    const auto n = static_cast<int>(adjacency.rows());
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = adjacency(i, j);
            if (v != 0.0 && v != 1.0) throw ValidationError("adjacency matrix entries must be 0 or 1");
            if (v != adjacency(j, i)) throw ValidationError("adjacency matrix is not symmetric");
        }
        if (adjacency(i, i) != 0.0) throw ValidationError("self-loop on area " + std::to_string(i + 1));
        for (int j = i + 1; j < n; ++j)
            if (adjacency(i, j) == 1.0) e.emplace_back(i, j);
    }
    return from_edges(n, std::move(e));
}

inline std::vector<int> SpatialGraph::degrees() const {
    std::vector<int> d(static_cast<std::size_t>(n_areas), 0);
    for (auto [a, b] : edges) {
        ++d[static_cast<std::size_t>(a)];
        ++d[static_cast<std::size_t>(b)];
    }
    return d;
}

/// A rank-deficient precision matrix with its eigenbasis split into the
/// kernel (null eigenvalues) and the range (strictly positive eigenvalues,
/// ascending).
struct PrecisionSpectrum {
    MatrixXd Q;
    MatrixXd U_null;
    MatrixXd U_range;
    VectorXd eigvals_range;

    Eigen::Index dim() const { return Q.rows(); }
    Eigen::Index kernel_dim() const { return U_null.cols(); }
    Eigen::Index range_dim() const { return U_range.cols(); }

    /// Moore–Penrose inverse, inverting the range eigenvalues only.
    MatrixXd pseudo_inverse() const {
        return U_range * eigvals_range.cwiseInverse().asDiagonal() * U_range.transpose();
    }

    /// Range eigenvector with the smallest non-null eigenvalue.
    VectorXd smallest_range_eigenvector() const {
        if (range_dim() == 0) throw ValidationError("precision matrix has an empty range");
        return U_range.col(0);
    }
};

/// ICAR structure matrix: degree on the diagonal, −1 for neighbours.
inline MatrixXd build_spatial_precision(const SpatialGraph& graph) {
    // Re-run the checks: a hand-built struct may bypass from_edges.
    const SpatialGraph g = SpatialGraph::from_edges(graph.n_areas, graph.edges);
    MatrixXd q = MatrixXd::Zero(g.n_areas, g.n_areas);
    for (auto [a, b] : g.edges) {
        q(a, a) += 1.0;
        q(b, b) += 1.0;
        q(a, b) = -1.0;
        q(b, a) = -1.0;
    }
    return q;
}

/// First-order random walk structure matrix (unscaled).
inline MatrixXd build_rw1_precision(int periods) {
    if (periods < 2) throw ValidationError("RW1 precision needs at least 2 periods, got " + std::to_string(periods));
    MatrixXd q = MatrixXd::Zero(periods, periods);
    for (int t = 0; t + 1 < periods; ++t) {
        q(t, t) += 1.0;
        q(t + 1, t + 1) += 1.0;
        q(t, t + 1) = -1.0;
        q(t + 1, t) = -1.0;
    }
    return q;
}

namespace detail {

/// Flip each column so its first non-negligible entry is positive.
inline void fix_signs(MatrixXd& u) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        const double tol = 1e-12 * u.col(j).cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) > tol) {
                if (u(i, j) < 0.0) u.col(j) *= -1.0;
                break;
            }
        }
    }
}

}  // namespace detail

/// Eigen-split of a symmetric PSD matrix. Eigenvalues with
/// λ ≤ 1e-10·λ_max are treated as null; anything below −1e-8·λ_max is
/// rejected as indefinite.
inline PrecisionSpectrum spectral_split(const MatrixXd& q) {
    if (q.rows() != q.cols()) throw ValidationError("precision matrix must be square");
    const double asym = max_abs(q - q.transpose());
    if (asym > 1e-10 * std::max(1.0, max_abs(q))) throw ValidationError("precision matrix is not symmetric");

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const VectorXd& vals = eig.eigenvalues();
    const double lmax = vals.size() ? vals.cwiseAbs().maxCoeff() : 0.0;
    if (vals.size() && vals(0) < -1e-8 * lmax) {
        std::ostringstream msg;
        msg << "precision matrix is not positive semi-definite (eigenvalue " << vals(0) << ")";
        throw ValidationError(msg.str());
    }
    std::vector<Eigen::Index> null_idx, range_idx;
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        (vals(i) <= 1e-10 * lmax ? null_idx : range_idx).push_back(i);

    PrecisionSpectrum s;
    s.Q = q;
    s.U_null.resize(q.rows(), static_cast<Eigen::Index>(null_idx.size()));
    s.U_range.resize(q.rows(), static_cast<Eigen::Index>(range_idx.size()));
    s.eigvals_range.resize(static_cast<Eigen::Index>(range_idx.size()));
    for (std::size_t k = 0; k < null_idx.size(); ++k)
        s.U_null.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(null_idx[k]);
    for (std::size_t k = 0; k < range_idx.size(); ++k) {
        s.U_range.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(range_idx[k]);
        s.eigvals_range(static_cast<Eigen::Index>(k)) = vals(range_idx[k]);
    }
    detail::fix_signs(s.U_null);
    detail::fix_signs(s.U_range);
    return s;
}

/// Eigen-split of Q_δ = Q_γ ⊗ Q_ξ assembled from the factor spectra; the
/// TS×TS matrix is never decomposed.
inline PrecisionSpectrum interaction_eigenstructure(const PrecisionSpectrum& spatial, const PrecisionSpectrum& temporal) {
    PrecisionSpectrum s;
    s.Q = kron(temporal.Q, spatial.Q);
    const Eigen::Index n = s.Q.rows();

    const MatrixXd nn = kron(temporal.U_null, spatial.U_null);
    const MatrixXd nr = kron(temporal.U_null, spatial.U_range);
    const MatrixXd rn = kron(temporal.U_range, spatial.U_null);
    s.U_null.resize(n, nn.cols() + nr.cols() + rn.cols());
    s.U_null << nn, nr, rn;

    const MatrixXd rr = kron(temporal.U_range, spatial.U_range);
    const VectorXd vals = kron(temporal.eigvals_range, spatial.eigvals_range);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return vals(a) < vals(b); });
    s.U_range.resize(n, rr.cols());
    s.eigvals_range.resize(vals.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        s.U_range.col(static_cast<Eigen::Index>(k)) = rr.col(order[k]);
        s.eigvals_range(static_cast<Eigen::Index>(k)) = vals(order[k]);
    }
    return s;
}

}  // namespace stconfound
