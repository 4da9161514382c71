#pragma once

// Random instance generators and independent reference computations used by
// the test suites. Nothing here calls the library's fitting code.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stconfound.hpp"

namespace testing_support {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using stconfound::SpatialGraph;

/// Random spanning tree plus extra edges with probability `extra`.
inline SpatialGraph random_connected_graph(int n, std::mt19937_64& rng, double extra = 0.25) {
    std::vector<std::pair<int, int>> edges;
    std::vector<std::vector<bool>> has(n, std::vector<bool>(n, false));
    for (int i = 1; i < n; ++i) {
        const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
        edges.emplace_back(j, i);
        has[j][i] = has[i][j] = true;
    }
    std::bernoulli_distribution coin(extra);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (!has[i][j] && coin(rng)) edges.emplace_back(i, j);
    return SpatialGraph::from_edges(n, edges);
}

inline VectorXd random_weights(Eigen::Index n, std::mt19937_64& rng, double lo = 0.5, double hi = 3.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = u(rng);
    return w;
}

inline MatrixXd random_normal(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = z(rng);
    return m;
}

/// Ŵ^{1/2}X(XᵀŴX)⁻¹XᵀŴ^{1/2} from the normal equations with an explicit inverse.
inline MatrixXd brute_hat(const MatrixXd& x, const VectorXd& w) {
    const MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const MatrixXd inv = xtwx.inverse();
    const VectorXd r = w.cwiseSqrt();
    return r.asDiagonal() * x * inv * x.transpose() * r.asDiagonal();
}

/// Orthogonal projector onto span(U) via U(UᵀU)⁻¹Uᵀ.
inline MatrixXd span_projector(const MatrixXd& u) {
    if (u.cols() == 0) return MatrixXd::Zero(u.rows(), u.rows());
    return u * (u.transpose() * u).inverse() * u.transpose();
}

/// Newton–Raphson for the Poisson GLM with log link and offset log(e).
inline VectorXd glm_newton(const MatrixXd& x, const VectorXd& o, const VectorXd& e, int iters = 100) {
    VectorXd beta = VectorXd::Zero(x.cols());
    beta(0) = std::log(o.sum() / e.sum());
    for (int it = 0; it < iters; ++it) {
        const VectorXd mu = e.array() * (x * beta).array().exp();
        const VectorXd grad = x.transpose() * (o - mu);
        const MatrixXd hess = x.transpose() * mu.asDiagonal() * x;
        const VectorXd step = hess.ldlt().solve(grad);
        beta += step;
        if (step.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    return beta;
}

/// Quasi-Newton minimiser (BFGS with backtracking Armijo line search).
struct BfgsResult {
    VectorXd x;
    double f = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
};

inline BfgsResult bfgs_minimize(const std::function<double(const VectorXd&)>& f,
                                const std::function<VectorXd(const VectorXd&)>& grad, VectorXd x, double gtol = 1e-10,
                                int max_iter = 5000) {
    const Eigen::Index n = x.size();
    MatrixXd h = MatrixXd::Identity(n, n);
    double fx = f(x);
    VectorXd g = grad(x);
    BfgsResult r;
    int it = 0;
    for (; it < max_iter && g.cwiseAbs().maxCoeff() > gtol; ++it) {
        VectorXd d = -h * g;
        if (d.dot(g) >= 0.0) {
            h.setIdentity();
            d = -g;
        }
        double step = 1.0;
        double fn = f(x + step * d);
        while (!(fn <= fx + 1e-4 * step * d.dot(g)) && step > 1e-20) {
            step *= 0.5;
            fn = f(x + step * d);
        }
        const VectorXd s = step * d;
        const VectorXd xn = x + s;
        const VectorXd gn = grad(xn);
        const VectorXd yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const MatrixXd i_n = MatrixXd::Identity(n, n);
            h = (i_n - rho * s * yv.transpose()) * h * (i_n - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
        x = xn;
        fx = fn;
        g = gn;
    }
    r.x = x;
    r.f = fx;
    r.grad_norm = g.cwiseAbs().maxCoeff();
    r.iterations = it;
    return r;
}

/// Penalised Poisson log-likelihood mode over (β, v) with η = Xβ + Σ F_k v_k
/// and penalty ½Σ‖v_k‖²/σ²_k, found by BFGS. Returns β.
inline VectorXd penalized_mode(const MatrixXd& x, const std::vector<MatrixXd>& f, const VectorXd& sigma2,
                               const VectorXd& o, const VectorXd& e) {
    Eigen::Index q = 0;
    for (const auto& fk : f) q += fk.cols();
    const Eigen::Index p = x.cols();
    MatrixXd a(x.rows(), p + q);
    a.leftCols(p) = x;
    VectorXd pen(p + q);
    pen.head(p).setZero();
    Eigen::Index c = p;
    for (std::size_t k = 0; k < f.size(); ++k) {
        a.middleCols(c, f[k].cols()) = f[k];
        pen.segment(c, f[k].cols()).setConstant(1.0 / sigma2(static_cast<Eigen::Index>(k)));
        c += f[k].cols();
    }
    auto obj = [&](const VectorXd& th) {
        const VectorXd eta = a * th;
        return -(o.dot(eta) - (e.array() * eta.array().exp()).sum()) + 0.5 * (pen.array() * th.array().square()).sum();
    };
    auto gr = [&](const VectorXd& th) {
        const VectorXd mu = e.array() * (a * th).array().exp();
        return VectorXd(-(a.transpose() * (o - mu)) + pen.cwiseProduct(th));
    };
    VectorXd start = VectorXd::Zero(p + q);
    start.head(p) = glm_newton(x, o, e);
    return bfgs_minimize(obj, gr, start, 1e-11).x.head(p);
}

/// REML log-likelihood of y ~ N(Xβ, W⁻¹ + Σσ²_k F_kF_kᵀ) from explicit matrices
/// (up to the same additive constant as the library's).
inline double brute_reml(const MatrixXd& x, const std::vector<MatrixXd>& f, const VectorXd& w, const VectorXd& y,
                         const VectorXd& sigma2) {
    MatrixXd v = w.cwiseInverse().asDiagonal();
    for (std::size_t k = 0; k < f.size(); ++k) v += sigma2(static_cast<Eigen::Index>(k)) * f[k] * f[k].transpose();
    const MatrixXd vinv = v.inverse();
    const MatrixXd xvx = x.transpose() * vinv * x;
    const MatrixXd p = vinv - vinv * x * xvx.inverse() * x.transpose() * vinv;
    return -0.5 * (std::log(v.determinant()) + std::log(xvx.determinant()) + y.dot(p * y));
}

}  // namespace testing_support
