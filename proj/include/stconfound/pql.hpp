#pragma once

// Penalized quasi-likelihood for Poisson log-linear mixed models.
//
// Each outer iteration runs IRLS on the working model
//     O* = X_*β + Σ Z_k u_k + ε,   ε ~ N(0, W⁻¹),   u_k ~ N(0, σ²_k C_k)
// at fixed σ², then takes one safeguarded REML Fisher-scoring step for σ².
// The working covariance V = W⁻¹ + Σ σ²_k Z_k C_k Z_kᵀ is factorised densely,
// or through the Woodbury identity when the total random-effect rank is below
// half the number of observations.

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stconfound/error.hpp"
#include "stconfound/linalg.hpp"
#include "stconfound/model.hpp"

namespace stconfound {

struct VarianceComponents {
    std::map<std::string, double> sigma2;
    std::map<std::string, double> standard_errors;
    std::map<std::string, bool> at_boundary;
};

struct FitOptions {
    double tol = 1e-5;
    int max_outer = 100;
    int max_inner = 50;
    std::optional<VarianceComponents> warm_start;
    double initial_sigma2 = 0.1;
    double sigma2_floor = 1e-10;
};

struct FitResult {
    Variant variant = Variant::ST1;
    VectorXd beta;
    MatrixXd beta_cov;
    std::map<std::string, VectorXd> random_effects;      ///< ξ/γ/δ scale
    std::map<std::string, VectorXd> block_coefficients;  ///< u_k as fitted
    std::map<std::string, VectorXd> contributions;       ///< Z_k u_k, length S·T
    VarianceComponents variance_components;
    VectorXd expected;
    VectorXd fitted_mu;
    VectorXd linear_predictor;  ///< excludes the offset log(e)
    VectorXd working_weights;
    bool converged = false;
    int iterations = 0;
    std::vector<double> convergence_trace;
    double deviance = 0.0;
    double effective_df = 0.0;
    double aic = 0.0;
    double wall_time_seconds = 0.0;

    VectorXd beta_se() const { return beta_cov.diagonal().cwiseSqrt(); }
};

/// Working weights and pseudo-response at a point of the PQL iteration.
struct WorkingState {
    VectorXd weights;
    VectorXd working_response;
    VarianceComponents current;
};

/// 2·Σ[O·log(O/μ) − (O − μ)], with O = 0 cells contributing 2μ.
inline double poisson_deviance(const VectorXd& observed, const VectorXd& mu) {
    if (observed.size() != mu.size()) throw ValidationError("deviance: length mismatch");
    double dev = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (!(mu(i) > 0.0)) throw ValidationError("deviance: fitted mean must be positive");
        const double o = observed(i);
        dev += (o > 0.0 ? o * std::log(o / mu(i)) : 0.0) - (o - mu(i));
    }
    return std::max(0.0, 2.0 * dev);
}

namespace detail {

/// Per-block square-root factors F_k = Z_k·C_factor_k, computed once per fit.
struct BlockFactors {
    std::vector<MatrixXd> F;
    Eigen::Index total_rank = 0;

    explicit BlockFactors(const DesignBundle& b) {
        for (const auto& blk : b.blocks) {
            // Z = I for the full-dimension interaction block; skip the product.
            if (blk.Z.rows() == blk.Z.cols() && blk.Z.isIdentity(0.0))
                F.push_back(blk.C_factor);
            else
                F.push_back(blk.Z * blk.C_factor);
            total_rank += F.back().cols();
        }
    }
};

/// Factorisation of V for fixed weights and σ².
class WorkingCovariance {
public:
    WorkingCovariance(const BlockFactors& f, const VectorXd& w, const VectorXd& sigma2) : w_(w) {
        const Eigen::Index n = w.size();
        woodbury_ = 2 * f.total_rank < n;
        if (woodbury_) {
            scaled_.resize(n, f.total_rank);
            if (f.total_rank == 0) {
                log_det_ = -w.array().log().sum();
                return;
            }
            Eigen::Index c = 0;
            for (std::size_t k = 0; k < f.F.size(); ++k) {
                scaled_.middleCols(c, f.F[k].cols()) = std::sqrt(sigma2(static_cast<Eigen::Index>(k))) * f.F[k];
                c += f.F[k].cols();
            }
            wf_ = w.asDiagonal() * scaled_;
            MatrixXd core = MatrixXd::Identity(f.total_rank, f.total_rank) + scaled_.transpose() * wf_;
            core_.compute(core);
            if (core_.info() != Eigen::Success) throw NumericalError("working covariance: Woodbury core not positive definite");
            log_det_ = -w.array().log().sum() + 2.0 * core_.matrixL().toDenseMatrix().diagonal().array().log().sum();
        } else {
            MatrixXd v = w.cwiseInverse().asDiagonal();
            for (std::size_t k = 0; k < f.F.size(); ++k)
                v.noalias() += sigma2(static_cast<Eigen::Index>(k)) * (f.F[k] * f.F[k].transpose());
            dense_.compute(v);
            if (dense_.info() != Eigen::Success) throw NumericalError("working covariance V is not positive definite");
            log_det_ = 2.0 * dense_.matrixLLT().diagonal().array().log().sum();
        }
    }

    MatrixXd solve(const MatrixXd& x) const {
        if (woodbury_) {
            MatrixXd wx = w_.asDiagonal() * x;
            if (scaled_.cols() == 0) return wx;
            return wx - wf_ * core_.solve(wf_.transpose() * x);
        }
        return dense_.solve(x);
    }

    VectorXd inverse_diagonal() const {
        if (woodbury_) {
            VectorXd d = w_;
            if (scaled_.cols() == 0) return d;
            const MatrixXd half = core_.matrixL().solve(wf_.transpose());
            for (Eigen::Index i = 0; i < d.size(); ++i) d(i) -= half.col(i).squaredNorm();
            return d;
        }
        const Eigen::Index n = w_.size();
        const MatrixXd linv = dense_.matrixL().solve(MatrixXd::Identity(n, n));
        return linv.colwise().squaredNorm().transpose();
    }

    double log_det() const { return log_det_; }
    bool uses_woodbury() const { return woodbury_; }

private:
    VectorXd w_;
    bool woodbury_ = false;
    MatrixXd scaled_, wf_;
    Eigen::LLT<MatrixXd> core_, dense_;
    double log_det_ = 0.0;
};

/// GLS/BLUP solution of the working model.
struct WorkingSolution {
    VectorXd beta;
    MatrixXd beta_cov;
    VectorXd Py;  ///< V⁻¹(y − X_*β)
    std::vector<VectorXd> u;
    VectorXd eta;
    MatrixXd VX;  ///< V⁻¹X_*
    double yPy = 0.0;
    double log_det_xvx = 0.0;
};

inline WorkingSolution solve_working(const DesignBundle& b, const BlockFactors& f, const WorkingCovariance& v,
                                     const VectorXd& y, const VectorXd& sigma2) {
    WorkingSolution s;
    const MatrixXd& x = b.X_star;
    s.VX = v.solve(x);
    const MatrixXd a = symmetrize(x.transpose() * s.VX);
    Eigen::LLT<MatrixXd> a_llt(a);
    if (a_llt.info() != Eigen::Success) throw NumericalError("X_*ᵀV⁻¹X_* is singular");
    s.beta = a_llt.solve(s.VX.transpose() * y);
    s.beta_cov = a_llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
    s.log_det_xvx = 2.0 * a_llt.matrixLLT().diagonal().array().log().sum();
    const VectorXd r = y - x * s.beta;
    s.Py = v.solve(r);
    s.yPy = r.dot(s.Py);
    s.eta = x * s.beta;
    for (std::size_t k = 0; k < b.blocks.size(); ++k) {
        const auto& blk = b.blocks[k];
        const VectorXd u = sigma2(static_cast<Eigen::Index>(k)) * (blk.C_factor * (f.F[k].transpose() * s.Py));
        s.eta += blk.Z * u;
        s.u.push_back(u);
    }
    return s;
}

inline VectorXd sigma2_vector(const DesignBundle& b, const VarianceComponents& vc) {
    VectorXd s(static_cast<Eigen::Index>(b.blocks.size()));
    for (std::size_t k = 0; k < b.blocks.size(); ++k) {
        auto it = vc.sigma2.find(b.blocks[k].label());
        if (it == vc.sigma2.end()) throw ValidationError("no variance component for block '" + b.blocks[k].label() + "'");
        s(static_cast<Eigen::Index>(k)) = it->second;
    }
    return s;
}

inline double reml_loglik(const DesignBundle& b, const BlockFactors& f, const VectorXd& w, const VectorXd& y,
                          const VectorXd& sigma2) {
    const WorkingCovariance v(f, w, sigma2);
    const WorkingSolution s = solve_working(b, f, v, y, sigma2);
    return -0.5 * (v.log_det() + s.log_det_xvx + s.yPy);
}

struct RemlDerivatives {
    VectorXd score;
    MatrixXd info;
    VectorXd quad;   ///< yᵀPG_kPy
    VectorXd trace;  ///< tr(PG_k)
    double loglik = 0.0;
};

inline RemlDerivatives reml_derivatives(const DesignBundle& b, const BlockFactors& f, const VectorXd& w,
                                        const VectorXd& y, const VectorXd& sigma2) {
    const WorkingCovariance v(f, w, sigma2);
    const WorkingSolution s = solve_working(b, f, v, y, sigma2);
    const auto nb = static_cast<Eigen::Index>(f.F.size());
    RemlDerivatives d;
    d.loglik = -0.5 * (v.log_det() + s.log_det_xvx + s.yPy);
    d.score.resize(nb);
    d.quad.resize(nb);
    d.trace.resize(nb);
    d.info.resize(nb, nb);
    // P·F_k = V⁻¹F_k − V⁻¹X (XᵀV⁻¹X)⁻¹ XᵀV⁻¹F_k
    std::vector<MatrixXd> pf(static_cast<std::size_t>(nb));
    for (Eigen::Index k = 0; k < nb; ++k) {
        const MatrixXd& fk = f.F[static_cast<std::size_t>(k)];
        MatrixXd vf = v.solve(fk);
        pf[static_cast<std::size_t>(k)] = vf - s.VX * (s.beta_cov * (s.VX.transpose() * fk));
        d.trace(k) = (fk.array() * pf[static_cast<std::size_t>(k)].array()).sum();
        d.quad(k) = (fk.transpose() * s.Py).squaredNorm();
        d.score(k) = 0.5 * (d.quad(k) - d.trace(k));
    }
    for (Eigen::Index k = 0; k < nb; ++k)
        for (Eigen::Index l = k; l < nb; ++l) {
            const double val = 0.5 * (f.F[static_cast<std::size_t>(k)].transpose() * pf[static_cast<std::size_t>(l)]).squaredNorm();
            d.info(k, l) = d.info(l, k) = val;
        }
    return d;
}

/// One safeguarded REML update of σ². Fisher scoring when the information is
/// positive definite, otherwise a multiplicative EM-style update; either way
/// the step is halved (up to 10 times) while the REML log-likelihood drops.
inline VarianceComponents reml_step(const DesignBundle& b, const BlockFactors& f, const VectorXd& w, const VectorXd& y,
                                    const VectorXd& sigma2, double floor) {
    const RemlDerivatives d = reml_derivatives(b, f, w, y, sigma2);
    const auto nb = sigma2.size();

    // Components held at the floor whose score points outward stay fixed.
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < nb; ++k)
        if (sigma2(k) > floor * (1.0 + 1e-8) || d.score(k) > 0.0) active.push_back(k);
    const auto na = static_cast<Eigen::Index>(active.size());
    MatrixXd info_a(na, na);
    VectorXd score_a(na);
    for (Eigen::Index i = 0; i < na; ++i) {
        score_a(i) = d.score(active[i]);
        for (Eigen::Index j = 0; j < na; ++j) info_a(i, j) = d.info(active[i], active[j]);
    }

    auto positive_definite = [](const MatrixXd& m) {
        if (m.size() == 0) return false;
        const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
        return ev(0) > 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    };
    const bool fisher_ok = positive_definite(info_a);
    VectorXd delta = VectorXd::Zero(nb);
    if (fisher_ok) {
        const VectorXd delta_a = info_a.ldlt().solve(score_a);
        for (Eigen::Index i = 0; i < na; ++i) delta(active[i]) = delta_a(i);
    }

    auto candidate = [&](double frac) {
        VectorXd next = sigma2;
        if (fisher_ok) {
            next = sigma2 + frac * delta;
        } else {
            for (Eigen::Index k = 0; k < nb; ++k) {
                if (!(d.trace(k) > 0.0) || !(d.quad(k) > 0.0)) continue;
                next(k) = sigma2(k) * std::pow(d.quad(k) / d.trace(k), frac);
            }
        }
        for (Eigen::Index k = 0; k < nb; ++k)
            if (!(next(k) > floor) || !std::isfinite(next(k))) next(k) = floor;
        return next;
    };

    VectorXd next = candidate(1.0);
    double frac = 1.0;
    for (int h = 0; h < 10; ++h) {
        double ll = -std::numeric_limits<double>::infinity();
        try {
            ll = reml_loglik(b, f, w, y, next);
        } catch (const NumericalError&) {
        }
        if (ll >= d.loglik - 1e-10 * std::abs(d.loglik)) break;
        frac *= 0.5;
        next = candidate(frac);
    }

    VarianceComponents vc;
    MatrixXd cov = MatrixXd::Constant(nb, nb, std::numeric_limits<double>::quiet_NaN());
    if (positive_definite(d.info)) cov = d.info.ldlt().solve(MatrixXd::Identity(nb, nb));
    for (Eigen::Index k = 0; k < nb; ++k) {
        const std::string label = b.blocks[static_cast<std::size_t>(k)].label();
        vc.sigma2[label] = next(k);
        vc.standard_errors[label] = cov(k, k) > 0.0 ? std::sqrt(cov(k, k)) : std::numeric_limits<double>::quiet_NaN();
        vc.at_boundary[label] = next(k) <= floor;
    }
    return vc;
}

inline VectorXd mean_from(const VectorXd& expected, const VectorXd& eta) {
    return (expected.array() * eta.array().exp()).matrix();
}

inline bool mean_ok(const VectorXd& mu) {
    return mu.allFinite() && mu.maxCoeff() < 1e300 && mu.minCoeff() > 0.0;
}

}  // namespace detail

/// Result of IRLS at fixed σ².
struct InnerResult {
    VectorXd beta;
    MatrixXd beta_cov;
    std::vector<VectorXd> u;
    VectorXd eta;
    VectorXd weights;           ///< μ at eta
    VectorXd working_response;  ///< η + (O − μ)/μ at eta
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline InnerResult irls(const DesignBundle& b, const BlockFactors& f, const Dataset& data, const VectorXd& sigma2,
                        VectorXd eta, double tol, int max_inner) {
    if (eta.size() != data.size()) throw ValidationError("starting linear predictor has the wrong length");
    InnerResult r;
    VectorXd mu = mean_from(data.expected, eta);
    if (!mean_ok(mu)) throw NumericalError("starting linear predictor overflows the Poisson mean");
    for (int it = 1; it <= max_inner; ++it) {
        const VectorXd w = mu;
        const VectorXd y = eta.array() + (data.observed - mu).array() / mu.array();
        const WorkingCovariance v(f, w, sigma2);
        WorkingSolution s = solve_working(b, f, v, y, sigma2);
        VectorXd next = s.eta;
        VectorXd next_mu = mean_from(data.expected, next);
        int halvings = 0;
        while (!mean_ok(next_mu)) {
            if (++halvings > 20) {
                std::ostringstream msg;
                msg << "IRLS iteration " << it << ": Poisson mean overflow after 20 step halvings";
                throw NumericalError(msg.str());
            }
            next = 0.5 * (eta + next);
            next_mu = mean_from(data.expected, next);
        }
        const double change = (next - eta).cwiseAbs().maxCoeff() / std::max(1.0, eta.cwiseAbs().maxCoeff());
        eta = std::move(next);
        mu = std::move(next_mu);
        r.beta = std::move(s.beta);
        r.beta_cov = std::move(s.beta_cov);
        r.u = std::move(s.u);
        r.iterations = it;
        if (change <= tol / 10.0) {
            r.converged = true;
            break;
        }
    }
    r.eta = eta;
    r.weights = mu;
    r.working_response = eta.array() + (data.observed - mu).array() / mu.array();
    return r;
}

}  // namespace detail

/// IRLS on the working model at fixed, positive σ² (one entry per block, in
/// bundle order).
inline InnerResult irls_inner(const DesignBundle& b, const Dataset& data, const VectorXd& sigma2, const VectorXd& start,
                              double tol = 1e-5, int max_inner = 50) {
    if (sigma2.size() != static_cast<Eigen::Index>(b.blocks.size())) throw ValidationError("one σ² per block required");
    if ((sigma2.array() <= 0.0).any()) throw ValidationError("σ² must be positive");
    const detail::BlockFactors f(b);
    return detail::irls(b, f, data, sigma2, start, tol, max_inner);
}

/// One REML Fisher-scoring step on the working linear mixed model defined by
/// the given weights and working response.
inline VarianceComponents update_variance_components(const DesignBundle& b, const WorkingState& state,
                                                     double floor = 1e-10) {
    const detail::BlockFactors f(b);
    return detail::reml_step(b, f, state.weights, state.working_response, detail::sigma2_vector(b, state.current), floor);
}

/// REML log-likelihood of the working model (up to a constant).
inline double working_reml_loglik(const DesignBundle& b, const VectorXd& w, const VectorXd& y, const VectorXd& sigma2) {
    const detail::BlockFactors f(b);
    return detail::reml_loglik(b, f, w, y, sigma2);
}

/// Trace of the map from working response to fitted working linear predictor,
/// N − tr(W⁻¹P).
inline double working_hat_trace(const DesignBundle& b, const VectorXd& w, const VectorXd& sigma2) {
    const detail::BlockFactors f(b);
    const detail::WorkingCovariance v(f, w, sigma2);
    const MatrixXd vx = v.solve(b.X_star);
    const MatrixXd a = symmetrize(b.X_star.transpose() * vx);
    const MatrixXd a_inv = a.ldlt().solve(MatrixXd::Identity(a.rows(), a.cols()));
    const VectorXd pdiag = v.inverse_diagonal() - (vx * a_inv).cwiseProduct(vx).rowwise().sum();
    return static_cast<double>(w.size()) - (pdiag.array() / w.array()).sum();
}

/// Variance components of a previous fit relabelled for the target bundle.
inline VarianceComponents warm_start_from(const FitResult& previous, const DesignBundle& target) {
    if (!previous.converged) throw ValidationError("warm start requires a converged fit");
    VarianceComponents vc;
    for (const auto& blk : target.blocks) {
        const auto it = previous.variance_components.sigma2.find(blk.label());
        if (it == previous.variance_components.sigma2.end())
            throw ValidationError("warm start has no variance component for block '" + blk.label() + "'");
        vc.sigma2[blk.label()] = it->second;
        vc.standard_errors[blk.label()] = previous.variance_components.standard_errors.count(blk.label())
                                              ? previous.variance_components.standard_errors.at(blk.label())
                                              : std::numeric_limits<double>::quiet_NaN();
        vc.at_boundary[blk.label()] = false;
    }
    return vc;
}

/// Fits a design bundle by PQL.
inline FitResult fit(const DesignBundle& b, const Dataset& data, const FitOptions& opts = {}) {
    const auto started = std::chrono::steady_clock::now();
    if (b.size() != data.size()) throw ValidationError("design bundle and dataset sizes differ");
    if (opts.tol <= 0.0 || opts.max_outer < 1 || opts.max_inner < 1) throw ValidationError("invalid fit options");

    const detail::BlockFactors f(b);
    const auto nb = static_cast<Eigen::Index>(b.blocks.size());

    VectorXd sigma2 = VectorXd::Constant(nb, opts.initial_sigma2);
    if (opts.warm_start) sigma2 = detail::sigma2_vector(b, *opts.warm_start).cwiseMax(opts.sigma2_floor);

    // Start from the fixed-effects-only Poisson fit.
    DesignBundle glm;
    glm.variant = Variant::ST1;
    glm.X_star = b.X_star;
    const detail::BlockFactors no_blocks(glm);
    VectorXd eta0 = (data.observed.array() + 0.5).log() - data.expected.array().log();
    eta0 = b.X_star * b.X_star.colPivHouseholderQr().solve(eta0);
    InnerResult inner = detail::irls(glm, no_blocks, data, VectorXd(), eta0, opts.tol, opts.max_inner);

    FitResult res;
    res.variant = b.variant;
    VarianceComponents vc;
    for (Eigen::Index k = 0; k < nb; ++k) {
        const auto label = b.blocks[static_cast<std::size_t>(k)].label();
        vc.sigma2[label] = sigma2(k);
        vc.standard_errors[label] = std::numeric_limits<double>::quiet_NaN();
        vc.at_boundary[label] = false;
    }

    if (nb == 0) {
        res.converged = inner.converged;
        res.iterations = 1;
        res.convergence_trace.push_back(0.0);
    } else {
        VectorXd prev_beta;
        for (int outer = 1; outer <= opts.max_outer; ++outer) {
            inner = detail::irls(b, f, data, sigma2, inner.eta, opts.tol, opts.max_inner);
            vc = detail::reml_step(b, f, inner.weights, inner.working_response, sigma2, opts.sigma2_floor);
            const VectorXd next = detail::sigma2_vector(b, vc);

            double metric = std::numeric_limits<double>::infinity();
            if (prev_beta.size()) {
                metric = (inner.beta - prev_beta).cwiseAbs().maxCoeff() / std::max(prev_beta.cwiseAbs().maxCoeff(), 1e-8);
                for (Eigen::Index k = 0; k < nb; ++k)
                    metric = std::max(metric, std::abs(next(k) - sigma2(k)) / std::max(sigma2(k), 1e-8));
            }
            res.convergence_trace.push_back(metric);
            prev_beta = inner.beta;
            sigma2 = next;
            res.iterations = outer;
            if (metric <= opts.tol) {
                res.converged = true;
                break;
            }
        }
        // Final estimates at the reported σ².
        inner = detail::irls(b, f, data, sigma2, inner.eta, opts.tol, opts.max_inner);
    }

    res.beta = inner.beta;
    res.beta_cov = inner.beta_cov;
    res.variance_components = vc;
    res.expected = data.expected;
    res.linear_predictor = inner.eta;
    res.fitted_mu = detail::mean_from(data.expected, inner.eta);
    res.working_weights = inner.weights;
    for (std::size_t k = 0; k < b.blocks.size(); ++k) {
        const auto& blk = b.blocks[k];
        res.block_coefficients[blk.label()] = inner.u[k];
        res.random_effects[blk.label()] = blk.to_original * inner.u[k];
        res.contributions[blk.label()] = blk.Z * inner.u[k];
    }
    res.deviance = poisson_deviance(data.observed, res.fitted_mu);
    res.effective_df = working_hat_trace(b, res.working_weights, sigma2);
    res.aic = res.deviance + 2.0 * res.effective_df;
    res.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return res;
}

}  // namespace stconfound
