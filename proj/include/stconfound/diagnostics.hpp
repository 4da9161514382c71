#pragma once

// Model comparison (deviance, Df, AIC), covariate/eigenvector correlation
// diagnostics and multiplicative pattern decomposition of fitted risks.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stconfound/model.hpp"
#include "stconfound/pql.hpp"

namespace stconfound {

struct ComparisonRow {
    std::string label;
    double deviance = 0.0;
    double effective_df = 0.0;
    double aic = 0.0;
    double wall_time_seconds = 0.0;
};

struct ModelComparison {
    std::vector<ComparisonRow> rows;

    void add(const std::string& label, const FitResult& fit) {
        rows.push_back({label, fit.deviance, fit.effective_df, fit.deviance + 2.0 * fit.effective_df, fit.wall_time_seconds});
    }
};

/// Recomputes the working-model hat trace at the fit's weights and σ².
inline double effective_df(const FitResult& fit, const DesignBundle& bundle) {
    return working_hat_trace(bundle, fit.working_weights, detail::sigma2_vector(bundle, fit.variance_components));
}

inline double aic(double deviance, double df) { return deviance + 2.0 * df; }

/// Pearson correlations of covariate slices with the smoothest non-constant
/// eigenvectors. Undefined correlations (zero-variance slices) are empty.
struct CorrelationDiagnostic {
    /// [covariate][period] correlation with the spatial eigenvector
    std::vector<std::vector<std::optional<double>>> spatial;
    /// [covariate][area] correlation with the temporal eigenvector
    std::vector<std::vector<std::optional<double>>> temporal;
    std::vector<std::string> covariate_names;
};

inline std::optional<double> pearson(const VectorXd& a, const VectorXd& b) {
    const VectorXd ca = a.array() - a.mean();
    const VectorXd cb = b.array() - b.mean();
    const double na = ca.norm(), nb = cb.norm();
    if (na <= 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()) || nb == 0.0) return std::nullopt;
    return std::clamp(ca.dot(cb) / (na * nb), -1.0, 1.0);
}

namespace detail {
inline VectorXd nonnegative_first(VectorXd v) {
    if (v.size() && v(0) < 0.0) v = -v;
    return v;
}
}  // namespace detail

inline CorrelationDiagnostic confounding_correlations(const Dataset& data, const PrecisionSpectrum& spatial,
                                                      const std::optional<PrecisionSpectrum>& temporal) {
    const int s = data.areas, t = data.periods;
    if (spatial.dim() != s) throw ValidationError("spatial spectrum does not match the dataset");
    CorrelationDiagnostic d;
    d.covariate_names = data.covariate_names;
    const VectorXd es = detail::nonnegative_first(spatial.smallest_range_eigenvector());
    std::optional<VectorXd> et;
    if (temporal) {
        if (temporal->dim() != t) throw ValidationError("temporal spectrum does not match the dataset");
        et = detail::nonnegative_first(temporal->smallest_range_eigenvector());
    }
    for (Eigen::Index j = 0; j < data.n_covariates(); ++j) {
        const VectorXd& x = data.covariates.col(j);
        std::vector<std::optional<double>> sp, tp;
        for (int per = 0; per < t; ++per) sp.push_back(pearson(x.segment(static_cast<Eigen::Index>(per) * s, s), es));
        if (et) {
            for (int a = 0; a < s; ++a) {
                VectorXd slice(t);
                for (int per = 0; per < t; ++per) slice(per) = x(Dataset::index(a, per, s));
                tp.push_back(pearson(slice, *et));
            }
        }
        d.spatial.push_back(std::move(sp));
        d.temporal.push_back(std::move(tp));
    }
    return d;
}

/// Exponentiated block contributions to the linear predictor, all at S·T
/// resolution (area-fastest). For ST2/ST4 the spatial pattern repeats over
/// periods and the temporal pattern over areas; for ST3 restricted blocks vary
/// in both.
struct PatternDecomposition {
    int areas = 0;
    int periods = 0;
    VectorXd spatial;
    VectorXd temporal;
    VectorXd interaction;
    VectorXd risks;  ///< exp(linear predictor), so risks·expected = μ

    bool empty() const { return spatial.size() == 0 && temporal.size() == 0 && interaction.size() == 0; }
};

inline PatternDecomposition decompose_patterns(const FitResult& fit, const DesignBundle& bundle) {
    PatternDecomposition p;
    p.areas = bundle.areas;
    p.periods = bundle.periods;
    p.risks = fit.linear_predictor.array().exp();
    auto pattern = [&](BlockKind k) -> VectorXd {
        const auto it = fit.contributions.find(to_string(k));
        if (it == fit.contributions.end()) return VectorXd();
        return it->second.array().exp();
    };
    p.spatial = pattern(BlockKind::spatial);
    p.temporal = pattern(BlockKind::temporal);
    p.interaction = pattern(BlockKind::interaction);
    return p;
}

}  // namespace stconfound
