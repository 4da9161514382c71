#pragma once

// Synthetic spatio-temporal count data with known fixed effects, latent
// effects drawn from the intrinsic priors, and covariates correlated with the
// smoothest spatial eigenvector. Plus a replicate study over several variants.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "stconfound/error.hpp"
#include "stconfound/model.hpp"
#include "stconfound/rng.hpp"
#include "stconfound/workflow.hpp"

namespace stconfound {

struct Scenario {
    int grid_rows = 5;
    int grid_cols = 4;
    std::optional<SpatialGraph> graph;  ///< overrides the lattice when set
    int periods = 10;
    double intercept = 0.0;
    VectorXd beta_true = (VectorXd(2) << -0.25, 0.10).finished();
    double sigma2_spatial = 0.2;
    double sigma2_temporal = 0.013;
    double sigma2_interaction = 0.02;
    VectorXd confounding_rho = VectorXd::Zero(2);
    double baseline_expected = 50.0;
    std::optional<VectorXd> expected_cells;  ///< per-cell, area-fastest
    std::uint64_t seed = 1;

    SpatialGraph spatial_graph() const { return graph ? *graph : SpatialGraph::lattice(grid_rows, grid_cols); }
    int areas() const { return graph ? graph->n_areas : grid_rows * grid_cols; }

    void validate() const {
        if (!graph && (grid_rows < 1 || grid_cols < 1 || grid_rows * grid_cols < 2))
            throw ValidationError("scenario lattice needs at least two areas");
        if (periods < 1) throw ValidationError("scenario needs at least one period");
        if (confounding_rho.size() != beta_true.size())
            throw ValidationError("confounding_rho needs one entry per covariate (" + std::to_string(beta_true.size()) + ")");
        for (Eigen::Index j = 0; j < confounding_rho.size(); ++j)
            if (!(std::abs(confounding_rho(j)) <= 1.0))
                throw ValidationError("confounding_rho entry " + std::to_string(j + 1) + " is outside [-1, 1]");
        for (double s : {sigma2_spatial, sigma2_temporal, sigma2_interaction})
            if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("sigma2_true entries must be nonnegative");
        const Eigen::Index n = static_cast<Eigen::Index>(areas()) * periods;
        if (expected_cells) {
            if (expected_cells->size() != n)
                throw ValidationError("expected_cells needs S·T = " + std::to_string(n) + " entries");
            if (!(expected_cells->array() > 0.0).all()) throw ValidationError("expected_cells must be positive");
        } else if (!(baseline_expected > 0.0)) {
            throw ValidationError("baseline_expected must be positive");
        }
    }
};

/// Everything drawn for one dataset. Latent vectors are empty when the
/// corresponding block does not exist (T = 1).
struct TruthRecord {
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
    std::string generator = Philox4x32::name;
    double intercept = 0.0;
    VectorXd beta;
    VectorXd spatial;      ///< ξ, length S
    VectorXd temporal;     ///< γ, length T
    VectorXd interaction;  ///< δ, length S·T
    VectorXd linear_predictor;
    VectorXd mean;
    VectorXd eigenvector;  ///< smallest non-null spatial eigenvector, unit sample SD
};

struct GeneratedData {
    Dataset data;
    TruthRecord truth;
};

namespace detail {

enum SimStream : std::uint64_t { covariate_stream = 0, spatial_stream, temporal_stream, interaction_stream, count_stream };

inline Philox4x32 sim_engine(std::uint64_t seed, std::uint64_t replicate, SimStream s) {
    return Philox4x32(seed, replicate * 8 + s);
}

/// Intrinsic-prior draw on the range space: U_r · diag(σ/√λ) · z.
inline VectorXd draw_intrinsic(const PrecisionSpectrum& spec, double sigma2, Philox4x32& eng) {
    std::normal_distribution<double> z;
    VectorXd coef(spec.range_dim());
    for (Eigen::Index k = 0; k < coef.size(); ++k) coef(k) = z(eng) * std::sqrt(sigma2 / spec.eigvals_range(k));
    return spec.U_range * coef;
}

}  // namespace detail

inline GeneratedData generate(const Scenario& sc, const ModelStructures& st, std::uint64_t replicate = 0) {
    sc.validate();
    const int s = sc.areas(), t = sc.periods;
    if (st.spatial.dim() != s) throw ValidationError("structures do not match the scenario map");
    const Eigen::Index n = static_cast<Eigen::Index>(s) * t;
    const Eigen::Index p = sc.beta_true.size();

    TruthRecord tr;
    tr.seed = sc.seed;
    tr.replicate = replicate;
    tr.intercept = sc.intercept;
    tr.beta = sc.beta_true;

    VectorXd e = st.spatial.smallest_range_eigenvector();
    if (e(0) < 0.0) e = -e;
    e /= std::sqrt(e.squaredNorm() / std::max(1, s - 1));
    tr.eigenvector = e;

    MatrixXd x(n, p);
    {
        auto eng = detail::sim_engine(sc.seed, replicate, detail::covariate_stream);
        std::normal_distribution<double> z;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double rho = sc.confounding_rho(j);
            const double noise = std::sqrt(std::max(0.0, 1.0 - rho * rho));
            for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rho * e(i % s) + noise * z(eng);
        }
    }
    if (p > 0) x = standardize_covariates(x).first;

    {
        auto eng = detail::sim_engine(sc.seed, replicate, detail::spatial_stream);
        tr.spatial = detail::draw_intrinsic(st.spatial, sc.sigma2_spatial, eng);
    }
    if (t >= 2) {
        auto eng_t = detail::sim_engine(sc.seed, replicate, detail::temporal_stream);
        tr.temporal = detail::draw_intrinsic(*st.temporal, sc.sigma2_temporal, eng_t);
        auto eng_i = detail::sim_engine(sc.seed, replicate, detail::interaction_stream);
        tr.interaction = detail::draw_intrinsic(*st.interaction, sc.sigma2_interaction, eng_i);
    }

    VectorXd eta = VectorXd::Constant(n, sc.intercept);
    if (p > 0) eta += x * sc.beta_true;
    for (int per = 0; per < t; ++per)
        for (int a = 0; a < s; ++a) {
            const auto i = Dataset::index(a, per, s);
            eta(i) += tr.spatial(a);
            if (t >= 2) eta(i) += tr.temporal(per) + tr.interaction(i);
        }
    const VectorXd expected = sc.expected_cells ? *sc.expected_cells : VectorXd::Constant(n, sc.baseline_expected);
    tr.linear_predictor = eta;
    tr.mean = expected.array() * eta.array().exp();

    VectorXd observed(n);
    {
        auto eng = detail::sim_engine(sc.seed, replicate, detail::count_stream);
        for (Eigen::Index i = 0; i < n; ++i) {
            std::poisson_distribution<long long> pois(tr.mean(i));
            observed(i) = static_cast<double>(pois(eng));
        }
    }
    return {make_dataset(s, t, observed, expected, x), std::move(tr)};
}

inline GeneratedData generate(const Scenario& sc, std::uint64_t replicate = 0) {
    sc.validate();
    return generate(sc, ModelStructures::build(sc.spatial_graph(), sc.periods), replicate);
}

/// Per-replicate outcome for one model.
struct ReplicateFit {
    bool ok = false;
    std::string failure;
    VectorXd beta;
    VectorXd se;
    double deviance = 0.0;
};

struct CoefficientSummary {
    std::string model;
    std::string coefficient;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double empirical_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    int used = 0;
    int failed = 0;

    /// Monte Carlo standard error of the mean estimate.
    double mc_se() const { return used > 0 ? empirical_sd / std::sqrt(static_cast<double>(used)) : 0.0; }
};

struct StudyResult {
    std::vector<std::string> models;
    std::vector<CoefficientSummary> table;
    /// [replicate][model]
    std::vector<std::vector<ReplicateFit>> replicates;

    const CoefficientSummary& find(const std::string& model, const std::string& coefficient) const {
        for (const auto& r : table)
            if (r.model == model && r.coefficient == coefficient) return r;
        throw ValidationError("no study row for " + model + "/" + coefficient);
    }
};

struct StudyOptions {
    WorkflowOptions workflow;
    unsigned threads = 0;  ///< 0: hardware concurrency
};

inline std::vector<std::string> model_labels(const std::vector<ModelSpec>& models) {
    std::vector<std::string> labels;
    for (const auto& m : models) {
        std::string l = to_string(m.variant);
        const auto dup = std::count_if(labels.begin(), labels.end(), [&](const std::string& x) { return x.rfind(l, 0) == 0; });
        if (dup > 0) l += "_" + std::to_string(dup + 1);
        labels.push_back(l);
    }
    return labels;
}

/// Replicates are independent given their substreams; results are reduced
/// in replicate order, so the table does not depend on the thread count.
inline StudyResult replicate_study(const Scenario& sc, int n_reps, const std::vector<ModelSpec>& models,
                                   const StudyOptions& opts = {}) {
    if (n_reps < 1) throw ValidationError("replicate study needs at least one replicate");
    if (models.empty()) throw ValidationError("replicate study needs at least one model");
    sc.validate();
    const ModelStructures st = ModelStructures::build(sc.spatial_graph(), sc.periods);
    StudyResult res;
    res.models = model_labels(models);
    res.replicates.assign(n_reps, std::vector<ReplicateFit>(models.size()));

    auto work = [&](int r) {
        auto& row = res.replicates[r];
        try {
            const auto gen = generate(sc, st, static_cast<std::uint64_t>(r));
            auto wo = opts.workflow;
            wo.parallel = false;
            const auto fits = fit_variants(gen.data, st, models, wo);
            for (std::size_t m = 0; m < models.size(); ++m) {
                const auto& f = fits[m].fit;
                row[m].beta = f.beta;
                row[m].se = f.beta_se();
                row[m].deviance = f.deviance;
                row[m].ok = f.converged && row[m].se.allFinite();
                if (!row[m].ok) row[m].failure = "not converged after " + std::to_string(f.iterations) + " iterations";
            }
        } catch (const std::exception& ex) {
            for (auto& c : row) {
                c.ok = false;
                c.failure = ex.what();
            }
        }
    };

    unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(n_reps));
    if (threads <= 1) {
        for (int r = 0; r < n_reps; ++r) work(r);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k)
            pool.emplace_back([&] {
                for (int r = next++; r < n_reps; r = next++) work(r);
            });
        for (auto& th : pool) th.join();
    }

    const Eigen::Index p = sc.beta_true.size();
    constexpr double z975 = 1.959964;
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (Eigen::Index j = 0; j <= p; ++j) {
            CoefficientSummary cs;
            cs.model = res.models[m];
            cs.coefficient = j == 0 ? "intercept" : "x" + std::to_string(j);
            cs.truth = j == 0 ? sc.intercept : sc.beta_true(j - 1);
            double sum = 0.0, sum_se = 0.0;
            int covered = 0;
            for (const auto& row : res.replicates) {
                if (!row[m].ok) {
                    ++cs.failed;
                    continue;
                }
                ++cs.used;
                sum += row[m].beta(j);
                sum_se += row[m].se(j);
                if (std::abs(row[m].beta(j) - cs.truth) <= z975 * row[m].se(j)) ++covered;
            }
            if (cs.used > 0) {
                cs.mean_estimate = sum / cs.used;
                cs.mean_se = sum_se / cs.used;
                cs.coverage = static_cast<double>(covered) / cs.used;
                double ss = 0.0;
                for (const auto& row : res.replicates)
                    if (row[m].ok) ss += std::pow(row[m].beta(j) - cs.mean_estimate, 2);
                cs.empirical_sd = cs.used > 1 ? std::sqrt(ss / (cs.used - 1)) : 0.0;
            }
            res.table.push_back(cs);
        }
    }
    return res;
}

}  // namespace stconfound
