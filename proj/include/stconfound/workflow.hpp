#pragma once

// Two-stage fitting of several variants: ST1 and ST2 first, then ST3/ST4
// with projectors built from ST2's fitted means and σ² warm-started from ST2.

#include <future>
#include <optional>
#include <string>
#include <vector>

#include "stconfound/model.hpp"
#include "stconfound/pql.hpp"

namespace stconfound {

struct VariantFit {
    ModelSpec spec;
    DesignBundle bundle;
    FitResult fit;
};

struct WorkflowOptions {
    FitOptions fit;
    std::optional<VectorXd> user_weights;  ///< replaces the ST2-derived Ŵ
    bool warm_start = true;
    bool parallel = true;
};

inline VariantFit fit_variant(const ModelSpec& spec, const Dataset& data, const ModelStructures& st,
                              const FitOptions& opts, const std::optional<VectorXd>& weights = std::nullopt) {
    VariantFit vf;
    vf.spec = spec;
    vf.bundle = build_design(spec, data, st, weights);
    vf.fit = fit(vf.bundle, data, opts);
    return vf;
}

/// Fits the requested variants, returning them in request order. When ST3 or
/// ST4 takes its weights from ST2, ST2 is fitted first (even if not requested)
/// and its time is added to theirs.
inline std::vector<VariantFit> fit_variants(const Dataset& data, const ModelStructures& st,
                                            const std::vector<ModelSpec>& specs, const WorkflowOptions& opts = {}) {
    std::vector<std::optional<VariantFit>> out(specs.size());
    bool need_st2 = false;
    for (const auto& s : specs) {
        s.validate();
        if ((s.variant == Variant::ST3 || s.variant == Variant::ST4) && !opts.user_weights) need_st2 = true;
    }

    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].variant == Variant::ST1) out[i] = fit_variant(specs[i], data, st, opts.fit);

    std::optional<VariantFit> st2;
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].variant == Variant::ST2) {
            out[i] = fit_variant(specs[i], data, st, opts.fit);
            if (!st2) st2 = out[i];
        }
    if (need_st2 && !st2) {
        ModelSpec s2;
        s2.variant = Variant::ST2;
        st2 = fit_variant(s2, data, st, opts.fit);
    }

    std::vector<std::size_t> dependents;
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].variant == Variant::ST3 || specs[i].variant == Variant::ST4) dependents.push_back(i);
    if (dependents.empty()) {
        std::vector<VariantFit> res;
        for (auto& o : out) res.push_back(std::move(*o));
        return res;
    }

    std::optional<VectorXd> weights = opts.user_weights;
    double prerequisite_time = 0.0;
    FitOptions dep_opts = opts.fit;
    if (!opts.user_weights) {
        if (!st2->fit.converged)
            throw NumericalError("ST3/ST4 not fitted: the prerequisite ST2 fit did not converge in " +
                                 std::to_string(st2->fit.iterations) + " iterations");
        weights = st2->fit.fitted_mu;
        prerequisite_time = st2->fit.wall_time_seconds;
    }
    auto run = [&](std::size_t i) {
        FitOptions o = dep_opts;
        if (opts.warm_start && st2 && st2->fit.converged) {
            DesignBundle probe = build_design(specs[i], data, st, weights);
            o.warm_start = warm_start_from(st2->fit, probe);
            VariantFit vf;
            vf.spec = specs[i];
            vf.bundle = std::move(probe);
            vf.fit = fit(vf.bundle, data, o);
            return vf;
        }
        return fit_variant(specs[i], data, st, o, weights);
    };

    if (opts.parallel && dependents.size() > 1) {
        std::vector<std::future<VariantFit>> jobs;
        for (auto i : dependents) jobs.push_back(std::async(std::launch::async, run, i));
        for (std::size_t k = 0; k < dependents.size(); ++k) out[dependents[k]] = jobs[k].get();
    } else {
        for (auto i : dependents) out[i] = run(i);
    }
    for (auto i : dependents) out[i]->fit.wall_time_seconds += prerequisite_time;

    std::vector<VariantFit> res;
    for (auto& o : out) res.push_back(std::move(*o));
    return res;
}

}  // namespace stconfound
